//! Cluster names and descriptions.
//!
//! A prompt is built from the members' transition profiles and sent to a
//! pluggable [`GenerationBackend`]. When no backend is configured, or it fails,
//! a deterministic template names the cluster after its dominant transition.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::EventType;
use crate::insight::TransitionProfile;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
pub const MAX_NAME_CHARS: usize = 60;

const INSTRUCTIONS: &str = "The figure contains several event sequences, each showing an author's writing-related \
behaviors. There are six types of events: Active-Search, Wordsmith-Crosslingual, Wordsmith-English, Note-Taking, \
Passive-Search, and Writing. Each colored node is an event type, and you can find the event type in the colored \
legend. The arc thickness is the transition frequency of two events. Please name this cluster and provide a brief \
description.";

const DATA_INTRO: &str = "The arcs are given below as transition data, one block per author. Each entry contains the \
source event, the destination event, and the normalized frequency. Answer with the cluster name on the first line \
and the description on the following lines.";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SummarySource {
    Llm,
    Fallback,
    Manual,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub cluster_id: u32,
    pub name: String,
    pub description: String,
    pub source: SummarySource,
    pub model_id: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum SummarizeError {
    #[error("cluster has no members")]
    EmptyCluster,
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum BackendError {
    #[error("backend timed out after {0:?}")]
    Timeout(Duration),
    #[error("backend request failed: {0}")]
    Request(String),
}

/// A text-generation service: plain-text prompt in, plain-text completion out.
pub trait GenerationBackend: Send + Sync {
    fn model_id(&self) -> &str;
    fn generate(&self, prompt: &str, timeout: Duration) -> Result<String, BackendError>;
}

/// Replays canned completions. Unknown prompts get `default` or an error.
#[derive(Clone, Debug, Default)]
pub struct RecordedBackend {
    pub model_id: String,
    pub responses: BTreeMap<String, String>,
    pub default: Option<Result<String, BackendError>>,
}

impl RecordedBackend {
    pub fn always(model_id: &str, response: &str) -> Self {
        RecordedBackend { model_id: model_id.into(), responses: BTreeMap::new(), default: Some(Ok(response.into())) }
    }

    pub fn failing(model_id: &str, error: BackendError) -> Self {
        RecordedBackend { model_id: model_id.into(), responses: BTreeMap::new(), default: Some(Err(error)) }
    }
}

impl GenerationBackend for RecordedBackend {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn generate(&self, prompt: &str, _timeout: Duration) -> Result<String, BackendError> {
        match (self.responses.get(prompt), &self.default) {
            (Some(r), _) => Ok(r.clone()),
            (None, Some(d)) => d.clone(),
            (None, None) => Err(BackendError::Request("no recorded response for prompt".into())),
        }
    }
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

#[derive(Serialize)]
struct PromptEntry {
    source: &'static str,
    destination: &'static str,
    frequency: f64,
}

/// Prompt text for one cluster; byte-stable for identical input.
///
/// After the instructions, each member gets a block listing every transition
/// as `source: A, destination: B, frequency: f` followed by the same entries
/// as a JSON array. Frequencies are rounded to three decimals.
pub fn build_prompt(profiles: &[TransitionProfile]) -> Result<String, SummarizeError> {
    if profiles.is_empty() {
        return Err(SummarizeError::EmptyCluster);
    }
    let mut out = String::new();
    out.push_str(INSTRUCTIONS);
    out.push_str("\n\n");
    out.push_str(DATA_INTRO);
    out.push('\n');
    for p in profiles {
        let _ = write!(out, "\nAuthor {} ({} transitions):\n", p.author, p.total_transitions);
        let mut json = Vec::with_capacity(p.entries.len());
        for e in &p.entries {
            let frequency = round3(e.frequency);
            let _ = writeln!(
                out,
                "source: {}, destination: {}, frequency: {}",
                e.source.label(),
                e.destination.label(),
                frequency
            );
            json.push(PromptEntry { source: e.source.label(), destination: e.destination.label(), frequency });
        }
        out.push_str(&serde_json::to_string(&json).expect("entries serialize"));
        out.push('\n');
    }
    Ok(out)
}

/// Appends prompt/response pairs as JSON lines.
#[derive(Debug)]
pub struct AuditLog {
    path: PathBuf,
    lock: Mutex<()>,
}

#[derive(Serialize)]
struct AuditRecord<'a> {
    timestamp_ms: u128,
    model_id: &'a str,
    prompt: &'a str,
    response: Option<&'a str>,
    error: Option<String>,
}

impl AuditLog {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        AuditLog { path: path.into(), lock: Mutex::new(()) }
    }

    fn record(&self, model_id: &str, prompt: &str, outcome: &Result<String, BackendError>) {
        let record = AuditRecord {
            timestamp_ms: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0),
            model_id,
            prompt,
            response: outcome.as_ref().ok().map(String::as_str),
            error: outcome.as_ref().err().map(ToString::to_string),
        };
        let _guard = self.lock.lock().unwrap_or_else(|e| e.into_inner());
        let line = serde_json::to_string(&record).expect("audit record serializes");
        let written = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .and_then(|mut f| writeln!(f, "{line}"));
        if let Err(e) = written {
            log::warn!("cannot write audit log {}: {e}", self.path.display());
        }
    }
}

/// Produces summaries, preferring the backend and falling back to the template.
pub struct Summarizer {
    backend: Option<Box<dyn GenerationBackend>>,
    timeout: Duration,
    audit: Option<AuditLog>,
}

impl Default for Summarizer {
    fn default() -> Self {
        Summarizer::offline()
    }
}

impl Summarizer {
    pub fn offline() -> Self {
        Summarizer { backend: None, timeout: DEFAULT_TIMEOUT, audit: None }
    }

    pub fn with_backend(backend: Box<dyn GenerationBackend>) -> Self {
        Summarizer { backend: Some(backend), timeout: DEFAULT_TIMEOUT, audit: None }
    }

    pub fn timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn audit(mut self, log: AuditLog) -> Self {
        self.audit = Some(log);
        self
    }

    pub fn has_backend(&self) -> bool {
        self.backend.is_some()
    }

    pub fn summarize_cluster(&self, cluster_id: u32, profiles: &[TransitionProfile]) -> Result<Summary, SummarizeError> {
        let prompt = build_prompt(profiles)?;
        if let Some(backend) = &self.backend {
            let outcome = backend.generate(&prompt, self.timeout);
            if let Some(audit) = &self.audit {
                audit.record(backend.model_id(), &prompt, &outcome);
            }
            match outcome.map(|text| parse_completion(&text)) {
                Ok(Some((name, description))) => {
                    return Ok(Summary {
                        cluster_id,
                        name,
                        description,
                        source: SummarySource::Llm,
                        model_id: Some(backend.model_id().to_string()),
                    })
                }
                Ok(None) => log::warn!("cluster {cluster_id}: backend returned no usable name, using fallback"),
                Err(e) => log::warn!("cluster {cluster_id}: {e}, using fallback"),
            }
        }
        Ok(fallback_summary(cluster_id, profiles))
    }
}

/// First non-empty line is the name (at most 60 characters); the rest is the description.
pub fn parse_completion(text: &str) -> Option<(String, String)> {
    let mut lines = text.lines().skip_while(|l| l.trim().is_empty());
    let name: String = lines.next()?.trim().chars().take(MAX_NAME_CHARS).collect();
    let name = name.trim_end().to_string();
    if name.is_empty() {
        return None;
    }
    let description = lines.collect::<Vec<_>>().join("\n").trim().to_string();
    Some((name, description))
}

/// Member profiles averaged with equal weight per member. Members without
/// transitions are left out of the average.
pub fn aggregate_transitions(profiles: &[TransitionProfile]) -> Vec<((EventType, EventType), f64)> {
    let active: Vec<&TransitionProfile> = profiles.iter().filter(|p| p.total_transitions > 0).collect();
    let mut sums: BTreeMap<(EventType, EventType), f64> = BTreeMap::new();
    for p in &active {
        for e in &p.entries {
            *sums.entry((e.source, e.destination)).or_default() += e.frequency;
        }
    }
    let n = active.len() as f64;
    sums.into_iter().map(|(k, v)| (k, v / n)).collect()
}

/// Template summary: named after the dominant averaged transition.
pub fn fallback_summary(cluster_id: u32, profiles: &[TransitionProfile]) -> Summary {
    let mut ranked = aggregate_transitions(profiles);
    // Highest frequency first; canonical (source, destination) order on ties.
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let (name, description) = match ranked.first() {
        None => (
            "Single-event writers".to_string(),
            format!("{} member(s) without any transition between events.", profiles.len()),
        ),
        Some(((src, dst), _)) => {
            let top: Vec<String> = ranked
                .iter()
                .take(3)
                .map(|((s, d), f)| format!("{s}→{d} ({:.3})", f))
                .collect();
            (
                format!("{src}→{dst}-driven writers"),
                format!(
                    "Most frequent transitions averaged over {} member(s): {}.",
                    profiles.len(),
                    top.join(", ")
                ),
            )
        }
    };
    Summary { cluster_id, name, description, source: SummarySource::Fallback, model_id: None }
}
