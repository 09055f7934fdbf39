//! Batch reports over a whole event log. The CLI prints them; the golden
//! files pin their JSON form.

use std::fmt::Write as _;

use penflow_core::consensus::{CollectionAnalysis, ConsensusResult};
use penflow_core::ingest::{
    activity_table, sequence_stats, ActivityTable, Collection, Collections, SequenceStats,
};
use penflow_core::insight::{transition_profile, DisplayHint, TransitionProfile};
use penflow_core::patterns::{mine_maximal_with, representative, MiningConfig, Pattern, RankOrder};
use penflow_core::summarize::{Summarizer, Summary};
use penflow_core::{ingest::AuthorId, ingest::EventType, Error};
use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

impl From<&Error> for ErrorBody {
    fn from(e: &Error) -> Self {
        ErrorBody { code: e.code().to_string(), message: e.to_string() }
    }
}

/// Per-collection header shared by the clustering reports.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CollectionHead {
    pub key: String,
    pub authors: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

/// Analysis and chosen K for one collection, or why there is none.
struct Prepared {
    head: CollectionHead,
    analysis: Option<(CollectionAnalysis, usize)>,
}

fn prepare(c: &Collection, k: Option<usize>, alpha: f64) -> Prepared {
    let mut head = CollectionHead { key: c.key().to_string(), authors: c.len(), max_k: None, k: None, error: None };
    let analysis = match CollectionAnalysis::new(c.clone(), alpha) {
        Ok(a) => a,
        Err(e) => {
            head.error = Some((&Error::from(e)).into());
            return Prepared { head, analysis: None };
        }
    };
    head.max_k = Some(analysis.max_pattern_count());
    let k = match k.map_or_else(|| analysis.default_k(), Ok) {
        Ok(k) => k,
        Err(e) => {
            head.error = Some((&Error::from(e)).into());
            return Prepared { head, analysis: None };
        }
    };
    head.k = Some(k);
    Prepared { head, analysis: Some((analysis, k)) }
}

fn consensus_of(p: &mut Prepared) -> Option<(ConsensusResult, &CollectionAnalysis)> {
    let (analysis, k) = p.analysis.as_ref()?;
    match analysis.consensus(*k) {
        Ok(r) => Some((r, analysis)),
        Err(e) => {
            p.head.error = Some((&Error::from(e)).into());
            None
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClusterEntry {
    #[serde(flatten)]
    pub head: CollectionHead,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub consensus: Option<ConsensusResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClusterReport {
    pub alpha: f64,
    pub collections: Vec<ClusterEntry>,
}

pub fn cluster_report(collections: &Collections, k: Option<usize>, alpha: f64) -> ClusterReport {
    let entries = collections
        .iter()
        .map(|c| {
            let mut p = prepare(c, k, alpha);
            let consensus = consensus_of(&mut p).map(|(r, _)| r);
            ClusterEntry { head: p.head, consensus }
        })
        .collect();
    ClusterReport { alpha, collections: entries }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MinedCluster {
    pub index: usize,
    pub members: Vec<AuthorId>,
    pub synopsis_pattern: Vec<EventType>,
    pub representative: Option<Pattern>,
    pub pattern_count: usize,
    pub patterns: Vec<Pattern>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MineEntry {
    #[serde(flatten)]
    pub head: CollectionHead,
    pub clusters: Vec<MinedCluster>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MineReport {
    pub alpha: f64,
    pub mining: MiningConfig,
    pub rank_order: RankOrder,
    pub collections: Vec<MineEntry>,
}

#[derive(Clone, Copy, Debug)]
pub struct MineOptions {
    pub k: Option<usize>,
    pub alpha: f64,
    pub mining: MiningConfig,
    pub rank_order: RankOrder,
    /// How many patterns to list per cluster.
    pub top: usize,
}

pub fn mine_report(collections: &Collections, opts: &MineOptions) -> Result<MineReport, Error> {
    let mut out = Vec::new();
    for c in collections.iter() {
        let mut p = prepare(c, opts.k, opts.alpha);
        let mut clusters = Vec::new();
        if let Some((consensus, analysis)) = consensus_of(&mut p) {
            let coll = analysis.collection();
            for (i, cl) in consensus.clusters.iter().enumerate() {
                let seqs: Vec<Vec<EventType>> =
                    cl.members.iter().map(|&a| coll.get(a).expect("member of collection").categories()).collect();
                let mut patterns = mine_maximal_with(&seqs, &opts.mining)?;
                let rep = representative(&patterns, opts.rank_order).ok();
                let pattern_count = patterns.len();
                patterns.truncate(opts.top);
                clusters.push(MinedCluster {
                    index: i + 1,
                    members: cl.members.clone(),
                    synopsis_pattern: cl.pattern.clone(),
                    representative: rep,
                    pattern_count,
                    patterns,
                });
            }
        }
        out.push(MineEntry { head: p.head, clusters });
    }
    Ok(MineReport { alpha: opts.alpha, mining: opts.mining, rank_order: opts.rank_order, collections: out })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProfileEntry {
    pub key: String,
    pub profiles: Vec<TransitionProfile>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProfileReport {
    pub display_hint: DisplayHint,
    pub collections: Vec<ProfileEntry>,
}

pub fn profile_report(collections: &Collections) -> ProfileReport {
    ProfileReport {
        display_hint: DisplayHint::default(),
        collections: collections
            .iter()
            .map(|c| ProfileEntry {
                key: c.key().to_string(),
                profiles: c.sequences.iter().map(transition_profile).collect(),
            })
            .collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummarizedCluster {
    pub members: Vec<AuthorId>,
    pub summary: Summary,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryEntry {
    #[serde(flatten)]
    pub head: CollectionHead,
    pub clusters: Vec<SummarizedCluster>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryReport {
    pub collections: Vec<SummaryEntry>,
}

/// Summaries of every agreed cluster, numbered from 1 within each collection.
pub fn summary_report(
    collections: &Collections,
    k: Option<usize>,
    alpha: f64,
    summarizer: &Summarizer,
) -> Result<SummaryReport, Error> {
    let mut out = Vec::new();
    for c in collections.iter() {
        let mut p = prepare(c, k, alpha);
        let mut clusters = Vec::new();
        if let Some((consensus, analysis)) = consensus_of(&mut p) {
            for (i, cl) in consensus.clusters.iter().enumerate() {
                let profiles: Vec<TransitionProfile> = cl
                    .members
                    .iter()
                    .map(|&a| transition_profile(analysis.collection().get(a).expect("member of collection")))
                    .collect();
                let summary = summarizer.summarize_cluster(i as u32 + 1, &profiles)?;
                clusters.push(SummarizedCluster { members: cl.members.clone(), summary });
            }
        }
        out.push(SummaryEntry { head: p.head, clusters });
    }
    Ok(SummaryReport { collections: out })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatsEntry {
    pub key: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stats: Option<SequenceStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatsReport {
    pub activity: ActivityTable,
    pub collections: Vec<StatsEntry>,
}

pub fn stats_report(collections: &Collections) -> StatsReport {
    StatsReport {
        activity: activity_table(collections.iter()),
        collections: collections
            .iter()
            .map(|c| match sequence_stats(c) {
                Ok(s) => StatsEntry { key: c.key().to_string(), stats: Some(s), error: None },
                Err(e) => StatsEntry { key: c.key().to_string(), stats: None, error: Some((&Error::from(e)).into()) },
            })
            .collect(),
    }
}

fn pattern_str(p: &[EventType]) -> String {
    p.iter().map(|e| e.code()).collect::<Vec<_>>().join(" ")
}

fn members_str(m: &[AuthorId]) -> String {
    m.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

fn head_line(out: &mut String, h: &CollectionHead) {
    let _ = write!(out, "{} ({} authors", h.key, h.authors);
    if let Some(k) = h.k {
        let _ = write!(out, ", K={k}");
    }
    if let Some(n) = h.max_k {
        let _ = write!(out, ", N={n}");
    }
    out.push(')');
    if let Some(e) = &h.error {
        let _ = write!(out, ": {} ({})", e.message, e.code);
    }
    out.push('\n');
}

/// Plain-text rendering for terminals.
pub trait Render {
    fn render_text(&self) -> String;
}

impl Render for ClusterReport {
    fn render_text(&self) -> String {
        let mut out = String::new();
        for e in &self.collections {
            head_line(&mut out, &e.head);
            if let Some(r) = &e.consensus {
                for (i, c) in r.clusters.iter().enumerate() {
                    let _ = writeln!(out, "  cluster {}: [{}] {}", i + 1, pattern_str(&c.pattern), members_str(&c.members));
                }
                let _ = writeln!(out, "  singletons: {}", members_str(&r.singletons));
            }
        }
        out
    }
}

impl Render for MineReport {
    fn render_text(&self) -> String {
        let mut out = String::new();
        for e in &self.collections {
            head_line(&mut out, &e.head);
            for c in &e.clusters {
                let rep = c.representative.as_ref().map_or_else(|| "-".into(), |p| {
                    format!("[{}] support {}", pattern_str(&p.symbols), p.support)
                });
                let _ = writeln!(out, "  cluster {}: {} of {} patterns, representative {}", c.index, c.patterns.len(), c.pattern_count, rep);
            }
        }
        out
    }
}

impl Render for ProfileReport {
    fn render_text(&self) -> String {
        let mut out = String::new();
        for e in &self.collections {
            let _ = writeln!(out, "{}", e.key);
            for p in &e.profiles {
                let entries: Vec<String> = p
                    .entries
                    .iter()
                    .map(|t| format!("{}→{} {:.3}", t.source, t.destination, t.frequency))
                    .collect();
                let _ = writeln!(out, "  {} ({}): {}", p.author, p.total_transitions, entries.join(", "));
            }
        }
        out
    }
}

impl Render for SummaryReport {
    fn render_text(&self) -> String {
        let mut out = String::new();
        for e in &self.collections {
            head_line(&mut out, &e.head);
            for c in &e.clusters {
                let _ = writeln!(out, "  {}. {} [{}]", c.summary.cluster_id, c.summary.name, members_str(&c.members));
                let _ = writeln!(out, "     {}", c.summary.description);
            }
        }
        out
    }
}

impl Render for StatsReport {
    fn render_text(&self) -> String {
        let mut out = String::from("role  category  hours  count  duration%  count%\n");
        for c in &self.activity.cells {
            let _ = writeln!(
                out,
                "{:<4}  {:<8}  {:>5.2}  {:>5}  {:>9.1}  {:>6.1}",
                c.role.as_str(), c.category.code(), c.hours, c.count, c.duration_pct, c.count_pct
            );
        }
        for e in &self.collections {
            match (&e.stats, &e.error) {
                (Some(s), _) => {
                    let _ = writeln!(
                        out,
                        "{}: {} sequences, length {}..{}, mean {:.2}, std {:.2}",
                        e.key, s.sequences, s.min, s.max, s.mean, s.std
                    );
                }
                (None, Some(err)) => {
                    let _ = writeln!(out, "{}: {}", e.key, err.message);
                }
                (None, None) => {}
            }
        }
        out
    }
}
