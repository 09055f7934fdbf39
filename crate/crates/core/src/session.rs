//! Editable clustering state for one collection.
//!
//! A session starts from the consensus at the default `K`. Every change goes
//! through [`apply_edit`], which validates it, applies it to a copy of the
//! state, and appends it to the edit log. Replaying the log from
//! [`init_session`] reproduces the state exactly, which is also how
//! [`undo`] works.
//!
//! Manual placements win over recomputation: on `SetK`, members of manual
//! clusters and authors manually sent to the singleton area stay where they
//! are, and the new automatic clusters are formed from everyone else.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consensus::{CollectionAnalysis, ConsensusError};
use crate::ingest::{AuthorId, Collection, CollectionKey, EventType};
use crate::patterns::{mine_maximal_with, representative, MiningConfig, RankOrder};
use crate::summarize::{Summary, SummarySource};

pub const SCHEMA_VERSION: u32 = 1;

/// Pattern length bound used when mining patterns for manual clusters.
pub const DEFAULT_MANUAL_PATTERN_LENGTH: usize = 8;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum SessionError {
    #[error("unknown author {0}")]
    UnknownAuthor(AuthorId),
    #[error("unknown cluster {0}")]
    UnknownCluster(u32),
    #[error("K = {k} is outside [{min}, {max}]")]
    KOutOfRange { k: usize, min: usize, max: usize },
    #[error("cluster name must not be empty")]
    EmptyName,
    #[error("nothing to undo")]
    NothingToUndo,
    #[error("session file has schema version {found}, expected {expected}")]
    SchemaVersionMismatch { found: u64, expected: u32 },
    #[error("session file is corrupt: {0}")]
    CorruptFile(String),
    #[error("session does not belong to collection {0}")]
    CollectionMismatch(CollectionKey),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Auto,
    Manual,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: u32,
    pub members: Vec<AuthorId>,
    /// Synopsis pattern for automatic clusters; `None` for clusters created by hand.
    pub pattern: Option<Vec<EventType>>,
    pub summary: Option<Summary>,
    pub provenance: Provenance,
}

/// Where an edit puts an author.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Cluster(u32),
    Singletons,
}

/// Where an author currently is.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Location {
    Cluster(u32),
    Singleton,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EditKind {
    SetK { k: usize },
    MoveAuthor { author: AuthorId, target: Target },
    AddCluster,
    DeleteCluster { cluster: u32 },
    EditText { cluster: u32, name: String, description: String },
    /// Carries the generated summary so that replay never calls a backend.
    RegenerateSummary { cluster: u32, summary: Summary },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edit {
    #[serde(flatten)]
    pub kind: EditKind,
    /// Milliseconds since the Unix epoch, supplied by the caller.
    pub timestamp_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollectionRef {
    pub dataset: Option<String>,
    #[serde(flatten)]
    pub key: CollectionKey,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub mining: MiningConfig,
    pub rank_order: RankOrder,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            mining: MiningConfig { max_length: Some(DEFAULT_MANUAL_PATTERN_LENGTH), ..MiningConfig::default() },
            rank_order: RankOrder::SupportFirst,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub id: String,
    pub collection: CollectionRef,
    pub config: SessionConfig,
    pub alpha: f64,
    pub k: usize,
    pub max_k: usize,
    pub clusters: Vec<Cluster>,
    pub singletons: Vec<AuthorId>,
    /// Singletons placed by hand; they stay singletons across `SetK`.
    pub pinned_singletons: Vec<AuthorId>,
    /// Every author's synopsis pattern at the current `K`.
    pub synopsis_patterns: BTreeMap<AuthorId, Vec<EventType>>,
    pub next_cluster_id: u32,
    pub edit_log: Vec<Edit>,
}

impl SessionState {
    pub fn cluster(&self, id: u32) -> Option<&Cluster> {
        self.clusters.iter().find(|c| c.id == id)
    }

    fn cluster_mut(&mut self, id: u32) -> Result<&mut Cluster, SessionError> {
        self.clusters.iter_mut().find(|c| c.id == id).ok_or(SessionError::UnknownCluster(id))
    }

    pub fn location_of(&self, author: AuthorId) -> Option<Location> {
        if let Some(c) = self.clusters.iter().find(|c| c.members.contains(&author)) {
            return Some(Location::Cluster(c.id));
        }
        self.singletons.contains(&author).then_some(Location::Singleton)
    }

    /// All authors in the session, sorted.
    pub fn authors(&self) -> BTreeSet<AuthorId> {
        self.clusters.iter().flat_map(|c| c.members.iter()).chain(&self.singletons).copied().collect()
    }

    /// Pattern that stands for the author's current placement: the cluster's
    /// pattern, a mined representative for hand-made clusters, or the
    /// author's own synopsis pattern for singletons.
    pub fn effective_pattern(&self, author: AuthorId, collection: &Collection) -> Result<Vec<EventType>, SessionError> {
        match self.location_of(author).ok_or(SessionError::UnknownAuthor(author))? {
            Location::Cluster(id) => {
                let cluster = self.cluster(id).expect("location refers to a live cluster");
                match &cluster.pattern {
                    Some(p) => Ok(p.clone()),
                    None => Ok(self.mined_pattern(cluster, collection)),
                }
            }
            Location::Singleton => Ok(self.synopsis_patterns.get(&author).cloned().unwrap_or_default()),
        }
    }

    /// Representative mined pattern of a cluster's members, empty if none is frequent.
    pub fn mined_pattern(&self, cluster: &Cluster, collection: &Collection) -> Vec<EventType> {
        let seqs: Vec<Vec<EventType>> =
            cluster.members.iter().filter_map(|a| collection.get(*a)).map(|s| s.categories()).collect();
        if seqs.is_empty() {
            return Vec::new();
        }
        mine_maximal_with(&seqs, &self.config.mining)
            .ok()
            .and_then(|ps| representative(&ps, self.config.rank_order).ok())
            .map(|p| p.symbols)
            .unwrap_or_default()
    }

    /// Every author appears exactly once, and the set equals `expected`.
    pub fn check_membership(&self, expected: &BTreeSet<AuthorId>) -> bool {
        let total = self.clusters.iter().map(|c| c.members.len()).sum::<usize>() + self.singletons.len();
        total == expected.len() && &self.authors() == expected
    }
}

pub fn init_session(id: &str, dataset: Option<String>, analysis: &CollectionAnalysis) -> Result<SessionState, SessionError> {
    init_session_with(id, dataset, analysis, SessionConfig::default())
}

pub fn init_session_with(
    id: &str,
    dataset: Option<String>,
    analysis: &CollectionAnalysis,
    config: SessionConfig,
) -> Result<SessionState, SessionError> {
    let k = analysis.default_k()?;
    let mut state = SessionState {
        id: id.to_string(),
        collection: CollectionRef { dataset, key: analysis.collection().key() },
        config,
        alpha: analysis.synopsis().alpha(),
        k,
        max_k: analysis.max_pattern_count(),
        clusters: Vec::new(),
        singletons: Vec::new(),
        pinned_singletons: Vec::new(),
        synopsis_patterns: BTreeMap::new(),
        next_cluster_id: 1,
        edit_log: Vec::new(),
    };
    recluster(&mut state, analysis, k)?;
    Ok(state)
}

/// Validate and apply one edit, returning the new state with the edit logged.
pub fn apply_edit(state: &SessionState, analysis: &CollectionAnalysis, edit: Edit) -> Result<SessionState, SessionError> {
    if analysis.collection().key() != state.collection.key {
        return Err(SessionError::CollectionMismatch(analysis.collection().key()));
    }
    let mut next = state.clone();
    match &edit.kind {
        EditKind::SetK { k } => recluster(&mut next, analysis, *k)?,
        EditKind::MoveAuthor { author, target } => move_author_in(&mut next, *author, *target)?,
        EditKind::AddCluster => {
            let id = next.next_cluster_id;
            next.next_cluster_id += 1;
            next.clusters.push(Cluster { id, members: Vec::new(), pattern: None, summary: None, provenance: Provenance::Manual });
        }
        EditKind::DeleteCluster { cluster } => {
            let pos = next.clusters.iter().position(|c| c.id == *cluster).ok_or(SessionError::UnknownCluster(*cluster))?;
            let removed = next.clusters.remove(pos);
            for a in removed.members {
                insert_sorted(&mut next.singletons, a);
                insert_sorted(&mut next.pinned_singletons, a);
            }
        }
        EditKind::EditText { cluster, name, description } => {
            if name.trim().is_empty() {
                return Err(SessionError::EmptyName);
            }
            let c = next.cluster_mut(*cluster)?;
            c.summary = Some(Summary {
                cluster_id: *cluster,
                name: name.clone(),
                description: description.clone(),
                source: SummarySource::Manual,
                model_id: c.summary.as_ref().and_then(|s| s.model_id.clone()),
            });
        }
        EditKind::RegenerateSummary { cluster, summary } => {
            let c = next.cluster_mut(*cluster)?;
            c.summary = Some(Summary { cluster_id: *cluster, ..summary.clone() });
        }
    }
    next.edit_log.push(edit);
    Ok(next)
}

fn insert_sorted(v: &mut Vec<AuthorId>, a: AuthorId) {
    if let Err(pos) = v.binary_search(&a) {
        v.insert(pos, a);
    }
}

fn remove_sorted(v: &mut Vec<AuthorId>, a: AuthorId) -> bool {
    match v.binary_search(&a) {
        Ok(pos) => {
            v.remove(pos);
            true
        }
        Err(_) => false,
    }
}

fn move_author_in(state: &mut SessionState, author: AuthorId, target: Target) -> Result<(), SessionError> {
    let from = state.location_of(author).ok_or(SessionError::UnknownAuthor(author))?;
    if let Target::Cluster(id) = target {
        state.cluster(id).ok_or(SessionError::UnknownCluster(id))?;
    }
    let same = matches!((from, target), (Location::Singleton, Target::Singletons))
        || matches!((from, target), (Location::Cluster(a), Target::Cluster(b)) if a == b);
    if same {
        return Ok(());
    }
    match from {
        Location::Singleton => {
            remove_sorted(&mut state.singletons, author);
            remove_sorted(&mut state.pinned_singletons, author);
        }
        Location::Cluster(id) => {
            let c = state.cluster_mut(id)?;
            remove_sorted(&mut c.members, author);
            if c.members.is_empty() {
                state.clusters.retain(|c| c.id != id);
            }
        }
    }
    match target {
        Target::Singletons => {
            insert_sorted(&mut state.singletons, author);
            insert_sorted(&mut state.pinned_singletons, author);
        }
        Target::Cluster(id) => {
            let c = state.cluster_mut(id)?;
            insert_sorted(&mut c.members, author);
            c.provenance = Provenance::Manual;
        }
    }
    Ok(())
}

/// Replace automatic clusters with the consensus at `k`, keeping manual placements.
fn recluster(state: &mut SessionState, analysis: &CollectionAnalysis, k: usize) -> Result<(), SessionError> {
    let max = analysis.max_pattern_count();
    if k < 2 || k > max {
        return Err(SessionError::KOutOfRange { k, min: 2, max });
    }
    let consensus = analysis.consensus(k)?;
    let synopsis = analysis.synopsis().at_k(k).map_err(ConsensusError::from)?;

    state.clusters.retain(|c| c.provenance == Provenance::Manual);
    let pinned: BTreeSet<AuthorId> = state
        .clusters
        .iter()
        .flat_map(|c| c.members.iter())
        .chain(&state.pinned_singletons)
        .copied()
        .collect();
    for agreed in consensus.clusters {
        let members: Vec<AuthorId> = agreed.members.into_iter().filter(|a| !pinned.contains(a)).collect();
        if members.is_empty() {
            continue;
        }
        let id = state.next_cluster_id;
        state.next_cluster_id += 1;
        state.clusters.push(Cluster { id, members, pattern: Some(agreed.pattern), summary: None, provenance: Provenance::Auto });
    }
    let placed: BTreeSet<AuthorId> = state.clusters.iter().flat_map(|c| c.members.iter()).copied().collect();
    state.singletons = analysis.collection().authors().into_iter().filter(|a| !placed.contains(a)).collect();
    state.synopsis_patterns = synopsis
        .clusters
        .iter()
        .flat_map(|c| c.members.iter().map(|a| (*a, c.pattern.clone())))
        .collect();
    state.k = k;
    state.max_k = max;
    Ok(())
}

pub fn set_k(state: &SessionState, analysis: &CollectionAnalysis, k: usize, timestamp_ms: u64) -> Result<SessionState, SessionError> {
    apply_edit(state, analysis, Edit { kind: EditKind::SetK { k }, timestamp_ms })
}

pub fn move_author(
    state: &SessionState,
    analysis: &CollectionAnalysis,
    author: AuthorId,
    target: Target,
    timestamp_ms: u64,
) -> Result<SessionState, SessionError> {
    apply_edit(state, analysis, Edit { kind: EditKind::MoveAuthor { author, target }, timestamp_ms })
}

pub fn add_cluster(state: &SessionState, analysis: &CollectionAnalysis, timestamp_ms: u64) -> Result<SessionState, SessionError> {
    apply_edit(state, analysis, Edit { kind: EditKind::AddCluster, timestamp_ms })
}

pub fn delete_cluster(state: &SessionState, analysis: &CollectionAnalysis, cluster: u32, timestamp_ms: u64) -> Result<SessionState, SessionError> {
    apply_edit(state, analysis, Edit { kind: EditKind::DeleteCluster { cluster }, timestamp_ms })
}

pub fn edit_text(
    state: &SessionState,
    analysis: &CollectionAnalysis,
    cluster: u32,
    name: &str,
    description: &str,
    timestamp_ms: u64,
) -> Result<SessionState, SessionError> {
    let kind = EditKind::EditText { cluster, name: name.to_string(), description: description.to_string() };
    apply_edit(state, analysis, Edit { kind, timestamp_ms })
}

/// Rebuild a state from scratch by replaying `edits` on a fresh session.
pub fn replay(
    id: &str,
    dataset: Option<String>,
    analysis: &CollectionAnalysis,
    config: SessionConfig,
    edits: &[Edit],
) -> Result<SessionState, SessionError> {
    let mut state = init_session_with(id, dataset, analysis, config)?;
    for edit in edits {
        state = apply_edit(&state, analysis, edit.clone())?;
    }
    Ok(state)
}

/// Replay a state's own log.
pub fn replay_log(state: &SessionState, analysis: &CollectionAnalysis) -> Result<SessionState, SessionError> {
    replay(&state.id, state.collection.dataset.clone(), analysis, state.config.clone(), &state.edit_log)
}

/// The state as it was before the last edit.
pub fn undo(state: &SessionState, analysis: &CollectionAnalysis) -> Result<SessionState, SessionError> {
    let (_, earlier) = state.edit_log.split_last().ok_or(SessionError::NothingToUndo)?;
    replay(&state.id, state.collection.dataset.clone(), analysis, state.config.clone(), earlier)
}

#[derive(Serialize)]
struct SessionFileOut<'a> {
    schema_version: u32,
    session: &'a SessionState,
}

#[derive(Deserialize)]
struct SessionFileIn {
    session: SessionState,
}

pub fn save_session(state: &SessionState) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(&SessionFileOut { schema_version: SCHEMA_VERSION, session: state })
        .expect("session state serializes");
    bytes.push(b'\n');
    bytes
}

pub fn load_session(bytes: &[u8]) -> Result<SessionState, SessionError> {
    let value: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| SessionError::CorruptFile(e.to_string()))?;
    let version = value
        .get("schema_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| SessionError::CorruptFile("missing schema_version".into()))?;
    if version != u64::from(SCHEMA_VERSION) {
        return Err(SessionError::SchemaVersionMismatch { found: version, expected: SCHEMA_VERSION });
    }
    let file: SessionFileIn = serde_json::from_value(value).map_err(|e| SessionError::CorruptFile(e.to_string()))?;
    Ok(file.session)
}
