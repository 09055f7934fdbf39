//! Derived views: transition profiles, similar-author recommendations,
//! two-method scatter coordinates, and the crossing-reduced comparison layout.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::distance::{levenshtein, normalized_distance};
use crate::ingest::{AuthorId, BehaviorSequence, Collection, EventType, StageKind};
use crate::session::{Location, SessionError, SessionState};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionEntry {
    pub source: EventType,
    pub destination: EventType,
    pub frequency: f64,
}

/// First-order transition frequencies of one sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionProfile {
    pub author: AuthorId,
    pub stage: StageKind,
    /// Sorted by `(source, destination)`; frequencies sum to 1 when non-empty.
    pub entries: Vec<TransitionEntry>,
    pub total_transitions: usize,
}

impl TransitionProfile {
    pub fn frequency(&self, source: EventType, destination: EventType) -> f64 {
        self.entries
            .iter()
            .find(|e| e.source == source && e.destination == destination)
            .map_or(0.0, |e| e.frequency)
    }
}

/// Rendering hint for arc diagrams. Profiles always keep every entry; views
/// hide arcs leaving the listed sources.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisplayHint {
    pub hide_outgoing_from: Vec<EventType>,
}

impl Default for DisplayHint {
    fn default() -> Self {
        DisplayHint { hide_outgoing_from: vec![EventType::Writing] }
    }
}

pub fn transition_profile(s: &BehaviorSequence) -> TransitionProfile {
    let mut counts: BTreeMap<(EventType, EventType), usize> = BTreeMap::new();
    for pair in s.events.windows(2) {
        *counts.entry((pair[0].category, pair[1].category)).or_default() += 1;
    }
    let total = s.events.len().saturating_sub(1);
    TransitionProfile {
        author: s.author,
        stage: s.stage,
        entries: counts
            .into_iter()
            .map(|((source, destination), n)| TransitionEntry { source, destination, frequency: n as f64 / total as f64 })
            .collect(),
        total_transitions: total,
    }
}

/// How recommendation and scatter distances are scaled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceScale {
    #[default]
    Raw,
    Normalized,
}

impl DistanceScale {
    fn apply(self, a: &[EventType], b: &[EventType]) -> f64 {
        match self {
            DistanceScale::Raw => levenshtein(a, b) as f64,
            DistanceScale::Normalized => normalized_distance(a, b),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub candidate: AuthorId,
    /// `sequence_term + pattern_term`; lower is more similar.
    pub score: f64,
    pub sequence_term: f64,
    pub pattern_term: f64,
}

pub const DEFAULT_RECOMMENDATIONS: usize = 5;

/// Authors outside the query's cluster, closest first.
///
/// The score adds the edit distance between the two sequences and the edit
/// distance between the patterns of their clusters. Ties go to author order.
pub fn recommend(
    query: AuthorId,
    state: &SessionState,
    collection: &Collection,
    k: usize,
    scale: DistanceScale,
) -> Result<Vec<Recommendation>, SessionError> {
    let query_seq = collection.get(query).ok_or(SessionError::UnknownAuthor(query))?.categories();
    let query_loc = state.location_of(query).ok_or(SessionError::UnknownAuthor(query))?;
    let query_pattern = state.effective_pattern(query, collection)?;

    let mut out = Vec::new();
    for s in &collection.sequences {
        if s.author == query {
            continue;
        }
        if let (Location::Cluster(a), Some(Location::Cluster(b))) = (query_loc, state.location_of(s.author)) {
            if a == b {
                continue;
            }
        }
        let sequence_term = scale.apply(&query_seq, &s.categories());
        let pattern_term = scale.apply(&query_pattern, &state.effective_pattern(s.author, collection)?);
        out.push(Recommendation { candidate: s.author, score: sequence_term + pattern_term, sequence_term, pattern_term });
    }
    out.sort_by(|a, b| a.score.total_cmp(&b.score).then(a.candidate.cmp(&b.candidate)));
    out.truncate(k);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub other: AuthorId,
    /// Distance between cluster patterns (0 within a cluster).
    pub d1: f64,
    /// Normalized distance between the sequences.
    pub d2: f64,
}

/// One point per other author, with the query at the origin.
pub fn scatter_coords(
    query: AuthorId,
    state: &SessionState,
    collection: &Collection,
    pattern_scale: DistanceScale,
) -> Result<Vec<ScatterPoint>, SessionError> {
    let query_seq = collection.get(query).ok_or(SessionError::UnknownAuthor(query))?.categories();
    let query_pattern = state.effective_pattern(query, collection)?;
    collection
        .sequences
        .iter()
        .filter(|s| s.author != query)
        .map(|s| {
            Ok(ScatterPoint {
                other: s.author,
                d1: pattern_scale.apply(&query_pattern, &state.effective_pattern(s.author, collection)?),
                d2: normalized_distance(&query_seq, &s.categories()),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arrow {
    pub team: u32,
    pub left: AuthorId,
    pub right: AuthorId,
    pub left_index: usize,
    pub right_index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonLayout {
    pub left: Vec<AuthorId>,
    pub right: Vec<AuthorId>,
    pub arrows: Vec<Arrow>,
    pub initial_crossings: usize,
    pub crossings: usize,
}

const MAX_ROUNDS: usize = 10;

/// Order two collections, each given as cluster blocks, to reduce crossings
/// between arrows joining authors of the same team.
///
/// Blocks stay contiguous. Each half-round fixes one side and sorts the other
/// side's blocks, and members within blocks, by the mean position of their
/// partners. The best layout seen is kept, so crossings never increase.
pub fn comparison_layout(left: &[Vec<AuthorId>], right: &[Vec<AuthorId>]) -> ComparisonLayout {
    let mut l: Vec<Vec<AuthorId>> = left.to_vec();
    let mut r: Vec<Vec<AuthorId>> = right.to_vec();
    let initial = crossings(&flatten(&l), &flatten(&r));
    let mut best = (initial, l.clone(), r.clone());

    for _ in 0..MAX_ROUNDS {
        if best.0 == 0 {
            break;
        }
        let before = best.0;
        r = barycenter(&r, &flatten(&l));
        let c = crossings(&flatten(&l), &flatten(&r));
        if c < best.0 {
            best = (c, l.clone(), r.clone());
        }
        l = barycenter(&l, &flatten(&r));
        let c = crossings(&flatten(&l), &flatten(&r));
        if c < best.0 {
            best = (c, l.clone(), r.clone());
        }
        if best.0 >= before {
            break;
        }
    }

    let (count, l, r) = best;
    let (left, right) = (flatten(&l), flatten(&r));
    let arrows = arrows(&left, &right);
    ComparisonLayout { left, right, arrows, initial_crossings: initial, crossings: count }
}

fn flatten(blocks: &[Vec<AuthorId>]) -> Vec<AuthorId> {
    blocks.iter().flatten().copied().collect()
}

fn arrows(left: &[AuthorId], right: &[AuthorId]) -> Vec<Arrow> {
    let right_pos: BTreeMap<u32, usize> = right.iter().enumerate().map(|(i, a)| (a.team, i)).collect();
    left.iter()
        .enumerate()
        .filter_map(|(li, a)| {
            right_pos.get(&a.team).map(|&ri| Arrow { team: a.team, left: *a, right: right[ri], left_index: li, right_index: ri })
        })
        .collect()
}

/// Number of arrow pairs that cross.
pub fn crossings(left: &[AuthorId], right: &[AuthorId]) -> usize {
    let arrows = arrows(left, right);
    let mut count = 0;
    for (i, x) in arrows.iter().enumerate() {
        for y in &arrows[i + 1..] {
            if (x.left_index < y.left_index) != (x.right_index < y.right_index) {
                count += 1;
            }
        }
    }
    count
}

fn barycenter(blocks: &[Vec<AuthorId>], fixed: &[AuthorId]) -> Vec<Vec<AuthorId>> {
    let partner: BTreeMap<u32, usize> = fixed.iter().enumerate().map(|(i, a)| (a.team, i)).collect();
    let mut position = 0usize;
    let mut keyed: Vec<(f64, Vec<AuthorId>)> = blocks
        .iter()
        .map(|block| {
            let mut members: Vec<(f64, AuthorId)> = block
                .iter()
                .map(|a| {
                    let key = partner.get(&a.team).map_or(position as f64, |&p| p as f64);
                    position += 1;
                    (key, *a)
                })
                .collect();
            members.sort_by(|x, y| x.0.total_cmp(&y.0));
            let mean = if members.is_empty() { 0.0 } else { members.iter().map(|m| m.0).sum::<f64>() / members.len() as f64 };
            (mean, members.into_iter().map(|m| m.1).collect())
        })
        .collect();
    keyed.sort_by(|x, y| x.0.total_cmp(&y.0));
    keyed.into_iter().map(|(_, b)| b).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::EventType::*;
    use crate::ingest::{Event, Role};

    fn seq(cats: &[EventType]) -> BehaviorSequence {
        BehaviorSequence {
            author: AuthorId::new(1, Role::NonNative),
            stage: StageKind::Collaborative,
            events: cats
                .iter()
                .map(|&category| Event { category, activity_label: String::new(), turn: 2, start_s: 0.0, end_s: 1.0 })
                .collect(),
        }
    }

    #[test]
    fn hand_counted_profile() {
        let p = transition_profile(&seq(&[WordsmithCrosslingual, Writing, WordsmithCrosslingual, Writing, ActiveSearch]));
        assert_eq!(p.total_transitions, 4);
        assert_eq!(
            p.entries,
            vec![
                TransitionEntry { source: Writing, destination: WordsmithCrosslingual, frequency: 0.25 },
                TransitionEntry { source: Writing, destination: ActiveSearch, frequency: 0.25 },
                TransitionEntry { source: WordsmithCrosslingual, destination: Writing, frequency: 0.5 },
            ]
        );
    }

    #[test]
    fn self_transitions_count() {
        let p = transition_profile(&seq(&[Writing, Writing, Writing]));
        assert_eq!(p.frequency(Writing, Writing), 1.0);
        assert_eq!(p.total_transitions, 2);
    }

    #[test]
    fn short_sequences_have_empty_profiles() {
        let p = transition_profile(&seq(&[Writing]));
        assert!(p.entries.is_empty());
        assert_eq!(p.total_transitions, 0);
        assert_eq!(transition_profile(&seq(&[])).total_transitions, 0);
    }

    fn ns(t: u32) -> AuthorId {
        AuthorId::new(t, Role::Native)
    }
    fn nns(t: u32) -> AuthorId {
        AuthorId::new(t, Role::NonNative)
    }

    #[test]
    fn aligned_orders_stay_put() {
        let left = vec![vec![ns(1), ns(2)], vec![ns(3)]];
        let right = vec![vec![nns(1), nns(2)], vec![nns(3)]];
        let layout = comparison_layout(&left, &right);
        assert_eq!(layout.crossings, 0);
        assert_eq!(layout.left, vec![ns(1), ns(2), ns(3)]);
        assert_eq!(layout.right, vec![nns(1), nns(2), nns(3)]);
        assert_eq!(layout.arrows.len(), 3);
    }

    #[test]
    fn one_swap_is_removed() {
        let left = vec![vec![ns(1), ns(2)], vec![ns(3), ns(4)]];
        let right = vec![vec![nns(2), nns(1)], vec![nns(3), nns(4)]];
        assert_eq!(crossings(&flatten(&left), &flatten(&right)), 1);
        let layout = comparison_layout(&left, &right);
        assert_eq!(layout.initial_crossings, 1);
        assert_eq!(layout.crossings, 0);
    }

    #[test]
    fn blocks_can_swap_but_stay_contiguous() {
        let left = vec![vec![ns(1), ns(2)], vec![ns(3)]];
        let right = vec![vec![nns(3)], vec![nns(1), nns(2)]];
        let layout = comparison_layout(&left, &right);
        assert_eq!(layout.crossings, 0);
        assert_eq!(layout.right, vec![nns(1), nns(2), nns(3)]);
    }

    #[test]
    fn unmatched_teams_get_no_arrow() {
        let layout = comparison_layout(&[vec![ns(1), ns(9)]], &[vec![nns(1)]]);
        assert_eq!(layout.arrows.len(), 1);
        assert_eq!(layout.arrows[0].team, 1);
        assert!(layout.left.contains(&ns(9)));
    }
}
