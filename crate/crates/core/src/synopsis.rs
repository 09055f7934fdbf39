//! Joint clustering and pattern extraction (Method I).
//!
//! Every cluster carries one pattern. The objective is
//!
//! ```text
//! total_cost = alpha * Σ |pattern|  +  Σ_seq levenshtein(seq, pattern of its cluster)
//! ```
//!
//! so `alpha` prices pattern length against information loss. The search is
//! greedy agglomeration:
//!
//! 1. Every sequence starts as its own cluster with itself as pattern (zero loss).
//! 2. Identical sequences are merged first, in author order. Each such merge
//!    is free of loss and never raises the cost.
//! 3. Then, repeatedly, the pair of clusters whose merge raises the cost the
//!    least is merged. A candidate merge is scored with the medoid of the
//!    union as its pattern; the chosen merge then has its pattern trimmed,
//!    dropping single symbols while that lowers the cluster cost.
//!
//! One run records the whole merge path, so results for every `K` come from
//! the same run. The stopping rule for [`max_pattern_count`] is the first
//! point where every candidate merge would raise the cost.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distance::levenshtein;
use crate::hicluster::Partition;
use crate::ingest::{AuthorId, Collection, EventType};

pub const DEFAULT_ALPHA: f64 = 1.0;

/// Strict-improvement margin for cost comparisons in trimming.
const EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum SynopsisError {
    #[error("collection has no sequences")]
    EmptyCollection,
    #[error("K = {k} is outside [{min}, {max}]")]
    KOutOfRange { k: usize, min: usize, max: usize },
    #[error("alpha must be positive and finite, got {0}")]
    InvalidAlpha(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternCluster {
    pub pattern: Vec<EventType>,
    pub members: Vec<AuthorId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynopsisResult {
    pub clusters: Vec<PatternCluster>,
    pub alpha: f64,
    pub total_cost: f64,
    /// Σ edit distance between each sequence and its cluster pattern.
    pub loss: usize,
}

impl SynopsisResult {
    pub fn partition(&self) -> Partition {
        Partition::new(self.clusters.iter().map(|c| c.members.clone()).collect())
            .expect("synopsis clusters are disjoint and non-empty")
    }

    pub fn pattern_of(&self, author: AuthorId) -> Option<&[EventType]> {
        self.clusters
            .iter()
            .find(|c| c.members.contains(&author))
            .map(|c| c.pattern.as_slice())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MergePhase {
    Duplicate,
    Greedy,
}

/// A cluster on the merge path. Members are sequence indices in author order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub members: Vec<usize>,
    pub pattern: Vec<EventType>,
    pub cost: f64,
    pub loss: usize,
}

/// One merge. Node ids `0..n` are the initial clusters; step `t` creates node `n + t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeStep {
    pub left: usize,
    pub right: usize,
    pub phase: MergePhase,
    /// Index of the medoid sequence of the union.
    pub medoid: usize,
    /// Cluster cost of the union with the untrimmed medoid pattern.
    pub medoid_cost: f64,
    /// Change in total cost used to rank this merge (medoid pattern, before trimming).
    pub delta: f64,
    /// Total cost after the merge and trimming.
    pub total_cost: f64,
}

/// The full greedy merge path over one collection.
#[derive(Clone, Debug)]
pub struct SynopsisRun {
    authors: Vec<AuthorId>,
    sequences: Vec<Vec<EventType>>,
    alpha: f64,
    nodes: Vec<Node>,
    steps: Vec<MergeStep>,
    stop_at: usize,
}

impl SynopsisRun {
    pub fn new(c: &Collection, alpha: f64) -> Result<Self, SynopsisError> {
        Self::from_sequences(c.authors(), c.category_lists(), alpha)
    }

    /// `authors` must be sorted; `sequences[i]` belongs to `authors[i]`.
    pub fn from_sequences(
        authors: Vec<AuthorId>,
        sequences: Vec<Vec<EventType>>,
        alpha: f64,
    ) -> Result<Self, SynopsisError> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(SynopsisError::InvalidAlpha(alpha));
        }
        if sequences.is_empty() {
            return Err(SynopsisError::EmptyCollection);
        }
        assert_eq!(authors.len(), sequences.len());
        let n = sequences.len();
        let mut dist = vec![0usize; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = levenshtein(&sequences[i], &sequences[j]);
                dist[i * n + j] = d;
                dist[j * n + i] = d;
            }
        }
        let mut builder = Builder { n, alpha, sequences: &sequences, dist, nodes: Vec::new(), row_sums: Vec::new() };
        for i in 0..n {
            builder.nodes.push(Node {
                members: vec![i],
                pattern: sequences[i].clone(),
                cost: alpha * sequences[i].len() as f64,
                loss: 0,
            });
            builder.row_sums.push((0..n).map(|x| builder.dist[x * n + i]).collect());
        }
        let (steps, stop_at) = builder.run();
        let nodes = builder.nodes;
        Ok(SynopsisRun { authors, sequences, alpha, nodes, steps, stop_at })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn authors(&self) -> &[AuthorId] {
        &self.authors
    }

    pub fn sequences(&self) -> &[Vec<EventType>] {
        &self.sequences
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn steps(&self) -> &[MergeStep] {
        &self.steps
    }

    /// Number of clusters at which every remaining merge would raise the cost.
    pub fn max_pattern_count(&self) -> usize {
        self.stop_at
    }

    /// Node ids active when `k` clusters remain, ordered by first member.
    pub fn active_nodes(&self, k: usize) -> Result<Vec<usize>, SynopsisError> {
        let n = self.sequences.len();
        if k < 1 || k > n {
            return Err(SynopsisError::KOutOfRange { k, min: 1, max: n });
        }
        let mut active = vec![true; n];
        for step in &self.steps[..n - k] {
            active[step.left] = false;
            active[step.right] = false;
            active.push(true);
        }
        active.resize(self.nodes.len().max(active.len()), false);
        let mut ids: Vec<usize> = (0..active.len()).filter(|&i| active[i]).collect();
        ids.sort_by_key(|&i| self.nodes[i].members[0]);
        Ok(ids)
    }

    pub fn at_k(&self, k: usize) -> Result<SynopsisResult, SynopsisError> {
        let ids = self.active_nodes(k)?;
        let clusters = ids
            .iter()
            .map(|&id| PatternCluster {
                pattern: self.nodes[id].pattern.clone(),
                members: self.nodes[id].members.iter().map(|&m| self.authors[m]).collect(),
            })
            .collect();
        Ok(SynopsisResult {
            clusters,
            alpha: self.alpha,
            total_cost: ids.iter().map(|&id| self.nodes[id].cost).sum(),
            loss: ids.iter().map(|&id| self.nodes[id].loss).sum(),
        })
    }
}

struct Builder<'a> {
    n: usize,
    alpha: f64,
    sequences: &'a [Vec<EventType>],
    dist: Vec<usize>,
    nodes: Vec<Node>,
    /// `row_sums[node][x]` = Σ distance from sequence x to the node's members.
    row_sums: Vec<Vec<usize>>,
}

impl Builder<'_> {
    fn run(&mut self) -> (Vec<MergeStep>, usize) {
        let mut steps = Vec::with_capacity(self.n.saturating_sub(1));
        let mut active: Vec<usize> = (0..self.n).collect();

        // Identical sequences, grouped by first occurrence.
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        let mut first_of: HashMap<&[EventType], usize> = HashMap::new();
        for (i, s) in self.sequences.iter().enumerate() {
            let first = *first_of.entry(s.as_slice()).or_insert(i);
            groups.entry(first).or_default().push(i);
        }
        for members in groups.values().filter(|g| g.len() > 1) {
            let mut current = members[0];
            for &next in &members[1..] {
                let total = self.total(&active);
                let (medoid, medoid_cost) = self.medoid(current, next);
                let delta = medoid_cost - self.nodes[current].cost - self.nodes[next].cost;
                let id = self.merge(current, next, medoid);
                active.retain(|&a| a != current && a != next);
                active.push(id);
                steps.push(MergeStep {
                    left: current,
                    right: next,
                    phase: MergePhase::Duplicate,
                    medoid,
                    medoid_cost,
                    delta,
                    total_cost: total + self.nodes[id].cost - self.nodes[current].cost - self.nodes[next].cost,
                });
                current = id;
            }
        }

        let mut stop_at = None;
        let mut cache: HashMap<(usize, usize), (usize, f64)> = HashMap::new();
        while active.len() > 1 {
            active.sort_by_key(|&id| self.nodes[id].members[0]);
            let mut best: Option<(f64, usize, usize, usize, f64)> = None;
            for (ai, &a) in active.iter().enumerate() {
                for &b in &active[ai + 1..] {
                    let (medoid, cost) = *cache.entry((a, b)).or_insert_with(|| self.medoid(a, b));
                    let delta = cost - self.nodes[a].cost - self.nodes[b].cost;
                    if best.is_none_or(|(d, ..)| delta < d) {
                        best = Some((delta, a, b, medoid, cost));
                    }
                }
            }
            let (delta, a, b, medoid, medoid_cost) = best.expect("two or more active clusters");
            if delta > 0.0 && stop_at.is_none() {
                stop_at = Some(active.len());
            }
            let before = self.total(&active);
            let id = self.merge(a, b, medoid);
            active.retain(|&x| x != a && x != b);
            active.push(id);
            steps.push(MergeStep {
                left: a,
                right: b,
                phase: MergePhase::Greedy,
                medoid,
                medoid_cost,
                delta,
                total_cost: before + self.nodes[id].cost - self.nodes[a].cost - self.nodes[b].cost,
            });
        }
        (steps, stop_at.unwrap_or(1))
    }

    fn total(&self, active: &[usize]) -> f64 {
        active.iter().map(|&id| self.nodes[id].cost).sum()
    }

    /// Medoid of the union of two nodes and the union's cost with that pattern.
    fn medoid(&self, a: usize, b: usize) -> (usize, f64) {
        let (ra, rb) = (&self.row_sums[a], &self.row_sums[b]);
        let mut best = (usize::MAX, usize::MAX);
        for &x in self.nodes[a].members.iter().chain(&self.nodes[b].members) {
            let s = ra[x] + rb[x];
            if (s, x) < best {
                best = (s, x);
            }
        }
        let (sum, medoid) = best;
        (medoid, self.alpha * self.sequences[medoid].len() as f64 + sum as f64)
    }

    fn merge(&mut self, a: usize, b: usize, medoid: usize) -> usize {
        let mut members = self.nodes[a].members.clone();
        members.extend(&self.nodes[b].members);
        members.sort_unstable();
        let seqs: Vec<&[EventType]> = members.iter().map(|&m| self.sequences[m].as_slice()).collect();
        let (pattern, loss) = trim_pattern(&self.sequences[medoid], &seqs, self.alpha);
        let cost = self.alpha * pattern.len() as f64 + loss as f64;
        let row_sums = self.row_sums[a].iter().zip(&self.row_sums[b]).map(|(x, y)| x + y).collect();
        self.nodes.push(Node { members, pattern, cost, loss });
        self.row_sums.push(row_sums);
        self.nodes.len() - 1
    }
}

/// Cluster cost of `pattern` over `members`.
pub fn cluster_cost(pattern: &[EventType], members: &[&[EventType]], alpha: f64) -> f64 {
    alpha * pattern.len() as f64 + members.iter().map(|s| levenshtein(s, pattern)).sum::<usize>() as f64
}

/// Drop single symbols from `pattern` while that strictly lowers its cluster
/// cost, taking the best removal each round (lowest position on ties). The
/// pattern never shrinks below one symbol. Returns the pattern and its loss.
pub fn trim_pattern(pattern: &[EventType], members: &[&[EventType]], alpha: f64) -> (Vec<EventType>, usize) {
    let mut pattern = pattern.to_vec();
    let mut removal = Vec::new();
    let mut tables = SplitTables::default();
    loop {
        let loss = removal_losses(&pattern, members, &mut tables, &mut removal);
        if pattern.len() <= 1 {
            return (pattern, loss);
        }
        let current = alpha * pattern.len() as f64 + loss as f64;
        let shorter = alpha * (pattern.len() - 1) as f64;
        let (pos, best) = removal
            .iter()
            .enumerate()
            .min_by_key(|&(i, &l)| (l, i))
            .map(|(i, &l)| (i, l))
            .expect("pattern is non-empty");
        if shorter + (best as f64) < current - EPS {
            pattern.remove(pos);
        } else {
            return (pattern, loss);
        }
    }
}

#[derive(Default)]
struct SplitTables {
    prefix: Vec<usize>,
    suffix: Vec<usize>,
}

/// Fills `out[i]` with Σ_members levenshtein(member, pattern without position i)
/// and returns Σ_members levenshtein(member, pattern).
///
/// Uses prefix and suffix DP tables: removing position i splits the pattern
/// into `p[..i]` and `p[i+1..]`, and the best alignment splits the member at
/// some j, so the distance is `min_j prefix[i][j] + suffix[i+1][j]`.
fn removal_losses(pattern: &[EventType], members: &[&[EventType]], t: &mut SplitTables, out: &mut Vec<usize>) -> usize {
    let p = pattern.len();
    out.clear();
    out.resize(p, 0);
    let mut full = 0;
    for s in members {
        let m = s.len();
        let w = m + 1;
        t.prefix.clear();
        t.prefix.resize((p + 1) * w, 0);
        t.suffix.clear();
        t.suffix.resize((p + 1) * w, 0);
        let (pre, suf) = (&mut t.prefix, &mut t.suffix);
        for j in 0..=m {
            pre[j] = j;
            suf[p * w + j] = m - j;
        }
        for i in 1..=p {
            pre[i * w] = i;
            for j in 1..=m {
                let sub = pre[(i - 1) * w + j - 1] + usize::from(pattern[i - 1] != s[j - 1]);
                pre[i * w + j] = sub.min(pre[(i - 1) * w + j] + 1).min(pre[i * w + j - 1] + 1);
            }
        }
        for i in (0..p).rev() {
            suf[i * w + m] = p - i;
            for j in (0..m).rev() {
                let sub = suf[(i + 1) * w + j + 1] + usize::from(pattern[i] != s[j]);
                suf[i * w + j] = sub.min(suf[(i + 1) * w + j] + 1).min(suf[i * w + j + 1] + 1);
            }
        }
        full += pre[p * w + m];
        for (i, slot) in out.iter_mut().enumerate() {
            *slot += (0..=m).map(|j| pre[i * w + j] + suf[(i + 1) * w + j]).min().expect("m + 1 > 0 splits");
        }
    }
    full
}

pub fn synopsize(c: &Collection, k: usize, alpha: f64) -> Result<SynopsisResult, SynopsisError> {
    let n = c.len();
    if k < 1 || k > n {
        return Err(SynopsisError::KOutOfRange { k, min: 1, max: n });
    }
    SynopsisRun::new(c, alpha)?.at_k(k)
}

pub fn max_pattern_count(c: &Collection, alpha: f64) -> Result<usize, SynopsisError> {
    Ok(SynopsisRun::new(c, alpha)?.max_pattern_count())
}
