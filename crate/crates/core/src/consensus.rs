//! Agreement between the two clusterings.
//!
//! For a given `K`, the synopsis partition (Method I) and the dendrogram cut
//! (Method II) are matched one-to-one by maximum total overlap. Matched
//! intersections with at least two authors become agreed clusters; every
//! other author is a singleton.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distance::{distance_matrices, DistanceMatrix};
use crate::hicluster::{agglomerate, cut, Dendrogram, Partition};
use crate::ingest::{AuthorId, Collection, EventType};
use crate::synopsis::{SynopsisError, SynopsisResult, SynopsisRun, DEFAULT_ALPHA};

/// Authors past this rank no longer take part in tie-breaking between
/// equally good assignments (keeps weights inside `i128`).
const TIE_BREAK_RANKS: usize = 100;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ConsensusError {
    #[error("partitions cover different author sets")]
    AuthorSetMismatch,
    #[error("K = {k} is outside [{min}, {max}]")]
    KOutOfRange { k: usize, min: usize, max: usize },
    #[error("at most {n} pattern(s) found; consensus needs at least 2")]
    NTooSmall { n: usize },
    #[error("collection has no sequences")]
    EmptyCollection,
    #[error(transparent)]
    Synopsis(#[from] SynopsisError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub a: usize,
    pub b: usize,
    pub overlap: usize,
}

/// One-to-one matching of clusters maximizing total overlap.
///
/// The smaller side is padded with empty clusters; pairs involving padding are
/// dropped. Among optimal matchings, the one whose matched intersections cover
/// the lowest-ranked authors wins, which makes the result independent of which
/// partition is passed first.
pub fn match_clusters(a: &Partition, b: &Partition) -> Result<Vec<MatchedPair>, ConsensusError> {
    let authors = a.authors();
    if authors != b.authors() {
        return Err(ConsensusError::AuthorSetMismatch);
    }
    let rank: Vec<AuthorId> = authors.into_iter().collect();
    let bits = rank.len().min(TIE_BREAK_RANKS);
    let size = a.len().max(b.len());
    let mut weight = vec![vec![0i128; size]; size];
    let mut overlap = vec![vec![0usize; size]; size];
    for (i, ca) in a.clusters().iter().enumerate() {
        for (j, cb) in b.clusters().iter().enumerate() {
            let shared: Vec<usize> = ca
                .iter()
                .filter(|x| cb.binary_search(x).is_ok())
                .map(|x| rank.binary_search(x).expect("author is ranked"))
                .collect();
            let tie: i128 = shared.iter().filter(|&&r| r < bits).map(|&r| 1i128 << (bits - 1 - r)).sum();
            overlap[i][j] = shared.len();
            weight[i][j] = ((shared.len() as i128) << bits) + tie;
        }
    }
    let cost: Vec<Vec<i128>> = weight.iter().map(|row| row.iter().map(|w| -w).collect()).collect();
    let assignment = hungarian(&cost);
    Ok(assignment
        .into_iter()
        .enumerate()
        .filter(|&(i, j)| i < a.len() && j < b.len())
        .map(|(i, j)| MatchedPair { a: i, b: j, overlap: overlap[i][j] })
        .collect())
}

/// Minimum-cost perfect assignment on a square matrix; `result[row] = column`.
pub fn hungarian(cost: &[Vec<i128>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // Shortest augmenting paths with row/column potentials, 1-indexed.
    let inf = i128::MAX / 4;
    let mut u = vec![0i128; n + 1];
    let mut v = vec![0i128; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let i0 = owner[col0];
            let mut delta = inf;
            let mut col1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = col0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        col1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            owner[col0] = owner[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut result = vec![0; n];
    for j in 1..=n {
        result[owner[j] - 1] = j - 1;
    }
    result
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsensusCluster {
    pub members: Vec<AuthorId>,
    /// Pattern of the synopsis cluster the members came from.
    pub pattern: Vec<EventType>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsensusResult {
    pub k: usize,
    pub clusters: Vec<ConsensusCluster>,
    pub singletons: Vec<AuthorId>,
}

/// Intersect matched clusters of the synopsis result and the dendrogram cut.
pub fn combine(k: usize, synopsis: &SynopsisResult, hierarchical: &Partition) -> Result<ConsensusResult, ConsensusError> {
    let method_one = synopsis.partition();
    let pairs = match_clusters(&method_one, hierarchical)?;
    let mut clusters: Vec<ConsensusCluster> = pairs
        .iter()
        .filter(|p| p.overlap >= 2)
        .map(|p| {
            let ca = &method_one.clusters()[p.a];
            let cb = &hierarchical.clusters()[p.b];
            let members: Vec<AuthorId> = ca.iter().filter(|x| cb.binary_search(x).is_ok()).copied().collect();
            let pattern = synopsis.pattern_of(members[0]).expect("member belongs to a synopsis cluster").to_vec();
            ConsensusCluster { members, pattern }
        })
        .collect();
    clusters.sort_by(|x, y| x.members.cmp(&y.members));
    let agreed: BTreeSet<AuthorId> = clusters.iter().flat_map(|c| c.members.iter().copied()).collect();
    let singletons = method_one.authors().into_iter().filter(|a| !agreed.contains(a)).collect();
    Ok(ConsensusResult { k, clusters, singletons })
}

/// Everything needed to answer consensus queries for one collection at any `K`.
#[derive(Clone, Debug)]
pub struct CollectionAnalysis {
    collection: Collection,
    raw: DistanceMatrix,
    normalized: DistanceMatrix,
    dendrogram: Dendrogram,
    synopsis: SynopsisRun,
}

impl CollectionAnalysis {
    pub fn new(collection: Collection, alpha: f64) -> Result<Self, ConsensusError> {
        let (raw, normalized) = distance_matrices(&collection).map_err(|_| ConsensusError::EmptyCollection)?;
        let dendrogram = agglomerate(&normalized).map_err(|_| ConsensusError::EmptyCollection)?;
        let synopsis = SynopsisRun::new(&collection, alpha)?;
        Ok(CollectionAnalysis { collection, raw, normalized, dendrogram, synopsis })
    }

    pub fn collection(&self) -> &Collection {
        &self.collection
    }

    pub fn raw_distances(&self) -> &DistanceMatrix {
        &self.raw
    }

    pub fn normalized_distances(&self) -> &DistanceMatrix {
        &self.normalized
    }

    pub fn dendrogram(&self) -> &Dendrogram {
        &self.dendrogram
    }

    pub fn synopsis(&self) -> &SynopsisRun {
        &self.synopsis
    }

    /// `N`: the upper end of the consensus `K` range.
    pub fn max_pattern_count(&self) -> usize {
        self.synopsis.max_pattern_count()
    }

    pub fn consensus(&self, k: usize) -> Result<ConsensusResult, ConsensusError> {
        let n = self.max_pattern_count();
        if k < 2 || k > n {
            return Err(ConsensusError::KOutOfRange { k, min: 2, max: n });
        }
        let synopsis = self.synopsis.at_k(k)?;
        let hierarchical = cut(&self.dendrogram, k).expect("2 <= K <= N <= collection size");
        combine(k, &synopsis, &hierarchical)
    }

    /// The `K` in `[2, N]` with the fewest singletons, smallest on ties.
    pub fn default_k(&self) -> Result<usize, ConsensusError> {
        let n = self.max_pattern_count();
        if n < 2 {
            return Err(ConsensusError::NTooSmall { n });
        }
        let mut best = (usize::MAX, 0);
        for k in 2..=n {
            let singletons = self.consensus(k)?.singletons.len();
            if singletons < best.0 {
                best = (singletons, k);
            }
        }
        Ok(best.1)
    }
}

pub fn consensus_partition(c: &Collection, k: usize) -> Result<ConsensusResult, ConsensusError> {
    CollectionAnalysis::new(c.clone(), DEFAULT_ALPHA)?.consensus(k)
}

pub fn default_k(c: &Collection) -> Result<usize, ConsensusError> {
    CollectionAnalysis::new(c.clone(), DEFAULT_ALPHA)?.default_k()
}
