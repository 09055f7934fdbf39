//! Average-linkage agglomerative clustering and dendrogram cuts.
//!
//! Cutting the same dendrogram at successive `K` yields nested partitions:
//! going from `K` to `K - 1` clusters unions exactly two clusters.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distance::DistanceMatrix;
use crate::ingest::AuthorId;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ClusterError {
    #[error("distance matrix is empty")]
    EmptyMatrix,
    #[error("K = {k} is outside [{min}, {max}]")]
    KOutOfRange { k: usize, min: usize, max: usize },
    #[error("partition is invalid: {0}")]
    InvalidPartition(String),
}

/// Disjoint, non-empty author sets.
///
/// Stored canonically: members sorted, clusters ordered by their first member.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Partition {
    clusters: Vec<Vec<AuthorId>>,
}

impl Partition {
    pub fn new(clusters: Vec<Vec<AuthorId>>) -> Result<Self, ClusterError> {
        let mut seen = BTreeSet::new();
        let mut clusters: Vec<Vec<AuthorId>> = clusters
            .into_iter()
            .map(|mut c| {
                c.sort();
                c
            })
            .collect();
        for c in &clusters {
            if c.is_empty() {
                return Err(ClusterError::InvalidPartition("empty cluster".into()));
            }
            for a in c {
                if !seen.insert(*a) {
                    return Err(ClusterError::InvalidPartition(format!("{a} appears twice")));
                }
            }
        }
        clusters.sort();
        Ok(Partition { clusters })
    }

    pub fn clusters(&self) -> &[Vec<AuthorId>] {
        &self.clusters
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn authors(&self) -> BTreeSet<AuthorId> {
        self.clusters.iter().flatten().copied().collect()
    }

    pub fn cluster_of(&self, author: AuthorId) -> Option<usize> {
        self.clusters.iter().position(|c| c.binary_search(&author).is_ok())
    }
}

/// One agglomeration step. Node ids `0..n` are leaves; step `t` creates node `n + t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub leaves: Vec<AuthorId>,
    pub merges: Vec<Merge>,
}

/// Average-linkage agglomeration.
///
/// Each step merges the pair of active clusters with the smallest mean
/// pairwise distance. Clusters are keyed by their smallest leaf index and ties
/// go to the lexicographically smallest key pair.
pub fn agglomerate(m: &DistanceMatrix) -> Result<Dendrogram, ClusterError> {
    let n = m.len();
    if n == 0 {
        return Err(ClusterError::EmptyMatrix);
    }
    // Linkage sums between active slots; slot i holds the cluster whose
    // smallest leaf is i, so merging i < j keeps slot i.
    let mut sums: Vec<f64> = (0..n * n).map(|k| m.get(k / n, k % n)).collect();
    let mut sizes = vec![1usize; n];
    let mut node = (0..n).collect::<Vec<_>>();
    let mut active = vec![true; n];
    let mut merges = Vec::with_capacity(n - 1);

    for step in 0..n - 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in (0..n).filter(|&i| active[i]) {
            for j in (i + 1..n).filter(|&j| active[j]) {
                let link = sums[i * n + j] / (sizes[i] * sizes[j]) as f64;
                if best.is_none_or(|(b, _, _)| link < b) {
                    best = Some((link, i, j));
                }
            }
        }
        let (height, i, j) = best.expect("at least two active clusters remain");
        for k in (0..n).filter(|&k| active[k] && k != i && k != j) {
            let s = sums[k * n + i] + sums[k * n + j];
            sums[k * n + i] = s;
            sums[i * n + k] = s;
        }
        merges.push(Merge { left: node[i], right: node[j], height, size: sizes[i] + sizes[j] });
        sizes[i] += sizes[j];
        active[j] = false;
        node[i] = n + step;
    }
    Ok(Dendrogram { leaves: m.authors().to_vec(), merges })
}

/// Partition with exactly `k` clusters: apply all but the last `k - 1` merges.
pub fn cut(d: &Dendrogram, k: usize) -> Result<Partition, ClusterError> {
    let n = d.leaves.len();
    if k < 1 || k > n {
        return Err(ClusterError::KOutOfRange { k, min: 1, max: n });
    }
    let mut members: Vec<Option<Vec<AuthorId>>> = d.leaves.iter().map(|a| Some(vec![*a])).collect();
    for m in &d.merges[..n - k] {
        let mut merged = members[m.left].take().expect("merge consumes a live node");
        merged.extend(members[m.right].take().expect("merge consumes a live node"));
        members.push(Some(merged));
    }
    Partition::new(members.into_iter().flatten().collect())
}
