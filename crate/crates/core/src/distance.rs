//! Edit distances over event-category sequences.
//!
//! Only categories take part; durations and activity labels are ignored.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{AuthorId, Collection};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum DistanceError {
    #[error("collection has no sequences")]
    EmptyCollection,
}

/// Unit-cost insert/delete/substitute edit distance.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let mut prev: Vec<usize> = (0..=short.len()).collect();
    let mut cur = vec![0; short.len() + 1];
    for (i, x) in long.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in short.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[short.len()]
}

/// Edit distance divided by the longer length; 0 when both are empty.
pub fn normalized_distance<T: PartialEq>(a: &[T], b: &[T]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        0.0
    } else {
        levenshtein(a, b) as f64 / longest as f64
    }
}

/// Symmetric pairwise distances with a zero diagonal, indexed in author order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    authors: Vec<AuthorId>,
    values: Vec<f64>,
}

impl DistanceMatrix {
    /// Build from a pair function evaluated once per unordered pair.
    pub fn from_fn(authors: Vec<AuthorId>, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let n = authors.len();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = f(i, j);
                values[i * n + j] = d;
                values[j * n + i] = d;
            }
        }
        DistanceMatrix { authors, values }
    }

    pub fn authors(&self) -> &[AuthorId] {
        &self.authors
    }

    pub fn len(&self) -> usize {
        self.authors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.authors.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.authors.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.authors.len();
        &self.values[i * n..(i + 1) * n]
    }
}

pub fn distance_matrix(c: &Collection, normalized: bool) -> Result<DistanceMatrix, DistanceError> {
    let (raw, norm) = distance_matrices(c)?;
    Ok(if normalized { norm } else { raw })
}

/// Raw and length-normalized matrices from a single pass of edit-distance calls.
pub fn distance_matrices(c: &Collection) -> Result<(DistanceMatrix, DistanceMatrix), DistanceError> {
    if c.is_empty() {
        return Err(DistanceError::EmptyCollection);
    }
    let seqs = c.category_lists();
    let raw = DistanceMatrix::from_fn(c.authors(), |i, j| levenshtein(&seqs[i], &seqs[j]) as f64);
    let norm = DistanceMatrix::from_fn(c.authors(), |i, j| {
        let longest = seqs[i].len().max(seqs[j].len());
        if longest == 0 {
            0.0
        } else {
            raw.get(i, j) / longest as f64
        }
    });
    Ok((raw, norm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::EventType::{self, *};
    use crate::ingest::{BehaviorSequence, Event, Role, StageKind};

    fn collection(seqs: &[&[EventType]]) -> Collection {
        let sequences = seqs
            .iter()
            .enumerate()
            .map(|(i, cats)| BehaviorSequence {
                author: AuthorId::new(i as u32 + 1, Role::Native),
                stage: StageKind::Individual,
                events: cats
                    .iter()
                    .map(|&category| Event { category, activity_label: String::new(), turn: 0, start_s: 0.0, end_s: 1.0 })
                    .collect(),
            })
            .collect();
        Collection::new(Role::Native, StageKind::Individual, sequences)
    }

    #[test]
    fn small_cases() {
        let empty: [EventType; 0] = [];
        assert_eq!(levenshtein(&empty, &empty), 0);
        assert_eq!(levenshtein(&[Writing, ActiveSearch, Writing], &[Writing, ActiveSearch, Writing]), 0);
        assert_eq!(levenshtein(&[Writing, ActiveSearch, Writing], &[Writing, Writing]), 1);
        assert_eq!(levenshtein(&[WordsmithCrosslingual, Writing], &[ActiveSearch, Writing]), 1);
        assert_eq!(levenshtein(&empty, &[Writing, Writing]), 2);
    }

    #[test]
    fn normalized_cases() {
        let d = normalized_distance(&[Writing, ActiveSearch, Writing], &[Writing, Writing]);
        assert!((d - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(normalized_distance(&[Writing], &[ActiveSearch]), 1.0);
        assert_eq!(normalized_distance::<EventType>(&[], &[]), 0.0);
    }

    #[test]
    fn one_sequence_gives_a_zero_matrix() {
        let m = distance_matrix(&collection(&[&[Writing, NoteTaking]]), true).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.get(0, 0), 0.0);
    }

    #[test]
    fn identical_sequences_are_at_distance_zero() {
        let m = distance_matrix(&collection(&[&[Writing, NoteTaking], &[Writing, NoteTaking]]), false).unwrap();
        assert_eq!(m.get(0, 1), 0.0);
    }

    #[test]
    fn matrix_matches_pairwise_calls() {
        let seqs: [&[EventType]; 3] = [&[Writing, ActiveSearch, Writing], &[Writing, Writing], &[WordsmithCrosslingual]];
        let c = collection(&seqs);
        let raw = distance_matrix(&c, false).unwrap();
        let norm = distance_matrix(&c, true).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(raw.get(i, j), levenshtein(seqs[i], seqs[j]) as f64);
                assert_eq!(norm.get(i, j), normalized_distance(seqs[i], seqs[j]));
            }
        }
    }

    #[test]
    fn empty_collection_is_an_error() {
        assert_eq!(distance_matrix(&collection(&[]), true).unwrap_err(), DistanceError::EmptyCollection);
    }
}
