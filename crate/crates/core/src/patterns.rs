//! Maximal sequential pattern mining (Method II summaries).
//!
//! A pattern is a gapped subsequence; its support is the number of cluster
//! sequences containing it at least once. Mining is depth-first prefix growth:
//! each node keeps, per supporting sequence, the position right after the
//! leftmost embedding of the prefix, and extends with a next-occurrence table.
//! This is the vertical, depth-first search of bitmap miners with positions in
//! place of bitmaps.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::EventType;

pub const DEFAULT_MIN_SUPPORT: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum PatternError {
    #[error("cluster has no sequences")]
    EmptyCluster,
    #[error("minimum support must be in (0, 1], got {0}")]
    InvalidSupport(f64),
    #[error("no patterns to choose from")]
    NoPatterns,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pattern {
    pub symbols: Vec<EventType>,
    pub support: usize,
}

/// Tie-break order for [`representative`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankOrder {
    /// Highest support, then longest.
    #[default]
    SupportFirst,
    /// Longest, then highest support.
    LengthFirst,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiningConfig {
    pub min_support: f64,
    /// Longest pattern explored. Patterns at this length count as maximal.
    /// `None` mines without a bound, which is exponential on long sequences.
    pub max_length: Option<usize>,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig { min_support: DEFAULT_MIN_SUPPORT, max_length: None }
    }
}

/// Smallest support count meeting `min_support` on `n` sequences.
pub fn support_threshold(min_support: f64, n: usize) -> usize {
    ((min_support * n as f64 - 1e-9).ceil() as usize).max(1)
}

/// All maximal frequent patterns, without a length bound.
pub fn mine_maximal<S: AsRef<[EventType]>>(cluster: &[S], min_support: f64) -> Result<Vec<Pattern>, PatternError> {
    mine_maximal_with(cluster, &MiningConfig { min_support, max_length: None })
}

/// Maximal frequent patterns, ordered by support (desc), length (desc), then symbols.
pub fn mine_maximal_with<S: AsRef<[EventType]>>(cluster: &[S], config: &MiningConfig) -> Result<Vec<Pattern>, PatternError> {
    if cluster.is_empty() {
        return Err(PatternError::EmptyCluster);
    }
    if !(config.min_support > 0.0 && config.min_support <= 1.0) {
        return Err(PatternError::InvalidSupport(config.min_support));
    }
    let threshold = support_threshold(config.min_support, cluster.len());
    let tables: Vec<NextTable> = cluster.iter().map(|s| NextTable::new(s.as_ref())).collect();
    let max_length = config.max_length.unwrap_or(usize::MAX);

    let mut search = Search { tables: &tables, threshold, max_length, prefix: Vec::new(), out: Vec::new() };
    let root: Vec<(usize, usize)> = (0..cluster.len()).map(|s| (s, 0)).collect();
    search.grow(&root);
    let mut maximal = search.out;
    maximal.sort_unstable_by(|a, b| {
        b.support
            .cmp(&a.support)
            .then(b.symbols.len().cmp(&a.symbols.len()))
            .then(a.symbols.cmp(&b.symbols))
    });
    Ok(maximal)
}

struct NextTable {
    /// `next[pos * 6 + sym]`: first index >= pos holding `sym`, or `NONE`.
    next: Vec<u32>,
}

const NONE: u32 = u32::MAX;

impl NextTable {
    fn new(seq: &[EventType]) -> Self {
        let mut next = vec![NONE; (seq.len() + 1) * 6];
        for pos in (0..seq.len()).rev() {
            let (head, tail) = next.split_at_mut((pos + 1) * 6);
            head[pos * 6..].copy_from_slice(&tail[..6]);
            head[pos * 6 + seq[pos].ordinal()] = pos as u32;
        }
        NextTable { next }
    }

    fn contains(&self, pattern: &[EventType]) -> bool {
        let mut pos = 0;
        pattern.iter().all(|&sym| match self.after(pos, sym) {
            Some(p) => {
                pos = p;
                true
            }
            None => false,
        })
    }

    fn after(&self, pos: usize, sym: EventType) -> Option<usize> {
        match self.next[pos * 6 + sym.ordinal()] {
            NONE => None,
            i => Some(i as usize + 1),
        }
    }
}

struct Search<'a> {
    tables: &'a [NextTable],
    threshold: usize,
    max_length: usize,
    prefix: Vec<EventType>,
    out: Vec<Pattern>,
}

impl Search<'_> {
    /// Depth-first growth of `self.prefix`, whose supporting sequences and
    /// resume positions are `projection`. Emits the prefix if it is maximal.
    fn grow(&mut self, projection: &[(usize, usize)]) {
        let len = self.prefix.len();
        let mut extended_any = false;
        if len < self.max_length {
            let mut extended = Vec::with_capacity(projection.len());
            for sym in EventType::ALL {
                extended.clear();
                extended.extend(projection.iter().filter_map(|&(s, pos)| self.tables[s].after(pos, sym).map(|p| (s, p))));
                if extended.len() >= self.threshold {
                    extended_any = true;
                    self.prefix.push(sym);
                    self.grow(&extended);
                    self.prefix.pop();
                }
            }
        }
        // Appends were tried above; other single insertions are checked
        // directly. By anti-monotonicity these decide maximality.
        if len > 0 && !extended_any && (len >= self.max_length || !self.has_frequent_insertion()) {
            self.out.push(Pattern { symbols: self.prefix.clone(), support: projection.len() });
        }
    }

    fn has_frequent_insertion(&self) -> bool {
        let mut candidate = Vec::with_capacity(self.prefix.len() + 1);
        for at in 0..self.prefix.len() {
            for sym in EventType::ALL {
                if self.prefix[at] == sym {
                    // Same set as inserting after this symbol.
                    continue;
                }
                candidate.clear();
                candidate.extend_from_slice(&self.prefix[..at]);
                candidate.push(sym);
                candidate.extend_from_slice(&self.prefix[at..]);
                let support = self.tables.iter().filter(|t| t.contains(&candidate)).count();
                if support >= self.threshold {
                    return true;
                }
            }
        }
        false
    }
}

/// Whether `pattern` is a gapped subsequence of `seq`.
pub fn is_subsequence(pattern: &[EventType], seq: &[EventType]) -> bool {
    let mut it = seq.iter();
    pattern.iter().all(|p| it.any(|s| s == p))
}

/// Pick one pattern: highest support, then longest (or the reverse under
/// [`RankOrder::LengthFirst`]), then lexicographically smallest.
pub fn representative(patterns: &[Pattern], order: RankOrder) -> Result<Pattern, PatternError> {
    patterns
        .iter()
        .min_by(|a, b| {
            let support = b.support.cmp(&a.support);
            let length = b.symbols.len().cmp(&a.symbols.len());
            match order {
                RankOrder::SupportFirst => support.then(length),
                RankOrder::LengthFirst => length.then(support),
            }
            .then(a.symbols.cmp(&b.symbols))
        })
        .cloned()
        .ok_or(PatternError::NoPatterns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::EventType::*;

    fn pat(symbols: &[EventType], support: usize) -> Pattern {
        Pattern { symbols: symbols.to_vec(), support }
    }

    #[test]
    fn three_sequence_example() {
        let cluster = vec![vec![Writing, ActiveSearch, Writing], vec![Writing, ActiveSearch], vec![ActiveSearch, Writing]];
        let mined = mine_maximal(&cluster, 0.5).unwrap();
        assert_eq!(mined, vec![pat(&[Writing, ActiveSearch], 2), pat(&[ActiveSearch, Writing], 2)]);
    }

    #[test]
    fn single_sequence_is_its_own_pattern() {
        let s = vec![Writing, NoteTaking, Writing, PassiveSearch];
        assert_eq!(mine_maximal(std::slice::from_ref(&s), 0.5).unwrap(), vec![pat(&s, 1)]);
    }

    #[test]
    fn disjoint_alphabets_share_nothing() {
        let cluster = vec![vec![Writing, Writing], vec![ActiveSearch]];
        assert!(mine_maximal(&cluster, 1.0).unwrap().is_empty());
    }

    #[test]
    fn repeated_occurrences_do_not_raise_support() {
        let cluster = vec![vec![Writing, Writing, Writing], vec![ActiveSearch]];
        let mined = mine_maximal(&cluster, 0.5).unwrap();
        assert_eq!(mined, vec![pat(&[Writing, Writing, Writing], 1), pat(&[ActiveSearch], 1)]);
    }

    #[test]
    fn length_cap_bounds_patterns() {
        let cluster = vec![vec![Writing, ActiveSearch, Writing, ActiveSearch]];
        let mined = mine_maximal_with(&cluster, &MiningConfig { min_support: 0.5, max_length: Some(2) }).unwrap();
        assert!(mined.iter().all(|p| p.symbols.len() == 2));
        assert_eq!(mined.len(), 4);
    }

    #[test]
    fn rejects_bad_input() {
        let empty: Vec<Vec<EventType>> = vec![];
        assert_eq!(mine_maximal(&empty, 0.5).unwrap_err(), PatternError::EmptyCluster);
        assert_eq!(mine_maximal(&[vec![Writing]], 0.0).unwrap_err(), PatternError::InvalidSupport(0.0));
        assert_eq!(mine_maximal(&[vec![Writing]], 1.5).unwrap_err(), PatternError::InvalidSupport(1.5));
    }

    #[test]
    fn threshold_rounds_up() {
        assert_eq!(support_threshold(0.5, 3), 2);
        assert_eq!(support_threshold(0.5, 4), 2);
        assert_eq!(support_threshold(0.5, 1), 1);
        assert_eq!(support_threshold(1.0, 7), 7);
    }

    #[test]
    fn representative_rules() {
        let tie = [pat(&[ActiveSearch, Writing], 2), pat(&[Writing, ActiveSearch], 2)];
        assert_eq!(representative(&tie, RankOrder::SupportFirst).unwrap().symbols, vec![Writing, ActiveSearch]);

        let mixed = [pat(&[Writing], 3), pat(&[Writing, ActiveSearch], 2)];
        assert_eq!(representative(&mixed, RankOrder::SupportFirst).unwrap().symbols, vec![Writing]);
        assert_eq!(representative(&mixed, RankOrder::LengthFirst).unwrap().symbols, vec![Writing, ActiveSearch]);

        assert_eq!(representative(&mixed[..1], RankOrder::SupportFirst).unwrap(), mixed[0]);
        assert_eq!(representative(&[], RankOrder::SupportFirst).unwrap_err(), PatternError::NoPatterns);
    }

    #[test]
    fn subsequence_check() {
        assert!(is_subsequence(&[Writing, Writing], &[Writing, ActiveSearch, Writing]));
        assert!(!is_subsequence(&[ActiveSearch, ActiveSearch], &[Writing, ActiveSearch, Writing]));
        assert!(is_subsequence(&[], &[Writing]));
    }
}
