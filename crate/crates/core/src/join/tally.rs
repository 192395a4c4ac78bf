//! Per-pair bookkeeping of distinct similar node pairs.

use smallvec::SmallVec;

use super::CountMode;
use crate::taxonomy::NodeId;

/// Occurrence tally for one `(S, T)` set pair.
///
/// Greedy mode counts an edge only if neither endpoint was counted before.
/// Exact mode keeps every distinct edge and reports the size of a maximum
/// matching over them.
#[derive(Debug, Clone)]
pub struct CandidateTally {
    mode: CountMode,
    edges: SmallVec<[(NodeId, NodeId); 4]>,
    used_s: SmallVec<[NodeId; 4]>,
    used_t: SmallVec<[NodeId; 4]>,
}

impl CandidateTally {
    pub fn new(mode: CountMode) -> Self {
        Self {
            mode,
            edges: SmallVec::new(),
            used_s: SmallVec::new(),
            used_t: SmallVec::new(),
        }
    }

    pub fn mode(&self) -> CountMode {
        self.mode
    }

    /// Registers the similar node pair `(s, t)`. Returns whether it counted
    /// (greedy) or was a new evidence edge (exact).
    pub fn count_occurrence(&mut self, s: NodeId, t: NodeId) -> bool {
        match self.mode {
            CountMode::Greedy => {
                if self.used_s.contains(&s) || self.used_t.contains(&t) {
                    return false;
                }
                self.used_s.push(s);
                self.used_t.push(t);
                self.edges.push((s, t));
                true
            }
            CountMode::Exact => {
                if self.edges.contains(&(s, t)) {
                    return false;
                }
                self.edges.push((s, t));
                true
            }
        }
    }

    /// Number of distinct similar node pairs established so far.
    pub fn occurrences(&self) -> usize {
        match self.mode {
            CountMode::Greedy => self.edges.len(),
            CountMode::Exact => max_matching(&self.edges),
        }
    }
}

/// Maximum bipartite matching size (augmenting paths).
pub(crate) fn max_matching(edges: &[(NodeId, NodeId)]) -> usize {
    if edges.len() <= 1 {
        return edges.len();
    }
    let mut left: SmallVec<[NodeId; 16]> = edges.iter().map(|e| e.0).collect();
    left.sort_unstable();
    left.dedup();
    let mut right: SmallVec<[NodeId; 16]> = edges.iter().map(|e| e.1).collect();
    right.sort_unstable();
    right.dedup();
    let bound = left.len().min(right.len());
    if bound <= 1 {
        return bound;
    }

    let mut adj: Vec<SmallVec<[usize; 8]>> = vec![SmallVec::new(); left.len()];
    for &(s, t) in edges {
        let l = left.binary_search(&s).unwrap();
        let r = right.binary_search(&t).unwrap();
        if !adj[l].contains(&r) {
            adj[l].push(r);
        }
    }

    let mut match_r = vec![usize::MAX; right.len()];
    let mut seen = vec![false; right.len()];
    let mut size = 0;
    for l in 0..left.len() {
        seen.fill(false);
        if augment(l, &adj, &mut match_r, &mut seen) {
            size += 1;
            if size == bound {
                break;
            }
        }
    }
    size
}

fn augment(
    l: usize,
    adj: &[SmallVec<[usize; 8]>],
    match_r: &mut [usize],
    seen: &mut [bool],
) -> bool {
    for &r in &adj[l] {
        if seen[r] {
            continue;
        }
        seen[r] = true;
        if match_r[r] == usize::MAX || augment(match_r[r], adj, match_r, seen) {
            match_r[r] = l;
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::similarity::{assignment_max, WeightMatrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const S1: NodeId = NodeId(1);
    const S2: NodeId = NodeId(2);
    const T1: NodeId = NodeId(11);
    const T2: NodeId = NodeId(12);

    #[test]
    fn first_edge_counts() {
        for mode in [CountMode::Greedy, CountMode::Exact] {
            let mut t = CandidateTally::new(mode);
            assert!(t.count_occurrence(S1, T1));
            assert_eq!(t.occurrences(), 1);
        }
    }

    #[test]
    fn greedy_skips_reused_node() {
        let mut t = CandidateTally::new(CountMode::Greedy);
        assert!(t.count_occurrence(S1, T1));
        assert!(!t.count_occurrence(S1, T2));
        assert!(!t.count_occurrence(S1, T1));
        assert_eq!(t.occurrences(), 1);
    }

    #[test]
    fn greedy_undercounts_where_exact_does_not() {
        let order = [(S1, T1), (S1, T2), (S2, T1)];
        let mut greedy = CandidateTally::new(CountMode::Greedy);
        let mut exact = CandidateTally::new(CountMode::Exact);
        for (s, t) in order {
            greedy.count_occurrence(s, t);
            exact.count_occurrence(s, t);
        }
        assert_eq!(greedy.occurrences(), 1);
        assert_eq!(exact.occurrences(), 2);
    }

    #[test]
    fn exact_dedups_edges() {
        let mut t = CandidateTally::new(CountMode::Exact);
        assert!(t.count_occurrence(S1, T1));
        assert!(!t.count_occurrence(S1, T1));
        assert_eq!(t.occurrences(), 1);
    }

    #[test]
    fn matching_agrees_with_assignment_on_unit_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let (ns, nt) = (rng.random_range(1..=7u32), rng.random_range(1..=7u32));
            let mut edges = Vec::new();
            for s in 0..ns {
                for t in 0..nt {
                    if rng.random_bool(0.3) {
                        edges.push((NodeId(s), NodeId(100 + t)));
                    }
                }
            }
            let w = WeightMatrix::from_fn(ns as usize, nt as usize, |s, t| {
                if edges.contains(&(NodeId(s as u32), NodeId(100 + t as u32))) {
                    1.0
                } else {
                    0.0
                }
            })
            .unwrap();
            let expected = assignment_max(&w).unwrap().total.round() as usize;
            assert_eq!(max_matching(&edges), expected);

            // Greedy yields a maximal matching: at least half the maximum.
            let mut g = CandidateTally::new(CountMode::Greedy);
            for &(s, t) in &edges {
                g.count_occurrence(s, t);
            }
            assert!(g.occurrences() <= expected && 2 * g.occurrences() >= expected);
        }
    }
}
