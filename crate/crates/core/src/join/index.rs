//! Per-collection inverted index keyed by ancestor node.

use rayon::prelude::*;
use rustc_hash::FxHashMap;

use super::{JoinError, JoinParams, PARALLEL_MIN_RECORDS};
use crate::similarity::NodeSet;
use crate::taxonomy::{NodeId, Taxonomy};

/// Slack on the depth cutoff so that float rounding of `phi * depth` can
/// only add postings, never drop one that sits exactly on the boundary.
const CUTOFF_SLACK: f64 = 1e-9;

/// Node-level similarity cutoff for a set of `set_size` nodes:
/// `(theta * |S| - tau + 1) / (|S| - tau + 1)`, clamped below at zero.
pub fn phi_threshold(theta: f64, set_size: usize, tau: usize) -> Result<f64, JoinError> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(JoinError::InvalidTheta(theta));
    }
    if tau == 0 {
        return Err(JoinError::InvalidTau(tau));
    }
    if set_size < tau {
        return Err(JoinError::TauExceedsSetSize { tau, set_size });
    }
    // Same value as the ratio form, rearranged so that tau = 1 yields theta exactly.
    let slack = (tau - 1) as f64 / (set_size - tau + 1) as f64;
    Ok((theta - (1.0 - theta) * slack).max(0.0))
}

/// One posting: the set that indexed the key and the member node that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub set: u32,
    pub node: NodeId,
}

#[derive(Debug, Clone, Default)]
pub struct InvertedIndex {
    lists: FxHashMap<NodeId, Vec<Posting>>,
    phi: Vec<Option<f64>>,
    posting_count: usize,
}

impl InvertedIndex {
    pub fn get(&self, key: NodeId) -> &[Posting] {
        self.lists.get(&key).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Keys in ascending id order.
    pub fn keys(&self) -> Vec<NodeId> {
        let mut keys: Vec<NodeId> = self.lists.keys().copied().collect();
        keys.sort_unstable();
        keys
    }

    pub fn key_count(&self) -> usize {
        self.lists.len()
    }

    pub fn posting_count(&self) -> usize {
        self.posting_count
    }

    /// Cutoff used for set `set`; `None` when the set was too small to index.
    pub fn phi(&self, set: usize) -> Option<f64> {
        self.phi.get(set).copied().flatten()
    }

    pub(crate) fn contains_key(&self, key: NodeId) -> bool {
        self.lists.contains_key(&key)
    }
}

/// Indexes every ancestor-or-self `g` of every node `s` of every set with at
/// least `tau` nodes, provided `depth(g) >= phi * depth(s)`.
pub fn build_index<R>(
    tax: &Taxonomy,
    collection: &[R],
    params: &JoinParams,
) -> Result<InvertedIndex, JoinError>
where
    R: AsRef<NodeSet> + Sync,
{
    u32::try_from(collection.len()).map_err(|_| JoinError::TooManyRecords(collection.len()))?;
    for set in collection {
        for &n in set.as_ref().nodes() {
            tax.check(n)?;
        }
    }

    let phi: Vec<Option<f64>> = collection
        .iter()
        .map(|s| {
            let len = s.as_ref().len();
            (len >= params.tau).then(|| {
                phi_threshold(params.theta, len, params.tau).expect("validated parameters")
            })
        })
        .collect();

    let postings_of = |(i, set): (usize, &R)| -> Vec<(NodeId, Posting)> {
        let Some(phi) = phi[i] else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for &s in set.as_ref().nodes() {
            let cutoff = phi * f64::from(tax.depth_unchecked(s)) - CUTOFF_SLACK;
            for g in tax
                .ancestors_unchecked(s)
                .take_while(|&g| f64::from(tax.depth_unchecked(g)) >= cutoff)
            {
                out.push((
                    g,
                    Posting {
                        set: i as u32,
                        node: s,
                    },
                ));
            }
        }
        out
    };

    let per_set: Vec<Vec<(NodeId, Posting)>> = if collection.len() >= PARALLEL_MIN_RECORDS {
        collection.par_iter().enumerate().map(postings_of).collect()
    } else {
        collection.iter().enumerate().map(postings_of).collect()
    };

    let mut lists: FxHashMap<NodeId, Vec<Posting>> = FxHashMap::default();
    let mut posting_count = 0;
    for entries in per_set {
        posting_count += entries.len();
        for (g, p) in entries {
            lists.entry(g).or_default().push(p);
        }
    }
    Ok(InvertedIndex {
        lists,
        phi,
        posting_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::join::CountMode;
    use crate::toy::toy_example;

    #[test]
    fn phi_examples() {
        for n in 1..20 {
            assert_eq!(phi_threshold(0.8, n, 1).unwrap(), 0.8);
        }
        assert!((phi_threshold(0.8, 10, 3).unwrap() - 0.75).abs() < 1e-12);
        assert!((phi_threshold(0.8, 10, 2).unwrap() - 7.0 / 9.0).abs() < 1e-12);
        // Negative numerators clamp to zero.
        assert_eq!(phi_threshold(0.6, 5, 5).unwrap(), 0.0);
        assert!(matches!(
            phi_threshold(0.8, 2, 3),
            Err(JoinError::TauExceedsSetSize { tau: 3, set_size: 2 })
        ));
        assert!(matches!(phi_threshold(0.0, 2, 1), Err(JoinError::InvalidTheta(_))));
        assert!(matches!(phi_threshold(0.5, 2, 0), Err(JoinError::InvalidTau(0))));
    }

    #[test]
    fn phi_non_increasing_in_tau() {
        for t10 in 1..=10 {
            let theta = f64::from(t10) / 10.0;
            for n in 2..40 {
                for tau in 1..n {
                    let a = phi_threshold(theta, n, tau).unwrap();
                    let b = phi_threshold(theta, n, tau + 1).unwrap();
                    assert!(a >= b, "theta={theta} n={n} tau={tau}: {a} < {b}");
                }
            }
        }
    }

    #[test]
    fn theta_one_indexes_only_the_node_itself() {
        let fx = toy_example();
        let params = JoinParams::new(1.0, 1, CountMode::Exact).unwrap();
        let idx = build_index(&fx.tax, &[fx.left.clone(), fx.right.clone()], &params).unwrap();
        assert_eq!(idx.posting_count(), 6);
        for set in [&fx.left, &fx.right] {
            for &n in set.nodes() {
                assert_eq!(idx.get(n).len(), 1);
                assert_eq!(idx.get(n)[0].node, n);
            }
        }
    }

    #[test]
    fn tau_above_every_set_gives_empty_index() {
        let fx = toy_example();
        let params = JoinParams::new(0.5, 4, CountMode::Exact).unwrap();
        let idx = build_index(&fx.tax, &[fx.left.clone(), fx.right.clone()], &params).unwrap();
        assert_eq!(idx.posting_count(), 0);
        assert_eq!(idx.key_count(), 0);
        assert_eq!(idx.phi(0), None);
    }

    #[test]
    fn postings_follow_the_cutoff() {
        let fx = toy_example();
        // |S| = 3, tau = 2, theta = 0.8 => phi = (2.4 - 1) / 2 = 0.7
        let params = JoinParams::new(0.8, 2, CountMode::Exact).unwrap();
        let coll = [fx.right.clone()];
        let idx = build_index(&fx.tax, &coll, &params).unwrap();
        assert!((idx.phi(0).unwrap() - 0.7).abs() < 1e-12);
        let via = fx.tax.node("Via Nizza").unwrap();
        // depth 5 * 0.7 = 3.5 => keys at depths 5 and 4
        let expected = fx.tax.ancestors_at_or_deeper(via, 3.5).unwrap();
        assert_eq!(expected.len(), 2);
        for g in fx.tax.nodes() {
            let hit = idx.get(g).iter().any(|p| p.node == via);
            assert_eq!(hit, expected.contains(&g), "key {g}");
        }
    }
}
