//! Node-pair and set-pair taxonomic similarity.
//!
//! `ts(s, t) = depth(lca(s, t)) / max(depth(s), depth(t))`, and the set
//! similarity `gts(S, T)` is the maximum-weight injective matching of TS
//! values divided by `max(|S|, |T|)`.

use thiserror::Error;

use crate::taxonomy::{NodeId, Taxonomy, TaxonomyError};

/// Largest set size accepted by [`gts_brute`].
pub const BRUTE_FORCE_LIMIT: usize = 8;

#[derive(Debug, Error)]
pub enum SimilarityError {
    #[error("weight matrix must have at least one row and one column")]
    EmptyMatrix,
    #[error("weight matrix expects {expected} entries, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("weight {value} at ({row}, {col}) is outside [0, 1]")]
    InvalidWeight { row: usize, col: usize, value: f64 },
    #[error("record `{0}` has no nodes")]
    EmptySet(String),
    #[error("set of size {size} exceeds the brute-force limit of {limit}")]
    SetTooLarge { size: usize, limit: usize },
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
}

/// One record: an external identifier and its deduplicated node set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSet {
    record_id: String,
    nodes: Vec<NodeId>,
}

impl NodeSet {
    /// Duplicate nodes are dropped; nodes are kept in ascending id order.
    pub fn new(
        record_id: impl Into<String>,
        nodes: impl IntoIterator<Item = NodeId>,
    ) -> Result<Self, SimilarityError> {
        let record_id = record_id.into();
        let mut nodes: Vec<NodeId> = nodes.into_iter().collect();
        nodes.sort_unstable();
        nodes.dedup();
        if nodes.is_empty() {
            return Err(SimilarityError::EmptySet(record_id));
        }
        Ok(Self { record_id, nodes })
    }

    pub fn record_id(&self) -> &str {
        &self.record_id
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

impl AsRef<NodeSet> for NodeSet {
    fn as_ref(&self) -> &NodeSet {
        self
    }
}

/// Dense row-major matrix of similarity weights in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    rows: usize,
    cols: usize,
    w: Vec<f64>,
}

impl WeightMatrix {
    pub fn new(rows: usize, cols: usize, w: Vec<f64>) -> Result<Self, SimilarityError> {
        if rows == 0 || cols == 0 {
            return Err(SimilarityError::EmptyMatrix);
        }
        if w.len() != rows * cols {
            return Err(SimilarityError::Shape {
                expected: rows * cols,
                got: w.len(),
            });
        }
        if let Some(i) = w.iter().position(|x| !(0.0..=1.0).contains(x)) {
            return Err(SimilarityError::InvalidWeight {
                row: i / cols,
                col: i % cols,
                value: w[i],
            });
        }
        Ok(Self { rows, cols, w })
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self, SimilarityError> {
        let mut w = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                w.push(f(r, c));
            }
        }
        Self::new(rows, cols, w)
    }

    /// TS matrix between the nodes of `s` (rows) and `t` (columns).
    pub fn ts_matrix(tax: &Taxonomy, s: &NodeSet, t: &NodeSet) -> Result<Self, SimilarityError> {
        for &n in s.nodes().iter().chain(t.nodes()) {
            tax.check(n)?;
        }
        Ok(Self::ts_matrix_unchecked(tax, s, t))
    }

    fn ts_matrix_unchecked(tax: &Taxonomy, s: &NodeSet, t: &NodeSet) -> Self {
        let mut w = Vec::with_capacity(s.len() * t.len());
        for &a in s.nodes() {
            for &b in t.nodes() {
                w.push(ts_unchecked(tax, a, b));
            }
        }
        Self {
            rows: s.len(),
            cols: t.len(),
            w,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.w[row * self.cols + col]
    }
}

/// Optimal matching returned by [`assignment_max`].
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub total: f64,
    /// `(row, col)` pairs; padding introduced for rectangular inputs is excluded.
    pub pairs: Vec<(usize, usize)>,
}

/// Maximum-weight matching where every row and column is used at most once.
///
/// Hungarian algorithm with potentials, O(n^3) for `n = max(rows, cols)`.
/// Rectangular inputs are padded with zero-weight cells, which encodes
/// leaving a node unmatched.
pub fn assignment_max(w: &WeightMatrix) -> Result<Assignment, SimilarityError> {
    if w.rows == 0 || w.cols == 0 {
        return Err(SimilarityError::EmptyMatrix);
    }
    let n = w.rows.max(w.cols);
    let cost = |r: usize, c: usize| -> f64 {
        if r < w.rows && c < w.cols {
            -w.get(r, c)
        } else {
            0.0
        }
    };
    let row_to_col = hungarian_min(n, cost);
    let pairs: Vec<(usize, usize)> = row_to_col
        .into_iter()
        .enumerate()
        .filter(|&(r, c)| r < w.rows && c < w.cols)
        .collect();
    let total = pairs.iter().map(|&(r, c)| w.get(r, c)).sum();
    Ok(Assignment { total, pairs })
}

/// Square min-cost assignment; returns the column assigned to each row.
fn hungarian_min(n: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    // 1-based potentials; column 0 is a sentinel.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

/// Taxonomic similarity of two nodes.
pub fn ts(tax: &Taxonomy, s: NodeId, t: NodeId) -> Result<f64, SimilarityError> {
    tax.check(s)?;
    tax.check(t)?;
    Ok(ts_unchecked(tax, s, t))
}

#[inline]
pub(crate) fn ts_unchecked(tax: &Taxonomy, s: NodeId, t: NodeId) -> f64 {
    let l = tax.lca_unchecked(s, t);
    let (ds, dt) = (tax.depth_unchecked(s), tax.depth_unchecked(t));
    f64::from(tax.depth_unchecked(l)) / f64::from(ds.max(dt))
}

/// Set similarity via maximum-weight assignment over the TS matrix.
pub fn gts(tax: &Taxonomy, s: &NodeSet, t: &NodeSet) -> Result<f64, SimilarityError> {
    let w = WeightMatrix::ts_matrix(tax, s, t)?;
    Ok(assignment_max(&w)?.total / s.len().max(t.len()) as f64)
}

/// Same as [`gts`] for node sets already validated against `tax`.
pub(crate) fn gts_unchecked(tax: &Taxonomy, s: &NodeSet, t: &NodeSet) -> f64 {
    let w = WeightMatrix::ts_matrix_unchecked(tax, s, t);
    let total = assignment_max(&w)
        .expect("node sets are never empty")
        .total;
    total / s.len().max(t.len()) as f64
}

/// Exhaustive GTS over every injective partial matching. Test oracle only.
pub fn gts_brute(tax: &Taxonomy, s: &NodeSet, t: &NodeSet) -> Result<f64, SimilarityError> {
    for set in [s, t] {
        if set.len() > BRUTE_FORCE_LIMIT {
            return Err(SimilarityError::SetTooLarge {
                size: set.len(),
                limit: BRUTE_FORCE_LIMIT,
            });
        }
    }
    let w = WeightMatrix::ts_matrix(tax, s, t)?;
    let mut used = vec![false; w.cols];
    let best = best_partial_matching(&w, 0, &mut used);
    Ok(best / s.len().max(t.len()) as f64)
}

fn best_partial_matching(w: &WeightMatrix, row: usize, used: &mut [bool]) -> f64 {
    if row == w.rows {
        return 0.0;
    }
    // Leave this row unmatched.
    let mut best = best_partial_matching(w, row + 1, used);
    for c in 0..w.cols {
        if !used[c] {
            used[c] = true;
            best = best.max(w.get(row, c) + best_partial_matching(w, row + 1, used));
            used[c] = false;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy::toy_example;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_permutation_max(w: &WeightMatrix) -> f64 {
        // Pad to square and try every permutation.
        let n = w.rows().max(w.cols());
        let get = |r: usize, c: usize| {
            if r < w.rows() && c < w.cols() {
                w.get(r, c)
            } else {
                0.0
            }
        };
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best = f64::MIN;
        permute(&mut perm, 0, &mut |p| {
            let s: f64 = p.iter().enumerate().map(|(r, &c)| get(r, c)).sum();
            best = best.max(s);
        });
        best
    }

    fn permute(p: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
        if k == p.len() {
            f(p);
            return;
        }
        for i in k..p.len() {
            p.swap(k, i);
            permute(p, k + 1, f);
            p.swap(k, i);
        }
    }

    #[test]
    fn node_set_dedups() {
        let s = NodeSet::new("r", [NodeId(3), NodeId(1), NodeId(3)]).unwrap();
        assert_eq!(s.nodes(), &[NodeId(1), NodeId(3)]);
        assert!(matches!(
            NodeSet::new("e", []),
            Err(SimilarityError::EmptySet(id)) if id == "e"
        ));
    }

    #[test]
    fn weight_matrix_validation() {
        assert!(matches!(
            WeightMatrix::new(0, 2, vec![]),
            Err(SimilarityError::EmptyMatrix)
        ));
        assert!(matches!(
            WeightMatrix::new(1, 2, vec![0.5, 1.5]),
            Err(SimilarityError::InvalidWeight { row: 0, col: 1, .. })
        ));
        assert!(matches!(
            WeightMatrix::new(1, 2, vec![0.5, f64::NAN]),
            Err(SimilarityError::InvalidWeight { .. })
        ));
        assert!(matches!(
            WeightMatrix::new(2, 2, vec![0.5]),
            Err(SimilarityError::Shape { .. })
        ));
    }

    #[test]
    fn diagonal_assignment() {
        let w = WeightMatrix::from_fn(3, 3, |r, c| if r == c { 1.0 } else { 0.0 }).unwrap();
        let a = assignment_max(&w).unwrap();
        assert_eq!(a.total, 3.0);
        let mut pairs = a.pairs.clone();
        pairs.sort();
        assert_eq!(pairs, [(0, 0), (1, 1), (2, 2)]);
    }

    #[test]
    fn rectangular_assignment_drops_padding() {
        let w = WeightMatrix::new(2, 4, vec![0.1, 0.9, 0.2, 0.0, 0.8, 0.85, 0.3, 0.1]).unwrap();
        let a = assignment_max(&w).unwrap();
        assert!((a.total - 1.7).abs() < 1e-12);
        assert_eq!(a.pairs.len(), 2);
        let wt = WeightMatrix::from_fn(4, 2, |r, c| w.get(c, r)).unwrap();
        let at = assignment_max(&wt).unwrap();
        assert!((at.total - 1.7).abs() < 1e-12);
        assert_eq!(at.pairs.len(), 2);
    }

    #[test]
    fn assignment_matches_permutation_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..300 {
            let rows = rng.random_range(1..=6);
            let cols = rng.random_range(1..=6);
            let w = WeightMatrix::from_fn(rows, cols, |_, _| {
                // Coarse values provoke ties.
                if rng.random_bool(0.3) {
                    f64::from(rng.random_range(0..4u8)) / 4.0
                } else {
                    rng.random::<f64>()
                }
            })
            .unwrap();
            let a = assignment_max(&w).unwrap();
            assert!((a.total - brute_permutation_max(&w)).abs() < 1e-9);
            let mut rows_seen: Vec<usize> = a.pairs.iter().map(|p| p.0).collect();
            let mut cols_seen: Vec<usize> = a.pairs.iter().map(|p| p.1).collect();
            rows_seen.dedup();
            cols_seen.sort();
            cols_seen.dedup();
            assert_eq!(rows_seen.len(), a.pairs.len());
            assert_eq!(cols_seen.len(), a.pairs.len());
        }
    }

    #[test]
    fn toy_example_values() {
        let fx = toy_example();
        let n = |l: &str| fx.tax.node(l).unwrap();
        assert_eq!(ts(&fx.tax, n("Turin"), n("Via Nizza")).unwrap(), 0.6);
        assert_eq!(ts(&fx.tax, n("latte"), n("espresso")).unwrap(), 0.8);
        assert_eq!(ts(&fx.tax, n("coffeehouse"), n("bar")).unwrap(), 0.75);
        assert_eq!(ts(&fx.tax, n("latte"), n("latte")).unwrap(), 1.0);

        let w = WeightMatrix::ts_matrix(&fx.tax, &fx.left, &fx.right).unwrap();
        assert!((assignment_max(&w).unwrap().total - 2.15).abs() < 1e-9);

        let g = gts(&fx.tax, &fx.left, &fx.right).unwrap();
        assert!((g - 2.15 / 3.0).abs() < 1e-9);
        assert_eq!(format!("{g:.3}"), "0.717");
        let b = gts_brute(&fx.tax, &fx.left, &fx.right).unwrap();
        assert!((b - g).abs() < 1e-9);
        assert_eq!(gts(&fx.tax, &fx.left, &fx.left).unwrap(), 1.0);
        assert_eq!(gts_brute(&fx.tax, &fx.left, &fx.left).unwrap(), 1.0);
    }

    #[test]
    fn brute_force_limit() {
        let tax = Taxonomy::from_parents(&(0..12).map(|i| if i == 0 { None } else { Some(0) }).collect::<Vec<_>>()).unwrap();
        let big = NodeSet::new("b", (1..10).map(NodeId)).unwrap();
        let small = NodeSet::new("s", [NodeId(1)]).unwrap();
        assert!(matches!(
            gts_brute(&tax, &big, &small),
            Err(SimilarityError::SetTooLarge { size: 9, limit: 8 })
        ));
        let bad = NodeSet::new("x", [NodeId(40)]).unwrap();
        assert!(matches!(
            gts(&tax, &bad, &small),
            Err(SimilarityError::Taxonomy(TaxonomyError::InvalidNodeId(40)))
        ));
    }
}
