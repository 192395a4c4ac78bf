//! Rooted concept taxonomy with depth bookkeeping and constant-time LCA.
//!
//! Depths are 1-based: the root has depth 1 and every other node sits one
//! level below its parent. LCA queries use a sparse table over the preorder
//! sequence: for `tin[u] < tin[v]` the LCA is the parent of the shallowest
//! node in preorder positions `(tin[u], tin[v]]`.

use std::fmt;
use std::io::BufRead;
use std::path::Path;

use rustc_hash::FxHashMap;
use thiserror::Error;

/// Dense identifier of a taxonomy node, in `[0, node_count)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("taxonomy input contains no edges")]
    EmptyInput,
    #[error("edge {edge} has an empty label")]
    EmptyLabel { edge: usize },
    #[error("taxonomy has {} roots ({}); exactly one is required", roots.len(), roots.join(", "))]
    MultipleRoots { roots: Vec<String> },
    #[error("parent links form a cycle through `{label}`")]
    CycleDetected { label: String },
    #[error("`{child}` is listed under two parents: `{first}` and `{second}`")]
    DuplicateChild {
        child: String,
        first: String,
        second: String,
    },
    #[error("node id {0} is out of range")]
    InvalidNodeId(u32),
    #[error("line {line}: expected `child<TAB>parent`")]
    Malformed { line: usize },
    #[error("taxonomy has too many nodes for 32-bit ids")]
    TooLarge,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Immutable rooted tree of concepts.
#[derive(Debug, Clone)]
pub struct Taxonomy {
    parent: Vec<NodeId>,
    depth: Vec<u32>,
    labels: Vec<String>,
    by_label: FxHashMap<String, NodeId>,
    root: NodeId,
    tin: Vec<u32>,
    tout: Vec<u32>,
    lca_table: SparseTable,
}

impl Taxonomy {
    /// Builds a taxonomy from `(child, parent)` label pairs.
    ///
    /// Node ids are assigned in order of first appearance. Repeating an
    /// identical edge is harmless; giving a child a second, different parent
    /// is rejected.
    pub fn from_edges<I, C, P>(edges: I) -> Result<Self, TaxonomyError>
    where
        I: IntoIterator<Item = (C, P)>,
        C: AsRef<str>,
        P: AsRef<str>,
    {
        let mut by_label: FxHashMap<String, NodeId> = FxHashMap::default();
        let mut labels: Vec<String> = Vec::new();
        let mut parent_of: Vec<Option<NodeId>> = Vec::new();
        let mut edge_count = 0usize;

        let mut intern = |label: &str,
                          labels: &mut Vec<String>,
                          parent_of: &mut Vec<Option<NodeId>>|
         -> Result<NodeId, TaxonomyError> {
            if let Some(&id) = by_label.get(label) {
                return Ok(id);
            }
            let id = u32::try_from(labels.len()).map_err(|_| TaxonomyError::TooLarge)?;
            let id = NodeId(id);
            by_label.insert(label.to_owned(), id);
            labels.push(label.to_owned());
            parent_of.push(None);
            Ok(id)
        };

        for (child, parent) in edges {
            edge_count += 1;
            let (child, parent) = (child.as_ref(), parent.as_ref());
            if child.is_empty() || parent.is_empty() {
                return Err(TaxonomyError::EmptyLabel { edge: edge_count });
            }
            let c = intern(child, &mut labels, &mut parent_of)?;
            let p = intern(parent, &mut labels, &mut parent_of)?;
            if c == p {
                return Err(TaxonomyError::CycleDetected {
                    label: child.to_owned(),
                });
            }
            match parent_of[c.index()] {
                None => parent_of[c.index()] = Some(p),
                Some(existing) if existing == p => {}
                Some(existing) => {
                    return Err(TaxonomyError::DuplicateChild {
                        child: child.to_owned(),
                        first: labels[existing.index()].clone(),
                        second: parent.to_owned(),
                    })
                }
            }
        }
        if edge_count == 0 {
            return Err(TaxonomyError::EmptyInput);
        }
        Self::build(parent_of, labels, by_label)
    }

    /// Builds a taxonomy from a parent array (`None` marks the root).
    /// Labels are synthesized as the decimal node index.
    pub fn from_parents(parents: &[Option<usize>]) -> Result<Self, TaxonomyError> {
        if parents.len() < 2 {
            return Err(TaxonomyError::EmptyInput);
        }
        if u32::try_from(parents.len()).is_err() {
            return Err(TaxonomyError::TooLarge);
        }
        let mut parent_of = Vec::with_capacity(parents.len());
        for (i, p) in parents.iter().enumerate() {
            match p {
                Some(p) if *p >= parents.len() => {
                    return Err(TaxonomyError::InvalidNodeId(*p as u32))
                }
                Some(p) if *p == i => {
                    return Err(TaxonomyError::CycleDetected {
                        label: i.to_string(),
                    })
                }
                Some(p) => parent_of.push(Some(NodeId(*p as u32))),
                None => parent_of.push(None),
            }
        }
        let labels: Vec<String> = (0..parents.len()).map(|i| i.to_string()).collect();
        let by_label = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), NodeId(i as u32)))
            .collect();
        Self::build(parent_of, labels, by_label)
    }

    /// Parses the tab-separated edge format (`child<TAB>parent`, `#` comments).
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, TaxonomyError> {
        let mut edges = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split('\t');
            let (Some(child), Some(parent), None) = (fields.next(), fields.next(), fields.next())
            else {
                return Err(TaxonomyError::Malformed { line: i + 1 });
            };
            let (child, parent) = (child.trim(), parent.trim());
            if child.is_empty() || parent.is_empty() {
                return Err(TaxonomyError::Malformed { line: i + 1 });
            }
            edges.push((child.to_owned(), parent.to_owned()));
        }
        Self::from_edges(edges)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, TaxonomyError> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(std::io::BufReader::new(file))
    }

    fn build(
        parent_of: Vec<Option<NodeId>>,
        labels: Vec<String>,
        by_label: FxHashMap<String, NodeId>,
    ) -> Result<Self, TaxonomyError> {
        let n = parent_of.len();
        let roots: Vec<NodeId> = (0..n)
            .filter(|&i| parent_of[i].is_none())
            .map(|i| NodeId(i as u32))
            .collect();
        let root = match roots.as_slice() {
            [] => {
                return Err(TaxonomyError::CycleDetected {
                    label: labels[0].clone(),
                })
            }
            [r] => *r,
            _ => {
                return Err(TaxonomyError::MultipleRoots {
                    roots: roots.iter().map(|r| labels[r.index()].clone()).collect(),
                })
            }
        };

        // Children in CSR layout, in id order.
        let mut child_start = vec![0u32; n + 1];
        for p in parent_of.iter().flatten() {
            child_start[p.index() + 1] += 1;
        }
        for i in 0..n {
            child_start[i + 1] += child_start[i];
        }
        let mut fill = child_start.clone();
        let mut children = vec![NodeId(0); n - 1];
        for (c, p) in parent_of.iter().enumerate() {
            if let Some(p) = p {
                children[fill[p.index()] as usize] = NodeId(c as u32);
                fill[p.index()] += 1;
            }
        }

        let mut parent = vec![root; n];
        let mut depth = vec![0u32; n];
        let mut tin = vec![u32::MAX; n];
        let mut tout = vec![0u32; n];
        let mut order: Vec<NodeId> = Vec::with_capacity(n);
        // (node, next child offset)
        let mut stack: Vec<(NodeId, u32)> = vec![(root, child_start[root.index()])];
        depth[root.index()] = 1;
        tin[root.index()] = 0;
        order.push(root);
        while let Some(&mut (u, ref mut next)) = stack.last_mut() {
            if *next < child_start[u.index() + 1] {
                let c = children[*next as usize];
                *next += 1;
                parent[c.index()] = u;
                depth[c.index()] = depth[u.index()] + 1;
                tin[c.index()] = order.len() as u32;
                order.push(c);
                stack.push((c, child_start[c.index()]));
            } else {
                tout[u.index()] = order.len() as u32 - 1;
                stack.pop();
            }
        }
        if order.len() != n {
            let stray = (0..n).find(|&i| tin[i] == u32::MAX).unwrap_or(0);
            return Err(TaxonomyError::CycleDetected {
                label: labels[stray].clone(),
            });
        }

        let lca_table = SparseTable::new(&order, &depth);
        Ok(Self {
            parent,
            depth,
            labels,
            by_label,
            root,
            tin,
            tout,
            lca_table,
        })
    }

    pub fn node_count(&self) -> usize {
        self.parent.len()
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn max_depth(&self) -> u32 {
        self.depth.iter().copied().max().unwrap_or(1)
    }

    pub fn check(&self, u: NodeId) -> Result<NodeId, TaxonomyError> {
        if u.index() < self.parent.len() {
            Ok(u)
        } else {
            Err(TaxonomyError::InvalidNodeId(u.0))
        }
    }

    pub fn depth(&self, u: NodeId) -> Result<u32, TaxonomyError> {
        self.check(u).map(|u| self.depth[u.index()])
    }

    /// Parent of `u`; the root is its own parent.
    pub fn parent(&self, u: NodeId) -> Result<NodeId, TaxonomyError> {
        self.check(u).map(|u| self.parent[u.index()])
    }

    pub fn label(&self, u: NodeId) -> Result<&str, TaxonomyError> {
        self.check(u).map(|u| self.labels[u.index()].as_str())
    }

    pub fn node(&self, label: &str) -> Option<NodeId> {
        self.by_label.get(label).copied()
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = NodeId> {
        (0..self.parent.len() as u32).map(NodeId)
    }

    /// True when `a` is an ancestor-or-self of `b`.
    pub fn is_ancestor(&self, a: NodeId, b: NodeId) -> Result<bool, TaxonomyError> {
        self.check(a)?;
        self.check(b)?;
        let (ta, tb) = (self.tin[a.index()], self.tin[b.index()]);
        Ok(ta <= tb && tb <= self.tout[a.index()])
    }

    pub fn lca(&self, u: NodeId, v: NodeId) -> Result<NodeId, TaxonomyError> {
        self.check(u)?;
        self.check(v)?;
        Ok(self.lca_unchecked(u, v))
    }

    #[inline]
    pub(crate) fn depth_unchecked(&self, u: NodeId) -> u32 {
        self.depth[u.index()]
    }

    #[inline]
    pub(crate) fn lca_unchecked(&self, u: NodeId, v: NodeId) -> NodeId {
        if u == v {
            return u;
        }
        let (a, b) = (self.tin[u.index()], self.tin[v.index()]);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let shallowest = self
            .lca_table
            .argmin(lo as usize + 1, hi as usize, &self.depth);
        self.parent[shallowest.index()]
    }

    /// Ancestor chain of `u` starting at `u` itself and ending at the root.
    pub fn ancestors(&self, u: NodeId) -> Result<Ancestors<'_>, TaxonomyError> {
        self.check(u)?;
        Ok(self.ancestors_unchecked(u))
    }

    #[inline]
    pub(crate) fn ancestors_unchecked(&self, u: NodeId) -> Ancestors<'_> {
        Ancestors {
            tax: self,
            next: Some(u),
        }
    }

    /// Ancestors-or-self of `u` whose depth is at least `min_depth`, deepest first.
    pub fn ancestors_at_or_deeper(
        &self,
        u: NodeId,
        min_depth: f64,
    ) -> Result<Vec<NodeId>, TaxonomyError> {
        Ok(self
            .ancestors(u)?
            .take_while(|a| f64::from(self.depth[a.index()]) >= min_depth)
            .collect())
    }
}

/// Iterator over an ancestor chain, deepest first.
pub struct Ancestors<'a> {
    tax: &'a Taxonomy,
    next: Option<NodeId>,
}

impl Iterator for Ancestors<'_> {
    type Item = NodeId;

    #[inline]
    fn next(&mut self) -> Option<NodeId> {
        let cur = self.next?;
        self.next = if cur == self.tax.root {
            None
        } else {
            Some(self.tax.parent[cur.index()])
        };
        Some(cur)
    }
}

/// Min-depth sparse table over a node sequence.
#[derive(Debug, Clone)]
struct SparseTable {
    levels: Vec<Vec<NodeId>>,
}

impl SparseTable {
    fn new(order: &[NodeId], depth: &[u32]) -> Self {
        let n = order.len();
        let mut levels = vec![order.to_vec()];
        let mut width = 1;
        while 2 * width <= n {
            let prev = levels.last().unwrap();
            let next: Vec<NodeId> = (0..=n - 2 * width)
                .map(|i| {
                    let (a, b) = (prev[i], prev[i + width]);
                    if depth[b.index()] < depth[a.index()] {
                        b
                    } else {
                        a
                    }
                })
                .collect();
            levels.push(next);
            width *= 2;
        }
        Self { levels }
    }

    /// Shallowest node in positions `[lo, hi]`.
    #[inline]
    fn argmin(&self, lo: usize, hi: usize, depth: &[u32]) -> NodeId {
        debug_assert!(lo <= hi);
        let k = (usize::BITS - 1 - (hi - lo + 1).leading_zeros()) as usize;
        let row = &self.levels[k];
        let (a, b) = (row[lo], row[hi + 1 - (1 << k)]);
        if depth[b.index()] < depth[a.index()] {
            b
        } else {
            a
        }
    }
}
