//! Seeded synthetic taxonomies and record collections.
//!
//! Records are drawn with subtree locality: a pool of prototype node sets
//! is sampled from small topic subtrees, and every record perturbs one
//! prototype by swapping some nodes for siblings or cousins and a few for
//! globally popular nodes. Files generated from the same pool share
//! prototypes, so joins between them have non-trivial result sets.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::similarity::NodeSet;
use crate::taxonomy::Taxonomy;

#[derive(Debug, Error, PartialEq)]
pub enum GenError {
    #[error("taxonomy needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("fanout must be at least 1")]
    ZeroFanout,
    #[error("depth must be at least 2, got {0}")]
    TooShallow(usize),
    #[error("set size range {0}..={1} is empty or starts at zero")]
    BadSetSize(usize, usize),
    #[error("{0} must lie in [0, 1]")]
    BadProbability(&'static str),
    #[error("record count must be positive")]
    NoRecords,
    #[error("mean cluster size must be at least 1")]
    BadClusterSize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeShape {
    pub nodes: usize,
    /// Mean number of children of an internal node.
    pub fanout: usize,
    /// Maximum depth, root at depth 1.
    pub depth: usize,
}

/// Generated tree with `c<i>` labels; node 0 is the root.
#[derive(Debug, Clone)]
pub struct SyntheticTree {
    parent: Vec<Option<u32>>,
    depth: Vec<u32>,
    children: Vec<Vec<u32>>,
}

impl SyntheticTree {
    pub fn generate(shape: TreeShape, seed: u64) -> Result<Self, GenError> {
        if shape.nodes < 2 {
            return Err(GenError::TooFewNodes(shape.nodes));
        }
        if shape.fanout == 0 {
            return Err(GenError::ZeroFanout);
        }
        if shape.depth < 2 {
            return Err(GenError::TooShallow(shape.depth));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tree = Self {
            parent: vec![None],
            depth: vec![1],
            children: vec![Vec::new()],
        };
        let mut frontier = std::collections::VecDeque::from([0u32]);
        while tree.len() < shape.nodes {
            let u = match frontier.pop_front() {
                Some(u) => u,
                // The breadth-first pass ran dry: grow from a random node that
                // still has room below it.
                None => loop {
                    let u = rng.random_range(0..tree.len() as u32);
                    if (tree.depth[u as usize] as usize) < shape.depth {
                        break u;
                    }
                },
            };
            if tree.depth[u as usize] as usize >= shape.depth {
                continue;
            }
            let k = rng.random_range(0..=2 * shape.fanout);
            for _ in 0..k.min(shape.nodes - tree.len()) {
                let c = tree.push_child(u);
                frontier.push_back(c);
            }
        }
        Ok(tree)
    }

    fn push_child(&mut self, parent: u32) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(Some(parent));
        self.depth.push(self.depth[parent as usize] + 1);
        self.children.push(Vec::new());
        self.children[parent as usize].push(id);
        id
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn label(i: u32) -> String {
        format!("c{i}")
    }

    /// `(child, parent)` label pairs in id order.
    pub fn edges(&self) -> Vec<(String, String)> {
        self.parent
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.map(|p| (Self::label(i as u32), Self::label(p))))
            .collect()
    }

    pub fn taxonomy(&self) -> Taxonomy {
        Taxonomy::from_edges(self.edges()).expect("generated trees are valid")
    }

    pub fn height(&self) -> u32 {
        self.depth.iter().copied().max().unwrap_or(1)
    }

    fn subtree(&self, root: u32, limit: usize) -> Vec<u32> {
        let mut out = Vec::new();
        let mut stack = vec![root];
        while let Some(u) = stack.pop() {
            out.push(u);
            if out.len() >= limit {
                break;
            }
            stack.extend(self.children[u as usize].iter().rev());
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordShape {
    pub records: usize,
    pub set_size: (usize, usize),
    /// Mean number of records per prototype in one file.
    pub cluster_size: f64,
    /// Chance that a prototype node is kept verbatim.
    pub keep: f64,
    /// Chance that a node is replaced by a globally popular node.
    pub noise: f64,
    /// Size of the popular-node pool, drawn with a 1/rank law. Grows with
    /// the record count by default so that popular keys do not dominate.
    pub popular: usize,
}

impl RecordShape {
    pub fn new(records: usize, set_size: (usize, usize)) -> Self {
        Self {
            records,
            set_size,
            cluster_size: 8.0,
            keep: 0.7,
            noise: 0.05,
            popular: (records / 20).max(50),
        }
    }

    fn validate(&self) -> Result<(), GenError> {
        if self.records == 0 {
            return Err(GenError::NoRecords);
        }
        let (lo, hi) = self.set_size;
        if lo == 0 || lo > hi {
            return Err(GenError::BadSetSize(lo, hi));
        }
        for (name, p) in [("keep", self.keep), ("noise", self.noise)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(GenError::BadProbability(name));
            }
        }
        if self.cluster_size < 1.0 || self.cluster_size.is_nan() {
            return Err(GenError::BadClusterSize);
        }
        Ok(())
    }
}

/// Generated record: identifier plus node labels.
pub type LabeledRecord = (String, Vec<String>);

/// Prototype pool shared by every file generated from one seed.
pub struct RecordGenerator<'a> {
    tree: &'a SyntheticTree,
    shape: RecordShape,
    prototypes: Vec<Vec<u32>>,
    popular: Vec<u32>,
    popular_cdf: Vec<f64>,
    seed: u64,
}

impl<'a> RecordGenerator<'a> {
    pub fn new(tree: &'a SyntheticTree, shape: RecordShape, seed: u64) -> Result<Self, GenError> {
        shape.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pool = ((shape.records as f64 / shape.cluster_size).ceil() as usize).max(1);

        let leaves: Vec<u32> = (0..tree.len() as u32)
            .filter(|&u| tree.children[u as usize].is_empty())
            .collect();

        let mut prototypes = Vec::with_capacity(pool);
        for _ in 0..pool {
            let size = rng.random_range(shape.set_size.0..=shape.set_size.1);
            // Climb from a leaf until the topic subtree is roomy enough.
            let mut topic = *leaves.choose(&mut rng).expect("a tree has leaves");
            let mut nodes = tree.subtree(topic, 4 * size);
            while nodes.len() < 2 * size {
                match tree.parent[topic as usize] {
                    Some(p) => topic = p,
                    None => break,
                }
                nodes = tree.subtree(topic, 4 * size);
            }
            let mut proto: Vec<u32> = nodes
                .choose_multiple(&mut rng, size.min(nodes.len()))
                .copied()
                .collect();
            while proto.len() < size {
                proto.push(rng.random_range(0..tree.len() as u32));
            }
            prototypes.push(proto);
        }

        let popular: Vec<u32> = (0..shape.popular.max(1))
            .map(|_| rng.random_range(1..tree.len() as u32))
            .collect();
        let mut acc = 0.0;
        let mut popular_cdf: Vec<f64> = (1..=popular.len())
            .map(|r| {
                acc += 1.0 / r as f64;
                acc
            })
            .collect();
        for c in &mut popular_cdf {
            *c /= acc;
        }

        Ok(Self {
            tree,
            shape,
            prototypes,
            popular,
            popular_cdf,
            seed,
        })
    }

    /// Records of file number `file`, with ids `<prefix><n>`.
    pub fn file(&self, file: u64, prefix: &str) -> Vec<LabeledRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(file + 1);
        (0..self.shape.records)
            .map(|n| {
                let proto = self.prototypes.choose(&mut rng).unwrap();
                let nodes = self.perturb(proto, &mut rng);
                (
                    format!("{prefix}{n}"),
                    nodes.into_iter().map(SyntheticTree::label).collect(),
                )
            })
            .collect()
    }

    fn perturb(&self, proto: &[u32], rng: &mut ChaCha8Rng) -> Vec<u32> {
        let tree = self.tree;
        let mut out: Vec<u32> = Vec::with_capacity(proto.len() + 1);
        for &u in proto {
            let v = if rng.random_bool(self.shape.noise) {
                let x: f64 = rng.random();
                let r = self.popular_cdf.partition_point(|&c| c < x);
                self.popular[r.min(self.popular.len() - 1)]
            } else if rng.random_bool(self.shape.keep) {
                u
            } else {
                // Sibling, or cousin one level further out.
                let up = if rng.random_bool(0.7) { 1 } else { 2 };
                let mut a = u;
                for _ in 0..up {
                    a = tree.parent[a as usize].unwrap_or(a);
                }
                let mut v = a;
                while tree.depth[v as usize] < tree.depth[u as usize] {
                    match tree.children[v as usize].choose(rng) {
                        Some(&c) => v = c,
                        None => break,
                    }
                }
                v
            };
            if !out.contains(&v) {
                out.push(v);
            }
        }
        let (lo, hi) = self.shape.set_size;
        if out.len() > lo && rng.random_bool(0.15) {
            out.remove(rng.random_range(0..out.len()));
        } else if out.len() < hi && rng.random_bool(0.15) {
            let extra = rng.random_range(1..tree.len() as u32);
            if !out.contains(&extra) {
                out.push(extra);
            }
        }
        while out.len() < lo {
            let extra = rng.random_range(0..tree.len() as u32);
            if !out.contains(&extra) {
                out.push(extra);
            }
        }
        out
    }
}

/// Resolves labeled records against `tax`; unknown labels are skipped.
pub fn to_node_sets(tax: &Taxonomy, records: &[LabeledRecord]) -> Vec<NodeSet> {
    records
        .iter()
        .filter_map(|(id, labels)| NodeSet::new(id.clone(), labels.iter().filter_map(|l| tax.node(l))).ok())
        .collect()
}

/// One seeded synthetic join instance.
pub struct Instance {
    pub tax: Taxonomy,
    pub left: Vec<NodeSet>,
    pub right: Vec<NodeSet>,
}

impl Instance {
    pub fn generate(tree: TreeShape, records: RecordShape, seed: u64) -> Result<Self, GenError> {
        let synthetic = SyntheticTree::generate(tree, seed)?;
        let tax = synthetic.taxonomy();
        let gen = RecordGenerator::new(&synthetic, records, seed.wrapping_add(1))?;
        let left = to_node_sets(&tax, &gen.file(0, "s"));
        let right = to_node_sets(&tax, &gen.file(1, "t"));
        Ok(Self { tax, left, right })
    }
}
