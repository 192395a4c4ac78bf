//! Small hand-built taxonomy with two three-node records.
//!
//! Expected values: `ts(Turin, Via Nizza) = 3/5`, `ts(latte, espresso) = 4/5`,
//! `ts(coffeehouse, bar) = 3/4`, and the two records have GTS `2.15 / 3`.

use crate::similarity::NodeSet;
use crate::taxonomy::Taxonomy;

/// `(child, parent)` edges.
pub const TOY_EDGES: &[(&str, &str)] = &[
    ("food and drink", "root"),
    ("drinks", "food and drink"),
    ("coffee drinks", "drinks"),
    ("latte", "coffee drinks"),
    ("espresso", "coffee drinks"),
    ("drinking establishments", "food and drink"),
    ("coffeehouse", "drinking establishments"),
    ("bar", "drinking establishments"),
    ("places", "root"),
    ("Turin", "places"),
    ("streets in Turin", "Turin"),
    ("Via Nizza", "streets in Turin"),
];

pub const TOY_LEFT: (&str, &[&str]) = ("left", &["coffeehouse", "latte", "Turin"]);
pub const TOY_RIGHT: (&str, &[&str]) = ("right", &["bar", "espresso", "Via Nizza"]);

pub struct ToyExample {
    pub tax: Taxonomy,
    pub left: NodeSet,
    pub right: NodeSet,
}

pub fn toy_example() -> ToyExample {
    let tax = Taxonomy::from_edges(TOY_EDGES.iter().copied()).expect("toy taxonomy is valid");
    let record = |(id, labels): (&str, &[&str])| {
        NodeSet::new(id, labels.iter().map(|l| tax.node(l).expect("known label")))
            .expect("non-empty record")
    };
    let left = record(TOY_LEFT);
    let right = record(TOY_RIGHT);
    ToyExample { tax, left, right }
}
