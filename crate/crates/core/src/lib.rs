//! Taxonomy-aware set-similarity joins.
//!
//! Records are sets of taxonomy nodes. Two records are similar when the
//! best one-to-one pairing of their nodes, scored by the depth of each
//! pair's lowest common ancestor, averages at least `theta`. The join
//! prunes with an overlap constraint `tau`, and the [`tuner`] picks the
//! `tau` with the lowest estimated total cost from small random samples.

pub mod gen;
pub mod io;
pub mod join;
pub mod similarity;
pub mod taxonomy;
pub mod toy;
pub mod tuner;

pub use join::{ap_join, naive_join, CountMode, JoinParams, JoinResult, JoinStats};
pub use similarity::{assignment_max, gts, gts_brute, ts, NodeSet, WeightMatrix};
pub use taxonomy::{NodeId, Taxonomy, TaxonomyError};
pub use tuner::{suggest_tau, CostModel, SamplePlan, TunerConfig, TunerReport, UnitCosts};
