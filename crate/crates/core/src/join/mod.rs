//! Filter-and-verify similarity join.
//!
//! Three stages: each collection gets its own inverted index of ancestor
//! keys; set pairs sharing a key are tallied for distinct similar node
//! pairs, with a length filter applied per posting pair; pairs tallied at
//! least `tau` times are verified with GTS.

mod index;
mod tally;

use std::time::Instant;

use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

pub use index::{build_index, phi_threshold, InvertedIndex, Posting};
pub use tally::CandidateTally;

use crate::similarity::{gts_unchecked, NodeSet, SimilarityError};
use crate::taxonomy::{NodeId, Taxonomy, TaxonomyError};

/// Collections at least this large are processed on the rayon pool.
pub(crate) const PARALLEL_MIN_RECORDS: usize = 2048;

/// Upper bound on `|S| * |T|` accepted by [`naive_join`].
pub const NAIVE_PAIR_LIMIT: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum JoinError {
    #[error("theta must lie in (0, 1], got {0}")]
    InvalidTheta(f64),
    #[error("tau must be a positive integer, got {0}")]
    InvalidTau(usize),
    #[error("tau = {tau} exceeds the set size {set_size}")]
    TauExceedsSetSize { tau: usize, set_size: usize },
    #[error("{pairs} pairs exceed the all-pairs limit of {limit}")]
    InstanceTooLarge { pairs: usize, limit: usize },
    #[error("collection of {0} records is too large")]
    TooManyRecords(usize),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
}

/// How distinct similar node pairs are counted per candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountMode {
    /// First-come bookkeeping: a node counts at most once, in arrival order.
    Greedy,
    /// Maximum bipartite matching over all discovered similar node pairs.
    #[default]
    Exact,
}

impl std::str::FromStr for CountMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "greedy" => Ok(Self::Greedy),
            "exact" => Ok(Self::Exact),
            other => Err(format!("unknown count mode `{other}` (expected greedy or exact)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JoinParams {
    pub theta: f64,
    pub tau: usize,
    pub count_mode: CountMode,
}

impl JoinParams {
    pub fn new(theta: f64, tau: usize, count_mode: CountMode) -> Result<Self, JoinError> {
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(JoinError::InvalidTheta(theta));
        }
        if tau == 0 {
            return Err(JoinError::InvalidTau(tau));
        }
        Ok(Self {
            theta,
            tau,
            count_mode,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JoinPair {
    pub s_index: usize,
    pub t_index: usize,
    pub s_id: String,
    pub t_id: String,
    pub gts: f64,
}

/// Work counters and stage timings of one join.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JoinStats {
    /// Posting-pair events examined while filtering.
    pub f_tau: u64,
    /// Distinct set pairs that received at least one tallied event.
    pub distinct_pairs: u64,
    /// Candidates sent to verification.
    pub v_tau: u64,
    pub result_count: u64,
    pub postings_s: u64,
    pub postings_t: u64,
    pub time_index_ms: f64,
    pub time_filter_ms: f64,
    pub time_verify_ms: f64,
}

impl JoinStats {
    pub fn total_ms(&self) -> f64 {
        self.time_index_ms + self.time_filter_ms + self.time_verify_ms
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JoinResult {
    /// Sorted by `(s_id, t_id)`.
    pub pairs: Vec<JoinPair>,
    pub stats: JoinStats,
}

impl JoinResult {
    /// `(s_id, t_id)` of every result pair.
    pub fn id_pairs(&self) -> Vec<(String, String)> {
        self.pairs
            .iter()
            .map(|p| (p.s_id.clone(), p.t_id.clone()))
            .collect()
    }
}

/// Length filter: `gts <= min/max`, so a pair whose size ratio is below
/// `theta` can never qualify. Evaluated as a ratio so it agrees bit-for-bit
/// with the bound on the verified value.
#[inline]
fn length_pruned(a: usize, b: usize, theta: f64) -> bool {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    (lo as f64) / (hi as f64) < theta
}

type Edges = SmallVec<[(NodeId, NodeId); 4]>;

#[inline]
fn pair_key(s: u32, t: u32) -> u64 {
    (u64::from(s) << 32) | u64::from(t)
}

struct FilterChunk {
    events: u64,
    evidence: FxHashMap<u64, Edges>,
}

fn filter_keys(
    keys: &[NodeId],
    index_s: &InvertedIndex,
    index_t: &InvertedIndex,
    sizes_s: &[usize],
    sizes_t: &[usize],
    theta: f64,
) -> FilterChunk {
    let mut events = 0u64;
    let mut evidence: FxHashMap<u64, Edges> = FxHashMap::default();
    for &g in keys {
        let (ls, lt) = (index_s.get(g), index_t.get(g));
        events += (ls.len() * lt.len()) as u64;
        for a in ls {
            let size_a = sizes_s[a.set as usize];
            for b in lt {
                if length_pruned(size_a, sizes_t[b.set as usize], theta) {
                    continue;
                }
                let edges = evidence.entry(pair_key(a.set, b.set)).or_default();
                let edge = (a.node, b.node);
                // One evidence edge per node pair, however many common ancestors.
                if !edges.contains(&edge) {
                    edges.push(edge);
                }
            }
        }
    }
    FilterChunk { events, evidence }
}

fn check_nodes<R: AsRef<NodeSet>>(tax: &Taxonomy, coll: &[R]) -> Result<(), JoinError> {
    for set in coll {
        for &n in set.as_ref().nodes() {
            tax.check(n)?;
        }
    }
    Ok(())
}

fn warn_on_large_tau<R: AsRef<NodeSet>>(s: &[R], t: &[R], tau: usize) {
    let mut sizes: Vec<usize> = s.iter().chain(t).map(|r| r.as_ref().len()).collect();
    if sizes.is_empty() {
        return;
    }
    let mid = sizes.len() / 2;
    let (_, median, _) = sizes.select_nth_unstable(mid);
    if tau > *median {
        log::warn!(
            "tau = {tau} exceeds the median set size {median}; smaller sets are never joined"
        );
    }
}

/// Taxonomic similarity join of `s_coll` against `t_coll`.
///
/// Sets with fewer than `tau` nodes are not indexed and never appear in the
/// output. Results are deterministic regardless of the rayon pool size.
pub fn ap_join<R>(
    tax: &Taxonomy,
    s_coll: &[R],
    t_coll: &[R],
    params: &JoinParams,
) -> Result<JoinResult, JoinError>
where
    R: AsRef<NodeSet> + Sync,
{
    let params = JoinParams::new(params.theta, params.tau, params.count_mode)?;
    check_nodes(tax, s_coll)?;
    check_nodes(tax, t_coll)?;
    warn_on_large_tau(s_coll, t_coll, params.tau);
    let parallel = s_coll.len().max(t_coll.len()) >= PARALLEL_MIN_RECORDS;

    let started = Instant::now();
    let index_s = build_index(tax, s_coll, &params)?;
    let index_t = build_index(tax, t_coll, &params)?;
    let time_index = started.elapsed();

    let started = Instant::now();
    let (small, large) = if index_s.key_count() <= index_t.key_count() {
        (&index_s, &index_t)
    } else {
        (&index_t, &index_s)
    };
    let mut keys: Vec<NodeId> = small
        .keys()
        .into_iter()
        .filter(|&g| large.contains_key(g))
        .collect();
    keys.sort_unstable();

    let sizes_s: Vec<usize> = s_coll.iter().map(|r| r.as_ref().len()).collect();
    let sizes_t: Vec<usize> = t_coll.iter().map(|r| r.as_ref().len()).collect();
    let run = |chunk: &[NodeId]| {
        filter_keys(chunk, &index_s, &index_t, &sizes_s, &sizes_t, params.theta)
    };
    let chunks: Vec<FilterChunk> = if parallel && keys.len() > 1 {
        let pieces = rayon::current_num_threads() * 8;
        let size = keys.len().div_ceil(pieces).max(1);
        keys.par_chunks(size).map(run).collect()
    } else {
        vec![run(&keys)]
    };

    // Merge in key order so every pair sees its evidence in the same
    // sequence no matter how the keys were chunked.
    let mut f_tau = 0u64;
    let mut chunks = chunks.into_iter();
    let first = chunks.next().unwrap_or(FilterChunk {
        events: 0,
        evidence: FxHashMap::default(),
    });
    f_tau += first.events;
    let mut evidence = first.evidence;
    for chunk in chunks {
        f_tau += chunk.events;
        for (key, edges) in chunk.evidence {
            let merged = evidence.entry(key).or_default();
            for e in edges {
                if !merged.contains(&e) {
                    merged.push(e);
                }
            }
        }
    }
    let distinct_pairs = evidence.len() as u64;

    let mut tallied: Vec<(u64, Edges)> = evidence.into_iter().collect();
    tallied.sort_unstable_by_key(|(k, _)| *k);
    let is_candidate = |(key, edges): &(u64, Edges)| -> Option<(u32, u32)> {
        if edges.len() < params.tau {
            return None;
        }
        let mut tally = CandidateTally::new(params.count_mode);
        for &(s, t) in edges {
            tally.count_occurrence(s, t);
        }
        (tally.occurrences() >= params.tau).then_some(((key >> 32) as u32, *key as u32))
    };
    let candidates: Vec<(u32, u32)> = if parallel {
        tallied.par_iter().filter_map(is_candidate).collect()
    } else {
        tallied.iter().filter_map(is_candidate).collect()
    };
    drop(tallied);
    let time_filter = started.elapsed();

    let started = Instant::now();
    let verify = |&(si, ti): &(u32, u32)| -> Option<JoinPair> {
        let (s, t) = (s_coll[si as usize].as_ref(), t_coll[ti as usize].as_ref());
        let g = gts_unchecked(tax, s, t);
        (g >= params.theta).then(|| JoinPair {
            s_index: si as usize,
            t_index: ti as usize,
            s_id: s.record_id().to_owned(),
            t_id: t.record_id().to_owned(),
            gts: g,
        })
    };
    let mut pairs: Vec<JoinPair> = if parallel {
        candidates.par_iter().filter_map(verify).collect()
    } else {
        candidates.iter().filter_map(verify).collect()
    };
    let time_verify = started.elapsed();
    sort_pairs(&mut pairs);

    let stats = JoinStats {
        f_tau,
        distinct_pairs,
        v_tau: candidates.len() as u64,
        result_count: pairs.len() as u64,
        postings_s: index_s.posting_count() as u64,
        postings_t: index_t.posting_count() as u64,
        time_index_ms: time_index.as_secs_f64() * 1e3,
        time_filter_ms: time_filter.as_secs_f64() * 1e3,
        time_verify_ms: time_verify.as_secs_f64() * 1e3,
    };
    Ok(JoinResult { pairs, stats })
}

fn sort_pairs(pairs: &mut [JoinPair]) {
    pairs.sort_unstable_by(|a, b| {
        (a.s_id.as_str(), a.t_id.as_str(), a.s_index, a.t_index).cmp(&(
            b.s_id.as_str(),
            b.t_id.as_str(),
            b.s_index,
            b.t_index,
        ))
    });
}

/// All-pairs GTS join; the reference answer for [`ap_join`].
pub fn naive_join<R>(
    tax: &Taxonomy,
    s_coll: &[R],
    t_coll: &[R],
    theta: f64,
) -> Result<JoinResult, JoinError>
where
    R: AsRef<NodeSet> + Sync,
{
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(JoinError::InvalidTheta(theta));
    }
    let total = s_coll.len().saturating_mul(t_coll.len());
    if total > NAIVE_PAIR_LIMIT {
        return Err(JoinError::InstanceTooLarge {
            pairs: total,
            limit: NAIVE_PAIR_LIMIT,
        });
    }
    check_nodes(tax, s_coll)?;
    check_nodes(tax, t_coll)?;

    let started = Instant::now();
    let mut pairs: Vec<JoinPair> = (0..s_coll.len())
        .into_par_iter()
        .flat_map_iter(|si| {
            let s = s_coll[si].as_ref();
            t_coll.iter().enumerate().filter_map(move |(ti, t)| {
                let t = t.as_ref();
                let g = gts_unchecked(tax, s, t);
                (g >= theta).then(|| JoinPair {
                    s_index: si,
                    t_index: ti,
                    s_id: s.record_id().to_owned(),
                    t_id: t.record_id().to_owned(),
                    gts: g,
                })
            })
        })
        .collect();
    let elapsed = started.elapsed();
    sort_pairs(&mut pairs);
    let stats = JoinStats {
        v_tau: total as u64,
        result_count: pairs.len() as u64,
        time_verify_ms: elapsed.as_secs_f64() * 1e3,
        ..JoinStats::default()
    };
    Ok(JoinResult { pairs, stats })
}
