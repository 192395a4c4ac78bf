//! Sampling-based choice of the overlap constraint `tau`.
//!
//! Each iteration draws an independent Bernoulli sample from both
//! collections, runs the join on it once per candidate `tau`, scales the
//! observed filtering and candidate counts up to the full collections and
//! prices them with per-pair unit costs. Per-`tau` confidence intervals on
//! that estimated cost are refined until the residual overlap between the
//! best `tau` and the rest costs less than one more iteration.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::join::{ap_join, CountMode, JoinError, JoinParams};
use crate::similarity::NodeSet;
use crate::taxonomy::Taxonomy;

/// Expected records per side in one sample.
pub const DEFAULT_SAMPLE_TARGET: usize = 100;

/// Unit costs used before any timed pair has been observed.
const FALLBACK_COSTS: CostModel = CostModel {
    t_f: 1e-7,
    t_v: 1e-5,
};

#[derive(Debug, Error)]
pub enum TunerError {
    #[error("stopping check needs at least 2 iterations per tau, tau = {tau} has {n}")]
    InsufficientIterations { tau: usize, n: u64 },
    #[error("sampling probability {0} is outside (0, 1]")]
    InvalidProbability(f64),
    #[error("the tau universe is empty")]
    EmptyUniverse,
    #[error("burn-in must be at least 2, got {0}")]
    BurnInTooShort(u64),
    #[error("t quantile must be positive, got {0}")]
    InvalidQuantile(f64),
    #[error("confidence must lie in (0, 1), got {0}")]
    InvalidConfidence(f64),
    #[error("max_iterations must be positive")]
    NoIterations,
    #[error("unit costs must be positive and finite")]
    InvalidCosts,
    #[error(transparent)]
    Join(#[from] JoinError),
}

/// Seconds per filtering pair and per verified candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    #[serde(rename = "t_F")]
    pub t_f: f64,
    #[serde(rename = "t_V")]
    pub t_v: f64,
}

impl CostModel {
    pub fn new(t_f: f64, t_v: f64) -> Result<Self, TunerError> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if ok(t_f) && ok(t_v) {
            Ok(Self { t_f, t_v })
        } else {
            Err(TunerError::InvalidCosts)
        }
    }
}

/// Where the unit costs come from.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum UnitCosts {
    /// Refreshed every iteration from the timings of all trials so far.
    #[default]
    Measured,
    /// Held constant; makes the suggestion independent of wall-clock noise.
    Fixed(CostModel),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub p_s: f64,
    pub p_t: f64,
    /// Sample pairs returned by [`draw_samples`]; the tuner itself draws lazily.
    pub k: usize,
    pub seed: u64,
}

impl SamplePlan {
    pub fn new(p_s: f64, p_t: f64, k: usize, seed: u64) -> Result<Self, TunerError> {
        for p in [p_s, p_t] {
            if !(p > 0.0 && p <= 1.0) {
                return Err(TunerError::InvalidProbability(p));
            }
        }
        Ok(Self { p_s, p_t, k, seed })
    }

    /// Probabilities giving an expected `target` records per side.
    pub fn for_target(target: usize, n_s: usize, n_t: usize, k: usize, seed: u64) -> Self {
        let p = |n: usize| {
            if n == 0 {
                1.0
            } else {
                (target.max(1) as f64 / n as f64).min(1.0)
            }
        };
        Self {
            p_s: p(n_s),
            p_t: p(n_t),
            k,
            seed,
        }
    }
}

/// Running statistics of the estimated total cost for one `tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauStats {
    pub tau: usize,
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl TauStats {
    pub fn new(tau: usize) -> Self {
        Self {
            tau,
            n: 0,
            mean: 0.0,
            m2: 0.0,
            ci_low: 0.0,
            ci_high: 0.0,
        }
    }

    /// Sample variance; zero below two observations.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }
}

/// Welford update with `c_hat`, then `mean -/+ t_star * sqrt(var / n)`.
pub fn update_stats(stats: TauStats, c_hat: f64, t_star: f64) -> TauStats {
    let mut s = stats;
    s.n += 1;
    let delta = c_hat - s.mean;
    s.mean += delta / s.n as f64;
    s.m2 += delta * (c_hat - s.mean);
    let half = if s.n >= 2 {
        t_star * (s.variance() / s.n as f64).sqrt()
    } else {
        0.0
    };
    s.ci_low = s.mean - half;
    s.ci_high = s.mean + half;
    s
}

/// Student-t quantile used for the confidence intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TQuantile {
    Fixed(f64),
    /// Two-sided `confidence` quantile recomputed for `n - 1` degrees of freedom.
    PerDf { confidence: f64 },
}

impl TQuantile {
    fn validate(&self) -> Result<(), TunerError> {
        match *self {
            Self::Fixed(t) if !(t > 0.0 && t.is_finite()) => Err(TunerError::InvalidQuantile(t)),
            Self::PerDf { confidence } if !(confidence > 0.0 && confidence < 1.0) => {
                Err(TunerError::InvalidConfidence(confidence))
            }
            _ => Ok(()),
        }
    }

    /// Quantile for a sample of `n` observations.
    pub fn value(&self, n: u64) -> f64 {
        match *self {
            Self::Fixed(t) => t,
            Self::PerDf { confidence } => {
                let df = n.saturating_sub(1).max(1) as f64;
                StudentsT::new(0.0, 1.0, df)
                    .expect("positive degrees of freedom")
                    .inverse_cdf(0.5 + confidence / 2.0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TunerConfig {
    pub tau_universe: Vec<usize>,
    /// Burn-in: the stopping check is not consulted before this many iterations.
    pub n_star: u64,
    pub t_star: TQuantile,
    pub max_iterations: u64,
    pub theta: f64,
    pub count_mode: CountMode,
    pub unit_costs: UnitCosts,
}

impl TunerConfig {
    pub fn new(theta: f64) -> Self {
        Self {
            tau_universe: (1..=5).collect(),
            n_star: 10,
            t_star: TQuantile::Fixed(1.036),
            max_iterations: 1000,
            theta,
            count_mode: CountMode::Exact,
            unit_costs: UnitCosts::Measured,
        }
    }

    fn validate(&self) -> Result<(), TunerError> {
        if self.tau_universe.is_empty() {
            return Err(TunerError::EmptyUniverse);
        }
        if let Some(&t) = self.tau_universe.iter().find(|&&t| t == 0) {
            return Err(JoinError::InvalidTau(t).into());
        }
        if self.n_star < 2 {
            return Err(TunerError::BurnInTooShort(self.n_star));
        }
        if self.max_iterations == 0 {
            return Err(TunerError::NoIterations);
        }
        if let UnitCosts::Fixed(c) = self.unit_costs {
            CostModel::new(c.t_f, c.t_v)?;
        }
        self.t_star.validate()?;
        JoinParams::new(self.theta, 1, self.count_mode)?;
        Ok(())
    }
}

/// One sample pair: member indices into each collection, ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplePair {
    pub s: Vec<usize>,
    pub t: Vec<usize>,
}

fn bernoulli(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if p >= 1.0 {
        return (0..n).collect();
    }
    (0..n).filter(|_| rng.random_bool(p)).collect()
}

/// Sample pair number `i` of `plan`; each pair uses its own random stream.
pub fn draw_sample_pair(n_s: usize, n_t: usize, plan: &SamplePlan, i: u64) -> SamplePair {
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    rng.set_stream(i);
    let s = bernoulli(n_s, plan.p_s, &mut rng);
    let t = bernoulli(n_t, plan.p_t, &mut rng);
    SamplePair { s, t }
}

/// The first `plan.k` independent sample pairs.
pub fn draw_samples<'a, R>(
    s_coll: &'a [R],
    t_coll: &'a [R],
    plan: &SamplePlan,
) -> Vec<(Vec<&'a R>, Vec<&'a R>)> {
    (0..plan.k as u64)
        .map(|i| {
            let pair = draw_sample_pair(s_coll.len(), t_coll.len(), plan, i);
            (
                pair.s.iter().map(|&j| &s_coll[j]).collect(),
                pair.t.iter().map(|&j| &t_coll[j]).collect(),
            )
        })
        .collect()
}

/// Counts and stage timings of one join on a sample pair. Index time is
/// included in the filtering time.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Trial {
    pub f_prime: u64,
    pub v_prime: u64,
    pub elapsed_f: f64,
    pub elapsed_v: f64,
}

pub fn run_trial<R>(
    tax: &Taxonomy,
    s_sample: &[R],
    t_sample: &[R],
    theta: f64,
    tau: usize,
    count_mode: CountMode,
) -> Result<Trial, TunerError>
where
    R: AsRef<NodeSet> + Sync,
{
    let params = JoinParams::new(theta, tau, count_mode)?;
    if s_sample.is_empty() || t_sample.is_empty() {
        return Ok(Trial::default());
    }
    let r = ap_join(tax, s_sample, t_sample, &params)?;
    Ok(Trial {
        f_prime: r.stats.f_tau,
        v_prime: r.stats.v_tau,
        elapsed_f: (r.stats.time_index_ms + r.stats.time_filter_ms) / 1e3,
        elapsed_v: r.stats.time_verify_ms / 1e3,
    })
}

/// Estimated full-join cost in seconds from sample counts.
pub fn scale_estimate(f_prime: u64, v_prime: u64, plan: &SamplePlan, costs: &CostModel) -> f64 {
    let scale = plan.p_s * plan.p_t;
    (costs.t_f * f_prime as f64 + costs.t_v * v_prime as f64) / scale
}

/// Index of the entry with the smallest mean; ties go to the smallest `tau`.
fn best(stats: &[TauStats]) -> usize {
    let mut b = 0;
    for (i, s) in stats.iter().enumerate().skip(1) {
        let cur = &stats[b];
        if s.mean < cur.mean || (s.mean == cur.mean && s.tau < cur.tau) {
            b = i;
        }
    }
    b
}

/// True once the summed overlap of the best interval with every other one
/// costs less than another round of filtering (`t_f * sum F'`).
pub fn stopping_check(stats: &[TauStats], f_primes: &[u64], t_f: f64) -> Result<bool, TunerError> {
    if let Some(s) = stats.iter().find(|s| s.n < 2) {
        return Err(TunerError::InsufficientIterations { tau: s.tau, n: s.n });
    }
    if stats.is_empty() {
        return Err(TunerError::EmptyUniverse);
    }
    let b = best(stats);
    let upper = stats[b].ci_high;
    let overlap: f64 = stats
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != b)
        .map(|(_, s)| (upper - s.ci_low).max(0.0))
        .sum();
    let budget = t_f * f_primes.iter().map(|&f| f as f64).sum::<f64>();
    Ok(overlap == 0.0 || overlap < budget)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Criterion,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauReport {
    pub tau: usize,
    pub n: u64,
    pub mean_cost_s: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunerReport {
    pub tau: usize,
    pub iterations: u64,
    pub stopped_by: StopReason,
    pub per_tau: Vec<TauReport>,
    pub calibrated: CostModel,
    pub p_s: f64,
    pub p_t: f64,
    pub seed: u64,
    /// Index construction time is counted as filtering time.
    pub index_time_in_filter: bool,
    pub tuner_time_s: f64,
}

/// Ratio-of-sums unit costs over every trial so far.
#[derive(Debug, Default)]
struct Calibration {
    time_f: f64,
    pairs_f: u64,
    time_v: f64,
    pairs_v: u64,
}

impl Calibration {
    fn add(&mut self, t: &Trial) {
        self.time_f += t.elapsed_f;
        self.pairs_f += t.f_prime;
        self.time_v += t.elapsed_v;
        self.pairs_v += t.v_prime;
    }

    fn costs(&self, prev: CostModel) -> CostModel {
        let per = |time: f64, n: u64, fallback: f64| {
            if n == 0 || time <= 0.0 {
                fallback
            } else {
                time / n as f64
            }
        };
        CostModel {
            t_f: per(self.time_f, self.pairs_f, prev.t_f),
            t_v: per(self.time_v, self.pairs_v, prev.t_v),
        }
    }
}

/// Runs the refinement loop and returns the suggested `tau` with its report.
pub fn suggest_tau<R>(
    tax: &Taxonomy,
    s_coll: &[R],
    t_coll: &[R],
    config: &TunerConfig,
    plan: &SamplePlan,
) -> Result<TunerReport, TunerError>
where
    R: AsRef<NodeSet> + Sync,
{
    let started = Instant::now();
    config.validate()?;
    SamplePlan::new(plan.p_s, plan.p_t, plan.k, plan.seed)?;
    let mut universe = config.tau_universe.clone();
    universe.sort_unstable();
    universe.dedup();

    let mut stats: Vec<TauStats> = universe.iter().map(|&t| TauStats::new(t)).collect();
    let mut costs = match config.unit_costs {
        UnitCosts::Fixed(c) => c,
        UnitCosts::Measured => FALLBACK_COSTS,
    };
    let mut calibration = Calibration::default();
    let mut f_primes = vec![0u64; universe.len()];
    let mut trials = vec![Trial::default(); universe.len()];
    let mut iterations = 0;
    let stopped_by = loop {
        iterations += 1;
        let pair = draw_sample_pair(s_coll.len(), t_coll.len(), plan, iterations);
        let s: Vec<&R> = pair.s.iter().map(|&j| &s_coll[j]).collect();
        let t: Vec<&R> = pair.t.iter().map(|&j| &t_coll[j]).collect();
        // Trials run one after another so that their timings do not contend.
        for (slot, &tau) in universe.iter().enumerate() {
            trials[slot] = run_trial(tax, &s, &t, config.theta, tau, config.count_mode)?;
        }
        if config.unit_costs == UnitCosts::Measured {
            trials.iter().for_each(|tr| calibration.add(tr));
            costs = calibration.costs(costs);
        }
        for (slot, tr) in trials.iter().enumerate() {
            let c_hat = scale_estimate(tr.f_prime, tr.v_prime, plan, &costs);
            let q = config.t_star.value(stats[slot].n + 1);
            stats[slot] = update_stats(stats[slot], c_hat, q);
            f_primes[slot] = tr.f_prime;
        }
        log::debug!(
            "tuner iteration {iterations}: sample {}x{}, means {:?}",
            s.len(),
            t.len(),
            stats.iter().map(|s| s.mean).collect::<Vec<_>>()
        );
        if iterations >= config.n_star && stopping_check(&stats, &f_primes, costs.t_f)? {
            break StopReason::Criterion;
        }
        if iterations >= config.max_iterations {
            log::warn!("tuner stopped at the iteration cap of {}", config.max_iterations);
            break StopReason::MaxIterations;
        }
    };

    let tau = stats[best(&stats)].tau;
    Ok(TunerReport {
        tau,
        iterations,
        stopped_by,
        per_tau: stats
            .iter()
            .map(|s| TauReport {
                tau: s.tau,
                n: s.n,
                mean_cost_s: s.mean,
                ci_low: s.ci_low,
                ci_high: s.ci_high,
            })
            .collect(),
        calibrated: costs,
        p_s: plan.p_s,
        p_t: plan.p_t,
        seed: plan.seed,
        index_time_in_filter: true,
        tuner_time_s: started.elapsed().as_secs_f64(),
    })
}
