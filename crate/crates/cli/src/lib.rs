//! Subcommands behind the `taxojoin` binary.
//!
//! Every command takes its inputs from files, writes data to files or
//! standard output, and reports failures as [`CliError`], whose
//! [`CliError::exit_code`] separates bad input files (1) from bad
//! configuration (2).

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use taxojoin::gen::{RecordGenerator, RecordShape, SyntheticTree, TreeShape};
use taxojoin::io::{read_records_path, write_edges, write_labeled, write_results, RecordsError};
use taxojoin::join::JoinError;
use taxojoin::tuner::{
    suggest_tau, CostModel, SamplePlan, TQuantile, TunerConfig, TunerError, TunerReport, UnitCosts,
};
use taxojoin::{ap_join, CountMode, JoinParams, JoinStats, NodeSet, Taxonomy, TaxonomyError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Taxonomy { path: PathBuf, source: TaxonomyError },
    #[error("{path}: {source}")]
    Records { path: PathBuf, source: RecordsError },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Write { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Join(#[from] JoinError),
    #[error(transparent)]
    Tuner(#[from] TunerError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Join(e) if is_config_error(e) => 2,
            Self::Tuner(TunerError::Join(e)) if is_config_error(e) => 2,
            Self::Tuner(TunerError::Join(_)) | Self::Join(_) => 1,
            Self::Tuner(_) => 2,
            Self::Taxonomy { .. } | Self::Records { .. } | Self::Write { .. } => 1,
        }
    }
}

fn is_config_error(e: &JoinError) -> bool {
    matches!(e, JoinError::InvalidTheta(_) | JoinError::InvalidTau(_))
}

fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// `tau` as given on the command line: a number or `auto`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TauChoice {
    Fixed(usize),
    Auto,
}

impl FromStr for TauChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Self::Auto);
        }
        match s.parse::<usize>() {
            Ok(0) | Err(_) => Err(format!("expected a positive integer or `auto`, got `{s}`")),
            Ok(t) => Ok(Self::Fixed(t)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub taxonomy_path: PathBuf,
    pub left_path: PathBuf,
    pub right_path: PathBuf,
    pub theta: f64,
    pub tau: TauChoice,
    pub count_mode: CountMode,
    /// Student-t quantile `t*` for the tuner's intervals.
    pub confidence: f64,
    /// When set, the quantile is recomputed per degrees of freedom at this
    /// two-sided confidence level instead of using `confidence`.
    pub per_df_confidence: Option<f64>,
    pub burn_in: u64,
    pub sample_size: usize,
    pub seed: u64,
    pub threads: usize,
    pub output_path: Option<PathBuf>,
    pub stats_path: Option<PathBuf>,
    pub tau_universe: Vec<usize>,
    pub max_iterations: u64,
    /// Fixed `(t_F, t_V)` instead of measured unit costs.
    pub unit_costs: Option<(f64, f64)>,
}

impl RunConfig {
    pub fn new(
        taxonomy_path: impl Into<PathBuf>,
        left_path: impl Into<PathBuf>,
        right_path: impl Into<PathBuf>,
        theta: f64,
        tau: TauChoice,
    ) -> Self {
        Self {
            taxonomy_path: taxonomy_path.into(),
            left_path: left_path.into(),
            right_path: right_path.into(),
            theta,
            tau,
            count_mode: CountMode::Exact,
            confidence: 1.036,
            per_df_confidence: None,
            burn_in: 10,
            sample_size: taxojoin::tuner::DEFAULT_SAMPLE_TARGET,
            seed: 0,
            threads: 1,
            output_path: None,
            stats_path: None,
            tau_universe: (1..=5).collect(),
            max_iterations: 1000,
            unit_costs: None,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(config(format!("--theta must lie in (0, 1], got {}", self.theta)));
        }
        if self.sample_size == 0 {
            return Err(config("--sample-size must be at least 1"));
        }
        if self.threads == 0 {
            return Err(config("--threads must be at least 1"));
        }
        if self.burn_in < 2 {
            return Err(config("--burn-in must be at least 2"));
        }
        if !(self.confidence > 0.0 && self.confidence.is_finite()) {
            return Err(config("--confidence must be a positive t quantile"));
        }
        if let Some(c) = self.per_df_confidence {
            if !(c > 0.0 && c < 1.0) {
                return Err(config("--t-per-df must lie in (0, 1)"));
            }
        }
        if self.tau_universe.is_empty() || self.tau_universe.contains(&0) {
            return Err(config("--tau-universe must list positive integers"));
        }
        if self.max_iterations == 0 {
            return Err(config("--max-iterations must be positive"));
        }
        if let Some((f, v)) = self.unit_costs {
            CostModel::new(f, v).map_err(|_| config("--unit-costs must be two positive numbers"))?;
        }
        Ok(())
    }

    fn tuner_config(&self) -> TunerConfig {
        let mut cfg = TunerConfig::new(self.theta);
        cfg.tau_universe = self.tau_universe.clone();
        cfg.n_star = self.burn_in;
        cfg.t_star = match self.per_df_confidence {
            Some(confidence) => TQuantile::PerDf { confidence },
            None => TQuantile::Fixed(self.confidence),
        };
        cfg.max_iterations = self.max_iterations;
        cfg.count_mode = self.count_mode;
        cfg.unit_costs = match self.unit_costs {
            Some((t_f, t_v)) => UnitCosts::Fixed(CostModel { t_f, t_v }),
            None => UnitCosts::Measured,
        };
        cfg
    }

    fn pool(&self) -> Result<rayon::ThreadPool, CliError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(|e| config(format!("cannot start {} worker threads: {e}", self.threads)))
    }
}

/// Taxonomy and both record collections.
pub struct Inputs {
    pub tax: Taxonomy,
    pub left: Vec<NodeSet>,
    pub right: Vec<NodeSet>,
}

pub fn load_inputs(cfg: &RunConfig) -> Result<Inputs, CliError> {
    let tax = Taxonomy::from_path(&cfg.taxonomy_path).map_err(|source| CliError::Taxonomy {
        path: cfg.taxonomy_path.clone(),
        source,
    })?;
    let records = |path: &Path| {
        read_records_path(&tax, path).map_err(|source| CliError::Records {
            path: path.to_owned(),
            source,
        })
    };
    let left = records(&cfg.left_path)?;
    let right = records(&cfg.right_path)?;
    log::info!(
        "loaded {} taxonomy nodes, {} left and {} right records",
        tax.node_count(),
        left.len(),
        right.len()
    );
    Ok(Inputs { tax, left, right })
}

fn run_tuner(cfg: &RunConfig, inputs: &Inputs) -> Result<TunerReport, CliError> {
    let plan = SamplePlan::for_target(
        cfg.sample_size,
        inputs.left.len(),
        inputs.right.len(),
        0,
        cfg.seed,
    );
    let report = suggest_tau(&inputs.tax, &inputs.left, &inputs.right, &cfg.tuner_config(), &plan)?;
    log::info!(
        "tuner chose tau = {} after {} iterations ({:?})",
        report.tau,
        report.iterations,
        report.stopped_by
    );
    Ok(report)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|source| CliError::Write {
        path: path.to_owned(),
        source,
    })
}

/// Runs `write` against `path`, or standard output when `path` is `None`.
fn emit<F>(path: Option<&Path>, write: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    match path {
        Some(p) => {
            let mut w = create(p)?;
            write(&mut w).and_then(|_| w.flush()).map_err(|source| CliError::Write {
                path: p.to_owned(),
                source,
            })
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock).map_err(|source| CliError::Write {
                path: PathBuf::from("<stdout>"),
                source,
            })
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    emit(Some(path), |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(io::Error::from)?;
        writeln!(w)
    })
}

/// Contents of the join stats file.
#[derive(Debug, Clone, Serialize)]
pub struct JoinReport {
    pub theta: f64,
    pub tau: usize,
    pub count_mode: CountMode,
    #[serde(flatten)]
    pub stats: JoinStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tuner: Option<TunerReport>,
}

pub fn cmd_join(cfg: &RunConfig) -> Result<JoinReport, CliError> {
    cfg.validate()?;
    let pool = cfg.pool()?;
    let inputs = load_inputs(cfg)?;
    pool.install(|| {
        let (tau, tuner) = match cfg.tau {
            TauChoice::Fixed(t) => (t, None),
            TauChoice::Auto => {
                let report = run_tuner(cfg, &inputs)?;
                (report.tau, Some(report))
            }
        };
        let params = JoinParams::new(cfg.theta, tau, cfg.count_mode)?;
        let result = ap_join(&inputs.tax, &inputs.left, &inputs.right, &params)?;
        log::info!(
            "tau = {tau}: {} results from {} candidates in {:.1} ms",
            result.stats.result_count,
            result.stats.v_tau,
            result.stats.total_ms()
        );
        emit(cfg.output_path.as_deref(), |w| write_results(&result.pairs, w))?;
        let report = JoinReport {
            theta: cfg.theta,
            tau,
            count_mode: cfg.count_mode,
            stats: result.stats,
            tuner,
        };
        if let Some(p) = &cfg.stats_path {
            write_json(p, &report)?;
        }
        Ok(report)
    })
}

/// Prints the chosen `tau` and writes the report to `output_path` if set.
pub fn cmd_tune(cfg: &RunConfig) -> Result<TunerReport, CliError> {
    cfg.validate()?;
    let pool = cfg.pool()?;
    let inputs = load_inputs(cfg)?;
    let report = pool.install(|| run_tuner(cfg, &inputs))?;
    emit(None, |w| writeln!(w, "{}", report.tau))?;
    for path in [&cfg.output_path, &cfg.stats_path].into_iter().flatten() {
        write_json(path, &report)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub theta: f64,
    pub tau: usize,
    pub f_pairs: u64,
    pub candidates: u64,
    pub results: u64,
    pub time_ms: f64,
}

/// One full join per `(theta, tau)` cell; CSV to `output_path` or stdout.
pub fn cmd_bench(cfg: &RunConfig, taus: &[usize], thetas: &[f64]) -> Result<Vec<BenchRow>, CliError> {
    cfg.validate()?;
    if taus.is_empty() || thetas.is_empty() {
        return Err(config("--taus and --thetas must be non-empty"));
    }
    for &theta in thetas {
        JoinParams::new(theta, 1, cfg.count_mode).map_err(|e| config(e.to_string()))?;
    }
    if taus.contains(&0) {
        return Err(config("--taus must list positive integers"));
    }
    let pool = cfg.pool()?;
    let inputs = load_inputs(cfg)?;
    let rows = pool.install(|| -> Result<Vec<BenchRow>, CliError> {
        let mut rows = Vec::with_capacity(taus.len() * thetas.len());
        for &theta in thetas {
            for &tau in taus {
                let params = JoinParams::new(theta, tau, cfg.count_mode)?;
                let r = ap_join(&inputs.tax, &inputs.left, &inputs.right, &params)?;
                log::info!("theta = {theta}, tau = {tau}: {:.1} ms", r.stats.total_ms());
                rows.push(BenchRow {
                    theta,
                    tau,
                    f_pairs: r.stats.f_tau,
                    candidates: r.stats.v_tau,
                    results: r.stats.result_count,
                    time_ms: r.stats.total_ms(),
                });
            }
        }
        Ok(rows)
    })?;
    emit(cfg.output_path.as_deref(), |w| {
        writeln!(w, "theta,tau,f_pairs,candidates,results,time_ms")?;
        for r in &rows {
            writeln!(
                w,
                "{:.6},{},{},{},{},{:.6}",
                r.theta, r.tau, r.f_pairs, r.candidates, r.results, r.time_ms
            )?;
        }
        Ok(())
    })?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub nodes: usize,
    pub fanout: usize,
    pub depth: usize,
    pub records: usize,
    pub set_size: (usize, usize),
    pub seed: u64,
    pub out_dir: PathBuf,
    pub cluster_size: Option<f64>,
    pub keep: Option<f64>,
    pub noise: Option<f64>,
}

impl GenConfig {
    pub fn new(nodes: usize, fanout: usize, depth: usize, records: usize, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            nodes,
            fanout,
            depth,
            records,
            set_size: (3, 12),
            seed: 0,
            out_dir: out_dir.into(),
            cluster_size: None,
            keep: None,
            noise: None,
        }
    }
}

/// Paths written by [`cmd_gen`].
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedFiles {
    pub taxonomy: PathBuf,
    pub left: PathBuf,
    pub right: PathBuf,
}

/// Writes `taxonomy.tsv`, `left.tsv` and `right.tsv` into `out_dir`. Both
/// records files draw from one shared prototype pool.
pub fn cmd_gen(cfg: &GenConfig) -> Result<GeneratedFiles, CliError> {
    let err = |e: taxojoin::gen::GenError| config(e.to_string());
    let shape = TreeShape {
        nodes: cfg.nodes,
        fanout: cfg.fanout,
        depth: cfg.depth,
    };
    let mut records = RecordShape::new(cfg.records, cfg.set_size);
    if let Some(c) = cfg.cluster_size {
        records.cluster_size = c;
    }
    if let Some(k) = cfg.keep {
        records.keep = k;
    }
    if let Some(n) = cfg.noise {
        records.noise = n;
    }
    let tree = SyntheticTree::generate(shape, cfg.seed).map_err(err)?;
    let gen = RecordGenerator::new(&tree, records, cfg.seed.wrapping_add(1)).map_err(err)?;
    if cfg.set_size.1 > cfg.nodes {
        return Err(config(format!(
            "set size {} exceeds the {} taxonomy nodes",
            cfg.set_size.1, cfg.nodes
        )));
    }

    fs::create_dir_all(&cfg.out_dir).map_err(|source| CliError::Write {
        path: cfg.out_dir.clone(),
        source,
    })?;
    let files = GeneratedFiles {
        taxonomy: cfg.out_dir.join("taxonomy.tsv"),
        left: cfg.out_dir.join("left.tsv"),
        right: cfg.out_dir.join("right.tsv"),
    };
    emit(Some(&files.taxonomy), |w| write_edges(&tree.edges(), w))?;
    emit(Some(&files.left), |w| write_labeled(&gen.file(0, "s"), w))?;
    emit(Some(&files.right), |w| write_labeled(&gen.file(1, "t"), w))?;
    log::info!(
        "wrote {} nodes (height {}) and 2 x {} records to {}",
        tree.len(),
        tree.height(),
        cfg.records,
        cfg.out_dir.display()
    );
    Ok(files)
}
