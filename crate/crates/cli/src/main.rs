use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use taxojoin::CountMode;
use taxojoin_cli::{cmd_bench, cmd_gen, cmd_join, cmd_tune, CliError, GenConfig, RunConfig, TauChoice};

#[derive(Parser)]
#[command(name = "taxojoin", version, about = "Taxonomy-aware set-similarity joins")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Join two records files and write the similar pairs as CSV.
    Join(JoinArgs),
    /// Suggest tau from random samples without running the full join.
    Tune(JoinArgs),
    /// Run the full join over a grid of theta and tau values.
    Bench {
        #[command(flatten)]
        join: JoinArgs,
        /// Comma-separated tau values.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        taus: Vec<usize>,
        /// Comma-separated theta values.
        #[arg(long, value_delimiter = ',', default_value = "0.8")]
        thetas: Vec<f64>,
    },
    /// Write a synthetic taxonomy and two records files.
    Gen(GenArgs),
}

#[derive(Args)]
struct JoinArgs {
    /// Taxonomy file, one `child<TAB>parent` edge per line.
    #[arg(long)]
    taxonomy: PathBuf,
    /// Left records file, `id<TAB>label,label,...` per line.
    #[arg(long)]
    left: PathBuf,
    /// Right records file; defaults to the left one (self-join).
    #[arg(long)]
    right: Option<PathBuf>,
    #[arg(long, default_value_t = 0.8)]
    theta: f64,
    /// Positive integer or `auto`.
    #[arg(long, default_value = "auto")]
    tau: TauChoice,
    /// `exact` or `greedy`.
    #[arg(long, default_value = "exact")]
    count_mode: CountMode,
    /// Student-t quantile for the tuner's confidence intervals.
    #[arg(long, default_value_t = 1.036)]
    confidence: f64,
    /// Recompute the t quantile per iteration at this two-sided confidence level.
    #[arg(long, value_name = "LEVEL")]
    t_per_df: Option<f64>,
    /// Tuner iterations before the stopping rule is consulted.
    #[arg(long, default_value_t = 10)]
    burn_in: u64,
    /// Expected records per side in each tuner sample.
    #[arg(long, default_value_t = 100)]
    sample_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Candidate tau values for the tuner.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    tau_universe: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    max_iterations: u64,
    /// Fixed unit costs `t_F,t_V` in seconds instead of measured ones.
    #[arg(long, value_name = "T_F,T_V", value_parser = parse_cost_pair)]
    unit_costs: Option<(f64, f64)>,
    /// Main output file; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    /// JSON file for counters, timings and the tuner report.
    #[arg(long)]
    stats: Option<PathBuf>,
}

fn parse_cost_pair(s: &str) -> Result<(f64, f64), String> {
    let (f, v) = s
        .split_once(',')
        .ok_or_else(|| format!("expected `t_F,t_V`, got `{s}`"))?;
    let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}"));
    Ok((num(f)?, num(v)?))
}

impl JoinArgs {
    fn into_config(self) -> RunConfig {
        let right = self.right.unwrap_or_else(|| self.left.clone());
        let mut cfg = RunConfig::new(self.taxonomy, self.left, right, self.theta, self.tau);
        cfg.count_mode = self.count_mode;
        cfg.confidence = self.confidence;
        cfg.per_df_confidence = self.t_per_df;
        cfg.burn_in = self.burn_in;
        cfg.sample_size = self.sample_size;
        cfg.seed = self.seed;
        cfg.threads = self.threads.unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        });
        cfg.tau_universe = self.tau_universe;
        cfg.max_iterations = self.max_iterations;
        cfg.unit_costs = self.unit_costs;
        cfg.output_path = self.output;
        cfg.stats_path = self.stats;
        cfg
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 10_000)]
    nodes: usize,
    #[arg(long, default_value_t = 6)]
    fanout: usize,
    #[arg(long, default_value_t = 10)]
    depth: usize,
    /// Records per file.
    #[arg(long, default_value_t = 1000)]
    records: usize,
    #[arg(long, default_value_t = 3)]
    min_set_size: usize,
    #[arg(long, default_value_t = 12)]
    max_set_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Mean records per prototype in each file.
    #[arg(long)]
    cluster_size: Option<f64>,
    /// Chance that a prototype node is kept verbatim.
    #[arg(long)]
    keep: Option<f64>,
    /// Chance that a node is replaced by a popular one.
    #[arg(long)]
    noise: Option<f64>,
    /// Directory for taxonomy.tsv, left.tsv and right.tsv.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Join(args) => cmd_join(&args.into_config()).map(|_| ()),
        Command::Tune(args) => cmd_tune(&args.into_config()).map(|_| ()),
        Command::Bench { join, taus, thetas } => {
            cmd_bench(&join.into_config(), &taus, &thetas).map(|_| ())
        }
        Command::Gen(a) => {
            let mut cfg = GenConfig::new(a.nodes, a.fanout, a.depth, a.records, a.out_dir);
            cfg.set_size = (a.min_set_size, a.max_set_size);
            cfg.seed = a.seed;
            cfg.cluster_size = a.cluster_size;
            cfg.keep = a.keep;
            cfg.noise = a.noise;
            cmd_gen(&cfg).map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
