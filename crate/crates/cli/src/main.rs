mod manifest;
mod ops;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ops::RunStatus;
use scalesep::completion::RankRule;

#[derive(Debug, Parser)]
#[command(
    name = "scalesep",
    version,
    about = "Separate functional data into smooth and short-scale parts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Split a covariance into a smooth low-rank part and a banded part
    Decompose(DecomposeArgs),
    /// Generate a synthetic dataset bundle from a named scenario
    Simulate(SimulateArgs),
    /// Separate each curve of a sample into smooth and rough components
    Predict(PredictArgs),
    /// Run replicated experiments and summarize accuracy against baselines
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    /// Input CSV: either an n x K sample of curves (one row per curve) or
    /// a K x K symmetric covariance, detected by shape
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory for the decomposition bundle
    #[arg(long)]
    pub out: PathBuf,
    /// Half bandwidth of the short-scale part (default: ceil(K/4))
    #[arg(long)]
    pub half_band: Option<usize>,
    /// Largest candidate rank for the scree
    #[arg(long)]
    pub max_rank: Option<usize>,
    /// Rank choice rule: c=VAL, tau=VAL, or fixed=R
    #[arg(long, value_parser = parse_rank_rule, default_value = "c=1e-4")]
    pub rank_rule: RankRule,
    /// Center sample columns by their mean before estimating (default)
    #[arg(long, overrides_with = "no_center")]
    pub center: bool,
    /// Keep the sample as is, recording a zero mean
    #[arg(long, overrides_with = "center")]
    pub no_center: bool,
    /// Iteration cap for the completion solver
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario letter A..I, or WHITE
    #[arg(long)]
    pub scenario: String,
    /// Numbered (rank, bandwidth) combination, 1..6
    #[arg(long)]
    pub combo: usize,
    /// Smooth eigenvalue regime, 1 or 2
    #[arg(long)]
    pub regime: u8,
    /// Number of curves
    #[arg(long)]
    pub n: usize,
    /// Number of grid points
    #[arg(long)]
    pub k: usize,
    /// RNG seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for the dataset bundle
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Input CSV of curves, n x K, one row per curve
    #[arg(long)]
    pub input: PathBuf,
    /// Directory holding Lhat.csv, Rhat.csv, and mean.csv from decompose
    #[arg(long)]
    pub decomposition: PathBuf,
    /// Output directory for Yhat.csv, What.csv, scores.csv
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Scenario letter A..I, or WHITE
    #[arg(long)]
    pub scenario: String,
    /// Numbered (rank, bandwidth) combination, 1..6
    #[arg(long)]
    pub combo: usize,
    /// Smooth eigenvalue regime, 1 or 2
    #[arg(long)]
    pub regime: u8,
    /// Number of curves per replicate
    #[arg(long)]
    pub n: usize,
    /// Number of grid points
    #[arg(long)]
    pub k: usize,
    /// Number of replicates
    #[arg(long)]
    pub reps: usize,
    /// Base RNG seed; replicate j uses seed + j
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Half bandwidth override (default: min(ceil(K/4), 10))
    #[arg(long)]
    pub half_band: Option<usize>,
    /// Rank choice rule override (default: fixed at the scenario rank)
    #[arg(long, value_parser = parse_rank_rule)]
    pub rank_rule: Option<RankRule>,
    /// Iteration cap for the completion solver
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Output directory for replicate table and summary
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_rank_rule(s: &str) -> Result<RankRule, String> {
    let (key, value) = s
        .split_once('=')
        .ok_or_else(|| format!("expected c=VAL, tau=VAL, or fixed=R, got {s:?}"))?;
    match key {
        "c" => {
            let c: f64 = value.parse().map_err(|e| format!("bad threshold: {e}"))?;
            Ok(RankRule::Threshold { c })
        }
        "tau" => {
            let tau: f64 = value.parse().map_err(|e| format!("bad penalty: {e}"))?;
            Ok(RankRule::Penalty { tau })
        }
        "fixed" => {
            let rank: usize = value.parse().map_err(|e| format!("bad rank: {e}"))?;
            Ok(RankRule::Fixed { rank })
        }
        other => Err(format!("unknown rule {other:?}; use c, tau, or fixed")),
    }
}

fn init_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("SCALESEP_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .parse()
        .map_err(|e| format!("SCALESEP_THREADS={raw:?} is not a thread count: {e}"))?;
    if threads == 0 {
        return Err("SCALESEP_THREADS must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| format!("thread pool setup failed: {e}"))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::FAILURE,
            };
            let _ = e.print();
            return code;
        }
    };
    if let Err(msg) = init_threads() {
        eprintln!("error: {msg}");
        return ExitCode::FAILURE;
    }
    let result = match &cli.command {
        Command::Decompose(args) => ops::cmd_decompose(args),
        Command::Simulate(args) => ops::cmd_simulate(args),
        Command::Predict(args) => ops::cmd_predict(args),
        Command::Eval(args) => ops::cmd_eval(args),
    };
    match result {
        Ok(RunStatus::Converged) => ExitCode::SUCCESS,
        Ok(RunStatus::NotConverged) => {
            eprintln!("warning: solver stopped at its iteration cap; outputs written");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
