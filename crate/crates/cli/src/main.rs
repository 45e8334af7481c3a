//! `fusionlasso` command-line front end.
//!
//! Every run writes `run.json` into its output directory; `fusionlasso replay
//! run.json` re-executes the recorded command. Logs go to stderr and the
//! primary JSON result to stdout. Validation errors exit with status 2.

mod commands;
mod problem;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fusionlasso::gibbs::Lambda2Shape;
use fusionlasso::simulate::{Method, SimFamily};
use serde::{Deserialize, Serialize};

use crate::problem::{absolute, StructureSpec};

#[derive(Parser, Debug)]
#[command(name = "fusionlasso", version, about = "Bayesian structured sparsity with fusion penalties")]
struct Cli {
    /// Worker threads for chains, folds, grid points and replicates.
    #[arg(long, global = true, env = "FUSIONLASSO_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
pub enum Command {
    /// Report prior (and, given data, posterior) propriety.
    CheckPropriety(CheckArgs),
    /// Posterior mode by EM at one λ or over a grid.
    FitEm(FitArgs),
    /// Gibbs sampling of the full posterior.
    Sample(SampleArgs),
    /// AIC grid, cross-validated RMSE and optional WAIC.
    Calibrate(CalibrateArgs),
    /// Grouped-heterogeneity simulation benchmark.
    Simulate(SimulateArgs),
    /// R̂ and Geweke diagnostics for stored draws.
    Diagnose(DiagnoseArgs),
    /// Re-run the command recorded in a run.json.
    #[serde(skip)]
    Replay(ReplayArgs),
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct OutArgs {
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ModelArgs {
    /// CSV data file.
    #[arg(long)]
    pub data: PathBuf,
    /// JSON column/formula config for the data file.
    #[arg(long)]
    pub config: PathBuf,
    /// agnostic | lattice | priority:<factor> | file:<path>
    #[arg(long, default_value = "agnostic")]
    pub structure: StructureSpec,
    /// Adaptive edge weights from a ridge pilot, with this exponent.
    #[arg(long)]
    pub adaptive: Option<f64>,
}

impl ModelArgs {
    fn resolve(&mut self) -> Result<()> {
        self.data = absolute(&self.data)?;
        self.config = absolute(&self.config)?;
        self.structure.resolve_paths()
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct CheckArgs {
    #[arg(long, requires = "config")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "agnostic")]
    pub structure: StructureSpec,
    #[command(flatten)]
    pub out: OutArgs,
}

/// `--lambda` value: a number or `grid`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaArg {
    Value(f64),
    Grid,
}

impl FromStr for LambdaArg {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "grid" {
            return Ok(LambdaArg::Grid);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(LambdaArg::Value(v)),
            _ => Err(format!("expected a positive number or `grid`, got `{s}`")),
        }
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub lambda: LambdaArg,
    /// Grid size when `--lambda grid`.
    #[arg(long, default_value_t = fusionlasso::calibrate::DEFAULT_GRID_POINTS)]
    pub grid_points: usize,
    /// Hold σ fixed instead of profiling it (linear family).
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Fit the grid sequentially from the previous solution.
    #[arg(long)]
    pub warm_start: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

/// `shape,rate` for a gamma-type prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeRate {
    pub shape: f64,
    pub rate: f64,
}

impl FromStr for ShapeRate {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let bad = || format!("expected `shape,rate`, got `{s}`");
        let (a, b) = s.split_once(',').ok_or_else(bad)?;
        let shape = a.trim().parse().map_err(|_| bad())?;
        let rate = b.trim().parse().map_err(|_| bad())?;
        Ok(ShapeRate { shape, rate })
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeArg {
    Rank,
    Dimension,
}

impl From<ShapeArg> for Lambda2Shape {
    fn from(s: ShapeArg) -> Self {
        match s {
            ShapeArg::Rank => Lambda2Shape::Rank,
            ShapeArg::Dimension => Lambda2Shape::Dimension,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DrawFormat {
    Csv,
    Bin,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SamplerArgs {
    #[arg(long, default_value_t = 4)]
    pub chains: usize,
    /// Iterations per chain, burn-in included.
    #[arg(long, default_value_t = 10_000)]
    pub iters: usize,
    #[arg(long, default_value_t = 5_000)]
    pub burnin: usize,
    #[arg(long, default_value_t = 1)]
    pub thin: usize,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SampleArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[arg(long, env = "FUSIONLASSO_SEED")]
    pub seed: Option<u64>,
    /// Fixed λ.
    #[arg(long, conflicts_with_all = ["lambda_prior", "anchor"])]
    pub lambda: Option<f64>,
    /// Gamma(shape, rate) prior on λ².
    #[arg(long, conflicts_with = "anchor", default_value = "1,1")]
    pub lambda_prior: ShapeRate,
    /// Anchor the λ² prior at the AIC-selected λ.
    #[arg(long)]
    pub anchor: bool,
    /// Inverse-gamma(shape, rate) prior on σ².
    #[arg(long, default_value = "1,1", conflicts_with = "sigma2")]
    pub sigma_prior: ShapeRate,
    /// Fixed σ².
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long, value_enum, default_value = "rank")]
    pub lambda2_shape: ShapeArg,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: DrawFormat,
    /// Sample even if propriety is not established; output is marked unverified.
    #[arg(long)]
    pub force: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Number of λ grid points.
    #[arg(long, default_value_t = fusionlasso::calibrate::DEFAULT_GRID_POINTS)]
    pub grid: usize,
    /// Cross-validation folds; 0 skips cross-validation.
    #[arg(long, default_value_t = 20)]
    pub folds: usize,
    #[arg(long, env = "FUSIONLASSO_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub warm_start: bool,
    /// Also compute WAIC from draws under the anchored prior.
    #[arg(long)]
    pub waic: bool,
    #[arg(long, default_value_t = 2)]
    pub waic_chains: usize,
    #[arg(long, default_value_t = 4_000)]
    pub waic_iters: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// Units.
    #[arg(long = "G")]
    pub g: usize,
    /// Observations per unit.
    #[arg(long = "r")]
    pub r: usize,
    /// Units at each of ±1.
    #[arg(long = "S")]
    pub s: usize,
    #[arg(long, default_value = "linear")]
    pub family: SimFamily,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, env = "FUSIONLASSO_SEED")]
    pub seed: Option<u64>,
    #[arg(long, value_delimiter = ',', default_value = "ssp,a-ssp,fe,pooled")]
    pub methods: Vec<Method>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct DiagnoseArgs {
    /// Draws file written by `sample` (binary or CSV).
    #[arg(long)]
    pub draws: PathBuf,
    /// Family of CSV draws: linear, logistic or multinomial:<C>.
    #[arg(long)]
    pub family: Option<String>,
    /// Use whole chains instead of split halves for R̂.
    #[arg(long)]
    pub no_split: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Clone)]
pub struct ReplayArgs {
    /// A run.json written by an earlier run.
    pub record: PathBuf,
    /// Write outputs here instead of the recorded directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Provenance written to `run.json`.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub tool: String,
    pub version: String,
    pub library_version: String,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub command: Command,
}

impl Command {
    fn out_mut(&mut self) -> &mut PathBuf {
        match self {
            Command::CheckPropriety(a) => &mut a.out.out,
            Command::FitEm(a) => &mut a.out.out,
            Command::Sample(a) => &mut a.out.out,
            Command::Calibrate(a) => &mut a.out.out,
            Command::Simulate(a) => &mut a.out.out,
            Command::Diagnose(a) => &mut a.out.out,
            Command::Replay(_) => unreachable!("replay is resolved before execution"),
        }
    }

    fn out(&self) -> &Path {
        match self {
            Command::CheckPropriety(a) => &a.out.out,
            Command::FitEm(a) => &a.out.out,
            Command::Sample(a) => &a.out.out,
            Command::Calibrate(a) => &a.out.out,
            Command::Simulate(a) => &a.out.out,
            Command::Diagnose(a) => &a.out.out,
            Command::Replay(_) => unreachable!("replay is resolved before execution"),
        }
    }

    fn seed(&self) -> Option<u64> {
        match self {
            Command::Sample(a) => a.seed,
            Command::Calibrate(a) => a.seed,
            Command::Simulate(a) => a.seed,
            _ => None,
        }
    }

    /// Make paths absolute, create the output directory and check that
    /// stochastic commands carry a seed.
    fn resolve(&mut self) -> Result<()> {
        let stochastic = matches!(self, Command::Sample(_) | Command::Calibrate(_) | Command::Simulate(_));
        if stochastic && self.seed().is_none() {
            bail!("--seed (or FUSIONLASSO_SEED) is required for this command");
        }
        match self {
            Command::CheckPropriety(a) => {
                if let Some(d) = &mut a.data {
                    *d = absolute(d)?;
                }
                if let Some(c) = &mut a.config {
                    *c = absolute(c)?;
                }
                a.structure.resolve_paths()?;
            }
            Command::FitEm(a) => a.model.resolve()?,
            Command::Sample(a) => a.model.resolve()?,
            Command::Calibrate(a) => a.model.resolve()?,
            Command::Diagnose(a) => a.draws = absolute(&a.draws)?,
            Command::Simulate(_) | Command::Replay(_) => {}
        }
        let out = self.out_mut();
        std::fs::create_dir_all(&*out).with_context(|| format!("creating {}", out.display()))?;
        *out = absolute(out)?;
        Ok(())
    }
}

fn load_record(path: &Path) -> Result<RunRecord> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid run record {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    let mut command = match cli.command {
        Command::Replay(r) => {
            let mut c = load_record(&r.record)?.command;
            if let Some(out) = r.out {
                *c.out_mut() = out;
            }
            c
        }
        c => c,
    };
    command.resolve()?;
    let record = RunRecord {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        library_version: fusionlasso::VERSION.into(),
        seed: command.seed(),
        threads: cli.threads,
        command,
    };
    let out = record.command.out();
    std::fs::write(out.join("run.json"), serde_json::to_string_pretty(&record)? + "\n")?;
    let primary = commands::execute(&record.command, out)?;
    println!("{}", serde_json::to_string_pretty(&primary)?);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
