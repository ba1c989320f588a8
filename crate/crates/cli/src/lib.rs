//! The `snode` experiment pipeline: data generation, training, evaluation,
//! reduced-order sweeps and stencil reports, each driven by a flat config and
//! leaving a run manifest next to its primary output.

pub mod commands;
pub mod config;
pub mod error;
mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{Command, Resolved, RunConfig};
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "snode", version, about = "Stabilized neural ODE experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Simulate a reference dataset.
    Generate(GenerateArgs),
    /// Train a neural ODE on a dataset.
    Train(TrainArgs),
    /// Error curves, spectra or PDFs of a model against the reference data.
    Evaluate(EvaluateArgs),
    /// Galerkin-type reduced models over a range of resolved dimensions.
    Rom(RomArgs),
    /// Learned stencil taps next to the central-difference optimum.
    StencilReport(StencilArgs),
    /// List every config key with its default.
    Keys,
}

#[derive(Debug, Args, Default)]
pub struct Common {
    /// Config file (or a run manifest to repeat a previous run).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override any config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub system: Option<String>,
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Cap on worker threads.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub train_ics: Option<usize>,
    #[arg(long)]
    pub test_ics: Option<usize>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Continue from this checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    /// error, spectrum or pdf.
    #[arg(long)]
    pub metric: Option<String>,
    /// Comma-separated output times for spectra.
    #[arg(long)]
    pub times: Option<String>,
    /// none, grid:EPS or fourier:EPS:KLO:KHI.
    #[arg(long)]
    pub noise: Option<String>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// checkpoint, true or data.
    #[arg(long)]
    pub rhs: Option<String>,
}

#[derive(Debug, Args, Default)]
pub struct RomArgs {
    #[command(flatten)]
    pub common: Common,
    /// checkpoint or true.
    #[arg(long)]
    pub rhs: Option<String>,
    /// Comma list of g, nlg, pg.
    #[arg(long)]
    pub mode: Option<String>,
    /// a..b, a..b:step or a comma list.
    #[arg(long)]
    pub dp: Option<String>,
    /// eigenvalue or variance.
    #[arg(long)]
    pub sort: Option<String>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct StencilArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

fn put(cfg: &mut RunConfig, key: &str, v: Option<impl ToString>) -> CliResult<()> {
    match v {
        Some(v) => cfg.set(key, v.to_string()),
        None => Ok(()),
    }
}

fn put_path(cfg: &mut RunConfig, key: &str, v: &Option<PathBuf>) -> CliResult<()> {
    put(cfg, key, v.as_ref().map(|p| p.to_string_lossy().into_owned()))
}

impl Common {
    /// Config file first, then `--set` pairs, then dedicated flags.
    fn build(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        for pair in &self.set {
            cfg.set_pair(pair)?;
        }
        put(&mut cfg, "system", self.system.as_ref())?;
        put(&mut cfg, "variant", self.variant.as_ref())?;
        put(&mut cfg, "seed", self.seed)?;
        put(&mut cfg, "threads", self.threads)?;
        put_path(&mut cfg, "data_dir", &self.data_dir)?;
        put_path(&mut cfg, "dataset", &self.dataset)?;
        put_path(&mut cfg, "output", &self.output)?;
        Ok(cfg)
    }
}

impl Sub {
    /// Builds the resolved configuration for this invocation.
    pub fn resolve(&self) -> CliResult<Option<Resolved>> {
        let (cmd, cfg) = match self {
            Sub::Keys => return Ok(None),
            Sub::Generate(a) => {
                let mut c = a.common.build()?;
                put(&mut c, "train_ics", a.train_ics)?;
                put(&mut c, "test_ics", a.test_ics)?;
                put(&mut c, "horizon", a.horizon)?;
                put(&mut c, "grid", a.grid)?;
                (Command::Generate, c)
            }
            Sub::Train(a) => {
                let mut c = a.common.build()?;
                put(&mut c, "epochs", a.epochs)?;
                put(&mut c, "batch_size", a.batch_size)?;
                put_path(&mut c, "checkpoint", &a.checkpoint)?;
                put_path(&mut c, "resume", &a.resume)?;
                (Command::Train, c)
            }
            Sub::Evaluate(a) => {
                let mut c = a.common.build()?;
                put(&mut c, "metric", a.metric.as_ref())?;
                put(&mut c, "times", a.times.as_ref())?;
                put(&mut c, "noise", a.noise.as_ref())?;
                put(&mut c, "rhs", a.rhs.as_ref())?;
                put_path(&mut c, "checkpoint", &a.checkpoint)?;
                (Command::Evaluate, c)
            }
            Sub::Rom(a) => {
                let mut c = a.common.build()?;
                put(&mut c, "rhs", a.rhs.as_ref())?;
                put(&mut c, "rom_mode", a.mode.as_ref())?;
                put(&mut c, "dp", a.dp.as_ref())?;
                put(&mut c, "sort", a.sort.as_ref())?;
                put_path(&mut c, "checkpoint", &a.checkpoint)?;
                (Command::Rom, c)
            }
            Sub::StencilReport(a) => {
                let mut c = a.common.build()?;
                put_path(&mut c, "checkpoint", &a.checkpoint)?;
                (Command::StencilReport, c)
            }
        };
        cfg.resolve(cmd).map(Some)
    }
}

/// Runs one parsed invocation and returns the manifest path it wrote.
pub fn run(cli: &Cli) -> CliResult<Option<PathBuf>> {
    match cli.command.resolve()? {
        None => {
            print!("{}", config::describe_keys());
            Ok(None)
        }
        Some(cfg) => commands::dispatch(cfg).map(Some),
    }
}

/// Parses `args` (without the program name) and runs them.
pub fn run_args<I, S>(args: I) -> CliResult<Option<PathBuf>>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let argv = std::iter::once(std::ffi::OsString::from("snode")).chain(args.into_iter().map(Into::into));
    let cli = Cli::try_parse_from(argv).map_err(|e| CliError::config(e.to_string()))?;
    run(&cli)
}
