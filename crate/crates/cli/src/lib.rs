//! Command-line pipeline: generate a synthetic pair, train the initiator,
//! refine, evaluate and run loss ablations, all driven by one TOML config.

pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{cmd_ablate, cmd_eval, cmd_gen, cmd_init, cmd_refine, Manifest};
pub use config::RunConfig;
pub use error::{CliError, ErrorKind};

/// Precedence: built-in defaults < `--config` file < flags.
#[derive(Debug, Parser)]
#[command(name = "softcorr", version, about = "Soft shape correspondence with dual-graph refinement")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic source/target pair and its ground truth.
    Gen(GenArgs),
    /// Train the initiator and write the initial correspondence.
    Init(InitArgs),
    /// Refine an initial correspondence.
    Refine(RefineArgs),
    /// Score predictions against the ground truth.
    Eval(EvalArgs),
    /// Compare loss subsets over several seeds.
    Ablate(AblateArgs),
}

#[derive(Debug, Args, Default)]
pub struct PairArgs {
    #[arg(long)]
    pub source: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long)]
    pub gt: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub kind: Option<config::GenKind>,
    #[arg(long)]
    pub subdivisions: Option<u32>,
    /// Radians.
    #[arg(long)]
    pub bend_angle: Option<f64>,
    /// Mesh to deform (noisy-copy).
    #[arg(long)]
    pub from: Option<PathBuf>,
    #[arg(long)]
    pub jitter: Option<f64>,
}

#[derive(Debug, Args)]
pub struct InitArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    /// Initial CORR matrix.
    #[arg(long)]
    pub corr: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub inner_steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Loss subset such as `all` or `L+l1+l2`.
    #[arg(long)]
    pub losses: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    /// CORR or vertex-map files to score.
    #[arg(long, num_args = 1..)]
    pub pred: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    /// Comma-separated subsets, e.g. `initiator,all,L+l1`.
    #[arg(long, value_delimiter = ',')]
    pub subsets: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_path(slot: &mut Option<PathBuf>, value: &Option<PathBuf>) {
    if value.is_some() {
        slot.clone_from(value);
    }
}

fn set_pair(config: &mut RunConfig, pair: &PairArgs) {
    set_path(&mut config.shapes.source, &pair.source);
    set_path(&mut config.shapes.target, &pair.target);
    set_path(&mut config.shapes.gt, &pair.gt);
}

impl Cli {
    /// The effective configuration and the command to run.
    pub fn resolve(self) -> Result<(RunConfig, Command), CliError> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        set(&mut config.seed, self.seed);
        set(&mut config.out_dir, self.out);
        let command = self.command;
        match &command {
            Command::Gen(a) => {
                set(&mut config.gen.kind, a.kind);
                set(&mut config.gen.subdivisions, a.subdivisions);
                set(&mut config.gen.bend_angle, a.bend_angle);
                set(&mut config.gen.noise.jitter, a.jitter);
                set_path(&mut config.gen.source, &a.from);
            }
            Command::Init(a) => {
                set_pair(&mut config, &a.pair);
                set(&mut config.initiator.epochs, a.epochs);
            }
            Command::Refine(a) => {
                set_pair(&mut config, &a.pair);
                set_path(&mut config.shapes.corr, &a.corr);
                set(&mut config.refine.iterations, a.iterations);
                set(&mut config.refine.inner_steps, a.inner_steps);
                set(&mut config.refine.lr, a.lr);
                set(&mut config.refine.losses, a.losses.clone());
            }
            Command::Eval(a) => {
                set_pair(&mut config, &a.pair);
                if !a.pred.is_empty() {
                    config.eval.pred = a.pred.clone();
                }
            }
            Command::Ablate(a) => {
                set_pair(&mut config, &a.pair);
                if !a.subsets.is_empty() {
                    config.ablate.subsets = a.subsets.clone();
                }
                if !a.seeds.is_empty() {
                    config.ablate.seeds = a.seeds.clone();
                }
            }
        }
        config.validate()?;
        Ok((config, command))
    }
}

pub fn execute(config: &RunConfig, command: &Command) -> Result<Vec<PathBuf>, CliError> {
    match command {
        Command::Gen(_) => cmd_gen(config),
        Command::Init(_) => cmd_init(config),
        Command::Refine(_) => cmd_refine(config),
        Command::Eval(_) => cmd_eval(config),
        Command::Ablate(_) => cmd_ablate(config),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
/// Failures print a one-line error record to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match cli.resolve().and_then(|(config, command)| execute(&config, &command)) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("{}", e.record());
            e.exit_code()
        }
    }
}
