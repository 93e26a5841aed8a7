//! The `govig` command line: dataset generation, training, inference,
//! evaluation and the gradient check.
//!
//! Every subcommand writes a `config.json` snapshot of its resolved
//! arguments into `--out`. Passing that file back through `--config`
//! reproduces the run; only `--out` (and the global `--jobs`) are taken from
//! the command line in that case.

mod eval;
mod gen;
mod infer;
mod train;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub use eval::{cmd_eval, format_table, EvalArgs, EvalReport, SampleScores, ScoreSet, PSNR_CAP_DB};
pub use gen::{cmd_gen, GenArgs, DATASET_CONFIG_FILE};
pub use infer::{cmd_infer, episode_dir, BackendKind, EpisodeRecord, InferArgs, StrategyArg, EPISODES_DIR};
pub use train::{ObjectiveArg, OptimizerArg};
pub use train::{cmd_train, load_trained, ModelMeta, TrainArgs, TrainedModel, CHECKPOINT_FILE, CODEBOOK_FILE, LOSS_CSV, META_FILE, VOCAB_FILE};

pub const CONFIG_SNAPSHOT: &str = "config.json";

/// Failure classes with stable exit codes: 2 for usage and configuration,
/// 3 for anything that goes wrong while running.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
    #[error("missing reference: {0}")]
    MissingReference(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::MissingReference(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

pub(crate) fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

pub(crate) fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "govig", version, about = "Goal-conditioned visual navigation instruction generation in a gridworld")]
pub struct Cli {
    /// Worker threads for parallel stages (defaults to all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate worlds, trajectories and a sample manifest.
    Gen(GenArgs),
    /// Train the toy model on a generated dataset.
    Train(TrainArgs),
    /// Run one-pass or interleaved reasoning over a split.
    Infer(InferArgs),
    /// Score inference results against the dataset.
    Eval(EvalArgs),
    /// Compare analytic loss gradients with finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Clone, clap::Args, Serialize, serde::Deserialize)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 100)]
    pub instances: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Where to write `gradcheck.json`; nothing is written when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

pub fn cmd_gradcheck(args: &GradcheckArgs) -> Result<crate::losses::GradcheckReport, CliError> {
    let report = crate::losses::gradcheck_suite(args.instances, args.seed);
    if let Some(out) = &args.out {
        write_snapshot(out, args)?;
        write_json(&out.join("gradcheck.json"), &report)?;
    }
    Ok(report)
}

/// Replace `args` with the snapshot named by `config`, keeping `out`.
pub(crate) fn apply_snapshot<T: DeserializeOwned>(config: &Option<PathBuf>, args: T, out: impl FnOnce(&mut T)) -> Result<T, CliError> {
    let Some(path) = config else { return Ok(args) };
    let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let mut loaded: T = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    out(&mut loaded);
    Ok(loaded)
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| runtime(format!("{}: {e}", parent.display())))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(runtime)?;
    fs::write(path, text + "\n").map_err(|e| runtime(format!("{}: {e}", path.display())))
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

pub(crate) fn write_snapshot<T: Serialize>(out: &Path, args: &T) -> Result<(), CliError> {
    write_json(&out.join(CONFIG_SNAPSHOT), args)
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Gen(a) => {
            let ds = cmd_gen(&a)?;
            println!("wrote {} trajectories and {} samples", ds.trajectories.len(), ds.records.len());
        }
        Command::Train(a) => {
            let trace = cmd_train(&a)?;
            if let Some(last) = trace.last() {
                println!("epoch {}: mean loss {:.6}", last.epoch, last.mean_loss);
            }
        }
        Command::Infer(a) => {
            let records = cmd_infer(&a)?;
            let failed = records.iter().filter(|r| r.error.is_some()).count();
            println!("{} episodes, {failed} failed", records.len());
        }
        Command::Eval(a) => {
            let (_, table) = cmd_eval(&a)?;
            print!("{table}");
        }
        Command::Gradcheck(a) => {
            let r = cmd_gradcheck(&a)?;
            println!(
                "{} instances: max relative error {:.3e} (visual {:.3e}, instruction {:.3e}) in {:.2}s",
                r.instances,
                r.max_rel_error(),
                r.max_rel_error_vis,
                r.max_rel_error_ins,
                r.seconds
            );
        }
    }
    Ok(())
}

/// Parse `args`, run the subcommand and return the process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match cli.jobs {
        Some(0) => Err(usage("--jobs must be at least 1")),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command)),
            Err(e) => Err(runtime(e)),
        },
        None => dispatch(cli.command),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
