use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{read_dataset, SplitName, SplitTrajectory};
use crate::model::{ModelBackend, OracleBackend, RemoteBackend};
use crate::reasoning::{run as run_episode, ReasoningConfig, Strategy, Termination};

use super::gen::DATASET_CONFIG_FILE;
use super::train::{load_trained, TrainedModel};
use super::{apply_snapshot, read_json, runtime, usage, write_json, write_snapshot, CliError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Toy,
    Oracle,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyArg {
    OnePass,
    Interleaved,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::OnePass => Strategy::OnePass,
            StrategyArg::Interleaved => Strategy::Interleaved,
        }
    }
}

#[derive(Debug, Clone, clap::Args, Serialize, Deserialize)]
pub struct InferArgs {
    #[arg(long, required_unless_present = "config", default_value = ".")]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = StrategyArg::OnePass)]
    pub strategy: StrategyArg,
    #[arg(long, value_enum, default_value_t = BackendKind::Toy)]
    pub backend: BackendKind,
    /// Model directory written by `train`; required for the toy backend.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Server root for the remote backend; `GOVIG_REMOTE_URL` overrides it.
    #[arg(long, default_value = "http://127.0.0.1:8080")]
    pub url: String,
    #[arg(long, default_value_t = 30)]
    pub timeout_secs: u64,
    #[arg(long, default_value_t = 0.7)]
    pub tau: f64,
    /// Step cap; defaults to 4 * (k + 16).
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Only the first N trajectories of the split, by id.
    #[arg(long)]
    pub max_episodes: Option<usize>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

/// The per-episode result file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub traj_id: String,
    pub split: SplitName,
    pub strategy: Strategy,
    pub backend: String,
    /// Context window size; predicted frame `j` stands for trajectory frame `k + j`.
    pub k: usize,
    pub steps: usize,
    pub terminated: Option<Termination>,
    pub instruction: String,
    pub instruction_history: Vec<String>,
    /// Predicted frames, relative to the run's `--out` directory.
    pub frame_paths: Vec<String>,
    pub final_ssim: Option<f64>,
    pub error: Option<String>,
}

pub const EPISODES_DIR: &str = "episodes";

pub fn episode_dir(out: &Path, traj_id: &str) -> PathBuf {
    out.join(EPISODES_DIR).join(traj_id)
}

fn run_one(
    args: &InferArgs,
    st: &SplitTrajectory,
    shared: Option<&dyn ModelBackend>,
    cfg: &ReasoningConfig,
) -> Result<EpisodeRecord, CliError> {
    let traj = &st.traj;
    let oracle;
    let backend: &dyn ModelBackend = match shared {
        Some(b) => b,
        None => {
            oracle = OracleBackend::new(traj.clone());
            &oracle
        }
    };
    let strategy = Strategy::from(args.strategy);
    let mut rec = EpisodeRecord {
        traj_id: traj.traj_id.clone(),
        split: st.split,
        strategy,
        backend: backend.name().to_string(),
        k: cfg.k,
        steps: 0,
        terminated: None,
        instruction: String::new(),
        instruction_history: Vec::new(),
        frame_paths: Vec::new(),
        final_ssim: None,
        error: None,
    };
    let dir = episode_dir(&args.out, &traj.traj_id);
    std::fs::create_dir_all(&dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    let outcome = match traj.task_input(cfg.k) {
        Some((init, goal)) => run_episode(strategy, backend, init, goal, cfg).map_err(|e| e.to_string()),
        None => Err(format!("trajectory has {} frames, k = {}", traj.len(), cfg.k)),
    };
    match outcome {
        Ok(res) => {
            for (i, f) in res.predicted_frames.iter().enumerate() {
                let rel = format!("{EPISODES_DIR}/{}/{i:03}.png", traj.traj_id);
                f.save_png(&args.out.join(&rel)).map_err(|e| runtime(format!("{rel}: {e}")))?;
                rec.frame_paths.push(rel);
            }
            rec.steps = res.steps;
            rec.terminated = Some(res.terminated);
            rec.instruction = res.instruction;
            rec.instruction_history = res.instruction_history;
            rec.final_ssim = Some(res.final_ssim);
        }
        Err(e) => rec.error = Some(e),
    }
    write_json(&dir.join("result.json"), &rec)?;
    Ok(rec)
}

/// Run reasoning over every trajectory of a split. Backend failures are
/// recorded in the episode's result file and do not stop the run.
pub fn cmd_infer(args: &InferArgs) -> Result<Vec<EpisodeRecord>, CliError> {
    let out = args.out.clone();
    let args = apply_snapshot(&args.config, args.clone(), |a: &mut InferArgs| a.out = out)?;
    let split: SplitName = args.split.parse().map_err(usage)?;
    let gen: crate::dataset::GenConfig = read_json(&args.data.join(DATASET_CONFIG_FILE))
        .map_err(|e| usage(format!("{} is not a dataset directory: {e}", args.data.display())))?;

    let trained: Option<TrainedModel> = match (args.backend, &args.model) {
        (BackendKind::Toy, Some(dir)) => Some(load_trained(dir)?),
        (BackendKind::Toy, None) => return Err(usage("--backend toy needs --model")),
        _ => None,
    };
    let k = trained.as_ref().map_or(gen.k, |t| t.meta.k);
    let mut cfg = ReasoningConfig { tau: args.tau, ..ReasoningConfig::new(k) };
    if let Some(m) = trained.as_ref().map(|t| t.meta.m) {
        cfg.m = m;
    }
    if let Some(cap) = args.max_steps {
        cfg.max_steps = cap;
    }
    cfg.validate().map_err(usage)?;

    let ds = read_dataset(&args.data).map_err(runtime)?;
    let mut episodes: Vec<&SplitTrajectory> = ds.split(split).collect();
    episodes.sort_by(|a, b| a.traj.traj_id.cmp(&b.traj.traj_id));
    if let Some(n) = args.max_episodes {
        episodes.truncate(n);
    }
    if episodes.is_empty() {
        return Err(usage(format!("split {split} has no trajectories")));
    }

    let toy = trained.as_ref().map(|t| t.backend());
    let remote = (args.backend == BackendKind::Remote)
        .then(|| RemoteBackend::new(&args.url, Duration::from_secs(args.timeout_secs), k));
    let shared: Option<&dyn ModelBackend> = match args.backend {
        BackendKind::Toy => toy.as_ref().map(|b| b as &dyn ModelBackend),
        BackendKind::Remote => remote.as_ref().map(|b| b as &dyn ModelBackend),
        BackendKind::Oracle => None,
    };
    let records: Vec<EpisodeRecord> = episodes
        .par_iter()
        .map(|st| run_one(&args, st, shared, &cfg))
        .collect::<Result<_, _>>()?;
    write_snapshot(&args.out, &args)?;
    Ok(records)
}
