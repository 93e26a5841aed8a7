use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dataset::{check_split_laws, generate_dataset, write_dataset, Dataset, DatasetError, DatasetSplit, GenConfig, SplitName, SplitRatios};

use super::{apply_snapshot, runtime, usage, write_json, write_snapshot, CliError};

/// Generation parameters as stored next to the dataset.
pub const DATASET_CONFIG_FILE: &str = "dataset.json";

#[derive(Debug, Clone, clap::Args, Serialize, Deserialize)]
pub struct GenArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub worlds: usize,
    /// Total trajectories across all regular worlds.
    #[arg(long, default_value_t = 40)]
    pub trajs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 16)]
    pub width: usize,
    #[arg(long, default_value_t = 16)]
    pub height: usize,
    #[arg(long, default_value_t = 3)]
    pub rooms: usize,
    #[arg(long, default_value_t = 4)]
    pub landmarks: usize,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    #[arg(long, default_value_t = 3)]
    pub m: usize,
    #[arg(long, default_value_t = 8)]
    pub min_len: usize,
    #[arg(long, default_value_t = 29)]
    pub max_len: usize,
    /// Frame side in pixels.
    #[arg(long, default_value_t = 32)]
    pub frame_size: u32,
    /// train,val_seen,val_unseen,test
    #[arg(long, default_value = "0.65,0.05,0.11,0.19")]
    pub ratios: String,
    #[arg(long, default_value_t = 0)]
    pub real_like_worlds: usize,
    #[arg(long, default_value_t = 0)]
    pub real_like_trajs: usize,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

fn parse_ratios(s: &str) -> Result<SplitRatios, CliError> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| usage(format!("--ratios {s:?}: {e}")))?;
    let [train, val_seen, val_unseen, test] = parts[..] else {
        return Err(usage(format!("--ratios needs four comma-separated values, got {s:?}")));
    };
    Ok(SplitRatios { train, val_seen, val_unseen, test })
}

impl GenArgs {
    pub fn to_config(&self) -> Result<GenConfig, CliError> {
        let mut cfg = GenConfig {
            worlds: self.worlds,
            trajs: self.trajs,
            seed: self.seed,
            width: self.width,
            height: self.height,
            rooms: self.rooms,
            landmarks: self.landmarks,
            k: self.k,
            m: self.m,
            ratios: parse_ratios(&self.ratios)?,
            real_like_worlds: self.real_like_worlds,
            real_like_trajs: self.real_like_trajs,
            ..GenConfig::default()
        };
        cfg.traj.min_len = self.min_len;
        cfg.traj.max_len = self.max_len;
        cfg.traj.render.size = self.frame_size;
        cfg.validate().map_err(usage)?;
        Ok(cfg)
    }
}

pub fn cmd_gen(args: &GenArgs) -> Result<Dataset, CliError> {
    let out = args.out.clone();
    let args = apply_snapshot(&args.config, args.clone(), |a: &mut GenArgs| a.out = out)?;
    let cfg = args.to_config()?;
    let ds = generate_dataset(&cfg).map_err(|e| match e {
        DatasetError::BadRatios(_) | DatasetError::InvalidConfig(_) => usage(e),
        other => runtime(other),
    })?;
    let splits: Vec<DatasetSplit> = SplitName::ALL
        .iter()
        .map(|&name| DatasetSplit { name, traj_ids: ds.split(name).map(|t| t.traj.traj_id.clone()).collect() })
        .collect();
    let worlds = ds.trajectories.iter().map(|t| (t.traj.traj_id.clone(), t.traj.world_seed)).collect();
    check_split_laws(&splits, &worlds).map_err(runtime)?;
    write_dataset(&ds, &args.out).map_err(runtime)?;
    write_json(&args.out.join(DATASET_CONFIG_FILE), &cfg)?;
    write_json(&args.out.join("splits.json"), &splits)?;
    write_snapshot(&args.out, &args)?;
    Ok(ds)
}
