use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gridworld::{build_world, sample_trajectories, TrajConfig, Trajectory, WorldSpec, WorldStyle};

use super::samples::{extract_instr_samples, extract_viz_samples};
use super::split::{split_dataset, SplitName, SplitRatios};
use super::store::{Dataset, Record, Sample, SplitTrajectory};
use super::DatasetError;

/// Everything `generate_dataset` needs. `trajs` is the total over all
/// regular worlds, spread as evenly as possible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub worlds: usize,
    pub trajs: usize,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub rooms: usize,
    pub landmarks: usize,
    pub traj: TrajConfig,
    pub k: usize,
    pub m: usize,
    pub ratios: SplitRatios,
    /// Extra worlds drawn with the real-like palette, all assigned to the
    /// `real_like` split.
    pub real_like_worlds: usize,
    pub real_like_trajs: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            worlds: 5,
            trajs: 40,
            seed: 0,
            width: 16,
            height: 16,
            rooms: 3,
            landmarks: 4,
            traj: TrajConfig::default(),
            k: 2,
            m: 3,
            ratios: SplitRatios::default(),
            real_like_worlds: 0,
            real_like_trajs: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        self.ratios.validate()?;
        let bad = |msg: &str| Err(DatasetError::InvalidConfig(msg.into()));
        if self.worlds == 0 || self.trajs < self.worlds {
            return bad("need at least one world and one trajectory per world");
        }
        if self.k == 0 || self.m < 2 {
            return bad("k must be positive and m at least 2");
        }
        if self.traj.min_len <= self.k {
            return bad("min_len must exceed k so every trajectory yields samples");
        }
        if self.real_like_worlds > 0 && self.real_like_trajs < self.real_like_worlds {
            return bad("real_like_trajs must cover every real-like world");
        }
        Ok(())
    }

    pub fn world_seed(&self, index: usize) -> u64 {
        self.seed * 10_000 + index as u64
    }

    pub fn real_like_seed(&self, index: usize) -> u64 {
        self.seed * 10_000 + 5_000 + index as u64
    }
}

fn spread(total: usize, parts: usize) -> Vec<usize> {
    (0..parts).map(|i| total / parts + usize::from(i < total % parts)).collect()
}

fn world_batch(cfg: &GenConfig, seeds: &[u64], counts: &[usize], style: WorldStyle) -> Result<Vec<Trajectory>, DatasetError> {
    let per_world: Vec<Vec<Trajectory>> = seeds
        .par_iter()
        .zip(counts)
        .map(|(&seed, &count)| {
            let spec = WorldSpec::new(cfg.width, cfg.height, cfg.rooms, cfg.landmarks, seed).with_style(style);
            let world = build_world(&spec)?;
            sample_trajectories(&world, count, &cfg.traj, cfg.seed)
        })
        .collect::<Result<_, _>>()
        .map_err(|e| DatasetError::Generation(e.to_string()))?;
    Ok(per_world.into_iter().flatten().collect())
}

/// Build worlds, sample trajectories, assign splits and extract samples.
pub fn generate_dataset(cfg: &GenConfig) -> Result<Dataset, DatasetError> {
    cfg.validate()?;
    let seeds: Vec<u64> = (0..cfg.worlds).map(|i| cfg.world_seed(i)).collect();
    let trajs = world_batch(cfg, &seeds, &spread(cfg.trajs, cfg.worlds), WorldStyle::Standard)?;
    let keys: Vec<(String, u64)> = trajs.iter().map(|t| (t.traj_id.clone(), t.world_seed)).collect();
    let splits = split_dataset(&keys, &cfg.ratios, cfg.seed)?;

    let mut by_id: std::collections::HashMap<String, Trajectory> = trajs.into_iter().map(|t| (t.traj_id.clone(), t)).collect();
    let mut out: Vec<SplitTrajectory> = Vec::new();
    for s in &splits {
        for id in &s.traj_ids {
            out.push(SplitTrajectory { split: s.name, traj: by_id.remove(id).expect("split ids come from the corpus") });
        }
    }
    if cfg.real_like_worlds > 0 {
        let seeds: Vec<u64> = (0..cfg.real_like_worlds).map(|i| cfg.real_like_seed(i)).collect();
        let mut extra = world_batch(cfg, &seeds, &spread(cfg.real_like_trajs, cfg.real_like_worlds), WorldStyle::RealLike)?;
        extra.sort_by(|a, b| a.traj_id.cmp(&b.traj_id));
        out.extend(extra.into_iter().map(|traj| SplitTrajectory { split: SplitName::RealLike, traj }));
    }
    let records = extract_records(&out, cfg.k, cfg.m)?;
    Ok(Dataset { trajectories: out, records })
}

/// Viz then Instr records for every trajectory, in trajectory order.
pub fn extract_records(trajs: &[SplitTrajectory], k: usize, m: usize) -> Result<Vec<Record>, DatasetError> {
    let per_traj: Vec<Vec<Record>> = trajs
        .par_iter()
        .map(|st| {
            let viz = extract_viz_samples(&st.traj, k)?.into_iter().map(Sample::Viz);
            let instr = extract_instr_samples(&st.traj, m)?.into_iter().map(Sample::Instr);
            Ok(viz.chain(instr).map(|s| Record::new(st.split, s)).collect())
        })
        .collect::<Result<_, DatasetError>>()?;
    Ok(per_traj.into_iter().flatten().collect())
}
