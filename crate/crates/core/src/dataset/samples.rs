use serde::{Deserialize, Serialize};

use crate::gridworld::Trajectory;
use crate::reasoning::sample_intermediates;

use super::DatasetError;

/// One next-frame prediction example. Fields are frame indices into the
/// trajectory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VizSample {
    pub traj_id: String,
    pub context: Vec<usize>,
    pub goal: usize,
    pub target: usize,
    pub step: usize,
}

/// One instruction example over a scene segment.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstrSample {
    pub traj_id: String,
    pub segment: usize,
    pub initial: usize,
    pub intermediates: Vec<usize>,
    pub goal: usize,
    pub instruction: String,
}

/// Stride-1 windows: `L - k` samples, each predicting the frame right after
/// its window.
pub fn extract_viz_samples(traj: &Trajectory, k: usize) -> Result<Vec<VizSample>, DatasetError> {
    let l = traj.len();
    if k == 0 || l <= k {
        return Err(DatasetError::TrajectoryTooShort { traj_id: traj.traj_id.clone(), len: l, need: k + 1 });
    }
    Ok((0..l - k)
        .map(|s| VizSample { traj_id: traj.traj_id.clone(), context: (s..s + k).collect(), goal: l - 1, target: s + k, step: s })
        .collect())
}

/// One sample per scene segment, with up to `m - 1` intermediates drawn from
/// the segment interior.
pub fn extract_instr_samples(traj: &Trajectory, m: usize) -> Result<Vec<InstrSample>, DatasetError> {
    if traj.segments.is_empty() || m < 2 {
        return Err(DatasetError::TrajectoryTooShort { traj_id: traj.traj_id.clone(), len: traj.len(), need: 1 });
    }
    traj.segments
        .iter()
        .enumerate()
        .map(|(i, seg)| {
            let interior: Vec<usize> = (seg.start + 1..seg.end.saturating_sub(1)).collect();
            let count = (m - 1).min(interior.len());
            let picks = sample_intermediates(interior.len(), count).expect("count bounded by candidates");
            Ok(InstrSample {
                traj_id: traj.traj_id.clone(),
                segment: i,
                initial: seg.start,
                intermediates: picks.into_iter().map(|j| interior[j]).collect(),
                goal: seg.end - 1,
                instruction: seg.instruction.clone(),
            })
        })
        .collect()
}
