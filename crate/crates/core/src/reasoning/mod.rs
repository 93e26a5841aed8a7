//! One-pass and interleaved inference loops over any [`ModelBackend`].

use serde::{Deserialize, Serialize};

use crate::gridworld::EgoFrame;
use crate::metrics::{ssim, MetricError};
use crate::model::{BackendError, ModelBackend};

#[derive(Debug, thiserror::Error)]
pub enum ReasoningError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("invalid reasoning config: {0}")]
    InvalidConfig(String),
    #[error("{got} initial observations, expected k = {k}")]
    ContextSizeMismatch { got: usize, k: usize },
    #[error("cannot sample {count} frames from {candidates} candidates")]
    CountExceedsCandidates { count: usize, candidates: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReasoningConfig {
    /// Frames in the visualization window.
    pub k: usize,
    /// Frames in an instruction prompt (initial plus `m - 1` intermediates).
    pub m: usize,
    /// SSIM above which a predicted frame counts as the goal.
    pub tau: f64,
    pub max_steps: usize,
}

impl ReasoningConfig {
    pub fn new(k: usize) -> Self {
        Self { k, m: k + 1, tau: 0.7, max_steps: 4 * (k + 16) }
    }

    pub fn validate(&self) -> Result<(), ReasoningError> {
        if self.k == 0 || self.m == 0 || self.max_steps == 0 {
            return Err(ReasoningError::InvalidConfig("k, m and max_steps must be at least 1".into()));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(ReasoningError::InvalidConfig(format!("tau {} must lie in (0, 1)", self.tau)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    OnePass,
    Interleaved,
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "one-pass" | "one_pass" => Ok(Strategy::OnePass),
            "interleaved" => Ok(Strategy::Interleaved),
            other => Err(format!("unknown strategy {other:?}; expected one-pass or interleaved")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Termination {
    ByThreshold,
    ByMaxSteps,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeResult {
    pub strategy: Strategy,
    pub predicted_frames: Vec<EgoFrame>,
    pub instruction: String,
    /// One entry per step for interleaved runs; empty for one-pass.
    pub instruction_history: Vec<String>,
    pub steps: usize,
    pub terminated: Termination,
    /// SSIM of the last predicted frame against the goal.
    pub final_ssim: f64,
}

/// Evenly spaced picks among `candidates` items: index
/// `floor((j + 1) * C / (count + 1))` for each `j < count`. If none of those
/// lands in the final third, the last pick becomes `C - 1`.
pub fn sample_intermediates(candidates: usize, count: usize) -> Result<Vec<usize>, ReasoningError> {
    if count > candidates {
        return Err(ReasoningError::CountExceedsCandidates { count, candidates });
    }
    let mut idx: Vec<usize> = (0..count).map(|j| (j + 1) * candidates / (count + 1)).collect();
    idx.dedup();
    if let Some(last) = idx.last_mut() {
        if *last < 2 * candidates / 3 {
            *last = candidates - 1;
        }
    }
    idx.dedup();
    Ok(idx)
}

struct Forecast {
    predicted: Vec<EgoFrame>,
    history: Vec<String>,
    terminated: Termination,
    final_ssim: f64,
}

fn forecast(
    backend: &dyn ModelBackend,
    init: &[EgoFrame],
    goal: &EgoFrame,
    cfg: &ReasoningConfig,
    refine: bool,
) -> Result<Forecast, ReasoningError> {
    cfg.validate()?;
    if init.len() != cfg.k {
        return Err(ReasoningError::ContextSizeMismatch { got: init.len(), k: cfg.k });
    }
    let mut window = init.to_vec();
    let mut predicted = Vec::new();
    let mut history: Vec<String> = Vec::new();
    loop {
        let next = backend.predict_frame(&window, goal)?;
        window.remove(0);
        window.push(next.clone());
        predicted.push(next);
        if refine {
            let prev = history.last().map_or("", String::as_str);
            let instr = backend.generate_instruction(&window, goal, Some(prev))?;
            history.push(instr);
        }
        let score = ssim(predicted.last().unwrap(), goal)?;
        if score > cfg.tau {
            return Ok(Forecast { predicted, history, terminated: Termination::ByThreshold, final_ssim: score });
        }
        if predicted.len() >= cfg.max_steps {
            return Ok(Forecast { predicted, history, terminated: Termination::ByMaxSteps, final_ssim: score });
        }
    }
}

/// Forecast to the goal first, then describe the route once from the first
/// observation, sampled intermediates and the goal.
pub fn one_pass(backend: &dyn ModelBackend, init: &[EgoFrame], goal: &EgoFrame, cfg: &ReasoningConfig) -> Result<EpisodeResult, ReasoningError> {
    let f = forecast(backend, init, goal, cfg, false)?;
    let candidates: Vec<&EgoFrame> = init[1..].iter().chain(&f.predicted).collect();
    let count = (cfg.m - 1).min(candidates.len());
    let mut frames = vec![init[0].clone()];
    frames.extend(sample_intermediates(candidates.len(), count)?.into_iter().map(|i| candidates[i].clone()));
    let instruction = backend.generate_instruction(&frames, goal, None)?;
    Ok(EpisodeResult {
        strategy: Strategy::OnePass,
        steps: f.predicted.len(),
        predicted_frames: f.predicted,
        instruction,
        instruction_history: Vec::new(),
        terminated: f.terminated,
        final_ssim: f.final_ssim,
    })
}

/// Alternate one-frame forecasts with instruction refinement.
pub fn interleaved(backend: &dyn ModelBackend, init: &[EgoFrame], goal: &EgoFrame, cfg: &ReasoningConfig) -> Result<EpisodeResult, ReasoningError> {
    let f = forecast(backend, init, goal, cfg, true)?;
    Ok(EpisodeResult {
        strategy: Strategy::Interleaved,
        steps: f.predicted.len(),
        predicted_frames: f.predicted,
        instruction: f.history.last().cloned().unwrap_or_default(),
        instruction_history: f.history,
        terminated: f.terminated,
        final_ssim: f.final_ssim,
    })
}

pub fn run(strategy: Strategy, backend: &dyn ModelBackend, init: &[EgoFrame], goal: &EgoFrame, cfg: &ReasoningConfig) -> Result<EpisodeResult, ReasoningError> {
    match strategy {
        Strategy::OnePass => one_pass(backend, init, goal, cfg),
        Strategy::Interleaved => interleaved(backend, init, goal, cfg),
    }
}
