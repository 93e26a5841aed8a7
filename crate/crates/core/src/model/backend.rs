use std::sync::Mutex;
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::gridworld::{EgoFrame, Trajectory};
use crate::tokenizer::{
    assemble_prefix, dequantize, quantize_frame, PromptInput, PromptShape, TaskKind, TokenKind, UnifiedVocab, VisualCodebook,
};

use super::transformer::ToyModel;
use super::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("remote backend: {0}")]
    Remote(String),
    #[error("decode: {0}")]
    Decode(String),
    #[error("decoded an empty instruction")]
    EmptyOutput,
    #[error("invalid input: {0}")]
    Input(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// The model interface the reasoning loops drive.
pub trait ModelBackend: Send + Sync {
    fn name(&self) -> &str;

    /// Longest token sequence the backend accepts; `usize::MAX` if unbounded.
    fn context_limit(&self) -> usize;

    /// Next observation after `context`, conditioned on the goal view.
    fn predict_frame(&self, context: &[EgoFrame], goal: &EgoFrame) -> Result<EgoFrame, BackendError>;

    /// Instruction for the route through `frames` to `goal`.
    fn generate_instruction(&self, frames: &[EgoFrame], goal: &EgoFrame, prev: Option<&str>) -> Result<String, BackendError>;
}

/// Greedy, type-constrained decoding over a trained [`ToyModel`].
pub struct ToyBackend {
    pub model: ToyModel,
    pub vocab: UnifiedVocab,
    pub codebook: VisualCodebook,
    pub shape: PromptShape,
    pub max_instruction_tokens: usize,
}

impl ToyBackend {
    pub fn new(model: ToyModel, vocab: UnifiedVocab, codebook: VisualCodebook, shape: PromptShape) -> Self {
        Self { model, vocab, codebook, shape, max_instruction_tokens: 64 }
    }

    fn frame_ids(&self, frame: &EgoFrame) -> Result<Vec<u32>, BackendError> {
        let codes = quantize_frame(frame, &self.codebook).map_err(|e| BackendError::Input(e.to_string()))?;
        if codes.len() != self.shape.tokens_per_frame {
            return Err(BackendError::Input(format!("frame yields {} tokens, model expects {}", codes.len(), self.shape.tokens_per_frame)));
        }
        Ok(codes.into_iter().map(|c| self.vocab.visual_id(c)).collect())
    }

    fn prefix(&self, kind: TaskKind, frames: &[EgoFrame], goal: &EgoFrame, prev: Option<&[u32]>) -> Result<Vec<u32>, BackendError> {
        let ctx = frames.iter().map(|f| self.frame_ids(f)).collect::<Result<Vec<_>, _>>()?;
        let goal = self.frame_ids(goal)?;
        let input = PromptInput { kind, context: &ctx, goal: &goal, prev_instruction: prev };
        assemble_prefix(&self.vocab, &input, &self.shape).map_err(|e| BackendError::Input(e.to_string()))
    }

    /// Run the prefix through the model and return the cache plus the logits
    /// for the first generated position.
    fn prefill(&self, prefix: &[u32], budget: usize) -> Result<(super::KvCache, Vec<f32>), BackendError> {
        let need = prefix.len() + budget;
        if need > self.model.config.context_len {
            return Err(ModelError::ContextOverflow { len: need, limit: self.model.config.context_len }.into());
        }
        let mut cache = self.model.new_cache();
        let mut logits = Vec::new();
        for &id in prefix {
            logits = self.model.step(&mut cache, id)?;
        }
        Ok((cache, logits))
    }

    /// Visual codes of the predicted next frame.
    pub fn predict_codes(&self, context: &[EgoFrame], goal: &EgoFrame) -> Result<Vec<usize>, BackendError> {
        let prefix = self.prefix(TaskKind::Viz, context, goal, None)?;
        let n = self.shape.tokens_per_frame;
        let (mut cache, mut logits) = self.prefill(&prefix, n)?;
        let vis = self.vocab.visual_ids();
        let mut codes = Vec::with_capacity(n);
        for i in 0..n {
            let best = argmax(&logits, vis.clone());
            codes.push(self.vocab.visual_code(best).map_err(|e| BackendError::Decode(e.to_string()))?);
            if i + 1 < n {
                logits = self.model.step(&mut cache, best)?;
            }
        }
        Ok(codes)
    }
}

/// Highest logit among `ids`; ties go to the lowest id.
fn argmax(logits: &[f32], ids: impl Iterator<Item = u32>) -> u32 {
    let mut best = (u32::MAX, f32::NEG_INFINITY);
    for id in ids {
        let v = logits[id as usize];
        if v > best.1 || best.0 == u32::MAX {
            best = (id, v);
        }
    }
    best.0
}

impl ModelBackend for ToyBackend {
    fn name(&self) -> &str {
        "toy"
    }

    fn context_limit(&self) -> usize {
        self.model.config.context_len
    }

    fn predict_frame(&self, context: &[EgoFrame], goal: &EgoFrame) -> Result<EgoFrame, BackendError> {
        let codes = self.predict_codes(context, goal)?;
        dequantize(&codes, &self.codebook, goal.width(), goal.height()).map_err(|e| BackendError::Decode(e.to_string()))
    }

    fn generate_instruction(&self, frames: &[EgoFrame], goal: &EgoFrame, prev: Option<&str>) -> Result<String, BackendError> {
        let prev_ids = prev.map(|p| self.vocab.text().encode(p));
        let prefix = self.prefix(TaskKind::Instr, frames, goal, prev_ids.as_deref())?;
        let budget = self.max_instruction_tokens;
        let (mut cache, mut logits) = self.prefill(&prefix, budget)?;
        let eos = self.vocab.eos();
        let unk = self.vocab.text().unk_id();
        let mut out = Vec::new();
        for i in 0..budget {
            let allowed = self.vocab.text_ids().filter(|&id| id != unk).chain((i > 0).then_some(eos));
            let best = argmax(&logits, allowed);
            if best == eos {
                break;
            }
            debug_assert_eq!(self.vocab.kind(best), Some(TokenKind::Text));
            out.push(best);
            if i + 1 < budget {
                logits = self.model.step(&mut cache, best)?;
            }
        }
        if out.is_empty() {
            return Err(BackendError::EmptyOutput);
        }
        self.vocab.text().decode(&out).map_err(|e| BackendError::Decode(e.to_string()))
    }
}

/// Answers from a known trajectory: the true next frame and the true
/// instruction.
///
/// Trajectories often repeat frames (a straight corridor looks the same for
/// several steps), so a context window can match more than one place. The
/// backend remembers where the previous window matched and takes the first
/// match after it, falling back to the first match overall when a new
/// episode starts.
pub struct OracleBackend {
    traj: Trajectory,
    /// Start and length of the last matched context window.
    last: Mutex<Option<(usize, usize)>>,
}

impl OracleBackend {
    pub fn new(traj: Trajectory) -> Self {
        Self { traj, last: Mutex::new(None) }
    }

    fn locate(&self, context: &[EgoFrame]) -> Option<usize> {
        let frames = &self.traj.frames;
        let k = context.len();
        let mut matches = (0..=frames.len() - k).filter(|&i| frames[i..i + k] == *context);
        let first = matches.next()?;
        let mut last = self.last.lock().unwrap_or_else(|e| e.into_inner());
        let start = match *last {
            Some((prev, _)) if first <= prev => std::iter::once(first).chain(matches).find(|&i| i > prev).unwrap_or(first),
            _ => first,
        };
        *last = Some((start, k));
        Some(start)
    }

    /// Index of `frame`, preferring the frame most recently predicted.
    fn index_of(&self, frame: &EgoFrame) -> Option<usize> {
        let frames = &self.traj.frames;
        let tracked = self.last.lock().unwrap_or_else(|e| e.into_inner()).map(|(s, k)| (s + k).min(frames.len() - 1));
        tracked.filter(|&i| frames[i] == *frame).or_else(|| frames.iter().position(|f| f == frame))
    }
}

impl ModelBackend for OracleBackend {
    fn name(&self) -> &str {
        "oracle"
    }

    fn context_limit(&self) -> usize {
        usize::MAX
    }

    fn predict_frame(&self, context: &[EgoFrame], _goal: &EgoFrame) -> Result<EgoFrame, BackendError> {
        let k = context.len();
        let frames = &self.traj.frames;
        if k == 0 || k > frames.len() {
            return Err(BackendError::Input(format!("context of {k} frames")));
        }
        let start = self
            .locate(context)
            .ok_or_else(|| BackendError::Input("context window is not on the trajectory".into()))?;
        Ok(frames[(start + k).min(frames.len() - 1)].clone())
    }

    /// Without a previous instruction the full route description; with one,
    /// the sub-instructions of every segment reached by the last frame.
    fn generate_instruction(&self, frames: &[EgoFrame], _goal: &EgoFrame, prev: Option<&str>) -> Result<String, BackendError> {
        if prev.is_none() {
            return Ok(self.traj.instruction.clone());
        }
        let last = frames.last().ok_or_else(|| BackendError::Input("no frames".into()))?;
        let idx = self.index_of(last).ok_or_else(|| BackendError::Input("frame is not on the trajectory".into()))?;
        Ok(self.traj.instruction_through(idx))
    }
}

pub const REMOTE_URL_ENV: &str = "GOVIG_REMOTE_URL";

/// JSON-over-HTTP client for an external model server.
pub struct RemoteBackend {
    base_url: String,
    agent: ureq::Agent,
    k: usize,
}

#[derive(Serialize)]
struct PredictRequest {
    context_frames: Vec<String>,
    goal_frame: String,
    k: usize,
}

#[derive(Deserialize)]
struct PredictResponse {
    frame: String,
}

#[derive(Serialize)]
struct InstructionRequest<'a> {
    frames: Vec<String>,
    goal_frame: String,
    prev_instruction: Option<&'a str>,
}

#[derive(Deserialize)]
struct InstructionResponse {
    instruction: String,
}

fn b64(frame: &EgoFrame) -> String {
    base64::engine::general_purpose::STANDARD.encode(frame.to_png())
}

impl RemoteBackend {
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

    /// `url` is the server root; the `GOVIG_REMOTE_URL` variable overrides it.
    pub fn new(url: &str, timeout: Duration, k: usize) -> Self {
        let base_url = std::env::var(REMOTE_URL_ENV).unwrap_or_else(|_| url.to_string());
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        Self { base_url: base_url.trim_end_matches('/').to_string(), agent, k }
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn post<T: Serialize, R: for<'de> Deserialize<'de>>(&self, path: &str, body: &T) -> Result<R, BackendError> {
        let url = format!("{}{path}", self.base_url);
        let resp = self.agent.post(&url).send_json(body).map_err(|e| match e {
            ureq::Error::Status(code, _) => BackendError::Remote(format!("{url} returned HTTP {code}")),
            other => BackendError::Remote(format!("{url}: {other}")),
        })?;
        resp.into_json::<R>().map_err(|e| BackendError::Remote(format!("malformed body from {url}: {e}")))
    }
}

fn decode_frame(s: &str) -> Result<EgoFrame, BackendError> {
    let bytes = base64::engine::general_purpose::STANDARD.decode(s).map_err(|e| BackendError::Remote(format!("bad base64: {e}")))?;
    EgoFrame::from_png(&bytes).map_err(|e| BackendError::Remote(format!("bad png: {e}")))
}

impl ModelBackend for RemoteBackend {
    fn name(&self) -> &str {
        "remote"
    }

    fn context_limit(&self) -> usize {
        usize::MAX
    }

    fn predict_frame(&self, context: &[EgoFrame], goal: &EgoFrame) -> Result<EgoFrame, BackendError> {
        if context.len() != self.k {
            return Err(BackendError::Input(format!("{} context frames, expected {}", context.len(), self.k)));
        }
        let req = PredictRequest { context_frames: context.iter().map(b64).collect(), goal_frame: b64(goal), k: self.k };
        let resp: PredictResponse = self.post("/v1/predict_frame", &req)?;
        let frame = decode_frame(&resp.frame)?;
        if (frame.width(), frame.height()) != (goal.width(), goal.height()) {
            return Err(BackendError::Remote(format!("frame is {}x{}, goal is {}x{}", frame.width(), frame.height(), goal.width(), goal.height())));
        }
        Ok(frame)
    }

    fn generate_instruction(&self, frames: &[EgoFrame], goal: &EgoFrame, prev: Option<&str>) -> Result<String, BackendError> {
        let req = InstructionRequest { frames: frames.iter().map(b64).collect(), goal_frame: b64(goal), prev_instruction: prev };
        let resp: InstructionResponse = self.post("/v1/generate_instruction", &req)?;
        Ok(resp.instruction)
    }
}
