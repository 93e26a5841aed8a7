//! Single-file checkpoints: `GVCK`, a little-endian u64 header length, a JSON
//! header, then little-endian f32 tensors in the order the header lists them.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::optim::{Optimizer, OptimizerKind};
use super::train::{EpochStats, TrainState};
use super::transformer::{ModelConfig, ToyModel};
use super::ModelError;

const MAGIC: &[u8; 4] = b"GVCK";

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct OptimizerHeader {
    kind: OptimizerKind,
    step: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: u32,
    model: ModelConfig,
    tensors: Vec<TensorEntry>,
    optimizer: Option<OptimizerHeader>,
    epochs_done: usize,
    trace: Vec<EpochStats>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ToyModel,
    pub state: Option<TrainState>,
}

fn write_f32s(w: &mut impl Write, xs: &[f32]) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(xs.len() * 4);
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)
}

fn read_f32s(r: &mut impl Read, n: usize) -> Result<Vec<f32>, ModelError> {
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf).map_err(|e| ModelError::Checkpoint(format!("truncated tensor data: {e}")))?;
    Ok(buf.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect())
}

impl Checkpoint {
    pub fn write_to(&self, mut w: impl Write) -> Result<(), ModelError> {
        let layout = self.model.layout();
        let mut tensors: Vec<TensorEntry> =
            layout.tensors().iter().map(|(name, shape, _)| TensorEntry { name: name.clone(), shape: shape.clone() }).collect();
        let n = self.model.params.len();
        if let Some(s) = &self.state {
            tensors.push(TensorEntry { name: "optim.m".into(), shape: vec![s.optimizer.m.len()] });
            if !s.optimizer.v.is_empty() {
                tensors.push(TensorEntry { name: "optim.v".into(), shape: vec![n] });
            }
        }
        let header = Header {
            format: 1,
            model: self.model.config,
            tensors,
            optimizer: self.state.as_ref().map(|s| OptimizerHeader { kind: s.optimizer.kind, step: s.optimizer.step }),
            epochs_done: self.state.as_ref().map_or(0, |s| s.epochs_done),
            trace: self.state.as_ref().map(|s| s.trace.clone()).unwrap_or_default(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        w.write_all(MAGIC)?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        write_f32s(&mut w, &self.model.params)?;
        if let Some(s) = &self.state {
            write_f32s(&mut w, &s.optimizer.m)?;
            write_f32s(&mut w, &s.optimizer.v)?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, ModelError> {
        let mut head = [0u8; 12];
        r.read_exact(&mut head).map_err(|e| ModelError::Checkpoint(format!("missing header: {e}")))?;
        if &head[..4] != MAGIC {
            return Err(ModelError::Checkpoint("bad magic".into()));
        }
        let len = u64::from_le_bytes(head[4..].try_into().unwrap()) as usize;
        let mut json = vec![0u8; len];
        r.read_exact(&mut json).map_err(|e| ModelError::Checkpoint(format!("truncated header: {e}")))?;
        let header: Header = serde_json::from_slice(&json).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        let expected = ToyModel::new(header.model, 0)?.layout();
        for (i, (name, shape, _)) in expected.tensors().iter().enumerate() {
            match header.tensors.get(i) {
                Some(t) if &t.name == name && &t.shape == shape => {}
                _ => return Err(ModelError::Checkpoint(format!("tensor {i} does not match {name} {shape:?}"))),
            }
        }
        let params = read_f32s(&mut r, expected.total())?;
        let model = ToyModel::from_params(header.model, params)?;
        let state = match header.optimizer {
            None => None,
            Some(o) => {
                let m = read_f32s(&mut r, expected.total())?;
                let v = match o.kind {
                    OptimizerKind::AdamW { .. } => read_f32s(&mut r, expected.total())?,
                    OptimizerKind::Sgd { .. } => Vec::new(),
                };
                Some(TrainState {
                    optimizer: Optimizer { kind: o.kind, step: o.step, m, v },
                    epochs_done: header.epochs_done,
                    trace: header.trace,
                })
            }
        };
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(ModelError::Checkpoint(format!("{} trailing bytes", rest.len())));
        }
        Ok(Self { model, state })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}
