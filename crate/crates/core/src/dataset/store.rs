use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::gridworld::{EgoFrame, Trajectory};

use super::samples::{InstrSample, VizSample};
use super::split::SplitName;
use super::DatasetError;

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const TRAJECTORIES_FILE: &str = "trajectories.jsonl";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sample {
    Viz(VizSample),
    Instr(InstrSample),
}

impl Sample {
    pub fn traj_id(&self) -> &str {
        match self {
            Sample::Viz(s) => &s.traj_id,
            Sample::Instr(s) => &s.traj_id,
        }
    }

    /// Every frame index the sample refers to.
    pub fn frame_indices(&self) -> Vec<usize> {
        match self {
            Sample::Viz(s) => s.context.iter().copied().chain([s.goal, s.target]).collect(),
            Sample::Instr(s) => [s.initial].into_iter().chain(s.intermediates.iter().copied()).chain([s.goal]).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub split: SplitName,
    pub sample: Sample,
}

impl Record {
    pub fn new(split: SplitName, sample: Sample) -> Self {
        let id = match &sample {
            Sample::Viz(s) => format!("viz/{}/{:03}", s.traj_id, s.step),
            Sample::Instr(s) => format!("instr/{}/{:03}", s.traj_id, s.segment),
        };
        Self { id, split, sample }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitTrajectory {
    pub split: SplitName,
    pub traj: Trajectory,
}

/// Trajectories with their frames plus the samples drawn from them.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub trajectories: Vec<SplitTrajectory>,
    pub records: Vec<Record>,
}

impl Dataset {
    pub fn trajectory(&self, traj_id: &str) -> Option<&SplitTrajectory> {
        self.trajectories.iter().find(|t| t.traj.traj_id == traj_id)
    }

    pub fn split(&self, name: SplitName) -> impl Iterator<Item = &SplitTrajectory> {
        self.trajectories.iter().filter(move |t| t.split == name)
    }

    pub fn records_in(&self, name: SplitName) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(move |r| r.split == name)
    }
}

/// Relative location of one frame inside a dataset directory.
pub fn frame_ref(split: SplitName, traj_id: &str, index: usize) -> String {
    format!("{split}/{traj_id}/{index:03}.png")
}

fn parse_frame_ref(r: &str, split: SplitName, traj_id: &str) -> Option<usize> {
    let rest = r.strip_prefix(&format!("{split}/{traj_id}/"))?.strip_suffix(".png")?;
    if rest.len() < 3 || !rest.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    rest.parse().ok()
}

#[derive(Serialize, Deserialize)]
struct Header {
    schema: u32,
    count: usize,
    sha256: String,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Entry {
    Viz {
        id: String,
        split: SplitName,
        traj_id: String,
        step: usize,
        context: Vec<String>,
        goal: String,
        target: String,
    },
    Instr {
        id: String,
        split: SplitName,
        traj_id: String,
        segment: usize,
        initial: String,
        intermediates: Vec<String>,
        goal: String,
        instruction: String,
    },
}

impl Entry {
    fn from_record(r: &Record) -> Self {
        let fr = |i: usize| frame_ref(r.split, r.sample.traj_id(), i);
        match &r.sample {
            Sample::Viz(s) => Entry::Viz {
                id: r.id.clone(),
                split: r.split,
                traj_id: s.traj_id.clone(),
                step: s.step,
                context: s.context.iter().map(|&i| fr(i)).collect(),
                goal: fr(s.goal),
                target: fr(s.target),
            },
            Sample::Instr(s) => Entry::Instr {
                id: r.id.clone(),
                split: r.split,
                traj_id: s.traj_id.clone(),
                segment: s.segment,
                initial: fr(s.initial),
                intermediates: s.intermediates.iter().map(|&i| fr(i)).collect(),
                goal: fr(s.goal),
                instruction: s.instruction.clone(),
            },
        }
    }

    fn into_record(self) -> Result<Record, String> {
        let resolve = |r: &str, split, traj: &str| {
            parse_frame_ref(r, split, traj).ok_or_else(|| format!("frame reference {r:?} does not belong to {split}/{traj}"))
        };
        match self {
            Entry::Viz { id, split, traj_id, step, context, goal, target } => {
                let context = context.iter().map(|r| resolve(r, split, &traj_id)).collect::<Result<_, _>>()?;
                let (goal, target) = (resolve(&goal, split, &traj_id)?, resolve(&target, split, &traj_id)?);
                Ok(Record { id, split, sample: Sample::Viz(VizSample { traj_id, context, goal, target, step }) })
            }
            Entry::Instr { id, split, traj_id, segment, initial, intermediates, goal, instruction } => {
                let initial = resolve(&initial, split, &traj_id)?;
                let intermediates = intermediates.iter().map(|r| resolve(r, split, &traj_id)).collect::<Result<_, _>>()?;
                let goal = resolve(&goal, split, &traj_id)?;
                Ok(Record {
                    id,
                    split,
                    sample: Sample::Instr(InstrSample { traj_id, segment, initial, intermediates, goal, instruction }),
                })
            }
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |e| DatasetError::Io(format!("{}: {e}", path.display()))
}

fn json_lines<T: Serialize>(items: impl Iterator<Item = T>) -> Result<Vec<String>, DatasetError> {
    items.map(|x| serde_json::to_string(&x).map_err(|e| DatasetError::Io(e.to_string()))).collect()
}

fn checksum(lines: &[String]) -> String {
    let mut h = Sha256::new();
    for l in lines {
        h.update(l.as_bytes());
        h.update(b"\n");
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn write_checked(path: &Path, lines: &[String]) -> Result<(), DatasetError> {
    let header = serde_json::to_string(&Header { schema: SCHEMA_VERSION, count: lines.len(), sha256: checksum(lines) })
        .expect("header serializes");
    let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(io_err(path))?);
    writeln!(f, "{header}").map_err(io_err(path))?;
    for l in lines {
        writeln!(f, "{l}").map_err(io_err(path))?;
    }
    f.flush().map_err(io_err(path))
}

/// Reads a checksummed JSONL file, returning `(line number, line)` pairs.
fn read_checked(path: &Path) -> Result<Vec<(usize, String)>, DatasetError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut lines = BufReader::new(file).lines();
    let corrupt = |line: usize, reason: String| DatasetError::ManifestCorrupt { file: path.display().to_string(), line, reason };
    let first = lines.next().ok_or_else(|| corrupt(1, "missing header".into()))?.map_err(io_err(path))?;
    let header: Header = serde_json::from_str(&first).map_err(|e| corrupt(1, format!("bad header: {e}")))?;
    if header.schema != SCHEMA_VERSION {
        return Err(corrupt(1, format!("unsupported schema {}", header.schema)));
    }
    let mut body = Vec::new();
    for (i, l) in lines.enumerate() {
        body.push((i + 2, l.map_err(io_err(path))?));
    }
    if body.len() != header.count {
        let line = body.len().min(header.count) + 2;
        return Err(corrupt(line, format!("header declares {} records, found {}", header.count, body.len())));
    }
    let plain: Vec<String> = body.iter().map(|(_, l)| l.clone()).collect();
    if checksum(&plain) != header.sha256 {
        // Point at the first line that fails to parse, if any.
        let line = body.iter().find(|(_, l)| serde_json::from_str::<serde_json::Value>(l).is_err()).map_or(1, |(n, _)| *n);
        return Err(corrupt(line, "checksum mismatch".into()));
    }
    Ok(body)
}

/// Writes frame PNGs, `trajectories.jsonl` and `manifest.jsonl` under `dir`.
pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<(), DatasetError> {
    for st in &ds.trajectories {
        let tdir = dir.join(st.split.as_str()).join(&st.traj.traj_id);
        fs::create_dir_all(&tdir).map_err(io_err(&tdir))?;
        for (i, f) in st.traj.frames.iter().enumerate() {
            let p = dir.join(frame_ref(st.split, &st.traj.traj_id, i));
            f.save_png(&p).map_err(io_err(&p))?;
        }
    }
    let trajs = json_lines(ds.trajectories.iter().map(|t| (t.split, &t.traj)))?;
    write_checked(&dir.join(TRAJECTORIES_FILE), &trajs)?;
    let entries = json_lines(ds.records.iter().map(Entry::from_record))?;
    write_checked(&dir.join(MANIFEST_FILE), &entries)
}

/// Inverse of [`write_dataset`]. Frames are loaded from their PNG files and
/// every manifest reference is checked to resolve to one.
pub fn read_dataset(dir: &Path) -> Result<Dataset, DatasetError> {
    let tpath = dir.join(TRAJECTORIES_FILE);
    let mut trajectories = Vec::new();
    for (line, text) in read_checked(&tpath)? {
        let (split, mut traj): (SplitName, Trajectory) = serde_json::from_str(&text)
            .map_err(|e| DatasetError::ManifestCorrupt { file: tpath.display().to_string(), line, reason: e.to_string() })?;
        traj.frames = (0..traj.poses.len())
            .map(|i| load_frame(&dir.join(frame_ref(split, &traj.traj_id, i))))
            .collect::<Result<_, _>>()?;
        trajectories.push(SplitTrajectory { split, traj });
    }
    let mpath = dir.join(MANIFEST_FILE);
    let mut records = Vec::new();
    for (line, text) in read_checked(&mpath)? {
        let corrupt = |reason: String| DatasetError::ManifestCorrupt { file: mpath.display().to_string(), line, reason };
        let entry: Entry = serde_json::from_str(&text).map_err(|e| corrupt(e.to_string()))?;
        let rec = entry.into_record().map_err(corrupt)?;
        let st = trajectories
            .iter()
            .find(|t| t.traj.traj_id == rec.sample.traj_id() && t.split == rec.split)
            .ok_or_else(|| corrupt(format!("unknown trajectory {}", rec.sample.traj_id())))?;
        if let Some(i) = rec.sample.frame_indices().into_iter().find(|&i| i >= st.traj.len()) {
            return Err(corrupt(format!("frame {i} is missing")));
        }
        records.push(rec);
    }
    Ok(Dataset { trajectories, records })
}

fn load_frame(path: &PathBuf) -> Result<EgoFrame, DatasetError> {
    EgoFrame::load_png(path).map_err(|e| DatasetError::Io(format!("{}: {e}", path.display())))
}
