use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{read_dataset, Dataset, SplitName};
use crate::gridworld::EgoFrame;
use crate::metrics::{bleu4, cider, corpus_bleu4, meteor_lite, psnr, rouge_l, ssim};

use super::infer::{EpisodeRecord, EPISODES_DIR};
use super::{runtime, usage, write_json, CliError};

/// Per-frame PSNR is capped here so that exact reconstructions stay finite
/// in reports.
pub const PSNR_CAP_DB: f64 = 100.0;

#[derive(Debug, Clone, clap::Args, Serialize, Deserialize)]
pub struct EvalArgs {
    /// One or more `infer` output directories; several produce a comparison
    /// table.
    #[arg(long, required_unless_present = "config", num_args = 1..)]
    pub results: Vec<PathBuf>,
    #[arg(long, required_unless_present = "config", default_value = ".")]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Row labels for the comparison table, one per results directory.
    #[arg(long, num_args = 1..)]
    pub labels: Vec<String>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub bleu4: f64,
    pub cider: f64,
    pub meteor: f64,
    pub rouge_l: f64,
    /// Absent when no sample predicted any frame.
    pub ssim: Option<f64>,
    pub psnr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScores {
    pub traj_id: String,
    pub split: SplitName,
    pub scores: ScoreSet,
    pub predicted_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub results: PathBuf,
    pub per_sample: Vec<SampleScores>,
    pub aggregates: ScoreSet,
    pub corpus_bleu4: f64,
    pub by_split: BTreeMap<SplitName, ScoreSet>,
    /// Episodes whose inference failed and were left out.
    pub failed: Vec<String>,
}

fn load_records(results: &Path) -> Result<Vec<EpisodeRecord>, CliError> {
    let dir = results.join(EPISODES_DIR);
    let entries = match fs::read_dir(&dir) {
        Ok(e) => e,
        Err(_) => return Err(usage(format!("{} holds no episode results", results.display()))),
    };
    let mut records = Vec::new();
    for e in entries {
        let path = e.map_err(runtime)?.path().join("result.json");
        if path.is_file() {
            records.push(super::read_json::<EpisodeRecord>(&path)?);
        }
    }
    if records.is_empty() {
        return Err(usage(format!("{} holds no episode results", results.display())));
    }
    records.sort_by(|a, b| a.traj_id.cmp(&b.traj_id));
    Ok(records)
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn aggregate<'a>(samples: impl Iterator<Item = &'a SampleScores> + Clone) -> ScoreSet {
    let m = |f: fn(&ScoreSet) -> f64| mean(samples.clone().map(|s| f(&s.scores))).unwrap_or(0.0);
    ScoreSet {
        bleu4: m(|s| s.bleu4),
        cider: m(|s| s.cider),
        meteor: m(|s| s.meteor),
        rouge_l: m(|s| s.rouge_l),
        ssim: mean(samples.clone().filter_map(|s| s.scores.ssim)),
        psnr: mean(samples.filter_map(|s| s.scores.psnr)),
    }
}

/// Mean SSIM and capped PSNR of predicted frames against the ground truth at
/// the same trajectory index (the goal once the path is exhausted).
fn frame_scores(results: &Path, rec: &EpisodeRecord, truth: &[EgoFrame]) -> Result<(Option<f64>, Option<f64>), CliError> {
    let mut s = Vec::new();
    let mut p = Vec::new();
    for (j, rel) in rec.frame_paths.iter().enumerate() {
        let path = results.join(rel);
        let pred = EgoFrame::load_png(&path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
        let gt = &truth[(rec.k + j).min(truth.len() - 1)];
        s.push(ssim(&pred, gt).map_err(runtime)?);
        p.push(psnr(&pred, gt).map_err(runtime)?.min(PSNR_CAP_DB));
    }
    Ok((mean(s.into_iter()), mean(p.into_iter())))
}

fn evaluate_run(results: &Path, label: String, ds: &Dataset) -> Result<EvalReport, CliError> {
    let records = load_records(results)?;
    let (ok, failed): (Vec<_>, Vec<_>) = records.into_iter().partition(|r| r.error.is_none());
    let failed = failed.into_iter().map(|r| r.traj_id).collect();
    let mut refs = Vec::with_capacity(ok.len());
    for r in &ok {
        let st = ds.trajectory(&r.traj_id).ok_or_else(|| CliError::MissingReference(r.traj_id.clone()))?;
        refs.push(st);
    }
    let cands: Vec<&str> = ok.iter().map(|r| r.instruction.as_str()).collect();
    let ref_sets: Vec<Vec<&str>> = refs.iter().map(|st| vec![st.traj.instruction.as_str()]).collect();
    let (cider_scores, corpus) = if ok.is_empty() {
        (Vec::new(), 0.0)
    } else {
        (cider(&cands, &ref_sets).map_err(runtime)?.per_sample, corpus_bleu4(&cands, &ref_sets).map_err(runtime)?)
    };
    let per_sample: Vec<SampleScores> = ok
        .par_iter()
        .zip(&refs)
        .zip(&cider_scores)
        .map(|((rec, st), &ci)| {
            let reference = [st.traj.instruction.as_str()];
            let (ssim, psnr) = frame_scores(results, rec, &st.traj.frames)?;
            Ok(SampleScores {
                traj_id: rec.traj_id.clone(),
                split: st.split,
                scores: ScoreSet {
                    bleu4: bleu4(&rec.instruction, &reference).map_err(runtime)?,
                    cider: ci,
                    meteor: meteor_lite(&rec.instruction, &reference).map_err(runtime)?,
                    rouge_l: rouge_l(&rec.instruction, &reference).map_err(runtime)?,
                    ssim,
                    psnr,
                },
                predicted_frames: rec.frame_paths.len(),
            })
        })
        .collect::<Result<_, CliError>>()?;
    let mut by_split = BTreeMap::new();
    for name in SplitName::ALL {
        if per_sample.iter().any(|s| s.split == name) {
            by_split.insert(name, aggregate(per_sample.iter().filter(|s| s.split == name)));
        }
    }
    Ok(EvalReport {
        label,
        results: results.to_path_buf(),
        aggregates: aggregate(per_sample.iter()),
        corpus_bleu4: corpus,
        by_split,
        per_sample,
        failed,
    })
}

/// Aligned text table with one row per (run, split).
pub fn format_table(reports: &[EvalReport]) -> String {
    let opt = |v: Option<f64>, prec: usize| v.map_or("-".to_string(), |x| format!("{x:.prec$}"));
    let header = ["run", "split", "n", "BL-4", "CI", "ME", "RO-L", "SSIM", "PSNR"];
    let mut rows: Vec<Vec<String>> = Vec::new();
    for r in reports {
        for (split, s) in &r.by_split {
            let n = r.per_sample.iter().filter(|p| p.split == *split).count();
            rows.push(vec![
                r.label.clone(),
                split.to_string(),
                n.to_string(),
                format!("{:.4}", s.bleu4),
                format!("{:.4}", s.cider),
                format!("{:.4}", s.meteor),
                format!("{:.4}", s.rouge_l),
                opt(s.ssim, 4),
                opt(s.psnr, 2),
            ]);
        }
    }
    let widths: Vec<usize> =
        (0..header.len()).map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0)).collect();
    let mut out = String::new();
    let line = |cells: Vec<String>, out: &mut String| {
        let cols: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| if i < 2 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", cols.join("  ").trim_end());
    };
    line(header.iter().map(|s| s.to_string()).collect(), &mut out);
    let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    for r in rows {
        line(r, &mut out);
    }
    out
}

fn label_for(path: &Path, i: usize) -> String {
    path.file_name().map_or_else(|| format!("run{i}"), |n| n.to_string_lossy().into_owned())
}

/// Score each results directory, write `<label>/eval.json` per run (plus
/// `eval.json` for a single run) and `table.txt`.
pub fn cmd_eval(args: &EvalArgs) -> Result<(Vec<EvalReport>, String), CliError> {
    let out = args.out.clone();
    let args = super::apply_snapshot(&args.config, args.clone(), |a: &mut EvalArgs| a.out = out)?;
    if !args.labels.is_empty() && args.labels.len() != args.results.len() {
        return Err(usage("--labels needs one entry per --results directory"));
    }
    let mut labels: Vec<String> = if args.labels.is_empty() {
        args.results.iter().enumerate().map(|(i, p)| label_for(p, i)).collect()
    } else {
        args.labels.clone()
    };
    for i in 1..labels.len() {
        if labels[..i].contains(&labels[i]) {
            labels[i] = format!("{}#{i}", labels[i]);
        }
    }
    // Check every results directory before the slower dataset load.
    for r in &args.results {
        load_records(r)?;
    }
    let ds = read_dataset(&args.data).map_err(runtime)?;
    let reports = args
        .results
        .iter()
        .zip(labels)
        .map(|(r, label)| evaluate_run(r, label, &ds))
        .collect::<Result<Vec<_>, _>>()?;
    for r in &reports {
        write_json(&args.out.join(&r.label).join("eval.json"), r)?;
    }
    if let [only] = &reports[..] {
        write_json(&args.out.join("eval.json"), only)?;
    }
    let table = format_table(&reports);
    fs::create_dir_all(&args.out).map_err(runtime)?;
    fs::write(args.out.join("table.txt"), &table).map_err(runtime)?;
    super::write_snapshot(&args.out, &args)?;
    Ok((reports, table))
}
