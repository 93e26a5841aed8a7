//! End-to-end runs of the subcommands through `govig::cli::run`.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use govig::cli::{self, EpisodeRecord, EvalReport};
use govig::model::Checkpoint;
use govig::reasoning::Termination;

fn run(args: &[&str]) -> i32 {
    cli::run(std::iter::once("govig").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    _tmp: tempfile::TempDir,
    root: PathBuf,
}

/// A small dataset plus a tiny trained model shared by the tests below.
fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().to_path_buf();
        let data = root.join("data");
        assert_eq!(run(&["gen", "--out", s(&data), "--worlds", "4", "--trajs", "16", "--seed", "3", "--frame-size", "16"]), 0);
        assert_eq!(run(&train_args(&data, &root.join("model"), &["--epochs", "1"]).iter().map(String::as_str).collect::<Vec<_>>()), 0);
        Fixture { _tmp: tmp, root }
    })
}

fn train_args(data: &Path, out: &Path, extra: &[&str]) -> Vec<String> {
    let mut v: Vec<String> = [
        "train", "--data", s(data), "--out", s(out), "--codebook-size", "16", "--embed-dim", "16", "--layers", "1", "--heads", "1",
        "--batch-size", "4",
    ]
    .iter()
    .map(|x| x.to_string())
    .collect();
    v.extend(extra.iter().map(|x| x.to_string()));
    v
}

fn run_owned(v: Vec<String>) -> i32 {
    run(&v.iter().map(String::as_str).collect::<Vec<_>>())
}

fn records(out: &Path) -> Vec<EpisodeRecord> {
    let mut v: Vec<EpisodeRecord> = fs::read_dir(out.join("episodes"))
        .unwrap()
        .map(|e| serde_json::from_str(&fs::read_to_string(e.unwrap().path().join("result.json")).unwrap()).unwrap())
        .collect();
    v.sort_by(|a, b| a.traj_id.cmp(&b.traj_id));
    v
}

fn losses(dir: &Path) -> Vec<f64> {
    fs::read_to_string(dir.join(cli::LOSS_CSV))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn gen_is_deterministic_and_counts_add_up() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        assert_eq!(run(&["gen", "--out", s(d), "--worlds", "5", "--trajs", "40", "--seed", "3"]), 0);
    }
    for f in ["manifest.jsonl", "trajectories.jsonl", "splits.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let ds = govig::dataset::read_dataset(&a).unwrap();
    assert_eq!(ds.trajectories.len(), 40);
    let expected: usize = ds.trajectories.iter().map(|t| t.traj.len() - 2 + t.traj.segments.len()).sum();
    assert_eq!(ds.records.len(), expected);

    // Replaying the snapshot reproduces the files.
    let c = tmp.path().join("c");
    assert_eq!(run(&["gen", "--config", s(&a.join("config.json")), "--out", s(&c)]), 0);
    assert_eq!(fs::read(a.join("manifest.jsonl")).unwrap(), fs::read(c.join("manifest.jsonl")).unwrap());
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("x");
    assert_eq!(run(&["gen", "--out", s(&out), "--ratios", "0.5,0.5,0.5,0"]), 2);
    assert_eq!(run(&["gen", "--out", s(&out), "--ratios", "1,0"]), 2);
    assert_eq!(run(&["gen", "--bogus"]), 2);
    assert_eq!(run(&["train", "--data", s(&out), "--out", s(&out)]), 2);
    assert_eq!(run(&["eval", "--results", s(&out), "--data", s(&out), "--out", s(&out)]), 2);
    assert_eq!(run(&["--jobs", "0", "gradcheck"]), 2);
}

#[test]
fn zero_learning_rate_gives_a_flat_trace() {
    let f = fixture();
    let out = f.root.join("flat");
    assert_eq!(run_owned(train_args(&f.root.join("data"), &out, &["--epochs", "3", "--lr", "0"])), 0);
    let trace = losses(&out);
    assert_eq!(trace.len(), 3);
    assert!(trace.iter().all(|l| (l - trace[0]).abs() < 1e-9), "{trace:?}");
}

#[test]
fn resume_matches_an_uninterrupted_run() {
    let f = fixture();
    let data = f.root.join("data");
    let constant = ["--lr-floor", "1"];
    let full = f.root.join("full");
    let half = f.root.join("half");
    let resumed = f.root.join("resumed");
    assert_eq!(run_owned(train_args(&data, &full, &[&["--epochs", "2"][..], &constant].concat())), 0);
    assert_eq!(run_owned(train_args(&data, &half, &[&["--epochs", "1"][..], &constant].concat())), 0);
    let resume = [&["--epochs", "2", "--resume", s(&half)][..], &constant].concat();
    assert_eq!(run_owned(train_args(&data, &resumed, &resume)), 0);

    let a = Checkpoint::load(&full.join(cli::CHECKPOINT_FILE)).unwrap();
    let c = Checkpoint::load(&resumed.join(cli::CHECKPOINT_FILE)).unwrap();
    assert_eq!(a.model.params, c.model.params);
    assert_eq!(losses(&full), losses(&resumed));
    assert_eq!(losses(&half)[..], losses(&full)[..1]);

    // The training snapshot replays bit for bit.
    let replay = f.root.join("replay");
    assert_eq!(run(&["train", "--config", s(&full.join("config.json")), "--out", s(&replay)]), 0);
    assert_eq!(fs::read(full.join(cli::CHECKPOINT_FILE)).unwrap(), fs::read(replay.join(cli::CHECKPOINT_FILE)).unwrap());
}

#[test]
fn diverging_training_exits_3() {
    let f = fixture();
    let out = f.root.join("diverge");
    let code = run_owned(train_args(
        &f.root.join("data"),
        &out,
        &["--epochs", "2", "--optimizer", "sgd", "--lr", "1e30", "--clip-norm", "0"],
    ));
    assert_eq!(code, 3);
}

#[test]
fn oracle_inference_reaches_every_goal_and_scores_perfectly() {
    let f = fixture();
    let data = f.root.join("data");
    let ds = govig::dataset::read_dataset(&data).unwrap();
    let mut outs = Vec::new();
    for strategy in ["one-pass", "interleaved"] {
        let out = f.root.join(format!("oracle-{strategy}"));
        assert_eq!(run(&["infer", "--data", s(&data), "--out", s(&out), "--backend", "oracle", "--strategy", strategy]), 0);
        for r in records(&out) {
            let len = ds.trajectory(&r.traj_id).unwrap().traj.len();
            assert_eq!(r.terminated, Some(Termination::ByThreshold));
            assert_eq!(r.steps, len - 2);
        }
        outs.push(out);
    }
    let (a, b) = (records(&outs[0]), records(&outs[1]));
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.frame_paths, y.frame_paths);
        for p in &x.frame_paths {
            assert_eq!(fs::read(outs[0].join(p)).unwrap(), fs::read(outs[1].join(p)).unwrap());
        }
    }

    let ev = f.root.join("oracle-eval");
    assert_eq!(run(&["eval", "--results", s(&outs[0]), s(&outs[1]), "--data", s(&data), "--out", s(&ev)]), 0);
    let table = fs::read_to_string(ev.join("table.txt")).unwrap();
    for col in ["BL-4", "CI", "ME", "RO-L"] {
        assert!(table.contains(col));
    }
    let report: EvalReport = serde_json::from_str(&fs::read_to_string(ev.join("oracle-one-pass/eval.json")).unwrap()).unwrap();
    assert_eq!(report.aggregates.bleu4, 1.0);
    assert_eq!(report.corpus_bleu4, 1.0);
    let n = report.per_sample.len() as f64;
    let mean = |g: fn(&govig::cli::SampleScores) -> f64| report.per_sample.iter().map(g).sum::<f64>() / n;
    assert!((mean(|p| p.scores.cider) - report.aggregates.cider).abs() < 1e-9);
    assert!((mean(|p| p.scores.meteor) - report.aggregates.meteor).abs() < 1e-9);
    assert!((mean(|p| p.scores.rouge_l) - report.aggregates.rouge_l).abs() < 1e-9);
    assert!((mean(|p| p.scores.ssim.unwrap()) - report.aggregates.ssim.unwrap()).abs() < 1e-9);

    // Same report with a single worker.
    let ev1 = f.root.join("oracle-eval-1");
    assert_eq!(run(&["--jobs", "1", "eval", "--results", s(&outs[0]), s(&outs[1]), "--data", s(&data), "--out", s(&ev1)]), 0);
    assert_eq!(fs::read(ev.join("table.txt")).unwrap(), fs::read(ev1.join("table.txt")).unwrap());

    // Results evaluated against a dataset that lacks their trajectories.
    let other = f.root.join("other-data");
    assert_eq!(run(&["gen", "--out", s(&other), "--worlds", "2", "--trajs", "4", "--seed", "99", "--frame-size", "16"]), 0);
    let bad = f.root.join("bad-eval");
    assert_eq!(run(&["eval", "--results", s(&outs[0]), "--data", s(&other), "--out", s(&bad)]), 2);
}

#[test]
fn strict_threshold_hits_the_step_cap() {
    let f = fixture();
    let out = f.root.join("toy-strict");
    let code = run(&[
        "infer", "--data", s(&f.root.join("data")), "--out", s(&out), "--backend", "toy", "--model", s(&f.root.join("model")),
        "--tau", "0.99", "--max-steps", "4", "--strategy", "interleaved",
    ]);
    assert_eq!(code, 0);
    let recs = records(&out);
    assert!(recs.iter().any(|r| r.terminated == Some(Termination::ByMaxSteps)));
    for r in &recs {
        assert!(r.error.is_none(), "{:?}", r.error);
        assert_eq!(r.frame_paths.len(), r.steps);
        assert_eq!(r.instruction_history.len(), r.steps);
    }
    assert_eq!(run(&["infer", "--data", s(&f.root.join("data")), "--out", s(&out), "--backend", "toy"]), 2);
}

#[test]
fn gradcheck_subcommand_writes_its_report() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(&["gradcheck", "--instances", "25", "--out", s(tmp.path())]), 0);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("gradcheck.json")).unwrap()).unwrap();
    assert_eq!(v["instances"], 25);
    assert!(v["max_rel_error_vis"].as_f64().unwrap() < 1e-4);
}
