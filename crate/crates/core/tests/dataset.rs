use std::collections::{BTreeMap, BTreeSet};

use govig::dataset::{
    check_split_laws, extract_instr_samples, extract_viz_samples, generate_dataset, read_dataset, split_dataset, write_dataset, DatasetError,
    GenConfig, Sample, SplitRatios, MANIFEST_FILE,
};
use govig::gridworld::{build_world, sample_trajectories, TrajConfig, WorldSpec};
use proptest::prelude::*;

fn small_config() -> GenConfig {
    GenConfig { worlds: 3, trajs: 6, seed: 11, ..GenConfig::default() }
}

#[test]
fn viz_window_counts_and_boundaries() {
    let world = build_world(&WorldSpec::new(16, 16, 3, 2, 4)).unwrap();
    let trajs = sample_trajectories(&world, 6, &TrajConfig::default(), 1).unwrap();
    for t in &trajs {
        let l = t.len();
        for k in 1..l {
            let s = extract_viz_samples(t, k).unwrap();
            assert_eq!(s.len(), l - k);
            assert_eq!(s.last().unwrap().target, l - 1);
            assert!(s.iter().all(|x| x.goal == l - 1));
        }
        assert!(matches!(extract_viz_samples(t, l), Err(DatasetError::TrajectoryTooShort { .. })));
    }
}

#[test]
fn instr_samples_follow_segments() {
    let world = build_world(&WorldSpec::new(16, 16, 4, 2, 9)).unwrap();
    let trajs = sample_trajectories(&world, 12, &TrajConfig::default(), 3).unwrap();
    let multi = trajs.iter().find(|t| t.segments.len() >= 2).expect("a trajectory crossing rooms");
    let samples = extract_instr_samples(multi, 3).unwrap();
    assert_eq!(samples.len(), multi.segments.len());
    for (s, seg) in samples.iter().zip(&multi.segments) {
        assert_eq!((s.initial, s.goal), (seg.start, seg.end - 1));
        assert_eq!(s.instruction, seg.instruction);
        assert!(s.intermediates.len() <= 2);
        let mut prev = s.initial;
        for &i in &s.intermediates {
            assert!(i > prev && i < s.goal);
            prev = i;
        }
    }
    // Segment interiors never overlap.
    for w in samples.windows(2) {
        assert!(w[0].goal < w[1].initial);
    }
}

#[test]
fn two_frame_segment_has_no_intermediates() {
    let world = build_world(&WorldSpec::new(16, 16, 4, 2, 9)).unwrap();
    let mut t = sample_trajectories(&world, 1, &TrajConfig::default(), 3).unwrap().remove(0);
    t.segments.truncate(1);
    t.segments[0].end = t.segments[0].start + 2;
    let s = extract_instr_samples(&t, 3).unwrap();
    assert!(s[0].intermediates.is_empty());
    assert!(matches!(extract_instr_samples(&t, 1), Err(DatasetError::TrajectoryTooShort { .. })));
}

#[test]
fn all_train_ratio_and_bad_ratios() {
    let ids: Vec<(String, u64)> = (0..20).map(|i| (format!("t{i}"), i % 4)).collect();
    let ones = SplitRatios { train: 1.0, val_seen: 0.0, val_unseen: 0.0, test: 0.0 };
    let splits = split_dataset(&ids, &ones, 0).unwrap();
    assert_eq!(splits[0].traj_ids.len(), 20);
    assert!(splits[1..].iter().all(|s| s.traj_ids.is_empty()));
    let bad = SplitRatios { train: 0.5, ..ones };
    assert!(matches!(split_dataset(&ids, &bad, 0), Err(DatasetError::BadRatios(_))));
}

#[test]
fn default_split_over_200_trajectories() {
    let ids: Vec<(String, u64)> = (0..200).map(|i| (format!("t{i:03}"), i % 20)).collect();
    let splits = split_dataset(&ids, &SplitRatios::default(), 7).unwrap();
    let all: BTreeSet<&String> = ids.iter().map(|(i, _)| i).collect();
    let mut union = BTreeSet::new();
    for s in &splits {
        for id in &s.traj_ids {
            assert!(union.insert(id), "{id} assigned twice");
        }
    }
    assert_eq!(union, all);
    let worlds: BTreeMap<String, u64> = ids.iter().cloned().collect();
    check_split_laws(&splits, &worlds).unwrap();
    assert!(splits.iter().all(|s| !s.traj_ids.is_empty()));
    assert_eq!(splits, split_dataset(&ids, &SplitRatios::default(), 7).unwrap());
}

#[test]
fn manifest_round_trip_and_counts() {
    let ds = generate_dataset(&small_config()).unwrap();
    let viz: usize = ds.trajectories.iter().map(|t| t.traj.len() - 2).sum();
    let instr: usize = ds.trajectories.iter().map(|t| t.traj.segments.len()).sum();
    assert_eq!(ds.records.iter().filter(|r| matches!(r.sample, Sample::Viz(_))).count(), viz);
    assert_eq!(ds.records.len(), viz + instr);
    assert!(ds.records.len() >= 50);

    let dir = tempfile::tempdir().unwrap();
    write_dataset(&ds, dir.path()).unwrap();
    let back = read_dataset(dir.path()).unwrap();
    assert_eq!(back, ds);

    // Every reference in the manifest names an existing file.
    let text = std::fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
    for line in text.lines().skip(1) {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let mut refs: Vec<&str> = ["goal", "target", "initial"].iter().filter_map(|k| v[*k].as_str()).collect();
        for key in ["context", "intermediates"] {
            refs.extend(v[key].as_array().into_iter().flatten().filter_map(|x| x.as_str()));
        }
        assert!(refs.len() >= 2);
        for r in refs {
            assert!(dir.path().join(r).is_file(), "{r}");
        }
    }
}

#[test]
fn corrupt_manifests_report_line_numbers() {
    let ds = generate_dataset(&small_config()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&ds, dir.path()).unwrap();
    let path = dir.path().join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();

    // Truncate line 5 halfway.
    let mut broken: Vec<String> = lines.iter().map(|s| s.to_string()).collect();
    let cut = broken[4].len() / 2;
    broken[4].truncate(cut);
    std::fs::write(&path, broken.join("\n") + "\n").unwrap();
    match read_dataset(dir.path()) {
        Err(DatasetError::ManifestCorrupt { line, .. }) => assert_eq!(line, 5),
        other => panic!("{other:?}"),
    }

    // Drop the last record: count mismatch.
    std::fs::write(&path, lines[..lines.len() - 1].join("\n") + "\n").unwrap();
    assert!(matches!(read_dataset(dir.path()), Err(DatasetError::ManifestCorrupt { .. })));

    // Unknown schema version.
    let mut bumped = vec![lines[0].replace("\"schema\":1", "\"schema\":2")];
    bumped.extend(lines[1..].iter().map(|s| s.to_string()));
    std::fs::write(&path, bumped.join("\n") + "\n").unwrap();
    match read_dataset(dir.path()) {
        Err(DatasetError::ManifestCorrupt { line, .. }) => assert_eq!(line, 1),
        other => panic!("{other:?}"),
    }

    // Missing manifest.
    std::fs::remove_file(&path).unwrap();
    assert!(matches!(read_dataset(dir.path()), Err(DatasetError::Io(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn viz_indices_are_consecutive(seed in 0u64..500, k in 1usize..5) {
        let world = build_world(&WorldSpec::new(12, 12, 2, 1, seed)).unwrap();
        let cfg = TrajConfig { min_len: k + 1, max_goal_similarity: None, ..TrajConfig::default() };
        if let Ok(trajs) = sample_trajectories(&world, 1, &cfg, seed) {
            let t = &trajs[0];
            for (i, s) in extract_viz_samples(t, k).unwrap().iter().enumerate() {
                prop_assert_eq!(&s.context, &(i..i + k).collect::<Vec<_>>());
                prop_assert_eq!(s.target, i + k);
                prop_assert_eq!(s.step, i);
            }
        }
    }
}
