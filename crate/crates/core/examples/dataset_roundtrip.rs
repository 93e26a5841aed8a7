//! Generate a dataset, check its laws, write it to disk and read it back.
//!
//! cargo run --example dataset_roundtrip -- [out_dir]

use std::collections::BTreeMap;
use std::path::PathBuf;

use govig::dataset::{check_split_laws, generate_dataset, read_dataset, write_dataset, DatasetSplit, GenConfig, Sample, SplitName};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "dataset_demo".into()));
    let cfg = GenConfig { worlds: 6, trajs: 48, seed: 4, real_like_worlds: 1, real_like_trajs: 6, ..GenConfig::default() };
    let ds = generate_dataset(&cfg)?;

    let viz = ds.records.iter().filter(|r| matches!(r.sample, Sample::Viz(_))).count();
    let expected: usize = ds.trajectories.iter().map(|t| t.traj.len() - cfg.k).sum();
    println!("{} trajectories, {viz} visualization samples (sum of L - k = {expected})", ds.trajectories.len());
    for name in SplitName::ALL {
        println!("  {name:<10} {:>3} trajectories, {:>4} samples", ds.split(name).count(), ds.records_in(name).count());
    }
    let splits: Vec<DatasetSplit> = SplitName::ALL
        .iter()
        .map(|&name| DatasetSplit { name, traj_ids: ds.split(name).map(|t| t.traj.traj_id.clone()).collect() })
        .collect();
    let worlds: BTreeMap<String, u64> = ds.trajectories.iter().map(|t| (t.traj.traj_id.clone(), t.traj.world_seed)).collect();
    check_split_laws(&splits, &worlds)?;
    println!("splits are disjoint and held-out worlds stay out of train");

    write_dataset(&ds, &out)?;
    let back = read_dataset(&out)?;
    println!("round trip through {} is lossless: {}", out.display(), back == ds);
    Ok(())
}
