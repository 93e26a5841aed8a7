//! One-pass and interleaved reasoning driven by the ground-truth oracle.

use govig::gridworld::{build_world, sample_trajectories, TrajConfig, WorldSpec};
use govig::metrics::corpus_bleu4;
use govig::model::OracleBackend;
use govig::reasoning::{run, ReasoningConfig, Strategy};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let world = build_world(&WorldSpec::new(16, 16, 4, 4, 5))?;
    let trajs = sample_trajectories(&world, 5, &TrajConfig::default(), 2)?;
    let cfg = ReasoningConfig::new(2);
    for strategy in [Strategy::OnePass, Strategy::Interleaved] {
        let mut cands = Vec::new();
        for t in &trajs {
            let backend = OracleBackend::new(t.clone());
            let (init, goal) = t.task_input(cfg.k).unwrap();
            let res = run(strategy, &backend, init, goal, &cfg)?;
            println!("{strategy:?} {}: {} steps, {:?}, SSIM to goal {:.3}", t.traj_id, res.steps, res.terminated, res.final_ssim);
            if let Some(first) = res.instruction_history.first() {
                println!("    first refinement: {first}");
            }
            println!("    final: {}", res.instruction);
            cands.push(res.instruction);
        }
        let refs: Vec<Vec<&str>> = trajs.iter().map(|t| vec![t.instruction.as_str()]).collect();
        let cands: Vec<&str> = cands.iter().map(String::as_str).collect();
        println!("{strategy:?} corpus BLEU-4: {:.3}\n", corpus_bleu4(&cands, &refs)?);
    }
    Ok(())
}
