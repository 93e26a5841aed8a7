//! The whole command-line pipeline on a small corpus: gen, train, infer with
//! both strategies, and a comparison table from eval.
//!
//! cargo run --release --example cli_pipeline -- [work_dir]

use std::path::PathBuf;

fn step(args: &[&str]) -> Result<(), String> {
    println!("$ govig {}", args.join(" "));
    match govig::cli::run(std::iter::once("govig").chain(args.iter().copied())) {
        0 => Ok(()),
        code => Err(format!("exit code {code}")),
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let work = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "pipeline_demo".into()));
    let p = |name: &str| work.join(name).to_string_lossy().into_owned();
    let (data, model) = (p("data"), p("model"));
    step(&["gen", "--out", &data, "--worlds", "6", "--trajs", "36", "--seed", "2"])?;
    step(&["train", "--data", &data, "--out", &model, "--epochs", "2", "--viz-only"])?;
    for strategy in ["one-pass", "interleaved"] {
        let out = p(&format!("toy-{strategy}"));
        step(&["infer", "--data", &data, "--out", &out, "--backend", "toy", "--model", &model, "--strategy", strategy, "--max-steps", "12"])?;
    }
    step(&["infer", "--data", &data, "--out", &p("oracle"), "--backend", "oracle"])?;
    step(&["eval", "--results", &p("toy-one-pass"), &p("toy-interleaved"), &p("oracle"), "--data", &data, "--out", &p("eval")])?;
    step(&["gradcheck", "--instances", "100"])?;
    Ok(())
}
