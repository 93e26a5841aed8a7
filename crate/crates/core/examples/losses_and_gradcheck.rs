//! Hand-checkable loss values and the finite-difference gradient suite.

use govig::losses::{
    gradcheck_suite, label_smoothing_loss, token_discrepancy_loss, LossSpace, Smoothing, VisualDistances, VisualSoftmax,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Four 2-d codebook entries at the corners of the unit square.
    let dist = VisualDistances::from_embeddings(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
    let space = LossSpace { width: 4, visual: 0..4, text_support: vec![0, 1, 2, 3] };
    let uniform = token_discrepancy_loss(&[0.0; 4], &[0], &space, &dist, VisualSoftmax::Restricted)?;
    println!("uniform prediction, ground truth (0,0): {:.6}", uniform.value);
    let peaked = token_discrepancy_loss(&[-1e3, -1e3, -1e3, 0.0], &[0], &space, &dist, VisualSoftmax::Restricted)?;
    println!("all mass on (1,1): {:.6}", peaked.value);

    let logits: Vec<f64> = [0.7f64, 0.1, 0.1, 0.1].iter().map(|p| p.ln()).collect();
    let ls = label_smoothing_loss(&logits, &[0], &space, 0.1, Smoothing::Others)?;
    println!("label smoothing, eps 0.1, P = [0.7, 0.1, 0.1, 0.1]: {:.6}", ls.value);

    let report = gradcheck_suite(100, 0);
    println!(
        "gradcheck over {} instances: max relative error {:.2e} in {:.2}s",
        report.instances,
        report.max_rel_error(),
        report.seconds
    );
    Ok(())
}
