//! Text and image metrics on a handful of instructions and frames.

use govig::gridworld::EgoFrame;
use govig::metrics::{bleu4, cider, corpus_bleu4, meteor_lite, psnr, rouge_l, ssim};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let refs = [
        "go straight through the kitchen then turn left at the red lamp",
        "turn right and walk to the blue chair",
        "go straight and stop in the bedroom",
    ];
    let cands = [
        "go straight through the kitchen then turn left at the lamp",
        "turn right and walk to the chair",
        "turn left and stop in the bedroom",
    ];
    println!("{:<62} {:>6} {:>6} {:>6}", "candidate", "BL-4", "ME", "RO-L");
    for (c, r) in cands.iter().zip(&refs) {
        println!("{c:<62} {:>6.3} {:>6.3} {:>6.3}", bleu4(c, &[r])?, meteor_lite(c, &[r])?, rouge_l(c, &[r])?);
    }
    let ref_sets: Vec<Vec<&str>> = refs.iter().map(|r| vec![*r]).collect();
    println!("corpus BLEU-4 {:.4}", corpus_bleu4(&cands, &ref_sets)?);
    println!("CIDEr {:.4}", cider(&cands, &ref_sets)?.mean);

    let black = EgoFrame::filled(32, 32, [0, 0, 0]);
    let white = EgoFrame::filled(32, 32, [255, 255, 255]);
    let grey = EgoFrame::filled(32, 32, [100, 100, 100]);
    let grey1 = EgoFrame::filled(32, 32, [101, 101, 101]);
    println!("SSIM(black, white) = {:.6e}", ssim(&black, &white)?);
    println!("PSNR at MSE 1 = {:.3} dB", psnr(&grey, &grey1)?);
    Ok(())
}
