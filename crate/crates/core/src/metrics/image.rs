use crate::gridworld::EgoFrame;

use super::MetricError;

const WINDOW: usize = 8;
const C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

fn check_dims(a: &EgoFrame, b: &EgoFrame) -> Result<(), MetricError> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(MetricError::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

/// ITU-R BT.601 luma, unrounded.
pub fn luma(frame: &EgoFrame) -> Vec<f64> {
    frame
        .pixels()
        .chunks_exact(3)
        .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
        .collect()
}

/// Mean SSIM over every 8x8 window (stride 1) of the luma planes.
/// Frames smaller than the window use a single window covering the frame.
pub fn ssim(a: &EgoFrame, b: &EgoFrame) -> Result<f64, MetricError> {
    check_dims(a, b)?;
    let (w, h) = (a.width() as usize, a.height() as usize);
    let (ya, yb) = (luma(a), luma(b));
    let (win_w, win_h) = (WINDOW.min(w), WINDOW.min(h));
    let n = (win_w * win_h) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for y0 in 0..=h - win_h {
        for x0 in 0..=w - win_w {
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for y in y0..y0 + win_h {
                for x in x0..x0 + win_w {
                    let (p, q) = (ya[y * w + x], yb[y * w + x]);
                    sa += p;
                    sb += q;
                    saa += p * p;
                    sbb += q * q;
                    sab += p * q;
                }
            }
            let (ma, mb) = (sa / n, sb / n);
            let va = (saa / n - ma * ma).max(0.0);
            let vb = (sbb / n - mb * mb).max(0.0);
            let cov = sab / n - ma * mb;
            total += ((2.0 * ma * mb + C1) * (2.0 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

pub fn mse(a: &EgoFrame, b: &EgoFrame) -> Result<f64, MetricError> {
    check_dims(a, b)?;
    let sum: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&p, &q)| {
            let d = p as f64 - q as f64;
            d * d
        })
        .sum();
    Ok(sum / a.pixels().len() as f64)
}

/// PSNR in dB over all channels. Identical frames give `f64::INFINITY`.
pub fn psnr(a: &EgoFrame, b: &EgoFrame) -> Result<f64, MetricError> {
    Ok(psnr_from_mse(mse(a, b)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        20.0 * (255.0 / mse.sqrt()).log10()
    }
}

/// What an [`Embedder`] compares images against.
pub enum EmbedTarget<'a> {
    Image(&'a EgoFrame),
    Text(&'a str),
}

/// A pluggable feature extractor. Pretrained backbones implement this
/// outside the crate.
pub trait Embedder {
    fn embed_image(&self, frame: &EgoFrame) -> Result<Vec<f64>, MetricError>;
    fn embed_text(&self, _text: &str) -> Result<Vec<f64>, MetricError> {
        Err(MetricError::Unsupported("this embedder has no text tower".into()))
    }
}

/// Flattened normalized pixels.
pub struct PixelEmbedder;

impl Embedder for PixelEmbedder {
    fn embed_image(&self, frame: &EgoFrame) -> Result<Vec<f64>, MetricError> {
        Ok(frame.pixels().iter().map(|&p| p as f64 / 255.0).collect())
    }
}

fn cosine(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::DimensionMismatch(format!("embedding dims {} vs {}", a.len(), b.len())));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 || !na.is_finite() || !nb.is_finite() {
        return Err(MetricError::ZeroNormEmbedding);
    }
    Ok(dot / (na * nb))
}

/// Mean cosine similarity between each image embedding and the target
/// embedding.
pub fn embed_cosine(
    images: &[EgoFrame],
    target: EmbedTarget<'_>,
    embedder: &dyn Embedder,
) -> Result<f64, MetricError> {
    if images.is_empty() {
        return Err(MetricError::Empty);
    }
    let t = match target {
        EmbedTarget::Image(f) => embedder.embed_image(f)?,
        EmbedTarget::Text(s) => embedder.embed_text(s)?,
    };
    let mut total = 0.0;
    for img in images {
        total += cosine(&embedder.embed_image(img)?, &t)?;
    }
    Ok(total / images.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_frame(rng: &mut ChaCha8Rng, w: u32, h: u32) -> EgoFrame {
        EgoFrame::new(w, h, (0..3 * w * h).map(|_| rng.gen()).collect()).unwrap()
    }

    #[test]
    fn ssim_identity_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10 {
            let a = random_frame(&mut rng, 16, 16);
            let b = random_frame(&mut rng, 16, 16);
            assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
            let (ab, ba) = (ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
            assert_eq!(ab, ba);
            assert!((-1.0..=1.0).contains(&ab));
        }
    }

    #[test]
    fn ssim_constant_images_closed_form() {
        let black = EgoFrame::filled(32, 32, [0, 0, 0]);
        let white = EgoFrame::filled(32, 32, [255, 255, 255]);
        let expected = C1 / (255.0 * 255.0 + C1);
        assert!((ssim(&black, &white).unwrap() - expected).abs() < 1e-9);
        assert!((expected - 1.0e-4).abs() < 1e-6);
    }

    #[test]
    fn ssim_dimension_mismatch() {
        let a = EgoFrame::filled(8, 8, [0; 3]);
        let b = EgoFrame::filled(8, 16, [0; 3]);
        assert!(matches!(ssim(&a, &b), Err(MetricError::DimensionMismatch(_))));
    }

    #[test]
    fn psnr_closed_forms() {
        let a = EgoFrame::filled(4, 4, [100, 100, 100]);
        let b = EgoFrame::filled(4, 4, [101, 101, 101]);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        assert!((psnr(&a, &b).unwrap() - 48.1308).abs() < 1e-3);
        assert!((psnr_from_mse(0.5) - psnr_from_mse(1.0) - 3.0103).abs() < 1e-3);
    }

    #[test]
    fn cosine_metric() {
        let f = EgoFrame::filled(4, 4, [9, 80, 200]);
        let score = embed_cosine(std::slice::from_ref(&f), EmbedTarget::Image(&f), &PixelEmbedder).unwrap();
        assert!((score - 1.0).abs() < 1e-12);

        struct Axis;
        impl Embedder for Axis {
            fn embed_image(&self, f: &EgoFrame) -> Result<Vec<f64>, MetricError> {
                Ok(if f.pixel(0, 0)[0] == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] })
            }
            fn embed_text(&self, _: &str) -> Result<Vec<f64>, MetricError> {
                Ok(vec![0.0, 1.0])
            }
        }
        let black = EgoFrame::filled(2, 2, [0; 3]);
        assert_eq!(embed_cosine(&[black.clone()], EmbedTarget::Text("x"), &Axis).unwrap(), 0.0);
        let zero = EgoFrame::filled(2, 2, [0; 3]);
        assert!(matches!(
            embed_cosine(&[zero.clone()], EmbedTarget::Image(&zero), &PixelEmbedder),
            Err(MetricError::ZeroNormEmbedding)
        ));
        assert!(matches!(
            embed_cosine(&[black], EmbedTarget::Text("x"), &PixelEmbedder),
            Err(MetricError::Unsupported(_))
        ));
    }
}
