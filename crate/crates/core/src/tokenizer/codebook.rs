use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::gridworld::EgoFrame;

use super::TokenizerError;

const MAGIC: &[u8; 4] = b"GVCB";
const KMEANS_ITERS: usize = 25;

/// A fixed set of patch embeddings. Entry `i` is the flattened, normalized
/// RGB patch for visual code `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct VisualCodebook {
    patch_size: usize,
    dim: usize,
    entries: Vec<f32>,
}

impl VisualCodebook {
    pub fn new(patch_size: usize, entries: Vec<Vec<f32>>) -> Result<Self, TokenizerError> {
        let dim = 3 * patch_size * patch_size;
        if patch_size == 0 || entries.len() < 2 {
            return Err(TokenizerError::InvalidCodebook("need patch_size > 0 and at least 2 entries".into()));
        }
        for (i, e) in entries.iter().enumerate() {
            if e.len() != dim {
                return Err(TokenizerError::DimensionMismatch(format!("entry {i} has {} values, expected {dim}", e.len())));
            }
            if e.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(TokenizerError::InvalidCodebook(format!("entry {i} leaves [0, 1]")));
            }
        }
        for i in 0..entries.len() {
            for j in 0..i {
                if entries[i] == entries[j] {
                    return Err(TokenizerError::InvalidCodebook(format!("entries {j} and {i} are identical")));
                }
            }
        }
        Ok(Self { patch_size, dim, entries: entries.concat() })
    }

    pub fn len(&self) -> usize {
        self.entries.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, code: usize) -> &[f32] {
        &self.entries[code * self.dim..(code + 1) * self.dim]
    }

    /// Tokens per frame of the given pixel size.
    pub fn tokens_per_frame(&self, width: u32, height: u32) -> usize {
        (width as usize / self.patch_size) * (height as usize / self.patch_size)
    }

    /// Mean squared distance between two entries.
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        mean_sq(self.entry(a), self.entry(b))
    }

    /// The full `N x N` matrix of mean squared entry distances, row-major.
    pub fn distance_matrix(&self) -> Vec<f64> {
        let n = self.len();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = self.distance(i, j);
            }
        }
        out
    }

    /// Nearest entry by mean squared distance; ties go to the lowest code.
    pub fn nearest(&self, patch: &[f32]) -> usize {
        let mut best = (0, f64::INFINITY);
        for c in 0..self.len() {
            let d = mean_sq(patch, self.entry(c));
            if d < best.1 {
                best = (c, d);
            }
        }
        best.0
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        for v in [self.len(), self.dim, self.patch_size] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        for v in &self.entries {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, TokenizerError> {
        let mut head = [0u8; 16];
        r.read_exact(&mut head)?;
        if &head[..4] != MAGIC {
            return Err(TokenizerError::InvalidCodebook("bad magic".into()));
        }
        let field = |i: usize| u32::from_le_bytes(head[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
        let (n, dim, p) = (field(0), field(1), field(2));
        if dim != 3 * p * p {
            return Err(TokenizerError::InvalidCodebook(format!("dim {dim} does not match patch size {p}")));
        }
        let mut body = vec![0u8; n * dim * 4];
        r.read_exact(&mut body)?;
        let entries = body
            .chunks_exact(dim * 4)
            .map(|row| row.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect())
            .collect();
        Self::new(p, entries)
    }

    pub fn save(&self, path: &Path) -> Result<(), TokenizerError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TokenizerError> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn mean_sq(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum::<f64>() / a.len() as f64
}

fn check_frame(frame: &EgoFrame, p: usize) -> Result<(), TokenizerError> {
    if frame.width() as usize % p != 0 || frame.height() as usize % p != 0 {
        return Err(TokenizerError::DimensionMismatch(format!(
            "{}x{} frame is not divisible by patch size {p}",
            frame.width(),
            frame.height()
        )));
    }
    Ok(())
}

/// Row-major patches of a frame, each flattened row-major then channel,
/// normalized to [0, 1].
pub fn frame_patches(frame: &EgoFrame, p: usize) -> Result<Vec<Vec<f32>>, TokenizerError> {
    check_frame(frame, p)?;
    let (w, h) = (frame.width() as usize, frame.height() as usize);
    let px = frame.pixels();
    let mut out = Vec::with_capacity((w / p) * (h / p));
    for py in 0..h / p {
        for pxi in 0..w / p {
            let mut patch = Vec::with_capacity(3 * p * p);
            for y in py * p..(py + 1) * p {
                for x in pxi * p..(pxi + 1) * p {
                    let o = 3 * (y * w + x);
                    patch.extend(px[o..o + 3].iter().map(|&v| v as f32 / 255.0));
                }
            }
            out.push(patch);
        }
    }
    Ok(out)
}

/// Seeded k-means (farthest-point initialization, 25 Lloyd iterations).
///
/// Identical patches are pooled with a weight first, which changes nothing
/// about the result but keeps large frame corpora cheap.
pub fn build_codebook(patches: &[Vec<f32>], n: usize, patch_size: usize, seed: u64) -> Result<VisualCodebook, TokenizerError> {
    let dim = 3 * patch_size * patch_size;
    if let Some(bad) = patches.iter().position(|p| p.len() != dim) {
        return Err(TokenizerError::DimensionMismatch(format!("patch {bad} has {} values, expected {dim}", patches[bad].len())));
    }
    if patches.len() < n || n < 2 {
        return Err(TokenizerError::TooFewPatches { have: patches.len(), need: n.max(2) });
    }

    let mut index: HashMap<Vec<u32>, usize> = HashMap::new();
    let mut points: Vec<&[f32]> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for p in patches {
        let key: Vec<u32> = p.iter().map(|v| v.to_bits()).collect();
        match index.get(&key) {
            Some(&i) => weights[i] += 1.0,
            None => {
                index.insert(key, points.len());
                points.push(p);
                weights.push(1.0);
            }
        }
    }
    if points.len() < n {
        return Err(TokenizerError::TooFewPatches { have: points.len(), need: n });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<Vec<f32>> = vec![points[rng.gen_range(0..points.len())].to_vec()];
    let mut min_d: Vec<f64> = points.iter().map(|p| mean_sq(p, &centers[0])).collect();
    while centers.len() < n {
        let far = (0..points.len()).fold(0, |b, i| if min_d[i] > min_d[b] { i } else { b });
        let c = points[far].to_vec();
        for (i, p) in points.iter().enumerate() {
            min_d[i] = min_d[i].min(mean_sq(p, &c));
        }
        centers.push(c);
    }

    let mut assign = vec![0usize; points.len()];
    for _ in 0..KMEANS_ITERS {
        for (i, p) in points.iter().enumerate() {
            let mut best = (0, f64::INFINITY);
            for (c, center) in centers.iter().enumerate() {
                let d = mean_sq(p, center);
                if d < best.1 {
                    best = (c, d);
                }
            }
            assign[i] = best.0;
        }
        let mut sums = vec![vec![0.0f64; dim]; n];
        let mut mass = vec![0.0f64; n];
        for (i, p) in points.iter().enumerate() {
            let c = assign[i];
            mass[c] += weights[i];
            for (s, &v) in sums[c].iter_mut().zip(p.iter()) {
                *s += weights[i] * v as f64;
            }
        }
        for c in 0..n {
            // An emptied cluster keeps its previous centroid.
            if mass[c] > 0.0 {
                centers[c] = sums[c].iter().map(|s| (s / mass[c]).clamp(0.0, 1.0) as f32).collect();
            }
        }
    }
    VisualCodebook::new(patch_size, centers)
}

/// Patch-wise nearest codes in row-major patch order.
pub fn quantize_frame(frame: &EgoFrame, cb: &VisualCodebook) -> Result<Vec<usize>, TokenizerError> {
    Ok(frame_patches(frame, cb.patch_size())?.iter().map(|p| cb.nearest(p)).collect())
}

/// Paste codebook patches back into a `width x height` frame.
pub fn dequantize(codes: &[usize], cb: &VisualCodebook, width: u32, height: u32) -> Result<EgoFrame, TokenizerError> {
    let p = cb.patch_size();
    let (w, h) = (width as usize, height as usize);
    if w % p != 0 || h % p != 0 || w == 0 || h == 0 {
        return Err(TokenizerError::DimensionMismatch(format!("{w}x{h} is not divisible by patch size {p}")));
    }
    let expected = cb.tokens_per_frame(width, height);
    if codes.len() != expected {
        return Err(TokenizerError::DimensionMismatch(format!("{} codes for a frame of {expected} patches", codes.len())));
    }
    if let Some(&bad) = codes.iter().find(|&&c| c >= cb.len()) {
        return Err(TokenizerError::BadTokenId(bad as u32));
    }
    let mut pixels = vec![0u8; 3 * w * h];
    for (i, &c) in codes.iter().enumerate() {
        let (py, px) = (i / (w / p), i % (w / p));
        let e = cb.entry(c);
        for dy in 0..p {
            for dx in 0..p {
                let o = 3 * ((py * p + dy) * w + px * p + dx);
                let s = 3 * (dy * p + dx);
                for ch in 0..3 {
                    pixels[o + ch] = (e[s + ch] * 255.0).round() as u8;
                }
            }
        }
    }
    Ok(EgoFrame::new(width, height, pixels).expect("buffer sized from dimensions"))
}
