use std::collections::HashMap;

use crate::tokenizer::normalize_words;

use super::MetricError;

type Counts<'a> = HashMap<&'a [String], usize>;

fn ngrams(tokens: &[String], n: usize) -> Counts<'_> {
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for g in tokens.windows(n) {
            *out.entry(g).or_insert(0) += 1;
        }
    }
    out
}

fn tokenize_refs(references: &[&str]) -> Result<Vec<Vec<String>>, MetricError> {
    if references.is_empty() {
        return Err(MetricError::NoReferences);
    }
    Ok(references.iter().map(|r| normalize_words(r)).collect())
}

fn closest_ref_len(cand_len: usize, refs: &[Vec<String>]) -> usize {
    refs.iter()
        .map(|r| r.len())
        .min_by_key(|&l| (l.abs_diff(cand_len), l))
        .expect("at least one reference")
}

/// Clipped n-gram matches and candidate n-gram totals for orders 1..=4.
fn bleu_stats(cand: &[String], refs: &[Vec<String>]) -> ([usize; 4], [usize; 4]) {
    let mut clipped = [0; 4];
    let mut totals = [0; 4];
    for n in 1..=4 {
        let cc = ngrams(cand, n);
        let mut max_ref: HashMap<&[String], usize> = HashMap::new();
        for r in refs {
            for (g, c) in ngrams(r, n) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(c);
            }
        }
        totals[n - 1] = cand.len().saturating_sub(n - 1);
        clipped[n - 1] = cc.iter().map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0))).sum();
    }
    (clipped, totals)
}

fn bleu_from_stats(clipped: &[usize; 4], totals: &[usize; 4], cand_len: usize, ref_len: usize) -> f64 {
    if cand_len == 0 || totals.iter().any(|&t| t == 0) || clipped.iter().any(|&c| c == 0) {
        return 0.0;
    }
    let log_p: f64 = (0..4).map(|i| (clipped[i] as f64 / totals[i] as f64).ln()).sum::<f64>() / 4.0;
    let bp = if cand_len > ref_len { 1.0 } else { (1.0 - ref_len as f64 / cand_len as f64).exp() };
    bp * log_p.exp()
}

/// Sentence-level BLEU-4, unsmoothed, closest-reference brevity penalty.
pub fn bleu4(candidate: &str, references: &[&str]) -> Result<f64, MetricError> {
    let refs = tokenize_refs(references)?;
    let cand = normalize_words(candidate);
    let (clipped, totals) = bleu_stats(&cand, &refs);
    Ok(bleu_from_stats(&clipped, &totals, cand.len(), closest_ref_len(cand.len(), &refs)))
}

/// Corpus-level BLEU-4: n-gram statistics and lengths are pooled before the
/// geometric mean.
pub fn corpus_bleu4(candidates: &[&str], references: &[Vec<&str>]) -> Result<f64, MetricError> {
    if candidates.len() != references.len() {
        return Err(MetricError::LengthMismatch { candidates: candidates.len(), references: references.len() });
    }
    let mut clipped = [0; 4];
    let mut totals = [0; 4];
    let (mut c_len, mut r_len) = (0, 0);
    for (c, r) in candidates.iter().zip(references) {
        let refs = tokenize_refs(r)?;
        let cand = normalize_words(c);
        let (cl, tot) = bleu_stats(&cand, &refs);
        for i in 0..4 {
            clipped[i] += cl[i];
            totals[i] += tot[i];
        }
        c_len += cand.len();
        r_len += closest_ref_len(cand.len(), &refs);
    }
    Ok(bleu_from_stats(&clipped, &totals, c_len, r_len))
}

fn lcs(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

const ROUGE_BETA: f64 = 1.2;

/// ROUGE-L F-measure (beta 1.2), best over references.
pub fn rouge_l(candidate: &str, references: &[&str]) -> Result<f64, MetricError> {
    let refs = tokenize_refs(references)?;
    let cand = normalize_words(candidate);
    let beta2 = ROUGE_BETA * ROUGE_BETA;
    Ok(refs
        .iter()
        .map(|r| {
            let l = lcs(&cand, r);
            if l == 0 {
                return 0.0;
            }
            let p = l as f64 / cand.len() as f64;
            let rec = l as f64 / r.len() as f64;
            (1.0 + beta2) * p * rec / (rec + beta2 * p)
        })
        .fold(0.0, f64::max))
}

/// Exact-match alignment search: among maximum matchings, find the one with
/// the most adjacent pairs (hence fewest chunks).
struct Aligner<'a> {
    cand: &'a [String],
    refs_for: Vec<Vec<usize>>,
    word_of: Vec<usize>,
    skip_budget: Vec<usize>,
    occ_before: Vec<usize>,
    memo: HashMap<(usize, usize, Vec<u64>), Option<usize>>,
}

impl<'a> Aligner<'a> {
    fn new(cand: &'a [String], reference: &'a [String]) -> Self {
        let mut vocab: HashMap<&str, usize> = HashMap::new();
        for t in cand.iter().chain(reference) {
            let next = vocab.len();
            vocab.entry(t.as_str()).or_insert(next);
        }
        let mut refs_by_word = vec![Vec::new(); vocab.len()];
        for (p, t) in reference.iter().enumerate() {
            refs_by_word[vocab[t.as_str()]].push(p);
        }
        let word_of: Vec<usize> = cand.iter().map(|t| vocab[t.as_str()]).collect();
        let mut cand_count = vec![0usize; vocab.len()];
        let mut occ_before = Vec::with_capacity(cand.len());
        for &w in &word_of {
            occ_before.push(cand_count[w]);
            cand_count[w] += 1;
        }
        let skip_budget = (0..vocab.len()).map(|w| cand_count[w].saturating_sub(refs_by_word[w].len())).collect();
        let refs_for = word_of.iter().map(|&w| refs_by_word[w].clone()).collect();
        Self { cand, refs_for, word_of, skip_budget, occ_before, memo: HashMap::new() }
    }

    fn best(&mut self, i: usize, prev: usize, used: Vec<u64>) -> Option<usize> {
        if i == self.cand.len() {
            return Some(0);
        }
        let key = (i, prev, used);
        if let Some(v) = self.memo.get(&key) {
            return *v;
        }
        let (_, _, used) = key;
        let w = self.word_of[i];
        let is_used = |p: usize| used[p / 64] >> (p % 64) & 1 == 1;
        let used_w = self.refs_for[i].iter().filter(|&&p| is_used(p)).count();
        let skipped = self.occ_before[i] - used_w;
        let mut result: Option<usize> = None;
        for p in self.refs_for[i].clone() {
            if is_used(p) {
                continue;
            }
            let mut next = used.clone();
            next[p / 64] |= 1 << (p % 64);
            if let Some(rest) = self.best(i + 1, p + 1, next) {
                let adj = usize::from(prev != 0 && prev == p);
                result = Some(result.map_or(rest + adj, |r: usize| r.max(rest + adj)));
            }
        }
        if skipped < self.skip_budget[w] {
            if let Some(rest) = self.best(i + 1, 0, used.clone()) {
                result = Some(result.map_or(rest, |r| r.max(rest)));
            }
        }
        self.memo.insert((i, prev, used), result);
        result
    }
}

/// (matches, chunks) of the chunk-minimizing maximum exact alignment.
pub fn align_exact(cand: &[String], reference: &[String]) -> (usize, usize) {
    let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
    for t in cand {
        counts.entry(t).or_default().0 += 1;
    }
    for t in reference {
        counts.entry(t).or_default().1 += 1;
    }
    let matches: usize = counts.values().map(|&(c, r)| c.min(r)).sum();
    if matches == 0 {
        return (0, 0);
    }
    let mut al = Aligner::new(cand, reference);
    let words = reference.len().div_ceil(64).max(1);
    let adjacent = al.best(0, 0, vec![0; words]).expect("a maximum matching always exists");
    (matches, matches - adjacent)
}

/// METEOR with exact unigram matching only.
pub fn meteor_lite(candidate: &str, references: &[&str]) -> Result<f64, MetricError> {
    let refs = tokenize_refs(references)?;
    let cand = normalize_words(candidate);
    Ok(refs.iter().map(|r| meteor_score(&cand, r)).fold(0.0, f64::max))
}

fn meteor_score(cand: &[String], reference: &[String]) -> f64 {
    let (m, chunks) = align_exact(cand, reference);
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / cand.len() as f64;
    let r = m as f64 / reference.len() as f64;
    let fmean = 10.0 * p * r / (r + 9.0 * p);
    let penalty = 0.5 * (chunks as f64 / m as f64).powi(3);
    fmean * (1.0 - penalty)
}

/// CIDEr over a corpus, with IDF from the per-candidate reference sets.
#[derive(Debug, Clone)]
pub struct CiderResult {
    pub mean: f64,
    pub per_sample: Vec<f64>,
}

type Vecs = [HashMap<Vec<String>, f64>; 4];

fn tfidf(tokens: &[String], df: &[HashMap<Vec<String>, f64>; 4], log_docs: f64) -> (Vecs, [f64; 4]) {
    let mut vecs: Vecs = Default::default();
    let mut norms = [0.0; 4];
    for n in 1..=4 {
        for (g, c) in ngrams(tokens, n) {
            let d = df[n - 1].get(g).copied().unwrap_or(0.0).max(1.0).ln();
            vecs[n - 1].insert(g.to_vec(), c as f64 * (log_docs - d));
        }
        norms[n - 1] = vecs[n - 1].values().map(|v| v * v).sum::<f64>().sqrt();
    }
    (vecs, norms)
}

pub fn cider(candidates: &[&str], references: &[Vec<&str>]) -> Result<CiderResult, MetricError> {
    if candidates.len() != references.len() || candidates.is_empty() {
        return Err(MetricError::LengthMismatch { candidates: candidates.len(), references: references.len() });
    }
    let refs: Vec<Vec<Vec<String>>> = references.iter().map(|r| tokenize_refs(r)).collect::<Result<_, _>>()?;
    let mut df: [HashMap<Vec<String>, f64>; 4] = Default::default();
    for set in &refs {
        for n in 1..=4 {
            let mut seen: std::collections::HashSet<&[String]> = Default::default();
            for r in set {
                seen.extend(ngrams(r, n).into_keys());
            }
            for g in seen {
                *df[n - 1].entry(g.to_vec()).or_insert(0.0) += 1.0;
            }
        }
    }
    let log_docs = (refs.len() as f64).ln();
    let per_sample: Vec<f64> = candidates
        .iter()
        .zip(&refs)
        .map(|(c, set)| {
            let (cv, cn) = tfidf(&normalize_words(c), &df, log_docs);
            let mut score = 0.0;
            for r in set {
                let (rv, rn) = tfidf(r, &df, log_docs);
                for n in 0..4 {
                    let dot: f64 = cv[n].iter().map(|(g, v)| v * rv[n].get(g).copied().unwrap_or(0.0)).sum();
                    if cn[n] != 0.0 && rn[n] != 0.0 {
                        score += dot / (cn[n] * rn[n]);
                    }
                }
            }
            score / 4.0 / set.len() as f64 * 10.0
        })
        .collect();
    let mean = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
    Ok(CiderResult { mean, per_sample })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bleu_examples() {
        let r = "walk out of the kitchen now";
        assert!((bleu4(r, &[r]).unwrap() - 1.0).abs() < 1e-12);
        let b = bleu4("walk out of the kitchen", &[r]).unwrap();
        assert!((b - (1.0f64 - 6.0 / 5.0).exp()).abs() < 1e-12);
        assert!((b - 0.8187).abs() < 1e-4);
        assert_eq!(bleu4("turn left", &["turn left now please"]).unwrap(), 0.0);
        assert!(matches!(bleu4("a", &[]), Err(MetricError::NoReferences)));
    }

    #[test]
    fn rouge_examples() {
        assert_eq!(rouge_l("a b c d", &["a b c d"]).unwrap(), 1.0);
        assert_eq!(rouge_l("a b", &["c d"]).unwrap(), 0.0);
        assert!((rouge_l("a b c d", &["a c b d"]).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn meteor_examples() {
        assert_eq!(meteor_lite("a b", &["c d"]).unwrap(), 0.0);
        assert!((meteor_lite("a b c d e", &["a b c d e"]).unwrap() - 0.996).abs() < 1e-12);
        assert!((meteor_lite("b a", &["a b"]).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn alignment_prefers_fewer_chunks() {
        let w = |s: &str| normalize_words(s);
        // "the" can align to either occurrence; the second keeps one chunk.
        assert_eq!(align_exact(&w("the red lamp"), &w("the hall the red lamp")), (3, 1));
        assert_eq!(align_exact(&w("go go go"), &w("go go")), (2, 1));
    }

    #[test]
    fn cider_degenerate_cases() {
        let single = cider(&["go straight"], &[vec!["go straight"]]).unwrap();
        assert_eq!(single.mean, 0.0);
        let two = cider(&["", "turn left"], &[vec!["go straight"], vec!["turn left"]]).unwrap();
        assert_eq!(two.per_sample[0], 0.0);
        assert!(two.per_sample[1] > 0.0 && two.per_sample[1] <= 10.0);
        assert!(cider(&["a"], &[]).is_err());
    }
}
