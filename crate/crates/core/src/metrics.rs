//! Sequence similarity: normalised Hamming distance, count-vector cosine
//! and sentence BLEU.

use std::collections::HashMap;
use std::fmt;

use crate::tokenizer::{Token, VOCAB_SIZE};

/// Fraction of differing positions over the common prefix length.
/// Two empty sequences are at distance 0.
pub fn hamming(a: &[Token], b: &[Token]) -> f64 {
    let n = a.len().min(b.len());
    if n == 0 {
        return 0.0;
    }
    let diff = a.iter().zip(b).filter(|(x, y)| x != y).count();
    diff as f64 / n as f64
}

fn counts(a: &[Token]) -> Vec<f64> {
    let size = a.iter().map(|&t| t as usize + 1).max().unwrap_or(0).max(VOCAB_SIZE);
    let mut c = vec![0.0; size];
    for &t in a {
        c[t as usize] += 1.0;
    }
    c
}

/// Cosine between token-count vectors; 0 if either is all zero.
pub fn cosine(a: &[Token], b: &[Token]) -> f64 {
    let (ca, cb) = (counts(a), counts(b));
    let dot: f64 = ca.iter().zip(&cb).map(|(x, y)| x * y).sum();
    let na = ca.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = cb.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn ngram_counts(s: &[Token], n: usize) -> HashMap<&[Token], usize> {
    let mut m = HashMap::new();
    if s.len() >= n {
        for g in s.windows(n) {
            *m.entry(g).or_insert(0) += 1;
        }
    }
    m
}

/// Sentence BLEU with uniform weights over 1..=`max_n`-grams and the
/// brevity penalty. Precisions for `n ≥ 2` are add-one smoothed
/// (`(m + 1) / (c + 1)`); a zero unigram match gives 0. Each precision is capped by
/// the one below it, so the score never exceeds the clipped unigram
/// precision. Candidates shorter than `max_n` use orders up to their own
/// length.
pub fn bleu(candidate: &[Token], reference: &[Token], max_n: usize) -> f64 {
    if candidate.is_empty() || reference.is_empty() || max_n == 0 {
        return 0.0;
    }
    let max_n = max_n.min(candidate.len());
    let mut log_sum = 0.0;
    let mut prev = 1.0f64;
    for n in 1..=max_n {
        let cand = ngram_counts(candidate, n);
        let refc = ngram_counts(reference, n);
        let matched: usize = cand
            .iter()
            .map(|(g, &c)| c.min(refc.get(g).copied().unwrap_or(0)))
            .sum();
        let total = candidate.len() + 1 - n;
        let p = match (n, matched) {
            (1, 0) => return 0.0,
            (1, m) => m as f64 / total as f64,
            (_, m) => (m + 1) as f64 / (total + 1) as f64,
        };
        prev = prev.min(p);
        log_sum += prev.ln() / max_n as f64;
    }
    let (c, r) = (candidate.len() as f64, reference.len() as f64);
    let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    bp * log_sum.exp()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and population standard deviation; `NaN` for no samples.
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

impl fmt::Display for MeanStd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4} ± {:.4}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub hamming: MeanStd,
    pub cosine: MeanStd,
    pub bleu: MeanStd,
    pub pairs: usize,
}

impl MetricReport {
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a [Token], &'a [Token])>) -> Self {
        let (mut h, mut c, mut b) = (Vec::new(), Vec::new(), Vec::new());
        for (gen, reference) in pairs {
            h.push(hamming(gen, reference));
            c.push(cosine(gen, reference));
            b.push(bleu(gen, reference, 4));
        }
        Self {
            hamming: MeanStd::of(&h),
            cosine: MeanStd::of(&c),
            bleu: MeanStd::of(&b),
            pairs: h.len(),
        }
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "pairs: {}", self.pairs)?;
        writeln!(f, "hamming: {}", self.hamming)?;
        writeln!(f, "cosine: {}", self.cosine)?;
        write!(f, "bleu: {}", self.bleu)
    }
}
