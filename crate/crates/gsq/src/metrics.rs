//! Codebook-health and reconstruction metrics.

use crate::config::QuantizerConfig;
use crate::error::{Error, Result};
use crate::quantizer::CodeAssignment;

/// Empirical code-usage counts, one histogram per code table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageHistogram {
    vocab: usize,
    counts: Vec<Vec<u64>>,
}

impl UsageHistogram {
    pub fn new(num_tables: usize, vocab: usize) -> Self {
        Self {
            vocab,
            counts: vec![vec![0; vocab]; num_tables],
        }
    }

    pub fn for_config(config: &QuantizerConfig) -> Self {
        Self::new(config.num_tables(), config.vocab)
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Accumulates one assignment batch. Shared configs pool all groups into
    /// the single histogram.
    pub fn record(&mut self, assignment: &CodeAssignment, shared: bool) {
        let groups = assignment.groups();
        for row in assignment.indices().chunks_exact(groups) {
            for (g, &j) in row.iter().enumerate() {
                let t = if shared || self.counts.len() == 1 { 0 } else { g };
                self.counts[t][j as usize] += 1;
            }
        }
    }

    /// Associative, commutative merge for sharded evaluation.
    pub fn merge(&mut self, other: &UsageHistogram) -> Result<()> {
        if other.vocab != self.vocab || other.counts.len() != self.counts.len() {
            return Err(Error::DimensionMismatch {
                expected: self.vocab,
                actual: other.vocab,
            });
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }
}

/// Percentage of codes hit at least once, over all tables.
pub fn usage_percent(h: &UsageHistogram) -> f64 {
    let total_codes = h.counts.len() * h.vocab;
    let used = h.counts.iter().flatten().filter(|&&c| c > 0).count();
    100.0 * used as f64 / total_codes as f64
}

fn entropy_of(counts: impl Iterator<Item = u64>, total: u64) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let mut h = 0.0;
    for c in counts {
        if c > 0 {
            let p = c as f64 / total as f64;
            h -= p * p.ln();
        }
    }
    h
}

/// exp of the entropy of the usage distribution, pooled over all tables.
pub fn perplexity(h: &UsageHistogram) -> f64 {
    let mut pooled = vec![0u64; h.vocab];
    for t in &h.counts {
        for (p, &c) in pooled.iter_mut().zip(t) {
            *p += c;
        }
    }
    let total: u64 = pooled.iter().sum();
    if total == 0 {
        return 1.0;
    }
    entropy_of(pooled.into_iter(), total).exp()
}

/// Mean over tables of each table's own perplexity.
pub fn perplexity_per_group_mean(h: &UsageHistogram) -> f64 {
    let mut acc = 0.0;
    for t in &h.counts {
        let total: u64 = t.iter().sum();
        acc += if total == 0 {
            1.0
        } else {
            entropy_of(t.iter().copied(), total).exp()
        };
    }
    acc / h.counts.len() as f64
}

pub fn mse(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.len() as f64)
}

/// 10 log10(max^2 / mse). Identical inputs give +inf.
pub fn psnr(a: &[f32], b: &[f32], max_value: f64) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (max_value * max_value / m).log10())
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn gaussian_window() -> [f64; SSIM_WINDOW * SSIM_WINDOW] {
    let mut w = [0f64; SSIM_WINDOW * SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for y in 0..SSIM_WINDOW {
        for x in 0..SSIM_WINDOW {
            let dy = y as f64 - c;
            let dx = x as f64 - c;
            let v = (-(dx * dx + dy * dy) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            w[y * SSIM_WINDOW + x] = v;
            sum += v;
        }
    }
    for v in w.iter_mut() {
        *v /= sum;
    }
    w
}

/// Mean structural similarity over all fully-interior 11x11 Gaussian windows
/// of a single-channel image. `dynamic_range` is the value range of the data
/// (1.0 for [0,1] images, 255.0 for 8-bit).
pub fn ssim(a: &[f32], b: &[f32], height: usize, width: usize, dynamic_range: f64) -> Result<f64> {
    if a.len() != height * width || b.len() != height * width {
        return Err(Error::DimensionMismatch {
            expected: height * width,
            actual: a.len().max(b.len()),
        });
    }
    if height < SSIM_WINDOW || width < SSIM_WINDOW {
        return Err(Error::InvalidConfig(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {height}x{width}"
        )));
    }
    let w = gaussian_window();
    let c1 = (SSIM_K1 * dynamic_range).powi(2);
    let c2 = (SSIM_K2 * dynamic_range).powi(2);
    let mut acc = 0.0;
    let mut windows = 0u64;
    for wy in 0..=height - SSIM_WINDOW {
        for wx in 0..=width - SSIM_WINDOW {
            let (mut mu_a, mut mu_b) = (0.0, 0.0);
            let (mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0);
            for y in 0..SSIM_WINDOW {
                for x in 0..SSIM_WINDOW {
                    let weight = w[y * SSIM_WINDOW + x];
                    let va = a[(wy + y) * width + wx + x] as f64;
                    let vb = b[(wy + y) * width + wx + x] as f64;
                    mu_a += weight * va;
                    mu_b += weight * vb;
                    aa += weight * va * va;
                    bb += weight * vb * vb;
                    ab += weight * va * vb;
                }
            }
            let var_a = aa - mu_a * mu_a;
            let var_b = bb - mu_b * mu_b;
            let cov = ab - mu_a * mu_b;
            let num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
            let den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            acc += num / den;
            windows += 1;
        }
    }
    Ok(acc / windows as f64)
}
