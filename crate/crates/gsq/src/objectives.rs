//! Pure loss functions: the codebook entropy objective and the
//! adversarial/discriminator losses, all in overflow-safe form.

use std::collections::BTreeMap;

use crate::batch::VectorBatch;
use crate::codebook::Codebook;
use crate::config::QuantizerConfig;
use crate::error::{Error, Result};
use crate::quantizer::l2_normalize_in_place;

/// Discriminator logits for a batch of real and reconstructed images.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitBatch {
    real: Vec<f64>,
    fake: Vec<f64>,
}

impl LogitBatch {
    pub fn new(real: Vec<f64>, fake: Vec<f64>) -> Result<Self> {
        if real.is_empty() || fake.is_empty() {
            return Err(Error::InvalidConfig("logit batches must be non-empty".into()));
        }
        if real.iter().chain(&fake).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("logits must be finite".into()));
        }
        Ok(Self { real, fake })
    }

    pub fn real(&self) -> &[f64] {
        &self.real
    }

    pub fn fake(&self) -> &[f64] {
        &self.fake
    }
}

/// ln(1 + e^x) without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn mean(xs: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    xs.iter().map(|&x| f(x)).sum::<f64>() / xs.len() as f64
}

/// 1/2 (E[log(1 + e^-real)] + E[log(1 + e^fake)])
pub fn vanilla_discr_loss(logits: &LogitBatch) -> f64 {
    0.5 * (mean(&logits.real, |x| softplus(-x)) + mean(&logits.fake, softplus))
}

/// E[log(1 + e^-fake)]
pub fn vanilla_gen_loss(logits: &LogitBatch) -> f64 {
    mean(&logits.fake, |x| softplus(-x))
}

/// -E[fake]
pub fn hinge_gen_loss(logits: &LogitBatch) -> f64 {
    -mean(&logits.fake, |x| x)
}

/// 1/2 (E[max(0, 1 - real)] + E[max(0, 1 + fake)])
pub fn hinge_discr_loss(logits: &LogitBatch) -> f64 {
    0.5 * (mean(&logits.real, |x| (1.0 - x).max(0.0)) + mean(&logits.fake, |x| (1.0 + x).max(0.0)))
}

/// Softplus cross-entropy of the fake logits toward label 1:
/// E[ReLU(x) - x + log(1 + e^-|x|)], identically softplus(-x).
pub fn non_saturate_gen_loss(logits: &LogitBatch) -> f64 {
    mean(&logits.fake, |x| x.max(0.0) - x + (-x.abs()).exp().ln_1p())
}

/// 1/2 of (cross-entropy of real toward 1 + cross-entropy of fake toward 0).
pub fn non_saturate_discr_loss(logits: &LogitBatch) -> f64 {
    let real = mean(&logits.real, |x| x.max(0.0) - x + (-x.abs()).exp().ln_1p());
    let fake = mean(&logits.fake, |x| x.max(0.0) + (-x.abs()).exp().ln_1p());
    0.5 * (real + fake)
}

/// Loss weights used throughout training: reconstruction 1.0, commitment 0.25,
/// adversarial 0.1.
pub fn default_loss_weights() -> BTreeMap<String, f64> {
    BTreeMap::from([
        ("reconstruction".to_string(), 1.0),
        ("commitment".to_string(), 0.25),
        ("adversarial".to_string(), 0.1),
    ])
}

/// Sum of weight * part; parts with no weight contribute 0.
pub fn weighted_total(parts: &BTreeMap<String, f64>, weights: &BTreeMap<String, f64>) -> f64 {
    parts
        .iter()
        .map(|(name, &v)| weights.get(name).copied().unwrap_or(0.0) * v)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyLoss {
    /// Mean over samples (and groups) of the soft-assignment entropy.
    pub per_sample_entropy: f64,
    /// Entropy of the mean soft-assignment distribution.
    pub codebook_entropy: f64,
    /// per_sample_entropy - codebook_entropy; minimized toward -ln V.
    pub loss: f64,
}

fn entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum()
}

/// Soft assignment q = softmax(-distance^2 / tau) over each group's codebook,
/// in lookup space. Returns E[H(q)], H(E[q]) and their difference.
pub fn entropy_loss(
    batch: &VectorBatch,
    codebook: &Codebook,
    config: &QuantizerConfig,
    temperature: f64,
) -> Result<EntropyLoss> {
    if temperature <= 0.0 {
        return Err(Error::InvalidConfig("temperature must be positive".into()));
    }
    config.validate()?;
    codebook.matches(config)?;
    if batch.dim() != config.latent_dim {
        return Err(Error::DimensionMismatch {
            expected: config.latent_dim,
            actual: batch.dim(),
        });
    }
    if batch.is_empty() {
        return Ok(EntropyLoss { per_sample_entropy: 0.0, codebook_entropy: 0.0, loss: 0.0 });
    }

    let d = config.group_dim;
    let vocab = config.vocab;
    // lookup tables in the quantizer's metric space
    let mut tables: Vec<Vec<f32>> = codebook.tables().to_vec();
    if config.l2_lookup {
        for t in &mut tables {
            for entry in t.chunks_exact_mut(d) {
                l2_normalize_in_place(entry)?;
            }
        }
    }

    let mut per_sample_acc = 0.0;
    let mut mean_probs = vec![vec![0f64; vocab]; tables.len()];
    let mut mean_counts = vec![0u64; tables.len()];
    let mut sub = vec![0f32; d];
    let mut logits = vec![0f64; vocab];
    let mut samples = 0u64;

    for row in batch.rows() {
        for (g, chunk) in row.chunks_exact(d).enumerate() {
            sub.copy_from_slice(chunk);
            if config.l2_lookup {
                l2_normalize_in_place(&mut sub)?;
            }
            let t = if tables.len() == 1 { 0 } else { g };
            let table = &tables[t];
            for (j, entry) in table.chunks_exact(d).enumerate() {
                let dist: f64 = sub
                    .iter()
                    .zip(entry)
                    .map(|(&a, &b)| {
                        let delta = a as f64 - b as f64;
                        delta * delta
                    })
                    .sum();
                logits[j] = -dist / temperature;
            }
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for l in logits.iter_mut() {
                *l = (*l - max).exp();
                z += *l;
            }
            let mut h = 0.0;
            for (j, l) in logits.iter().enumerate() {
                let p = l / z;
                if p > 0.0 {
                    h -= p * p.ln();
                }
                mean_probs[t][j] += p;
            }
            per_sample_acc += h;
            mean_counts[t] += 1;
            samples += 1;
        }
    }

    let per_sample_entropy = per_sample_acc / samples as f64;
    // entropy of the mean distribution, averaged over tables for unshared books
    let mut cb_entropy = 0.0;
    for (t, probs) in mean_probs.iter().enumerate() {
        let norm: Vec<f64> = probs.iter().map(|&p| p / mean_counts[t] as f64).collect();
        cb_entropy += entropy(&norm);
    }
    cb_entropy /= tables.len() as f64;

    Ok(EntropyLoss {
        per_sample_entropy,
        codebook_entropy: cb_entropy,
        loss: per_sample_entropy - cb_entropy,
    })
}
