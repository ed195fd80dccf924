//! Named quantizer families expressed as grouped-quantizer configurations,
//! plus the finite-level (FSQ) quantization rule.

use std::fmt;
use std::str::FromStr;

use crate::batch::VectorBatch;
use crate::codebook::{Codebook, InitKind};
use crate::config::QuantizerConfig;
use crate::error::{Error, Result};
use crate::quantizer::CodeAssignment;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PresetName {
    Vq,
    VqganVit,
    Lfq,
    Fsq,
    Bsq,
    Gsq,
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PresetName::Vq => "vq",
            PresetName::VqganVit => "vqgan-vit",
            PresetName::Lfq => "lfq",
            PresetName::Fsq => "fsq",
            PresetName::Bsq => "bsq",
            PresetName::Gsq => "gsq",
        };
        f.write_str(s)
    }
}

impl FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vq" => Ok(PresetName::Vq),
            "vqgan-vit" => Ok(PresetName::VqganVit),
            "lfq" => Ok(PresetName::Lfq),
            "fsq" => Ok(PresetName::Fsq),
            "bsq" => Ok(PresetName::Bsq),
            "gsq" => Ok(PresetName::Gsq),
            other => Err(Error::InvalidPreset(format!("unknown preset '{other}'"))),
        }
    }
}

/// A named quantizer realized as a grouped-quantizer configuration.
/// Presets with a fixed codebook carry the code tables; FSQ instead carries
/// its grid in `config.finite_levels` and quantizes via [`fsq_quantize`].
#[derive(Debug, Clone, PartialEq)]
pub struct ZooPreset {
    pub name: PresetName,
    pub config: QuantizerConfig,
    pub codebook: Option<Codebook>,
}

pub fn preset(
    name: PresetName,
    latent_dim: usize,
    vocab: usize,
    groups: Option<usize>,
    levels: Option<&[usize]>,
    bsq_codewords: Option<Vec<f32>>,
) -> Result<ZooPreset> {
    match name {
        PresetName::Vq => {
            let config = QuantizerConfig::new(latent_dim, 1, vocab)?.with_l2(false);
            Ok(ZooPreset { name, config, codebook: None })
        }
        PresetName::VqganVit => {
            let config = QuantizerConfig::new(latent_dim, 1, vocab)?.with_l2(true);
            Ok(ZooPreset { name, config, codebook: None })
        }
        PresetName::Lfq => {
            if vocab != 2 {
                return Err(Error::InvalidPreset(format!(
                    "lfq fixes V=2 per group, got {vocab}"
                )));
            }
            let config = QuantizerConfig::new(latent_dim, latent_dim, 2)?
                .with_l2(false)
                .with_fixed(true);
            let tables = vec![vec![-1.0f32, 1.0]; latent_dim];
            let codebook = Codebook::from_tables(1, 2, tables, InitKind::Explicit)?;
            Ok(ZooPreset { name, config, codebook: Some(codebook) })
        }
        PresetName::Fsq => {
            let levels = levels.ok_or_else(|| {
                Error::InvalidPreset("fsq requires per-group level counts".into())
            })?;
            let max_level = *levels.iter().max().unwrap_or(&0);
            let mut config = QuantizerConfig::new(latent_dim, latent_dim, max_level.max(2))?
                .with_l2(false)
                .with_fixed(true);
            config.finite_levels = Some(levels.to_vec());
            config.validate()?;
            Ok(ZooPreset { name, config, codebook: None })
        }
        PresetName::Bsq => {
            if latent_dim % 2 != 0 {
                return Err(Error::InvalidPreset(format!(
                    "bsq requires an even latent_dim, got {latent_dim}"
                )));
            }
            let codewords = bsq_codewords.ok_or_else(|| {
                Error::InvalidPreset("bsq requires an explicit table of unit 2-vectors".into())
            })?;
            if codewords.len() != vocab * 2 {
                return Err(Error::InvalidPreset(format!(
                    "bsq table must hold {vocab} 2-vectors, got {} floats",
                    codewords.len()
                )));
            }
            for cw in codewords.chunks_exact(2) {
                let norm = (cw[0] as f64).hypot(cw[1] as f64);
                if (norm - 1.0).abs() > 1e-5 {
                    return Err(Error::InvalidPreset(format!(
                        "bsq codeword ({}, {}) is not unit norm",
                        cw[0], cw[1]
                    )));
                }
            }
            let config = QuantizerConfig::new(latent_dim, latent_dim / 2, vocab)?
                .with_shared(true)
                .with_l2(true)
                .with_fixed(true);
            let codebook = Codebook::from_tables(2, vocab, vec![codewords], InitKind::Explicit)?;
            Ok(ZooPreset { name, config, codebook: Some(codebook) })
        }
        PresetName::Gsq => {
            let groups = groups.unwrap_or(1);
            let config = QuantizerConfig::new(latent_dim, groups, vocab)?;
            let d = config.group_dim;
            // shared iff d > 2, l2 iff d > 2
            let config = config.with_shared(d > 2).with_l2(d > 2);
            Ok(ZooPreset { name, config, codebook: None })
        }
    }
}

/// Per-group grid sizes for finite scalar quantization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteLevelRule {
    levels: Vec<usize>,
}

impl FiniteLevelRule {
    pub fn new(levels: Vec<usize>) -> Result<Self> {
        if levels.is_empty() || levels.iter().any(|&l| l < 2) {
            return Err(Error::InvalidConfig("every level count must be >= 2".into()));
        }
        Ok(Self { levels })
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn grid_value(&self, group: usize, index: usize) -> f32 {
        (index as f64 / (self.levels[group] - 1) as f64) as f32
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Rounds each component onto its group's grid in sigmoid space.
/// The reconstruction is the grid value itself (no logit inversion).
pub fn fsq_quantize(batch: &VectorBatch, rule: &FiniteLevelRule) -> Result<CodeAssignment> {
    let groups = rule.levels.len();
    if batch.dim() != groups {
        return Err(Error::DimensionMismatch {
            expected: groups,
            actual: batch.dim(),
        });
    }
    let n = batch.count();
    let mut indices = Vec::with_capacity(n * groups);
    let mut distances = Vec::with_capacity(n * groups);
    let mut values = Vec::with_capacity(n * groups);
    for row in batch.rows() {
        for (g, &z) in row.iter().enumerate() {
            let steps = (rule.levels[g] - 1) as f64;
            let s = sigmoid(z as f64);
            let t = s * steps;
            // exact midpoints go to the lower index
            let mut idx = t.floor();
            if t - idx > 0.5 {
                idx += 1.0;
            }
            let idx = (idx as usize).min(rule.levels[g] - 1);
            let grid = idx as f64 / steps;
            indices.push(idx as u32);
            distances.push(((s - grid) * (s - grid)) as f32);
            values.push(grid as f32);
        }
    }
    Ok(CodeAssignment::new(
        groups,
        indices,
        VectorBatch::new(groups, values)?,
        distances,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantizer::quantize;

    #[test]
    fn preset_round() {
        for s in ["vq", "vqgan-vit", "lfq", "fsq", "bsq", "gsq"] {
            assert_eq!(s.parse::<PresetName>().unwrap().to_string(), s);
        }
        assert!("rvq".parse::<PresetName>().is_err());
    }

    #[test]
    fn lfq_preset_bits_and_sign() {
        let p = preset(PresetName::Lfq, 18, 2, None, None, None).unwrap();
        assert_eq!(p.config.effective_vocab_bits(), 18.0);
        assert_eq!(2f64.powf(p.config.effective_vocab_bits()) as u64, 262_144);

        let p = preset(PresetName::Lfq, 4, 2, None, None, None).unwrap();
        let cb = p.codebook.unwrap();
        let batch = VectorBatch::new(4, vec![0.5, -0.5, 0.0, 1e-30]).unwrap();
        let a = quantize(&batch, &cb, &p.config).unwrap();
        assert_eq!(a.dequantized().values(), &[1.0, -1.0, -1.0, 1.0]);
    }

    #[test]
    fn vq_preset_is_single_group_no_l2() {
        let p = preset(PresetName::Vq, 8, 8192, None, None, None).unwrap();
        assert_eq!(p.config.groups, 1);
        assert!(!p.config.l2_lookup);
        let p = preset(PresetName::VqganVit, 8, 8192, None, None, None).unwrap();
        assert!(p.config.l2_lookup);
    }

    #[test]
    fn bsq_odd_dim_rejected() {
        assert!(matches!(
            preset(PresetName::Bsq, 7, 4, None, None, None),
            Err(Error::InvalidPreset(_))
        ));
        let table = vec![1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, -1.0];
        let p = preset(PresetName::Bsq, 8, 4, None, None, Some(table)).unwrap();
        assert_eq!(p.config.groups, 4);
        assert!(p.config.shared_codebook && p.config.l2_lookup && p.config.fixed_codebook);
        // effective bits = (D/2) * log2(V)
        assert_eq!(p.config.effective_vocab_bits(), 8.0);
        // non-unit table rejected
        assert!(preset(PresetName::Bsq, 8, 1, None, None, Some(vec![0.5, 0.5])).is_err());
    }

    #[test]
    fn fsq_midpoint_and_saturation() {
        let rule = FiniteLevelRule::new(vec![5]).unwrap();
        let a = fsq_quantize(&VectorBatch::new(1, vec![0.0]).unwrap(), &rule).unwrap();
        assert_eq!(a.indices(), &[2]);
        assert_eq!(a.dequantized().values(), &[0.5]);

        let a = fsq_quantize(&VectorBatch::new(1, vec![40.0]).unwrap(), &rule).unwrap();
        assert_eq!(a.indices(), &[4]);
        let a = fsq_quantize(&VectorBatch::new(1, vec![-40.0]).unwrap(), &rule).unwrap();
        assert_eq!(a.indices(), &[0]);
    }

    #[test]
    fn fsq_matches_grid_enumeration_oracle() {
        use rand::{Rng, SeedableRng};
        let rule = FiniteLevelRule::new(vec![5, 6, 7]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let values: Vec<f32> = (0..300).map(|_| rng.random_range(-6.0..6.0)).collect();
        let batch = VectorBatch::new(3, values).unwrap();
        let a = fsq_quantize(&batch, &rule).unwrap();
        for (i, row) in batch.rows().enumerate() {
            for (g, &z) in row.iter().enumerate() {
                let s = 1.0 / (1.0 + (-(z as f64)).exp());
                let l = rule.levels()[g];
                // brute-force nearest grid point
                let best = (0..l)
                    .map(|k| (k, (s - k as f64 / (l - 1) as f64).abs()))
                    .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                    .unwrap()
                    .0;
                assert_eq!(a.index(i, g), best as u32);
            }
        }
    }

    #[test]
    fn fsq_every_grid_point_reachable() {
        let rule = FiniteLevelRule::new(vec![5]).unwrap();
        // logits chosen so sigmoid lands near each grid point
        let logits: Vec<f32> = [0.01, 0.25, 0.5, 0.75, 0.99]
            .iter()
            .map(|&p: &f64| ((p / (1.0 - p)).ln()) as f32)
            .collect();
        let a = fsq_quantize(&VectorBatch::new(1, logits).unwrap(), &rule).unwrap();
        assert_eq!(a.indices(), &[0, 1, 2, 3, 4]);
    }
}
