use crate::error::{Error, Result};

/// Full parameterization of a grouped quantizer.
///
/// A `D`-dimensional vector is split into `groups` contiguous sub-vectors of
/// `group_dim` channels, each quantized against a `vocab`-entry code table.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizerConfig {
    pub latent_dim: usize,
    pub groups: usize,
    pub group_dim: usize,
    pub vocab: usize,
    pub shared_codebook: bool,
    pub l2_lookup: bool,
    /// Per-group level counts for finite scalar quantization; `None` otherwise.
    pub finite_levels: Option<Vec<usize>>,
    pub fixed_codebook: bool,
}

impl QuantizerConfig {
    /// Config with defaults: unshared, trainable, l2 lookup on unless the
    /// per-group dimension is 1 or 2 (where the sphere collapses).
    pub fn new(latent_dim: usize, groups: usize, vocab: usize) -> Result<Self> {
        if groups == 0 || latent_dim == 0 || latent_dim % groups != 0 {
            return Err(Error::InvalidConfig(format!(
                "groups ({groups}) must evenly divide latent_dim ({latent_dim})"
            )));
        }
        let group_dim = latent_dim / groups;
        let cfg = Self {
            latent_dim,
            groups,
            group_dim,
            vocab,
            shared_codebook: false,
            l2_lookup: group_dim > 2,
            finite_levels: None,
            fixed_codebook: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_shared(mut self, shared: bool) -> Self {
        self.shared_codebook = shared;
        self
    }

    pub fn with_l2(mut self, l2: bool) -> Self {
        self.l2_lookup = l2;
        self
    }

    pub fn with_fixed(mut self, fixed: bool) -> Self {
        self.fixed_codebook = fixed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups == 0 || self.group_dim == 0 {
            return Err(Error::InvalidConfig("groups and group_dim must be positive".into()));
        }
        if self.groups * self.group_dim != self.latent_dim {
            return Err(Error::InvalidConfig(format!(
                "groups ({}) * group_dim ({}) != latent_dim ({})",
                self.groups, self.group_dim, self.latent_dim
            )));
        }
        if self.vocab < 2 {
            return Err(Error::InvalidConfig("vocab must be >= 2".into()));
        }
        if let Some(levels) = &self.finite_levels {
            if levels.len() != self.groups {
                return Err(Error::InvalidConfig(format!(
                    "finite_levels length {} != groups {}",
                    levels.len(),
                    self.groups
                )));
            }
            if levels.iter().any(|&l| l < 2) {
                return Err(Error::InvalidConfig("every finite level count must be >= 2".into()));
            }
        }
        Ok(())
    }

    /// Number of code tables actually stored.
    pub fn num_tables(&self) -> usize {
        if self.shared_codebook {
            1
        } else {
            self.groups
        }
    }

    /// log2 of the effective vocabulary across all groups.
    pub fn effective_vocab_bits(&self) -> f64 {
        match &self.finite_levels {
            Some(levels) => levels.iter().map(|&l| (l as f64).log2()).sum(),
            None => self.groups as f64 * (self.vocab as f64).log2(),
        }
    }
}

/// Spatial geometry of a tokenized image and its compression ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressionGeometry {
    pub image_height: usize,
    pub image_width: usize,
    pub downsample: usize,
    pub latent_height: usize,
    pub latent_width: usize,
}

impl CompressionGeometry {
    pub fn new(image_height: usize, image_width: usize, downsample: usize) -> Result<Self> {
        if downsample == 0 || image_height % downsample != 0 || image_width % downsample != 0 {
            return Err(Error::InvalidConfig(format!(
                "downsample {downsample} must divide image extent {image_height}x{image_width}"
            )));
        }
        Ok(Self {
            image_height,
            image_width,
            downsample,
            latent_height: image_height / downsample,
            latent_width: image_width / downsample,
        })
    }

    /// Latent channels per raw RGB pixel budget: D / (3 f^2).
    pub fn compression_ratio(&self, latent_dim: usize) -> f64 {
        latent_dim as f64 / (3.0 * (self.downsample * self.downsample) as f64)
    }
}
