use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::QuantizerConfig;
use crate::error::{Error, Result};
use crate::quantizer::l2_normalize_in_place;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    SphericalGaussian,
    UniformInterval,
    Explicit,
}

/// One code table per group (or a single shared one), each `vocab` entries of
/// `group_dim` components, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    group_dim: usize,
    vocab: usize,
    tables: Vec<Vec<f32>>,
    init_kind: InitKind,
}

impl Codebook {
    pub fn from_tables(group_dim: usize, vocab: usize, tables: Vec<Vec<f32>>, init_kind: InitKind) -> Result<Self> {
        for t in &tables {
            if t.len() != vocab * group_dim {
                return Err(Error::DimensionMismatch {
                    expected: vocab * group_dim,
                    actual: t.len(),
                });
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig("codebook contains non-finite entries".into()));
            }
        }
        Ok(Self { group_dim, vocab, tables, init_kind })
    }

    pub fn group_dim(&self) -> usize {
        self.group_dim
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn num_tables(&self) -> usize {
        self.tables.len()
    }

    pub fn init_kind(&self) -> InitKind {
        self.init_kind
    }

    pub fn tables(&self) -> &[Vec<f32>] {
        &self.tables
    }

    /// Table used by group `g` (the single table when shared).
    pub fn table_for_group(&self, g: usize) -> &[f32] {
        if self.tables.len() == 1 {
            &self.tables[0]
        } else {
            &self.tables[g]
        }
    }

    pub fn entry(&self, table: usize, index: usize) -> &[f32] {
        &self.tables[table][index * self.group_dim..(index + 1) * self.group_dim]
    }

    pub(crate) fn tables_mut(&mut self) -> &mut [Vec<f32>] {
        &mut self.tables
    }

    /// Checks the codebook matches a config's shape.
    pub fn matches(&self, config: &QuantizerConfig) -> Result<()> {
        if self.group_dim != config.group_dim {
            return Err(Error::DimensionMismatch {
                expected: config.group_dim,
                actual: self.group_dim,
            });
        }
        if self.vocab != config.vocab || self.tables.len() != config.num_tables() {
            return Err(Error::InvalidConfig(format!(
                "codebook shape {}x{}x{} does not match config {}x{}x{}",
                self.tables.len(),
                self.vocab,
                self.group_dim,
                config.num_tables(),
                config.vocab,
                config.group_dim
            )));
        }
        Ok(())
    }
}

/// Draws codewords from a standard Gaussian and projects each onto the unit
/// sphere, giving a uniform distribution over directions. Deterministic per seed.
pub fn init_codebook_spherical(config: &QuantizerConfig, seed: u64) -> Result<Codebook> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = config.group_dim;
    let mut tables = Vec::with_capacity(config.num_tables());
    for _ in 0..config.num_tables() {
        let mut table = Vec::with_capacity(config.vocab * d);
        for _ in 0..config.vocab {
            let mut entry = vec![0f32; d];
            loop {
                for x in entry.iter_mut() {
                    *x = StandardNormal.sample(&mut rng);
                }
                if l2_normalize_in_place(&mut entry).is_ok() {
                    break;
                }
            }
            table.extend_from_slice(&entry);
        }
        tables.push(table);
    }
    Codebook::from_tables(d, config.vocab, tables, InitKind::SphericalGaussian)
}

/// Components i.i.d. uniform on [-1/V, 1/V], the conventional small-interval init.
pub fn init_codebook_uniform(config: &QuantizerConfig, seed: u64) -> Result<Codebook> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = 1.0 / config.vocab as f32;
    let d = config.group_dim;
    let tables = (0..config.num_tables())
        .map(|_| {
            (0..config.vocab * d)
                .map(|_| rng.random_range(-bound..=bound))
                .collect()
        })
        .collect();
    Codebook::from_tables(d, config.vocab, tables, InitKind::UniformInterval)
}

pub fn init_codebook(config: &QuantizerConfig, kind: InitKind, seed: u64) -> Result<Codebook> {
    match kind {
        InitKind::SphericalGaussian => init_codebook_spherical(config, seed),
        InitKind::UniformInterval => init_codebook_uniform(config, seed),
        InitKind::Explicit => Err(Error::InvalidConfig(
            "explicit codebooks are built with Codebook::from_tables".into(),
        )),
    }
}
