use crate::batch::VectorBatch;
use crate::codebook::Codebook;
use crate::config::QuantizerConfig;
use crate::error::{Error, Result};

/// Norm threshold below which a vector counts as degenerate.
pub const NORM_EPSILON: f64 = 1e-12;

/// Projects `v` onto the unit sphere in place.
///
/// For dim 1 the sphere degenerates to {-1, +1}: positive maps to +1,
/// everything else (including zero) to -1.
pub fn l2_normalize_in_place(v: &mut [f32]) -> Result<()> {
    if v.len() == 1 {
        v[0] = if v[0] > 0.0 { 1.0 } else { -1.0 };
        return Ok(());
    }
    let norm = (v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>()).sqrt();
    if norm <= NORM_EPSILON {
        return Err(Error::DegenerateVector);
    }
    for x in v.iter_mut() {
        *x = (*x as f64 / norm) as f32;
    }
    Ok(())
}

pub fn l2_normalize(v: &[f32]) -> Result<Vec<f32>> {
    let mut out = v.to_vec();
    l2_normalize_in_place(&mut out)?;
    Ok(out)
}

/// Group-wise code indices with their reconstructions and lookup-space distances.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeAssignment {
    groups: usize,
    /// N x G row-major.
    indices: Vec<u32>,
    /// N x D; concatenated selected codewords (normalized when l2 lookup).
    dequantized: VectorBatch,
    /// N x G squared distances to the chosen codeword, in lookup space.
    distances: Vec<f32>,
}

impl CodeAssignment {
    pub fn new(groups: usize, indices: Vec<u32>, dequantized: VectorBatch, distances: Vec<f32>) -> Self {
        debug_assert_eq!(indices.len(), distances.len());
        Self { groups, indices, dequantized, distances }
    }

    pub fn count(&self) -> usize {
        self.indices.len() / self.groups
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn index(&self, row: usize, group: usize) -> u32 {
        self.indices[row * self.groups + group]
    }

    pub fn dequantized(&self) -> &VectorBatch {
        &self.dequantized
    }

    pub fn distances(&self) -> &[f32] {
        &self.distances
    }
}

/// Codebook tables as seen by the lookup: normalized per entry when l2 is on.
fn lookup_tables(codebook: &Codebook, config: &QuantizerConfig) -> Result<Vec<Vec<f32>>> {
    let mut out = Vec::with_capacity(codebook.num_tables());
    for t in codebook.tables() {
        let mut table = t.clone();
        if config.l2_lookup {
            for entry in table.chunks_exact_mut(codebook.group_dim()) {
                l2_normalize_in_place(entry)?;
            }
        }
        out.push(table);
    }
    Ok(out)
}

fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

/// Scalar nearest neighbor, exact even when the distance difference is below
/// one ulp of the distances themselves (e.g. a subnormal query against +-1).
/// Ties, including exact midpoints, resolve to the lowest index.
fn nearest_scalar(query: f32, table: &[f32]) -> (u32, f64) {
    let q = query as f64;
    let mut best = 0usize;
    for j in 1..table.len() {
        let a = table[best] as f64;
        let b = table[j] as f64;
        let da = (q - a).abs();
        let db = (q - b).abs();
        let closer = if da != db {
            db < da
        } else {
            // rounded distances tie: decide by which side of the midpoint q is on
            let m = 0.5 * (a + b);
            if b > a {
                q > m
            } else if b < a {
                q < m
            } else {
                false
            }
        };
        if closer {
            best = j;
        }
    }
    let d = q - table[best] as f64;
    (best as u32, d * d)
}

/// Nearest codeword per group. Ties resolve to the lowest index.
fn nearest(query: &[f32], table: &[f32], d: usize) -> (u32, f64) {
    if d == 1 {
        return nearest_scalar(query[0], table);
    }
    let mut best = 0u32;
    let mut best_dist = f64::INFINITY;
    for (j, entry) in table.chunks_exact(d).enumerate() {
        let dist = squared_distance(query, entry);
        if dist < best_dist {
            best = j as u32;
            best_dist = dist;
        }
    }
    (best, best_dist)
}

/// Quantizes each row of `batch`: splits it into G contiguous groups and
/// assigns each the argmin-distance codeword, in normalized space when
/// `l2_lookup` is set.
pub fn quantize(batch: &VectorBatch, codebook: &Codebook, config: &QuantizerConfig) -> Result<CodeAssignment> {
    config.validate()?;
    codebook.matches(config)?;
    if batch.dim() != config.latent_dim {
        return Err(Error::DimensionMismatch {
            expected: config.latent_dim,
            actual: batch.dim(),
        });
    }
    let d = config.group_dim;
    let tables = lookup_tables(codebook, config)?;

    let n = batch.count();
    let mut indices = Vec::with_capacity(n * config.groups);
    let mut distances = Vec::with_capacity(n * config.groups);
    let mut dequantized = Vec::with_capacity(n * config.latent_dim);
    let mut query = vec![0f32; d];

    for row in batch.rows() {
        for (g, sub) in row.chunks_exact(d).enumerate() {
            query.copy_from_slice(sub);
            if config.l2_lookup {
                l2_normalize_in_place(&mut query)?;
            }
            let table = if tables.len() == 1 { &tables[0] } else { &tables[g] };
            let (j, dist) = nearest(&query, table, d);
            indices.push(j);
            distances.push(dist as f32);
            dequantized.extend_from_slice(&table[j as usize * d..(j as usize + 1) * d]);
        }
    }
    Ok(CodeAssignment::new(
        config.groups,
        indices,
        VectorBatch::new(config.latent_dim, dequantized)?,
        distances,
    ))
}

/// Maps an N x G index matrix back to concatenated codewords.
pub fn dequantize(indices: &[u32], codebook: &Codebook, config: &QuantizerConfig) -> Result<VectorBatch> {
    config.validate()?;
    codebook.matches(config)?;
    if indices.len() % config.groups != 0 {
        return Err(Error::DimensionMismatch {
            expected: config.groups,
            actual: indices.len(),
        });
    }
    if let Some(&bad) = indices.iter().find(|&&i| i as usize >= config.vocab) {
        return Err(Error::IndexOutOfRange { index: bad, vocab: config.vocab });
    }
    let d = config.group_dim;
    let tables = lookup_tables(codebook, config)?;
    let mut values = Vec::with_capacity(indices.len() * d);
    for row in indices.chunks_exact(config.groups) {
        for (g, &j) in row.iter().enumerate() {
            let table = if tables.len() == 1 { &tables[0] } else { &tables[g] };
            values.extend_from_slice(&table[j as usize * d..(j as usize + 1) * d]);
        }
    }
    VectorBatch::new(config.latent_dim, values)
}

pub fn effective_vocab_bits(config: &QuantizerConfig) -> f64 {
    config.effective_vocab_bits()
}
