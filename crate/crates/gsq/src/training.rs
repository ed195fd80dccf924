//! Gradient-free codebook learning via exponential-moving-average cluster
//! statistics, with usage tracking.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::batch::VectorBatch;
use crate::codebook::{init_codebook, Codebook, InitKind};
use crate::config::QuantizerConfig;
use crate::error::{Error, Result};
use crate::metrics::UsageHistogram;
use crate::quantizer::{l2_normalize_in_place, quantize, CodeAssignment};

pub const DEFAULT_DECAY: f64 = 0.999;
pub const DEFAULT_SMOOTHING: f64 = 1e-5;

/// Moving-average cluster statistics backing EMA codebook updates.
#[derive(Debug, Clone, PartialEq)]
pub struct EmaState {
    /// tables x V
    cluster_size: Vec<Vec<f64>>,
    /// tables x (V * d)
    cluster_sum: Vec<Vec<f64>>,
    decay: f64,
    smoothing: f64,
    steps: u64,
}

impl EmaState {
    /// Seeds cluster statistics from the current codewords with unit mass, so
    /// codes that never win keep their position instead of collapsing to zero.
    pub fn new(codebook: &Codebook, decay: f64, smoothing: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&decay) || decay <= 0.0 {
            return Err(Error::InvalidConfig(format!("decay must be in (0,1), got {decay}")));
        }
        if smoothing <= 0.0 {
            return Err(Error::InvalidConfig("smoothing must be positive".into()));
        }
        let cluster_size = vec![vec![1.0; codebook.vocab()]; codebook.num_tables()];
        let cluster_sum = codebook
            .tables()
            .iter()
            .map(|t| t.iter().map(|&v| v as f64).collect())
            .collect();
        Ok(Self {
            cluster_size,
            cluster_sum,
            decay,
            smoothing,
            steps: 0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    /// Total moving mass per table.
    pub fn total_cluster_size(&self, table: usize) -> f64 {
        self.cluster_size[table].iter().sum()
    }
}

/// Snapshot of training progress.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub steps: u64,
    /// Mean over rows of the summed per-group squared lookup distances.
    pub mean_quantization_error: f64,
    pub commitment: f64,
    pub usage: UsageHistogram,
}

/// Mean over rows of the squared lookup-space distance between each input and
/// its reconstruction, i.e. the per-group assignment distances summed.
pub fn commitment_loss(batch: &VectorBatch, assignment: &CodeAssignment) -> Result<f64> {
    if batch.count() != assignment.count() {
        return Err(Error::DimensionMismatch {
            expected: batch.count(),
            actual: assignment.count(),
        });
    }
    if batch.count() == 0 {
        return Ok(0.0);
    }
    let total: f64 = assignment.distances().iter().map(|&d| d as f64).sum();
    Ok(total / batch.count() as f64)
}

/// One EMA update: assign the batch, decay the cluster statistics toward the
/// batch's per-code counts and sums, and move each codeword to its smoothed
/// cluster mean (re-projected to the sphere under l2 lookup).
pub fn ema_step(
    batch: &VectorBatch,
    codebook: &mut Codebook,
    state: &mut EmaState,
    config: &QuantizerConfig,
) -> Result<TrainReport> {
    if config.fixed_codebook {
        return Err(Error::FixedCodebook);
    }
    codebook.matches(config)?;
    state.steps += 1;

    let mut usage = UsageHistogram::for_config(config);
    if batch.is_empty() {
        return Ok(TrainReport {
            steps: state.steps,
            mean_quantization_error: 0.0,
            commitment: 0.0,
            usage,
        });
    }

    let assignment = quantize(batch, codebook, config)?;
    usage.record(&assignment, config.shared_codebook);
    let commitment = commitment_loss(batch, &assignment)?;

    let d = config.group_dim;
    let vocab = config.vocab;
    let tables = config.num_tables();
    let mut counts = vec![vec![0f64; vocab]; tables];
    let mut sums = vec![vec![0f64; vocab * d]; tables];
    let mut sub = vec![0f32; d];
    for (i, row) in batch.rows().enumerate() {
        for (g, chunk) in row.chunks_exact(d).enumerate() {
            sub.copy_from_slice(chunk);
            if config.l2_lookup {
                l2_normalize_in_place(&mut sub)?;
            }
            let t = if config.shared_codebook { 0 } else { g };
            let j = assignment.index(i, g) as usize;
            counts[t][j] += 1.0;
            for (k, &v) in sub.iter().enumerate() {
                sums[t][j * d + k] += v as f64;
            }
        }
    }

    let lambda = state.decay;
    for t in 0..tables {
        for j in 0..vocab {
            state.cluster_size[t][j] = lambda * state.cluster_size[t][j] + (1.0 - lambda) * counts[t][j];
            for k in 0..d {
                let idx = j * d + k;
                state.cluster_sum[t][idx] = lambda * state.cluster_sum[t][idx] + (1.0 - lambda) * sums[t][idx];
            }
            let denom = state.cluster_size[t][j] + state.smoothing;
            let mut word: Vec<f32> = (0..d)
                .map(|k| (state.cluster_sum[t][j * d + k] / denom) as f32)
                .collect();
            if config.l2_lookup {
                // a dead code whose statistics decayed to zero keeps its old position
                if l2_normalize_in_place(&mut word).is_err() {
                    continue;
                }
            }
            codebook.tables_mut()[t][j * d..(j + 1) * d].copy_from_slice(&word);
        }
    }

    Ok(TrainReport {
        steps: state.steps,
        mean_quantization_error: commitment,
        commitment,
        usage,
    })
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub steps: usize,
    pub batch_size: usize,
    pub decay: f64,
    pub smoothing: f64,
    pub report_every: usize,
    pub init: InitKind,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            steps: 1000,
            batch_size: 64,
            decay: DEFAULT_DECAY,
            smoothing: DEFAULT_SMOOTHING,
            report_every: 100,
            init: InitKind::SphericalGaussian,
        }
    }
}

/// Trains a fresh codebook on `corpus` by cycling EMA steps over seeded random
/// batches. Deterministic for a fixed seed and corpus.
///
/// Returned reports are cumulative-usage snapshots at `report_every` cadence;
/// the final step is always reported.
pub fn train(
    corpus: &VectorBatch,
    config: &QuantizerConfig,
    opts: &TrainOptions,
    seed: u64,
) -> Result<(Codebook, Vec<TrainReport>)> {
    if opts.steps == 0 {
        return Err(Error::InvalidConfig("steps must be >= 1".into()));
    }
    if opts.batch_size == 0 {
        return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
    }
    if corpus.is_empty() {
        return Err(Error::InsufficientData("empty training corpus".into()));
    }
    let mut codebook = init_codebook(config, opts.init, seed)?;
    let mut state = EmaState::new(&codebook, opts.decay, opts.smoothing)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let n = corpus.count();

    let mut reports = Vec::new();
    let mut usage = UsageHistogram::for_config(config);
    for step in 1..=opts.steps {
        let rows: Vec<usize> = (0..opts.batch_size).map(|_| rng.random_range(0..n)).collect();
        let batch = corpus.select(&rows);
        let report = ema_step(&batch, &mut codebook, &mut state, config)?;
        usage.merge(&report.usage)?;
        if step % opts.report_every.max(1) == 0 || step == opts.steps {
            reports.push(TrainReport {
                steps: report.steps,
                mean_quantization_error: report.mean_quantization_error,
                commitment: report.commitment,
                usage: usage.clone(),
            });
        }
    }
    Ok((codebook, reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::InitKind;

    #[test]
    fn single_vector_matches_scalar_recursion_oracle() {
        // V=1 is below the config minimum, so use V=2 with the second codeword
        // far away: every assignment hits code 0 and its statistics follow the
        // scalar EMA recursion exactly.
        let cfg = QuantizerConfig::new(1, 1, 2).unwrap().with_l2(false);
        let x = 0.6f32;
        let c0 = 0.1f32;
        let mut cb = Codebook::from_tables(1, 2, vec![vec![c0, 100.0]], InitKind::Explicit).unwrap();
        let mut state = EmaState::new(&cb, 0.999, 1e-5).unwrap();
        let batch = VectorBatch::new(1, vec![x]).unwrap();
        let k = 200;
        for _ in 0..k {
            ema_step(&batch, &mut cb, &mut state, &cfg).unwrap();
        }
        // independent recursion: n <- l*n + (1-l), s <- l*s + (1-l)*x
        let (mut nn, mut ss) = (1.0f64, c0 as f64);
        for _ in 0..k {
            nn = 0.999 * nn + 0.001;
            ss = 0.999 * ss + 0.001 * x as f64;
        }
        let expected = ss / (nn + 1e-5);
        assert!((cb.entry(0, 0)[0] as f64 - expected).abs() < 1e-6);
    }

    #[test]
    fn empty_batch_is_a_counted_noop() {
        let cfg = QuantizerConfig::new(2, 1, 4).unwrap().with_l2(false);
        let mut cb = init_codebook(&cfg, InitKind::SphericalGaussian, 1).unwrap();
        let before = cb.clone();
        let mut state = EmaState::new(&cb, 0.999, 1e-5).unwrap();
        let report = ema_step(&VectorBatch::empty(2), &mut cb, &mut state, &cfg).unwrap();
        assert_eq!(cb, before);
        assert_eq!(report.steps, 1);
    }

    #[test]
    fn fixed_codebook_refuses_training() {
        let preset = crate::zoo::preset(crate::zoo::PresetName::Lfq, 4, 2, None, None, None).unwrap();
        let mut cb = preset.codebook.unwrap();
        let mut state = EmaState::new(&cb, 0.999, 1e-5).unwrap();
        let batch = VectorBatch::new(4, vec![0.1; 4]).unwrap();
        assert!(matches!(
            ema_step(&batch, &mut cb, &mut state, &preset.config),
            Err(Error::FixedCodebook)
        ));
    }

    #[test]
    fn ema_mass_conservation() {
        let cfg = QuantizerConfig::new(4, 2, 8).unwrap().with_l2(false);
        let mut cb = init_codebook(&cfg, InitKind::SphericalGaussian, 3).unwrap();
        let mut state = EmaState::new(&cb, 0.99, 1e-5).unwrap();
        let prev: Vec<f64> = (0..2).map(|t| state.total_cluster_size(t)).collect();
        let batch = VectorBatch::new(4, (0..40).map(|i| (i as f32).sin()).collect()).unwrap();
        ema_step(&batch, &mut cb, &mut state, &cfg).unwrap();
        for t in 0..2 {
            let expect = 0.99 * prev[t] + 0.01 * batch.count() as f64;
            assert!((state.total_cluster_size(t) - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn l2_training_keeps_codewords_on_sphere() {
        let cfg = QuantizerConfig::new(8, 2, 16).unwrap().with_l2(true);
        let corpus = {
            use rand::{Rng, SeedableRng};
            let mut rng = ChaCha8Rng::seed_from_u64(17);
            VectorBatch::new(8, (0..8 * 512).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
        };
        let opts = TrainOptions { steps: 300, batch_size: 32, ..Default::default() };
        let (cb, _) = train(&corpus, &cfg, &opts, 5).unwrap();
        for t in cb.tables() {
            for e in t.chunks_exact(4) {
                let norm: f64 = e.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
                assert!((norm - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn train_is_deterministic_and_rejects_zero_steps() {
        let cfg = QuantizerConfig::new(4, 2, 8).unwrap();
        let corpus = VectorBatch::new(4, (0..400).map(|i| (i as f32 * 0.37).cos()).collect()).unwrap();
        let opts = TrainOptions { steps: 50, batch_size: 16, ..Default::default() };
        let (a, _) = train(&corpus, &cfg, &opts, 9).unwrap();
        let (b, _) = train(&corpus, &cfg, &opts, 9).unwrap();
        assert_eq!(a, b);

        let bad = TrainOptions { steps: 0, ..Default::default() };
        assert!(train(&corpus, &cfg, &bad, 9).is_err());
    }

    #[test]
    fn planted_clusters_are_recovered() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        // 4 well-separated centers in 2-d
        let centers = [[10.0f32, 0.0], [-10.0, 0.0], [0.0, 10.0], [0.0, -10.0]];
        let mut values = Vec::new();
        for i in 0..2000 {
            let c = centers[i % 4];
            values.push(c[0] + rng.random_range(-0.5..0.5));
            values.push(c[1] + rng.random_range(-0.5..0.5));
        }
        let corpus = VectorBatch::new(2, values).unwrap();
        let cfg = QuantizerConfig::new(2, 1, 4).unwrap().with_l2(false);
        let opts = TrainOptions { steps: 3000, batch_size: 64, decay: 0.99, ..Default::default() };
        let (cb, reports) = train(&corpus, &cfg, &opts, 5).unwrap();

        // every center has a codeword within the cluster radius
        for c in centers {
            let best = (0..4)
                .map(|j| {
                    let e = cb.entry(0, j);
                    ((e[0] - c[0]).powi(2) + (e[1] - c[1]).powi(2)).sqrt()
                })
                .fold(f32::INFINITY, f32::min);
            assert!(best < 1.0, "no codeword near center {c:?} (best {best})");
        }
        // assignment accuracy: each sample's codeword is near its own center
        let a = quantize(&corpus, &cb, &cfg).unwrap();
        let mut good = 0;
        for (i, row) in corpus.rows().enumerate() {
            let e = cb.entry(0, a.index(i, 0) as usize);
            let dist = ((e[0] - row[0]).powi(2) + (e[1] - row[1]).powi(2)).sqrt();
            if dist < 2.0 {
                good += 1;
            }
        }
        assert!(good as f64 / corpus.count() as f64 >= 0.99);

        // error is non-increasing in expectation: compare first vs last snapshot
        assert!(reports.last().unwrap().mean_quantization_error <= reports[0].mean_quantization_error);
    }
}
