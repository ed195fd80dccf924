//! Monte-Carlo distance statistics in high dimension and least-squares
//! fitting of the reconstruction-quality scaling law.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Sample moments of pairwise squared distances against closed-form predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceStatsReport {
    pub dim: usize,
    pub sigma: f64,
    pub normalized: bool,
    pub samples: u64,
    pub sample_mean: f64,
    pub sample_var: f64,
    /// Fourth central moment, for standard errors of the variance estimate.
    pub sample_fourth_central: f64,
    pub predicted_mean: f64,
    pub predicted_var: f64,
}

impl DistanceStatsReport {
    /// Standard error of the sample mean.
    pub fn se_mean(&self) -> f64 {
        (self.sample_var / self.samples as f64).sqrt()
    }

    /// Standard error of the sample variance.
    pub fn se_var(&self) -> f64 {
        ((self.sample_fourth_central - self.sample_var * self.sample_var) / self.samples as f64).sqrt()
    }
}

/// Draws `samples` pairs z, c ~ N(0, sigma^2)^dim (optionally projected to the
/// unit sphere) and reports the moments of their squared distances.
///
/// Predicted values are the closed forms 2 n sigma^2 / 4 n sigma^4, and 2 /
/// 4/(n-1) in the normalized case.
pub fn distance_stats(
    dim: usize,
    sigma: f64,
    normalized: bool,
    samples: u64,
    seed: u64,
) -> Result<DistanceStatsReport> {
    if normalized && dim < 2 {
        return Err(Error::DegenerateDim);
    }
    if dim == 0 || sigma <= 0.0 {
        return Err(Error::InvalidConfig("dim and sigma must be positive".into()));
    }
    if samples < 1000 {
        return Err(Error::InsufficientData(format!(
            "need at least 1000 samples, got {samples}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = vec![0f64; dim];
    let mut c = vec![0f64; dim];
    // raw power sums of the squared distance
    let (mut s1, mut s2, mut s3, mut s4) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..samples {
        for v in z.iter_mut() {
            let g: f64 = StandardNormal.sample(&mut rng);
            *v = sigma * g;
        }
        for v in c.iter_mut() {
            let g: f64 = StandardNormal.sample(&mut rng);
            *v = sigma * g;
        }
        if normalized {
            normalize(&mut z);
            normalize(&mut c);
        }
        let d: f64 = z.iter().zip(&c).map(|(&a, &b)| (a - b) * (a - b)).sum();
        s1 += d;
        s2 += d * d;
        s3 += d * d * d;
        s4 += d * d * d * d;
    }
    let n = samples as f64;
    let mean = s1 / n;
    let var = s2 / n - mean * mean;
    let m4 = s4 / n - 4.0 * mean * s3 / n + 6.0 * mean * mean * s2 / n - 3.0 * mean.powi(4);

    let (predicted_mean, predicted_var) = if normalized {
        (2.0, 4.0 / (dim as f64 - 1.0))
    } else {
        let s2 = sigma * sigma;
        (2.0 * dim as f64 * s2, 4.0 * dim as f64 * s2 * s2)
    };
    Ok(DistanceStatsReport {
        dim,
        sigma,
        normalized,
        samples,
        sample_mean: mean,
        sample_var: var,
        sample_fourth_central: m4,
        predicted_mean,
        predicted_var,
    })
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|&x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

/// Coefficients of score(V, D) = B / log(V)^alpha + c_dim * D^beta.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingFit {
    pub b: f64,
    pub alpha: f64,
    pub c_dim: f64,
    pub beta: f64,
    pub residual_rms: f64,
    pub log_base: f64,
}

/// Fit constants reported for the reconstruction-quality law, natural-log
/// convention unstated in the source; shipped as a reference preset only.
pub fn reference_fit_preset(log_base: f64) -> ScalingFit {
    ScalingFit {
        b: 411.63,
        alpha: 2.8375,
        c_dim: 0.1601,
        beta: 0.1956,
        residual_rms: f64::NAN,
        log_base,
    }
}

pub fn scaling_eval(fit: &ScalingFit, vocab: u64, latent_dim: usize) -> Result<f64> {
    if vocab < 2 || latent_dim == 0 {
        return Err(Error::InvalidConfig("need V >= 2 and D >= 1".into()));
    }
    let log_v = (vocab as f64).ln() / fit.log_base.ln();
    Ok(fit.b / log_v.powf(fit.alpha) + fit.c_dim * (latent_dim as f64).powf(fit.beta))
}

/// One observation: (vocabulary size, latent dim, measured score).
pub type Observation = (u64, usize, f64);

fn check_observations(obs: &[Observation]) -> Result<()> {
    if obs.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "need at least 4 observations, got {}",
            obs.len()
        )));
    }
    let mut vs: Vec<u64> = obs.iter().map(|o| o.0).collect();
    vs.sort_unstable();
    vs.dedup();
    let mut ds: Vec<usize> = obs.iter().map(|o| o.1).collect();
    ds.sort_unstable();
    ds.dedup();
    if vs.len() < 2 || ds.len() < 2 {
        return Err(Error::InsufficientData(
            "observations must span at least 2 distinct V and 2 distinct D".into(),
        ));
    }
    if obs.iter().any(|o| o.0 < 2 || o.1 == 0 || !o.2.is_finite()) {
        return Err(Error::InsufficientData("invalid observation entries".into()));
    }
    Ok(())
}

/// For fixed (alpha, beta) the model is linear in (B, c_dim); solve the 2x2
/// normal equations and return the coefficients and the sum of squared residuals.
fn linear_solve(obs: &[(f64, f64, f64)], alpha: f64, beta: f64) -> Option<(f64, f64, f64)> {
    let (mut xx, mut xy, mut yy) = (0.0, 0.0, 0.0);
    let (mut xs, mut ys) = (0.0, 0.0);
    for &(log_v, d, score) in obs {
        let x = log_v.powf(-alpha);
        let y = d.powf(beta);
        xx += x * x;
        xy += x * y;
        yy += y * y;
        xs += x * score;
        ys += y * score;
    }
    let det = xx * yy - xy * xy;
    if !det.is_finite() || det.abs() < 1e-30 {
        return None;
    }
    let b = (xs * yy - ys * xy) / det;
    let c = (xx * ys - xy * xs) / det;
    let mut sse = 0.0;
    for &(log_v, d, score) in obs {
        let r = score - (b * log_v.powf(-alpha) + c * d.powf(beta));
        sse += r * r;
    }
    if sse.is_finite() {
        Some((b, c, sse))
    } else {
        None
    }
}

/// Least-squares fit of (B, alpha, c_dim, beta) by a deterministic grid of
/// (alpha, beta) starts, each solved exactly for the linear pair and refined
/// with shrinking coordinate steps.
pub fn fit_scaling(observations: &[Observation], log_base: f64) -> Result<ScalingFit> {
    check_observations(observations)?;
    if log_base <= 1.0 {
        return Err(Error::InvalidConfig("log base must exceed 1".into()));
    }
    let obs: Vec<(f64, f64, f64)> = observations
        .iter()
        .map(|&(v, d, s)| ((v as f64).ln() / log_base.ln(), d as f64, s))
        .collect();

    let mut starts: Vec<(f64, f64, f64, f64, f64)> = Vec::new(); // (alpha, beta, b, c, sse)
    let mut a = 0.1;
    while a <= 6.0 {
        let mut bta = 0.02;
        while bta <= 3.0 {
            if let Some((b, c, sse)) = linear_solve(&obs, a, bta) {
                starts.push((a, bta, b, c, sse));
            }
            bta += 0.1;
        }
        a += 0.2;
    }
    if starts.is_empty() {
        return Err(Error::DegenerateFit);
    }
    starts.sort_by(|a, b| a.4.partial_cmp(&b.4).unwrap());
    starts.truncate(8);
    let grid_best_sse = starts[0].4;

    let mut best: Option<(f64, f64, f64, f64, f64)> = None;
    for &(a0, b0, _, _, _) in &starts {
        let (mut alpha, mut beta) = (a0, b0);
        let (mut b_lin, mut c_lin, mut sse) = linear_solve(&obs, alpha, beta).unwrap();
        let mut step = 0.1;
        while step > 1e-9 {
            let mut improved = false;
            for (da, db) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
                let (na, nb) = (alpha + da, beta + db);
                if na <= 0.0 || nb <= 0.0 {
                    continue;
                }
                if let Some((lb, lc, ls)) = linear_solve(&obs, na, nb) {
                    if ls < sse {
                        alpha = na;
                        beta = nb;
                        b_lin = lb;
                        c_lin = lc;
                        sse = ls;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        if best.is_none() || sse < best.unwrap().4 {
            best = Some((alpha, beta, b_lin, c_lin, sse));
        }
    }
    let (alpha, beta, b, c, sse) = best.ok_or(Error::DegenerateFit)?;
    if sse > grid_best_sse + 1e-12 {
        return Err(Error::DegenerateFit);
    }
    Ok(ScalingFit {
        b,
        alpha,
        c_dim: c,
        beta,
        residual_rms: (sse / obs.len() as f64).sqrt(),
        log_base,
    })
}
