//! Python bindings: a `Quantizer` class covering configuration, codebook
//! initialization, EMA training, encode/decode and health metrics, plus
//! module-level analysis helpers.

use std::collections::HashMap;
use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use gsq::codebook::InitKind;
use gsq::persistence;
use gsq::zoo::{self, PresetName};
use gsq::*;

fn pyerr(e: gsq::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_init(kind: &str) -> PyResult<InitKind> {
    match kind {
        "spherical" => Ok(InitKind::SphericalGaussian),
        "uniform" => Ok(InitKind::UniformInterval),
        other => Err(PyValueError::new_err(format!(
            "unknown init '{other}' (expected 'spherical' or 'uniform')"
        ))),
    }
}

/// A grouped vector quantizer: a configuration plus its codebook.
#[pyclass]
struct Quantizer {
    config: QuantizerConfig,
    codebook: Option<Codebook>,
}

impl Quantizer {
    fn batch(&self, values: Vec<f32>) -> PyResult<VectorBatch> {
        VectorBatch::new(self.config.latent_dim, values).map_err(pyerr)
    }

    fn codebook(&self) -> PyResult<&Codebook> {
        self.codebook
            .as_ref()
            .ok_or_else(|| PyValueError::new_err("quantizer has no codebook"))
    }

    fn assign(&self, batch: &VectorBatch) -> PyResult<CodeAssignment> {
        match &self.config.finite_levels {
            Some(levels) => {
                let rule = FiniteLevelRule::new(levels.clone()).map_err(pyerr)?;
                fsq_quantize(batch, &rule).map_err(pyerr)
            }
            None => quantize(batch, self.codebook()?, &self.config).map_err(pyerr),
        }
    }
}

#[pymethods]
impl Quantizer {
    /// Quantizer with a freshly initialized codebook.
    #[new]
    #[pyo3(signature = (latent_dim, groups, vocab, shared=None, l2=None, seed=0, init="spherical"))]
    fn new(
        latent_dim: usize,
        groups: usize,
        vocab: usize,
        shared: Option<bool>,
        l2: Option<bool>,
        seed: u64,
        init: &str,
    ) -> PyResult<Self> {
        let mut config = QuantizerConfig::new(latent_dim, groups, vocab).map_err(pyerr)?;
        if let Some(s) = shared {
            config.shared_codebook = s;
        }
        if let Some(l2) = l2 {
            config.l2_lookup = l2;
        }
        config.validate().map_err(pyerr)?;
        let codebook = init_codebook(&config, parse_init(init)?, seed).map_err(pyerr)?;
        Ok(Self { config, codebook: Some(codebook) })
    }

    /// Quantizer from a named preset: vq, vqgan-vit, lfq, fsq, bsq, gsq.
    #[staticmethod]
    #[pyo3(signature = (name, latent_dim, vocab, groups=None, levels=None, seed=0))]
    fn preset(
        name: &str,
        latent_dim: usize,
        vocab: usize,
        groups: Option<usize>,
        levels: Option<Vec<usize>>,
        seed: u64,
    ) -> PyResult<Self> {
        let preset_name: PresetName = name.parse().map_err(pyerr)?;
        let bsq_codewords = if preset_name == PresetName::Bsq {
            let cfg2 = QuantizerConfig::new(2, 1, vocab).map_err(pyerr)?;
            let cb = init_codebook_spherical(&cfg2, seed).map_err(pyerr)?;
            Some(cb.tables()[0].clone())
        } else {
            None
        };
        let p = zoo::preset(preset_name, latent_dim, vocab, groups, levels.as_deref(), bsq_codewords)
            .map_err(pyerr)?;
        let codebook = match (p.codebook, p.config.fixed_codebook, p.config.finite_levels.is_some())
        {
            (Some(cb), _, _) => Some(cb),
            (None, _, true) => None, // finite-level rule quantizes without a table
            (None, false, false) => Some(init_codebook(&p.config, InitKind::SphericalGaussian, seed).map_err(pyerr)?),
            (None, true, false) => None,
        };
        Ok(Self { config: p.config, codebook })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (codebook, config) = persistence::load_codebook(&path).map_err(pyerr)?;
        Ok(Self { config, codebook: Some(codebook) })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        persistence::save_codebook(self.codebook()?, &self.config, &path).map_err(pyerr)
    }

    #[getter]
    fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    #[getter]
    fn groups(&self) -> usize {
        self.config.groups
    }

    #[getter]
    fn group_dim(&self) -> usize {
        self.config.group_dim
    }

    #[getter]
    fn vocab(&self) -> usize {
        self.config.vocab
    }

    #[getter]
    fn shared_codebook(&self) -> bool {
        self.config.shared_codebook
    }

    #[getter]
    fn l2_lookup(&self) -> bool {
        self.config.l2_lookup
    }

    #[getter]
    fn effective_vocab_bits(&self) -> f64 {
        self.config.effective_vocab_bits()
    }

    /// Quantizes flat row-major values (N x latent_dim).
    /// Returns (indices, dequantized, distances).
    fn quantize(&self, values: Vec<f32>) -> PyResult<(Vec<u32>, Vec<f32>, Vec<f32>)> {
        let batch = self.batch(values)?;
        let a = self.assign(&batch)?;
        Ok((
            a.indices().to_vec(),
            a.dequantized().values().to_vec(),
            a.distances().to_vec(),
        ))
    }

    /// Maps flat row-major code indices (N x groups) back to vectors.
    fn dequantize(&self, indices: Vec<u32>) -> PyResult<Vec<f32>> {
        if let Some(levels) = &self.config.finite_levels {
            let rule = FiniteLevelRule::new(levels.clone()).map_err(pyerr)?;
            if indices.len() % self.config.groups != 0 {
                return Err(PyValueError::new_err("index count is not a multiple of groups"));
            }
            let mut out = Vec::with_capacity(indices.len());
            for row in indices.chunks_exact(self.config.groups) {
                for (g, &j) in row.iter().enumerate() {
                    if j as usize >= levels[g] {
                        return Err(PyValueError::new_err(format!(
                            "index {j} out of range for group {g} with {} levels",
                            levels[g]
                        )));
                    }
                    out.push(rule.grid_value(g, j as usize));
                }
            }
            return Ok(out);
        }
        let batch = dequantize(&indices, self.codebook()?, &self.config).map_err(pyerr)?;
        Ok(batch.values().to_vec())
    }

    /// EMA-trains the codebook in place; returns the final report as a dict.
    #[pyo3(signature = (values, steps=1000, batch_size=64, seed=0, decay=gsq::training::DEFAULT_DECAY, init="spherical"))]
    fn train(
        &mut self,
        values: Vec<f32>,
        steps: usize,
        batch_size: usize,
        seed: u64,
        decay: f64,
        init: &str,
    ) -> PyResult<HashMap<String, f64>> {
        let corpus = self.batch(values)?;
        let opts = gsq::training::TrainOptions {
            steps,
            batch_size,
            decay,
            smoothing: gsq::training::DEFAULT_SMOOTHING,
            report_every: steps.max(1),
            init: parse_init(init)?,
        };
        let (codebook, reports) = train(&corpus, &self.config, &opts, seed).map_err(pyerr)?;
        self.codebook = Some(codebook);
        let mut out = HashMap::new();
        if let Some(last) = reports.last() {
            out.insert("steps".to_string(), last.steps as f64);
            out.insert("mean_quantization_error".to_string(), last.mean_quantization_error);
            out.insert("commitment".to_string(), last.commitment);
            out.insert("usage_pct".to_string(), usage_percent(&last.usage));
            out.insert("ppl".to_string(), perplexity(&last.usage));
        }
        Ok(out)
    }

    /// Codebook-health metrics of this quantizer on the given vectors.
    fn evaluate(&self, values: Vec<f32>) -> PyResult<HashMap<String, f64>> {
        let batch = self.batch(values)?;
        let a = self.assign(&batch)?;
        let mut usage = UsageHistogram::for_config(&self.config);
        usage.record(&a, self.config.shared_codebook);
        let mut out = HashMap::new();
        out.insert("usage_pct".to_string(), usage_percent(&usage));
        out.insert("ppl".to_string(), perplexity(&usage));
        out.insert(
            "mse".to_string(),
            gsq::metrics::mse(batch.values(), a.dequantized().values()).map_err(pyerr)?,
        );
        out.insert("commitment".to_string(), commitment_loss(&batch, &a).map_err(pyerr)?);
        Ok(out)
    }
}

/// Projects a vector onto the unit sphere (dim 1: sign with 0 -> -1).
#[pyfunction(name = "l2_normalize")]
fn l2_normalize_py(v: Vec<f32>) -> PyResult<Vec<f32>> {
    l2_normalize(&v).map_err(pyerr)
}

/// Monte-Carlo pairwise squared-distance statistics for Gaussian vectors.
#[pyfunction(name = "distance_stats")]
#[pyo3(signature = (dim, sigma=1.0, normalized=false, samples=1_000_000, seed=0))]
fn distance_stats_py(
    dim: usize,
    sigma: f64,
    normalized: bool,
    samples: u64,
    seed: u64,
) -> PyResult<HashMap<String, f64>> {
    let r = gsq::analysis::distance_stats(dim, sigma, normalized, samples, seed).map_err(pyerr)?;
    Ok(HashMap::from([
        ("sample_mean".to_string(), r.sample_mean),
        ("sample_var".to_string(), r.sample_var),
        ("predicted_mean".to_string(), r.predicted_mean),
        ("predicted_var".to_string(), r.predicted_var),
        ("se_mean".to_string(), r.se_mean()),
        ("se_var".to_string(), r.se_var()),
    ]))
}

/// Fits score = b / log(V)^alpha + c_dim * D^beta to (vocab, latent_dim, score) triples.
#[pyfunction(name = "fit_scaling")]
#[pyo3(signature = (observations, log_base=2.0))]
fn fit_scaling_py(observations: Vec<(u64, usize, f64)>, log_base: f64) -> PyResult<HashMap<String, f64>> {
    let fit = gsq::analysis::fit_scaling(&observations, log_base).map_err(pyerr)?;
    Ok(HashMap::from([
        ("b".to_string(), fit.b),
        ("alpha".to_string(), fit.alpha),
        ("c_dim".to_string(), fit.c_dim),
        ("beta".to_string(), fit.beta),
        ("residual_rms".to_string(), fit.residual_rms),
        ("log_base".to_string(), fit.log_base),
    ]))
}

#[pyfunction(name = "mse")]
fn mse_py(a: Vec<f32>, b: Vec<f32>) -> PyResult<f64> {
    gsq::metrics::mse(&a, &b).map_err(pyerr)
}

#[pyfunction(name = "psnr")]
#[pyo3(signature = (a, b, peak=1.0))]
fn psnr_py(a: Vec<f32>, b: Vec<f32>, peak: f64) -> PyResult<f64> {
    gsq::metrics::psnr(&a, &b, peak).map_err(pyerr)
}

#[pymodule]
fn gsq_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Quantizer>()?;
    m.add_function(wrap_pyfunction!(l2_normalize_py, m)?)?;
    m.add_function(wrap_pyfunction!(distance_stats_py, m)?)?;
    m.add_function(wrap_pyfunction!(fit_scaling_py, m)?)?;
    m.add_function(wrap_pyfunction!(mse_py, m)?)?;
    m.add_function(wrap_pyfunction!(psnr_py, m)?)?;
    Ok(())
}
