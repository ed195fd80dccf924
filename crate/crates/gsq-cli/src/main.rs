//! Operator surface for the grouped spherical quantizer: initialize and train
//! codebooks, encode/decode corpora, evaluate codebook health, sweep
//! configuration grids, and run the distance-statistics and scaling-fit
//! analyses. All outputs are plain CSV or the library's binary formats.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use gsq::codebook::InitKind;
use gsq::persistence::{self};
use gsq::zoo::{self, PresetName};
use gsq::*;

const CSV_SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "gsq", version, about = "Grouped spherical vector quantization toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Initialize a codebook file from a preset or explicit config
    Init(InitArgs),
    /// EMA-train a codebook on a vector corpus
    Train(TrainArgs),
    /// Quantize a corpus to a code-index file
    Encode(EncodeArgs),
    /// Reconstruct vectors from a code-index file
    Decode(DecodeArgs),
    /// Evaluate codebook health and reconstruction metrics on a corpus
    Eval(EvalArgs),
    /// Train+eval every cell of a configuration grid
    Sweep(SweepArgs),
    /// Monte-Carlo statistics of pairwise squared distances
    DistStats(DistStatsArgs),
    /// Fit the score(V, D) scaling law to observations from a CSV
    FitScaling(FitScalingArgs),
}

/// Quantizer configuration shared by most subcommands. Precedence:
/// explicit flags > config-file keys > preset defaults.
#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// Preset: vq, vqgan-vit, lfq, fsq, bsq, gsq
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long)]
    groups: Option<usize>,
    #[arg(long)]
    vocab: Option<usize>,
    /// Comma-separated per-group level counts (fsq)
    #[arg(long)]
    levels: Option<String>,
    #[arg(long)]
    shared: Option<bool>,
    #[arg(long)]
    l2: Option<bool>,
    /// Flat key=value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Default comes from GSQ_SEED, then 0
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone)]
struct Resolved {
    preset: PresetName,
    config: QuantizerConfig,
    /// Fixed code tables mandated by the preset (lfq, bsq, uniform fsq).
    fixed_codebook: Option<Codebook>,
    seed: u64,
}

fn parse_levels(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidConfig(format!("bad level count '{t}'")))
        })
        .collect()
}

fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)?;
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::InvalidConfig(format!("{}:{}: expected key=value", path.display(), lineno + 1))
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn parse_from_map<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    match map.get(key) {
        None => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|_| Error::InvalidConfig(format!("bad value for config key '{key}': {v}"))),
    }
}

impl ConfigArgs {
    fn resolve(&self) -> Result<Resolved> {
        let file = match &self.config {
            Some(p) => read_config_file(p)?,
            None => BTreeMap::new(),
        };
        let preset_name = self
            .preset
            .clone()
            .or_else(|| file.get("preset").cloned())
            .unwrap_or_else(|| "gsq".to_string());
        let preset: PresetName = preset_name.parse()?;

        let latent_dim = self
            .latent_dim
            .or(parse_from_map(&file, "latent_dim")?)
            .unwrap_or(8);
        let groups = self.groups.or(parse_from_map(&file, "groups")?);
        let vocab = self
            .vocab
            .or(parse_from_map(&file, "vocab")?)
            .unwrap_or(match preset {
                PresetName::Lfq => 2,
                _ => 1024,
            });
        let levels = match self.levels.clone().or_else(|| file.get("levels").cloned()) {
            Some(s) => Some(parse_levels(&s)?),
            None => None,
        };
        let seed = self
            .seed
            .or(parse_from_map(&file, "seed")?)
            .or_else(|| std::env::var("GSQ_SEED").ok().and_then(|s| s.parse().ok()))
            .unwrap_or(0);

        let bsq_codewords = if preset == PresetName::Bsq {
            // the preset wants explicit unit 2-vectors; draw them from the
            // seeded spherical init so runs stay reproducible
            let cfg2 = QuantizerConfig::new(2, 1, vocab)?;
            let cb = init_codebook_spherical(&cfg2, seed)?;
            Some(cb.tables()[0].clone())
        } else {
            None
        };
        let zoo::ZooPreset { config, codebook, .. } = zoo::preset(
            preset,
            latent_dim,
            vocab,
            groups,
            levels.as_deref(),
            bsq_codewords,
        )?;

        // explicit flags (or file keys) override preset-derived sharing/l2
        let mut config = config;
        if let Some(s) = self.shared.or(parse_from_map(&file, "shared")?) {
            config.shared_codebook = s;
        }
        if let Some(l2) = self.l2.or(parse_from_map(&file, "l2")?) {
            config.l2_lookup = l2;
        }
        config.validate()?;

        // uniform-level fsq gets a concrete grid codebook so that generic
        // decode works; mixed levels stay library-only
        let fixed_codebook = match (&codebook, &config.finite_levels) {
            (Some(cb), _) => Some(cb.clone()),
            (None, Some(levels)) => {
                if levels.iter().any(|&l| l != levels[0]) {
                    return Err(Error::InvalidConfig(
                        "the CLI supports fsq only with uniform level counts".into(),
                    ));
                }
                let rule = FiniteLevelRule::new(levels.clone())?;
                let tables: Vec<Vec<f32>> = (0..config.groups)
                    .map(|g| (0..levels[g]).map(|k| rule.grid_value(g, k)).collect())
                    .collect();
                Some(Codebook::from_tables(1, levels[0], tables, InitKind::Explicit)?)
            }
            _ => None,
        };

        Ok(Resolved { preset, config, fixed_codebook, seed })
    }
}

#[derive(Args)]
struct InitArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// spherical or uniform
    #[arg(long, default_value = "spherical")]
    init: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct CorpusArgs {
    /// .gsqt tensor files, .ppm images, or directories of .ppm images
    #[arg(long, required = true, num_args = 1..)]
    corpus: Vec<PathBuf>,
    #[arg(long)]
    patch_size: Option<usize>,
    /// Defaults to patch_size (exact tiling)
    #[arg(long)]
    stride: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = gsq::training::DEFAULT_DECAY)]
    decay: f64,
    #[arg(long, default_value_t = 100)]
    report_every: usize,
    /// spherical or uniform
    #[arg(long, default_value = "spherical")]
    init: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report_csv: Option<PathBuf>,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    codebook: PathBuf,
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    codebook: PathBuf,
    /// Code-index file produced by encode
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    codebook: PathBuf,
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    csv: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Comma-separated group counts, e.g. 1,2,4
    #[arg(long, default_value = "1")]
    groups_list: String,
    /// Comma-separated vocabulary sizes
    #[arg(long, default_value = "1024")]
    vocab_list: String,
    /// Comma-separated patch sizes (image corpora only); D = 3 p^2 per patch
    #[arg(long)]
    patch_size_list: Option<String>,
    /// Latent dim per vector when the corpus is a tensor
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = gsq::training::DEFAULT_DECAY)]
    decay: f64,
    #[arg(long)]
    l2: Option<bool>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    csv: PathBuf,
}

#[derive(Args)]
struct DistStatsArgs {
    #[arg(long, required = true, num_args = 1.., value_delimiter = ',')]
    n: Vec<usize>,
    #[arg(long, default_value = "1.0", num_args = 1.., value_delimiter = ',')]
    sigma: Vec<f64>,
    #[arg(long, default_value_t = false)]
    normalized: bool,
    #[arg(long, default_value_t = 1_000_000)]
    samples: u64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    csv: PathBuf,
}

#[derive(Args)]
struct FitScalingArgs {
    /// CSV with columns vocab, latent_dim, score
    #[arg(long)]
    csv_in: PathBuf,
    #[arg(long, default_value_t = 2.0)]
    log_base: f64,
    /// Output key=value fit file
    #[arg(long)]
    out: PathBuf,
}

fn env_seed(explicit: Option<u64>) -> u64 {
    explicit
        .or_else(|| std::env::var("GSQ_SEED").ok().and_then(|s| s.parse().ok()))
        .unwrap_or(0)
}

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{v}")
    }
}

fn parse_init_kind(s: &str) -> Result<InitKind> {
    match s {
        "spherical" => Ok(InitKind::SphericalGaussian),
        "uniform" => Ok(InitKind::UniformInterval),
        other => Err(Error::InvalidConfig(format!(
            "unknown init '{other}' (expected spherical or uniform)"
        ))),
    }
}

/// A loaded corpus plus enough provenance to reassemble images.
struct Corpus {
    batch: VectorBatch,
    /// (path, width, height) per image when the corpus came from ppm files
    images: Vec<(PathBuf, usize, usize)>,
    patch_size: Option<usize>,
    stride: Option<usize>,
}

fn collect_ppm_paths(roots: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for root in roots {
        if root.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(root)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "ppm"))
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(root.clone());
        }
    }
    Ok(files)
}

fn load_corpus(args: &CorpusArgs) -> Result<Corpus> {
    let is_tensor = args.corpus.len() == 1
        && args.corpus[0]
            .extension()
            .is_some_and(|e| e == "gsqt");
    if is_tensor {
        let (dims, data) = persistence::load_tensor(&args.corpus[0])?;
        if dims.len() != 2 {
            return Err(Error::InvalidConfig(format!(
                "corpus tensor must be 2-d (N x dim), got {} dims",
                dims.len()
            )));
        }
        return Ok(Corpus {
            batch: VectorBatch::new(dims[1], data)?,
            images: Vec::new(),
            patch_size: None,
            stride: None,
        });
    }
    let patch_size = args.patch_size.ok_or_else(|| {
        Error::InvalidConfig("--patch-size is required for image corpora".into())
    })?;
    let stride = args.stride.unwrap_or(patch_size);
    let paths = collect_ppm_paths(&args.corpus)?;
    if paths.is_empty() {
        return Err(Error::InsufficientData("no .ppm files in corpus".into()));
    }
    let mut batch = VectorBatch::empty(3 * patch_size * patch_size);
    let mut images = Vec::new();
    for p in &paths {
        let img = persistence::read_ppm(p)?;
        persistence::extract_patches(&img, patch_size, stride, &mut batch)?;
        images.push((p.clone(), img.width, img.height));
    }
    Ok(Corpus {
        batch,
        images,
        patch_size: Some(patch_size),
        stride: Some(stride),
    })
}

/// Reconstructs corpus vectors through the quantizer. Under l2 lookup each
/// reconstructed group is rescaled back to the input group's norm so the
/// result lives in the input space.
fn reconstruct(batch: &VectorBatch, codebook: &Codebook, config: &QuantizerConfig) -> Result<(CodeAssignment, VectorBatch)> {
    let assignment = quantize(batch, codebook, config)?;
    if !config.l2_lookup {
        return Ok((assignment.clone(), assignment.dequantized().clone()));
    }
    let d = config.group_dim;
    let mut values = Vec::with_capacity(batch.count() * batch.dim());
    for (input, deq) in batch.rows().zip(assignment.dequantized().rows()) {
        for (sub_in, sub_q) in input.chunks_exact(d).zip(deq.chunks_exact(d)) {
            let norm = sub_in.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
            for &q in sub_q {
                values.push((q as f64 * norm) as f32);
            }
        }
    }
    let rebuilt = VectorBatch::new(batch.dim(), values)?;
    Ok((assignment, rebuilt))
}

struct EvalRow {
    usage_pct: f64,
    ppl_pooled: f64,
    ppl_per_group_mean: f64,
    mse: f64,
    psnr_db: f64,
    ssim: f64,
    commitment: f64,
    entropy_per_sample: f64,
    entropy_codebook: f64,
    entropy_loss_value: f64,
}

/// Rows used for the entropy terms; the full corpus would make eval
/// quadratic in V for no extra insight.
const ENTROPY_EVAL_ROWS: usize = 2048;

fn evaluate(corpus: &Corpus, codebook: &Codebook, config: &QuantizerConfig, temperature: f64) -> Result<EvalRow> {
    let (assignment, rebuilt) = reconstruct(&corpus.batch, codebook, config)?;
    let mut usage = UsageHistogram::for_config(config);
    usage.record(&assignment, config.shared_codebook);

    let mse_v = gsq::metrics::mse(corpus.batch.values(), rebuilt.values())?;
    let psnr_v = gsq::metrics::psnr(corpus.batch.values(), rebuilt.values(), 1.0)?;
    let commitment = commitment_loss(&corpus.batch, &assignment)?;

    // per-image ssim over the channel-averaged reassembled reconstruction
    let ssim_v = match (corpus.patch_size, corpus.stride) {
        (Some(p), Some(s)) if !corpus.images.is_empty() => {
            let mut acc = 0.0;
            let mut count = 0usize;
            let mut offset = 0usize;
            for (path, w, h) in &corpus.images {
                let cells_y = if *h >= p { (*h - p) / s + 1 } else { 0 };
                let cells_x = if *w >= p { (*w - p) / s + 1 } else { 0 };
                let cells = cells_y * cells_x;
                let rows: Vec<usize> = (offset..offset + cells).collect();
                offset += cells;
                if *h < 11 || *w < 11 {
                    continue;
                }
                let orig = persistence::read_ppm(path)?;
                let rec = persistence::reassemble_patches(&rebuilt.select(&rows), *w, *h, p, s)?;
                let gray = |img: &persistence::RgbImage| -> Vec<f32> {
                    img.pixels
                        .chunks_exact(3)
                        .map(|px| (px[0] as f32 + px[1] as f32 + px[2] as f32) / (3.0 * 255.0))
                        .collect()
                };
                acc += gsq::metrics::ssim(&gray(&orig), &gray(&rec), *h, *w, 1.0)?;
                count += 1;
            }
            if count > 0 { acc / count as f64 } else { f64::NAN }
        }
        _ => f64::NAN,
    };

    let entropy_rows = corpus.batch.count().min(ENTROPY_EVAL_ROWS);
    let subset = corpus.batch.select(&(0..entropy_rows).collect::<Vec<_>>());
    let ent = gsq::objectives::entropy_loss(&subset, codebook, config, temperature)?;

    Ok(EvalRow {
        usage_pct: usage_percent(&usage),
        ppl_pooled: perplexity(&usage),
        ppl_per_group_mean: perplexity_per_group_mean(&usage),
        mse: mse_v,
        psnr_db: psnr_v,
        ssim: ssim_v,
        commitment,
        entropy_per_sample: ent.per_sample_entropy,
        entropy_codebook: ent.codebook_entropy,
        entropy_loss_value: ent.loss,
    })
}

const RUN_CSV_HEADER: &str = "schema_version,run_id,preset,latent_dim,groups,group_dim,vocab,shared,l2,fixed,levels,patch_size,stride,compression_ratio,seed,steps,decay,usage_pct,ppl,ppl_per_group_mean,mse,psnr_db,ssim,commitment,entropy_per_sample,entropy_codebook,entropy_loss,skip_reason";

#[allow(clippy::too_many_arguments)]
fn run_csv_row(
    run_id: &str,
    preset: &str,
    config: &QuantizerConfig,
    patch_size: Option<usize>,
    stride: Option<usize>,
    seed: u64,
    steps: usize,
    decay: f64,
    row: Option<&EvalRow>,
    skip_reason: &str,
) -> String {
    let levels = config
        .finite_levels
        .as_ref()
        .map(|l| l.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";"))
        .unwrap_or_default();
    // patch geometry doubles as the downsample factor: one p x p patch of RGB
    // pixels becomes one latent stack
    let ratio = patch_size
        .map(|p| config.latent_dim as f64 / (3.0 * (p * p) as f64))
        .map(fmt_f64)
        .unwrap_or_default();
    let metrics = match row {
        Some(r) => [
            fmt_f64(r.usage_pct),
            fmt_f64(r.ppl_pooled),
            fmt_f64(r.ppl_per_group_mean),
            fmt_f64(r.mse),
            fmt_f64(r.psnr_db),
            fmt_f64(r.ssim),
            fmt_f64(r.commitment),
            fmt_f64(r.entropy_per_sample),
            fmt_f64(r.entropy_codebook),
            fmt_f64(r.entropy_loss_value),
        ]
        .join(","),
        None => ",,,,,,,,,".to_string(),
    };
    format!(
        "{CSV_SCHEMA_VERSION},{run_id},{preset},{},{},{},{},{},{},{},{levels},{},{},{ratio},{seed},{steps},{},{metrics},{skip_reason}",
        config.latent_dim,
        config.groups,
        config.group_dim,
        config.vocab,
        config.shared_codebook,
        config.l2_lookup,
        config.fixed_codebook,
        patch_size.map(|v| v.to_string()).unwrap_or_default(),
        stride.map(|v| v.to_string()).unwrap_or_default(),
        fmt_f64(decay),
    )
}

fn cmd_init(args: &InitArgs) -> Result<()> {
    let resolved = args.config.resolve()?;
    let codebook = match &resolved.fixed_codebook {
        Some(cb) => cb.clone(),
        None => init_codebook(&resolved.config, parse_init_kind(&args.init)?, resolved.seed)?,
    };
    persistence::save_codebook(&codebook, &resolved.config, &args.out)?;
    // read back to validate the artifact before claiming success
    persistence::load_codebook(&args.out)?;
    eprintln!(
        "wrote {} ({} preset, D={}, G={}, V={}, {:.1} effective bits)",
        args.out.display(),
        resolved.preset,
        resolved.config.latent_dim,
        resolved.config.groups,
        resolved.config.vocab,
        resolved.config.effective_vocab_bits()
    );
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let resolved = args.config.resolve()?;
    if resolved.config.fixed_codebook {
        return Err(Error::FixedCodebook);
    }
    if args.steps == 0 {
        return Err(Error::InvalidConfig("--steps must be at least 1".into()));
    }
    let corpus = load_corpus(&args.corpus)?;
    if corpus.batch.dim() != resolved.config.latent_dim {
        return Err(Error::DimensionMismatch {
            expected: resolved.config.latent_dim,
            actual: corpus.batch.dim(),
        });
    }
    let opts = TrainOptions {
        steps: args.steps,
        batch_size: args.batch_size,
        decay: args.decay,
        smoothing: gsq::training::DEFAULT_SMOOTHING,
        report_every: args.report_every,
        init: parse_init_kind(&args.init)?,
    };
    let start = Instant::now();
    let (codebook, reports) = train(&corpus.batch, &resolved.config, &opts, resolved.seed)?;
    eprintln!("trained {} steps in {:.2}s", args.steps, start.elapsed().as_secs_f64());
    persistence::save_codebook(&codebook, &resolved.config, &args.out)?;
    if let Some(csv) = &args.report_csv {
        let mut out = String::from("schema_version,step,mean_quantization_error,commitment,usage_pct,ppl,ppl_per_group_mean\n");
        for r in &reports {
            out.push_str(&format!(
                "{CSV_SCHEMA_VERSION},{},{},{},{},{},{}\n",
                r.steps,
                fmt_f64(r.mean_quantization_error),
                fmt_f64(r.commitment),
                fmt_f64(usage_percent(&r.usage)),
                fmt_f64(perplexity(&r.usage)),
                fmt_f64(perplexity_per_group_mean(&r.usage)),
            ));
        }
        fs::write(csv, out)?;
    }
    Ok(())
}

/// Quantizes through the generic lookup, or the finite-level rule when the
/// stored config carries one.
fn assign(batch: &VectorBatch, codebook: &Codebook, config: &QuantizerConfig) -> Result<CodeAssignment> {
    match &config.finite_levels {
        Some(levels) => fsq_quantize(batch, &FiniteLevelRule::new(levels.clone())?),
        None => quantize(batch, codebook, config),
    }
}

fn cmd_encode(args: &EncodeArgs) -> Result<()> {
    let (codebook, config) = persistence::load_codebook(&args.codebook)?;
    let corpus = load_corpus(&args.corpus)?;
    let a = assign(&corpus.batch, &codebook, &config)?;
    persistence::save_indices(&args.out, a.indices(), config.groups, config.vocab)?;
    persistence::load_indices(&args.out)?;
    eprintln!("encoded {} vectors x {} groups", a.count(), config.groups);
    Ok(())
}

fn cmd_decode(args: &DecodeArgs) -> Result<()> {
    let (codebook, config) = persistence::load_codebook(&args.codebook)?;
    let (indices, groups, vocab) = persistence::load_indices(&args.input)?;
    if groups != config.groups || vocab != config.vocab {
        return Err(Error::InvalidConfig(format!(
            "index file geometry {groups}x{vocab} does not match codebook {}x{}",
            config.groups, config.vocab
        )));
    }
    let batch = dequantize(&indices, &codebook, &config)?;
    persistence::save_tensor(&args.out, &[batch.count(), batch.dim()], batch.values())?;
    persistence::load_tensor(&args.out)?;
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let (codebook, config) = persistence::load_codebook(&args.codebook)?;
    let corpus = load_corpus(&args.corpus)?;
    let row = evaluate(&corpus, &codebook, &config, args.temperature)?;
    let seed = env_seed(args.seed);
    let mut out = String::from(RUN_CSV_HEADER);
    out.push('\n');
    out.push_str(&run_csv_row(
        "eval",
        "file",
        &config,
        corpus.patch_size,
        corpus.stride,
        seed,
        0,
        0.0,
        Some(&row),
        "",
    ));
    out.push('\n');
    fs::write(&args.csv, out)?;
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let groups_list = parse_levels(&args.groups_list)?;
    let vocab_list = parse_levels(&args.vocab_list)?;
    let seed = env_seed(args.seed);
    let patch_sizes: Vec<Option<usize>> = match &args.patch_size_list {
        Some(s) => parse_levels(s)?.into_iter().map(Some).collect(),
        None => vec![None],
    };

    let mut out = String::from(RUN_CSV_HEADER);
    out.push('\n');
    for &patch in &patch_sizes {
        let corpus = match patch {
            Some(p) => {
                let mut c = args.corpus.clone();
                c.patch_size = Some(p);
                load_corpus(&c)?
            }
            None => load_corpus(&args.corpus)?,
        };
        let latent_dim = corpus.batch.dim();
        for &g in &groups_list {
            for &v in &vocab_list {
                let run_id = match patch {
                    Some(p) => format!("p{p}-g{g}-v{v}"),
                    None => format!("g{g}-v{v}"),
                };
                if latent_dim % g != 0 {
                    let cfg = QuantizerConfig {
                        latent_dim,
                        groups: g,
                        group_dim: 0,
                        vocab: v,
                        shared_codebook: false,
                        l2_lookup: false,
                        finite_levels: None,
                        fixed_codebook: false,
                    };
                    out.push_str(&run_csv_row(
                        &run_id, "gsq", &cfg, patch, corpus.stride, seed, args.steps, args.decay,
                        None, "groups-do-not-divide-dim",
                    ));
                    out.push('\n');
                    continue;
                }
                let mut config = QuantizerConfig::new(latent_dim, g, v)?;
                if let Some(l2) = args.l2 {
                    config = config.with_l2(l2);
                }
                let opts = TrainOptions {
                    steps: args.steps,
                    batch_size: args.batch_size,
                    decay: args.decay,
                    smoothing: gsq::training::DEFAULT_SMOOTHING,
                    report_every: args.steps,
                    init: InitKind::SphericalGaussian,
                };
                let start = Instant::now();
                let (codebook, _) = train(&corpus.batch, &config, &opts, seed)?;
                let row = evaluate(&corpus, &codebook, &config, 1.0)?;
                eprintln!("cell {run_id}: {:.2}s", start.elapsed().as_secs_f64());
                out.push_str(&run_csv_row(
                    &run_id, "gsq", &config, patch, corpus.stride, seed, args.steps, args.decay,
                    Some(&row), "",
                ));
                out.push('\n');
            }
        }
    }
    fs::write(&args.csv, out)?;
    Ok(())
}

fn cmd_dist_stats(args: &DistStatsArgs) -> Result<()> {
    let seed = env_seed(args.seed);
    let mut out = String::from(
        "schema_version,n,sigma,normalized,samples,seed,sample_mean,sample_var,se_mean,se_var,predicted_mean,predicted_var\n",
    );
    for &n in &args.n {
        for &sigma in &args.sigma {
            let r = gsq::analysis::distance_stats(n, sigma, args.normalized, args.samples, seed)?;
            out.push_str(&format!(
                "{CSV_SCHEMA_VERSION},{n},{},{},{},{seed},{},{},{},{},{},{}\n",
                fmt_f64(sigma),
                args.normalized,
                args.samples,
                fmt_f64(r.sample_mean),
                fmt_f64(r.sample_var),
                fmt_f64(r.se_mean()),
                fmt_f64(r.se_var()),
                fmt_f64(r.predicted_mean),
                fmt_f64(r.predicted_var),
            ));
        }
    }
    fs::write(&args.csv, out)?;
    Ok(())
}

fn cmd_fit_scaling(args: &FitScalingArgs) -> Result<()> {
    let text = fs::read_to_string(&args.csv_in)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::InsufficientData("empty csv".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let find = |names: &[&str]| -> Result<usize> {
        cols.iter()
            .position(|c| names.contains(c))
            .ok_or_else(|| Error::InvalidConfig(format!("csv is missing a {} column", names[0])))
    };
    let vi = find(&["vocab", "V", "v"])?;
    let di = find(&["latent_dim", "D", "d"])?;
    let si = find(&["score", "rfid", "mse"])?;
    let mut obs = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let parse_err = |what: &str| Error::InvalidConfig(format!("bad {what} in row: {line}"));
        obs.push((
            f.get(vi).and_then(|s| s.trim().parse().ok()).ok_or_else(|| parse_err("vocab"))?,
            f.get(di).and_then(|s| s.trim().parse().ok()).ok_or_else(|| parse_err("latent_dim"))?,
            f.get(si).and_then(|s| s.trim().parse().ok()).ok_or_else(|| parse_err("score"))?,
        ));
    }
    let fit = gsq::analysis::fit_scaling(&obs, args.log_base)?;
    let mut f = fs::File::create(&args.out)?;
    writeln!(f, "b={}", fmt_f64(fit.b))?;
    writeln!(f, "alpha={}", fmt_f64(fit.alpha))?;
    writeln!(f, "c_dim={}", fmt_f64(fit.c_dim))?;
    writeln!(f, "beta={}", fmt_f64(fit.beta))?;
    writeln!(f, "residual_rms={}", fmt_f64(fit.residual_rms))?;
    writeln!(f, "log_base={}", fmt_f64(fit.log_base))?;
    eprintln!(
        "fit: b={} alpha={} c_dim={} beta={} residual_rms={}",
        fit.b, fit.alpha, fit.c_dim, fit.beta, fit.residual_rms
    );
    Ok(())
}

fn run() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Init(a) => cmd_init(&a),
        Cmd::Train(a) => cmd_train(&a),
        Cmd::Encode(a) => cmd_encode(&a),
        Cmd::Decode(a) => cmd_decode(&a),
        Cmd::Eval(a) => cmd_eval(&a),
        Cmd::Sweep(a) => cmd_sweep(&a),
        Cmd::DistStats(a) => cmd_dist_stats(&a),
        Cmd::FitScaling(a) => cmd_fit_scaling(&a),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
