//! Grouped spherical vector quantization.
//!
//! A `D`-dimensional vector is decomposed into `G` contiguous groups of
//! `d = D/G` channels, each assigned to its nearest codeword out of `V`,
//! optionally after l2 normalization of both query and codeword. The crate
//! covers codebook initialization and EMA training, the classic quantizer
//! family expressed as configurations of this one scheme, auxiliary and
//! adversarial loss functions, codebook-health metrics, distance statistics
//! in high dimension, scaling-law fitting, and bit-exact serialization.

pub mod analysis;
pub mod batch;
pub mod codebook;
pub mod config;
pub mod error;
pub mod metrics;
pub mod objectives;
pub mod persistence;
pub mod quantizer;
pub mod training;
pub mod zoo;

pub use batch::VectorBatch;
pub use codebook::{init_codebook, init_codebook_spherical, init_codebook_uniform, Codebook, InitKind};
pub use config::{CompressionGeometry, QuantizerConfig};
pub use error::{Error, Result};
pub use metrics::{perplexity, perplexity_per_group_mean, usage_percent, UsageHistogram};
pub use quantizer::{dequantize, effective_vocab_bits, l2_normalize, quantize, CodeAssignment};
pub use training::{commitment_loss, ema_step, train, EmaState, TrainOptions, TrainReport};
pub use zoo::{fsq_quantize, preset, FiniteLevelRule, PresetName, ZooPreset};
