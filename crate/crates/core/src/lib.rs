//! Shape-prior post-processing for segmentation masks.
//!
//! A denoising autoencoder is trained on corrupted copies of ground-truth
//! label masks and then used as a post-processing step: an arbitrary
//! (possibly broken) mask is pushed through the encoder/decoder and comes
//! back as the nearest plausible shape the model knows how to draw. The
//! crate also ships a dense mean-field CRF baseline, a procedural scene
//! generator with a deliberately weak intensity classifier, mask
//! degradation pipelines, and Dice/Hausdorff evaluation with significance
//! testing.
//!
//! Module map:
//! - [`raster`] — label masks, gray images, soft masks, PGM I/O
//! - [`synth`] — procedural scenes and the weak Gaussian classifier
//! - [`degrade`] — mask corruption pipelines and severity presets
//! - [`autodiff`] — dense tensors, reverse-mode layers, Adam, checkpoints
//! - [`dae`] — the autoencoder model, training loop, post-processing
//! - [`crf`] — exact dense mean-field inference
//! - [`metrics`] — Dice, Hausdorff, aggregation, Wilcoxon tests
//! - [`oracle`] — independent reference implementations used by tests

pub mod autodiff;
pub mod crf;
pub mod dae;
pub mod degrade;
pub mod metrics;
pub mod oracle;
pub mod raster;
pub mod rng;
pub mod synth;

pub use autodiff::{AdamState, LayerSpec, Tensor};
pub use crf::CrfParams;
pub use dae::{DaeConfig, DaeModel, TrainConfig};
pub use degrade::{DegradationConfig, Severity};
pub use metrics::{ComparisonReport, MetricsRecord};
pub use raster::{GrayImage, LabelMask, SoftMask};
pub use synth::{SceneConfig, WeakClassifierParams};
