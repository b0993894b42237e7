//! The denoising autoencoder: architecture, training, post-processing.
//!
//! The encoder stacks stride-2 conv stages down to a tiny spatial grid,
//! flattens into a latent code through a dense bottleneck, and the decoder
//! mirrors it with up-convolutions back to full resolution. Binary models
//! consume and emit a single foreground plane through a sigmoid head;
//! multi-class models use full one-hot planes and a channel softmax.
//!
//! Training corrupts each batch sample with a fresh degradation stream and
//! regresses the soft-Dice loss against the clean (identically resized)
//! target. Post-processing pushes an arbitrary mask through the trained
//! encoder/decoder and discretizes the reconstruction; masks the model
//! considers plausible come back nearly unchanged, which is what the
//! reconstruction-error plausibility score measures.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{checkpoint, ops, AdamState, AutodiffError, Layer, LayerSpec, Tensor};
use crate::degrade::{degrade_paired, DegradationConfig};
use crate::metrics::foreground_mean_dice;
use crate::raster::{LabelMask, RasterError, SoftMask};
use crate::rng::{stream_rng, DOMAIN_INIT, DOMAIN_SHUFFLE};

use rand::seq::SliceRandom;

const DICE_EPSILON: f64 = 1.0;

#[derive(Debug, Error)]
pub enum DaeError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("training failed at epoch {epoch}, step {step}: {message}")]
    Train { epoch: usize, step: usize, message: String },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DaeError>;

/// Output head; also fixes the input encoding (single foreground plane for
/// sigmoid, full one-hot for softmax).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Sigmoid,
    Softmax,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DaeConfig {
    /// Square input size; a power of two.
    pub input_size: usize,
    pub num_classes: u8,
    /// Channel width per stride-2 encoder stage.
    pub encoder_widths: Vec<usize>,
    pub latent_dim: usize,
    /// Up-convolution width per decoder stage; one stage per encoder stage.
    pub decoder_widths: Vec<usize>,
    pub head: Head,
}

impl DaeConfig {
    /// Desk-scale defaults: 64x64 input, five halving stages down to 2x2.
    pub fn desk_default(num_classes: u8) -> Self {
        Self::sized_default(64, num_classes)
    }

    /// Defaults for other power-of-two input sizes: as many halving stages
    /// as fit while keeping a bottleneck of at least 2x2, widths truncated
    /// from the 64x64 reference stack.
    pub fn sized_default(input_size: usize, num_classes: u8) -> Self {
        let reference = [16usize, 32, 32, 32, 32];
        let max_stages = input_size.max(4).trailing_zeros().saturating_sub(1) as usize;
        let stages = max_stages.min(reference.len()).max(1);
        Self {
            input_size,
            num_classes,
            encoder_widths: reference[..stages].to_vec(),
            latent_dim: if num_classes > 2 { 128 } else { 64 },
            decoder_widths: vec![16; stages],
            head: if num_classes > 2 { Head::Softmax } else { Head::Sigmoid },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.input_size.is_power_of_two() || self.input_size < 8 {
            return Err(DaeError::Config(format!(
                "input size must be a power of two >= 8, got {}",
                self.input_size
            )));
        }
        if self.num_classes < 2 {
            return Err(DaeError::Config("need at least 2 classes".into()));
        }
        match self.head {
            Head::Sigmoid if self.num_classes != 2 => {
                return Err(DaeError::Config("sigmoid head requires exactly 2 classes".into()))
            }
            Head::Softmax if self.num_classes < 2 => unreachable!(),
            _ => {}
        }
        let stages = self.encoder_widths.len();
        if stages == 0 || self.decoder_widths.len() != stages {
            return Err(DaeError::Config(format!(
                "encoder has {stages} stages but decoder has {}",
                self.decoder_widths.len()
            )));
        }
        let bottleneck = self.input_size >> stages;
        if bottleneck < 2 {
            return Err(DaeError::Config(format!(
                "{stages} halving stages reduce {} below 2x2",
                self.input_size
            )));
        }
        if self.latent_dim == 0 {
            return Err(DaeError::Config("latent dim must be positive".into()));
        }
        Ok(())
    }

    fn bottleneck_size(&self) -> usize {
        self.input_size >> self.encoder_widths.len()
    }

    /// Channels fed into / out of the network per the head convention.
    fn io_channels(&self) -> usize {
        match self.head {
            Head::Sigmoid => 1,
            Head::Softmax => self.num_classes as usize,
        }
    }
}

/// Training regime. Degradation corruption is resampled fresh for every
/// sample in every epoch.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Epoch interval for checkpoint files; 0 disables interval checkpoints.
    pub checkpoint_interval: usize,
    pub degradation: DegradationConfig,
}

impl TrainConfig {
    pub fn desk_default(seed: u64) -> Self {
        Self {
            epochs: 150,
            batch_size: 8,
            learning_rate: 1e-4,
            seed,
            checkpoint_interval: 0,
            degradation: DegradationConfig::training_default(seed),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(DaeError::Config("epochs and batch size must be >= 1".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(DaeError::Config("learning rate must be positive".into()));
        }
        self.degradation
            .validate()
            .map_err(|e| DaeError::Config(e.to_string()))?;
        Ok(())
    }
}

impl DegradationConfig {
    /// Corruption mix used for training: strong shape events (spurious and
    /// missing blobs are unambiguous to undo) but mild boundary noise.
    /// Heavy boundary corruption makes the true contour unrecoverable and
    /// the trained decoder hedges it, which costs the fixed-point fidelity
    /// on clean inputs.
    pub fn training_default(seed: u64) -> Self {
        use crate::degrade::ShapeKind;
        DegradationConfig {
            shape_count: (0, 5),
            shape_kinds: vec![ShapeKind::Polygon, ShapeKind::Ellipse, ShapeKind::Line],
            add_probability: 0.5,
            shape_size: (0.05, 0.26),
            morph_probability: 0.3,
            morph_radius: (1, 2),
            boundary_band: 1,
            boundary_flip_probability: 0.05,
            resize_scale: (0.9, 1.1),
            seed,
        }
    }
}

pub struct DaeModel {
    config: DaeConfig,
    layers: Vec<Layer>,
    /// Layers `0..latent_end` form the encoder (inclusive of the latent
    /// dense layer).
    latent_end: usize,
}

impl DaeModel {
    /// Builds the network with He-uniform weights; deterministic in
    /// `(config, seed)`.
    pub fn build(config: &DaeConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut layers = Vec::new();
        let mut param_layer = 0u64;
        let rng = |idx: &mut u64| {
            let r = stream_rng(seed, DOMAIN_INIT, *idx);
            *idx += 1;
            r
        };

        // Encoder: stride-2 stages; every stage except the last also gets a
        // stride-1 refinement conv.
        let mut channels = config.io_channels();
        let stages = config.encoder_widths.len();
        for (i, &width) in config.encoder_widths.iter().enumerate() {
            layers.push(Layer::conv(channels, width, 2, &mut rng(&mut param_layer)));
            layers.push(Layer::Relu { cache: None });
            if i + 1 < stages {
                layers.push(Layer::conv(width, width, 1, &mut rng(&mut param_layer)));
                layers.push(Layer::Relu { cache: None });
            }
            channels = width;
        }

        let b = config.bottleneck_size();
        let flat = channels * b * b;
        layers.push(Layer::Flatten { cache: None });
        layers.push(Layer::dense(flat, config.latent_dim, &mut rng(&mut param_layer)));
        let latent_end = layers.len();

        // Decoder: expand back to the bottleneck grid, then mirror the
        // encoder with up-convolutions.
        layers.push(Layer::dense(config.latent_dim, flat, &mut rng(&mut param_layer)));
        layers.push(Layer::Relu { cache: None });
        layers.push(Layer::Unflatten { channels, height: b, width: b });
        let mut dec_in = channels;
        for (i, &width) in config.decoder_widths.iter().enumerate() {
            let last = i + 1 == config.decoder_widths.len();
            layers.push(Layer::upconv(dec_in, width, &mut rng(&mut param_layer)));
            layers.push(Layer::Relu { cache: None });
            let conv_out = if last { config.io_channels() } else { width };
            layers.push(Layer::conv(width, conv_out, 1, &mut rng(&mut param_layer)));
            if last {
                layers.push(match config.head {
                    Head::Sigmoid => Layer::Sigmoid { cache: None },
                    Head::Softmax => Layer::SoftmaxChannels { cache: None },
                });
            } else {
                layers.push(Layer::Relu { cache: None });
            }
            dec_in = width;
        }

        Ok(Self { config: config.clone(), layers, latent_end })
    }

    pub fn config(&self) -> &DaeConfig {
        &self.config
    }

    pub fn num_parameters(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.parameters())
            .map(|p| p.numel())
            .sum()
    }

    fn check_mask(&self, mask: &LabelMask) -> Result<()> {
        if mask.width() != self.config.input_size || mask.height() != self.config.input_size {
            return Err(DaeError::Contract(format!(
                "mask is {}x{}, model expects {}x{}",
                mask.width(),
                mask.height(),
                self.config.input_size,
                self.config.input_size
            )));
        }
        if mask.num_classes() != self.config.num_classes {
            return Err(DaeError::Contract(format!(
                "mask has {} classes, model expects {}",
                mask.num_classes(),
                self.config.num_classes
            )));
        }
        Ok(())
    }

    /// Stacks masks into the network input tensor (single foreground plane
    /// for the sigmoid head, full one-hot planes for softmax).
    pub fn masks_to_batch(&self, masks: &[&LabelMask]) -> Result<Tensor> {
        let s = self.config.input_size;
        let c = self.config.io_channels();
        let mut data = vec![0.0; masks.len() * c * s * s];
        for (n, mask) in masks.iter().enumerate() {
            self.check_mask(mask)?;
            let base = n * c * s * s;
            match self.config.head {
                Head::Sigmoid => {
                    for (p, &l) in mask.labels().iter().enumerate() {
                        data[base + p] = f64::from(l == 1);
                    }
                }
                Head::Softmax => {
                    for (p, &l) in mask.labels().iter().enumerate() {
                        data[base + (l as usize) * s * s + p] = 1.0;
                    }
                }
            }
        }
        Ok(Tensor::from_vec(&[masks.len(), c, s, s], data)?)
    }

    /// Network output for one batch element as a probability raster.
    pub fn output_to_soft(&self, output: &Tensor, batch_index: usize) -> Result<SoftMask> {
        let s = self.config.input_size;
        let c_out = output.shape()[1];
        let hw = s * s;
        match self.config.head {
            Head::Sigmoid => {
                let base = batch_index * c_out * hw;
                let plane = &output.data()[base..base + hw];
                let mut probs = vec![0.0; hw * 2];
                for (p, &v) in plane.iter().enumerate() {
                    probs[p * 2] = 1.0 - v;
                    probs[p * 2 + 1] = v;
                }
                Ok(SoftMask::new(s, s, 2, probs)?)
            }
            Head::Softmax => {
                let c = self.config.num_classes as usize;
                let base = batch_index * c * hw;
                let mut probs = vec![0.0; hw * c];
                for k in 0..c {
                    for p in 0..hw {
                        probs[p * c + k] = output.data()[base + k * hw + p];
                    }
                }
                Ok(SoftMask::new(s, s, self.config.num_classes, probs)?)
            }
        }
    }

    /// Cache-free forward pass of the whole network.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let mut x = input.clone();
        for layer in &self.layers {
            x = layer.infer(x)?;
        }
        Ok(x)
    }

    /// Latent code of an input batch: the encoder prefix only.
    pub fn encode(&self, input: &Tensor) -> Result<Tensor> {
        let mut x = input.clone();
        for layer in &self.layers[..self.latent_end] {
            x = layer.infer(x)?;
        }
        Ok(x)
    }

    fn forward_train(&mut self, input: Tensor) -> Result<Tensor> {
        let mut x = input;
        for layer in &mut self.layers {
            x = layer.forward(x)?;
        }
        Ok(x)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<()> {
        let mut g = grad.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(())
    }

    fn zero_grads(&mut self) {
        for layer in &mut self.layers {
            for p in layer.parameters_mut() {
                p.zero_grad();
            }
        }
    }

    /// Projects a mask through the autoencoder and discretizes the
    /// reconstruction (threshold 0.5 for sigmoid, argmax for softmax).
    pub fn postprocess(&self, mask: &LabelMask) -> Result<LabelMask> {
        self.check_mask(mask)?;
        let input = self.masks_to_batch(&[mask])?;
        let output = self.forward(&input)?;
        let soft = self.output_to_soft(&output, 0)?;
        Ok(match self.config.head {
            Head::Sigmoid => soft.binarize(0.5)?,
            Head::Softmax => soft.argmax_labels(),
        })
    }

    /// Post-processing for probabilistic inputs: the soft mask is
    /// discretized first, since the model operates on hard label masks.
    pub fn postprocess_soft(&self, soft: &SoftMask) -> Result<LabelMask> {
        self.postprocess(&soft.argmax_labels())
    }

    /// Reconstruction discrepancy `1 - Dice(mask, postprocess(mask))`,
    /// averaged over foreground classes. 0 means the mask is a fixed point
    /// of the projection.
    pub fn plausibility_score(&self, mask: &LabelMask) -> Result<f64> {
        let reconstructed = self.postprocess(mask)?;
        let dice = foreground_mean_dice(mask, &reconstructed)
            .map_err(|e| DaeError::Contract(e.to_string()))?;
        Ok(1.0 - dice)
    }

    // -- checkpointing ------------------------------------------------------

    fn spec_table(&self) -> Vec<LayerSpec> {
        self.layers.iter().filter_map(|l| l.spec()).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let metadata = serde_json::to_vec(&self.config)
            .map_err(|e| DaeError::Config(format!("cannot serialize config: {e}")))?;
        let tensors: Vec<Tensor> = self
            .layers
            .iter()
            .flat_map(|l| l.parameters())
            .cloned()
            .collect();
        let ckpt = checkpoint::Checkpoint { metadata, specs: self.spec_table(), tensors };
        let mut writer = BufWriter::new(File::create(path.as_ref())?);
        checkpoint::write(&ckpt, &mut writer)?;
        use std::io::Write;
        writer.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = BufReader::new(File::open(path.as_ref())?);
        let ckpt = checkpoint::read(&mut reader)?;
        let config: DaeConfig = serde_json::from_slice(&ckpt.metadata)
            .map_err(|e| DaeError::Config(format!("bad checkpoint metadata: {e}")))?;
        let mut model = DaeModel::build(&config, 0)?;
        if model.spec_table() != ckpt.specs {
            return Err(DaeError::Config(
                "checkpoint layer table does not match its config".into(),
            ));
        }
        let mut tensors = ckpt.tensors.into_iter();
        for layer in &mut model.layers {
            for param in layer.parameters_mut() {
                let stored = tensors.next().ok_or_else(|| {
                    DaeError::Config("checkpoint is missing parameter tensors".into())
                })?;
                if stored.shape() != param.shape() {
                    return Err(DaeError::Config(format!(
                        "parameter shape {:?} does not match checkpoint {:?}",
                        param.shape(),
                        stored.shape()
                    )));
                }
                *param = stored.with_grad();
            }
        }
        if tensors.next().is_some() {
            return Err(DaeError::Config("checkpoint has extra parameter tensors".into()));
        }
        Ok(model)
    }
}

/// Trains a model from scratch on clean masks. Returns the model and the
/// mean training loss per epoch (`history.len() == epochs`). Interval
/// checkpoints are written into `checkpoint_dir` as
/// `model_epoch_NNNN.ckpt` when an interval is configured.
pub fn train(
    masks: &[LabelMask],
    dae_cfg: &DaeConfig,
    train_cfg: &TrainConfig,
    checkpoint_dir: Option<&Path>,
    mut epoch_hook: impl FnMut(usize, f64),
) -> Result<(DaeModel, Vec<f64>)> {
    dae_cfg.validate()?;
    train_cfg.validate()?;
    if masks.is_empty() {
        return Err(DaeError::Contract("empty training set".into()));
    }
    for m in masks {
        if m.width() != dae_cfg.input_size
            || m.height() != dae_cfg.input_size
            || m.num_classes() != dae_cfg.num_classes
        {
            return Err(DaeError::Contract(
                "all training masks must match the model input size and class count".into(),
            ));
        }
    }

    let mut model = DaeModel::build(dae_cfg, train_cfg.seed)?;
    let param_sizes: Vec<usize> = model
        .layers
        .iter()
        .flat_map(|l| l.parameters())
        .map(|p| p.numel())
        .collect();
    let mut adam = AdamState::new(train_cfg.learning_rate, &param_sizes);

    let n = masks.len();
    let mut history = Vec::with_capacity(train_cfg.epochs);
    for epoch in 0..train_cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut stream_rng(train_cfg.seed, DOMAIN_SHUFFLE, epoch as u64));

        let mut loss_sum = 0.0;
        for (step, batch) in order.chunks(train_cfg.batch_size).enumerate() {
            // Fresh corruption stream per (epoch, sample).
            let pairs: Vec<(LabelMask, LabelMask)> = batch
                .iter()
                .map(|&idx| {
                    degrade_paired(
                        &masks[idx],
                        &train_cfg.degradation,
                        (epoch * n + idx) as u64,
                    )
                })
                .collect();
            let corrupt_refs: Vec<&LabelMask> = pairs.iter().map(|(c, _)| c).collect();
            let target_refs: Vec<&LabelMask> = pairs.iter().map(|(_, t)| t).collect();
            let input = model.masks_to_batch(&corrupt_refs)?;
            let target = model.masks_to_batch(&target_refs)?;

            model.zero_grads();
            let pred = model.forward_train(input)?;
            let loss = ops::soft_dice_loss(&pred, &target, DICE_EPSILON)?.item();
            if !loss.is_finite() {
                return Err(DaeError::Train {
                    epoch,
                    step,
                    message: format!("non-finite loss {loss}"),
                });
            }
            let grad = ops::soft_dice_loss_backward(&pred, &target, DICE_EPSILON)?;
            model.backward(&grad)?;

            let mut params: Vec<&mut Tensor> = model
                .layers
                .iter_mut()
                .flat_map(|l| l.parameters_mut())
                .collect();
            adam.step(&mut params).map_err(|e| DaeError::Train {
                epoch,
                step,
                message: e.to_string(),
            })?;

            loss_sum += loss * batch.len() as f64;
        }
        let epoch_loss = loss_sum / n as f64;
        history.push(epoch_loss);
        epoch_hook(epoch, epoch_loss);

        if train_cfg.checkpoint_interval > 0
            && (epoch + 1) % train_cfg.checkpoint_interval == 0
        {
            if let Some(dir) = checkpoint_dir {
                model.save(dir.join(format!("model_epoch_{:04}.ckpt", epoch + 1)))?;
            }
        }
    }
    Ok((model, history))
}
