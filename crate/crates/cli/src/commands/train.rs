//! `postdae train` — fit the autoencoder on clean masks.
//!
//! Emits `model_final.ckpt`, optional interval checkpoints, `history.csv`
//! (epoch, mean_loss) and `train_manifest.json` with the resolved configs
//! and dataset checksums.

use std::io::Write;
use std::path::PathBuf;

use clap::Parser;
use postdae_core::dae::{self, DaeConfig, DaeError, TrainConfig};
use postdae_core::raster::load_mask;

use crate::manifest::ManifestBuilder;
use crate::util::{create_out_dir, indexed_files, IndexRange};
use crate::{CmdError, GlobalOpts};

#[derive(Parser)]
pub struct Args {
    /// Directory with training masks.
    #[arg(long)]
    dataset: PathBuf,

    /// Filename prefix selecting training masks.
    #[arg(long, default_value = "gt_")]
    prefix: String,

    /// Restrict to mask indices in `A..B`.
    #[arg(long)]
    range: Option<String>,

    #[arg(long)]
    out: PathBuf,

    /// Model config JSON (defaults derived from the dataset).
    #[arg(long)]
    dae_config: Option<PathBuf>,

    /// Training config JSON (defaults: 150 epochs, batch 8, lr 1e-4).
    #[arg(long)]
    train_config: Option<PathBuf>,

    #[arg(long)]
    epochs: Option<usize>,

    #[arg(long)]
    batch: Option<usize>,

    #[arg(long)]
    lr: Option<f64>,

    #[arg(long)]
    latent: Option<usize>,

    #[arg(long)]
    checkpoint_interval: Option<usize>,

    /// Print per-epoch losses while training.
    #[arg(long, default_value_t = false)]
    quiet: bool,
}

pub fn run(args: Args, globals: &GlobalOpts) -> Result<(), CmdError> {
    let mut manifest = ManifestBuilder::new("train", globals.seed);

    let range = args.range.as_deref().map(IndexRange::parse).transpose()?;
    let files: Vec<(u64, PathBuf)> = indexed_files(&args.dataset, "pgm", Some(&args.prefix))?
        .into_iter()
        .filter(|(idx, _)| range.map_or(true, |r| r.contains(*idx)))
        .collect();
    if files.is_empty() {
        return Err(CmdError::Validation(format!(
            "no `{}*.pgm` masks found in {}",
            args.prefix,
            args.dataset.display()
        )));
    }
    let mut masks = Vec::with_capacity(files.len());
    for (_, path) in &files {
        manifest.input(path)?;
        masks.push(load_mask(path).map_err(CmdError::validation)?);
    }

    let mut dae_cfg = match &args.dae_config {
        Some(path) => {
            manifest.input(path)?;
            let text = std::fs::read_to_string(path)
                .map_err(|e| CmdError::Validation(format!("cannot read config: {e}")))?;
            serde_json::from_str::<DaeConfig>(&text)
                .map_err(|e| CmdError::Validation(format!("bad model config: {e}")))?
        }
        None => DaeConfig::sized_default(masks[0].width(), masks[0].num_classes()),
    };
    if let Some(latent) = args.latent {
        dae_cfg.latent_dim = latent;
    }

    let mut train_cfg = match &args.train_config {
        Some(path) => {
            manifest.input(path)?;
            let text = std::fs::read_to_string(path)
                .map_err(|e| CmdError::Validation(format!("cannot read config: {e}")))?;
            serde_json::from_str::<TrainConfig>(&text)
                .map_err(|e| CmdError::Validation(format!("bad training config: {e}")))?
        }
        None => TrainConfig::desk_default(7),
    };
    if let Some(epochs) = args.epochs {
        train_cfg.epochs = epochs;
    }
    if let Some(batch) = args.batch {
        train_cfg.batch_size = batch;
    }
    if let Some(lr) = args.lr {
        train_cfg.learning_rate = lr;
    }
    if let Some(interval) = args.checkpoint_interval {
        train_cfg.checkpoint_interval = interval;
    }
    if let Some(seed) = globals.seed {
        train_cfg.seed = seed;
        train_cfg.degradation.seed = seed;
    }
    manifest.config(serde_json::json!({
        "dae": &dae_cfg,
        "train": &train_cfg,
    }))?;

    create_out_dir(&args.out)?;
    let quiet = args.quiet;
    let (model, history) = dae::train(&masks, &dae_cfg, &train_cfg, Some(&args.out), |e, l| {
        if !quiet {
            println!("epoch {e:4}  loss {l:.6}");
        }
    })
    .map_err(|e| match &e {
        DaeError::Train { .. } => CmdError::Numerical(e.to_string()),
        _ => CmdError::Validation(e.to_string()),
    })?;

    let final_path = args.out.join("model_final.ckpt");
    model.save(&final_path).map_err(CmdError::validation)?;
    manifest.output(&final_path)?;
    for (_, path) in indexed_files(&args.out, "ckpt", Some("model_epoch_"))? {
        manifest.output(&path)?;
    }

    let history_path = args.out.join("history.csv");
    let mut file = std::fs::File::create(&history_path)
        .map_err(|e| CmdError::Validation(format!("cannot write history: {e}")))?;
    writeln!(file, "epoch,mean_loss").map_err(CmdError::validation)?;
    for (epoch, loss) in history.iter().enumerate() {
        writeln!(file, "{epoch},{loss}").map_err(CmdError::validation)?;
    }
    drop(file);
    manifest.output(&history_path)?;

    let manifest_dir = globals.manifest_dir.as_deref().unwrap_or(&args.out);
    manifest.write(manifest_dir, "train_manifest.json")?;
    println!(
        "trained on {} masks for {} epochs; final loss {:.6}",
        masks.len(),
        history.len(),
        history.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}
