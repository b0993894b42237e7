//! `postdae segment` — fit the weak classifier, emit masks and unaries.
//!
//! Discrete predictions land as `seg_NNNN.pgm` in the output directory;
//! the soft posteriors go to `unaries/unary_NNNN.json` (plus per-class
//! 16-bit planes) for the CRF baseline.

use std::path::PathBuf;

use clap::Parser;
use postdae_core::raster::{load_image, load_mask, save_mask, save_soft_mask};
use postdae_core::synth::{fit_weak_classifier, weak_segment};

use crate::manifest::ManifestBuilder;
use crate::util::{create_out_dir, indexed_files, parallel_map, IndexRange};
use crate::{CmdError, GlobalOpts};

#[derive(Parser)]
pub struct Args {
    /// Directory with `img_NNNN.pgm` / `gt_NNNN.pgm` pairs.
    #[arg(long)]
    dataset: PathBuf,

    /// Index range `A..B` used to fit the classifier.
    #[arg(long)]
    fit: String,

    /// Index range `A..B` to segment.
    #[arg(long)]
    apply: String,

    /// Posterior-to-uniform mixing knob in [0,1].
    #[arg(long, default_value_t = 0.0)]
    quality: f64,

    /// Box-smoothing radius for the posterior planes.
    #[arg(long, default_value_t = 1)]
    radius: usize,

    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: Args, globals: &GlobalOpts) -> Result<(), CmdError> {
    let mut manifest = ManifestBuilder::new("segment", globals.seed);
    let fit_range = IndexRange::parse(&args.fit)?;
    let apply_range = IndexRange::parse(&args.apply)?;

    let images = indexed_files(&args.dataset, "pgm", Some("img_"))?;
    let masks = indexed_files(&args.dataset, "pgm", Some("gt_"))?;
    let image_by_idx: std::collections::BTreeMap<u64, PathBuf> = images.into_iter().collect();
    let mask_by_idx: std::collections::BTreeMap<u64, PathBuf> = masks.into_iter().collect();

    let mut fit_images = Vec::new();
    let mut fit_masks = Vec::new();
    for idx in fit_range.iter() {
        let img_path = image_by_idx.get(&idx).ok_or_else(|| {
            CmdError::Validation(format!("missing img_{idx:04}.pgm in the fit range"))
        })?;
        let mask_path = mask_by_idx.get(&idx).ok_or_else(|| {
            CmdError::Validation(format!("missing gt_{idx:04}.pgm in the fit range"))
        })?;
        manifest.input(img_path)?;
        manifest.input(mask_path)?;
        fit_images.push(load_image(img_path).map_err(CmdError::validation)?);
        fit_masks.push(load_mask(mask_path).map_err(CmdError::validation)?);
    }

    let mut params = fit_weak_classifier(&fit_images, &fit_masks).map_err(CmdError::validation)?;
    params.smoothing_radius = args.radius;
    params.quality = args.quality;
    params.validate().map_err(CmdError::validation)?;
    manifest.config(&params)?;

    create_out_dir(&args.out)?;
    let unary_dir = args.out.join("unaries");
    create_out_dir(&unary_dir)?;

    let apply: Vec<u64> = apply_range.iter().collect();
    let apply_paths: Vec<(u64, PathBuf)> = apply
        .iter()
        .map(|idx| {
            image_by_idx
                .get(idx)
                .map(|p| (*idx, p.clone()))
                .ok_or_else(|| {
                    CmdError::Validation(format!("missing img_{idx:04}.pgm in the apply range"))
                })
        })
        .collect::<Result<_, _>>()?;
    for (_, path) in &apply_paths {
        manifest.input(path)?;
    }

    let written = parallel_map(apply_paths, globals.threads, |_, (idx, path)| {
        let image = load_image(path).map_err(CmdError::validation)?;
        let soft = weak_segment(&image, &params);
        let seg_path = args.out.join(format!("seg_{idx:04}.pgm"));
        save_mask(&soft.argmax_labels(), &seg_path).map_err(CmdError::validation)?;
        let index_path = save_soft_mask(&soft, &unary_dir, &format!("unary_{idx:04}"))
            .map_err(CmdError::validation)?;
        Ok::<_, CmdError>((seg_path, index_path))
    });
    let mut count = 0;
    for result in written {
        let (seg_path, index_path) = result?;
        manifest.output(&seg_path)?;
        manifest.output(&index_path)?;
        count += 1;
    }

    let manifest_dir = globals.manifest_dir.as_deref().unwrap_or(&args.out);
    manifest.write(manifest_dir, "manifest.json")?;
    println!("segmented {count} scenes into {}", args.out.display());
    Ok(())
}
