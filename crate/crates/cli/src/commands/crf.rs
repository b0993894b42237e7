//! `postdae crf` — dense mean-field refinement of soft predictions.
//!
//! Pairs every `unary_NNNN.json` with `img_NNNN.pgm`, refines, and writes
//! the discretized result as `crf_NNNN.pgm` (optionally also the refined
//! probabilities). Bandwidth defaults rescale the 1024²-tuned values
//! (θα=17, θβ=3/255, θγ=3) to the actual image size.

use std::path::PathBuf;

use clap::Parser;
use postdae_core::crf::{meanfield_infer, CrfParams};
use postdae_core::raster::{load_image, load_soft_mask, save_mask, save_soft_mask};

use crate::manifest::ManifestBuilder;
use crate::util::{create_out_dir, indexed_files, parallel_map};
use crate::{CmdError, GlobalOpts};

#[derive(Parser)]
pub struct Args {
    /// Directory with `unary_NNNN.json` soft-mask indices.
    #[arg(long)]
    unaries: PathBuf,

    /// Directory with matching `img_NNNN.pgm` intensity images.
    #[arg(long)]
    images: PathBuf,

    #[arg(long)]
    out: PathBuf,

    /// Bilateral spatial bandwidth in pixels (default: 17·size/1024).
    #[arg(long)]
    theta_alpha: Option<f64>,

    /// Bilateral intensity bandwidth on the [0,1] scale.
    #[arg(long, default_value_t = 3.0 / 255.0)]
    theta_beta: f64,

    /// Smoothness bandwidth in pixels (default: 3·size/1024).
    #[arg(long)]
    theta_gamma: Option<f64>,

    #[arg(long, default_value_t = 1.0)]
    w_bilateral: f64,

    #[arg(long, default_value_t = 1.0)]
    w_smooth: f64,

    #[arg(long, default_value_t = 5)]
    iterations: usize,

    /// Also write the refined probabilities as `crfsoft_NNNN` unary sets.
    #[arg(long, default_value_t = false)]
    write_soft: bool,
}

pub fn run(args: Args, globals: &GlobalOpts) -> Result<(), CmdError> {
    let mut manifest = ManifestBuilder::new("crf", globals.seed);

    let unary_files = indexed_files(&args.unaries, "json", Some("unary_"))?;
    if unary_files.is_empty() {
        return Err(CmdError::Validation(format!(
            "no unary_*.json files in {}",
            args.unaries.display()
        )));
    }
    let images = indexed_files(&args.images, "pgm", Some("img_"))?;
    let image_by_idx: std::collections::BTreeMap<u64, PathBuf> = images.into_iter().collect();

    let mut pairs = Vec::with_capacity(unary_files.len());
    for (idx, unary_path) in unary_files {
        let image_path = image_by_idx.get(&idx).ok_or_else(|| {
            CmdError::Validation(format!(
                "no img_{idx:04}.pgm in {} for {}",
                args.images.display(),
                unary_path.display()
            ))
        })?;
        manifest.input(&unary_path)?;
        manifest.input(image_path)?;
        pairs.push((idx, unary_path, image_path.clone()));
    }

    // Resolve bandwidths against the first image's size.
    let probe = load_image(&pairs[0].2).map_err(CmdError::validation)?;
    let defaults = CrfParams::rescaled_defaults(probe.width());
    let params = CrfParams {
        theta_alpha: args.theta_alpha.unwrap_or(defaults.theta_alpha),
        theta_beta: args.theta_beta,
        theta_gamma: args.theta_gamma.unwrap_or(defaults.theta_gamma),
        w_bilateral: args.w_bilateral,
        w_smooth: args.w_smooth,
        iterations: args.iterations,
    };
    params.validate().map_err(CmdError::validation)?;
    manifest.config(&params)?;

    create_out_dir(&args.out)?;
    let results = parallel_map(pairs, globals.threads, |_, (idx, unary_path, image_path)| {
        let unary = load_soft_mask(unary_path).map_err(CmdError::validation)?;
        let image = load_image(image_path).map_err(CmdError::validation)?;
        let refined = meanfield_infer(&unary, &image, &params).map_err(CmdError::validation)?;
        let mask_path = args.out.join(format!("crf_{idx:04}.pgm"));
        save_mask(&refined.argmax_labels(), &mask_path).map_err(CmdError::validation)?;
        let soft_path = if args.write_soft {
            Some(
                save_soft_mask(&refined, &args.out, &format!("crfsoft_{idx:04}"))
                    .map_err(CmdError::validation)?,
            )
        } else {
            None
        };
        Ok::<_, CmdError>((mask_path, soft_path))
    });
    let mut count = 0;
    for result in results {
        let (mask_path, soft_path) = result?;
        manifest.output(&mask_path)?;
        if let Some(p) = soft_path {
            manifest.output(&p)?;
        }
        count += 1;
    }

    let manifest_dir = globals.manifest_dir.as_deref().unwrap_or(&args.out);
    manifest.write(manifest_dir, "manifest.json")?;
    println!("refined {count} predictions into {}", args.out.display());
    Ok(())
}
