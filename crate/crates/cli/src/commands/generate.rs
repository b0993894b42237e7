//! `postdae generate` — paired image/ground-truth scenes plus manifest.

use std::path::PathBuf;

use clap::Parser;
use postdae_core::raster::{save_image, save_mask};
use postdae_core::synth::{generate_scene, SceneConfig};

use crate::manifest::ManifestBuilder;
use crate::util::{create_out_dir, parallel_map};
use crate::{CmdError, GlobalOpts};

#[derive(Parser)]
pub struct Args {
    /// Scene config JSON; defaults to the stock config when omitted.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Class count for the default config (ignored with --config).
    #[arg(long, default_value_t = 2)]
    classes: u8,

    #[arg(long)]
    out: PathBuf,

    /// Number of scenes to generate.
    #[arg(long)]
    count: u64,

    /// First scene index; lets disjoint train/test sets share one seed.
    #[arg(long, default_value_t = 0)]
    start_index: u64,
}

pub fn run(args: Args, globals: &GlobalOpts) -> Result<(), CmdError> {
    let mut manifest = ManifestBuilder::new("generate", globals.seed);

    let mut cfg = match &args.config {
        Some(path) => {
            manifest.input(path)?;
            let text = std::fs::read_to_string(path)
                .map_err(|e| CmdError::Validation(format!("cannot read config: {e}")))?;
            serde_json::from_str::<SceneConfig>(&text)
                .map_err(|e| CmdError::Validation(format!("bad scene config: {e}")))?
        }
        None => SceneConfig::desk_default(args.classes, 7),
    };
    if let Some(seed) = globals.seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(CmdError::validation)?;
    manifest.config(&cfg)?;

    create_out_dir(&args.out)?;
    let indices: Vec<u64> = (args.start_index..args.start_index + args.count).collect();
    let written = parallel_map(indices, globals.threads, |_, &idx| {
        let (image, mask) = generate_scene(&cfg, idx).map_err(CmdError::validation)?;
        let img_path = args.out.join(format!("img_{idx:04}.pgm"));
        let gt_path = args.out.join(format!("gt_{idx:04}.pgm"));
        save_image(&image, &img_path).map_err(CmdError::validation)?;
        save_mask(&mask, &gt_path).map_err(CmdError::validation)?;
        Ok::<_, CmdError>((img_path, gt_path))
    });
    for result in written {
        let (img_path, gt_path) = result?;
        manifest.output(&img_path)?;
        manifest.output(&gt_path)?;
    }

    let manifest_dir = globals.manifest_dir.as_deref().unwrap_or(&args.out);
    manifest.write(manifest_dir, "manifest.json")?;
    println!("generated {} scenes in {}", args.count, args.out.display());
    Ok(())
}
