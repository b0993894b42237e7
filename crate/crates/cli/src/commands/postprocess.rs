//! `postdae postprocess` — project masks through a trained model.
//!
//! Each input mask keeps its filename in the output directory;
//! `scores.csv` records the reconstruction-error plausibility score per
//! input. An empty input directory is a documented no-op.

use std::io::Write;
use std::path::PathBuf;

use clap::Parser;
use postdae_core::dae::DaeModel;
use postdae_core::raster::{load_mask, save_mask};

use crate::manifest::ManifestBuilder;
use crate::util::{create_out_dir, indexed_files, parallel_map};
use crate::{CmdError, GlobalOpts};

#[derive(Parser)]
pub struct Args {
    /// Trained model checkpoint.
    #[arg(long)]
    model: PathBuf,

    /// Directory of masks to post-process.
    #[arg(long)]
    masks: PathBuf,

    /// Optional filename prefix filter.
    #[arg(long)]
    prefix: Option<String>,

    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: Args, globals: &GlobalOpts) -> Result<(), CmdError> {
    let mut manifest = ManifestBuilder::new("postprocess", globals.seed);
    manifest.input(&args.model)?;
    let model = DaeModel::load(&args.model).map_err(CmdError::validation)?;
    manifest.config(model.config())?;

    let files = indexed_files(&args.masks, "pgm", args.prefix.as_deref())?;
    for (_, path) in &files {
        manifest.input(path)?;
    }

    create_out_dir(&args.out)?;
    let results = parallel_map(files, globals.threads, |_, (_, path)| {
        let mask = load_mask(path).map_err(CmdError::validation)?;
        let processed = model.postprocess(&mask).map_err(CmdError::validation)?;
        let score = model.plausibility_score(&mask).map_err(CmdError::validation)?;
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| CmdError::Validation(format!("bad filename {}", path.display())))?
            .to_string();
        let out_path = args.out.join(&name);
        save_mask(&processed, &out_path).map_err(CmdError::validation)?;
        Ok::<_, CmdError>((name, out_path, score))
    });

    let scores_path = args.out.join("scores.csv");
    let mut scores = std::fs::File::create(&scores_path)
        .map_err(|e| CmdError::Validation(format!("cannot write scores: {e}")))?;
    writeln!(scores, "file,plausibility_score").map_err(CmdError::validation)?;
    let mut count = 0;
    for result in results {
        let (name, out_path, score) = result?;
        writeln!(scores, "{name},{score}").map_err(CmdError::validation)?;
        manifest.output(&out_path)?;
        count += 1;
    }
    drop(scores);
    manifest.output(&scores_path)?;

    let manifest_dir = globals.manifest_dir.as_deref().unwrap_or(&args.out);
    manifest.write(manifest_dir, "manifest.json")?;
    println!("post-processed {count} masks into {}", args.out.display());
    Ok(())
}
