//! `postdae degrade` — corrupt ground-truth masks at a chosen severity.

use std::path::PathBuf;

use clap::Parser;
use postdae_core::degrade::{degrade, DegradationConfig, Severity};
use postdae_core::raster::{load_mask, save_mask};

use crate::manifest::ManifestBuilder;
use crate::util::{create_out_dir, indexed_files, parallel_map, IndexRange};
use crate::{CmdError, GlobalOpts};

#[derive(Parser)]
pub struct Args {
    /// Directory holding the masks to corrupt.
    #[arg(long)]
    masks: PathBuf,

    /// Filename prefix selecting the input masks.
    #[arg(long, default_value = "gt_")]
    prefix: String,

    /// Severity preset; mutually exclusive with --config.
    #[arg(long, conflicts_with = "config")]
    severity: Option<String>,

    /// Custom degradation config JSON.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Restrict to mask indices in `A..B`.
    #[arg(long)]
    range: Option<String>,

    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: Args, globals: &GlobalOpts) -> Result<(), CmdError> {
    let mut manifest = ManifestBuilder::new("degrade", globals.seed);

    let (mut cfg, name) = match (&args.severity, &args.config) {
        (Some(s), None) => {
            let severity = Severity::parse(s).ok_or_else(|| {
                CmdError::Validation(format!("unknown severity `{s}` (light|moderate|heavy)"))
            })?;
            (severity.config(11), severity.name())
        }
        (None, Some(path)) => {
            manifest.input(path)?;
            let text = std::fs::read_to_string(path)
                .map_err(|e| CmdError::Validation(format!("cannot read config: {e}")))?;
            let cfg: DegradationConfig = serde_json::from_str(&text)
                .map_err(|e| CmdError::Validation(format!("bad degradation config: {e}")))?;
            (cfg, "custom")
        }
        _ => {
            return Err(CmdError::Validation(
                "pass exactly one of --severity or --config".into(),
            ))
        }
    };
    if let Some(seed) = globals.seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(CmdError::validation)?;
    manifest.config(&cfg)?;

    let range = args.range.as_deref().map(IndexRange::parse).transpose()?;
    let files: Vec<(u64, PathBuf)> = indexed_files(&args.masks, "pgm", Some(&args.prefix))?
        .into_iter()
        .filter(|(idx, _)| range.map_or(true, |r| r.contains(*idx)))
        .collect();
    for (_, path) in &files {
        manifest.input(path)?;
    }

    create_out_dir(&args.out)?;
    let written = parallel_map(files, globals.threads, |_, (idx, path)| {
        let mask = load_mask(path).map_err(CmdError::validation)?;
        let degraded = degrade(&mask, &cfg, *idx);
        let out_path = args.out.join(format!("deg_{name}_{idx:04}.pgm"));
        save_mask(&degraded, &out_path).map_err(CmdError::validation)?;
        Ok::<_, CmdError>(out_path)
    });
    let mut count = 0;
    for result in written {
        manifest.output(&result?)?;
        count += 1;
    }

    let manifest_dir = globals.manifest_dir.as_deref().unwrap_or(&args.out);
    manifest.write(manifest_dir, "manifest.json")?;
    println!("degraded {count} masks ({name}) into {}", args.out.display());
    Ok(())
}
