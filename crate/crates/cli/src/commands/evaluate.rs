//! `postdae evaluate` — score prediction directories against ground truth.
//!
//! Predictions match ground truth by the trailing index in their
//! filenames; every prediction directory must cover exactly the ground
//! truth index set. Output: `metrics.csv` (method, sample, class, dice,
//! hd) and `report.json` (aggregates, pairwise Wilcoxon p-values,
//! Bonferroni flags).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use clap::Parser;
use postdae_core::metrics::{compare_methods, evaluate_pairs, Aggregate, MetricsRecord};
use postdae_core::raster::{load_mask, LabelMask};

use crate::manifest::ManifestBuilder;
use crate::util::{create_out_dir, indexed_files, parallel_map};
use crate::{CmdError, GlobalOpts};

#[derive(Parser)]
pub struct Args {
    /// Ground-truth directory.
    #[arg(long)]
    gt: PathBuf,

    /// Filename prefix selecting ground-truth masks.
    #[arg(long, default_value = "gt_")]
    gt_prefix: String,

    /// Restrict ground truth to indices in `A..B`.
    #[arg(long)]
    range: Option<String>,

    /// Prediction directories (repeatable); the directory name becomes the
    /// method name in the report.
    #[arg(long, required = true)]
    pred: Vec<PathBuf>,

    /// Significance level before Bonferroni correction.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,

    #[arg(long)]
    out: PathBuf,
}

fn method_name(dir: &PathBuf) -> String {
    dir.file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("method")
        .to_string()
}

pub fn run(args: Args, globals: &GlobalOpts) -> Result<(), CmdError> {
    let mut manifest = ManifestBuilder::new("evaluate", globals.seed);

    let range = args.range.as_deref().map(crate::util::IndexRange::parse).transpose()?;
    let gt_files: Vec<(u64, PathBuf)> = indexed_files(&args.gt, "pgm", Some(&args.gt_prefix))?
        .into_iter()
        .filter(|(idx, _)| range.map_or(true, |r| r.contains(*idx)))
        .collect();
    if gt_files.is_empty() {
        return Err(CmdError::Validation(format!(
            "no `{}*.pgm` masks in {}",
            args.gt_prefix,
            args.gt.display()
        )));
    }
    for (_, path) in &gt_files {
        manifest.input(path)?;
    }
    let gt_indices: Vec<u64> = gt_files.iter().map(|(i, _)| *i).collect();
    let gt_masks: Vec<LabelMask> = {
        let loaded = parallel_map(gt_files, globals.threads, |_, (_, path)| {
            load_mask(path).map_err(CmdError::validation)
        });
        loaded.into_iter().collect::<Result<_, _>>()?
    };

    let mut methods: Vec<(String, Vec<MetricsRecord>, Aggregate)> = Vec::new();
    for dir in &args.pred {
        let name = method_name(dir);
        let files: BTreeMap<u64, PathBuf> = indexed_files(dir, "pgm", None)?.into_iter().collect();

        let missing: Vec<String> = gt_indices
            .iter()
            .filter(|i| !files.contains_key(i))
            .map(|i| format!("{i:04}"))
            .collect();
        let extra: Vec<String> = files
            .keys()
            .filter(|i| !gt_indices.contains(i))
            .map(|i| format!("{i:04}"))
            .collect();
        if !missing.is_empty() || !extra.is_empty() {
            return Err(CmdError::Validation(format!(
                "prediction dir {} does not match ground truth; missing indices [{}], unmatched files [{}]",
                dir.display(),
                missing.join(", "),
                extra.join(", ")
            )));
        }

        let ordered: Vec<PathBuf> = gt_indices.iter().map(|i| files[i].clone()).collect();
        for path in &ordered {
            manifest.input(path)?;
        }
        let preds: Vec<LabelMask> = {
            let loaded = parallel_map(ordered, globals.threads, |_, path| {
                load_mask(path).map_err(CmdError::validation)
            });
            loaded.into_iter().collect::<Result<_, _>>()?
        };
        let (mut records, aggregate) =
            evaluate_pairs(&preds, &gt_masks).map_err(CmdError::validation)?;
        for (record, idx) in records.iter_mut().zip(&gt_indices) {
            record.sample = format!("{idx:04}");
        }
        methods.push((name, records, aggregate));
    }

    let report = compare_methods(&methods, args.alpha).map_err(CmdError::validation)?;

    create_out_dir(&args.out)?;
    let metrics_path = args.out.join("metrics.csv");
    let mut csv = std::fs::File::create(&metrics_path)
        .map_err(|e| CmdError::Validation(format!("cannot write metrics: {e}")))?;
    writeln!(csv, "method,sample,class,dice,hd").map_err(CmdError::validation)?;
    for (name, records, _) in &methods {
        for record in records {
            for (class_offset, (d, hd)) in record
                .per_class_dice
                .iter()
                .zip(&record.per_class_hausdorff)
                .enumerate()
            {
                writeln!(csv, "{name},{},{},{d},{hd}", record.sample, class_offset + 1)
                    .map_err(CmdError::validation)?;
            }
        }
    }
    drop(csv);
    manifest.output(&metrics_path)?;

    let report_path = args.out.join("report.json");
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CmdError::Validation(format!("cannot serialize report: {e}")))?;
    std::fs::write(&report_path, json + "\n").map_err(CmdError::validation)?;
    manifest.output(&report_path)?;

    manifest.config(serde_json::json!({
        "alpha": args.alpha,
        "methods": methods.iter().map(|(n, _, _)| n.clone()).collect::<Vec<_>>(),
        "samples": gt_masks.len(),
    }))?;
    let manifest_dir = globals.manifest_dir.as_deref().unwrap_or(&args.out);
    manifest.write(manifest_dir, "manifest.json")?;
    println!(
        "evaluated {} methods on {} samples -> {}",
        methods.len(),
        gt_masks.len(),
        args.out.display()
    );
    Ok(())
}
