//! `postdae report` — render an evaluation report as aligned text tables.

use std::path::PathBuf;

use clap::Parser;
use postdae_core::metrics::ComparisonReport;

use crate::manifest::ManifestBuilder;
use crate::{CmdError, GlobalOpts};

#[derive(Parser)]
pub struct Args {
    /// `report.json` produced by `postdae evaluate`.
    report: PathBuf,
}

pub fn run(args: Args, globals: &GlobalOpts) -> Result<(), CmdError> {
    let mut manifest = ManifestBuilder::new("report", globals.seed);
    manifest.input(&args.report)?;

    let text = std::fs::read_to_string(&args.report)
        .map_err(|e| CmdError::Validation(format!("cannot read report: {e}")))?;
    let report: ComparisonReport = serde_json::from_str(&text)
        .map_err(|e| CmdError::Validation(format!("bad report: {e}")))?;
    manifest.config(serde_json::json!({ "report": args.report.display().to_string() }))?;

    let name_width = report
        .methods
        .iter()
        .map(|m| m.name.len())
        .max()
        .unwrap_or(6)
        .max(6);

    println!("Dice");
    for m in &report.methods {
        println!(
            "  {:<name_width$}  {:.4} ({:.4})",
            m.name, m.mean_dice, m.std_dice
        );
    }
    println!();
    println!("Hausdorff distance (HD)");
    for m in &report.methods {
        println!(
            "  {:<name_width$}  {:.2} ({:.2})",
            m.name, m.mean_hausdorff, m.std_hausdorff
        );
    }

    if !report.comparisons.is_empty() {
        println!();
        println!(
            "Wilcoxon signed-rank (two-sided), alpha = {}, Bonferroni threshold = {:.6} over {} comparisons",
            report.alpha, report.bonferroni_threshold, report.num_comparisons
        );
        for c in &report.comparisons {
            let (p, verdict) = match (c.p_value, c.significant) {
                (Some(p), Some(true)) => (format!("{p:.3e}"), "significant"),
                (Some(p), _) => (format!("{p:.3e}"), "not significant"),
                (None, _) => ("n/a".to_string(), "insufficient data"),
            };
            println!(
                "  {:<9} {:<name_width$} vs {:<name_width$}  p = {:<10}  {}",
                c.metric, c.method_a, c.method_b, p, verdict
            );
        }
    }

    let manifest_dir = globals
        .manifest_dir
        .clone()
        .or_else(|| args.report.parent().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    manifest.write(&manifest_dir, "report_manifest.json")?;
    Ok(())
}
