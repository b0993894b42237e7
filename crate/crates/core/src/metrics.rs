//! Segmentation quality measures and significance testing.
//!
//! Dice and Hausdorff are computed per class over foreground pixel sets.
//! Hausdorff uses an exact Euclidean distance transform internally and
//! reports pixel units (the brute-force double loop in [`crate::oracle`]
//! is its reference). Degenerate-set conventions: both sets empty gives
//! Dice 1 and Hausdorff 0; exactly one empty set gives Hausdorff equal to
//! the canvas diagonal.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::raster::LabelMask;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

// ---------------------------------------------------------------------------
// Dice and Hausdorff
// ---------------------------------------------------------------------------

fn check_dims(a: &LabelMask, b: &LabelMask) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(MetricsError::Contract(format!(
            "mask dimensions differ: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

/// Dice overlap `2|A∩B| / (|A|+|B|)` of one class; 1.0 when both sets are empty.
pub fn dice(a: &LabelMask, b: &LabelMask, class: u8) -> Result<f64> {
    check_dims(a, b)?;
    let mut inter = 0usize;
    let mut total = 0usize;
    for (&la, &lb) in a.labels().iter().zip(b.labels()) {
        let fa = la == class;
        let fb = lb == class;
        inter += usize::from(fa && fb);
        total += usize::from(fa) + usize::from(fb);
    }
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / total as f64)
}

/// Mean Dice over the foreground classes `1..num_classes`.
pub fn foreground_mean_dice(a: &LabelMask, b: &LabelMask) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0;
    for c in 1..a.num_classes() {
        sum += dice(a, b, c)?;
        n += 1;
    }
    Ok(sum / n as f64)
}

/// Exact squared Euclidean distance transform (lower-envelope algorithm).
/// Distances to the nearest source pixel, exact integers carried in f64.
fn squared_edt(width: usize, height: usize, is_source: &[bool]) -> Vec<f64> {
    const INF: f64 = 1e20;
    let mut dist: Vec<f64> = is_source
        .iter()
        .map(|&s| if s { 0.0 } else { INF })
        .collect();

    let n = width.max(height);
    let mut f = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];

    fn transform_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
        const INF: f64 = 1e20;
        let n = f.len();
        let mut k = 0usize;
        v[0] = 0;
        z[0] = -INF;
        z[1] = INF;
        for q in 1..n {
            let mut s;
            loop {
                let p = v[k];
                s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64))
                    / (2.0 * q as f64 - 2.0 * p as f64);
                if s <= z[k] {
                    // envelope parabola p is dominated; drop it
                    k -= 1;
                } else {
                    break;
                }
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = INF;
        }
        let mut k = 0usize;
        for q in 0..n {
            while z[k + 1] < q as f64 {
                k += 1;
            }
            let p = v[k];
            let dq = q as f64 - p as f64;
            d[q] = dq * dq + f[p];
        }
    }

    // Columns first, then rows.
    for x in 0..width {
        for y in 0..height {
            f[y] = dist[y * width + x];
        }
        transform_1d(&f[..height], &mut d[..height], &mut v[..height], &mut z[..height + 1]);
        for y in 0..height {
            dist[y * width + x] = d[y];
        }
    }
    for y in 0..height {
        f[..width].copy_from_slice(&dist[y * width..(y + 1) * width]);
        transform_1d(&f[..width], &mut d[..width], &mut v[..width], &mut z[..width + 1]);
        dist[y * width..(y + 1) * width].copy_from_slice(&d[..width]);
    }
    dist
}

/// Symmetric Hausdorff distance between the foreground pixel sets of `class`,
/// in Euclidean pixel units.
pub fn hausdorff(a: &LabelMask, b: &LabelMask, class: u8) -> Result<f64> {
    check_dims(a, b)?;
    let (w, h) = (a.width(), a.height());
    let in_a: Vec<bool> = a.labels().iter().map(|&l| l == class).collect();
    let in_b: Vec<bool> = b.labels().iter().map(|&l| l == class).collect();
    let a_empty = !in_a.iter().any(|&v| v);
    let b_empty = !in_b.iter().any(|&v| v);
    if a_empty && b_empty {
        return Ok(0.0);
    }
    if a_empty || b_empty {
        return Ok(((w * w + h * h) as f64).sqrt());
    }

    let dist_to_b = squared_edt(w, h, &in_b);
    let dist_to_a = squared_edt(w, h, &in_a);
    let mut worst: f64 = 0.0;
    for p in 0..w * h {
        if in_a[p] {
            worst = worst.max(dist_to_b[p]);
        }
        if in_b[p] {
            worst = worst.max(dist_to_a[p]);
        }
    }
    Ok(worst.sqrt())
}

/// Mean Hausdorff over the foreground classes `1..num_classes`.
pub fn foreground_mean_hausdorff(a: &LabelMask, b: &LabelMask) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0;
    for c in 1..a.num_classes() {
        sum += hausdorff(a, b, c)?;
        n += 1;
    }
    Ok(sum / n as f64)
}

// ---------------------------------------------------------------------------
// Dataset evaluation
// ---------------------------------------------------------------------------

/// Per-sample metric values: one Dice and Hausdorff per foreground class
/// plus their foreground means.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub sample: String,
    pub per_class_dice: Vec<f64>,
    pub per_class_hausdorff: Vec<f64>,
    pub mean_dice: f64,
    pub mean_hausdorff: f64,
}

/// Dataset-level mean and standard deviation (n−1 estimator; 0 for n = 1).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean_dice: f64,
    pub std_dice: f64,
    pub mean_hausdorff: f64,
    pub std_hausdorff: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Evaluates aligned prediction/ground-truth lists. Sample ids are the list
/// positions, zero-padded; callers with filenames can rewrite them.
pub fn evaluate_pairs(
    predictions: &[LabelMask],
    ground_truths: &[LabelMask],
) -> Result<(Vec<MetricsRecord>, Aggregate)> {
    if predictions.len() != ground_truths.len() {
        return Err(MetricsError::Contract(format!(
            "{} predictions vs {} ground truths",
            predictions.len(),
            ground_truths.len()
        )));
    }
    if predictions.is_empty() {
        return Err(MetricsError::Contract("empty evaluation set".into()));
    }
    let mut records = Vec::with_capacity(predictions.len());
    for (i, (pred, gt)) in predictions.iter().zip(ground_truths).enumerate() {
        if pred.num_classes() != gt.num_classes() {
            return Err(MetricsError::Contract(format!(
                "sample {i}: class counts differ ({} vs {})",
                pred.num_classes(),
                gt.num_classes()
            )));
        }
        let mut per_dice = Vec::new();
        let mut per_hd = Vec::new();
        for c in 1..gt.num_classes() {
            per_dice.push(dice(pred, gt, c)?);
            per_hd.push(hausdorff(pred, gt, c)?);
        }
        let mean_dice = per_dice.iter().sum::<f64>() / per_dice.len() as f64;
        let mean_hausdorff = per_hd.iter().sum::<f64>() / per_hd.len() as f64;
        records.push(MetricsRecord {
            sample: format!("{i:04}"),
            per_class_dice: per_dice,
            per_class_hausdorff: per_hd,
            mean_dice,
            mean_hausdorff,
        });
    }
    let (mean_dice, std_dice) = mean_std(&records.iter().map(|r| r.mean_dice).collect::<Vec<_>>());
    let (mean_hausdorff, std_hausdorff) =
        mean_std(&records.iter().map(|r| r.mean_hausdorff).collect::<Vec<_>>());
    Ok((
        records,
        Aggregate { mean_dice, std_dice, mean_hausdorff, std_hausdorff },
    ))
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank test
// ---------------------------------------------------------------------------

/// Signed-rank decomposition shared by the exact and approximate paths:
/// zero differences dropped, `|d|` ranked with average ranks for ties.
/// Returns (ranks of nonzero diffs, their signs, tie-group sizes).
fn signed_ranks(x: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<bool>, Vec<usize>)> {
    if x.len() != y.len() {
        return Err(MetricsError::Contract(format!(
            "paired samples differ in length: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    let diffs: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| a - b)
        .filter(|d| *d != 0.0)
        .collect();
    let n = diffs.len();
    if n < 5 {
        return Err(MetricsError::InsufficientData(format!(
            "{n} nonzero differences, need at least 5"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diffs[i].abs().partial_cmp(&diffs[j].abs()).unwrap());
    let mut ranks = vec![0.0; n];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && diffs[order[j + 1]].abs() == diffs[order[i]].abs() {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = avg;
        }
        ties.push(j - i + 1);
        i = j + 1;
    }
    let signs = diffs.iter().map(|&d| d > 0.0).collect();
    Ok((ranks, signs, ties))
}

/// Two-sided Wilcoxon signed-rank test on paired samples.
///
/// Exact sign-flip null distribution for n ≤ 20 (dynamic program over
/// doubled ranks, so tied average ranks stay integral); normal
/// approximation with tie-corrected variance above. Zero differences are
/// dropped; fewer than 5 remaining pairs is an error.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<f64> {
    let (ranks, signs, ties) = signed_ranks(x, y)?;
    let n = ranks.len();
    let w_plus: f64 = ranks
        .iter()
        .zip(&signs)
        .filter(|(_, &s)| s)
        .map(|(&r, _)| r)
        .sum();

    if n <= 20 {
        // Null distribution of 2*W+ by subset-sum counting over 2*ranks.
        let doubled: Vec<usize> = ranks.iter().map(|&r| (2.0 * r).round() as usize).collect();
        let max_sum: usize = doubled.iter().sum();
        let mut counts = vec![0.0f64; max_sum + 1];
        counts[0] = 1.0;
        for &r in &doubled {
            for s in (r..=max_sum).rev() {
                counts[s] += counts[s - r];
            }
        }
        let total = 2f64.powi(n as i32);
        let w2 = (2.0 * w_plus).round() as usize;
        let p_le: f64 = counts[..=w2].iter().sum::<f64>() / total;
        let p_ge: f64 = counts[w2..].iter().sum::<f64>() / total;
        Ok((2.0 * p_le.min(p_ge)).min(1.0))
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let tie_term: f64 = ties
            .iter()
            .map(|&t| {
                let t = t as f64;
                t * t * t - t
            })
            .sum::<f64>()
            / 48.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
        if var <= 0.0 {
            return Err(MetricsError::InsufficientData(
                "zero variance after tie correction".into(),
            ));
        }
        let z = (w_plus - mean) / var.sqrt();
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        Ok((2.0 * (1.0 - normal.cdf(z.abs()))).min(1.0))
    }
}

// ---------------------------------------------------------------------------
// Multi-method comparison
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MethodSummary {
    pub name: String,
    pub n: usize,
    pub mean_dice: f64,
    pub std_dice: f64,
    pub mean_hausdorff: f64,
    pub std_hausdorff: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PairwiseComparison {
    pub method_a: String,
    pub method_b: String,
    /// `"dice"` or `"hausdorff"`.
    pub metric: String,
    /// Absent when too few nonzero differences remain.
    pub p_value: Option<f64>,
    pub significant: Option<bool>,
}

/// Per-method aggregates plus pairwise Wilcoxon tests with a Bonferroni
/// threshold of `alpha / (method pairs × metrics)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub alpha: f64,
    pub num_comparisons: usize,
    pub bonferroni_threshold: f64,
    pub methods: Vec<MethodSummary>,
    pub comparisons: Vec<PairwiseComparison>,
}

/// Builds a [`ComparisonReport`] from per-method sample records. All methods
/// must be evaluated on the same samples in the same order.
pub fn compare_methods(
    methods: &[(String, Vec<MetricsRecord>, Aggregate)],
    alpha: f64,
) -> Result<ComparisonReport> {
    if methods.is_empty() {
        return Err(MetricsError::Contract("no methods to compare".into()));
    }
    let n = methods[0].1.len();
    if methods.iter().any(|(_, r, _)| r.len() != n) {
        return Err(MetricsError::Contract(
            "methods evaluated on different sample counts".into(),
        ));
    }

    let summaries = methods
        .iter()
        .map(|(name, records, agg)| MethodSummary {
            name: name.clone(),
            n: records.len(),
            mean_dice: agg.mean_dice,
            std_dice: agg.std_dice,
            mean_hausdorff: agg.mean_hausdorff,
            std_hausdorff: agg.std_hausdorff,
        })
        .collect();

    let pairs = methods.len() * methods.len().saturating_sub(1) / 2;
    let num_comparisons = pairs * 2;
    let threshold = if num_comparisons > 0 {
        alpha / num_comparisons as f64
    } else {
        alpha
    };

    let mut comparisons = Vec::new();
    for i in 0..methods.len() {
        for j in i + 1..methods.len() {
            for (metric, select) in [
                ("dice", (|r: &MetricsRecord| r.mean_dice) as fn(&MetricsRecord) -> f64),
                ("hausdorff", |r: &MetricsRecord| r.mean_hausdorff),
            ] {
                let a: Vec<f64> = methods[i].1.iter().map(select).collect();
                let b: Vec<f64> = methods[j].1.iter().map(select).collect();
                let p = match wilcoxon_signed_rank(&a, &b) {
                    Ok(p) => Some(p),
                    Err(MetricsError::InsufficientData(_)) => None,
                    Err(e) => return Err(e),
                };
                comparisons.push(PairwiseComparison {
                    method_a: methods[i].0.clone(),
                    method_b: methods[j].0.clone(),
                    metric: metric.to_string(),
                    p_value: p,
                    significant: p.map(|p| p < threshold),
                });
            }
        }
    }

    Ok(ComparisonReport {
        schema_version: 1,
        alpha,
        num_comparisons,
        bonferroni_threshold: threshold,
        methods: summaries,
        comparisons,
    })
}
