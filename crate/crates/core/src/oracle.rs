//! Independent reference implementations backing the test suites.
//!
//! Everything here trades speed for obviousness and deliberately shares no
//! code with the production paths it checks: Hausdorff by the full
//! `O(|A|·|B|)` double loop, Wilcoxon by literal sign-flip enumeration,
//! and gradients by central finite differences.

use crate::metrics::{MetricsError, Result as MetricsResult};
use crate::raster::LabelMask;

/// Hausdorff distance by exhaustive pairwise distances.
///
/// Same degenerate-set conventions as `metrics::hausdorff`: 0 when both
/// sets are empty, canvas diagonal when exactly one is.
pub fn hausdorff_brute_force(a: &LabelMask, b: &LabelMask, class: u8) -> f64 {
    let collect = |m: &LabelMask| -> Vec<(f64, f64)> {
        let mut pts = Vec::new();
        for y in 0..m.height() {
            for x in 0..m.width() {
                if m.label(x, y) == class {
                    pts.push((x as f64, y as f64));
                }
            }
        }
        pts
    };
    let pa = collect(a);
    let pb = collect(b);
    if pa.is_empty() && pb.is_empty() {
        return 0.0;
    }
    if pa.is_empty() || pb.is_empty() {
        let (w, h) = (a.width() as f64, a.height() as f64);
        return (w * w + h * h).sqrt();
    }
    let directed = |from: &[(f64, f64)], to: &[(f64, f64)]| -> f64 {
        from.iter()
            .map(|&(x, y)| {
                to.iter()
                    .map(|&(u, v)| (x - u) * (x - u) + (y - v) * (y - v))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    directed(&pa, &pb).max(directed(&pb, &pa)).sqrt()
}

/// Exact two-sided Wilcoxon signed-rank p-value by enumerating all 2^n
/// sign assignments. Zero differences dropped; needs >= 5 nonzero pairs
/// and n <= 20 to stay tractable.
pub fn wilcoxon_exact_by_enumeration(x: &[f64], y: &[f64]) -> MetricsResult<f64> {
    if x.len() != y.len() {
        return Err(MetricsError::Contract("length mismatch".into()));
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
            "{n} nonzero differences"
        )));
    }
    assert!(n <= 20, "enumeration oracle limited to n <= 20");

    // Average ranks over |d| ties.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diffs[i].abs().partial_cmp(&diffs[j].abs()).unwrap());
    let mut ranks = vec![0.0; n];
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
        i = j + 1;
    }
    let w_obs: f64 = ranks
        .iter()
        .zip(&diffs)
        .filter(|(_, &d)| d > 0.0)
        .map(|(&r, _)| r)
        .sum();

    let mut le = 0u64;
    let mut ge = 0u64;
    for assignment in 0u64..(1 << n) {
        let w: f64 = (0..n)
            .filter(|&k| assignment & (1 << k) != 0)
            .map(|k| ranks[k])
            .sum();
        if w <= w_obs + 1e-9 {
            le += 1;
        }
        if w >= w_obs - 1e-9 {
            ge += 1;
        }
    }
    let total = (1u64 << n) as f64;
    Ok((2.0 * (le as f64 / total).min(ge as f64 / total)).min(1.0))
}

/// Central finite-difference gradient of a scalar function at `x`.
pub fn central_difference_gradient(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x: &[f64],
    step: f64,
) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + step;
            let plus = f(&probe);
            probe[i] = orig - step;
            let minus = f(&probe);
            probe[i] = orig;
            (plus - minus) / (2.0 * step)
        })
        .collect()
}

/// Worst-case relative disagreement between analytic and numeric gradients,
/// with `|a| + |n|` floored at 1e-8 so near-zero entries compare absolutely.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / (a.abs() + n.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finite_differences_recover_quadratic_gradient() {
        // f(x) = sum x_i^2 has gradient 2x.
        let x = vec![0.5, -1.25, 2.0];
        let grad = central_difference_gradient(
            &mut |v: &[f64]| v.iter().map(|a| a * a).sum(),
            &x,
            1e-5,
        );
        let expected: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        assert!(max_relative_error(&expected, &grad) < 1e-9);
    }

    #[test]
    fn brute_force_hausdorff_single_pixels() {
        let mut la = vec![0u8; 36];
        la[0] = 1;
        let mut lb = vec![0u8; 36];
        lb[5 * 6 + 4] = 1; // (4,5): distance sqrt(16+25)
        let a = LabelMask::new(6, 6, 2, la).unwrap();
        let b = LabelMask::new(6, 6, 2, lb).unwrap();
        assert_eq!(hausdorff_brute_force(&a, &b, 1), 41f64.sqrt());
    }
}
