//! Procedural scene generation and a deliberately weak pixel classifier.
//!
//! Scenes imitate a chest radiograph at toy scale: two mirrored elongated
//! ellipses (class 1, "lungs") and, in three-class mode, one medial
//! ellipse (class 2, "heart") that overlaps the lungs and wins the
//! overlap. The image is per-class mean intensity plus a smooth bias
//! field plus Gaussian noise. Every scene is a pure function of
//! `(config.seed, index)`.
//!
//! The weak classifier is a per-pixel Gaussian intensity model with box
//! smoothing and a quality knob that mixes the posterior toward uniform.
//! It stands in for stronger segmenters whose outputs need cleaning.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{connected_components, GrayImage, LabelMask};
use crate::raster::SoftMask;
use crate::rng::{stream_rng, DOMAIN_SCENE};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("generation failed: {0}")]
    Generation(String),
    #[error("classifier fit failed: {0}")]
    Fit(String),
}

pub type Result<T> = std::result::Result<T, SynthError>;

/// Scene generator parameters. Jitter amplitudes are fractions of the
/// canvas; intensity means are indexed by class.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub num_classes: u8,
    /// Shape-center offset amplitude, fraction of canvas size.
    pub center_jitter: f64,
    /// Relative semi-axis scale amplitude (0.1 = ±10%).
    pub scale_jitter: f64,
    /// Rotation amplitude in radians.
    pub rotation_jitter: f64,
    pub intensity_means: Vec<f64>,
    pub noise_sigma: f64,
    pub bias_amplitude: f64,
    pub seed: u64,
}

impl SceneConfig {
    /// Small-canvas defaults used throughout the test pipelines.
    pub fn desk_default(num_classes: u8, seed: u64) -> Self {
        let intensity_means = match num_classes {
            2 => vec![0.20, 0.60],
            _ => vec![0.20, 0.60, 0.85],
        };
        Self {
            width: 64,
            height: 64,
            num_classes,
            center_jitter: 0.03,
            scale_jitter: 0.08,
            rotation_jitter: 0.06,
            intensity_means,
            noise_sigma: 0.04,
            bias_amplitude: 0.08,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 16 || self.height < 16 {
            return Err(SynthError::Config("canvas must be at least 16x16".into()));
        }
        if !(self.num_classes == 2 || self.num_classes == 3) {
            return Err(SynthError::Config(format!(
                "num_classes must be 2 or 3, got {}",
                self.num_classes
            )));
        }
        if self.intensity_means.len() != self.num_classes as usize {
            return Err(SynthError::Config(format!(
                "{} intensity means for {} classes",
                self.intensity_means.len(),
                self.num_classes
            )));
        }
        if self.intensity_means.iter().any(|m| !(0.0..=1.0).contains(m)) {
            return Err(SynthError::Config("intensity means must lie in [0,1]".into()));
        }
        for i in 0..self.intensity_means.len() {
            for j in i + 1..self.intensity_means.len() {
                if (self.intensity_means[i] - self.intensity_means[j]).abs() < 0.05 {
                    return Err(SynthError::Config(format!(
                        "class intensity means {i} and {j} closer than 0.05"
                    )));
                }
            }
        }
        if self.noise_sigma < 0.0 || self.bias_amplitude < 0.0 {
            return Err(SynthError::Config("noise and bias must be nonnegative".into()));
        }
        if self.center_jitter < 0.0 || self.scale_jitter < 0.0 || self.rotation_jitter < 0.0 {
            return Err(SynthError::Config("jitter amplitudes must be nonnegative".into()));
        }
        // Worst-case jitter must keep every canonical shape inside the canvas.
        for shape in canonical_shapes(self.num_classes) {
            let grown = Ellipse {
                cx: shape.cx + self.center_jitter * if shape.cx > 0.5 { 1.0 } else { -1.0 },
                cy: shape.cy + self.center_jitter,
                a: shape.a * (1.0 + self.scale_jitter),
                b: shape.b * (1.0 + self.scale_jitter),
                theta: shape.theta + self.rotation_jitter,
                class: shape.class,
            };
            let (ex, ey) = grown.half_extents();
            let fits = grown.cx - ex >= 0.0
                && grown.cx + ex <= 1.0
                && grown.cy - ey >= 0.0
                && grown.cy + ey <= 1.0
                && shape.cx - self.center_jitter - ex >= 0.0;
            if !fits {
                return Err(SynthError::Config(format!(
                    "jitter can push the class-{} shape off canvas",
                    shape.class
                )));
            }
        }
        Ok(())
    }
}

/// Ellipse in canvas-fraction coordinates.
#[derive(Clone, Copy, Debug)]
struct Ellipse {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    theta: f64,
    class: u8,
}

impl Ellipse {
    /// Axis-aligned half extents of the rotated ellipse.
    fn half_extents(&self) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        let ex = ((self.a * c).powi(2) + (self.b * s).powi(2)).sqrt();
        let ey = ((self.a * s).powi(2) + (self.b * c).powi(2)).sqrt();
        (ex, ey)
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        let dx = x - self.cx;
        let dy = y - self.cy;
        let (s, c) = self.theta.sin_cos();
        let u = (dx * c + dy * s) / self.a;
        let v = (-dx * s + dy * c) / self.b;
        u * u + v * v <= 1.0
    }
}

/// Lungs (class 1) and, for three classes, the heart (class 2). The heart
/// overlaps both lungs' medial edges and takes precedence when rasterized.
fn canonical_shapes(num_classes: u8) -> Vec<Ellipse> {
    let mut shapes = vec![
        Ellipse { cx: 0.30, cy: 0.46, a: 0.13, b: 0.28, theta: 0.10, class: 1 },
        Ellipse { cx: 0.70, cy: 0.46, a: 0.13, b: 0.28, theta: -0.10, class: 1 },
    ];
    if num_classes == 3 {
        shapes.push(Ellipse { cx: 0.52, cy: 0.64, a: 0.155, b: 0.125, theta: 0.0, class: 2 });
    }
    shapes
}

/// Expected 4-connected component count per foreground class.
pub fn expected_components(num_classes: u8) -> Vec<(u8, usize)> {
    if num_classes == 3 {
        vec![(1, 2), (2, 1)]
    } else {
        vec![(1, 2)]
    }
}

/// Generates the `(image, ground truth)` pair for one scene index.
///
/// Jittered shapes are resampled (up to 100 attempts) until they stay on
/// canvas and every foreground class keeps its expected component count.
pub fn generate_scene(cfg: &SceneConfig, index: u64) -> Result<(GrayImage, LabelMask)> {
    cfg.validate()?;
    let mut rng = stream_rng(cfg.seed, DOMAIN_SCENE, index);
    let (w, h) = (cfg.width, cfg.height);

    let mut mask = None;
    for _attempt in 0..100 {
        let mut shapes = Vec::new();
        let mut on_canvas = true;
        for base in canonical_shapes(cfg.num_classes) {
            let jittered = Ellipse {
                cx: base.cx + rng.random_range(-cfg.center_jitter..=cfg.center_jitter),
                cy: base.cy + rng.random_range(-cfg.center_jitter..=cfg.center_jitter),
                a: base.a * (1.0 + rng.random_range(-cfg.scale_jitter..=cfg.scale_jitter)),
                b: base.b * (1.0 + rng.random_range(-cfg.scale_jitter..=cfg.scale_jitter)),
                theta: base.theta
                    + rng.random_range(-cfg.rotation_jitter..=cfg.rotation_jitter),
                class: base.class,
            };
            let (ex, ey) = jittered.half_extents();
            on_canvas &= jittered.cx - ex >= 0.0
                && jittered.cx + ex <= 1.0
                && jittered.cy - ey >= 0.0
                && jittered.cy + ey <= 1.0;
            shapes.push(jittered);
        }
        if !on_canvas {
            continue;
        }

        let mut labels = vec![0u8; w * h];
        for y in 0..h {
            for x in 0..w {
                let fx = (x as f64 + 0.5) / w as f64;
                let fy = (y as f64 + 0.5) / h as f64;
                // Later shapes (heart) overwrite earlier ones (lungs).
                for shape in &shapes {
                    if shape.contains(fx, fy) {
                        labels[y * w + x] = shape.class;
                    }
                }
            }
        }
        let candidate = LabelMask::new(w, h, cfg.num_classes, labels)
            .map_err(|e| SynthError::Generation(e.to_string()))?;
        let ok = expected_components(cfg.num_classes)
            .into_iter()
            .all(|(class, n)| connected_components(&candidate, class) == n);
        if ok {
            mask = Some(candidate);
            break;
        }
    }
    let mask = mask.ok_or_else(|| {
        SynthError::Generation("no valid shape placement within 100 attempts".into())
    })?;

    // Image: class means + low-frequency bias + pixel noise, clamped.
    let phase_x = rng.random_range(0.0..std::f64::consts::TAU);
    let phase_y = rng.random_range(0.0..std::f64::consts::TAU);
    let noise = Normal::new(0.0, cfg.noise_sigma.max(1e-12)).expect("valid sigma");
    let mut intensities = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let label = mask.label(x, y) as usize;
            let bias = cfg.bias_amplitude
                * (std::f64::consts::PI * x as f64 / w as f64 + phase_x).cos()
                * (std::f64::consts::PI * y as f64 / h as f64 + phase_y).cos();
            let n = if cfg.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            intensities.push((cfg.intensity_means[label] + bias + n).clamp(0.0, 1.0));
        }
    }
    let image = GrayImage::new(w, h, intensities)
        .map_err(|e| SynthError::Generation(e.to_string()))?;
    Ok((image, mask))
}

// ---------------------------------------------------------------------------
// Weak classifier
// ---------------------------------------------------------------------------

/// Per-class Gaussian intensity model.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GaussianModel {
    pub mean: f64,
    pub variance: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeakClassifierParams {
    pub class_models: Vec<GaussianModel>,
    /// Box-smoothing radius applied to the posterior planes, in pixels.
    pub smoothing_radius: usize,
    /// Mixes the posterior toward uniform: 0 = honest posterior, 1 = uniform.
    pub quality: f64,
}

impl WeakClassifierParams {
    pub fn validate(&self) -> Result<()> {
        if self.class_models.len() < 2 {
            return Err(SynthError::Config("need at least 2 class models".into()));
        }
        if self.class_models.iter().any(|m| m.variance <= 0.0) {
            return Err(SynthError::Config("variances must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.quality) {
            return Err(SynthError::Config("quality knob must lie in [0,1]".into()));
        }
        Ok(())
    }
}

/// Maximum-likelihood Gaussian fit per class over all labeled pixels.
/// Variances are floored at 1e-6 so constant-intensity classes stay usable.
pub fn fit_weak_classifier(
    images: &[GrayImage],
    masks: &[LabelMask],
) -> Result<WeakClassifierParams> {
    if images.is_empty() || images.len() != masks.len() {
        return Err(SynthError::Fit(format!(
            "need aligned nonempty lists, got {} images and {} masks",
            images.len(),
            masks.len()
        )));
    }
    let num_classes = masks[0].num_classes() as usize;
    let mut sums = vec![0.0; num_classes];
    let mut sq_sums = vec![0.0; num_classes];
    let mut counts = vec![0usize; num_classes];
    for (img, mask) in images.iter().zip(masks) {
        if img.width() != mask.width() || img.height() != mask.height() {
            return Err(SynthError::Fit("image/mask dimensions differ".into()));
        }
        for (&v, &l) in img.intensities().iter().zip(mask.labels()) {
            let c = l as usize;
            sums[c] += v;
            sq_sums[c] += v * v;
            counts[c] += 1;
        }
    }
    let mut class_models = Vec::with_capacity(num_classes);
    for c in 0..num_classes {
        if counts[c] == 0 {
            return Err(SynthError::Fit(format!("class {c} absent from all masks")));
        }
        let n = counts[c] as f64;
        let mean = sums[c] / n;
        let variance = (sq_sums[c] / n - mean * mean).max(1e-6);
        class_models.push(GaussianModel { mean, variance });
    }
    Ok(WeakClassifierParams { class_models, smoothing_radius: 1, quality: 0.0 })
}

/// Per-pixel Gaussian posterior (uniform prior), box-smoothed, then mixed
/// toward uniform by the quality knob.
pub fn weak_segment(image: &GrayImage, params: &WeakClassifierParams) -> SoftMask {
    params.validate().expect("invalid classifier params");
    let (w, h) = (image.width(), image.height());
    let c = params.class_models.len();
    let mut probs = vec![0.0; w * h * c];

    for (p, &v) in image.intensities().iter().enumerate() {
        // log N(v; mu, var) up to a shared constant
        let logliks: Vec<f64> = params
            .class_models
            .iter()
            .map(|m| -0.5 * m.variance.ln() - (v - m.mean) * (v - m.mean) / (2.0 * m.variance))
            .collect();
        let max = logliks.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logliks.iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        for (k, e) in exps.iter().enumerate() {
            probs[p * c + k] = e / sum;
        }
    }

    if params.smoothing_radius > 0 {
        probs = box_smooth(&probs, w, h, c, params.smoothing_radius);
    }

    let q = params.quality;
    if q > 0.0 {
        let uniform = 1.0 / c as f64;
        for v in probs.iter_mut() {
            *v = (1.0 - q) * *v + q * uniform;
        }
    }

    SoftMask::new(w, h, params.class_models.len() as u8, probs)
        .expect("weak posterior satisfies soft-mask invariants")
}

/// Mean over the in-canvas window `[±r]²`, applied to each class plane with
/// the identical window, so per-pixel sums are preserved exactly.
fn box_smooth(probs: &[f64], w: usize, h: usize, c: usize, r: usize) -> Vec<f64> {
    let mut out = vec![0.0; probs.len()];
    for y in 0..h {
        let y0 = y.saturating_sub(r);
        let y1 = (y + r).min(h - 1);
        for x in 0..w {
            let x0 = x.saturating_sub(r);
            let x1 = (x + r).min(w - 1);
            let count = ((y1 - y0 + 1) * (x1 - x0 + 1)) as f64;
            let base = (y * w + x) * c;
            for k in 0..c {
                let mut acc = 0.0;
                for yy in y0..=y1 {
                    for xx in x0..=x1 {
                        acc += probs[(yy * w + xx) * c + k];
                    }
                }
                out[base + k] = acc / count;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::foreground_mean_dice;

    #[test]
    fn zero_randomness_gives_identical_canonical_scenes() {
        let mut cfg = SceneConfig::desk_default(2, 3);
        cfg.center_jitter = 0.0;
        cfg.scale_jitter = 0.0;
        cfg.rotation_jitter = 0.0;
        cfg.noise_sigma = 0.0;
        cfg.bias_amplitude = 0.0;
        let (img0, mask0) = generate_scene(&cfg, 0).unwrap();
        let (img9, mask9) = generate_scene(&cfg, 9).unwrap();
        assert_eq!(mask0, mask9);
        assert_eq!(img0, img9);
    }

    #[test]
    fn canonical_heart_is_one_component() {
        let mut cfg = SceneConfig::desk_default(3, 3);
        cfg.center_jitter = 0.0;
        cfg.scale_jitter = 0.0;
        cfg.rotation_jitter = 0.0;
        let (_, mask) = generate_scene(&cfg, 0).unwrap();
        assert_eq!(connected_components(&mask, 2), 1);
        assert_eq!(connected_components(&mask, 1), 2);
    }

    #[test]
    fn scene_generation_is_deterministic() {
        let cfg = SceneConfig::desk_default(3, 11);
        let (img_a, mask_a) = generate_scene(&cfg, 5).unwrap();
        let (img_b, mask_b) = generate_scene(&cfg, 5).unwrap();
        assert_eq!(mask_a, mask_b);
        assert_eq!(img_a, img_b);
        let (_, mask_c) = generate_scene(&cfg, 6).unwrap();
        assert_ne!(mask_a, mask_c);
    }

    #[test]
    fn component_counts_hold_across_a_generated_set() {
        let cfg = SceneConfig::desk_default(3, 21);
        for i in 0..20 {
            let (_, mask) = generate_scene(&cfg, i).unwrap();
            for (class, n) in expected_components(3) {
                assert_eq!(connected_components(&mask, class), n, "scene {i} class {class}");
            }
        }
    }

    #[test]
    fn close_intensity_means_are_rejected() {
        let mut cfg = SceneConfig::desk_default(2, 0);
        cfg.intensity_means = vec![0.5, 0.52];
        assert!(matches!(cfg.validate(), Err(SynthError::Config(_))));
    }

    #[test]
    fn excessive_jitter_is_rejected() {
        let mut cfg = SceneConfig::desk_default(2, 0);
        cfg.center_jitter = 0.3;
        assert!(matches!(cfg.validate(), Err(SynthError::Config(_))));
    }

    #[test]
    fn fit_on_constant_class_floors_variance() {
        let img = GrayImage::new(2, 1, vec![0.2, 0.8]).unwrap();
        let mask = LabelMask::new(2, 1, 2, vec![0, 1]).unwrap();
        let params = fit_weak_classifier(&[img], &[mask]).unwrap();
        assert!((params.class_models[0].mean - 0.2).abs() < 1e-12);
        assert_eq!(params.class_models[0].variance, 1e-6);
    }

    #[test]
    fn fit_rejects_empty_input_and_missing_class() {
        assert!(fit_weak_classifier(&[], &[]).is_err());
        let img = GrayImage::new(2, 1, vec![0.2, 0.8]).unwrap();
        let mask = LabelMask::new(2, 1, 3, vec![0, 1]).unwrap(); // class 2 absent
        assert!(matches!(
            fit_weak_classifier(&[img], &[mask]),
            Err(SynthError::Fit(_))
        ));
    }

    #[test]
    fn classifier_is_perfect_on_disjoint_intensity_ranges() {
        // Noise-free scene: class intensities are exactly separable, so the
        // classifier trained on the scene must reproduce its own mask.
        let mut cfg = SceneConfig::desk_default(2, 17);
        cfg.noise_sigma = 0.0;
        cfg.bias_amplitude = 0.0;
        let (img, mask) = generate_scene(&cfg, 0).unwrap();
        let mut params = fit_weak_classifier(&[img.clone()], &[mask.clone()]).unwrap();
        params.smoothing_radius = 0;
        params.quality = 0.0;
        let predicted = weak_segment(&img, &params).argmax_labels();
        assert_eq!(foreground_mean_dice(&predicted, &mask).unwrap(), 1.0);
    }

    #[test]
    fn quality_knob_one_gives_uniform_probabilities() {
        let img = GrayImage::new(3, 1, vec![0.1, 0.5, 0.9]).unwrap();
        let params = WeakClassifierParams {
            class_models: vec![
                GaussianModel { mean: 0.2, variance: 0.01 },
                GaussianModel { mean: 0.8, variance: 0.01 },
            ],
            smoothing_radius: 0,
            quality: 1.0,
        };
        let soft = weak_segment(&img, &params);
        for &p in soft.probs() {
            assert!((p - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_class_mean_dominates_at_quality_zero() {
        let img = GrayImage::new(1, 1, vec![0.8]).unwrap();
        let params = WeakClassifierParams {
            class_models: vec![
                GaussianModel { mean: 0.2, variance: 0.02 },
                GaussianModel { mean: 0.8, variance: 0.02 },
            ],
            smoothing_radius: 0,
            quality: 0.0,
        };
        let soft = weak_segment(&img, &params);
        assert!(soft.prob(0, 0, 1) > soft.prob(0, 0, 0));
    }

    #[test]
    fn posteriors_sum_to_one_under_smoothing_and_mixing() {
        let cfg = SceneConfig::desk_default(3, 23);
        let (img, mask) = generate_scene(&cfg, 1).unwrap();
        let mut params = fit_weak_classifier(&[img.clone()], &[mask]).unwrap();
        params.smoothing_radius = 2;
        params.quality = 0.4;
        let soft = weak_segment(&img, &params);
        let c = soft.num_classes() as usize;
        for p in 0..soft.width() * soft.height() {
            let sum: f64 = soft.probs()[p * c..(p + 1) * c].iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn mean_dice_is_non_increasing_in_the_quality_knob() {
        let cfg = SceneConfig::desk_default(2, 31);
        let scenes: Vec<_> = (0..20).map(|i| generate_scene(&cfg, i).unwrap()).collect();
        let images: Vec<GrayImage> = scenes.iter().map(|(i, _)| i.clone()).collect();
        let masks: Vec<LabelMask> = scenes.iter().map(|(_, m)| m.clone()).collect();
        let fitted = fit_weak_classifier(&images, &masks).unwrap();

        let mut last = f64::INFINITY;
        for knob in [0.0, 0.25, 0.5, 0.75] {
            let params = WeakClassifierParams { quality: knob, ..fitted.clone() };
            let mut total = 0.0;
            for (img, mask) in images.iter().zip(&masks) {
                let pred = weak_segment(img, &params).argmax_labels();
                total += foreground_mean_dice(&pred, mask).unwrap();
            }
            let mean = total / masks.len() as f64;
            assert!(
                mean <= last + 1e-9,
                "dice rose from {last} to {mean} at knob {knob}"
            );
            last = mean;
        }
    }
}
