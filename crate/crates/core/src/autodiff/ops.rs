//! Forward and backward kernels for every differentiable operation.
//!
//! Convolutions are 3x3 cross-correlations with zero padding 1, so
//! stride-1 layers preserve spatial dims and stride-2 layers halve them
//! (`out = (in - 1) / stride + 1`). Backward functions return gradients
//! for every differentiable input and are checked against central finite
//! differences in the test suites.

use super::{AutodiffError, Result, Tensor};

fn expect_rank(t: &Tensor, rank: usize, what: &str) -> Result<()> {
    if t.shape().len() != rank {
        return Err(AutodiffError::Shape(format!(
            "{what} must have rank {rank}, got shape {:?}",
            t.shape()
        )));
    }
    Ok(())
}

/// Inclusive output range `[lo, hi]` for which `ox*stride + d` stays inside
/// `[0, in_dim)`; `d` is the kernel offset minus the padding.
fn valid_range(out_dim: usize, in_dim: usize, stride: usize, d: i64) -> (usize, usize) {
    let lo = if d < 0 { 1 } else { 0 };
    let hi_in = (in_dim as i64 - 1 - d).div_euclid(stride as i64);
    let hi = hi_in.min(out_dim as i64 - 1);
    if hi < lo as i64 {
        (1, 0) // empty
    } else {
        (lo, hi as usize)
    }
}

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

/// 3x3 convolution, zero padding 1, stride 1 or 2.
/// `input` is `[N,C,H,W]`, `weights` `[K,C,3,3]`, `bias` `[K]`.
pub fn conv2d(input: &Tensor, weights: &Tensor, bias: &Tensor, stride: usize) -> Result<Tensor> {
    expect_rank(input, 4, "conv2d input")?;
    expect_rank(weights, 4, "conv2d weights")?;
    expect_rank(bias, 1, "conv2d bias")?;
    if !(stride == 1 || stride == 2) {
        return Err(AutodiffError::Contract(format!("stride must be 1 or 2, got {stride}")));
    }
    let (n, c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2], input.shape()[3]);
    let k = weights.shape()[0];
    if weights.shape()[1] != c || weights.shape()[2] != 3 || weights.shape()[3] != 3 {
        return Err(AutodiffError::Shape(format!(
            "weights {:?} incompatible with {c} input channels",
            weights.shape()
        )));
    }
    if bias.shape()[0] != k {
        return Err(AutodiffError::Shape(format!(
            "bias has {} entries for {k} kernels",
            bias.shape()[0]
        )));
    }
    let oh = (h - 1) / stride + 1;
    let ow = (w - 1) / stride + 1;
    let mut out = Tensor::zeros(&[n, k, oh, ow]);

    let x = input.data();
    let wt = weights.data();
    let b = bias.data();
    let o = out.data_mut();
    for in_ in 0..n {
        for ik in 0..k {
            let out_base = (in_ * k + ik) * oh * ow;
            o[out_base..out_base + oh * ow].iter_mut().for_each(|v| *v = b[ik]);
            for ic in 0..c {
                let in_base = (in_ * c + ic) * h * w;
                let wbase = ((ik * c + ic) * 3) * 3;
                if stride == 1 {
                    // Fused row kernel: all three horizontal taps of one
                    // kernel row applied in a single pass over the output
                    // row (ow == w under stride 1 with padding 1).
                    for ky in 0..3usize {
                        let dy = ky as i64 - 1;
                        let (oy_lo, oy_hi) = valid_range(oh, h, 1, dy);
                        if oy_lo > oy_hi {
                            continue;
                        }
                        let (w0, w1, w2) =
                            (wt[wbase + ky * 3], wt[wbase + ky * 3 + 1], wt[wbase + ky * 3 + 2]);
                        for oy in oy_lo..=oy_hi {
                            let iy = (oy as i64 + dy) as usize;
                            let xrow = &x[in_base + iy * w..in_base + (iy + 1) * w];
                            let orow = &mut o[out_base + oy * ow..out_base + (oy + 1) * ow];
                            if w == 1 {
                                orow[0] += w1 * xrow[0];
                                continue;
                            }
                            orow[0] += w1 * xrow[0] + w2 * xrow[1];
                            for ox in 1..w - 1 {
                                orow[ox] =
                                    orow[ox] + w0 * xrow[ox - 1] + w1 * xrow[ox] + w2 * xrow[ox + 1];
                            }
                            orow[w - 1] += w0 * xrow[w - 2] + w1 * xrow[w - 1];
                        }
                    }
                } else {
                    for ky in 0..3usize {
                        let dy = ky as i64 - 1;
                        let (oy_lo, oy_hi) = valid_range(oh, h, stride, dy);
                        for kx in 0..3usize {
                            let dx = kx as i64 - 1;
                            let (ox_lo, ox_hi) = valid_range(ow, w, stride, dx);
                            if oy_lo > oy_hi || ox_lo > ox_hi {
                                continue;
                            }
                            let wv = wt[wbase + ky * 3 + kx];
                            for oy in oy_lo..=oy_hi {
                                let iy = (oy * stride) as i64 + dy;
                                let irow = in_base + iy as usize * w;
                                let orow = out_base + oy * ow;
                                for ox in ox_lo..=ox_hi {
                                    let ix = (ox * stride) as i64 + dx;
                                    o[orow + ox] += wv * x[irow + ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of [`conv2d`] with respect to input, weights and bias.
pub fn conv2d_backward(
    grad_out: &Tensor,
    input: &Tensor,
    weights: &Tensor,
    stride: usize,
) -> (Tensor, Tensor, Tensor) {
    let (n, c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2], input.shape()[3]);
    let k = weights.shape()[0];
    let (oh, ow) = (grad_out.shape()[2], grad_out.shape()[3]);

    let mut grad_input = Tensor::zeros(input.shape());
    let mut grad_weights = Tensor::zeros(weights.shape());
    let mut grad_bias = Tensor::zeros(&[k]);

    let x = input.data();
    let wt = weights.data();
    let g = grad_out.data();
    let gi = grad_input.data_mut();
    let gw = grad_weights.data_mut();
    let gb = grad_bias.data_mut();

    for in_ in 0..n {
        for ik in 0..k {
            let out_base = (in_ * k + ik) * oh * ow;
            let mut bias_acc = 0.0;
            for v in &g[out_base..out_base + oh * ow] {
                bias_acc += v;
            }
            gb[ik] += bias_acc;
            for ic in 0..c {
                let in_base = (in_ * c + ic) * h * w;
                let wbase = ((ik * c + ic) * 3) * 3;
                if stride == 1 {
                    // Fused row kernels mirroring the forward pass: the
                    // input-gradient row gathers all three horizontal taps
                    // in one sweep, and the three weight-gradient dots
                    // share a single pass over the row.
                    for ky in 0..3usize {
                        let dy = ky as i64 - 1;
                        let (oy_lo, oy_hi) = valid_range(oh, h, 1, dy);
                        if oy_lo > oy_hi {
                            continue;
                        }
                        let (w0, w1, w2) =
                            (wt[wbase + ky * 3], wt[wbase + ky * 3 + 1], wt[wbase + ky * 3 + 2]);
                        let (mut a0, mut a1, mut a2) = (0.0, 0.0, 0.0);
                        for oy in oy_lo..=oy_hi {
                            let iy = (oy as i64 + dy) as usize;
                            let xrow = &x[in_base + iy * w..in_base + (iy + 1) * w];
                            let grow = &g[out_base + oy * ow..out_base + (oy + 1) * ow];
                            let girow = &mut gi[in_base + iy * w..in_base + (iy + 1) * w];
                            if w == 1 {
                                a1 += grow[0] * xrow[0];
                                girow[0] += w1 * grow[0];
                                continue;
                            }
                            // weight grads: a_kx = Σ_ox g[ox] · x[ox + kx - 1]
                            a1 += grow[0] * xrow[0];
                            a2 += grow[0] * xrow[1];
                            for ox in 1..w - 1 {
                                let gv = grow[ox];
                                a0 += gv * xrow[ox - 1];
                                a1 += gv * xrow[ox];
                                a2 += gv * xrow[ox + 1];
                            }
                            let gv = grow[w - 1];
                            a0 += gv * xrow[w - 2];
                            a1 += gv * xrow[w - 1];
                            // input grads: gi[ix] = Σ_kx w_kx · g[ix - kx + 1]
                            girow[0] += w1 * grow[0] + w0 * grow[1];
                            for ix in 1..w - 1 {
                                girow[ix] = girow[ix]
                                    + w2 * grow[ix - 1]
                                    + w1 * grow[ix]
                                    + w0 * grow[ix + 1];
                            }
                            girow[w - 1] += w2 * grow[w - 2] + w1 * grow[w - 1];
                        }
                        gw[wbase + ky * 3] += a0;
                        gw[wbase + ky * 3 + 1] += a1;
                        gw[wbase + ky * 3 + 2] += a2;
                    }
                } else {
                    for ky in 0..3usize {
                        let dy = ky as i64 - 1;
                        let (oy_lo, oy_hi) = valid_range(oh, h, stride, dy);
                        for kx in 0..3usize {
                            let dx = kx as i64 - 1;
                            let (ox_lo, ox_hi) = valid_range(ow, w, stride, dx);
                            if oy_lo > oy_hi || ox_lo > ox_hi {
                                continue;
                            }
                            let widx = wbase + ky * 3 + kx;
                            let wv = wt[widx];
                            let mut wacc = 0.0;
                            for oy in oy_lo..=oy_hi {
                                let iy = (oy * stride) as i64 + dy;
                                let irow = in_base + iy as usize * w;
                                let orow = out_base + oy * ow;
                                for ox in ox_lo..=ox_hi {
                                    let ix = ((ox * stride) as i64 + dx) as usize;
                                    let gv = g[orow + ox];
                                    wacc += gv * x[irow + ix];
                                    gi[irow + ix] += wv * gv;
                                }
                            }
                            gw[widx] += wacc;
                        }
                    }
                }
            }
        }
    }
    (grad_input, grad_weights, grad_bias)
}

// ---------------------------------------------------------------------------
// maxpool 2x2
// ---------------------------------------------------------------------------

/// 2x2 max pooling with stride 2 over even spatial dims. Returns the pooled
/// tensor and the flat input index of each window maximum (row-major
/// within the window, so ties pick the first occurrence).
pub fn maxpool2x2(input: &Tensor) -> Result<(Tensor, Vec<u32>)> {
    expect_rank(input, 4, "maxpool input")?;
    let (n, c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2], input.shape()[3]);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(AutodiffError::Contract(format!(
            "maxpool2x2 needs even spatial dims, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[n, c, oh, ow]);
    let mut argmax = vec![0u32; n * c * oh * ow];
    let x = input.data();
    let o = out.data_mut();
    for plane in 0..n * c {
        let in_base = plane * h * w;
        let out_base = plane * oh * ow;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best_idx = in_base + (2 * oy) * w + 2 * ox;
                let mut best = x[best_idx];
                for (dy, dx) in [(0usize, 1usize), (1, 0), (1, 1)] {
                    let idx = in_base + (2 * oy + dy) * w + 2 * ox + dx;
                    if x[idx] > best {
                        best = x[idx];
                        best_idx = idx;
                    }
                }
                o[out_base + oy * ow + ox] = best;
                argmax[out_base + oy * ow + ox] = best_idx as u32;
            }
        }
    }
    Ok((out, argmax))
}

/// Routes each output gradient back to its argmax input position.
pub fn maxpool2x2_backward(grad_out: &Tensor, argmax: &[u32], input_shape: &[usize]) -> Tensor {
    let mut grad_input = Tensor::zeros(input_shape);
    let gi = grad_input.data_mut();
    for (g, &idx) in grad_out.data().iter().zip(argmax) {
        gi[idx as usize] += g;
    }
    grad_input
}

// ---------------------------------------------------------------------------
// nearest-neighbor 2x upsampling (the resize half of up-convolution)
// ---------------------------------------------------------------------------

pub fn upsample2x(input: &Tensor) -> Result<Tensor> {
    expect_rank(input, 4, "upsample input")?;
    let (n, c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2], input.shape()[3]);
    let mut out = Tensor::zeros(&[n, c, 2 * h, 2 * w]);
    let x = input.data();
    let o = out.data_mut();
    for plane in 0..n * c {
        let in_base = plane * h * w;
        let out_base = plane * 4 * h * w;
        for y in 0..h {
            for xx in 0..w {
                let v = x[in_base + y * w + xx];
                let r0 = out_base + (2 * y) * 2 * w + 2 * xx;
                let r1 = r0 + 2 * w;
                o[r0] = v;
                o[r0 + 1] = v;
                o[r1] = v;
                o[r1 + 1] = v;
            }
        }
    }
    Ok(out)
}

/// Sums the four duplicated gradients back onto each source pixel.
pub fn upsample2x_backward(grad_out: &Tensor) -> Tensor {
    let (n, c, oh, ow) = (
        grad_out.shape()[0],
        grad_out.shape()[1],
        grad_out.shape()[2],
        grad_out.shape()[3],
    );
    let (h, w) = (oh / 2, ow / 2);
    let mut grad_input = Tensor::zeros(&[n, c, h, w]);
    let g = grad_out.data();
    let gi = grad_input.data_mut();
    for plane in 0..n * c {
        let in_base = plane * h * w;
        let out_base = plane * oh * ow;
        for y in 0..h {
            for xx in 0..w {
                let r0 = out_base + (2 * y) * ow + 2 * xx;
                let r1 = r0 + ow;
                gi[in_base + y * w + xx] = g[r0] + g[r0 + 1] + g[r1] + g[r1 + 1];
            }
        }
    }
    grad_input
}

// ---------------------------------------------------------------------------
// dense
// ---------------------------------------------------------------------------

/// Affine map: `[N,D] x [D,U] + [U] -> [N,U]`.
pub fn dense(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    expect_rank(input, 2, "dense input")?;
    expect_rank(weights, 2, "dense weights")?;
    expect_rank(bias, 1, "dense bias")?;
    let (n, d) = (input.shape()[0], input.shape()[1]);
    let (dw, u) = (weights.shape()[0], weights.shape()[1]);
    if d != dw || bias.shape()[0] != u {
        return Err(AutodiffError::Shape(format!(
            "dense: input {:?} weights {:?} bias {:?}",
            input.shape(),
            weights.shape(),
            bias.shape()
        )));
    }
    let mut out = Tensor::zeros(&[n, u]);
    let x = input.data();
    let w = weights.data();
    let b = bias.data();
    let o = out.data_mut();
    for i in 0..n {
        let orow = &mut o[i * u..(i + 1) * u];
        orow.copy_from_slice(b);
        for j in 0..d {
            let xv = x[i * d + j];
            let wrow = &w[j * u..(j + 1) * u];
            for (ov, wv) in orow.iter_mut().zip(wrow) {
                *ov += xv * wv;
            }
        }
    }
    Ok(out)
}

pub fn dense_backward(
    grad_out: &Tensor,
    input: &Tensor,
    weights: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let (n, d) = (input.shape()[0], input.shape()[1]);
    let u = weights.shape()[1];
    let mut grad_input = Tensor::zeros(&[n, d]);
    let mut grad_weights = Tensor::zeros(&[d, u]);
    let mut grad_bias = Tensor::zeros(&[u]);
    let x = input.data();
    let w = weights.data();
    let g = grad_out.data();
    let gi = grad_input.data_mut();
    let gw = grad_weights.data_mut();
    let gb = grad_bias.data_mut();
    for i in 0..n {
        let grow = &g[i * u..(i + 1) * u];
        for (bv, gv) in gb.iter_mut().zip(grow) {
            *bv += gv;
        }
        for j in 0..d {
            let wrow = &w[j * u..(j + 1) * u];
            let mut acc = 0.0;
            for (wv, gv) in wrow.iter().zip(grow) {
                acc += wv * gv;
            }
            gi[i * d + j] = acc;
            let xv = x[i * d + j];
            let gwrow = &mut gw[j * u..(j + 1) * u];
            for (gwv, gv) in gwrow.iter_mut().zip(grow) {
                *gwv += xv * gv;
            }
        }
    }
    (grad_input, grad_weights, grad_bias)
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

pub fn relu(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

pub fn relu_backward(grad_out: &Tensor, input: &Tensor) -> Tensor {
    let mut grad = grad_out.clone();
    for (g, &x) in grad.data_mut().iter_mut().zip(input.data()) {
        if x <= 0.0 {
            *g = 0.0;
        }
    }
    grad
}

pub fn sigmoid(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    out.data_mut().iter_mut().for_each(|v| *v = 1.0 / (1.0 + (-*v).exp()));
    out
}

/// Backward in terms of the cached forward output y: `dy/dx = y(1-y)`.
pub fn sigmoid_backward(grad_out: &Tensor, output: &Tensor) -> Tensor {
    let mut grad = grad_out.clone();
    for (g, &y) in grad.data_mut().iter_mut().zip(output.data()) {
        *g *= y * (1.0 - y);
    }
    grad
}

/// Per-pixel softmax across the channel dimension of `[N,C,H,W]`.
pub fn softmax_channels(input: &Tensor) -> Result<Tensor> {
    expect_rank(input, 4, "softmax input")?;
    let (n, c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2], input.shape()[3]);
    let hw = h * w;
    let mut out = input.clone();
    let o = out.data_mut();
    for i in 0..n {
        for p in 0..hw {
            let mut max = f64::NEG_INFINITY;
            for k in 0..c {
                max = max.max(o[(i * c + k) * hw + p]);
            }
            let mut sum = 0.0;
            for k in 0..c {
                let idx = (i * c + k) * hw + p;
                o[idx] = (o[idx] - max).exp();
                sum += o[idx];
            }
            for k in 0..c {
                o[(i * c + k) * hw + p] /= sum;
            }
        }
    }
    Ok(out)
}

/// Backward from the cached softmax output: `dx_k = y_k (g_k - Σ_j g_j y_j)`.
pub fn softmax_channels_backward(grad_out: &Tensor, output: &Tensor) -> Tensor {
    let (n, c, h, w) = (
        output.shape()[0],
        output.shape()[1],
        output.shape()[2],
        output.shape()[3],
    );
    let hw = h * w;
    let mut grad = Tensor::zeros(output.shape());
    let g = grad_out.data();
    let y = output.data();
    let gi = grad.data_mut();
    for i in 0..n {
        for p in 0..hw {
            let mut dot = 0.0;
            for k in 0..c {
                let idx = (i * c + k) * hw + p;
                dot += g[idx] * y[idx];
            }
            for k in 0..c {
                let idx = (i * c + k) * hw + p;
                gi[idx] = y[idx] * (g[idx] - dot);
            }
        }
    }
    grad
}

// ---------------------------------------------------------------------------
// soft Dice loss
// ---------------------------------------------------------------------------

/// Channels that enter the Dice loss: a single-channel prediction is its
/// own foreground; otherwise channel 0 is background and is skipped.
fn dice_channels(c: usize) -> std::ops::Range<usize> {
    if c == 1 {
        0..1
    } else {
        1..c
    }
}

/// Soft Dice loss `1 - (2·Σ(p·t) + ε)/(Σp + Σt + ε)`, computed per sample
/// and foreground channel, averaged. Targets must be 0/1 indicators.
pub fn soft_dice_loss(pred: &Tensor, target: &Tensor, epsilon: f64) -> Result<Tensor> {
    if pred.shape() != target.shape() {
        return Err(AutodiffError::Shape(format!(
            "pred {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    expect_rank(pred, 4, "soft_dice_loss pred")?;
    let (n, c, h, w) = (pred.shape()[0], pred.shape()[1], pred.shape()[2], pred.shape()[3]);
    let hw = h * w;
    let channels = dice_channels(c);
    let mut total = 0.0;
    let mut terms = 0usize;
    for i in 0..n {
        for k in channels.clone() {
            let base = (i * c + k) * hw;
            let p = &pred.data()[base..base + hw];
            let t = &target.data()[base..base + hw];
            let mut inter = 0.0;
            let mut psum = 0.0;
            let mut tsum = 0.0;
            for (pv, tv) in p.iter().zip(t) {
                inter += pv * tv;
                psum += pv;
                tsum += tv;
            }
            total += 1.0 - (2.0 * inter + epsilon) / (psum + tsum + epsilon);
            terms += 1;
        }
    }
    Ok(Tensor::scalar(total / terms as f64))
}

/// Gradient of [`soft_dice_loss`] with respect to the prediction.
pub fn soft_dice_loss_backward(pred: &Tensor, target: &Tensor, epsilon: f64) -> Result<Tensor> {
    if pred.shape() != target.shape() {
        return Err(AutodiffError::Shape(format!(
            "pred {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let (n, c, h, w) = (pred.shape()[0], pred.shape()[1], pred.shape()[2], pred.shape()[3]);
    let hw = h * w;
    let channels = dice_channels(c);
    let terms = (n * channels.len()) as f64;
    let mut grad = Tensor::zeros(pred.shape());
    let g = grad.data_mut();
    for i in 0..n {
        for k in channels.clone() {
            let base = (i * c + k) * hw;
            let p = &pred.data()[base..base + hw];
            let t = &target.data()[base..base + hw];
            let mut inter = 0.0;
            let mut psum = 0.0;
            let mut tsum = 0.0;
            for (pv, tv) in p.iter().zip(t) {
                inter += pv * tv;
                psum += pv;
                tsum += tv;
            }
            let denom = psum + tsum + epsilon;
            let numer = 2.0 * inter + epsilon;
            // d/dp_i of -(2S+e)/(P+T+e) = -(2 t_i (P+T+e) - (2S+e)) / (P+T+e)^2
            for (j, tv) in t.iter().enumerate() {
                g[base + j] = -(2.0 * tv * denom - numer) / (denom * denom) / terms;
            }
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{central_difference_gradient, max_relative_error};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn randn(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        // Uniform away from zero to keep relu kinks and pool ties out of
        // the finite-difference probes.
        let data: Vec<f64> = (0..n)
            .map(|i| {
                let v: f64 = rng.random_range(0.15..1.0);
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                sign * v + i as f64 * 1e-7
            })
            .collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    /// Scalar probe loss: weighted sum of outputs with fixed coefficients,
    /// so dL/dout is known exactly and nontrivial.
    fn coeffs(numel: usize) -> Vec<f64> {
        (0..numel).map(|i| ((i % 7) as f64 - 3.0) * 0.25 + 0.1).collect()
    }

    #[test]
    fn conv2d_delta_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let input = randn(&[1, 1, 5, 5], &mut rng);
        let mut w = vec![0.0; 9];
        w[4] = 1.0; // center tap
        let weights = Tensor::from_vec(&[1, 1, 3, 3], w).unwrap();
        let bias = Tensor::zeros(&[1]);
        let out = conv2d(&input, &weights, &bias, 1).unwrap();
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn conv2d_ones_kernel_counts_padded_window() {
        let input = Tensor::from_vec(&[1, 1, 5, 5], vec![1.0; 25]).unwrap();
        let weights = Tensor::from_vec(&[1, 1, 3, 3], vec![1.0; 9]).unwrap();
        let bias = Tensor::zeros(&[1]);
        let out = conv2d(&input, &weights, &bias, 1).unwrap();
        assert_eq!(out.data()[2 * 5 + 2], 9.0, "interior sums full window");
        assert_eq!(out.data()[0], 4.0, "corner sums the 2x2 valid part");
    }

    #[test]
    fn conv2d_stride2_output_dims() {
        let input = Tensor::zeros(&[1, 1, 6, 6]);
        let weights = Tensor::zeros(&[2, 1, 3, 3]);
        let bias = Tensor::zeros(&[2]);
        let out = conv2d(&input, &weights, &bias, 2).unwrap();
        assert_eq!(out.shape(), &[1, 2, 3, 3]);
        let odd = Tensor::zeros(&[1, 1, 5, 5]);
        assert_eq!(conv2d(&odd, &weights, &bias, 2).unwrap().shape(), &[1, 2, 3, 3]);
    }

    #[test]
    fn conv2d_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for stride in [1usize, 2] {
            let input = randn(&[1, 2, 6, 6], &mut rng);
            let weights = randn(&[3, 2, 3, 3], &mut rng);
            let bias = randn(&[3], &mut rng);
            let out = conv2d(&input, &weights, &bias, stride).unwrap();
            let cs = coeffs(out.numel());
            let upstream = Tensor::from_vec(out.shape(), cs.clone()).unwrap();
            let (gi, gw, gb) = conv2d_backward(&upstream, &input, &weights, stride);

            let loss_wrt_input = |v: &[f64]| {
                let x = Tensor::from_vec(input.shape(), v.to_vec()).unwrap();
                conv2d(&x, &weights, &bias, stride)
                    .unwrap()
                    .data()
                    .iter()
                    .zip(&cs)
                    .map(|(o, c)| o * c)
                    .sum()
            };
            let num = central_difference_gradient(&mut { loss_wrt_input }, input.data(), 1e-5);
            assert!(max_relative_error(gi.data(), &num) < 1e-5);

            let loss_wrt_weights = |v: &[f64]| {
                let wt = Tensor::from_vec(weights.shape(), v.to_vec()).unwrap();
                conv2d(&input, &wt, &bias, stride)
                    .unwrap()
                    .data()
                    .iter()
                    .zip(&cs)
                    .map(|(o, c)| o * c)
                    .sum()
            };
            let num = central_difference_gradient(&mut { loss_wrt_weights }, weights.data(), 1e-5);
            assert!(max_relative_error(gw.data(), &num) < 1e-5);

            let loss_wrt_bias = |v: &[f64]| {
                let bt = Tensor::from_vec(bias.shape(), v.to_vec()).unwrap();
                conv2d(&input, &weights, &bt, stride)
                    .unwrap()
                    .data()
                    .iter()
                    .zip(&cs)
                    .map(|(o, c)| o * c)
                    .sum()
            };
            let num = central_difference_gradient(&mut { loss_wrt_bias }, bias.data(), 1e-5);
            assert!(max_relative_error(gb.data(), &num) < 1e-5);
        }
    }

    #[test]
    fn maxpool_constant_and_window() {
        let input = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (out, argmax) = maxpool2x2(&input).unwrap();
        assert_eq!(out.data(), &[4.0]);
        assert_eq!(argmax, &[3]);

        let constant = Tensor::from_vec(&[1, 1, 4, 4], vec![0.5; 16]).unwrap();
        let (out, _) = maxpool2x2(&constant).unwrap();
        assert_eq!(out.shape(), &[1, 1, 2, 2]);
        assert!(out.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn maxpool_rejects_odd_dims() {
        let input = Tensor::zeros(&[1, 1, 3, 4]);
        assert!(matches!(maxpool2x2(&input), Err(AutodiffError::Contract(_))));
    }

    #[test]
    fn maxpool_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let input = randn(&[1, 2, 4, 4], &mut rng);
        let (out, argmax) = maxpool2x2(&input).unwrap();
        let cs = coeffs(out.numel());
        let upstream = Tensor::from_vec(out.shape(), cs.clone()).unwrap();
        let gi = maxpool2x2_backward(&upstream, &argmax, input.shape());
        let num = central_difference_gradient(
            &mut |v: &[f64]| {
                let x = Tensor::from_vec(input.shape(), v.to_vec()).unwrap();
                maxpool2x2(&x).unwrap().0.data().iter().zip(&cs).map(|(o, c)| o * c).sum()
            },
            input.data(),
            1e-5,
        );
        assert!(max_relative_error(gi.data(), &num) < 1e-5);
    }

    #[test]
    fn upsample_duplicates_and_backward_sums() {
        let input = Tensor::from_vec(&[1, 1, 1, 2], vec![3.0, 5.0]).unwrap();
        let out = upsample2x(&input).unwrap();
        assert_eq!(out.data(), &[3.0, 3.0, 5.0, 5.0, 3.0, 3.0, 5.0, 5.0]);
        let g = Tensor::from_vec(&[1, 1, 2, 4], (1..=8).map(f64::from).collect()).unwrap();
        let gi = upsample2x_backward(&g);
        assert_eq!(gi.data(), &[1.0 + 2.0 + 5.0 + 6.0, 3.0 + 4.0 + 7.0 + 8.0]);
    }

    #[test]
    fn dense_identity_and_bias() {
        let input = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let eye = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let zero_b = Tensor::zeros(&[2]);
        assert_eq!(dense(&input, &eye, &zero_b).unwrap().data(), input.data());

        let zero_w = Tensor::zeros(&[2, 3]);
        let b = Tensor::from_vec(&[3], vec![0.1, 0.2, 0.3]).unwrap();
        let out = dense(&input, &zero_w, &b).unwrap();
        assert_eq!(out.data(), &[0.1, 0.2, 0.3, 0.1, 0.2, 0.3]);
    }

    #[test]
    fn dense_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let input = randn(&[3, 5], &mut rng);
        let weights = randn(&[5, 4], &mut rng);
        let bias = randn(&[4], &mut rng);
        let out = dense(&input, &weights, &bias).unwrap();
        let cs = coeffs(out.numel());
        let upstream = Tensor::from_vec(out.shape(), cs.clone()).unwrap();
        let (gi, gw, gb) = dense_backward(&upstream, &input, &weights);

        let num = central_difference_gradient(
            &mut |v: &[f64]| {
                let x = Tensor::from_vec(input.shape(), v.to_vec()).unwrap();
                dense(&x, &weights, &bias).unwrap().data().iter().zip(&cs).map(|(o, c)| o * c).sum()
            },
            input.data(),
            1e-5,
        );
        assert!(max_relative_error(gi.data(), &num) < 1e-5);

        let num = central_difference_gradient(
            &mut |v: &[f64]| {
                let w = Tensor::from_vec(weights.shape(), v.to_vec()).unwrap();
                dense(&input, &w, &bias).unwrap().data().iter().zip(&cs).map(|(o, c)| o * c).sum()
            },
            weights.data(),
            1e-5,
        );
        assert!(max_relative_error(gw.data(), &num) < 1e-5);

        let num = central_difference_gradient(
            &mut |v: &[f64]| {
                let b = Tensor::from_vec(bias.shape(), v.to_vec()).unwrap();
                dense(&input, &weights, &b).unwrap().data().iter().zip(&cs).map(|(o, c)| o * c).sum()
            },
            bias.data(),
            1e-5,
        );
        assert!(max_relative_error(gb.data(), &num) < 1e-5);
    }

    #[test]
    fn activation_point_values() {
        let x = Tensor::from_vec(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let s = sigmoid(&Tensor::scalar(0.0));
        assert_abs_diff_eq!(s.data()[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn softmax_equal_logits_is_uniform() {
        let x = Tensor::from_vec(&[1, 3, 1, 1], vec![0.7, 0.7, 0.7]).unwrap();
        let y = softmax_channels(&x).unwrap();
        for &v in y.data() {
            assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn softmax_sums_to_one_tightly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = randn(&[2, 3, 4, 4], &mut rng);
        let y = softmax_channels(&x).unwrap();
        let hw = 16;
        for i in 0..2 {
            for p in 0..hw {
                let sum: f64 = (0..3).map(|k| y.data()[(i * 3 + k) * hw + p]).sum();
                assert!((sum - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn sigmoid_softmax_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = randn(&[1, 3, 2, 2], &mut rng);
        let cs = coeffs(x.numel());

        let y = sigmoid(&x);
        let upstream = Tensor::from_vec(x.shape(), cs.clone()).unwrap();
        let gi = sigmoid_backward(&upstream, &y);
        let num = central_difference_gradient(
            &mut |v: &[f64]| {
                let t = Tensor::from_vec(x.shape(), v.to_vec()).unwrap();
                sigmoid(&t).data().iter().zip(&cs).map(|(o, c)| o * c).sum()
            },
            x.data(),
            1e-5,
        );
        assert!(max_relative_error(gi.data(), &num) < 1e-5);

        let y = softmax_channels(&x).unwrap();
        let gi = softmax_channels_backward(&upstream, &y);
        let num = central_difference_gradient(
            &mut |v: &[f64]| {
                let t = Tensor::from_vec(x.shape(), v.to_vec()).unwrap();
                softmax_channels(&t).unwrap().data().iter().zip(&cs).map(|(o, c)| o * c).sum()
            },
            x.data(),
            1e-5,
        );
        assert!(max_relative_error(gi.data(), &num) < 1e-5);

        let gi = relu_backward(&upstream, &x);
        let num = central_difference_gradient(
            &mut |v: &[f64]| {
                let t = Tensor::from_vec(x.shape(), v.to_vec()).unwrap();
                relu(&t).data().iter().zip(&cs).map(|(o, c)| o * c).sum()
            },
            x.data(),
            1e-5,
        );
        assert!(max_relative_error(gi.data(), &num) < 1e-5);
    }

    #[test]
    fn dice_loss_perfect_prediction_is_zero() {
        let target = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let loss = soft_dice_loss(&target, &target, 1.0).unwrap();
        assert_eq!(loss.item(), 0.0);
    }

    #[test]
    fn dice_loss_all_zero_prediction() {
        // pred = 0, target has N = 3 foreground pixels: loss = 1 - e/(N+e).
        let pred = Tensor::zeros(&[1, 1, 2, 2]);
        let target = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 1.0, 1.0, 0.0]).unwrap();
        let eps = 0.5;
        let loss = soft_dice_loss(&pred, &target, eps).unwrap();
        assert_abs_diff_eq!(loss.item(), 1.0 - eps / (3.0 + eps), epsilon = 1e-15);
    }

    #[test]
    fn dice_loss_multiclass_skips_background_channel() {
        // Channel 0 mismatch must not affect the loss.
        let mut pred_a = vec![0.0; 12];
        let mut pred_b = vec![0.0; 12];
        let mut target = vec![0.0; 12];
        // channel 1 (indices 4..8) and channel 2 (8..12) identical to target
        for i in 4..12 {
            pred_a[i] = 0.5;
            pred_b[i] = 0.5;
            target[i] = (i % 2) as f64;
        }
        pred_a[0] = 0.9; // background channel differs
        pred_b[0] = 0.1;
        let t = Tensor::from_vec(&[1, 3, 2, 2], target).unwrap();
        let la = soft_dice_loss(&Tensor::from_vec(&[1, 3, 2, 2], pred_a).unwrap(), &t, 1.0).unwrap();
        let lb = soft_dice_loss(&Tensor::from_vec(&[1, 3, 2, 2], pred_b).unwrap(), &t, 1.0).unwrap();
        assert_eq!(la.item(), lb.item());
    }

    #[test]
    fn dice_loss_stays_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let p: Vec<f64> = (0..16).map(|_| rng.random_range(0.0..1.0)).collect();
            let t: Vec<f64> = (0..16).map(|_| f64::from(rng.random_bool(0.4))).collect();
            let pred = Tensor::from_vec(&[1, 1, 4, 4], p).unwrap();
            let target = Tensor::from_vec(&[1, 1, 4, 4], t).unwrap();
            let loss = soft_dice_loss(&pred, &target, 1.0).unwrap().item();
            assert!((0.0..=1.0).contains(&loss));
        }
    }

    #[test]
    fn dice_loss_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for shape in [vec![1usize, 1, 4, 4], vec![2, 3, 3, 3]] {
            let n: usize = shape.iter().product();
            let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.95)).collect();
            let t: Vec<f64> = (0..n).map(|_| f64::from(rng.random_bool(0.5))).collect();
            let pred = Tensor::from_vec(&shape, p).unwrap();
            let target = Tensor::from_vec(&shape, t).unwrap();
            let grad = soft_dice_loss_backward(&pred, &target, 1.0).unwrap();
            let num = central_difference_gradient(
                &mut |v: &[f64]| {
                    let x = Tensor::from_vec(&shape, v.to_vec()).unwrap();
                    soft_dice_loss(&x, &target, 1.0).unwrap().item()
                },
                pred.data(),
                1e-5,
            );
            assert!(max_relative_error(grad.data(), &num) < 1e-5);
        }
    }
}
