//! Sequential layer wrappers over the op kernels.
//!
//! Each layer owns its parameters and, during training, caches whatever
//! its backward pass needs. `infer` is the cache-free path for a built
//! model shared across threads; `forward` + `backward` drive training.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ops;
use super::{AutodiffError, Result, Tensor};

/// Checkpointable description of one layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub stride: u8,
    pub in_channels: u32,
    pub out_channels: u32,
    /// Dense layers only; 0 elsewhere.
    pub units: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    Conv3x3,
    MaxPool2x2,
    UpConv,
    Dense,
    Relu,
    Sigmoid,
    SoftmaxChannels,
}

impl LayerKind {
    pub fn code(self) -> u8 {
        match self {
            LayerKind::Conv3x3 => 0,
            LayerKind::MaxPool2x2 => 1,
            LayerKind::UpConv => 2,
            LayerKind::Dense => 3,
            LayerKind::Relu => 4,
            LayerKind::Sigmoid => 5,
            LayerKind::SoftmaxChannels => 6,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            0 => LayerKind::Conv3x3,
            1 => LayerKind::MaxPool2x2,
            2 => LayerKind::UpConv,
            3 => LayerKind::Dense,
            4 => LayerKind::Relu,
            5 => LayerKind::Sigmoid,
            6 => LayerKind::SoftmaxChannels,
            other => {
                return Err(AutodiffError::Checkpoint(format!("unknown layer code {other}")))
            }
        })
    }
}

/// He-style uniform init: `U(-sqrt(6/fan_in), sqrt(6/fan_in))`.
fn he_uniform(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let bound = (6.0 / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::from_vec(shape, data).expect("shape/data agree").with_grad()
}

pub enum Layer {
    Conv {
        weights: Tensor,
        bias: Tensor,
        stride: usize,
        cache: Option<Tensor>,
    },
    /// Nearest-neighbor 2x upsample followed by a stride-1 3x3 conv.
    UpConv {
        weights: Tensor,
        bias: Tensor,
        cache: Option<Tensor>, // upsampled input
    },
    Dense {
        weights: Tensor,
        bias: Tensor,
        cache: Option<Tensor>,
    },
    MaxPool {
        cache: Option<(Vec<u32>, Vec<usize>)>, // argmax, input shape
    },
    Relu {
        cache: Option<Tensor>, // input
    },
    Sigmoid {
        cache: Option<Tensor>, // output
    },
    SoftmaxChannels {
        cache: Option<Tensor>, // output
    },
    /// `[N,C,H,W] -> [N,C*H*W]`; restored by backward.
    Flatten {
        cache: Option<Vec<usize>>,
    },
    /// `[N,D] -> [N,C,H,W]` with `D = C*H*W`.
    Unflatten {
        channels: usize,
        height: usize,
        width: usize,
    },
}

impl Layer {
    pub fn conv(in_channels: usize, out_channels: usize, stride: usize, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = in_channels * 9;
        Layer::Conv {
            weights: he_uniform(&[out_channels, in_channels, 3, 3], fan_in, rng),
            bias: Tensor::zeros(&[out_channels]).with_grad(),
            stride,
            cache: None,
        }
    }

    pub fn upconv(in_channels: usize, out_channels: usize, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = in_channels * 9;
        Layer::UpConv {
            weights: he_uniform(&[out_channels, in_channels, 3, 3], fan_in, rng),
            bias: Tensor::zeros(&[out_channels]).with_grad(),
            cache: None,
        }
    }

    pub fn dense(in_units: usize, out_units: usize, rng: &mut ChaCha8Rng) -> Self {
        Layer::Dense {
            weights: he_uniform(&[in_units, out_units], in_units, rng),
            bias: Tensor::zeros(&[out_units]).with_grad(),
            cache: None,
        }
    }

    /// Cache-free forward pass.
    pub fn infer(&self, input: Tensor) -> Result<Tensor> {
        match self {
            Layer::Conv { weights, bias, stride, .. } => {
                ops::conv2d(&input, weights, bias, *stride)
            }
            Layer::UpConv { weights, bias, .. } => {
                let up = ops::upsample2x(&input)?;
                ops::conv2d(&up, weights, bias, 1)
            }
            Layer::Dense { weights, bias, .. } => ops::dense(&input, weights, bias),
            Layer::MaxPool { .. } => Ok(ops::maxpool2x2(&input)?.0),
            Layer::Relu { .. } => Ok(ops::relu(&input)),
            Layer::Sigmoid { .. } => Ok(ops::sigmoid(&input)),
            Layer::SoftmaxChannels { .. } => ops::softmax_channels(&input),
            Layer::Flatten { .. } => {
                let n = input.shape()[0];
                let d = input.numel() / n;
                input.into_reshaped(&[n, d])
            }
            Layer::Unflatten { channels, height, width } => {
                let n = input.shape()[0];
                input.into_reshaped(&[n, *channels, *height, *width])
            }
        }
    }

    /// Forward pass that caches what backward will need (the input moves
    /// into the cache, so training adds no extra copies).
    pub fn forward(&mut self, input: Tensor) -> Result<Tensor> {
        match self {
            Layer::Conv { weights, bias, stride, cache } => {
                let out = ops::conv2d(&input, weights, bias, *stride)?;
                *cache = Some(input);
                Ok(out)
            }
            Layer::UpConv { weights, bias, cache } => {
                let up = ops::upsample2x(&input)?;
                let out = ops::conv2d(&up, weights, bias, 1)?;
                *cache = Some(up);
                Ok(out)
            }
            Layer::Dense { weights, bias, cache } => {
                let out = ops::dense(&input, weights, bias)?;
                *cache = Some(input);
                Ok(out)
            }
            Layer::MaxPool { cache } => {
                let (out, argmax) = ops::maxpool2x2(&input)?;
                *cache = Some((argmax, input.shape().to_vec()));
                Ok(out)
            }
            Layer::Relu { cache } => {
                let out = ops::relu(&input);
                *cache = Some(input);
                Ok(out)
            }
            Layer::Sigmoid { cache } => {
                let out = ops::sigmoid(&input);
                *cache = Some(out.clone());
                Ok(out)
            }
            Layer::SoftmaxChannels { cache } => {
                let out = ops::softmax_channels(&input)?;
                *cache = Some(out.clone());
                Ok(out)
            }
            Layer::Flatten { cache } => {
                let n = input.shape()[0];
                let d = input.numel() / n;
                *cache = Some(input.shape().to_vec());
                input.into_reshaped(&[n, d])
            }
            Layer::Unflatten { channels, height, width } => {
                let n = input.shape()[0];
                input.into_reshaped(&[n, *channels, *height, *width])
            }
        }
    }

    /// Consumes the cache from the last `forward`, accumulates parameter
    /// gradients and returns the gradient with respect to the layer input.
    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let missing = || AutodiffError::Contract("backward before forward".into());
        match self {
            Layer::Conv { weights, bias, stride, cache } => {
                let input = cache.take().ok_or_else(missing)?;
                let (gi, gw, gb) = ops::conv2d_backward(grad_out, &input, weights, *stride);
                weights.accumulate_grad(gw.data());
                bias.accumulate_grad(gb.data());
                Ok(gi)
            }
            Layer::UpConv { weights, bias, cache } => {
                let up = cache.take().ok_or_else(missing)?;
                let (g_up, gw, gb) = ops::conv2d_backward(grad_out, &up, weights, 1);
                weights.accumulate_grad(gw.data());
                bias.accumulate_grad(gb.data());
                Ok(ops::upsample2x_backward(&g_up))
            }
            Layer::Dense { weights, bias, cache } => {
                let input = cache.take().ok_or_else(missing)?;
                let (gi, gw, gb) = ops::dense_backward(grad_out, &input, weights);
                weights.accumulate_grad(gw.data());
                bias.accumulate_grad(gb.data());
                Ok(gi)
            }
            Layer::MaxPool { cache } => {
                let (argmax, shape) = cache.take().ok_or_else(missing)?;
                Ok(ops::maxpool2x2_backward(grad_out, &argmax, &shape))
            }
            Layer::Relu { cache } => {
                let input = cache.take().ok_or_else(missing)?;
                Ok(ops::relu_backward(grad_out, &input))
            }
            Layer::Sigmoid { cache } => {
                let output = cache.take().ok_or_else(missing)?;
                Ok(ops::sigmoid_backward(grad_out, &output))
            }
            Layer::SoftmaxChannels { cache } => {
                let output = cache.take().ok_or_else(missing)?;
                Ok(ops::softmax_channels_backward(grad_out, &output))
            }
            Layer::Flatten { cache } => {
                let shape = cache.take().ok_or_else(missing)?;
                grad_out.reshaped(&shape)
            }
            Layer::Unflatten { .. } => {
                let n = grad_out.shape()[0];
                grad_out.reshaped(&[n, grad_out.numel() / n])
            }
        }
    }

    /// Trainable parameters in declaration order (weights before bias).
    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Conv { weights, bias, .. }
            | Layer::UpConv { weights, bias, .. }
            | Layer::Dense { weights, bias, .. } => vec![weights, bias],
            _ => Vec::new(),
        }
    }

    pub fn parameters(&self) -> Vec<&Tensor> {
        match self {
            Layer::Conv { weights, bias, .. }
            | Layer::UpConv { weights, bias, .. }
            | Layer::Dense { weights, bias, .. } => vec![weights, bias],
            _ => Vec::new(),
        }
    }

    /// Spec table entry; reshape plumbing carries no spec.
    pub fn spec(&self) -> Option<LayerSpec> {
        match self {
            Layer::Conv { weights, stride, .. } => Some(LayerSpec {
                kind: LayerKind::Conv3x3,
                stride: *stride as u8,
                in_channels: weights.shape()[1] as u32,
                out_channels: weights.shape()[0] as u32,
                units: 0,
            }),
            Layer::UpConv { weights, .. } => Some(LayerSpec {
                kind: LayerKind::UpConv,
                stride: 1,
                in_channels: weights.shape()[1] as u32,
                out_channels: weights.shape()[0] as u32,
                units: 0,
            }),
            Layer::Dense { weights, .. } => Some(LayerSpec {
                kind: LayerKind::Dense,
                stride: 1,
                in_channels: weights.shape()[0] as u32,
                out_channels: 0,
                units: weights.shape()[1] as u32,
            }),
            Layer::MaxPool { .. } => Some(LayerSpec {
                kind: LayerKind::MaxPool2x2,
                stride: 2,
                in_channels: 0,
                out_channels: 0,
                units: 0,
            }),
            Layer::Relu { .. } => Some(LayerSpec {
                kind: LayerKind::Relu,
                stride: 1,
                in_channels: 0,
                out_channels: 0,
                units: 0,
            }),
            Layer::Sigmoid { .. } => Some(LayerSpec {
                kind: LayerKind::Sigmoid,
                stride: 1,
                in_channels: 0,
                out_channels: 0,
                units: 0,
            }),
            Layer::SoftmaxChannels { .. } => Some(LayerSpec {
                kind: LayerKind::SoftmaxChannels,
                stride: 1,
                in_channels: 0,
                out_channels: 0,
                units: 0,
            }),
            Layer::Flatten { .. } | Layer::Unflatten { .. } => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, DOMAIN_INIT};

    #[test]
    fn forward_backward_round_trip_through_a_small_stack() {
        let mut rng = stream_rng(3, DOMAIN_INIT, 0);
        let mut layers = vec![
            Layer::conv(1, 2, 2, &mut rng),
            Layer::Relu { cache: None },
            Layer::Flatten { cache: None },
            Layer::dense(2 * 2 * 2, 3, &mut rng),
            Layer::Sigmoid { cache: None },
        ];
        let input = Tensor::from_vec(&[1, 1, 4, 4], (0..16).map(|i| i as f64 / 16.0).collect())
            .unwrap();
        let mut x = input.clone();
        for layer in layers.iter_mut() {
            x = layer.forward(x).unwrap();
        }
        assert_eq!(x.shape(), &[1, 3]);
        let mut g = Tensor::from_vec(&[1, 3], vec![1.0, -0.5, 0.25]).unwrap();
        for layer in layers.iter_mut().rev() {
            g = layer.backward(&g).unwrap();
        }
        assert_eq!(g.shape(), input.shape());
        // parameter grads were accumulated
        for layer in layers.iter_mut() {
            for p in layer.parameters_mut() {
                if p.requires_grad() {
                    assert!(p.grad().is_some());
                }
            }
        }
    }

    #[test]
    fn infer_equals_forward() {
        let mut rng = stream_rng(4, DOMAIN_INIT, 1);
        let mut layer = Layer::upconv(2, 3, &mut rng);
        let input = Tensor::from_vec(&[1, 2, 3, 3], (0..18).map(|i| i as f64 * 0.1).collect())
            .unwrap();
        let a = layer.infer(input.clone()).unwrap();
        let b = layer.forward(input).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.shape(), &[1, 3, 6, 6]);
    }
}
