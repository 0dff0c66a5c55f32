//! Layer configurations and the batched kernels behind them.
//!
//! Shapes: convolutional tensors are `[batch, channels, length]`, dense ones
//! `[batch, features]`. Conv1D weights are `[out, in, kernel]`; TransConv1D
//! weights are `[in, out, kernel]`, so a TransConv1D sharing a Conv1D's weight
//! array is exactly that convolution's adjoint.

use serde::{Deserialize, Serialize};

use super::NnError;

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu { slope: f64 },
    Identity,
}

impl Default for Activation {
    fn default() -> Self {
        Activation::LeakyRelu {
            slope: DEFAULT_LEAKY_SLOPE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerConfig {
    Conv1d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    TransConv1d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    FullyConnected {
        inputs: usize,
        outputs: usize,
    },
    Activation {
        activation: Activation,
    },
    Softmax,
}

impl LayerConfig {
    pub fn conv(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        Self::Conv1d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        }
    }

    pub fn trans_conv(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        Self::TransConv1d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        }
    }

    pub fn dense(inputs: usize, outputs: usize) -> Self {
        Self::FullyConnected { inputs, outputs }
    }

    pub fn leaky_relu() -> Self {
        Self::Activation {
            activation: Activation::default(),
        }
    }

    /// Output shape for a given input shape, or a shape error.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, NnError> {
        let mismatch = |expected: Vec<usize>| NnError::Shape {
            op: self.name(),
            expected,
            got: input.to_vec(),
        };
        match *self {
            Self::Conv1d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                if input.len() != 3 || input[1] != in_channels || input[2] + 2 * padding < kernel {
                    return Err(mismatch(vec![0, in_channels, kernel.saturating_sub(2 * padding)]));
                }
                Ok(vec![
                    input[0],
                    out_channels,
                    conv_len(input[2], kernel, stride, padding),
                ])
            }
            Self::TransConv1d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                if input.len() != 3 || input[1] != in_channels || input[2] == 0 {
                    return Err(mismatch(vec![0, in_channels, 1]));
                }
                let full = (input[2] - 1) * stride + kernel;
                if full <= 2 * padding {
                    return Err(mismatch(vec![0, in_channels, 1]));
                }
                Ok(vec![input[0], out_channels, full - 2 * padding])
            }
            Self::FullyConnected { inputs, outputs } => {
                if input.len() != 2 || input[1] != inputs {
                    return Err(mismatch(vec![0, inputs]));
                }
                Ok(vec![input[0], outputs])
            }
            Self::Activation { .. } | Self::Softmax => Ok(input.to_vec()),
        }
    }

    /// Weight and bias shapes; empty for parameter-free layers.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            Self::Conv1d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![vec![out_channels, in_channels, kernel], vec![out_channels]],
            Self::TransConv1d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![vec![in_channels, out_channels, kernel], vec![out_channels]],
            Self::FullyConnected { inputs, outputs } => vec![vec![outputs, inputs], vec![outputs]],
            _ => Vec::new(),
        }
    }

    /// Number of inputs feeding each output, for initialisation scaling.
    pub fn fan_in(&self) -> usize {
        match *self {
            Self::Conv1d {
                in_channels, kernel, ..
            } => in_channels * kernel,
            Self::TransConv1d {
                in_channels,
                kernel,
                stride,
                ..
            } => in_channels * kernel.div_ceil(stride),
            Self::FullyConnected { inputs, .. } => inputs,
            _ => 0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Conv1d { .. } => "conv1d",
            Self::TransConv1d { .. } => "trans_conv1d",
            Self::FullyConnected { .. } => "fully_connected",
            Self::Activation { .. } => "activation",
            Self::Softmax => "softmax",
        }
    }
}

pub fn conv_len(len: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    (len + 2 * padding - kernel) / stride + 1
}

/// `c = op(a)·op(b) + beta·c` with `op(a)` m×k and `op(b)` k×n, all row-major.
/// A transposed flag means the operand is stored as its transpose.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, beta: f64, c: &mut [f64]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the assertion above keeps every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Geometry of a strided 1-D window sweep.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Sweep {
    pub batch: usize,
    pub channels: usize,
    /// Length of the signal being windowed.
    pub len: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// Number of window positions.
    pub positions: usize,
}

impl Sweep {
    /// Gather windows of `x: [batch, channels, len]` into
    /// `[channels·kernel, batch·positions]`.
    pub fn im2col(&self, x: &[f64]) -> Vec<f64> {
        let cols_n = self.batch * self.positions;
        let mut cols = vec![0.0; self.channels * self.kernel * cols_n];
        for c in 0..self.channels {
            for k in 0..self.kernel {
                let row = &mut cols[(c * self.kernel + k) * cols_n..][..cols_n];
                for b in 0..self.batch {
                    let src = &x[(b * self.channels + c) * self.len..][..self.len];
                    let dst = &mut row[b * self.positions..][..self.positions];
                    for (t, d) in dst.iter_mut().enumerate() {
                        let pos = (t * self.stride + k) as isize - self.padding as isize;
                        if pos >= 0 && (pos as usize) < self.len {
                            *d = src[pos as usize];
                        }
                    }
                }
            }
        }
        cols
    }

    /// Scatter-add the adjoint of [`Sweep::im2col`].
    pub fn col2im(&self, cols: &[f64]) -> Vec<f64> {
        let cols_n = self.batch * self.positions;
        let mut x = vec![0.0; self.batch * self.channels * self.len];
        for c in 0..self.channels {
            for k in 0..self.kernel {
                let row = &cols[(c * self.kernel + k) * cols_n..][..cols_n];
                for b in 0..self.batch {
                    let dst = &mut x[(b * self.channels + c) * self.len..][..self.len];
                    let src = &row[b * self.positions..][..self.positions];
                    for (t, s) in src.iter().enumerate() {
                        let pos = (t * self.stride + k) as isize - self.padding as isize;
                        if pos >= 0 && (pos as usize) < self.len {
                            dst[pos as usize] += s;
                        }
                    }
                }
            }
        }
        x
    }
}

/// `[batch, channels, len]` → `[channels, batch·len]`.
pub(crate) fn to_channel_major(x: &[f64], batch: usize, channels: usize, len: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for b in 0..batch {
        for c in 0..channels {
            out[(c * batch + b) * len..][..len].copy_from_slice(&x[(b * channels + c) * len..][..len]);
        }
    }
    out
}

/// `[channels, batch·len]` → `[batch, channels, len]`.
pub(crate) fn from_channel_major(x: &[f64], batch: usize, channels: usize, len: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for b in 0..batch {
        for c in 0..channels {
            out[(b * channels + c) * len..][..len].copy_from_slice(&x[(c * batch + b) * len..][..len]);
        }
    }
    out
}

pub(crate) fn add_channel_bias(y: &mut [f64], bias: &[f64], len: usize) {
    for (chunk, i) in y.chunks_exact_mut(len).zip(0..) {
        let b = bias[i % bias.len()];
        for v in chunk {
            *v += b;
        }
    }
}

pub(crate) fn channel_bias_grad(dy: &[f64], channels: usize, len: usize, out: &mut [f64]) {
    for (chunk, i) in dy.chunks_exact(len).zip(0..) {
        out[i % channels] += chunk.iter().sum::<f64>();
    }
}

pub(crate) fn softmax_rows(x: &[f64], width: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (src, dst) in x.chunks_exact(width).zip(out.chunks_exact_mut(width)) {
        let max = src.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (d, s) in dst.iter_mut().zip(src) {
            *d = (s - max).exp();
            sum += *d;
        }
        for d in dst.iter_mut() {
            *d /= sum;
        }
    }
    out
}
