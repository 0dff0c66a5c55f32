//! Recorded forward graph and its reverse sweep.

use super::layers::{
    add_channel_bias, channel_bias_grad, from_channel_major, gemm, softmax_rows, to_channel_major, Activation,
    LayerConfig, Sweep,
};
use super::params::{Layer, ParamId, ParamStore};
use super::{NnError, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Input,
    Conv {
        sweep: Sweep,
        weight: ParamId,
        bias: ParamId,
        out_channels: usize,
        /// Gathered input windows.
        cols: Vec<f64>,
    },
    TransConv {
        sweep: Sweep,
        weight: ParamId,
        bias: ParamId,
        in_channels: usize,
        /// Input in channel-major layout.
        x_cm: Vec<f64>,
    },
    Dense {
        weight: ParamId,
        bias: ParamId,
    },
    LeakyRelu {
        slope: f64,
    },
    Identity,
    Softmax,
    Reshape,
    Concat {
        widths: Vec<usize>,
    },
}

struct Node {
    op: Op,
    inputs: Vec<usize>,
    value: Tensor,
}

/// Forward-pass recorder over a fixed parameter set.
pub struct Tape<'a> {
    store: &'a ParamStore,
    nodes: Vec<Node>,
}

/// Result of a reverse sweep.
#[derive(Debug, Clone)]
pub struct Gradients {
    /// One tensor per parameter of the store, in declaration order.
    pub params: Vec<Tensor>,
    vars: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient reaching a recorded value, if any flowed into it.
    pub fn wrt(&self, var: Var) -> Option<&Tensor> {
        self.vars.get(var.0).and_then(|g| g.as_ref())
    }
}

impl<'a> Tape<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Self {
            store,
            nodes: Vec::new(),
        }
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    fn push(&mut self, op: Op, inputs: Vec<usize>, value: Tensor, name: &'static str) -> Result<Var, NnError> {
        value.ensure_finite(name)?;
        self.nodes.push(Node { op, inputs, value });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn input(&mut self, value: Tensor) -> Result<Var, NnError> {
        self.push(Op::Input, Vec::new(), value, "input")
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var, NnError> {
        let v = self.nodes[x.0].value.clone().reshaped(shape)?;
        self.push(Op::Reshape, vec![x.0], v, "reshape")
    }

    /// Concatenate `[batch, features]` values along the feature axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let batch = self.nodes[parts[0].0].value.batch();
        let mut widths = Vec::new();
        for p in parts {
            let s = self.nodes[p.0].value.shape();
            if s.len() != 2 || s[0] != batch {
                return Err(NnError::Shape {
                    op: "concat",
                    expected: vec![batch, 0],
                    got: s.to_vec(),
                });
            }
            widths.push(s[1]);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(batch * total);
        for b in 0..batch {
            for p in parts {
                data.extend_from_slice(self.nodes[p.0].value.row(b));
            }
        }
        let v = Tensor::new(vec![batch, total], data)?;
        self.push(Op::Concat { widths }, parts.iter().map(|p| p.0).collect(), v, "concat")
    }

    pub fn layer(&mut self, layer: &Layer, x: Var) -> Result<Var, NnError> {
        let input = &self.nodes[x.0].value;
        let out_shape = layer.config.output_shape(input.shape())?;
        let params = |l: &Layer| -> Result<(ParamId, ParamId), NnError> {
            match (l.weight, l.bias) {
                (Some(w), Some(b)) => Ok((w, b)),
                _ => Err(NnError::MissingParameters(l.config.name())),
            }
        };
        match layer.config {
            LayerConfig::Conv1d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let (weight, bias) = params(layer)?;
                let sweep = Sweep {
                    batch: input.batch(),
                    channels: in_channels,
                    len: input.shape()[2],
                    kernel,
                    stride,
                    padding,
                    positions: out_shape[2],
                };
                let cols = sweep.im2col(input.data());
                let n = sweep.batch * sweep.positions;
                let mut y_cm = vec![0.0; out_channels * n];
                gemm(
                    out_channels,
                    in_channels * kernel,
                    n,
                    self.store.value(weight).data(),
                    false,
                    &cols,
                    false,
                    0.0,
                    &mut y_cm,
                );
                let mut y = from_channel_major(&y_cm, sweep.batch, out_channels, sweep.positions);
                add_channel_bias(&mut y, self.store.value(bias).data(), sweep.positions);
                let v = Tensor::new(out_shape, y)?;
                let op = Op::Conv {
                    sweep,
                    weight,
                    bias,
                    out_channels,
                    cols,
                };
                self.push(op, vec![x.0], v, "conv1d")
            }
            LayerConfig::TransConv1d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let (weight, bias) = params(layer)?;
                let batch = input.batch();
                let len = input.shape()[2];
                let x_cm = to_channel_major(input.data(), batch, in_channels, len);
                // Windows of the output are the columns of Wᵀ·x.
                let sweep = Sweep {
                    batch,
                    channels: out_channels,
                    len: out_shape[2],
                    kernel,
                    stride,
                    padding,
                    positions: len,
                };
                let mut cols = vec![0.0; out_channels * kernel * batch * len];
                gemm(
                    out_channels * kernel,
                    in_channels,
                    batch * len,
                    self.store.value(weight).data(),
                    true,
                    &x_cm,
                    false,
                    0.0,
                    &mut cols,
                );
                let mut y = sweep.col2im(&cols);
                add_channel_bias(&mut y, self.store.value(bias).data(), sweep.len);
                let v = Tensor::new(out_shape, y)?;
                let op = Op::TransConv {
                    sweep,
                    weight,
                    bias,
                    in_channels,
                    x_cm,
                };
                self.push(op, vec![x.0], v, "trans_conv1d")
            }
            LayerConfig::FullyConnected { inputs, outputs } => {
                let (weight, bias) = params(layer)?;
                let batch = input.batch();
                let mut y = vec![0.0; batch * outputs];
                gemm(
                    batch,
                    inputs,
                    outputs,
                    input.data(),
                    false,
                    self.store.value(weight).data(),
                    true,
                    0.0,
                    &mut y,
                );
                let b = self.store.value(bias).data();
                for row in y.chunks_exact_mut(outputs) {
                    for (v, bb) in row.iter_mut().zip(b) {
                        *v += bb;
                    }
                }
                let v = Tensor::new(out_shape, y)?;
                self.push(Op::Dense { weight, bias }, vec![x.0], v, "fully_connected")
            }
            LayerConfig::Activation {
                activation: Activation::LeakyRelu { slope },
            } => {
                let y: Vec<f64> = input
                    .data()
                    .iter()
                    .map(|&v| if v > 0.0 { v } else { slope * v })
                    .collect();
                let v = Tensor::new(out_shape, y)?;
                self.push(Op::LeakyRelu { slope }, vec![x.0], v, "leaky_relu")
            }
            LayerConfig::Activation {
                activation: Activation::Identity,
            } => {
                let v = input.clone();
                self.push(Op::Identity, vec![x.0], v, "identity")
            }
            LayerConfig::Softmax => {
                let width = *input.shape().last().unwrap_or(&1);
                let y = softmax_rows(input.data(), width);
                let v = Tensor::new(out_shape, y)?;
                self.push(Op::Softmax, vec![x.0], v, "softmax")
            }
        }
    }

    /// Reverse sweep seeded with `∂loss/∂var` for each listed output. Consumes
    /// the tape.
    pub fn backward(self, seeds: &[(Var, Tensor)]) -> Result<Gradients, NnError> {
        if self.nodes.is_empty() || seeds.is_empty() {
            return Err(NnError::NoForward);
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        for (var, g) in seeds {
            let node = self.nodes.get(var.0).ok_or(NnError::NoForward)?;
            if node.value.shape() != g.shape() {
                return Err(NnError::Shape {
                    op: "backward seed",
                    expected: node.value.shape().to_vec(),
                    got: g.shape().to_vec(),
                });
            }
            g.ensure_finite("backward seed")?;
            accumulate(&mut grads[var.0], g.clone());
        }
        let mut pgrads: Vec<Tensor> = self
            .store
            .params()
            .iter()
            .map(|p| Tensor::zeros(p.value.shape()))
            .collect();

        for idx in (0..self.nodes.len()).rev() {
            let (before, after) = grads.split_at_mut(idx);
            let Some(dy) = after[0].as_ref() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Conv {
                    sweep,
                    weight,
                    bias,
                    out_channels,
                    cols,
                } => {
                    let n = sweep.batch * sweep.positions;
                    let ck = sweep.channels * sweep.kernel;
                    let dy_cm = to_channel_major(dy.data(), sweep.batch, *out_channels, sweep.positions);
                    gemm(
                        *out_channels,
                        n,
                        ck,
                        &dy_cm,
                        false,
                        cols,
                        true,
                        1.0,
                        pgrads[weight.0].data_mut(),
                    );
                    channel_bias_grad(dy.data(), *out_channels, sweep.positions, pgrads[bias.0].data_mut());
                    let mut dcols = vec![0.0; ck * n];
                    gemm(
                        ck,
                        *out_channels,
                        n,
                        self.store.value(*weight).data(),
                        true,
                        &dy_cm,
                        false,
                        0.0,
                        &mut dcols,
                    );
                    let dx = Tensor::new(self.nodes[node.inputs[0]].value.shape().to_vec(), sweep.col2im(&dcols))?;
                    accumulate(&mut before[node.inputs[0]], dx);
                }
                Op::TransConv {
                    sweep,
                    weight,
                    bias,
                    in_channels,
                    x_cm,
                } => {
                    let n = sweep.batch * sweep.positions;
                    let ck = sweep.channels * sweep.kernel;
                    let dcols = sweep.im2col(dy.data());
                    gemm(
                        *in_channels,
                        n,
                        ck,
                        x_cm,
                        false,
                        &dcols,
                        true,
                        1.0,
                        pgrads[weight.0].data_mut(),
                    );
                    channel_bias_grad(dy.data(), sweep.channels, sweep.len, pgrads[bias.0].data_mut());
                    let mut dx_cm = vec![0.0; *in_channels * n];
                    gemm(
                        *in_channels,
                        ck,
                        n,
                        self.store.value(*weight).data(),
                        false,
                        &dcols,
                        false,
                        0.0,
                        &mut dx_cm,
                    );
                    let dx = from_channel_major(&dx_cm, sweep.batch, *in_channels, sweep.positions);
                    let dx = Tensor::new(self.nodes[node.inputs[0]].value.shape().to_vec(), dx)?;
                    accumulate(&mut before[node.inputs[0]], dx);
                }
                Op::Dense { weight, bias } => {
                    let x = &self.nodes[node.inputs[0]].value;
                    let (batch, inputs) = (x.shape()[0], x.shape()[1]);
                    let outputs = dy.shape()[1];
                    gemm(
                        outputs,
                        batch,
                        inputs,
                        dy.data(),
                        true,
                        x.data(),
                        false,
                        1.0,
                        pgrads[weight.0].data_mut(),
                    );
                    let db = pgrads[bias.0].data_mut();
                    for row in dy.data().chunks_exact(outputs) {
                        for (d, g) in db.iter_mut().zip(row) {
                            *d += g;
                        }
                    }
                    let mut dx = vec![0.0; batch * inputs];
                    gemm(
                        batch,
                        outputs,
                        inputs,
                        dy.data(),
                        false,
                        self.store.value(*weight).data(),
                        false,
                        0.0,
                        &mut dx,
                    );
                    accumulate(&mut before[node.inputs[0]], Tensor::new(x.shape().to_vec(), dx)?);
                }
                Op::LeakyRelu { slope } => {
                    let x = &self.nodes[node.inputs[0]].value;
                    let dx: Vec<f64> = x
                        .data()
                        .iter()
                        .zip(dy.data())
                        .map(|(&v, &g)| if v > 0.0 { g } else { slope * g })
                        .collect();
                    accumulate(&mut before[node.inputs[0]], Tensor::new(x.shape().to_vec(), dx)?);
                }
                Op::Identity => accumulate(&mut before[node.inputs[0]], dy.clone()),
                Op::Softmax => {
                    let q = &node.value;
                    let width = *q.shape().last().unwrap_or(&1);
                    let mut dx = vec![0.0; q.len()];
                    for ((qr, gr), dr) in q
                        .data()
                        .chunks_exact(width)
                        .zip(dy.data().chunks_exact(width))
                        .zip(dx.chunks_exact_mut(width))
                    {
                        let inner: f64 = qr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for ((d, &qv), &gv) in dr.iter_mut().zip(qr).zip(gr) {
                            *d = qv * (gv - inner);
                        }
                    }
                    accumulate(&mut before[node.inputs[0]], Tensor::new(q.shape().to_vec(), dx)?);
                }
                Op::Reshape => {
                    let shape = self.nodes[node.inputs[0]].value.shape().to_vec();
                    accumulate(&mut before[node.inputs[0]], dy.clone().reshaped(shape)?);
                }
                Op::Concat { widths } => {
                    let total: usize = widths.iter().sum();
                    let batch = dy.shape()[0];
                    let mut off = 0;
                    for (&w, &inp) in widths.iter().zip(&node.inputs) {
                        let mut part = Vec::with_capacity(batch * w);
                        for b in 0..batch {
                            part.extend_from_slice(&dy.data()[b * total + off..][..w]);
                        }
                        accumulate(&mut before[inp], Tensor::new(vec![batch, w], part)?);
                        off += w;
                    }
                }
            }
        }
        for g in &pgrads {
            g.ensure_finite("backward")?;
        }
        Ok(Gradients {
            params: pgrads,
            vars: grads,
        })
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(t) => t.add_assign(&g),
        None => *slot = Some(g),
    }
}
