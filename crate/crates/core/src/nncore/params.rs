use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Activation, LayerConfig};
use super::tape::{Tape, Var};
use super::{NnError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub first_moment: Tensor,
    pub second_moment: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let zeros = Tensor::zeros(value.shape());
        Self {
            name: name.into(),
            grad: zeros.clone(),
            first_moment: zeros.clone(),
            second_moment: zeros,
            value,
        }
    }
}

/// All trainable tensors of a model, in declaration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.params.push(Parameter::new(name, value));
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Create the parameters for `config`, initialised uniformly within
    /// `±sqrt(6 / fan_in)`; biases start at zero.
    pub fn layer(&mut self, name: &str, config: LayerConfig, rng: &mut ChaCha8Rng) -> Layer {
        let shapes = config.param_shapes();
        if shapes.is_empty() {
            return Layer {
                config,
                weight: None,
                bias: None,
            };
        }
        let bound = (6.0 / config.fan_in() as f64).sqrt();
        let n: usize = shapes[0].iter().product();
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
        let weight = self.add(
            format!("{name}.weight"),
            Tensor::new(shapes[0].clone(), w).expect("shape matches"),
        );
        let bias = self.add(format!("{name}.bias"), Tensor::zeros(&shapes[1]));
        Layer {
            config,
            weight: Some(weight),
            bias: Some(bias),
        }
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().fill(0.0);
        }
    }

    /// Add `grads` (one tensor per parameter) into the gradient accumulators.
    pub fn accumulate(&mut self, grads: &[Tensor]) {
        for (p, g) in self.params.iter_mut().zip(grads) {
            p.grad.add_assign(g);
        }
    }

    /// All parameter values concatenated in declaration order.
    pub fn flat_values(&self) -> Vec<f64> {
        self.params
            .iter()
            .flat_map(|p| p.value.data().iter().copied())
            .collect()
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.grad.data().iter().copied()).collect()
    }

    pub fn set_flat_values(&mut self, flat: &[f64]) -> Result<(), NnError> {
        if flat.len() != self.scalar_count() {
            return Err(NnError::Shape {
                op: "set_flat_values",
                expected: vec![self.scalar_count()],
                got: vec![flat.len()],
            });
        }
        let mut off = 0;
        for p in &mut self.params {
            let n = p.value.len();
            p.value.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Names and shapes, for checkpoint headers.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        self.params
            .iter()
            .map(|p| (p.name.clone(), p.value.shape().to_vec()))
            .collect()
    }
}

/// A layer bound to its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub config: LayerConfig,
    pub weight: Option<ParamId>,
    pub bias: Option<ParamId>,
}

impl Layer {
    pub fn stateless(config: LayerConfig) -> Self {
        Self {
            config,
            weight: None,
            bias: None,
        }
    }
}

/// Layers applied in order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

impl Sequential {
    /// Trainable layers from `configs`, each followed by `hidden` except the
    /// last, which is followed by `last` (if any).
    pub fn build(
        store: &mut ParamStore,
        name: &str,
        configs: &[LayerConfig],
        hidden: Activation,
        last: Option<LayerConfig>,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut layers = Vec::new();
        for (i, &c) in configs.iter().enumerate() {
            layers.push(store.layer(&format!("{name}.{i}"), c, rng));
            if i + 1 < configs.len() {
                if hidden != Activation::Identity {
                    layers.push(Layer::stateless(LayerConfig::Activation { activation: hidden }));
                }
            } else if let Some(l) = last {
                layers.push(Layer::stateless(l));
            }
        }
        Self { layers }
    }

    pub fn forward(&self, tape: &mut Tape<'_>, mut x: Var) -> Result<Var, NnError> {
        for l in &self.layers {
            x = tape.layer(l, x)?;
        }
        Ok(x)
    }
}
