//! Fixed-graph multilayer perceptron with exact reverse-mode gradients.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adam::ParamSet;
use crate::tensor::{dot, Shape};
use crate::{Error, Matrix, Result};

/// Activation applied after every hidden layer. The output layer is always
/// the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            // written out so NaN propagates; f64::max would drop it
            Activation::Relu => if z < 0.0 { 0.0 } else { z },
            Activation::Identity => z,
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// One affine layer; `weights` is `out x in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    widths: Vec<usize>,
    hidden_activation: Activation,
    layers: Vec<DenseLayer>,
}

/// Activations recorded by [`MlpParams::forward`]. Borrowing the parameters
/// ties the tape to the exact weights that produced it.
#[derive(Debug, Clone)]
pub struct MlpTape<'a> {
    params: &'a MlpParams,
    /// `inputs[l]` is the input to layer `l`.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each hidden layer.
    pre_activations: Vec<Vec<f64>>,
}

impl MlpParams {
    /// All-zero network with the given layer widths (`[in, hidden.., out]`).
    pub fn zeros(widths: &[usize], hidden_activation: Activation) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Config(format!(
                "MLP needs at least an input and output width, all positive; got {widths:?}"
            )));
        }
        let layers = widths
            .windows(2)
            .map(|w| DenseLayer {
                weights: Matrix::zeros(w[1], w[0]),
                bias: alloc::vec![0.0; w[1]],
            })
            .collect();
        Ok(MlpParams {
            widths: widths.to_vec(),
            hidden_activation,
            layers,
        })
    }

    /// Uniform `[-a, a]` weights with `a = sqrt(6 / (fan_in + fan_out))`, zero
    /// biases. Layers are filled in order, row-major.
    pub fn glorot<R: Rng + ?Sized>(
        widths: &[usize],
        hidden_activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut params = Self::zeros(widths, hidden_activation)?;
        for layer in &mut params.layers {
            let bound = libm::sqrt(6.0 / (layer.inputs() + layer.outputs()) as f64);
            for w in layer.weights.as_mut_slice() {
                *w = rng.random_range(-bound..=bound);
            }
        }
        Ok(params)
    }

    /// Builds a network from explicit layers, validating that shapes compose.
    pub fn from_layers(layers: Vec<DenseLayer>, hidden_activation: Activation) -> Result<Self> {
        let Some(first) = layers.first() else {
            return Err(Error::Config("MLP needs at least one layer".into()));
        };
        let mut widths = alloc::vec![first.inputs()];
        for (l, layer) in layers.iter().enumerate() {
            if layer.inputs() != *widths.last().unwrap() {
                return Err(Error::shape(
                    "MlpParams::from_layers",
                    format!("layer {l} input width {}", widths.last().unwrap()),
                    layer.inputs(),
                ));
            }
            if layer.bias.len() != layer.outputs() {
                return Err(Error::shape(
                    "MlpParams::from_layers",
                    format!("layer {l} bias length {}", layer.outputs()),
                    layer.bias.len(),
                ));
            }
            widths.push(layer.outputs());
        }
        Ok(MlpParams {
            widths,
            hidden_activation,
            layers,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    /// `sum(in_l * out_l + out_l)` over layers.
    pub fn param_count(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// A zero-valued network with the same architecture, used as a gradient
    /// accumulator.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.widths, self.hidden_activation).expect("widths already validated")
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_width() {
            return Err(Error::shape(
                "mlp_forward input",
                Shape(self.input_width(), 1),
                Shape(input.len(), 1),
            ));
        }
        Ok(())
    }

    /// Forward pass recording everything needed for [`MlpTape::backward`].
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, MlpTape<'_>)> {
        self.check_input(input)?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(last);
        let mut current = input.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let z = affine(layer, &current);
            inputs.push(current);
            if l == last {
                current = z;
            } else {
                current = z.iter().map(|&v| self.hidden_activation.apply(v)).collect();
                pre_activations.push(z);
            }
        }
        Ok((
            current,
            MlpTape {
                params: self,
                inputs,
                pre_activations,
            },
        ))
    }

    /// Forward pass without a tape.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let last = self.layers.len() - 1;
        let mut current = input.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let z = affine(layer, &current);
            current = if l == last {
                z
            } else {
                z.into_iter().map(|v| self.hidden_activation.apply(v)).collect()
            };
        }
        Ok(current)
    }
}

#[inline]
fn affine(layer: &DenseLayer, x: &[f64]) -> Vec<f64> {
    (0..layer.outputs())
        .map(|r| dot(layer.weights.row(r), x) + layer.bias[r])
        .collect()
}

impl MlpTape<'_> {
    pub fn params(&self) -> &MlpParams {
        self.params
    }

    /// Reverse pass. Parameter gradients are *added* into `grads`, which must
    /// share this network's architecture; the input gradient is returned.
    pub fn backward_into(&self, output_gradient: &[f64], grads: &mut MlpParams) -> Result<Vec<f64>> {
        let params = self.params;
        if output_gradient.len() != params.output_width() {
            return Err(Error::shape(
                "mlp_backward output gradient",
                params.output_width(),
                output_gradient.len(),
            ));
        }
        if grads.widths != params.widths {
            return Err(Error::Usage(format!(
                "gradient accumulator has widths {:?}, tape was recorded for {:?}",
                grads.widths, params.widths
            )));
        }
        if self.inputs.len() != params.layers.len() {
            return Err(Error::Usage("tape is incomplete for this network".into()));
        }
        let mut delta = output_gradient.to_vec();
        for l in (0..params.layers.len()).rev() {
            let layer = &params.layers[l];
            let input = &self.inputs[l];
            let g = &mut grads.layers[l];
            for (r, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.bias[r] += d;
                for (w, &x) in g.weights.row_mut(r).iter_mut().zip(input) {
                    *w += d * x;
                }
            }
            let mut upstream = alloc::vec![0.0; layer.inputs()];
            for (r, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (u, &w) in upstream.iter_mut().zip(layer.weights.row(r)) {
                    *u += d * w;
                }
            }
            if l > 0 {
                let act = params.hidden_activation;
                for (u, &z) in upstream.iter_mut().zip(&self.pre_activations[l - 1]) {
                    *u *= act.derivative(z);
                }
            }
            delta = upstream;
        }
        Ok(delta)
    }

    /// Reverse pass into fresh gradient storage.
    pub fn backward(&self, output_gradient: &[f64]) -> Result<(MlpParams, Vec<f64>)> {
        let mut grads = self.params.zeros_like();
        let input_gradient = self.backward_into(output_gradient, &mut grads)?;
        Ok((grads, input_gradient))
    }
}

impl ParamSet for MlpParams {
    fn blocks(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }
}
