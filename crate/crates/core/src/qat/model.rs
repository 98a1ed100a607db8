//! Small tanh multilayer perceptron with hand-written backpropagation.

use rand::Rng;

use super::task::Dataset;
use crate::error::{invalid, Result};
use crate::tensor::WeightTensor;

/// Fully connected layer; `weights` is `out x in`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: WeightTensor,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn in_dim(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weights.shape()[0]
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        let w = self.weights.values();
        let n_in = self.in_dim();
        out.clear();
        out.extend(self.bias.iter().enumerate().map(|(o, &b)| {
            let row = &w[o * n_in..(o + 1) * n_in];
            row.iter().zip(x).fold(b, |acc, (wi, xi)| acc + wi * xi)
        }));
    }
}

/// Dense layers with tanh between them and a linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    layers: Vec<Dense>,
}

/// Parameter gradients laid out like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &ToyModel) -> Self {
        Self {
            weights: model.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: model.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }
}

impl ToyModel {
    /// Glorot-uniform weights and zero biases for layer widths `sizes`
    /// (input first, output last).
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(invalid("model needs at least an input and an output width, all positive"));
        }
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, pair)| {
                let (n_in, n_out) = (pair[0], pair[1]);
                let limit = (6.0 / (n_in + n_out) as f64).sqrt();
                let values = (0..n_in * n_out)
                    .map(|_| rng.random_range(-limit..limit))
                    .collect();
                Dense {
                    weights: WeightTensor::new(format!("layer{i}"), vec![n_out, n_in], values)
                        .expect("finite init"),
                    bias: vec![0.0; n_out],
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(invalid("model needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.shape().len() != 2 || l.bias.len() != l.out_dim() {
                return Err(invalid(format!("layer {i} has inconsistent shapes")));
            }
            if i > 0 && layers[i - 1].out_dim() != l.in_dim() {
                return Err(invalid(format!("layer {i} input does not match layer {}", i - 1)));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.values().iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite())
        })
    }

    /// Activations of every layer, input first.
    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::new();
            layer.apply(&acts[i], &mut out);
            if i < last {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(out);
        }
        acts
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.activations(x).pop().unwrap()
    }

    /// Mean squared error over samples and outputs; 0 for an empty set.
    pub fn loss(&self, data: &Dataset) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let mut total = 0.0;
        for i in 0..data.len() {
            let y = self.forward(data.input(i));
            total += y
                .iter()
                .zip(data.target(i))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        total / (data.len() * data.output_dim()) as f64
    }

    /// Task loss and its gradient with respect to every parameter.
    pub fn loss_and_gradients(&self, data: &Dataset) -> (f64, Gradients) {
        let mut grads = Gradients::zeros_like(self);
        if data.is_empty() {
            return (0.0, grads);
        }
        let norm = (data.len() * data.output_dim()) as f64;
        let last = self.layers.len() - 1;
        let mut total = 0.0;
        for i in 0..data.len() {
            let acts = self.activations(data.input(i));
            let mut delta: Vec<f64> = acts[last + 1]
                .iter()
                .zip(data.target(i))
                .map(|(a, b)| {
                    total += (a - b) * (a - b);
                    2.0 * (a - b) / norm
                })
                .collect();
            for l in (0..=last).rev() {
                let layer = &self.layers[l];
                let input = &acts[l];
                let n_in = layer.in_dim();
                let gw = &mut grads.weights[l];
                for (o, &d) in delta.iter().enumerate() {
                    grads.bias[l][o] += d;
                    for (g, &x) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
                        *g += d * x;
                    }
                }
                if l == 0 {
                    break;
                }
                let w = layer.weights.values();
                // Back through the weights, then through tanh of layer l - 1.
                delta = (0..n_in)
                    .map(|j| {
                        let back: f64 = delta
                            .iter()
                            .enumerate()
                            .map(|(o, &d)| d * w[o * n_in + j])
                            .sum();
                        back * (1.0 - input[j] * input[j])
                    })
                    .collect();
            }
        }
        (total / norm, grads)
    }
}
