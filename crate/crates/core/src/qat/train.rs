//! One optimization step of task loss plus MRACos, and quantized evaluation.

use super::model::{Gradients, ToyModel};
use super::task::Dataset;
use crate::codebook::Codebook;
use crate::compressor::hard_compress;
use crate::error::{Error, Result};
use crate::regularizer::mracos;

/// Plain SGD with optional heavy-ball momentum.
#[derive(Debug, Clone)]
pub struct Sgd {
    momentum: f64,
    velocity: Option<Gradients>,
    steps: u64,
}

impl Sgd {
    pub fn new(momentum: f64) -> Self {
        Self {
            momentum,
            velocity: None,
            steps: 0,
        }
    }

    /// Steps applied so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Drops the momentum buffer.
    pub fn reset(&mut self) {
        self.velocity = None;
    }

    pub fn apply(&mut self, model: &mut ToyModel, grads: &Gradients, lr: f64) {
        self.steps += 1;
        let update = if self.momentum > 0.0 {
            let v = self.velocity.get_or_insert_with(|| Gradients::zeros_like(model));
            for (vl, gl) in v.weights.iter_mut().zip(&grads.weights) {
                vl.iter_mut().zip(gl).for_each(|(v, g)| *v = self.momentum * *v + g);
            }
            for (vl, gl) in v.bias.iter_mut().zip(&grads.bias) {
                vl.iter_mut().zip(gl).for_each(|(v, g)| *v = self.momentum * *v + g);
            }
            &*v
        } else {
            grads
        };
        for (l, layer) in model.layers_mut().iter_mut().enumerate() {
            for (w, g) in layer.weights.values_mut().iter_mut().zip(&update.weights[l]) {
                *w -= lr * g;
            }
            for (b, g) in layer.bias.iter_mut().zip(&update.bias[l]) {
                *b -= lr * g;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub task: f64,
    pub reg: f64,
}

impl StepLosses {
    pub fn total(&self) -> f64 {
        self.task + self.reg
    }
}

/// Task MSE plus, for every layer with a codebook, its MRACos penalty, and
/// the gradient of the sum. With `normalize_reg` each layer's penalty is
/// divided by its weight count.
pub fn objective(
    model: &ToyModel,
    batch: &Dataset,
    codebooks: Option<&[Option<Codebook>]>,
    normalize_reg: bool,
) -> (StepLosses, Gradients) {
    let (task, mut grads) = model.loss_and_gradients(batch);
    let mut reg = 0.0;
    if let Some(cbs) = codebooks {
        for ((layer, cb), gw) in model.layers().iter().zip(cbs).zip(&mut grads.weights) {
            let Some(cb) = cb else { continue };
            let res = mracos(&layer.weights, cb);
            let norm = if normalize_reg {
                1.0 / layer.weights.len() as f64
            } else {
                1.0
            };
            reg += norm * res.loss;
            for (g, r) in gw.iter_mut().zip(&res.grad) {
                *g += norm * r;
            }
        }
    }
    (StepLosses { task, reg }, grads)
}

/// Computes the combined objective on `batch` and applies one SGD update.
pub fn train_step(
    model: &mut ToyModel,
    opt: &mut Sgd,
    batch: &Dataset,
    codebooks: Option<&[Option<Codebook>]>,
    lr: f64,
    normalize_reg: bool,
) -> Result<StepLosses> {
    let (losses, grads) = objective(model, batch, codebooks, normalize_reg);
    let step = opt.steps() + 1;
    if !losses.total().is_finite() {
        return Err(Error::Divergence {
            step,
            msg: format!("loss is {} (task {}, reg {})", losses.total(), losses.task, losses.reg),
        });
    }
    opt.apply(model, &grads, lr);
    if !model.is_finite() {
        return Err(Error::Divergence {
            step,
            msg: "parameters became non-finite".into(),
        });
    }
    Ok(losses)
}

/// Copy of `model` with every layer that has a codebook hard-compressed.
pub fn compress_model(model: &ToyModel, codebooks: &[Option<Codebook>]) -> ToyModel {
    let mut out = model.clone();
    for (layer, cb) in out.layers_mut().iter_mut().zip(codebooks) {
        if let Some(cb) = cb {
            layer.weights = hard_compress(&layer.weights, cb).weights;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizedEval {
    pub float_loss: f64,
    pub quantized_loss: f64,
}

impl QuantizedEval {
    /// Quantization-induced degradation: quantized minus float loss.
    pub fn degradation(&self) -> f64 {
        self.quantized_loss - self.float_loss
    }
}

/// Loss of the model as is and after hard compression of its quantized layers.
pub fn evaluate_quantized(model: &ToyModel, codebooks: &[Option<Codebook>], data: &Dataset) -> QuantizedEval {
    QuantizedEval {
        float_loss: model.loss(data),
        quantized_loss: compress_model(model, codebooks).loss(data),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::LambdaSchedule;
    use crate::qat::model::Dense;
    use crate::tensor::WeightTensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn momentum_reset_clears_velocity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = ToyModel::init(&[2, 1], &mut rng).unwrap();
        let data = Dataset::new(2, 1, vec![1.0, 2.0], vec![3.0]).unwrap();
        let mut opt = Sgd::new(0.9);
        train_step(&mut model, &mut opt, &data, None, 0.01, false).unwrap();
        assert!(opt.velocity.is_some());
        opt.reset();
        assert!(opt.velocity.is_none());
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn divergence_is_reported() {
        let layer = Dense {
            weights: WeightTensor::new("w", vec![1, 1], vec![1e200]).unwrap(),
            bias: vec![0.0],
        };
        let mut model = ToyModel::from_layers(vec![layer]).unwrap();
        let data = Dataset::new(1, 1, vec![1e200], vec![0.0]).unwrap();
        let err = train_step(&mut model, &mut Sgd::new(0.0), &data, None, 0.1, false);
        assert!(matches!(err, Err(Error::Divergence { step: 1, .. })));
    }

    #[test]
    fn converged_weights_do_not_degrade() {
        let cb = Codebook::from_numerators(2, 1.0, vec![-64, 0, 64], &LambdaSchedule::Shared(1.0)).unwrap();
        let layer = Dense {
            weights: WeightTensor::new("w", vec![1, 3], vec![-0.5, 0.0, 0.5]).unwrap(),
            bias: vec![0.1],
        };
        let model = ToyModel::from_layers(vec![layer]).unwrap();
        let data = Dataset::new(3, 1, vec![0.3, -0.2, 0.9, 1.0, 0.5, -0.5], vec![0.0, 1.0]).unwrap();
        let eval = evaluate_quantized(&model, &[Some(cb)], &data);
        assert_eq!(eval.degradation(), 0.0);
    }
}
