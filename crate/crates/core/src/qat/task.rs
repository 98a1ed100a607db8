//! Seeded synthetic regression task.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Result};

/// Row-major inputs and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    input_dim: usize,
    output_dim: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
}

impl Dataset {
    pub fn new(input_dim: usize, output_dim: usize, inputs: Vec<f64>, targets: Vec<f64>) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 {
            return Err(invalid("dataset dimensions must be positive"));
        }
        if !inputs.len().is_multiple_of(input_dim)
            || !targets.len().is_multiple_of(output_dim)
            || inputs.len() / input_dim != targets.len() / output_dim
        {
            return Err(invalid("inputs and targets disagree on the sample count"));
        }
        Ok(Self {
            input_dim,
            output_dim,
            inputs,
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len() / self.input_dim
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i * self.output_dim..(i + 1) * self.output_dim]
    }

    /// The samples at `rows`, in that order.
    pub fn select(&self, rows: &[usize]) -> Dataset {
        let mut inputs = Vec::with_capacity(rows.len() * self.input_dim);
        let mut targets = Vec::with_capacity(rows.len() * self.output_dim);
        for &r in rows {
            inputs.extend_from_slice(self.input(r));
            targets.extend_from_slice(self.target(r));
        }
        Dataset {
            input_dim: self.input_dim,
            output_dim: self.output_dim,
            inputs,
            targets,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub train: Dataset,
    pub val: Dataset,
}

/// Hidden width of the teacher network.
const TEACHER_HIDDEN: usize = 24;

/// Regression data from a seeded random teacher: inputs uniform in
/// `[-1, 1]^d`, targets `sum_j a_j tanh(u_j . x + c_j)` plus Gaussian noise.
/// Training samples are drawn first, then validation samples, from one
/// stream.
pub fn generate_task(seed: u64, input_dim: usize, n_train: usize, n_val: usize, noise: f64) -> Result<Task> {
    if input_dim == 0 {
        return Err(invalid("input dimension must be positive"));
    }
    if n_train == 0 {
        return Err(invalid("need at least one training sample"));
    }
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(invalid("noise must be finite and non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let in_scale = 1.5 / (input_dim as f64).sqrt();
    let proj: Vec<f64> = (0..TEACHER_HIDDEN * input_dim)
        .map(|_| in_scale * unit.sample(&mut rng))
        .collect();
    let offsets: Vec<f64> = (0..TEACHER_HIDDEN).map(|_| 0.5 * unit.sample(&mut rng)).collect();
    let out_scale = 1.0 / (TEACHER_HIDDEN as f64).sqrt();
    let readout: Vec<f64> = (0..TEACHER_HIDDEN)
        .map(|_| out_scale * unit.sample(&mut rng))
        .collect();

    let mut sample = |n: usize| {
        let mut inputs = Vec::with_capacity(n * input_dim);
        let mut targets = Vec::with_capacity(n);
        for _ in 0..n {
            let x: Vec<f64> = (0..input_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: f64 = (0..TEACHER_HIDDEN)
                .map(|j| {
                    let row = &proj[j * input_dim..(j + 1) * input_dim];
                    let z: f64 = row.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + offsets[j];
                    readout[j] * z.tanh()
                })
                .sum();
            targets.push(y + noise * unit.sample(&mut rng));
            inputs.extend(x);
        }
        Dataset {
            input_dim,
            output_dim: 1,
            inputs,
            targets,
        }
    };
    let train = sample(n_train);
    let val = sample(n_val);
    Ok(Task { train, val })
}
