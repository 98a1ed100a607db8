//! Multi-regional absolute cosine (MRACos) regularizer.
//!
//! For a weight `w` inside region `r` the penalty is
//! `lambda_r * (1 - |cos(pi * theta_r * (w / S - phase_r))|)`; it vanishes on
//! every codebook centroid and peaks at `lambda_r` halfway between two of
//! them. Weights outside all regions contribute neither loss nor gradient
//! and are only counted; the hard compressor clips them.

use std::f64::consts::PI;

use crate::codebook::{Codebook, Region};
use crate::tensor::WeightTensor;

#[derive(Debug, Clone, PartialEq)]
pub struct RegularizerResult {
    pub loss: f64,
    /// d(loss)/d(w_i), aligned with the weight tensor.
    pub grad: Vec<f64>,
    /// Weights that fall outside every region.
    pub clipped_count: usize,
}

/// Neumaier-compensated running sum; order is fixed by the caller.
#[derive(Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Signed offset of `w` from the nearest cosine maximum of region `r`, in
/// periods, within `[-0.5, 0.5]`. `|cos(pi t)|` equals `cos(pi d)` for
/// `d = t - round(t)`, so working with `d` keeps the loss and gradient exact
/// near the maxima and makes the kinks at `d = +-0.5` exactly detectable.
#[inline]
fn offset(r: &Region, w: f64, scale: f64) -> f64 {
    let t = r.theta * (w / scale - r.phase);
    t - t.round()
}

/// Penalty of a single weight, `None` when it lies outside every region.
#[inline]
pub fn weight_loss(codebook: &Codebook, w: f64) -> Option<f64> {
    let r = &codebook.regions()[codebook.region_of(w)?];
    let half = (0.5 * PI * offset(r, w, codebook.scale())).sin();
    // 1 - cos(pi d) = 2 sin^2(pi d / 2)
    Some(r.lambda * 2.0 * half * half)
}

/// Derivative of [`weight_loss`] with respect to `w`; zero outside all
/// regions and at the kinks halfway between maxima.
///
/// Equal to `lambda * pi * theta * sign(cos x) * sin x / S` with
/// `x = pi * theta * (w / S - phase)`.
#[inline]
pub fn weight_grad(codebook: &Codebook, w: f64) -> f64 {
    let Some(i) = codebook.region_of(w) else {
        return 0.0;
    };
    let r = &codebook.regions()[i];
    let d = offset(r, w, codebook.scale());
    if d.abs() == 0.5 {
        return 0.0;
    }
    r.lambda * PI * r.theta * (PI * d).sin() / codebook.scale()
}

/// Distance in weight units from `w` to the nearest point where the penalty
/// is not differentiable: a region bound, or a kink halfway between two
/// maxima of the region containing `w`.
pub fn distance_to_kink(codebook: &Codebook, w: f64) -> f64 {
    let mut dist = f64::INFINITY;
    for r in codebook.regions() {
        dist = dist.min((w - r.lo).abs()).min((w - r.hi).abs());
    }
    if let Some(i) = codebook.region_of(w) {
        let r = &codebook.regions()[i];
        let d = offset(r, w, codebook.scale());
        dist = dist.min((0.5 - d.abs()) / r.theta * codebook.scale());
    }
    dist
}

/// Sum of per-weight penalties over the tensor.
pub fn mracos_loss(weights: &WeightTensor, codebook: &Codebook) -> f64 {
    let mut acc = CompensatedSum::default();
    for &w in weights.values() {
        if let Some(l) = weight_loss(codebook, w) {
            acc.add(l);
        }
    }
    acc.value()
}

/// Analytic gradient of [`mracos_loss`].
pub fn mracos_grad(weights: &WeightTensor, codebook: &Codebook) -> Vec<f64> {
    weights.values().iter().map(|&w| weight_grad(codebook, w)).collect()
}

/// Loss, gradient and out-of-region count in one pass.
pub fn mracos(weights: &WeightTensor, codebook: &Codebook) -> RegularizerResult {
    let mut acc = CompensatedSum::default();
    let mut clipped_count = 0;
    let grad = weights
        .values()
        .iter()
        .map(|&w| match weight_loss(codebook, w) {
            Some(l) => {
                acc.add(l);
                weight_grad(codebook, w)
            }
            None => {
                clipped_count += 1;
                0.0
            }
        })
        .collect();
    RegularizerResult {
        loss: acc.value(),
        grad,
        clipped_count,
    }
}

/// Peak gradient magnitude `lambda_r * pi * theta_r / S` of each region.
///
/// The peak scales with the cosine frequency, so sparse outer regions pull
/// their weights far more weakly than dense inner ones.
pub fn gradient_decay_profile(codebook: &Codebook) -> Vec<f64> {
    codebook
        .regions()
        .iter()
        .map(|r| r.lambda * PI * r.theta / codebook.scale())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::LambdaSchedule;

    fn t(values: &[f64]) -> WeightTensor {
        WeightTensor::from_vec("w", values.to_vec()).unwrap()
    }

    fn three_peaks(lambda: f64) -> Codebook {
        Codebook::from_numerators(2, 1.0, vec![-64, 0, 64], &LambdaSchedule::Shared(lambda)).unwrap()
    }

    #[test]
    fn zero_at_centroids() {
        let cb = three_peaks(0.3);
        let w = t(&[-0.5, 0.0, 0.5]);
        assert!(mracos_loss(&w, &cb).abs() < 1e-12);
        assert!(mracos_grad(&w, &cb).iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn midpoint_costs_lambda_and_has_zero_subgradient() {
        let cb = three_peaks(0.3);
        let w = t(&[0.25]);
        assert!((mracos_loss(&w, &cb) - 0.3).abs() < 1e-12);
        assert_eq!(weight_grad(&cb, 0.25), 0.0);
        assert_eq!(weight_grad(&cb, -0.25), 0.0);
    }

    #[test]
    fn two_weight_example() {
        // One region covering {0.1, 0.3} with theta = 2, zero phase.
        let cb = Codebook::new(
            2,
            1.0,
            vec![0, 64],
            vec![Region {
                lo: -0.25,
                hi: 0.75,
                theta: 2.0,
                lambda: 5e-4,
                phase: 0.0,
            }],
        )
        .unwrap();
        let expected = 5e-4 * ((1.0 - (0.2 * PI).cos().abs()) + (1.0 - (0.6 * PI).cos().abs()));
        assert!((mracos_loss(&t(&[0.1, 0.3]), &cb) - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn outside_weights_are_counted_not_penalized() {
        let cb = three_peaks(1.0);
        let res = mracos(&t(&[-2.0, 0.1, 0.76]), &cb);
        assert_eq!(res.clipped_count, 2);
        assert_eq!(res.grad[0], 0.0);
        assert_eq!(res.grad[2], 0.0);
        assert!((res.loss - (1.0 - (0.2 * PI).cos().abs())).abs() < 1e-15);
    }

    #[test]
    fn decay_profile_is_linear_in_theta() {
        // Gaps of 1 then 64: theta 128 and theta 2.
        let cb = Codebook::from_numerators(2, 1.0, vec![-1, 0, 64], &LambdaSchedule::Shared(1.0)).unwrap();
        let p = gradient_decay_profile(&cb);
        assert_eq!(p.len(), 2);
        assert!((p[0] / p[1] - 64.0).abs() < 1e-12);
        assert_eq!(gradient_decay_profile(&three_peaks(1.0)).len(), 1);
    }

    #[test]
    fn descent_moves_toward_centroid() {
        let cb = three_peaks(1.0);
        // Between centroid 0 and the midpoint 0.25 on its right.
        for w in [0.01, 0.1, 0.2, 0.24] {
            let g = weight_grad(&cb, w);
            assert!(g > 0.0);
            let stepped = w - 1e-3 * g;
            assert!(stepped.abs() < w);
        }
    }

    #[test]
    fn compensated_sum_beats_naive_on_cancellation() {
        let mut acc = CompensatedSum::default();
        for x in [1e16, 1.0, -1e16] {
            acc.add(x);
        }
        assert_eq!(acc.value(), 1.0);
    }
}
