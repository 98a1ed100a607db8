//! Hard compression onto the codebook and the convergence rate it drives.

use std::fmt::Write as _;

use crate::codebook::{nearest_sorted, Codebook};
use crate::error::{invalid, Result};
use crate::tensor::WeightTensor;

/// Weights snapped to their nearest centroid, plus the centroid indices.
#[derive(Debug, Clone, PartialEq)]
pub struct HardCompressed {
    pub weights: WeightTensor,
    /// Codebook position (`0..K`) of every weight.
    pub indices: Vec<u8>,
}

/// Nearest-centroid index for every weight; exact midpoints go to the
/// smaller numerator, and weights beyond the outermost centroids clip to them.
pub fn assign(weights: &[f64], codebook: &Codebook) -> Vec<u8> {
    let centroids = codebook.centroids();
    weights
        .iter()
        .map(|&w| nearest_sorted(&centroids, w) as u8)
        .collect()
}

/// Replaces every weight by its nearest centroid `S * k / 128`.
///
/// Idempotent: a weight already on a centroid is left bit-for-bit unchanged.
pub fn hard_compress(weights: &WeightTensor, codebook: &Codebook) -> HardCompressed {
    let indices = assign(weights.values(), codebook);
    let centroids = codebook.centroids();
    let mut out = weights.clone();
    for (w, &i) in out.values_mut().iter_mut().zip(&indices) {
        *w = centroids[usize::from(i)];
    }
    HardCompressed {
        weights: out,
        indices,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionRate {
    pub numerator: i8,
    pub count: usize,
    /// Fraction of the partition within squared distance epsilon of its
    /// centroid; 1 for an empty partition.
    pub gamma: f64,
}

/// Quantization convergence rate of a tensor against a codebook.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub epsilon: f64,
    pub per_partition: Vec<PartitionRate>,
    /// Count-weighted mean of the per-partition rates.
    pub overall_gamma: f64,
}

impl ConvergenceReport {
    /// Weights within squared distance epsilon of their centroid.
    pub fn converged(&self) -> usize {
        self.per_partition
            .iter()
            .map(|p| (p.gamma * p.count as f64).round() as usize)
            .sum()
    }

    pub fn total(&self) -> usize {
        self.per_partition.iter().map(|p| p.count).sum()
    }

    pub fn csv_header(k: usize) -> String {
        let mut s = String::from("tick,overall_gamma");
        for j in 0..k {
            let _ = write!(s, ",gamma_{j}");
        }
        s
    }

    pub fn csv_row(&self, tick: u64) -> String {
        let mut s = format!("{tick},{}", self.overall_gamma);
        for p in &self.per_partition {
            let _ = write!(s, ",{}", p.gamma);
        }
        s
    }
}

/// Default convergence threshold: 1% of the squared smallest centroid gap,
/// `(S * g_min / 128)^2 / 100`.
pub fn default_epsilon(codebook: &Codebook) -> f64 {
    let gap = codebook.scale() * f64::from(codebook.min_gap()) / 128.0;
    gap * gap / 100.0
}

/// Partitions the weights by nearest centroid and reports, per partition,
/// the fraction with `(w - m_k)^2 < epsilon`. Epsilon bounds the squared
/// distance.
pub fn convergence_rate(
    weights: &WeightTensor,
    codebook: &Codebook,
    epsilon: f64,
) -> Result<ConvergenceReport> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(invalid("epsilon must be finite and positive"));
    }
    let centroids = codebook.centroids();
    let mut counts = vec![0usize; centroids.len()];
    let mut hits = vec![0usize; centroids.len()];
    for &w in weights.values() {
        let j = nearest_sorted(&centroids, w);
        counts[j] += 1;
        let d = w - centroids[j];
        if d * d < epsilon {
            hits[j] += 1;
        }
    }
    let per_partition = codebook
        .numerators()
        .iter()
        .zip(counts.iter().zip(&hits))
        .map(|(&numerator, (&count, &hit))| PartitionRate {
            numerator,
            count,
            gamma: if count == 0 {
                1.0
            } else {
                hit as f64 / count as f64
            },
        })
        .collect();
    let n = weights.len();
    let overall_gamma = if n == 0 {
        1.0
    } else {
        hits.iter().sum::<usize>() as f64 / n as f64
    };
    Ok(ConvergenceReport {
        epsilon,
        per_partition,
        overall_gamma,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScheduleUnit {
    #[default]
    Step,
    Epoch,
}

/// Hard-compression period.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompressionSchedule {
    period: u64,
    start_after: u64,
    unit: ScheduleUnit,
}

impl CompressionSchedule {
    pub fn new(period: u64, start_after: u64, unit: ScheduleUnit) -> Result<Self> {
        if period == 0 {
            return Err(invalid("compression period must be at least 1"));
        }
        Ok(Self {
            period,
            start_after,
            unit,
        })
    }

    pub fn period(&self) -> u64 {
        self.period
    }

    pub fn start_after(&self) -> u64 {
        self.start_after
    }

    pub fn unit(&self) -> ScheduleUnit {
        self.unit
    }
}

/// True when `tick` is `start_after + j * period` for some `j >= 0`.
pub fn should_compress(schedule: &CompressionSchedule, tick: u64) -> bool {
    tick >= schedule.start_after && (tick - schedule.start_after).is_multiple_of(schedule.period)
}
