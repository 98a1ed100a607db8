//! INT8-grid Lloyd-Max codebooks.
//!
//! A [`Codebook`] holds a per-tensor scale `S` and a strictly increasing list
//! of INT8 numerators `k`; centroid `j` is `S * k_j / 128`. Each centroid is
//! covered by exactly one [`Region`] whose absolute-cosine term peaks on it.

mod grid;
mod lloyd;
mod text;

pub use grid::{derive_regions, snap_to_int8_grid, LambdaSchedule, Region};
pub use lloyd::{fit_lloyd_max, optimal_1d_kmeans, LloydFit, LloydInit, OptimalFit};

pub(crate) use lloyd::nearest_sorted;

use crate::error::{invalid, Error, Result};
use crate::grid_value;
use crate::tensor::{distinct_count, WeightTensor};

/// Alignment tolerance for cosine maxima, in normalized weight units.
const MAXIMA_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    bit_width: u8,
    scale: f64,
    numerators: Vec<i8>,
    regions: Vec<Region>,
}

impl Codebook {
    /// Assembles a codebook and checks every structural invariant: grid
    /// conformance, ordered disjoint regions, one region per centroid, and
    /// cosine maxima that coincide with the region's centroids.
    pub fn new(bit_width: u8, scale: f64, numerators: Vec<i8>, regions: Vec<Region>) -> Result<Self> {
        let cb = Self {
            bit_width,
            scale,
            numerators,
            regions,
        };
        cb.validate()?;
        Ok(cb)
    }

    /// Codebook over `numerators` with regions from [`derive_regions`].
    pub fn from_numerators(
        bit_width: u8,
        scale: f64,
        numerators: Vec<i8>,
        lambda: &LambdaSchedule,
    ) -> Result<Self> {
        let regions = derive_regions(&numerators, scale, lambda)?;
        Self::new(bit_width, scale, numerators, regions)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidCodebook(m));
        if !(1..=8).contains(&self.bit_width) {
            return bad(format!("bit width {} outside [1, 8]", self.bit_width));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return bad(format!("scale {} must be finite and positive", self.scale));
        }
        let k = self.numerators.len();
        if k == 0 || k > 1usize << self.bit_width {
            return bad(format!("{k} centroids do not fit {} bits", self.bit_width));
        }
        if self.numerators.windows(2).any(|w| w[0] >= w[1]) {
            return bad("numerators must be strictly increasing".into());
        }
        for (i, r) in self.regions.iter().enumerate() {
            if !(r.lo.is_finite() && r.hi.is_finite() && r.lo < r.hi) {
                return bad(format!("region {i} has empty or non-finite bounds"));
            }
            if !(r.theta.is_finite() && r.theta > 0.0) {
                return bad(format!("region {i} has non-positive theta"));
            }
            if !(r.lambda.is_finite() && r.lambda >= 0.0) {
                return bad(format!("region {i} has negative lambda"));
            }
            if !r.phase.is_finite() {
                return bad(format!("region {i} has non-finite phase"));
            }
        }
        if self.regions.windows(2).any(|w| w[0].hi > w[1].lo) {
            return bad("regions must be ordered and disjoint".into());
        }

        let mut per_region = vec![0usize; self.regions.len()];
        let mut prev: Option<(usize, f64)> = None;
        for &num in &self.numerators {
            let m = grid_value(self.scale, num);
            let Some(r) = self.region_of(m) else {
                return bad(format!("centroid {num}/128 is not covered by any region"));
            };
            let region = &self.regions[r];
            let u = f64::from(num) / 128.0;
            if (1.0 - region.angle(m, self.scale).cos().abs()) > MAXIMA_TOL {
                return bad(format!("centroid {num}/128 is not a cosine maximum of region {r}"));
            }
            if let Some((pr, pu)) = prev {
                if pr == r && ((u - pu) * region.theta - 1.0).abs() > MAXIMA_TOL {
                    return bad(format!("centroids in region {r} are not one period apart"));
                }
            }
            per_region[r] += 1;
            prev = Some((r, u));
        }
        for (i, r) in self.regions.iter().enumerate() {
            let maxima = maxima_in(r, self.scale);
            if maxima != per_region[i] {
                return bad(format!(
                    "region {i} has {maxima} cosine maxima but {} centroids",
                    per_region[i]
                ));
            }
        }
        Ok(())
    }

    pub fn bit_width(&self) -> u8 {
        self.bit_width
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn numerators(&self) -> &[i8] {
        &self.numerators
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    /// Number of centroids `K`.
    pub fn len(&self) -> usize {
        self.numerators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.numerators.is_empty()
    }

    pub fn centroid(&self, j: usize) -> f64 {
        grid_value(self.scale, self.numerators[j])
    }

    pub fn centroids(&self) -> Vec<f64> {
        self.numerators.iter().map(|&k| grid_value(self.scale, k)).collect()
    }

    /// Index of the region containing `w`, if any.
    pub fn region_of(&self, w: f64) -> Option<usize> {
        let i = self.regions.partition_point(|r| r.hi <= w);
        (i < self.regions.len() && self.regions[i].lo <= w).then_some(i)
    }

    /// Smallest gap between consecutive numerators; 1 for a single centroid.
    pub fn min_gap(&self) -> i32 {
        self.numerators
            .windows(2)
            .map(|w| i32::from(w[1]) - i32::from(w[0]))
            .min()
            .unwrap_or(1)
    }

    /// Same centroids and regions with a new regularization schedule.
    pub fn with_lambda(&self, lambda: &LambdaSchedule) -> Result<Self> {
        let lambdas = match lambda {
            LambdaSchedule::Shared(l) => vec![*l; self.regions.len()],
            LambdaSchedule::PerRegion(ls) if ls.len() == self.regions.len() => ls.clone(),
            LambdaSchedule::PerRegion(ls) => {
                return Err(invalid(format!(
                    "lambda schedule has {} entries for {} regions",
                    ls.len(),
                    self.regions.len()
                )))
            }
        };
        let regions = self
            .regions
            .iter()
            .zip(lambdas)
            .map(|(r, lambda)| Region { lambda, ..*r })
            .collect();
        Self::new(self.bit_width, self.scale, self.numerators.clone(), regions)
    }
}

/// Number of lattice points `phase + j / theta` inside the region, after a
/// small inward shift so that a maximum sitting exactly on `hi` is excluded
/// and one sitting exactly on `lo` is kept.
fn maxima_in(r: &Region, scale: f64) -> usize {
    let lo = (r.lo / scale - r.phase) * r.theta - MAXIMA_TOL;
    let hi = (r.hi / scale - r.phase) * r.theta - MAXIMA_TOL;
    let first = lo.ceil();
    let end = hi.ceil();
    if end > first {
        (end - first) as usize
    } else {
        0
    }
}

/// How the per-tensor scale `S` is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScaleMode {
    /// `S = max |w|`, so normalized weights span `[-1, 1]`.
    MaxAbs,
    /// A caller-supplied scale (1.0 for pre-normalized weights).
    Fixed(f64),
}

/// Target centroid count for a bit width `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CentroidCount {
    /// `2^b - 1`: odd, so the grid can center on zero.
    #[default]
    Odd,
    /// `2^b`.
    Full,
}

impl CentroidCount {
    pub fn for_bits(self, bit_width: u8) -> usize {
        let full = 1usize << bit_width;
        match self {
            CentroidCount::Odd => (full - 1).max(1),
            CentroidCount::Full => full,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodebookConfig {
    pub bit_width: u8,
    pub lambda: LambdaSchedule,
    pub scale_mode: ScaleMode,
    pub centroids: CentroidCount,
    pub max_iters: usize,
    /// Absolute MSE-improvement threshold, applied to normalized weights.
    pub tol: f64,
}

impl Default for CodebookConfig {
    fn default() -> Self {
        Self {
            bit_width: 5,
            lambda: LambdaSchedule::default(),
            scale_mode: ScaleMode::MaxAbs,
            centroids: CentroidCount::Odd,
            max_iters: 200,
            tol: 1e-12,
        }
    }
}

impl CodebookConfig {
    pub fn with_bits(bit_width: u8) -> Self {
        Self {
            bit_width,
            ..Self::default()
        }
    }
}

/// A fitted codebook together with the unsnapped Lloyd-Max solution.
#[derive(Debug, Clone, PartialEq)]
pub struct CodebookFit {
    pub codebook: Codebook,
    /// Lloyd-Max centroids before grid snapping, in real units.
    pub lloyd_centroids: Vec<f64>,
    /// Lloyd-Max MSE per weight before snapping, in real units.
    pub lloyd_mse: f64,
    pub iterations: usize,
}

/// Scale selection, Lloyd-Max fitting, INT8 snapping and region derivation.
///
/// Lloyd runs on the normalized weights `w / S`. If the tensor has fewer
/// distinct values than the target centroid count, one centroid per distinct
/// value is fitted instead.
pub fn fit_codebook(weights: &WeightTensor, config: &CodebookConfig) -> Result<CodebookFit> {
    if !(1..=8).contains(&config.bit_width) {
        return Err(invalid(format!("bit width {} outside [1, 8]", config.bit_width)));
    }
    if weights.is_empty() {
        return Err(invalid("weight tensor is empty"));
    }
    let scale = match config.scale_mode {
        ScaleMode::MaxAbs => {
            let m = weights.values().iter().fold(0.0f64, |m, w| m.max(w.abs()));
            if m > 0.0 {
                m
            } else {
                1.0
            }
        }
        ScaleMode::Fixed(s) => s,
    };
    if !(scale.is_finite() && scale > 0.0) {
        return Err(invalid("scale must be finite and positive"));
    }
    let normalized: Vec<f64> = weights.values().iter().map(|w| w / scale).collect();
    let k = config
        .centroids
        .for_bits(config.bit_width)
        .min(distinct_count(&normalized));
    let fit = lloyd::lloyd_on_slice(&normalized, k, config.max_iters, config.tol, &LloydInit::Quantiles)?;
    let numerators = snap_to_int8_grid(&fit.centroids, 1.0)?;
    let codebook = Codebook::from_numerators(config.bit_width, scale, numerators, &config.lambda)?;
    Ok(CodebookFit {
        codebook,
        lloyd_centroids: fit.centroids.iter().map(|c| c * scale).collect(),
        lloyd_mse: fit.mse * scale * scale,
        iterations: fit.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn region(lo: f64, hi: f64, theta: f64, phase: f64) -> Region {
        Region {
            lo,
            hi,
            theta,
            lambda: 1.0,
            phase,
        }
    }

    #[test]
    fn validates_bit_width_and_count() {
        let l = LambdaSchedule::Shared(0.0);
        assert!(Codebook::from_numerators(0, 1.0, vec![0], &l).is_err());
        assert!(Codebook::from_numerators(9, 1.0, vec![0], &l).is_err());
        assert!(Codebook::from_numerators(1, 1.0, vec![-1, 0, 1], &l).is_err());
        assert!(Codebook::from_numerators(2, 1.0, vec![-1, 0, 1], &l).is_ok());
    }

    #[test]
    fn rejects_misaligned_region() {
        // Maxima of theta = 2 with zero phase sit at multiples of 0.5, not 0.25.
        let err = Codebook::new(2, 1.0, vec![32], vec![region(0.0, 0.5, 2.0, 0.0)]);
        assert!(err.is_err());
    }

    #[test]
    fn rejects_extra_maxima() {
        // Region [-1, 1) with theta 4 has 8 maxima but only 2 centroids.
        let err = Codebook::new(2, 1.0, vec![0, 32], vec![region(-1.0, 1.0, 4.0, 0.0)]);
        assert!(err.is_err());
    }

    #[test]
    fn rejects_uncovered_centroid() {
        let err = Codebook::new(2, 1.0, vec![0, 64], vec![region(-0.25, 0.25, 2.0, 0.0)]);
        assert!(err.is_err());
    }

    #[test]
    fn region_lookup_half_open() {
        let cb = Codebook::from_numerators(3, 1.0, vec![-64, 0, 32, 64], &LambdaSchedule::Shared(1.0))
            .unwrap();
        assert_eq!(cb.regions().len(), 2);
        // The shared centroid 0 starts the second region.
        assert_eq!(cb.region_of(0.0), Some(1));
        assert_eq!(cb.region_of(-1e-12), Some(0));
        assert_eq!(cb.region_of(-0.75), Some(0));
        assert_eq!(cb.region_of(-0.7501), None);
        assert_eq!(cb.region_of(0.625), None);
        assert_eq!(cb.min_gap(), 32);
    }

    #[test]
    fn bimodal_one_bit_centers_on_zero() {
        let values: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 0.5 } else { -0.5 }).collect();
        let w = WeightTensor::from_vec("w", values).unwrap();
        let fit = fit_codebook(&w, &CodebookConfig::with_bits(1)).unwrap();
        assert_eq!(fit.codebook.numerators(), &[0]);
    }

    #[test]
    fn few_distinct_values_shrink_k() {
        let w = WeightTensor::from_vec("w", vec![-1.0, 0.0, 1.0, 1.0]).unwrap();
        let fit = fit_codebook(&w, &CodebookConfig::with_bits(5)).unwrap();
        assert_eq!(fit.codebook.numerators(), &[-128, 0, 127]);
    }

    #[test]
    fn with_lambda_replaces_weights() {
        let cb = Codebook::from_numerators(3, 1.0, vec![-64, 0, 32, 64], &LambdaSchedule::Shared(1.0))
            .unwrap();
        let cb2 = cb.with_lambda(&LambdaSchedule::PerRegion(vec![0.5, 0.25])).unwrap();
        assert_eq!(cb2.regions()[0].lambda, 0.5);
        assert_eq!(cb2.regions()[1].lambda, 0.25);
        assert_eq!(cb2.numerators(), cb.numerators());
    }
}
