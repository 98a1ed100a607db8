//! INT8 grid snapping and cosine region construction.

use crate::error::{invalid, Result};

/// An interval of weight space carrying one absolute-cosine term.
///
/// `lo` and `hi` are in real weight units and the interval is half-open.
/// `theta` and `phase` act on the normalized weight `u = w / S`: the term is
/// `lambda * (1 - |cos(pi * theta * (u - phase))|)`, with maxima at
/// `phase + j / theta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub lo: f64,
    pub hi: f64,
    pub theta: f64,
    pub lambda: f64,
    /// Normalized position of one cosine maximum (the region's first centroid).
    pub phase: f64,
}

impl Region {
    #[inline]
    pub fn contains(&self, w: f64) -> bool {
        self.lo <= w && w < self.hi
    }

    /// Cosine argument `pi * theta * (w / S - phase)`.
    #[inline]
    pub fn angle(&self, w: f64, scale: f64) -> f64 {
        std::f64::consts::PI * self.theta * (w / scale - self.phase)
    }
}

/// Regularization weight per region.
#[derive(Debug, Clone, PartialEq)]
pub enum LambdaSchedule {
    /// One weight broadcast to every region.
    Shared(f64),
    /// One weight per region, in region order.
    PerRegion(Vec<f64>),
}

impl Default for LambdaSchedule {
    fn default() -> Self {
        LambdaSchedule::Shared(5e-4)
    }
}

impl LambdaSchedule {
    fn resolve(&self, regions: usize) -> Result<Vec<f64>> {
        let out = match self {
            LambdaSchedule::Shared(l) => vec![*l; regions],
            LambdaSchedule::PerRegion(ls) => {
                if ls.len() != regions {
                    return Err(invalid(format!(
                        "lambda schedule has {} entries for {regions} regions",
                        ls.len()
                    )));
                }
                ls.clone()
            }
        };
        if out.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(invalid("lambda must be finite and non-negative"));
        }
        Ok(out)
    }
}

/// Maps sorted real centroids to INT8 grid numerators `round(128 c / S)`.
///
/// Rounding is half away from zero, results are clamped to `[-128, 127]`,
/// and centroids that land on the same numerator are merged.
pub fn snap_to_int8_grid(centroids: &[f64], scale: f64) -> Result<Vec<i8>> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(invalid("scale must be finite and positive"));
    }
    if centroids.iter().any(|c| !c.is_finite()) {
        return Err(invalid("centroids must be finite"));
    }
    if centroids.windows(2).any(|w| w[0] > w[1]) {
        return Err(invalid("centroids must be sorted ascending"));
    }
    let mut out: Vec<i8> = centroids
        .iter()
        // f64::round rounds half away from zero.
        .map(|&c| (128.0 * c / scale).round().clamp(-128.0, 127.0) as i8)
        .collect();
    out.dedup();
    Ok(out)
}

/// Builds the cosine regions for a strictly increasing numerator list.
///
/// Consecutive gaps are grouped into maximal runs of equal size `g`; each
/// run becomes a region with `theta = 128 / g`, so one cosine period spans
/// exactly one centroid gap. Adjacent regions meet at the centroid shared by
/// their runs, which belongs to the right-hand region. The outer bounds sit
/// half a gap beyond the outermost centroids. A lone centroid uses `g = 1`.
pub fn derive_regions(numerators: &[i8], scale: f64, lambda: &LambdaSchedule) -> Result<Vec<Region>> {
    if numerators.is_empty() {
        return Err(invalid("codebook needs at least one centroid"));
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(invalid("scale must be finite and positive"));
    }
    if numerators.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("numerators must be strictly increasing"));
    }

    // (first centroid index, last centroid index, gap) per run.
    let mut runs: Vec<(usize, usize, i32)> = Vec::new();
    if numerators.len() == 1 {
        runs.push((0, 0, 1));
    } else {
        for i in 0..numerators.len() - 1 {
            let gap = i32::from(numerators[i + 1]) - i32::from(numerators[i]);
            match runs.last_mut() {
                Some(run) if run.2 == gap => run.1 = i + 1,
                _ => runs.push((i, i + 1, gap)),
            }
        }
    }

    let lambdas = lambda.resolve(runs.len())?;
    let last = runs.len() - 1;
    let to_real = |num: f64| scale * num / 128.0;
    Ok(runs
        .iter()
        .zip(lambdas)
        .enumerate()
        .map(|(r, (&(first, end, gap), lambda))| {
            let a = f64::from(numerators[first]);
            let b = f64::from(numerators[end]);
            let half = f64::from(gap) / 2.0;
            let lo = if r == 0 { a - half } else { a };
            let hi = if r == last { b + half } else { b };
            Region {
                lo: to_real(lo),
                hi: to_real(hi),
                theta: 128.0 / f64::from(gap),
                lambda,
                phase: a / 128.0,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snap_examples() {
        assert_eq!(snap_to_int8_grid(&[0.0], 1.0).unwrap(), vec![0]);
        assert_eq!(snap_to_int8_grid(&[0.4999, 0.5001], 1.0).unwrap(), vec![64]);
        assert_eq!(snap_to_int8_grid(&[-0.95, 0.95], 1.0).unwrap(), vec![-122, 122]);
    }

    #[test]
    fn snap_rounds_half_away_from_zero_and_clamps() {
        // 0.5 / 128 and -0.5 / 128 sit exactly on half steps.
        assert_eq!(snap_to_int8_grid(&[-0.5 / 128.0, 0.5 / 128.0], 1.0).unwrap(), vec![-1, 1]);
        assert_eq!(snap_to_int8_grid(&[-2.0, 1.0, 3.0], 1.0).unwrap(), vec![-128, 127]);
        assert!(snap_to_int8_grid(&[1.0, 0.0], 1.0).is_err());
        assert!(snap_to_int8_grid(&[0.0], 0.0).is_err());
    }

    #[test]
    fn one_equal_gap_run() {
        let regions = derive_regions(&[-64, 0, 64], 1.0, &LambdaSchedule::Shared(1.0)).unwrap();
        assert_eq!(regions.len(), 1);
        let r = regions[0];
        assert_eq!(r.theta, 2.0);
        assert_eq!((r.lo, r.hi), (-0.75, 0.75));
        for w in [-0.5, 0.0, 0.5] {
            assert!((r.angle(w, 1.0).cos().abs() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn lone_centroid_falls_back_to_one_step() {
        let regions = derive_regions(&[0], 1.0, &LambdaSchedule::Shared(1.0)).unwrap();
        assert_eq!(regions.len(), 1);
        assert_eq!(regions[0].theta, 128.0);
        assert_eq!((regions[0].lo, regions[0].hi), (-0.5 / 128.0, 0.5 / 128.0));
    }

    #[test]
    fn three_gap_runs_give_three_regions() {
        // 31 centroids: 5 sparse, 21 dense, 5 sparse.
        let mut nums: Vec<i8> = (0..5).map(|i| -80 + 8 * i).collect();
        nums.extend((0..21).map(|i| -40 + 4 * i));
        nums.extend((1..=5).map(|i| 40 + 8 * i));
        assert_eq!(nums.len(), 31);
        let regions = derive_regions(&nums, 1.0, &LambdaSchedule::Shared(1.0)).unwrap();
        assert_eq!(regions.len(), 3);
        assert_eq!(regions[0].theta, 16.0);
        assert_eq!(regions[1].theta, 32.0);
        assert_eq!(regions[2].theta, 16.0);
        assert_eq!(regions[0].hi, regions[1].lo);
        assert_eq!(regions[1].hi, regions[2].lo);
    }

    #[test]
    fn per_region_lambda_length_checked() {
        let err = derive_regions(&[-64, 0, 64], 1.0, &LambdaSchedule::PerRegion(vec![1.0, 2.0]));
        assert!(err.is_err());
        let ok = derive_regions(&[-64, 0, 80], 1.0, &LambdaSchedule::PerRegion(vec![1.0, 2.0])).unwrap();
        assert_eq!(ok[1].lambda, 2.0);
        assert!(derive_regions(&[0], 1.0, &LambdaSchedule::Shared(-1.0)).is_err());
    }
}
