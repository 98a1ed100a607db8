//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StudentT};
use s8bq_core::{fit_codebook, Codebook, CodebookConfig, LambdaSchedule, WeightTensor};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(seed: u64, n: usize, std: f64) -> Vec<f64> {
    let mut r = rng(seed);
    let d = Normal::new(0.0, std).unwrap();
    (0..n).map(|_| d.sample(&mut r)).collect()
}

pub fn uniform(seed: u64, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n).map(|_| r.random_range(lo..hi)).collect()
}

pub fn student_t(seed: u64, n: usize, dof: f64) -> Vec<f64> {
    let mut r = rng(seed);
    let d = StudentT::new(dof).unwrap();
    (0..n).map(|_| d.sample(&mut r)).collect()
}

/// One of several weight-like distributions, picked by `seed`.
pub fn mixed(seed: u64, n: usize) -> Vec<f64> {
    match seed % 5 {
        0 => gaussian(seed, n, 0.25),
        1 => uniform(seed, n, -1.0, 1.0),
        2 => student_t(seed, n, 3.0),
        3 => {
            let mut r = rng(seed);
            let a = Normal::new(-0.5, 0.1).unwrap();
            let b = Normal::new(0.4, 0.2).unwrap();
            (0..n)
                .map(|_| if r.random_bool(0.5) { a.sample(&mut r) } else { b.sample(&mut r) })
                .collect()
        }
        _ => {
            // Laplace via the difference of two exponentials.
            let mut r = rng(seed);
            (0..n)
                .map(|_| {
                    let u: f64 = r.random_range(1e-12..1.0);
                    let v: f64 = r.random_range(1e-12..1.0);
                    0.3 * (u.ln() - v.ln())
                })
                .collect()
        }
    }
}

pub fn tensor(values: Vec<f64>) -> WeightTensor {
    WeightTensor::from_vec("w", values).unwrap()
}

pub fn fitted(values: Vec<f64>, bits: u8, lambda: f64) -> Codebook {
    let config = CodebookConfig {
        lambda: LambdaSchedule::Shared(lambda),
        ..CodebookConfig::with_bits(bits)
    };
    fit_codebook(&tensor(values), &config).unwrap().codebook
}

fn segment_sse(v: &[f64]) -> f64 {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - mean) * (x - mean)).sum()
}

/// Optimal per-weight MSE of 1-D k-means by a textbook O(k n^2) dynamic
/// program over raw prefix sums of `x` and `x^2`.
pub fn dp_kmeans_mse(values: &[f64], k: usize) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let k = k.min(n);
    let mut s1 = vec![0.0; n + 1];
    let mut s2 = vec![0.0; n + 1];
    for (i, x) in v.iter().enumerate() {
        s1[i + 1] = s1[i] + x;
        s2[i + 1] = s2[i] + x * x;
    }
    let cost = |s: usize, i: usize| {
        let m = (i - s) as f64;
        let a = s1[i] - s1[s];
        (s2[i] - s2[s] - a * a / m).max(0.0)
    };
    let inf = f64::INFINITY;
    // best[j][i]: min SSE of the first i points in j clusters.
    let mut best = vec![vec![inf; n + 1]; k + 1];
    best[0][0] = 0.0;
    for j in 1..=k {
        for i in j..=n {
            for s in j - 1..i {
                let c = best[j - 1][s] + cost(s, i);
                if c < best[j][i] {
                    best[j][i] = c;
                }
            }
        }
    }
    best[k][n] / n as f64
}

/// Optimal per-weight MSE for k = 3 by trying every pair of split points.
pub fn brute_kmeans3(values: &[f64]) -> (f64, Vec<f64>) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mut best = (f64::INFINITY, Vec::new());
    for a in 1..n - 1 {
        for b in a + 1..n {
            let parts = [&v[..a], &v[a..b], &v[b..]];
            let sse: f64 = parts.iter().map(|p| segment_sse(p)).sum();
            if sse < best.0 {
                let means = parts.iter().map(|p| p.iter().sum::<f64>() / p.len() as f64).collect();
                best = (sse, means);
            }
        }
    }
    (best.0 / n as f64, best.1)
}

/// Index of the nearest centroid by exhaustive search; ties go to the
/// lower index.
pub fn brute_nearest(centroids: &[f64], w: f64) -> usize {
    let mut best = 0;
    for (j, &c) in centroids.iter().enumerate() {
        if (w - c).abs() < (w - centroids[best]).abs() {
            best = j;
        }
    }
    best
}

/// Packs indices one bit at a time, LSB first.
pub fn reference_pack_bits(indices: &[u8], bits: u8) -> Vec<u8> {
    let mut stream = Vec::new();
    for &i in indices {
        for bit in 0..bits {
            stream.push((i >> bit) & 1 == 1);
        }
    }
    stream
        .chunks(8)
        .map(|c| c.iter().enumerate().fold(0u8, |acc, (p, &on)| acc | (u8::from(on) << p)))
        .collect()
}

/// Direct evaluation of `lambda * (1 - |cos(pi * theta * (w / S - phase))|)`
/// over the region containing `w`, found by linear scan.
pub fn reference_loss(cb: &Codebook, w: f64) -> f64 {
    cb.regions()
        .iter()
        .find(|r| r.lo <= w && w < r.hi)
        .map(|r| r.lambda * (1.0 - (std::f64::consts::PI * r.theta * (w / cb.scale() - r.phase)).cos().abs()))
        .unwrap_or(0.0)
}

/// Distance from `w` to the nearest kink (cosine zero) or region boundary,
/// in real units.
pub fn distance_to_nonsmooth(cb: &Codebook, w: f64) -> f64 {
    let mut d = f64::INFINITY;
    for r in cb.regions() {
        d = d.min((w - r.lo).abs()).min((w - r.hi).abs());
        let t = r.theta * (w / cb.scale() - r.phase);
        // Kinks sit at half-integer t.
        let kink = (t - 0.5).round() + 0.5;
        d = d.min(((t - kink) / r.theta * cb.scale()).abs());
    }
    d
}
