//! Lloyd-Max iteration and the exact 1-D k-means dynamic program.

use crate::error::{invalid, Result};
use crate::tensor::{distinct_count, WeightTensor};

/// How [`fit_lloyd_max`] seeds its centroids.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum LloydInit {
    /// Seed centroid `j` of `k` at the `(j + 0.5) / k` quantile of the sorted weights.
    #[default]
    Quantiles,
    /// Start from the given centroids (must have exactly `k` finite values).
    Explicit(Vec<f64>),
}

/// Result of a Lloyd-Max fit.
#[derive(Debug, Clone, PartialEq)]
pub struct LloydFit {
    /// Centroids sorted ascending.
    pub centroids: Vec<f64>,
    /// Mean squared error per weight of the final centroids.
    pub mse: f64,
    /// Per-weight MSE of the seed centroids followed by one entry per
    /// accepted iteration; non-increasing.
    pub history: Vec<f64>,
    /// Lloyd iterations of the initial descent.
    pub iterations: usize,
    /// Accepted escape moves after the initial descent; each appends its
    /// final MSE to `history`.
    pub refinements: usize,
}

/// Result of the exact dynamic-programming fit.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalFit {
    pub centroids: Vec<f64>,
    /// Optimal mean squared error per weight.
    pub mse: f64,
    /// Exclusive end index (into the sorted weights) of each cluster.
    pub boundaries: Vec<usize>,
}

fn check_k(values: &[f64], k: usize) -> Result<()> {
    if values.is_empty() {
        return Err(invalid("weight tensor is empty"));
    }
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    let distinct = distinct_count(values);
    if k > distinct {
        return Err(invalid(format!(
            "k = {k} exceeds the number of distinct weight values ({distinct})"
        )));
    }
    Ok(())
}

fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted
}

/// Index of the nearest centroid in a sorted centroid list; ties go to the
/// lower index.
pub(crate) fn nearest_sorted(centroids: &[f64], w: f64) -> usize {
    let hi = centroids.partition_point(|&c| c < w);
    if hi == 0 {
        return 0;
    }
    if hi == centroids.len() {
        return hi - 1;
    }
    let lo = hi - 1;
    if (w - centroids[hi]).abs() < (w - centroids[lo]).abs() {
        hi
    } else {
        lo
    }
}

fn cost(sorted: &[f64], centroids: &[f64]) -> f64 {
    let total: f64 = sorted
        .iter()
        .map(|&w| {
            let d = w - centroids[nearest_sorted(centroids, w)];
            d * d
        })
        .sum();
    total / sorted.len() as f64
}

/// Fits `k` centroids to `weights` with Lloyd's alternating assign/update
/// iteration, minimizing the mean squared quantization error.
///
/// The descent stops after `max_iters` iterations, at a fixed point, or when
/// one iteration improves the MSE by less than `tol`. A cluster left empty by
/// the assignment step is reseeded at the weight farthest from its current
/// centroid.
///
/// Lloyd's iteration only finds a local optimum, and on heavy-tailed or
/// multimodal weights the quantile seeds often land in a poor one. After the
/// descent, a merge/split search removes one centroid, splits another
/// cluster at its optimal point, and reruns the descent. Moves are tried in
/// order of estimated saving (at most 64 per round) and the first that lowers
/// the MSE by at least 0.01% is kept. The search repeats until no move helps,
/// up to 16 moves.
pub fn fit_lloyd_max(
    weights: &WeightTensor,
    k: usize,
    max_iters: usize,
    tol: f64,
    init: &LloydInit,
) -> Result<LloydFit> {
    lloyd_on_slice(weights.values(), k, max_iters, tol, init)
}

pub(crate) fn lloyd_on_slice(
    values: &[f64],
    k: usize,
    max_iters: usize,
    tol: f64,
    init: &LloydInit,
) -> Result<LloydFit> {
    check_k(values, k)?;
    if max_iters == 0 {
        return Err(invalid("max_iters must be at least 1"));
    }
    if !(tol >= 0.0 && tol.is_finite()) {
        return Err(invalid("tol must be a finite non-negative number"));
    }
    let sorted = sorted_copy(values);
    let n = sorted.len();

    let centroids = match init {
        LloydInit::Quantiles => (0..k)
            .map(|j| {
                let q = (j as f64 + 0.5) / k as f64;
                sorted[((q * n as f64) as usize).min(n - 1)]
            })
            .collect::<Vec<_>>(),
        LloydInit::Explicit(seed) => {
            if seed.len() != k {
                return Err(invalid(format!(
                    "explicit init has {} centroids, expected {k}",
                    seed.len()
                )));
            }
            if seed.iter().any(|c| !c.is_finite()) {
                return Err(invalid("explicit init centroids must be finite"));
            }
            let mut seed = seed.clone();
            seed.sort_by(f64::total_cmp);
            seed
        }
    };

    let mut descent = descend(&sorted, centroids, max_iters, tol);
    let iterations = descent.iterations;
    let mut history = std::mem::take(&mut descent.history);
    let (mut centroids, mut mse) = (descent.centroids, descent.mse);

    // Escape local optima with merge/split moves searched on prefix sums;
    // a move is kept only if the exact descent from it strictly improves.
    let mut refinements = 0;
    if k > 1 && mse > 0.0 {
        let fast = FastLloyd::new(&sorted);
        while refinements < MAX_MOVES.min(max_iters) {
            let Some(candidate) = fast.improving_move(&centroids, max_iters) else {
                break;
            };
            let d = descend(&sorted, candidate, max_iters, tol);
            if !(d.mse < mse * (1.0 - MIN_GAIN) && mse - d.mse >= tol) {
                break;
            }
            centroids = d.centroids;
            mse = d.mse;
            history.push(mse);
            refinements += 1;
        }
    }

    Ok(LloydFit {
        centroids,
        mse,
        history,
        iterations,
        refinements,
    })
}

struct Descent {
    centroids: Vec<f64>,
    mse: f64,
    history: Vec<f64>,
    iterations: usize,
}

/// Smallest relative MSE reduction worth an escape move.
const MIN_GAIN: f64 = 1e-4;
/// Candidate moves tried per round, largest estimated saving first.
const MOVES_PER_ROUND: usize = 64;
/// Upper bound on accepted escape moves.
const MAX_MOVES: usize = 16;

/// Lloyd iteration on sorted weights through prefix sums: every cluster is a
/// contiguous run bounded by centroid midpoints, so one iteration costs
/// `O(k log n)`. Costs are approximate (sums of squares cancel), which is
/// fine for ranking candidate moves.
struct FastLloyd {
    shift: f64,
    y: Vec<f64>,
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl FastLloyd {
    fn new(sorted: &[f64]) -> Self {
        let shift = sorted.iter().sum::<f64>() / sorted.len() as f64;
        let y: Vec<f64> = sorted.iter().map(|x| x - shift).collect();
        let mut s1 = vec![0.0; y.len() + 1];
        let mut s2 = vec![0.0; y.len() + 1];
        for (i, v) in y.iter().enumerate() {
            s1[i + 1] = s1[i] + v;
            s2[i + 1] = s2[i] + v * v;
        }
        Self { shift, y, s1, s2 }
    }

    fn sse(&self, a: usize, b: usize) -> f64 {
        if b <= a {
            return 0.0;
        }
        let s = self.s1[b] - self.s1[a];
        (self.s2[b] - self.s2[a] - s * s / (b - a) as f64).max(0.0)
    }

    fn bounds(&self, c: &[f64]) -> Vec<usize> {
        let mut b = vec![0; c.len() + 1];
        self.bounds_into(c, &mut b);
        b
    }

    fn bounds_into(&self, c: &[f64], b: &mut [usize]) {
        let n = self.y.len();
        b[0] = 0;
        for (j, w) in c.windows(2).enumerate() {
            let mid = 0.5 * (w[0] + w[1]);
            let from = b[j];
            b[j + 1] = from + self.y[from..].partition_point(|&v| v <= mid);
        }
        b[c.len()] = n;
    }

    /// Runs Lloyd on shifted centroids; returns the final centroids and SSE.
    fn run(&self, mut c: Vec<f64>, max_iters: usize) -> (Vec<f64>, f64) {
        let k = c.len();
        let mut b = vec![0; k + 1];
        let mut next = vec![0.0; k];
        for _ in 0..max_iters {
            self.bounds_into(&c, &mut b);
            for j in 0..k {
                next[j] = if b[j + 1] > b[j] {
                    (self.s1[b[j + 1]] - self.s1[b[j]]) / (b[j + 1] - b[j]) as f64
                } else {
                    c[j]
                };
            }
            if !next.is_sorted() {
                next.sort_by(f64::total_cmp);
            }
            if next == c {
                break;
            }
            std::mem::swap(&mut c, &mut next);
        }
        self.bounds_into(&c, &mut b);
        let sse = (0..k).map(|j| self.sse(b[j], b[j + 1])).sum();
        (c, sse)
    }

    /// Best split point of the run `[a, b)` into two contiguous groups.
    fn split(&self, a: usize, b: usize) -> Option<(f64, f64, f64)> {
        (a + 1..b)
            .map(|m| (self.sse(a, m) + self.sse(m, b), m))
            .min_by(|x, y| x.0.total_cmp(&y.0))
            .map(|(cost, m)| {
                let mean = |lo: usize, hi: usize| (self.s1[hi] - self.s1[lo]) / (hi - lo) as f64;
                (cost, mean(a, m), mean(m, b))
            })
    }

    /// Ranks merge/split moves (remove centroid `i`, split cluster `j` at its
    /// optimal point) by their estimated saving, then runs Lloyd from each in
    /// turn and returns the first result (in real units) that beats the
    /// current centroids.
    fn improving_move(&self, centroids: &[f64], max_iters: usize) -> Option<Vec<f64>> {
        let c: Vec<f64> = centroids.iter().map(|x| x - self.shift).collect();
        let (c, current) = self.run(c, max_iters);
        let k = c.len();
        let b = self.bounds(&c);
        // Removing centroid i hands its points to the two neighbours, which
        // only moves the midpoints between i - 1 and i + 1.
        let merge_cost: Vec<f64> = (0..k)
            .map(|i| {
                let (lo, hi) = (i.saturating_sub(1), (i + 1).min(k - 1));
                let before: f64 = (lo..=hi).map(|j| self.sse(b[j], b[j + 1])).sum();
                let after = if i == 0 || i == k - 1 {
                    self.sse(b[lo], b[hi + 1])
                } else {
                    let mid = 0.5 * (c[i - 1] + c[i + 1]);
                    let m = self.y.partition_point(|&v| v <= mid).clamp(b[i - 1], b[i + 2]);
                    self.sse(b[i - 1], m) + self.sse(m, b[i + 2])
                };
                after - before
            })
            .collect();
        let splits: Vec<Option<(f64, f64, f64)>> = (0..k)
            .map(|j| {
                let (cost, left, right) = self.split(b[j], b[j + 1])?;
                Some((self.sse(b[j], b[j + 1]) - cost, left, right))
            })
            .collect();
        let mut moves: Vec<(f64, usize, usize)> = Vec::new();
        for (j, split) in splits.iter().enumerate() {
            let Some((gain, _, _)) = split else { continue };
            for (i, cost) in merge_cost.iter().enumerate().filter(|&(i, _)| i != j) {
                moves.push((gain - cost, i, j));
            }
        }
        moves.sort_by(|x, y| y.0.total_cmp(&x.0).then((x.1, x.2).cmp(&(y.1, y.2))));

        for &(_, i, j) in moves.iter().take(MOVES_PER_ROUND) {
            let mut trial: Vec<f64> = c.iter().enumerate().filter(|&(t, _)| t != i).map(|(_, &x)| x).collect();
            // A neighbour of the removed centroid absorbs part of its points,
            // so its cluster is re-split as it stands after the merge.
            let (left, right) = if j + 1 == i || j == i + 1 {
                let j = if j > i { j - 1 } else { j };
                let rb = self.bounds(&trial);
                match self.split(rb[j], rb[j + 1]) {
                    Some((_, l, r)) => (l, r),
                    None => continue,
                }
            } else {
                let (_, l, r) = splits[j].unwrap();
                (l, r)
            };
            let j = if j > i { j - 1 } else { j };
            trial[j] = left;
            trial.push(right);
            trial.sort_by(f64::total_cmp);
            let (trial, sse) = self.run(trial, max_iters);
            if sse < current * (1.0 - MIN_GAIN) {
                return Some(trial.into_iter().map(|x| x + self.shift).collect());
            }
        }
        None
    }
}

/// Nearest-centroid assignment of every weight, with the resulting MSE.
fn assign(sorted: &[f64], centroids: &[f64], assignment: &mut [usize]) -> f64 {
    let mut total = 0.0;
    for (slot, &w) in assignment.iter_mut().zip(sorted) {
        *slot = nearest_sorted(centroids, w);
        let d = w - centroids[*slot];
        total += d * d;
    }
    total / sorted.len() as f64
}

/// Plain Lloyd iteration from `centroids` over sorted weights.
fn descend(sorted: &[f64], mut centroids: Vec<f64>, max_iters: usize, tol: f64) -> Descent {
    let n = sorted.len();
    let k = centroids.len();
    let mut assignment = vec![0usize; n];
    let mut mse = assign(sorted, &centroids, &mut assignment);
    let mut history = vec![mse];
    let mut iterations = 0;
    let mut scratch = vec![0usize; n];

    while iterations < max_iters {
        iterations += 1;
        let mut next = centroids.clone();
        repair_empty(sorted, &mut assignment, &mut next);

        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (&a, &w) in assignment.iter().zip(sorted) {
            sums[a] += w;
            counts[a] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                next[j] = sums[j] / counts[j] as f64;
            }
        }
        next.sort_by(f64::total_cmp);
        if next == centroids {
            break;
        }

        let next_mse = assign(sorted, &next, &mut scratch);
        // Rounding can make an exact fixed point look like a tiny increase.
        if next_mse > mse {
            break;
        }
        let improvement = mse - next_mse;
        centroids = next;
        mse = next_mse;
        std::mem::swap(&mut assignment, &mut scratch);
        history.push(mse);
        if improvement < tol {
            break;
        }
    }
    Descent {
        centroids,
        mse,
        history,
        iterations,
    }
}

/// Moves the farthest-out weight of a multi-member cluster into each empty
/// cluster, which becomes a singleton centred on that weight.
fn repair_empty(sorted: &[f64], assignment: &mut [usize], centroids: &mut [f64]) {
    let k = centroids.len();
    loop {
        let mut counts = vec![0usize; k];
        for &a in assignment.iter() {
            counts[a] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let mut far: Option<(usize, f64)> = None;
        for (i, (&a, &w)) in assignment.iter().zip(sorted).enumerate() {
            if counts[a] < 2 {
                continue;
            }
            let d = (w - centroids[a]).abs();
            if far.is_none_or(|(_, best)| d > best) {
                far = Some((i, d));
            }
        }
        // k <= distinct values guarantees a multi-member cluster exists.
        let Some((i, _)) = far else { return };
        assignment[i] = empty;
        centroids[empty] = sorted[i];
    }
}

/// Globally MSE-optimal partition of the weights into `k` clusters.
///
/// Optimal 1-D clusters are contiguous in sorted order, so a dynamic program
/// over split points with prefix sums finds the exact optimum in
/// `O(k * n^2)`.
pub fn optimal_1d_kmeans(weights: &WeightTensor, k: usize) -> Result<OptimalFit> {
    optimal_on_slice(weights.values(), k)
}

pub(crate) fn optimal_on_slice(values: &[f64], k: usize) -> Result<OptimalFit> {
    check_k(values, k)?;
    let sorted = sorted_copy(values);
    let n = sorted.len();

    // Shift by the mean to limit cancellation in the prefix-sum cost.
    let shift = sorted.iter().sum::<f64>() / n as f64;
    let mut s1 = vec![0.0; n + 1];
    let mut s2 = vec![0.0; n + 1];
    for (i, &w) in sorted.iter().enumerate() {
        let x = w - shift;
        s1[i + 1] = s1[i] + x;
        s2[i + 1] = s2[i] + x * x;
    }
    let seg = |i: usize, j: usize| -> f64 {
        let len = (j - i) as f64;
        let s = s1[j] - s1[i];
        (s2[j] - s2[i] - s * s / len).max(0.0)
    };

    // best[m][j]: cost of splitting sorted[..j] into m + 1 clusters.
    let mut best = vec![vec![f64::INFINITY; n + 1]; k];
    let mut split = vec![vec![0usize; n + 1]; k];
    for j in 1..=n {
        best[0][j] = seg(0, j);
    }
    for m in 1..k {
        for j in (m + 1)..=n {
            let mut b = f64::INFINITY;
            let mut arg = m;
            for i in m..j {
                let c = best[m - 1][i] + seg(i, j);
                if c < b {
                    b = c;
                    arg = i;
                }
            }
            best[m][j] = b;
            split[m][j] = arg;
        }
    }

    let mut boundaries = vec![0usize; k];
    let mut end = n;
    for m in (0..k).rev() {
        boundaries[m] = end;
        end = if m == 0 { 0 } else { split[m][end] };
    }

    // Recompute centroids and MSE directly from the segments.
    let mut centroids = Vec::with_capacity(k);
    let mut start = 0;
    for &stop in &boundaries {
        let part = &sorted[start..stop];
        centroids.push(part.iter().sum::<f64>() / part.len() as f64);
        start = stop;
    }
    let mse = cost(&sorted, &centroids);

    Ok(OptimalFit {
        centroids,
        mse,
        boundaries,
    })
}
