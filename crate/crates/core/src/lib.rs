//! Sub-8-bit quantization-aware training for INT8 accelerators.
//!
//! The toolkit fits Lloyd-Max codebooks whose centroids are snapped onto the
//! INT8 grid `S * k / 128`, regularizes weights toward those centroids with a
//! multi-regional absolute cosine (MRACos) penalty, periodically hard-compresses
//! weights onto the codebook, and serializes the result as a packed sub-byte
//! index stream that decompresses straight back to INT8 codes.
//!
//! Modules:
//! - [`codebook`]: Lloyd-Max fitting, the exact 1-D k-means oracle, grid
//!   snapping and region derivation.
//! - [`regularizer`]: MRACos loss and its analytic gradient.
//! - [`compressor`]: nearest-centroid compression, convergence rate and the
//!   compression schedule.
//! - [`packing`]: the `S8BQ` binary format.
//! - [`qat`]: a seeded toy training harness that runs the whole pipeline.

pub mod codebook;
pub mod compressor;
mod error;
pub mod packing;
pub mod qat;
pub mod regularizer;
mod tensor;

pub use codebook::{
    fit_codebook, fit_lloyd_max, optimal_1d_kmeans, snap_to_int8_grid, derive_regions,
    CentroidCount, Codebook, CodebookConfig, CodebookFit, LambdaSchedule, LloydFit, LloydInit,
    Region, ScaleMode,
};
pub use compressor::{
    convergence_rate, default_epsilon, hard_compress, should_compress, CompressionSchedule,
    ConvergenceReport, HardCompressed, ScheduleUnit,
};
pub use error::{Error, Result};
pub use packing::{compression_ratio, decompress_to_int8, pack, unpack, Int8Tensor, PackedTensor};
pub use regularizer::{
    distance_to_kink, gradient_decay_profile, mracos, mracos_grad, mracos_loss, RegularizerResult,
};
pub use tensor::WeightTensor;

/// Real value of INT8 grid numerator `k` under per-tensor scale `scale`.
///
/// Every path that turns a numerator back into a weight goes through this
/// function so that compression and decompression agree bit for bit.
#[inline]
pub fn grid_value(scale: f64, k: i8) -> f64 {
    scale * f64::from(k) / 128.0
}
