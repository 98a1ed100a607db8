//! The `S8BQ` packed tensor format.
//!
//! All multi-byte fields are little-endian.
//!
//! | field     | size        | content                                   |
//! |-----------|-------------|-------------------------------------------|
//! | magic     | 4           | `b"S8BQ"`                                 |
//! | version   | 1           | `1`                                       |
//! | bit width | 1           | `b` in `1..=8`                            |
//! | K - 1     | 1           | codebook size minus one                   |
//! | scale     | 8           | IEEE-754 double                           |
//! | n         | 8           | element count, `u64`                      |
//! | rank      | 1           | number of dims                            |
//! | dims      | 8 * rank    | `u64` each; product equals `n`            |
//! | codebook  | K           | numerators as `i8`, strictly ascending    |
//! | payload   | ceil(n*b/8) | `b`-bit indices, LSB-first, zero padded   |
//!
//! Index `i` occupies bits `i*b .. (i+1)*b` of the payload, where bit `p` is
//! bit `p % 8` of byte `p / 8`.

use crate::codebook::{Codebook, LambdaSchedule};
use crate::error::{invalid, Error, Result};
use crate::grid_value;

pub const MAGIC: [u8; 4] = *b"S8BQ";
pub const VERSION: u8 = 1;

/// Fixed part of the header before the dims: magic, version, bit width,
/// K - 1, scale, n and rank.
const FIXED_HEADER: usize = 4 + 1 + 1 + 1 + 8 + 8 + 1;

/// Decoded contents of a packed stream.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedTensor {
    pub bit_width: u8,
    pub scale: f64,
    pub numerators: Vec<i8>,
    pub shape: Vec<usize>,
    pub indices: Vec<u8>,
}

impl PackedTensor {
    /// Rebuilds a codebook from the header; regularization weights are not
    /// stored and come from `lambda`.
    pub fn codebook(&self, lambda: &LambdaSchedule) -> Result<Codebook> {
        Codebook::from_numerators(self.bit_width, self.scale, self.numerators.clone(), lambda)
    }

    pub fn header_len(&self) -> usize {
        header_len(self.shape.len(), self.numerators.len())
    }

    pub fn payload_len(&self) -> usize {
        payload_len(self.indices.len(), self.bit_width)
    }
}

/// INT8 codes as an accelerator would consume them.
#[derive(Debug, Clone, PartialEq)]
pub struct Int8Tensor {
    pub codes: Vec<i8>,
    pub scale: f64,
    pub shape: Vec<usize>,
}

impl Int8Tensor {
    /// Real weights `scale * code / 128`.
    pub fn dequantize(&self) -> Vec<f64> {
        self.codes.iter().map(|&c| grid_value(self.scale, c)).collect()
    }
}

pub fn header_len(rank: usize, k: usize) -> usize {
    FIXED_HEADER + 8 * rank + k
}

pub fn payload_len(n: usize, bit_width: u8) -> usize {
    (n * usize::from(bit_width)).div_ceil(8)
}

/// Size of a packed rank-1 tensor relative to its 8-bit packing, with a
/// full `2^b` codebook in the header. Tends to `b / 8` as `n` grows.
pub fn compression_ratio(bit_width: u8, n: usize) -> Result<f64> {
    if !(1..=8).contains(&bit_width) {
        return Err(invalid(format!("bit width {bit_width} outside [1, 8]")));
    }
    let header = header_len(1, 1usize << bit_width) as f64;
    Ok((header + payload_len(n, bit_width) as f64) / (header + n as f64))
}

/// Serializes codebook indices into the packed format.
pub fn pack(indices: &[u8], codebook: &Codebook, shape: &[usize]) -> Result<Vec<u8>> {
    let k = codebook.len();
    let b = codebook.bit_width();
    if k > 1usize << b {
        return Err(Error::InvalidCodebook(format!("{k} centroids do not fit {b} bits")));
    }
    if shape.len() > usize::from(u8::MAX) {
        return Err(invalid(format!("rank {} exceeds 255", shape.len())));
    }
    if shape.iter().product::<usize>() != indices.len() {
        return Err(invalid(format!(
            "shape {shape:?} does not match {} indices",
            indices.len()
        )));
    }
    if let Some(pos) = indices.iter().position(|&i| usize::from(i) >= k) {
        return Err(invalid(format!(
            "index {} at position {pos} is out of range for K = {k}",
            indices[pos]
        )));
    }

    let mut out = Vec::with_capacity(header_len(shape.len(), k) + payload_len(indices.len(), b));
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(b);
    out.push((k - 1) as u8);
    out.extend_from_slice(&codebook.scale().to_le_bytes());
    out.extend_from_slice(&(indices.len() as u64).to_le_bytes());
    out.push(shape.len() as u8);
    for &d in shape {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    out.extend(codebook.numerators().iter().map(|&k| k as u8));
    pack_bits(indices, b, &mut out);
    Ok(out)
}

fn pack_bits(values: &[u8], bits: u8, out: &mut Vec<u8>) {
    let mut acc: u32 = 0;
    let mut filled = 0u8;
    for &v in values {
        acc |= u32::from(v) << filled;
        filled += bits;
        while filled >= 8 {
            out.push(acc as u8);
            acc >>= 8;
            filled -= 8;
        }
    }
    if filled > 0 {
        out.push(acc as u8);
    }
}

fn unpack_bits(payload: &[u8], bits: u8, n: usize) -> Vec<u8> {
    let mask = (1u32 << bits) - 1;
    let mut out = Vec::with_capacity(n);
    let mut acc: u32 = 0;
    let mut filled = 0u8;
    let mut bytes = payload.iter();
    while out.len() < n {
        while filled < bits {
            // Callers check the payload length up front.
            let byte = bytes.next().copied().unwrap_or(0);
            acc |= u32::from(byte) << filled;
            filled += 8;
        }
        out.push((acc & mask) as u8);
        acc >>= bits;
        filled -= bits;
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Corrupt(format!("stream truncated while reading {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Parses a packed stream; the exact inverse of [`pack`].
pub fn unpack(bytes: &[u8]) -> Result<PackedTensor> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r
        .take(4, "magic")
        .map_err(|_| Error::Format("stream shorter than the magic".into()))?;
    if magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:02x?}")));
    }
    let version = r.u8("version")?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let bit_width = r.u8("bit width")?;
    if !(1..=8).contains(&bit_width) {
        return Err(Error::Format(format!("bit width {bit_width} outside [1, 8]")));
    }
    let k = usize::from(r.u8("codebook size")?) + 1;
    if k > 1usize << bit_width {
        return Err(Error::Format(format!("{k} centroids do not fit {bit_width} bits")));
    }
    let scale = f64::from_le_bytes(r.take(8, "scale")?.try_into().unwrap());
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::Corrupt(format!("scale {scale} is not finite and positive")));
    }
    let n = r.u64("element count")?;
    let rank = usize::from(r.u8("rank")?);
    let mut shape = Vec::with_capacity(rank);
    let mut product: u64 = 1;
    for _ in 0..rank {
        let d = r.u64("dims")?;
        product = product
            .checked_mul(d)
            .ok_or_else(|| Error::Corrupt("shape product overflows".into()))?;
        shape.push(usize::try_from(d).map_err(|_| Error::Corrupt("dim too large".into()))?);
    }
    if product != n {
        return Err(Error::Corrupt(format!("shape {shape:?} does not hold {n} elements")));
    }
    let numerators: Vec<i8> = r.take(k, "codebook")?.iter().map(|&b| b as i8).collect();
    if numerators.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Corrupt("codebook numerators are not strictly increasing".into()));
    }

    let n = usize::try_from(n).map_err(|_| Error::Corrupt("element count too large".into()))?;
    let expected = n
        .checked_mul(usize::from(bit_width))
        .map(|bits| bits.div_ceil(8))
        .ok_or_else(|| Error::Corrupt("element count too large".into()))?;
    let payload = &bytes[r.pos..];
    if payload.len() < expected {
        return Err(Error::Corrupt(format!(
            "payload truncated: {} of {expected} bytes",
            payload.len()
        )));
    }
    if payload.len() > expected {
        return Err(Error::Corrupt(format!(
            "{} trailing bytes after payload",
            payload.len() - expected
        )));
    }
    let used_bits = n * usize::from(bit_width) % 8;
    if used_bits != 0 && payload[expected - 1] >> used_bits != 0 {
        return Err(Error::Corrupt("nonzero padding bits".into()));
    }
    let indices = unpack_bits(payload, bit_width, n);
    if let Some(pos) = indices.iter().position(|&i| usize::from(i) >= k) {
        return Err(Error::Corrupt(format!(
            "index {} at position {pos} is out of range for K = {k}",
            indices[pos]
        )));
    }
    Ok(PackedTensor {
        bit_width,
        scale,
        numerators,
        shape,
        indices,
    })
}

/// Decodes a packed stream straight to INT8 codes via the codebook table.
pub fn decompress_to_int8(bytes: &[u8]) -> Result<Int8Tensor> {
    let packed = unpack(bytes)?;
    let codes = packed
        .indices
        .iter()
        .map(|&i| packed.numerators[usize::from(i)])
        .collect();
    Ok(Int8Tensor {
        codes,
        scale: packed.scale,
        shape: packed.shape,
    })
}
