//! Human-readable codebook format.
//!
//! ```text
//! # s8bq codebook
//! 5 0.8125 3
//! -64 0 64
//! -0.609375 0.609375 2 0.0005
//! ```
//!
//! Line one is `bit_width scale K`, line two the `K` numerators, and every
//! further line one region as `lo hi theta lambda`. Blank lines and lines
//! starting with `#` are ignored. Region phases are not stored: each is the
//! normalized position of the first centroid inside the region.

use std::fmt::Write as _;
use std::str::FromStr;

use super::{Codebook, Region};
use crate::error::{Error, Result};
use crate::grid_value;

impl Codebook {
    pub fn to_text(&self) -> String {
        let mut out = String::from("# s8bq codebook\n");
        let _ = writeln!(out, "{} {} {}", self.bit_width, self.scale, self.numerators.len());
        let nums: Vec<String> = self.numerators.iter().map(|k| k.to_string()).collect();
        out.push_str(&nums.join(" "));
        out.push('\n');
        for r in &self.regions {
            let _ = writeln!(out, "{} {} {} {}", r.lo, r.hi, r.theta, r.lambda);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        let (line, header) = lines.next().ok_or_else(|| parse_err(1, "missing header line"))?;
        let header = fields::<f64>(line, header, 3)?;
        let bit_width = as_int(line, header[0], 1.0, 8.0)? as u8;
        let scale = header[1];
        let k = as_int(line, header[2], 1.0, 256.0)? as usize;

        let (line, nums) = lines.next().ok_or_else(|| parse_err(line + 1, "missing numerators"))?;
        let numerators = fields::<i8>(line, nums, k)?;

        let mut regions = Vec::new();
        for (line, l) in lines {
            let v = fields::<f64>(line, l, 4)?;
            regions.push(Region {
                lo: v[0],
                hi: v[1],
                theta: v[2],
                lambda: v[3],
                phase: 0.0,
            });
        }
        for r in &mut regions {
            if let Some(&num) = numerators
                .iter()
                .find(|&&num| r.contains(grid_value(scale, num)))
            {
                r.phase = f64::from(num) / 128.0;
            }
        }
        Codebook::new(bit_width, scale, numerators, regions)
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn fields<T: FromStr>(line: usize, text: &str, expected: usize) -> Result<Vec<T>> {
    let parts: Vec<&str> = text.split_whitespace().collect();
    if parts.len() != expected {
        return Err(parse_err(
            line,
            format!("expected {expected} fields, found {}", parts.len()),
        ));
    }
    parts
        .iter()
        .map(|p| p.parse::<T>().map_err(|_| parse_err(line, format!("cannot parse {p:?}"))))
        .collect()
}

fn as_int(line: usize, v: f64, min: f64, max: f64) -> Result<i64> {
    if v.fract() != 0.0 || v < min || v > max {
        return Err(parse_err(line, format!("{v} is not an integer in [{min}, {max}]")));
    }
    Ok(v as i64)
}
