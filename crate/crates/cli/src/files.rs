//! Weight files and the error type that maps onto exit codes.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use s8bq_core::{Error, WeightTensor};

pub const EXIT_CHECK: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_DATA: i32 = 4;
pub const EXIT_DIVERGED: i32 = 5;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Io { path: PathBuf, source: std::io::Error },
    Data(String),
    Diverged(String),
    /// A verification ran and did not pass.
    Check(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Io { .. } => EXIT_IO,
            Failure::Data(_) => EXIT_DATA,
            Failure::Diverged(_) => EXIT_DIVERGED,
            Failure::Check(_) => EXIT_CHECK,
        }
    }

    pub fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
        move |source| Failure::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage: {m}"),
            Failure::Io { path, source } => write!(f, "{}: {source}", path.display()),
            Failure::Data(m) | Failure::Diverged(m) | Failure::Check(m) => f.write_str(m),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(source) => Failure::Io {
                path: PathBuf::new(),
                source,
            },
            Error::Divergence { .. } => Failure::Diverged(e.to_string()),
            other => Failure::Data(other.to_string()),
        }
    }
}

pub type Outcome<T = ()> = Result<T, Failure>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// `.txt`, `.csv` and `.tsv` files are text, everything else binary.
    Auto,
    /// Flat little-endian 8-byte doubles.
    Bin,
    /// Numbers separated by whitespace or commas; `#` starts a comment.
    Text,
}

impl Format {
    pub fn resolve(self, path: &Path) -> Format {
        match self {
            Format::Auto => match path.extension().and_then(|e| e.to_str()) {
                Some("txt" | "csv" | "tsv") => Format::Text,
                _ => Format::Bin,
            },
            other => other,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Format::Text => "txt",
            _ => "f64",
        }
    }
}

pub fn read(path: &Path) -> Outcome<Vec<u8>> {
    fs::read(path).map_err(Failure::io(path))
}

pub fn read_text(path: &Path) -> Outcome<String> {
    fs::read_to_string(path).map_err(Failure::io(path))
}

pub fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Outcome {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(Failure::io(parent))?;
    }
    fs::write(path, bytes).map_err(Failure::io(path))
}

/// Reads a weight file; without `shape` the tensor is rank 1.
pub fn read_weights(path: &Path, format: Format, shape: Option<&[usize]>) -> Outcome<WeightTensor> {
    let values = match format.resolve(path) {
        Format::Text => parse_text(&read_text(path)?).map_err(|m| Failure::Data(format!("{}: {m}", path.display())))?,
        _ => {
            let bytes = read(path)?;
            if bytes.len() % 8 != 0 {
                return Err(Failure::Data(format!(
                    "{}: {} bytes is not a whole number of doubles",
                    path.display(),
                    bytes.len()
                )));
            }
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect()
        }
    };
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("weights");
    let shape = shape.map_or_else(|| vec![values.len()], <[usize]>::to_vec);
    Ok(WeightTensor::new(name, shape, values)?)
}

fn parse_text(text: &str) -> Result<Vec<f64>, String> {
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        for tok in line.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
            let v = tok
                .parse::<f64>()
                .map_err(|_| format!("line {}: {tok:?} is not a number", i + 1))?;
            values.push(v);
        }
    }
    Ok(values)
}

pub fn write_weights(path: &Path, format: Format, values: &[f64]) -> Outcome {
    match format.resolve(path) {
        Format::Text => {
            let mut s = String::with_capacity(values.len() * 24);
            for v in values {
                // `{:?}` prints the shortest string that round-trips.
                s.push_str(&format!("{v:?}\n"));
            }
            write(path, s)
        }
        _ => write(path, values.iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<u8>>()),
    }
}

/// Tensor shape given on the command line, such as `64,80` or `64x80`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shape(pub Vec<usize>);

pub fn parse_shape(s: &str) -> Result<Shape, String> {
    if s.trim().is_empty() {
        return Ok(Shape(Vec::new()));
    }
    s.split([',', 'x'])
        .map(|d| d.trim().parse::<usize>().map_err(|_| format!("bad dimension {d:?}")))
        .collect::<Result<_, _>>()
        .map(Shape)
}
