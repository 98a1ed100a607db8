//! Harness configuration and its flat `key = value` text form.

use std::fmt::Write as _;

use crate::codebook::CentroidCount;
use crate::compressor::{CompressionSchedule, ScheduleUnit};
use crate::error::{invalid, Error, Result};

/// Constant learning rate until `decay_start`, then linear decay to `last`
/// at the final step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub initial: f64,
    pub last: f64,
    pub decay_start: u64,
}

impl LrSchedule {
    /// Rate for 1-based `step` of a `total`-step run.
    pub fn at(&self, step: u64, total: u64) -> f64 {
        if step <= self.decay_start || total <= self.decay_start {
            return self.initial;
        }
        let frac = (step - self.decay_start) as f64 / (total - self.decay_start) as f64;
        self.initial + (self.last - self.initial) * frac.min(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSelection {
    All,
    /// Quantize only these layer indices; the rest stay float.
    Only(Vec<usize>),
}

impl LayerSelection {
    pub fn includes(&self, layer: usize) -> bool {
        match self {
            LayerSelection::All => true,
            LayerSelection::Only(ls) => ls.contains(&layer),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QatConfig {
    pub seed: u64,
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub n_train: usize,
    pub n_val: usize,
    pub noise: f64,
    pub bit_width: u8,
    pub centroids: CentroidCount,
    /// Regularization weight shared by every region.
    pub lambda: f64,
    /// Divide each layer's regularizer by its weight count.
    pub normalize_reg: bool,
    /// Hard-compression period; `None` picks a tenth of phase 3.
    pub tau: Option<u64>,
    pub tau_unit: ScheduleUnit,
    /// First compression tick; `None` means half a period into phase 3, so
    /// the last compression lands before the final step.
    pub compress_start: Option<u64>,
    /// Convergence threshold on squared distance; `None` uses the
    /// per-layer default.
    pub epsilon: Option<f64>,
    pub baseline_steps: u64,
    pub total_steps: u64,
    pub lr: LrSchedule,
    pub batch_size: usize,
    pub momentum: f64,
    pub reset_optimizer_on_compress: bool,
    pub quantize_layers: LayerSelection,
    pub log_every: u64,
}

impl Default for QatConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            input_dim: 4,
            hidden: vec![16, 16],
            n_train: 256,
            n_val: 256,
            noise: 0.02,
            bit_width: 5,
            centroids: CentroidCount::Odd,
            lambda: 5e-4,
            normalize_reg: false,
            tau: None,
            tau_unit: ScheduleUnit::Step,
            compress_start: None,
            epsilon: None,
            baseline_steps: 1000,
            total_steps: 3000,
            lr: LrSchedule {
                initial: 0.05,
                last: 0.005,
                decay_start: 1500,
            },
            batch_size: 32,
            momentum: 0.0,
            reset_optimizer_on_compress: false,
            quantize_layers: LayerSelection::All,
            log_every: 1,
        }
    }
}

impl QatConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 {
            return Err(invalid("total_steps must be positive"));
        }
        if self.baseline_steps > self.total_steps {
            return Err(invalid("baseline_steps must not exceed total_steps"));
        }
        if !(1..=8).contains(&self.bit_width) {
            return Err(invalid(format!("bit_width {} outside [1, 8]", self.bit_width)));
        }
        if self.input_dim == 0 || self.hidden.contains(&0) {
            return Err(invalid("layer widths must be positive"));
        }
        if self.n_train == 0 || self.batch_size == 0 {
            return Err(invalid("n_train and batch_size must be positive"));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(invalid("lambda must be finite and non-negative"));
        }
        if self.tau == Some(0) {
            return Err(invalid("tau must be positive"));
        }
        if let Some(e) = self.epsilon {
            if !(e.is_finite() && e > 0.0) {
                return Err(invalid("epsilon must be finite and positive"));
            }
        }
        if !(self.lr.initial.is_finite() && self.lr.initial > 0.0 && self.lr.last.is_finite() && self.lr.last >= 0.0) {
            return Err(invalid("learning rates must be finite, initial positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(invalid("momentum must be in [0, 1)"));
        }
        if self.log_every == 0 {
            return Err(invalid("log_every must be positive"));
        }
        if let LayerSelection::Only(ls) = &self.quantize_layers {
            if let Some(&l) = ls.iter().find(|&&l| l > self.hidden.len()) {
                return Err(invalid(format!("layer {l} does not exist")));
            }
        }
        Ok(())
    }

    /// Layer widths, input first.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim];
        sizes.extend(&self.hidden);
        sizes.push(1);
        sizes
    }

    pub fn steps_per_epoch(&self) -> u64 {
        self.n_train.div_ceil(self.batch_size) as u64
    }

    /// Compression schedule with defaults filled in.
    pub fn schedule(&self) -> Result<CompressionSchedule> {
        let phase3 = self.total_steps - self.baseline_steps;
        let (span, origin) = match self.tau_unit {
            ScheduleUnit::Step => (phase3, self.baseline_steps),
            ScheduleUnit::Epoch => {
                let spe = self.steps_per_epoch();
                (phase3 / spe, self.baseline_steps.div_ceil(spe))
            }
        };
        let tau = self.tau.unwrap_or((span / 10).max(1));
        let start = self.compress_start.unwrap_or(origin + (tau / 2).max(1));
        CompressionSchedule::new(tau, start, self.tau_unit)
    }

    pub fn to_text(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "auto".into());
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("seed", self.seed.to_string());
        kv("input_dim", self.input_dim.to_string());
        kv("hidden", join(&self.hidden));
        kv("n_train", self.n_train.to_string());
        kv("n_val", self.n_val.to_string());
        kv("noise", self.noise.to_string());
        kv("bit_width", self.bit_width.to_string());
        kv(
            "centroids",
            match self.centroids {
                CentroidCount::Odd => "odd",
                CentroidCount::Full => "full",
            }
            .into(),
        );
        kv("lambda", self.lambda.to_string());
        kv("normalize_reg", self.normalize_reg.to_string());
        kv("tau", opt(self.tau.map(|v| v.to_string())));
        kv(
            "tau_unit",
            match self.tau_unit {
                ScheduleUnit::Step => "step",
                ScheduleUnit::Epoch => "epoch",
            }
            .into(),
        );
        kv("compress_start", opt(self.compress_start.map(|v| v.to_string())));
        kv("epsilon", opt(self.epsilon.map(|v| v.to_string())));
        kv("baseline_steps", self.baseline_steps.to_string());
        kv("total_steps", self.total_steps.to_string());
        kv("lr", self.lr.initial.to_string());
        kv("lr_final", self.lr.last.to_string());
        kv("lr_decay_start", self.lr.decay_start.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("momentum", self.momentum.to_string());
        kv("reset_optimizer_on_compress", self.reset_optimizer_on_compress.to_string());
        kv(
            "quantize_layers",
            match &self.quantize_layers {
                LayerSelection::All => "all".into(),
                LayerSelection::Only(ls) => join(ls),
            },
        );
        kv("log_every", self.log_every.to_string());
        s
    }

    /// Parses `key = value` lines on top of the defaults. Unknown keys are
    /// rejected; `#` starts a comment.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = QatConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| perr(line_no, "expected `key = value`"))?;
            let p = Field { line: line_no, key, value };
            match key {
                "seed" => c.seed = p.num()?,
                "input_dim" => c.input_dim = p.num()?,
                "hidden" => c.hidden = p.list()?,
                "n_train" => c.n_train = p.num()?,
                "n_val" => c.n_val = p.num()?,
                "noise" => c.noise = p.num()?,
                "bit_width" => c.bit_width = p.num()?,
                "centroids" => {
                    c.centroids = match value {
                        "odd" => CentroidCount::Odd,
                        "full" => CentroidCount::Full,
                        _ => return Err(p.bad()),
                    }
                }
                "lambda" => c.lambda = p.num()?,
                "normalize_reg" => c.normalize_reg = p.num()?,
                "tau" => c.tau = p.auto()?,
                "tau_unit" => {
                    c.tau_unit = match value {
                        "step" => ScheduleUnit::Step,
                        "epoch" => ScheduleUnit::Epoch,
                        _ => return Err(p.bad()),
                    }
                }
                "compress_start" => c.compress_start = p.auto()?,
                "epsilon" => c.epsilon = p.auto()?,
                "baseline_steps" => c.baseline_steps = p.num()?,
                "total_steps" => c.total_steps = p.num()?,
                "lr" => c.lr.initial = p.num()?,
                "lr_final" => c.lr.last = p.num()?,
                "lr_decay_start" => c.lr.decay_start = p.num()?,
                "batch_size" => c.batch_size = p.num()?,
                "momentum" => c.momentum = p.num()?,
                "reset_optimizer_on_compress" => c.reset_optimizer_on_compress = p.num()?,
                "quantize_layers" => {
                    c.quantize_layers = if value == "all" {
                        LayerSelection::All
                    } else {
                        LayerSelection::Only(p.list()?)
                    }
                }
                "log_every" => c.log_every = p.num()?,
                _ => return Err(perr(line_no, format!("unknown key {key:?}"))),
            }
        }
        c.validate()?;
        Ok(c)
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

struct Field<'a> {
    line: usize,
    key: &'a str,
    value: &'a str,
}

impl Field<'_> {
    fn bad(&self) -> Error {
        perr(self.line, format!("invalid value {:?} for {}", self.value, self.key))
    }

    fn num<T: std::str::FromStr>(&self) -> Result<T> {
        self.value.parse().map_err(|_| self.bad())
    }

    fn auto<T: std::str::FromStr>(&self) -> Result<Option<T>> {
        if self.value == "auto" {
            Ok(None)
        } else {
            self.num().map(Some)
        }
    }

    fn list<T: std::str::FromStr>(&self) -> Result<Vec<T>> {
        if self.value.is_empty() {
            return Ok(Vec::new());
        }
        self.value
            .split(',')
            .map(|v| v.trim().parse().map_err(|_| self.bad()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compressor::should_compress;

    #[test]
    fn text_round_trip() {
        let c = QatConfig {
            tau: Some(35),
            epsilon: Some(1e-6),
            quantize_layers: LayerSelection::Only(vec![1, 2]),
            tau_unit: ScheduleUnit::Epoch,
            ..QatConfig::default()
        };
        assert_eq!(QatConfig::from_text(&c.to_text()).unwrap(), c);
        assert_eq!(QatConfig::from_text(&QatConfig::default().to_text()).unwrap(), QatConfig::default());
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(QatConfig::from_text("colour = blue").is_err());
        assert!(QatConfig::from_text("bit_width = 9").is_err());
        assert!(QatConfig::from_text("baseline_steps = 10\ntotal_steps = 5").is_err());
        assert!(QatConfig::from_text("tau = 0").is_err());
        assert!(QatConfig::from_text("lambda").is_err());
        let c = QatConfig::from_text("# comment\nlambda = 1e-3 # trailing\n").unwrap();
        assert_eq!(c.lambda, 1e-3);
    }

    #[test]
    fn default_schedule_is_a_tenth_of_phase_three() {
        let c = QatConfig::default();
        let s = c.schedule().unwrap();
        assert_eq!(s.period(), 200);
        assert_eq!(s.start_after(), 1100);
        // Last compression is half a period before the end.
        let last = (c.baseline_steps + 1..=c.total_steps)
            .filter(|&t| should_compress(&s, t))
            .max();
        assert_eq!(last, Some(2900));
    }

    #[test]
    fn lr_decays_linearly() {
        let lr = LrSchedule {
            initial: 1.0,
            last: 0.0,
            decay_start: 10,
        };
        assert_eq!(lr.at(5, 20), 1.0);
        assert_eq!(lr.at(10, 20), 1.0);
        assert_eq!(lr.at(15, 20), 0.5);
        assert_eq!(lr.at(20, 20), 0.0);
    }
}
