//! The four-phase pipeline: float baseline, codebook fitting, regularized
//! training with periodic hard compression, and terminal compression.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::QatConfig;
use super::model::ToyModel;
use super::task::{generate_task, Task};
use super::train::{compress_model, train_step, Sgd};
use crate::codebook::{fit_codebook, Codebook, CodebookConfig, LambdaSchedule, ScaleMode};
use crate::compressor::{
    convergence_rate, default_epsilon, hard_compress, should_compress, ConvergenceReport, ScheduleUnit,
};
use crate::error::Result;
use crate::packing::pack;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    pub step: u64,
    /// Batch task loss before the update.
    pub task_loss: f64,
    /// Regularizer value before the update; 0 outside phase 3.
    pub reg_loss: f64,
    /// Validation loss after the update (and after compression, if any).
    pub val_loss: Option<f64>,
    /// Overall convergence rate after the update; absent before codebooks exist.
    pub gamma: Option<f64>,
    pub compressed: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub records: Vec<LogRecord>,
}

impl TrainingLog {
    pub const CSV_HEADER: &'static str = "step,task_loss,reg_loss,val_loss,gamma,compressed";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.step,
                r.task_loss,
                r.reg_loss,
                opt(r.val_loss),
                opt(r.gamma),
                u8::from(r.compressed)
            );
        }
        s
    }
}

/// Final state of one quantized layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerOutput {
    pub layer: usize,
    pub name: String,
    pub codebook: Codebook,
    pub epsilon: f64,
    pub packed: Vec<u8>,
    /// Convergence CSV rows logged during phase 3, header first.
    pub gamma_csv: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineSummary {
    /// Validation loss of the float weights just before terminal compression.
    pub float_val_loss: Option<f64>,
    /// Validation loss after terminal compression.
    pub quantized_val_loss: Option<f64>,
    /// Overall convergence rate just before terminal compression.
    pub pre_terminal_gamma: f64,
    /// Hard compressions performed during phase 3.
    pub compressions: usize,
}

impl PipelineSummary {
    /// Quantization-induced validation degradation.
    pub fn degradation(&self) -> Option<f64> {
        Some(self.quantized_val_loss? - self.float_val_loss?)
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub log: TrainingLog,
    pub layers: Vec<LayerOutput>,
    /// Model right before terminal compression.
    pub float_model: ToyModel,
    /// Model after terminal compression.
    pub quantized_model: ToyModel,
    pub task: Task,
    pub summary: PipelineSummary,
}

/// Runs the whole pipeline in memory.
pub fn run_pipeline(config: &QatConfig) -> Result<PipelineOutput> {
    let mut log = TrainingLog::default();
    run_logged(config, &mut log)
}

/// Runs the pipeline and writes `config.txt`, `log.csv`, and for each
/// quantized layer `<name>.s8bq`, `<name>.codebook` and `<name>.gamma.csv`
/// into `dir`. On divergence the partial log is still written.
pub fn run_pipeline_to_dir(config: &QatConfig, dir: &Path) -> Result<PipelineOutput> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.txt"), config.to_text())?;
    let mut log = TrainingLog::default();
    let result = run_logged(config, &mut log);
    fs::write(dir.join("log.csv"), log.to_csv())?;
    let out = result?;
    for layer in &out.layers {
        fs::write(dir.join(format!("{}.s8bq", layer.name)), &layer.packed)?;
        fs::write(dir.join(format!("{}.codebook", layer.name)), layer.codebook.to_text())?;
        fs::write(dir.join(format!("{}.gamma.csv", layer.name)), &layer.gamma_csv)?;
    }
    Ok(out)
}

fn run_logged(config: &QatConfig, log: &mut TrainingLog) -> Result<PipelineOutput> {
    config.validate()?;
    let task = generate_task(config.seed, config.input_dim, config.n_train, config.n_val, config.noise)?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut model = ToyModel::init(&config.layer_sizes(), &mut init_rng)?;
    let mut batch_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(2));
    let mut opt = Sgd::new(config.momentum);
    let schedule = config.schedule()?;
    let has_val = !task.val.is_empty();

    let mut order: Vec<usize> = (0..task.train.len()).collect();
    let mut cursor = order.len();
    let mut next_batch = |rng: &mut ChaCha8Rng| {
        let mut rows = Vec::with_capacity(config.batch_size);
        while rows.len() < config.batch_size.min(order.len()) {
            if cursor == order.len() {
                order.shuffle(rng);
                cursor = 0;
            }
            let take = (config.batch_size - rows.len()).min(order.len() - cursor);
            rows.extend_from_slice(&order[cursor..cursor + take]);
            cursor += take;
        }
        task.train.select(&rows)
    };
    let should_log = |step: u64, compressed: bool| {
        compressed || step.is_multiple_of(config.log_every) || step == config.total_steps
    };

    // Phase 1: float baseline.
    for step in 1..=config.baseline_steps {
        let batch = next_batch(&mut batch_rng);
        let lr = config.lr.at(step, config.total_steps);
        let losses = train_step(&mut model, &mut opt, &batch, None, lr, config.normalize_reg)?;
        if should_log(step, false) {
            log.records.push(LogRecord {
                step,
                task_loss: losses.task,
                reg_loss: 0.0,
                val_loss: has_val.then(|| model.loss(&task.val)),
                gamma: None,
                compressed: false,
            });
        }
    }

    // Phase 2: per-layer codebooks, frozen from here on.
    let codebook_config = CodebookConfig {
        bit_width: config.bit_width,
        lambda: LambdaSchedule::Shared(config.lambda),
        scale_mode: ScaleMode::MaxAbs,
        centroids: config.centroids,
        ..CodebookConfig::default()
    };
    let mut codebooks: Vec<Option<Codebook>> = Vec::with_capacity(model.layers().len());
    for (i, layer) in model.layers().iter().enumerate() {
        codebooks.push(if config.quantize_layers.includes(i) {
            Some(fit_codebook(&layer.weights, &codebook_config)?.codebook)
        } else {
            None
        });
    }
    let epsilons: Vec<f64> = codebooks
        .iter()
        .map(|cb| match (cb, config.epsilon) {
            (_, Some(e)) => e,
            (Some(cb), None) => default_epsilon(cb),
            (None, None) => 0.0,
        })
        .collect();
    let mut gamma_csv: Vec<String> = codebooks
        .iter()
        .map(|cb| {
            cb.as_ref()
                .map(|cb| ConvergenceReport::csv_header(cb.len()) + "\n")
                .unwrap_or_default()
        })
        .collect();

    let reports = |model: &ToyModel| -> Result<Vec<Option<ConvergenceReport>>> {
        model
            .layers()
            .iter()
            .zip(&codebooks)
            .zip(&epsilons)
            .map(|((layer, cb), &eps)| {
                cb.as_ref()
                    .map(|cb| convergence_rate(&layer.weights, cb, eps))
                    .transpose()
            })
            .collect()
    };
    let overall = |reports: &[Option<ConvergenceReport>]| {
        let (hit, total) = reports
            .iter()
            .flatten()
            .fold((0usize, 0usize), |(h, t), r| (h + r.converged(), t + r.total()));
        if total == 0 {
            1.0
        } else {
            hit as f64 / total as f64
        }
    };

    // Phase 3: regularized training with periodic hard compression.
    let steps_per_epoch = config.steps_per_epoch();
    let mut compressions = 0;
    for step in config.baseline_steps + 1..=config.total_steps {
        let batch = next_batch(&mut batch_rng);
        let lr = config.lr.at(step, config.total_steps);
        let losses = train_step(
            &mut model,
            &mut opt,
            &batch,
            Some(&codebooks),
            lr,
            config.normalize_reg,
        )?;
        let tick = match schedule.unit() {
            ScheduleUnit::Step => Some(step),
            ScheduleUnit::Epoch => (step % steps_per_epoch == 0).then(|| step / steps_per_epoch),
        };
        let compressed = tick.is_some_and(|t| should_compress(&schedule, t));
        if compressed {
            for (layer, cb) in model.layers_mut().iter_mut().zip(&codebooks) {
                if let Some(cb) = cb {
                    layer.weights = hard_compress(&layer.weights, cb).weights;
                }
            }
            if config.reset_optimizer_on_compress {
                opt.reset();
            }
            compressions += 1;
        }
        if should_log(step, compressed) {
            let reps = reports(&model)?;
            for (csv, rep) in gamma_csv.iter_mut().zip(&reps) {
                if let Some(rep) = rep {
                    csv.push_str(&rep.csv_row(step));
                    csv.push('\n');
                }
            }
            log.records.push(LogRecord {
                step,
                task_loss: losses.task,
                reg_loss: losses.reg,
                val_loss: has_val.then(|| model.loss(&task.val)),
                gamma: Some(overall(&reps)),
                compressed,
            });
        }
    }

    // Phase 4: terminal compression and packing.
    let pre_terminal_gamma = overall(&reports(&model)?);
    let float_val_loss = has_val.then(|| model.loss(&task.val));
    let quantized_model = compress_model(&model, &codebooks);
    let quantized_val_loss = has_val.then(|| quantized_model.loss(&task.val));

    let mut layers = Vec::new();
    for (i, ((layer, cb), csv)) in model.layers().iter().zip(&codebooks).zip(gamma_csv).enumerate() {
        let Some(cb) = cb else { continue };
        let hc = hard_compress(&layer.weights, cb);
        layers.push(LayerOutput {
            layer: i,
            name: layer.weights.name().to_string(),
            codebook: cb.clone(),
            epsilon: epsilons[i],
            packed: pack(&hc.indices, cb, layer.weights.shape())?,
            gamma_csv: csv,
        });
    }

    Ok(PipelineOutput {
        log: log.clone(),
        layers,
        float_model: model,
        quantized_model,
        task,
        summary: PipelineSummary {
            float_val_loss,
            quantized_val_loss,
            pre_terminal_gamma,
            compressions,
        },
    })
}
