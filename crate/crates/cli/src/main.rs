//! `s8bq`: fit codebooks, quantize, pack and inspect sub-8-bit weights.

mod files;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use s8bq_core::qat::{run_pipeline_to_dir, QatConfig};
use s8bq_core::regularizer::{weight_grad, weight_loss};
use s8bq_core::{
    convergence_rate, default_epsilon, distance_to_kink, fit_codebook, hard_compress, mracos, pack, unpack,
    CentroidCount, Codebook, CodebookConfig, LambdaSchedule, ScaleMode, WeightTensor,
};

use files::{Failure, Format, Outcome};

#[derive(Parser)]
#[command(name = "s8bq", version, about = "Sub-8-bit INT8-grid weight quantization")]
struct Cli {
    /// Directory for every file the command writes.
    #[arg(long, global = true, env = "S8BQ_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a Lloyd-Max codebook on the INT8 grid.
    Fit {
        #[command(flatten)]
        input: WeightInput,
        #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u8).range(1..=8))]
        bits: u8,
        /// Regularization weight stored in every region.
        #[arg(long, default_value_t = 5e-4)]
        lambda: f64,
        #[arg(long, value_enum, default_value_t = ScaleArg::MaxAbs)]
        scale_mode: ScaleArg,
        /// Scale for `--scale-mode fixed`.
        #[arg(long, required_if_eq("scale_mode", "fixed"))]
        scale: Option<f64>,
        /// Fit 2^b centroids instead of 2^b - 1.
        #[arg(long)]
        full: bool,
        #[arg(long, default_value_t = 200)]
        max_iters: usize,
        /// Codebook file name; defaults to `<stem>.codebook`.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Hard-compress weights onto a codebook and report convergence.
    Quantize {
        #[command(flatten)]
        input: WeightInput,
        codebook: PathBuf,
        /// Squared-distance threshold; defaults to a hundredth of the
        /// squared smallest centroid gap.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Defaults to `<stem>.quantized.<ext>`.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Hard-compress weights and write the packed index stream.
    Pack {
        #[command(flatten)]
        input: WeightInput,
        codebook: PathBuf,
        /// Defaults to `<stem>.s8bq`.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Decode a packed file back to weights.
    Unpack {
        file: PathBuf,
        /// Output format; `auto` goes by the output extension.
        #[arg(long, value_enum, default_value_t = Format::Auto)]
        format: Format,
        /// Write the INT8 codes, one per line, instead of weights.
        #[arg(long)]
        codes: bool,
        /// Defaults to `<stem>.f64`, `<stem>.txt` or `<stem>.codes.txt`.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Print the header of a packed file.
    Inspect { file: PathBuf },
    /// Compare the analytic regularizer gradient with finite differences.
    GradCheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u8).range(1..=8))]
        bits: u8,
        #[arg(long, default_value_t = 1000)]
        points: usize,
        #[arg(long, default_value_t = 5e-4)]
        lambda: f64,
        /// Offset added to every analytic gradient, to confirm the check
        /// catches a wrong gradient.
        #[arg(long, default_value_t = 0.0, hide = true)]
        perturb: f64,
    },
    /// Run the toy training pipeline and write its logs and packed layers.
    TrainDemo {
        /// `key = value` config file; missing keys keep their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Summary statistics of a weight file, optionally against a codebook.
    Stats {
        #[command(flatten)]
        input: WeightInput,
        #[arg(long)]
        codebook: Option<PathBuf>,
    },
}

#[derive(Args)]
struct WeightInput {
    /// Weight file: little-endian doubles or text.
    weights: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Auto)]
    format: Format,
    /// Tensor shape such as `64,80`; defaults to one dimension.
    #[arg(long, value_parser = files::parse_shape)]
    shape: Option<files::Shape>,
}

impl WeightInput {
    fn load(&self) -> Outcome<WeightTensor> {
        files::read_weights(&self.weights, self.format, self.shape.as_ref().map(|s| s.0.as_slice()))
    }

    fn stem(&self) -> String {
        stem(&self.weights)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScaleArg {
    MaxAbs,
    Fixed,
}

fn stem(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or("out").to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { files::EXIT_USAGE as u8 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Outcome {
    let out = |name: PathBuf| cli.out_dir.join(name);
    match &cli.command {
        Command::Fit {
            input,
            bits,
            lambda,
            scale_mode,
            scale,
            full,
            max_iters,
            output,
        } => {
            let w = input.load()?;
            let config = CodebookConfig {
                bit_width: *bits,
                lambda: LambdaSchedule::Shared(*lambda),
                scale_mode: match scale_mode {
                    ScaleArg::MaxAbs => ScaleMode::MaxAbs,
                    ScaleArg::Fixed => ScaleMode::Fixed(scale.unwrap()),
                },
                centroids: if *full { CentroidCount::Full } else { CentroidCount::Odd },
                max_iters: *max_iters,
                ..CodebookConfig::default()
            };
            let fit = fit_codebook(&w, &config)?;
            let cb = &fit.codebook;
            let path = out(output.clone().unwrap_or_else(|| format!("{}.codebook", input.stem()).into()));
            files::write(&path, cb.to_text())?;
            let snapped = hard_compress(&w, cb);
            println!("K {}", cb.len());
            println!("scale {}", cb.scale());
            println!("lloyd_mse {:e}", fit.lloyd_mse);
            println!("snapped_mse {:e}", mse(&w, &snapped.weights));
            println!("regions {}", cb.regions().len());
            for r in cb.regions() {
                println!("  [{}, {}) theta {} lambda {}", r.lo, r.hi, r.theta, r.lambda);
            }
            println!("wrote {}", path.display());
        }
        Command::Quantize {
            input,
            codebook,
            epsilon,
            output,
        } => {
            let w = input.load()?;
            let cb = load_codebook(codebook)?;
            let eps = epsilon.unwrap_or_else(|| default_epsilon(&cb));
            // Convergence of the weights as given, before compression.
            let report = convergence_rate(&w, &cb, eps)?;
            let hc = hard_compress(&w, &cb);
            let format = input.format.resolve(&input.weights);
            let path = out(output
                .clone()
                .unwrap_or_else(|| format!("{}.quantized.{}", input.stem(), format.extension()).into()));
            files::write_weights(&path, format, hc.weights.values())?;
            println!("epsilon {:e}", report.epsilon);
            println!("gamma {}", report.overall_gamma);
            println!("converged {} of {}", report.converged(), report.total());
            println!("mse {:e}", mse(&w, &hc.weights));
            println!("numerator count gamma");
            for p in &report.per_partition {
                println!("{} {} {}", p.numerator, p.count, p.gamma);
            }
            println!("wrote {}", path.display());
        }
        Command::Pack {
            input,
            codebook,
            output,
        } => {
            let w = input.load()?;
            let cb = load_codebook(codebook)?;
            let hc = hard_compress(&w, &cb);
            let bytes = pack(&hc.indices, &cb, w.shape())?;
            let path = out(output.clone().unwrap_or_else(|| format!("{}.s8bq", input.stem()).into()));
            files::write(&path, &bytes)?;
            println!("bytes {}", bytes.len());
            println!("wrote {}", path.display());
        }
        Command::Unpack {
            file,
            format,
            codes,
            output,
        } => {
            let packed = unpack(&files::read(file)?)?;
            let codes_out: Vec<i8> = packed.indices.iter().map(|&i| packed.numerators[usize::from(i)]).collect();
            let default = if *codes {
                format!("{}.codes.txt", stem(file))
            } else {
                format!("{}.{}", stem(file), format.extension())
            };
            let path = out(output.clone().unwrap_or_else(|| default.into()));
            if *codes {
                let text: String = codes_out.iter().map(|c| format!("{c}\n")).collect();
                files::write(&path, text)?;
            } else {
                let values: Vec<f64> = codes_out.iter().map(|&c| s8bq_core::grid_value(packed.scale, c)).collect();
                files::write_weights(&path, *format, &values)?;
            }
            println!("shape {}", join(&packed.shape));
            println!("wrote {}", path.display());
        }
        Command::Inspect { file } => {
            let bytes = files::read(file)?;
            let p = unpack(&bytes)?;
            let n = p.indices.len();
            println!("bit_width {}", p.bit_width);
            println!("scale {}", p.scale);
            println!("K {}", p.numerators.len());
            println!("numerators {}", join(&p.numerators));
            println!("shape {}", join(&p.shape));
            println!("elements {n}");
            println!("header_bytes {}", p.header_len());
            println!("payload_bytes {}", p.payload_len());
            println!("total_bytes {}", bytes.len());
            if n > 0 {
                println!("payload_vs_int8 {}", p.payload_len() as f64 / n as f64);
            }
        }
        Command::GradCheck {
            seed,
            bits,
            points,
            lambda,
            perturb,
        } => grad_check(*seed, *bits, *points, *lambda, *perturb)?,
        Command::TrainDemo { config } => {
            let config = match config {
                Some(path) => QatConfig::from_text(&files::read_text(path)?)?,
                None => QatConfig::default(),
            };
            let dir = &cli.out_dir;
            let result = run_pipeline_to_dir(&config, dir).map_err(|e| match e {
                s8bq_core::Error::Io(source) => Failure::Io {
                    path: dir.clone(),
                    source,
                },
                other => other.into(),
            })?;
            let s = result.summary;
            let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), |v| format!("{v:e}"));
            println!("compressions {}", s.compressions);
            println!("pre_terminal_gamma {}", s.pre_terminal_gamma);
            println!("float_val_loss {}", opt(s.float_val_loss));
            println!("quantized_val_loss {}", opt(s.quantized_val_loss));
            println!("degradation {}", opt(s.degradation()));
            for layer in &result.layers {
                println!("layer {} K {} bytes {}", layer.name, layer.codebook.len(), layer.packed.len());
            }
            println!("wrote {}", dir.display());
        }
        Command::Stats { input, codebook } => {
            let w = input.load()?;
            let v = w.values();
            let n = v.len() as f64;
            println!("shape {}", join(w.shape()));
            println!("elements {}", v.len());
            if !v.is_empty() {
                let mean = v.iter().sum::<f64>() / n;
                let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
                println!("min {}", v.iter().copied().fold(f64::INFINITY, f64::min));
                println!("max {}", v.iter().copied().fold(f64::NEG_INFINITY, f64::max));
                println!("max_abs {}", v.iter().fold(0.0f64, |m, x| m.max(x.abs())));
                println!("mean {mean}");
                println!("std {}", var.sqrt());
            }
            println!("distinct {}", w.distinct_count());
            if let Some(path) = codebook {
                let cb = load_codebook(path)?;
                let reg = mracos(&w, &cb);
                let report = convergence_rate(&w, &cb, default_epsilon(&cb))?;
                println!("quantization_mse {:e}", mse(&w, &hard_compress(&w, &cb).weights));
                println!("gamma {}", report.overall_gamma);
                println!("regularizer_loss {:e}", reg.loss);
                println!("outside_regions {}", reg.clipped_count);
            }
        }
    }
    Ok(())
}

fn load_codebook(path: &Path) -> Outcome<Codebook> {
    Codebook::from_text(&files::read_text(path)?).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn mse(a: &WeightTensor, b: &WeightTensor) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let sum: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y) * (x - y)).sum();
    sum / a.len() as f64
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

/// Points closer than this to a kink or region bound are skipped.
const KINK_MARGIN: f64 = 1e-4;
const STEP: f64 = 1e-6;
const TOLERANCE: f64 = 1e-5;

fn grad_check(seed: u64, bits: u8, points: usize, lambda: f64, perturb: f64) -> Outcome {
    if points == 0 {
        return Err(Failure::Usage("--points must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 0.25).unwrap();
    let values: Vec<f64> = (0..4096).map(|_| normal.sample(&mut rng)).collect();
    let config = CodebookConfig {
        lambda: LambdaSchedule::Shared(lambda),
        ..CodebookConfig::with_bits(bits)
    };
    let cb = fit_codebook(&WeightTensor::from_vec("grad-check", values)?, &config)?.codebook;
    let lo = cb.regions()[0].lo;
    let hi = cb.regions().last().unwrap().hi;
    let f = |w: f64| weight_loss(&cb, w).unwrap_or(0.0);

    let (mut worst, mut worst_at, mut skipped) = (0.0f64, 0.0, 0usize);
    let mut checked = 0;
    while checked < points {
        let w = rng.random_range(lo..hi);
        if distance_to_kink(&cb, w) < KINK_MARGIN {
            skipped += 1;
            continue;
        }
        let fd = (f(w + STEP) - f(w - STEP)) / (2.0 * STEP);
        let g = weight_grad(&cb, w) + perturb;
        let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-10);
        if rel > worst {
            worst = rel;
            worst_at = w;
        }
        checked += 1;
    }
    println!("K {} regions {}", cb.len(), cb.regions().len());
    println!("points {checked} skipped {skipped}");
    println!("max_relative_error {worst:e} at w = {worst_at}");
    if worst < TOLERANCE {
        println!("PASS");
        Ok(())
    } else {
        println!("FAIL");
        Err(Failure::Check(format!("max relative error {worst:e} exceeds {TOLERANCE:e}")))
    }
}
