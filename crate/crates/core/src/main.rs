//! Command-line surface for the calibration toolkit.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
//! Diagnostics go to stderr; machine-readable output goes to files only.

use std::path::{Path, PathBuf};

use clap::{ArgGroup, Parser, Subcommand};

use tailcal::calibrate::{apply_temperature, cda_temperature, fit_optimal_temperature, CdaConfig, TsFitConfig};
use tailcal::datagen::{sample_gaussian_mixture, SyntheticSpec};
use tailcal::distill::{self_distill, DistillConfig};
use tailcal::error::{CalibError, Result};
use tailcal::io::{self, Format};
use tailcal::metrics::{bin_stats, confidence_by_class, full_report, reliability_rows, MetricsConfig};
use tailcal::pipeline;
use tailcal::smooth::cda_alpha;
use tailcal::train::{train, LossMode, TrainConfig};
use tailcal::types::{ClassFrequencyProfile, TemperatureVector};
use tailcal::SCHEMA_VERSION;

#[derive(Parser)]
#[command(
    name = "tailcal",
    version,
    about = "Calibration toolkit for classifiers trained on long-tailed data"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic long-tailed Gaussian-mixture dataset.
    GenData {
        #[arg(long)]
        classes: usize,
        #[arg(long)]
        max_per_class: usize,
        #[arg(long)]
        ratio: f64,
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        sep: f64,
        #[arg(long)]
        seed: u64,
        /// Held-out fraction, split into test and validation halves.
        #[arg(long, default_value_t = 0.2)]
        holdout: f64,
        /// Output path prefix; writes <out>.{train,val,test}.{features,labels,json}.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the optimal scalar temperature on validation logits.
    FitTs {
        #[arg(long)]
        val_logits: PathBuf,
        #[arg(long)]
        out_temps: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        t_min: f64,
        #[arg(long, default_value_t = 10.0)]
        t_max: f64,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long, default_value_t = 3)]
        refine_rounds: usize,
        #[arg(long, default_value_t = 0.1)]
        refine_factor: f64,
    },
    /// Expand a fitted scalar temperature into a class-distribution-aware vector.
    CdaTemps {
        /// Temperatures JSON produced by fit-ts.
        #[arg(long)]
        temps: PathBuf,
        /// JSON object containing per-class "counts" (e.g. a dataset sidecar).
        #[arg(long)]
        profile: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        gamma: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply a temperature vector to logits and write probabilities.
    ApplyTs {
        #[arg(long)]
        logits: PathBuf,
        #[arg(long)]
        temps: PathBuf,
        #[arg(long)]
        out_probs: PathBuf,
    },
    /// Build a (class-distribution-aware) smoothing vector from labels.
    SmoothLabels {
        /// Newline-delimited integer labels.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        classes: usize,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long, default_value_t = 0.0)]
        gamma: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the calibration metric suite over probabilities or logits.
    #[command(group(ArgGroup::new("input").required(true).args(["probs", "logits"])))]
    Metrics {
        #[arg(long)]
        probs: Option<PathBuf>,
        #[arg(long)]
        logits: Option<PathBuf>,
        /// Temperatures JSON applied to logits before the metrics.
        #[arg(long, requires = "logits")]
        temps: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        reliability: Option<PathBuf>,
        #[arg(long)]
        by_class: Option<PathBuf>,
        /// JSON object with per-class "counts" for the by-class table;
        /// defaults to tallying the evaluated labels.
        #[arg(long)]
        profile: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        bins: usize,
        #[arg(long, default_value_t = 1e-3)]
        tace_threshold: f64,
        #[arg(long, default_value_t = 10)]
        tace_ranges: usize,
        /// Permit evaluating on the same file the temperatures were fitted on.
        #[arg(long)]
        allow_same_split: bool,
    },
    /// Train the desk-scale classifier.
    Train {
        /// Dataset path prefix as written by gen-data.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_parser = ["ce", "ls", "cda-ls"], default_value = "ce")]
        loss: String,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long, default_value_t = 0.01)]
        gamma: f64,
        /// Training configuration JSON; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Renormalize soft-label rows to sum to one.
        #[arg(long)]
        renormalize: bool,
        #[arg(long)]
        out_model: PathBuf,
        #[arg(long)]
        out_trace: Option<PathBuf>,
    },
    /// Self-distill a student from a trained teacher checkpoint.
    Distill {
        #[arg(long)]
        teacher: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Temperatures JSON for the distillation loss.
        #[arg(long)]
        temps: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_model: PathBuf,
        #[arg(long)]
        out_trace: Option<PathBuf>,
    },
    /// Run gen-data, training, temperature fitting, and metrics in one go.
    Pipeline {
        #[arg(long)]
        spec: PathBuf,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}

/// Extract per-class counts from any JSON object carrying a "counts" array.
fn load_profile(path: &Path) -> Result<ClassFrequencyProfile> {
    let value: serde_json::Value = io::read_json(path)?;
    let counts = value
        .get("counts")
        .and_then(|v| v.as_array())
        .ok_or_else(|| {
            CalibError::Parse(format!("{}: no \"counts\" array found", path.display()))
        })?
        .iter()
        .map(|v| {
            v.as_u64().map(|u| u as usize).ok_or_else(|| {
                CalibError::Parse(format!("{}: counts must be non-negative integers", path.display()))
            })
        })
        .collect::<Result<Vec<usize>>>()?;
    ClassFrequencyProfile::from_counts(counts)
}

/// True when `fitted_on` recorded in a temperatures file resolves to the same
/// file as `eval_path`.
fn same_split(temps_path: &Path, fitted_on: &str, eval_path: &Path) -> bool {
    let recorded = Path::new(fitted_on);
    let resolved = if recorded.is_relative() {
        temps_path.parent().map(|p| p.join(recorded)).unwrap_or_else(|| recorded.to_path_buf())
    } else {
        recorded.to_path_buf()
    };
    match (resolved.canonicalize(), eval_path.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => resolved == eval_path || fitted_on == eval_path.as_os_str().to_str().unwrap_or(""),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::GenData { classes, max_per_class, ratio, dim, sep, seed, holdout, out } => {
            let spec = SyntheticSpec {
                num_classes: classes,
                max_per_class,
                imbalance_ratio: ratio,
                feature_dim: dim,
                class_separation: sep,
                seed,
                holdout_fraction: holdout,
            };
            let ds = sample_gaussian_mixture(&spec)?;
            io::save_split_dataset(&out, &ds, seed)?;
            eprintln!(
                "wrote {} train / {} val / {} test samples to {}.*",
                ds.train.num_samples(),
                ds.val.num_samples(),
                ds.test.num_samples(),
                out.display()
            );
            Ok(())
        }
        Cmd::FitTs { val_logits, out_temps, t_min, t_max, steps, refine_rounds, refine_factor } => {
            let logits = io::load_logits(&val_logits, Format::from_path(&val_logits))?;
            let cfg = TsFitConfig { t_min, t_max, coarse_steps: steps, refine_rounds, refine_factor };
            cfg.validate().map_err(|e| CalibError::Usage(e.to_string()))?;
            let t_opt = fit_optimal_temperature(&logits, &cfg)?;
            io::save_temperatures(
                &out_temps,
                &io::TemperatureFile {
                    schema_version: SCHEMA_VERSION,
                    t_opt,
                    gamma: 0.0,
                    temps: vec![t_opt; logits.num_classes()],
                    source_profile: None,
                    fitted_on: Some(val_logits.display().to_string()),
                },
            )?;
            eprintln!("fitted t_opt = {t_opt}");
            Ok(())
        }
        Cmd::CdaTemps { temps, profile, gamma, out } => {
            let base = io::load_temperatures(&temps)?;
            let prof = load_profile(&profile)?;
            let cfg = CdaConfig { gamma };
            cfg.validate().map_err(|e| CalibError::Usage(e.to_string()))?;
            let vector = cda_temperature(base.t_opt, &prof, &cfg)?;
            io::save_temperatures(
                &out,
                &io::TemperatureFile {
                    schema_version: SCHEMA_VERSION,
                    t_opt: base.t_opt,
                    gamma,
                    temps: vector.as_slice().to_vec(),
                    source_profile: Some(prof.counts().to_vec()),
                    fitted_on: base.fitted_on,
                },
            )?;
            Ok(())
        }
        Cmd::ApplyTs { logits, temps, out_probs } => {
            let logit_set = io::load_logits(&logits, Format::from_path(&logits))?;
            let temp_file = io::load_temperatures(&temps)?;
            let probs = apply_temperature(&logit_set, &temp_file.temperature_vector()?)?;
            io::save_probs(&out_probs, &probs, Format::from_path(&out_probs))?;
            Ok(())
        }
        Cmd::SmoothLabels { labels, classes, alpha, gamma, out } => {
            let label_values = io::read_labels_file(&labels)?;
            let profile = ClassFrequencyProfile::from_labels(&label_values, classes)?;
            let vector = cda_alpha(alpha, &profile, gamma)?;
            io::save_smoothing(
                &out,
                &io::SmoothingFile {
                    schema_version: SCHEMA_VERSION,
                    alpha,
                    gamma,
                    alphas: vector.as_slice().to_vec(),
                },
            )?;
            Ok(())
        }
        Cmd::Metrics {
            probs,
            logits,
            temps,
            report,
            reliability,
            by_class,
            profile,
            bins,
            tace_threshold,
            tace_ranges,
            allow_same_split,
        } => {
            let cfg = MetricsConfig { num_bins: bins, tace_threshold, tace_ranges };
            cfg.validate().map_err(|e| CalibError::Usage(e.to_string()))?;
            let prob_set = match (probs, logits) {
                (Some(path), None) => io::load_probs(&path, Format::from_path(&path))?,
                (None, Some(path)) => {
                    let logit_set = io::load_logits(&path, Format::from_path(&path))?;
                    let vector = match &temps {
                        Some(temps_path) => {
                            let file = io::load_temperatures(temps_path)?;
                            if let Some(fitted_on) = &file.fitted_on {
                                if !allow_same_split && same_split(temps_path, fitted_on, &path) {
                                    return Err(CalibError::Usage(format!(
                                        "temperatures were fitted on {fitted_on}; evaluating the same file needs --allow-same-split"
                                    )));
                                }
                            }
                            file.temperature_vector()?
                        }
                        None => TemperatureVector::constant(1.0, logit_set.num_classes())?,
                    };
                    apply_temperature(&logit_set, &vector)?
                }
                // clap's ArgGroup guarantees exactly one input.
                _ => unreachable!(),
            };
            let metrics_report = full_report(&prob_set, &cfg)?;
            io::save_metrics_report(&report, &metrics_report)?;
            if let Some(path) = reliability {
                let binned = bin_stats(&prob_set, &cfg)?;
                io::write_reliability_csv(&path, &reliability_rows(&binned))?;
            }
            if let Some(path) = by_class {
                let prof = match &profile {
                    Some(p) => load_profile(p)?,
                    None => ClassFrequencyProfile::from_labels(
                        prob_set.labels(),
                        prob_set.num_classes(),
                    )?,
                };
                io::write_by_class_csv(&path, &confidence_by_class(&prob_set, &prof)?)?;
            }
            eprintln!(
                "acc {:.4}  ece {:.4}  sce {:.4}  tace {:.4}  brier {:.4}  uce {:.4}  nll {:.4}",
                metrics_report.acc,
                metrics_report.ece,
                metrics_report.sce,
                metrics_report.tace,
                metrics_report.brier,
                metrics_report.uce,
                metrics_report.nll
            );
            Ok(())
        }
        Cmd::Train { data, loss, alpha, gamma, config, seed, renormalize, out_model, out_trace } => {
            let mut cfg: TrainConfig = match &config {
                Some(path) => io::read_json(path)?,
                None => TrainConfig::default(),
            };
            cfg.loss_mode = match loss.as_str() {
                "ce" => LossMode::Ce,
                "ls" => LossMode::Ls { alpha },
                "cda-ls" => LossMode::CdaLs { alpha, gamma },
                _ => unreachable!("validated by clap"),
            };
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if renormalize {
                cfg.renormalize_targets = true;
            }
            let train_set = io::load_dataset_split(&data, "train")?;
            let val_set = io::load_dataset_split(&data, "val").ok();
            let out = train(&train_set, val_set.as_ref(), &cfg)?;
            io::save_model(&out_model, &out.model, &cfg, None)?;
            if let Some(path) = out_trace {
                io::write_trace_csv(&path, &out.trace)?;
            }
            let last = out.trace.last().expect("at least one epoch");
            eprintln!(
                "trained {} epochs, final train loss {:.6}{}",
                out.trace.len(),
                last.train_loss,
                last.val_acc
                    .map(|a| format!(", val acc {a:.4}"))
                    .unwrap_or_default()
            );
            Ok(())
        }
        Cmd::Distill { teacher, data, temps, lambda, config, seed, out_model, out_trace } => {
            let (teacher_model, _header) = io::load_model(&teacher)?;
            let train_set = io::load_dataset_split(&data, "train")?;
            let temp_file = io::load_temperatures(&temps)?;
            let mut train_cfg: TrainConfig = match &config {
                Some(path) => io::read_json(path)?,
                None => TrainConfig::default(),
            };
            if let Some(seed) = seed {
                train_cfg.seed = seed;
            }
            let cfg = DistillConfig {
                temps: temp_file.temperature_vector()?,
                fuse_lambda: lambda,
                train: train_cfg,
            };
            let out = self_distill(&teacher_model, &train_set, &cfg)?;
            io::save_model(
                &out_model,
                &out.model,
                &cfg.train,
                Some(io::DistillMeta {
                    fuse_lambda: lambda,
                    temps: cfg.temps.as_slice().to_vec(),
                }),
            )?;
            if let Some(path) = out_trace {
                io::write_trace_csv(&path, &out.trace)?;
            }
            eprintln!(
                "distilled {} epochs, final train loss {:.6}",
                out.trace.len(),
                out.trace.last().expect("at least one epoch").train_loss
            );
            Ok(())
        }
        Cmd::Pipeline { spec } => {
            let spec = pipeline::load_spec(&spec)?;
            let report = pipeline::run_pipeline(&spec)?;
            eprint!("{}", pipeline::format_comparison(&report));
            eprintln!("artifacts in {}", spec.out_dir.display());
            Ok(())
        }
    }
}
