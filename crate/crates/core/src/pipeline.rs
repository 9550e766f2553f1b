//! End-to-end pipeline: generate data, train, fit temperatures, and emit a
//! per-method comparison table.
//!
//! One invocation covers the post-hoc calibration comparison
//! (baseline / TS / CDA-TS) and optionally the training-time methods
//! (LS / CDA-LS) and the self-distillation variants. Every artifact lands
//! under `out_dir`; all randomness flows from the seeds in the spec, so the
//! output tree is reproducible byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibrate::{apply_temperature, cda_temperature, fit_optimal_temperature, CdaConfig, TsFitConfig};
use crate::datagen::{sample_gaussian_mixture, SplitDataset, SyntheticSpec};
use crate::distill::{self_distill, DistillConfig};
use crate::error::{CalibError, Result};
use crate::io;
use crate::metrics::{bin_stats, confidence_by_class, full_report, reliability_rows, MetricsConfig};
use crate::train::{train, LossMode, Model, TrainConfig, TrainOutcome};
use crate::types::{ProbSet, TemperatureVector};
use crate::SCHEMA_VERSION;

fn default_schema_version() -> u32 {
    SCHEMA_VERSION
}

fn default_cda_gamma() -> f64 {
    0.1
}

fn default_ls_alpha() -> f64 {
    0.1
}

fn default_cda_ls_gamma() -> f64 {
    0.01
}

fn default_methods() -> Vec<String> {
    vec!["baseline".into(), "ts".into(), "cda-ts".into()]
}

fn default_sd_lambda() -> f64 {
    0.5
}

fn default_sd_fixed_t() -> f64 {
    4.0
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SdSpec {
    #[serde(default = "default_sd_lambda")]
    pub fuse_lambda: f64,
    #[serde(default = "default_sd_fixed_t")]
    pub fixed_t: f64,
}

impl Default for SdSpec {
    fn default() -> Self {
        Self { fuse_lambda: default_sd_lambda(), fixed_t: default_sd_fixed_t() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PipelineSpec {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub data: SyntheticSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub ts: TsFitConfig,
    #[serde(default = "default_cda_gamma")]
    pub cda_gamma: f64,
    #[serde(default = "default_ls_alpha")]
    pub ls_alpha: f64,
    #[serde(default = "default_cda_ls_gamma")]
    pub cda_ls_gamma: f64,
    #[serde(default)]
    pub sd: SdSpec,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    pub out_dir: PathBuf,
}

/// One comparison row, keyed by the conventional method name.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MethodRow {
    pub method: String,
    pub acc: f64,
    pub ece: f64,
    pub sce: f64,
    pub tace: f64,
    pub brier: f64,
    pub uce: f64,
    pub nll: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub rows: Vec<MethodRow>,
}

struct PipelineState<'a> {
    spec: &'a PipelineSpec,
    data: SplitDataset,
    baseline: Option<TrainOutcome>,
    t_opt: Option<f64>,
    cda_temps: Option<TemperatureVector>,
}

impl<'a> PipelineState<'a> {
    fn baseline(&mut self) -> Result<&TrainOutcome> {
        if self.baseline.is_none() {
            let cfg = TrainConfig { loss_mode: LossMode::Ce, ..self.spec.train.clone() };
            let out = train(&self.data.train, Some(&self.data.val), &cfg)?;
            let dir = self.spec.out_dir.join("models");
            io::save_model(&dir.join("baseline.model"), &out.model, &cfg, None)?;
            io::write_trace_csv(&dir.join("baseline.trace.csv"), &out.trace)?;
            let logits_dir = self.spec.out_dir.join("logits");
            let val_logits = out.model.forward(&self.data.val)?;
            let test_logits = out.model.forward(&self.data.test)?;
            io::save_logits(
                &logits_dir.join("baseline.val.bin"),
                &val_logits,
                io::Format::Binary,
                io::Dtype::F64,
            )?;
            io::save_logits(
                &logits_dir.join("baseline.test.bin"),
                &test_logits,
                io::Format::Binary,
                io::Dtype::F64,
            )?;
            self.baseline = Some(out);
        }
        Ok(self.baseline.as_ref().unwrap())
    }

    fn t_opt(&mut self) -> Result<f64> {
        if self.t_opt.is_none() {
            self.baseline()?;
            let val_logits = self.baseline.as_ref().unwrap().model.forward(&self.data.val)?;
            let t = fit_optimal_temperature(&val_logits, &self.spec.ts)?;
            let n = self.data.train.num_classes();
            io::save_temperatures(
                &self.spec.out_dir.join("temps").join("ts.json"),
                &io::TemperatureFile {
                    schema_version: SCHEMA_VERSION,
                    t_opt: t,
                    gamma: 0.0,
                    temps: vec![t; n],
                    source_profile: None,
                    fitted_on: Some("logits/baseline.val.bin".into()),
                },
            )?;
            self.t_opt = Some(t);
        }
        Ok(self.t_opt.unwrap())
    }

    fn cda_temps(&mut self) -> Result<TemperatureVector> {
        if self.cda_temps.is_none() {
            let t_opt = self.t_opt()?;
            let profile = self.data.train.profile.clone();
            let temps = cda_temperature(t_opt, &profile, &CdaConfig { gamma: self.spec.cda_gamma })?;
            io::save_temperatures(
                &self.spec.out_dir.join("temps").join("cda.json"),
                &io::TemperatureFile {
                    schema_version: SCHEMA_VERSION,
                    t_opt,
                    gamma: self.spec.cda_gamma,
                    temps: temps.as_slice().to_vec(),
                    source_profile: Some(profile.counts().to_vec()),
                    fitted_on: Some("logits/baseline.val.bin".into()),
                },
            )?;
            self.cda_temps = Some(temps);
        }
        Ok(self.cda_temps.clone().unwrap())
    }

    fn trained_variant(&mut self, slug: &str, loss_mode: LossMode) -> Result<Model> {
        self.baseline()?;
        let cfg = TrainConfig { loss_mode, ..self.spec.train.clone() };
        let out = train(&self.data.train, Some(&self.data.val), &cfg)?;
        let dir = self.spec.out_dir.join("models");
        io::save_model(&dir.join(format!("{slug}.model")), &out.model, &cfg, None)?;
        io::write_trace_csv(&dir.join(format!("{slug}.trace.csv")), &out.trace)?;
        Ok(out.model)
    }

    fn distilled_variant(&mut self, slug: &str, temps: TemperatureVector) -> Result<Model> {
        self.baseline()?;
        let teacher = self.baseline.as_ref().unwrap().model.clone();
        let cfg = DistillConfig {
            temps: temps.clone(),
            fuse_lambda: self.spec.sd.fuse_lambda,
            train: TrainConfig { loss_mode: LossMode::Ce, ..self.spec.train.clone() },
        };
        let out = self_distill(&teacher, &self.data.train, &cfg)?;
        let dir = self.spec.out_dir.join("models");
        io::save_model(
            &dir.join(format!("{slug}.model")),
            &out.model,
            &cfg.train,
            Some(io::DistillMeta {
                fuse_lambda: cfg.fuse_lambda,
                temps: temps.as_slice().to_vec(),
            }),
        )?;
        io::write_trace_csv(&dir.join(format!("{slug}.trace.csv")), &out.trace)?;
        Ok(out.model)
    }

    /// Test-split probabilities for one method key.
    fn method_probs(&mut self, key: &str) -> Result<ProbSet> {
        let n = self.data.train.num_classes();
        let unit = TemperatureVector::constant(1.0, n)?;
        match key {
            "baseline" => {
                self.baseline()?;
                let logits = self.baseline.as_ref().unwrap().model.forward(&self.data.test)?;
                apply_temperature(&logits, &unit)
            }
            "ts" => {
                let t = self.t_opt()?;
                let logits = self.baseline.as_ref().unwrap().model.forward(&self.data.test)?;
                apply_temperature(&logits, &TemperatureVector::constant(t, n)?)
            }
            "cda-ts" => {
                let temps = self.cda_temps()?;
                let logits = self.baseline.as_ref().unwrap().model.forward(&self.data.test)?;
                apply_temperature(&logits, &temps)
            }
            "ls" => {
                let model =
                    self.trained_variant("ls", LossMode::Ls { alpha: self.spec.ls_alpha })?;
                apply_temperature(&model.forward(&self.data.test)?, &unit)
            }
            "cda-ls" => {
                let model = self.trained_variant(
                    "cda_ls",
                    LossMode::CdaLs { alpha: self.spec.ls_alpha, gamma: self.spec.cda_ls_gamma },
                )?;
                apply_temperature(&model.forward(&self.data.test)?, &unit)
            }
            "sd" => {
                let temps = TemperatureVector::constant(self.spec.sd.fixed_t, n)?;
                let model = self.distilled_variant("sd", temps)?;
                apply_temperature(&model.forward(&self.data.test)?, &unit)
            }
            "sd-opt-t" => {
                let t = self.t_opt()?;
                let model =
                    self.distilled_variant("sd_opt_t", TemperatureVector::constant(t, n)?)?;
                apply_temperature(&model.forward(&self.data.test)?, &unit)
            }
            "sd-cda-opt-t" => {
                let temps = self.cda_temps()?;
                let model = self.distilled_variant("sd_cda_opt_t", temps)?;
                apply_temperature(&model.forward(&self.data.test)?, &unit)
            }
            other => Err(CalibError::Usage(format!(
                "unknown pipeline method {other:?}; known: baseline, ts, cda-ts, ls, cda-ls, sd, sd-opt-t, sd-cda-opt-t"
            ))),
        }
    }
}

/// Conventional row name for a method key.
pub fn method_display_name(key: &str) -> &'static str {
    match key {
        "baseline" => "Baseline",
        "ts" => "TS",
        "cda-ts" => "CDA-TS",
        "ls" => "LS",
        "cda-ls" => "CDA-LS",
        "sd" => "SD",
        "sd-opt-t" => "SD Opt. T",
        "sd-cda-opt-t" => "SD CDA Opt. T",
        _ => "?",
    }
}

fn method_slug(key: &str) -> String {
    key.replace('-', "_")
}

pub fn run_pipeline(spec: &PipelineSpec) -> Result<ComparisonReport> {
    spec.data.validate()?;
    spec.train.validate()?;
    spec.ts.validate()?;
    spec.metrics.validate()?;
    for key in &spec.methods {
        method_display_name(key);
        if !matches!(
            key.as_str(),
            "baseline" | "ts" | "cda-ts" | "ls" | "cda-ls" | "sd" | "sd-opt-t" | "sd-cda-opt-t"
        ) {
            return Err(CalibError::Usage(format!("unknown pipeline method {key:?}")));
        }
    }

    for sub in ["", "models", "logits", "temps", "reports"] {
        fs::create_dir_all(spec.out_dir.join(sub))?;
    }

    let data = sample_gaussian_mixture(&spec.data)?;
    io::save_split_dataset(&spec.out_dir.join("data"), &data, spec.data.seed)?;

    let mut state = PipelineState {
        spec,
        data,
        baseline: None,
        t_opt: None,
        cda_temps: None,
    };

    let mut rows = Vec::with_capacity(spec.methods.len());
    for key in &spec.methods {
        let probs = state.method_probs(key)?;
        let report = full_report(&probs, &spec.metrics)?;
        let slug = method_slug(key);
        let reports_dir = spec.out_dir.join("reports");
        io::save_metrics_report(&reports_dir.join(format!("{slug}.report.json")), &report)?;
        let binned = bin_stats(&probs, &spec.metrics)?;
        io::write_reliability_csv(
            &reports_dir.join(format!("{slug}.reliability.csv")),
            &reliability_rows(&binned),
        )?;
        let by_class = confidence_by_class(&probs, &state.data.train.profile)?;
        io::write_by_class_csv(&reports_dir.join(format!("{slug}.by_class.csv")), &by_class)?;
        rows.push(MethodRow {
            method: method_display_name(key).to_string(),
            acc: report.acc,
            ece: report.ece,
            sce: report.sce,
            tace: report.tace,
            brier: report.brier,
            uce: report.uce,
            nll: report.nll,
        });
    }

    let comparison = ComparisonReport { schema_version: SCHEMA_VERSION, rows };
    io::write_json(&spec.out_dir.join("comparison.json"), &comparison)?;
    Ok(comparison)
}

/// Render the comparison as a fixed-width table (diagnostic output).
pub fn format_comparison(report: &ComparisonReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<14} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
        "Method", "ACC", "ECE", "SCE", "TACE", "BS", "UCE", "NLL"
    ));
    for row in &report.rows {
        out.push_str(&format!(
            "{:<14} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}\n",
            row.method, row.acc, row.ece, row.sce, row.tace, row.brier, row.uce, row.nll
        ));
    }
    out
}

/// Load a pipeline spec, resolving a relative `out_dir` against the spec
/// file's directory.
pub fn load_spec(path: &Path) -> Result<PipelineSpec> {
    let mut spec: PipelineSpec = io::read_json(path)?;
    if spec.out_dir.is_relative() {
        if let Some(parent) = path.parent() {
            spec.out_dir = parent.join(&spec.out_dir);
        }
    }
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn tiny_spec(out_dir: PathBuf) -> PipelineSpec {
        PipelineSpec {
            schema_version: SCHEMA_VERSION,
            data: SyntheticSpec {
                num_classes: 4,
                max_per_class: 120,
                imbalance_ratio: 10.0,
                feature_dim: 3,
                class_separation: 2.0,
                seed: 5,
                holdout_fraction: 0.3,
            },
            train: TrainConfig { epochs: 8, batch_size: 32, seed: 11, ..Default::default() },
            ts: TsFitConfig { coarse_steps: 50, refine_rounds: 2, ..Default::default() },
            cda_gamma: 0.1,
            ls_alpha: 0.1,
            cda_ls_gamma: 0.01,
            sd: SdSpec::default(),
            metrics: MetricsConfig::default(),
            methods: default_methods(),
            out_dir,
        }
    }

    #[test]
    fn pipeline_emits_comparison_and_artifacts() {
        let dir = tempdir().unwrap();
        let spec = tiny_spec(dir.path().join("run"));
        let report = run_pipeline(&spec).unwrap();
        assert_eq!(report.rows.len(), 3);
        assert_eq!(report.rows[0].method, "Baseline");
        assert_eq!(report.rows[1].method, "TS");
        assert_eq!(report.rows[2].method, "CDA-TS");
        for name in [
            "comparison.json",
            "temps/ts.json",
            "temps/cda.json",
            "models/baseline.model",
            "reports/baseline.report.json",
            "reports/cda_ts.reliability.csv",
            "reports/ts.by_class.csv",
            "data.train.features",
        ] {
            assert!(spec.out_dir.join(name).exists(), "missing {name}");
        }
        // Baseline and TS accuracies agree (scalar scaling preserves argmax).
        assert_eq!(report.rows[0].acc, report.rows[1].acc);
    }

    #[test]
    fn pipeline_is_reproducible_byte_for_byte() {
        let dir = tempdir().unwrap();
        let spec_a = tiny_spec(dir.path().join("a"));
        let spec_b = tiny_spec(dir.path().join("b"));
        run_pipeline(&spec_a).unwrap();
        run_pipeline(&spec_b).unwrap();
        for name in [
            "comparison.json",
            "temps/ts.json",
            "temps/cda.json",
            "reports/baseline.report.json",
            "reports/ts.reliability.csv",
            "reports/cda_ts.by_class.csv",
            "data.train.features",
            "models/baseline.model",
        ] {
            let a = std::fs::read(spec_a.out_dir.join(name)).unwrap();
            let b = std::fs::read(spec_b.out_dir.join(name)).unwrap();
            assert_eq!(a, b, "artifact {name} differs between identical runs");
        }
    }

    #[test]
    fn pipeline_rejects_unknown_method() {
        let dir = tempdir().unwrap();
        let mut spec = tiny_spec(dir.path().join("run"));
        spec.methods = vec!["bogus".into()];
        assert!(matches!(run_pipeline(&spec), Err(CalibError::Usage(_))));
    }
}
