//! File formats: logit/probability containers, dataset serialization, fitted
//! temperature and smoothing vectors, model checkpoints, and CSV emitters.
//!
//! The primary logit container is a raw little-endian binary payload with a
//! JSON sidecar (`<path>.json`) and a newline-delimited label file
//! (`<path>.labels`). A CSV format with a `label,logit_0,...` header is
//! supported for hand-built fixtures; both loaders produce identical data
//! for equivalent content.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::{Dataset, SplitDataset};
use crate::error::{CalibError, Result};
use crate::metrics::{ClassConfidenceRow, MetricsReport, ReliabilityRow};
use crate::train::{Model, ModelArch, TraceRow, TrainConfig};
use crate::types::{LogitSet, ProbSet, TemperatureVector};
use crate::SCHEMA_VERSION;

/// On-disk floating-point width for binary payloads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dtype {
    #[serde(rename = "f32")]
    F32,
    #[serde(rename = "f64")]
    F64,
}

impl Dtype {
    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// Container format for logit/probability matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Binary,
    Csv,
}

impl Format {
    /// `.csv` means CSV; anything else is the binary container.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Format::Csv,
            _ => Format::Binary,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MatrixHeader {
    pub schema_version: u32,
    pub m: usize,
    pub n_classes: usize,
    pub dtype: Dtype,
    pub layout: String,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn labels_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".labels");
    PathBuf::from(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| CalibError::Parse(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CalibError::Parse(format!("{}: {e}", path.display())))
}

fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut out = String::with_capacity(labels.len() * 4);
    for y in labels {
        out.push_str(&y.to_string());
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_labels_file(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CalibError::Parse(format!("{}: {e}", path.display())))?;
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        labels.push(line.parse::<usize>().map_err(|e| {
            CalibError::Parse(format!("{}: bad label on line {}: {e}", path.display(), i + 1))
        })?);
    }
    Ok(labels)
}

fn write_matrix_payload(path: &Path, values: &[f64], dtype: Dtype) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * dtype.width());
    match dtype {
        Dtype::F32 => {
            for &v in values {
                bytes.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Dtype::F64 => {
            for &v in values {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn read_matrix_payload(path: &Path, header: &MatrixHeader) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| CalibError::Parse(format!("{}: {e}", path.display())))?;
    let expected = header.m * header.n_classes * header.dtype.width();
    if bytes.len() != expected {
        return Err(CalibError::Parse(format!(
            "{}: payload size mismatch, expected {expected} bytes ({} x {} {:?}), got {}",
            path.display(),
            header.m,
            header.n_classes,
            header.dtype,
            bytes.len()
        )));
    }
    let mut values = Vec::with_capacity(header.m * header.n_classes);
    match header.dtype {
        Dtype::F32 => {
            for chunk in bytes.chunks_exact(4) {
                values.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
            }
        }
        Dtype::F64 => {
            for chunk in bytes.chunks_exact(8) {
                values.push(f64::from_le_bytes(chunk.try_into().unwrap()));
            }
        }
    }
    Ok(values)
}

fn save_matrix_binary(path: &Path, values: &[f64], labels: &[usize], n: usize, dtype: Dtype) -> Result<()> {
    let header = MatrixHeader {
        schema_version: SCHEMA_VERSION,
        m: labels.len(),
        n_classes: n,
        dtype,
        layout: "row-major".into(),
    };
    write_matrix_payload(path, values, dtype)?;
    write_json(&sidecar_path(path), &header)?;
    write_labels(&labels_path(path), labels)?;
    Ok(())
}

fn load_matrix_binary(path: &Path) -> Result<(Vec<f64>, Vec<usize>, usize)> {
    let header: MatrixHeader = read_json(&sidecar_path(path))?;
    if header.layout != "row-major" {
        return Err(CalibError::Parse(format!(
            "{}: unsupported layout {:?}",
            path.display(),
            header.layout
        )));
    }
    let values = read_matrix_payload(path, &header)?;
    let labels = read_labels_file(&labels_path(path))?;
    if labels.len() != header.m {
        return Err(CalibError::Parse(format!(
            "{}: sidecar declares {} rows but label file has {}",
            path.display(),
            header.m,
            labels.len()
        )));
    }
    Ok((values, labels, header.n_classes))
}

fn save_matrix_csv(path: &Path, values: &[f64], labels: &[usize], n: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| CalibError::Parse(format!("{}: {e}", path.display())))?;
    let mut header = vec!["label".to_string()];
    header.extend((0..n).map(|c| format!("logit_{c}")));
    w.write_record(&header)
        .map_err(|e| CalibError::Parse(e.to_string()))?;
    for (row, &y) in values.chunks_exact(n).zip(labels) {
        let mut rec = vec![y.to_string()];
        rec.extend(row.iter().map(|v| format!("{v}")));
        w.write_record(&rec).map_err(|e| CalibError::Parse(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn load_matrix_csv(path: &Path) -> Result<(Vec<f64>, Vec<usize>, usize)> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CalibError::Parse(format!("{}: {e}", path.display())))?;
    let headers = r.headers().map_err(|e| CalibError::Parse(e.to_string()))?.clone();
    if headers.is_empty() || &headers[0] != "label" || headers.len() < 3 {
        return Err(CalibError::Parse(format!(
            "{}: expected header label,logit_0,...,logit_{{N-1}} with N >= 2",
            path.display()
        )));
    }
    let n = headers.len() - 1;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(|e| {
            CalibError::Parse(format!("{}: row {}: {e}", path.display(), i + 1))
        })?;
        if record.len() != n + 1 {
            return Err(CalibError::Parse(format!(
                "{}: row {} has {} fields, expected {}",
                path.display(),
                i + 1,
                record.len(),
                n + 1
            )));
        }
        labels.push(record[0].parse::<usize>().map_err(|e| {
            CalibError::Parse(format!("{}: row {}: bad label: {e}", path.display(), i + 1))
        })?);
        for c in 0..n {
            values.push(record[c + 1].parse::<f64>().map_err(|e| {
                CalibError::Parse(format!(
                    "{}: row {} col {}: bad value: {e}",
                    path.display(),
                    i + 1,
                    c
                ))
            })?);
        }
    }
    Ok((values, labels, n))
}

pub fn save_logits(path: &Path, logits: &LogitSet, format: Format, dtype: Dtype) -> Result<()> {
    match format {
        Format::Binary => save_matrix_binary(
            path,
            logits.values(),
            logits.labels(),
            logits.num_classes(),
            dtype,
        ),
        Format::Csv => save_matrix_csv(path, logits.values(), logits.labels(), logits.num_classes()),
    }
}

pub fn load_logits(path: &Path, format: Format) -> Result<LogitSet> {
    let (values, labels, n) = match format {
        Format::Binary => load_matrix_binary(path)?,
        Format::Csv => load_matrix_csv(path)?,
    };
    LogitSet::new(values, labels, n)
}

pub fn save_probs(path: &Path, probs: &ProbSet, format: Format) -> Result<()> {
    match format {
        Format::Binary => save_matrix_binary(
            path,
            probs.values(),
            probs.labels(),
            probs.num_classes(),
            Dtype::F64,
        ),
        Format::Csv => save_matrix_csv(path, probs.values(), probs.labels(), probs.num_classes()),
    }
}

pub fn load_probs(path: &Path, format: Format) -> Result<ProbSet> {
    let (values, labels, n) = match format {
        Format::Binary => load_matrix_binary(path)?,
        Format::Csv => load_matrix_csv(path)?,
    };
    ProbSet::new(values, labels, n)
}

/// Sidecar for one dataset split.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetSidecar {
    pub schema_version: u32,
    pub m: usize,
    pub d: usize,
    pub n_classes: usize,
    pub seed: u64,
    pub counts: Vec<usize>,
}

fn split_paths(prefix: &Path, split: &str) -> (PathBuf, PathBuf, PathBuf) {
    let base = prefix.as_os_str().to_str().unwrap_or_default();
    (
        PathBuf::from(format!("{base}.{split}.features")),
        PathBuf::from(format!("{base}.{split}.labels")),
        PathBuf::from(format!("{base}.{split}.json")),
    )
}

pub fn save_dataset_split(prefix: &Path, split: &str, ds: &Dataset, seed: u64) -> Result<()> {
    let (features, labels, sidecar) = split_paths(prefix, split);
    let mut bytes = Vec::with_capacity(ds.features.len() * 4);
    for &v in &ds.features {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(features, bytes)?;
    write_labels(&labels, &ds.labels)?;
    write_json(
        &sidecar,
        &DatasetSidecar {
            schema_version: SCHEMA_VERSION,
            m: ds.num_samples(),
            d: ds.feature_dim,
            n_classes: ds.num_classes(),
            seed,
            counts: ds.profile.counts().to_vec(),
        },
    )
}

pub fn load_dataset_split(prefix: &Path, split: &str) -> Result<Dataset> {
    let (features_path, labels_path, sidecar_path) = split_paths(prefix, split);
    let sidecar: DatasetSidecar = read_json(&sidecar_path)?;
    let bytes = fs::read(&features_path)
        .map_err(|e| CalibError::Parse(format!("{}: {e}", features_path.display())))?;
    let expected = sidecar.m * sidecar.d * 4;
    if bytes.len() != expected {
        return Err(CalibError::Parse(format!(
            "{}: payload size mismatch, expected {expected} bytes, got {}",
            features_path.display(),
            bytes.len()
        )));
    }
    let features: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let labels = read_labels_file(&labels_path)?;
    if labels.len() != sidecar.m {
        return Err(CalibError::Parse(format!(
            "{}: sidecar declares {} rows but label file has {}",
            labels_path.display(),
            sidecar.m,
            labels.len()
        )));
    }
    let ds = Dataset::new(features, sidecar.d, labels, sidecar.n_classes)?;
    if ds.profile.counts() != sidecar.counts.as_slice() {
        return Err(CalibError::Parse(format!(
            "{}: stored counts disagree with a recount of the labels",
            sidecar_path.display()
        )));
    }
    Ok(ds)
}

pub fn save_split_dataset(prefix: &Path, ds: &SplitDataset, seed: u64) -> Result<()> {
    save_dataset_split(prefix, "train", &ds.train, seed)?;
    save_dataset_split(prefix, "val", &ds.val, seed)?;
    save_dataset_split(prefix, "test", &ds.test, seed)
}

pub fn load_split_dataset(prefix: &Path) -> Result<SplitDataset> {
    Ok(SplitDataset {
        train: load_dataset_split(prefix, "train")?,
        val: load_dataset_split(prefix, "val")?,
        test: load_dataset_split(prefix, "test")?,
    })
}

/// Fitted temperatures: scalar fit plus the vector it expands to.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TemperatureFile {
    pub schema_version: u32,
    pub t_opt: f64,
    pub gamma: f64,
    pub temps: Vec<f64>,
    pub source_profile: Option<Vec<usize>>,
    /// Path of the validation logit file the scalar was fitted on, used to
    /// refuse evaluating on the fitting split without --allow-same-split.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fitted_on: Option<String>,
}

impl TemperatureFile {
    pub fn temperature_vector(&self) -> Result<TemperatureVector> {
        TemperatureVector::new(self.temps.clone())
    }
}

pub fn save_temperatures(path: &Path, file: &TemperatureFile) -> Result<()> {
    write_json(path, file)
}

pub fn load_temperatures(path: &Path) -> Result<TemperatureFile> {
    let file: TemperatureFile = read_json(path)?;
    file.temperature_vector()?;
    Ok(file)
}

/// Smoothing vector file: scalar alpha, gamma, and the per-class expansion.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SmoothingFile {
    pub schema_version: u32,
    pub alpha: f64,
    pub gamma: f64,
    pub alphas: Vec<f64>,
}

pub fn save_smoothing(path: &Path, file: &SmoothingFile) -> Result<()> {
    write_json(path, file)
}

pub fn load_smoothing(path: &Path) -> Result<SmoothingFile> {
    read_json(path)
}

pub fn save_metrics_report(path: &Path, report: &MetricsReport) -> Result<()> {
    write_json(path, report)
}

pub fn write_reliability_csv(path: &Path, rows: &[ReliabilityRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| CalibError::Parse(format!("{}: {e}", path.display())))?;
    w.write_record(["bin_lo", "bin_hi", "n", "acc", "conf", "gap"])
        .map_err(|e| CalibError::Parse(e.to_string()))?;
    for r in rows {
        w.write_record([
            format!("{}", r.bin_lo),
            format!("{}", r.bin_hi),
            r.n.to_string(),
            format!("{}", r.acc),
            format!("{}", r.conf),
            format!("{}", r.gap),
        ])
        .map_err(|e| CalibError::Parse(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_by_class_csv(path: &Path, rows: &[ClassConfidenceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| CalibError::Parse(format!("{}: {e}", path.display())))?;
    w.write_record(["class", "count", "freq_normalized", "mean_confidence"])
        .map_err(|e| CalibError::Parse(e.to_string()))?;
    for r in rows {
        w.write_record([
            r.class.to_string(),
            r.count.to_string(),
            format!("{}", r.freq_normalized),
            r.mean_confidence.map(|v| format!("{v}")).unwrap_or_default(),
        ])
        .map_err(|e| CalibError::Parse(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_csv(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| CalibError::Parse(format!("{}: {e}", path.display())))?;
    w.write_record(["epoch", "train_loss", "val_acc", "val_ece"])
        .map_err(|e| CalibError::Parse(e.to_string()))?;
    for r in trace {
        w.write_record([
            r.epoch.to_string(),
            format!("{}", r.train_loss),
            r.val_acc.map(|v| format!("{v}")).unwrap_or_default(),
            r.val_ece.map(|v| format!("{v}")).unwrap_or_default(),
        ])
        .map_err(|e| CalibError::Parse(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Model checkpoint header; the payload after the header line is the flat
/// parameter vector as little-endian f64.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelHeader {
    pub schema_version: u32,
    #[serde(flatten)]
    pub arch: ModelArch,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub seed: u64,
    pub config: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distill: Option<DistillMeta>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DistillMeta {
    pub fuse_lambda: f64,
    pub temps: Vec<f64>,
}

pub fn save_model(path: &Path, model: &Model, config: &TrainConfig, distill: Option<DistillMeta>) -> Result<()> {
    let header = ModelHeader {
        schema_version: SCHEMA_VERSION,
        arch: model.arch(),
        feature_dim: model.feature_dim(),
        num_classes: model.num_classes(),
        seed: config.seed,
        config: config.clone(),
        distill,
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    for &p in model.flat_params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<(Model, ModelHeader)> {
    let mut file = fs::File::open(path)
        .map_err(|e| CalibError::Parse(format!("{}: {e}", path.display())))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| CalibError::Parse(format!("{}: missing header line", path.display())))?;
    let header: ModelHeader = serde_json::from_slice(&bytes[..newline])
        .map_err(|e| CalibError::Parse(format!("{}: bad header: {e}", path.display())))?;
    let blob = &bytes[newline + 1..];
    let expected =
        crate::train::param_count(header.arch, header.feature_dim, header.num_classes) * 8;
    if blob.len() != expected {
        return Err(CalibError::Parse(format!(
            "{}: weight blob size mismatch, expected {expected} bytes, got {}",
            path.display(),
            blob.len()
        )));
    }
    let params: Vec<f64> = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let model = Model::from_flat_params(header.arch, header.feature_dim, header.num_classes, params)?;
    Ok((model, header))
}

/// Write a file only through a closure; used by the CLI to keep all machine
/// output on disk.
pub fn with_file<F: FnOnce(&mut fs::File) -> Result<()>>(path: &Path, f: F) -> Result<()> {
    let mut file = fs::File::create(path)?;
    f(&mut file)?;
    file.flush()?;
    Ok(())
}
