//! Probability primitives: temperature-scaled softmax, negative
//! log-likelihood, and argmax accuracy.
//!
//! Everything here is a pure function with a fixed summation order, so
//! results are reproducible bit for bit.

use crate::error::{CalibError, Result};
use crate::types::{LogitSet, TemperatureVector};

/// Argmax with ties broken toward the lowest class index.
pub fn argmax_tie_lowest(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Temperature-scaled softmax of one logit row.
///
/// Each logit is divided by its class temperature, then the row is
/// exponentiated with max-subtraction and normalized. With a constant
/// temperature vector this is standard scalar temperature scaling.
pub fn softmax(logits_row: &[f64], temps: &TemperatureVector) -> Result<Vec<f64>> {
    if logits_row.len() != temps.len() {
        return Err(CalibError::ShapeMismatch(format!(
            "row has {} logits but temperature vector has {} entries",
            logits_row.len(),
            temps.len()
        )));
    }
    let t = temps.as_slice();
    let mut scaled = Vec::with_capacity(logits_row.len());
    for (i, &z) in logits_row.iter().enumerate() {
        if z.is_nan() {
            return Err(CalibError::InvalidInput(format!("NaN logit at class {i}")));
        }
        scaled.push(z / t[i]);
    }
    let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in scaled.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in scaled.iter_mut() {
        *v /= sum;
    }
    Ok(scaled)
}

/// Softmax at temperature one, for hot paths where inputs are already
/// validated finite.
pub(crate) fn softmax_plain(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = Vec::with_capacity(row.len());
    let mut sum = 0.0;
    for &z in row {
        let e = (z - max).exp();
        sum += e;
        out.push(e);
    }
    for v in out.iter_mut() {
        *v /= sum;
    }
    out
}

/// Log of the temperature-scaled softmax probability of class `label`,
/// computed via log-sum-exp (no intermediate division, fully stable).
pub(crate) fn log_prob_of_label(
    logits_row: &[f64],
    temps: &TemperatureVector,
    label: usize,
) -> f64 {
    let t = temps.as_slice();
    let scaled: Vec<f64> = logits_row.iter().zip(t).map(|(&z, &ti)| z / ti).collect();
    let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scaled.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    scaled[label] - lse
}

/// Mean negative log-likelihood (nats) of the true labels after
/// temperature-scaled softmax.
pub fn nll(logits: &LogitSet, temps: &TemperatureVector) -> Result<f64> {
    if temps.len() != logits.num_classes() {
        return Err(CalibError::ShapeMismatch(format!(
            "temperature vector has {} entries for {} classes",
            temps.len(),
            logits.num_classes()
        )));
    }
    let mut total = 0.0;
    for i in 0..logits.num_samples() {
        total -= log_prob_of_label(logits.row(i), temps, logits.labels()[i]);
    }
    Ok(total / logits.num_samples() as f64)
}

/// Fraction of rows whose argmax (ties to lowest index) equals the label.
/// Works on logits or probabilities alike since argmax is scale-monotone.
pub fn accuracy(values: &[f64], num_classes: usize, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(CalibError::UndefinedMetric(
            "accuracy of an empty sample set".into(),
        ));
    }
    if values.len() != labels.len() * num_classes {
        return Err(CalibError::ShapeMismatch(format!(
            "expected {} x {} values, got {}",
            labels.len(),
            num_classes,
            values.len()
        )));
    }
    let mut correct = 0usize;
    for (row, &y) in values.chunks_exact(num_classes).zip(labels) {
        if argmax_tie_lowest(row) == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / labels.len() as f64)
}
