//! Core data types: logit/probability matrices, class-frequency profiles,
//! temperature vectors, and soft-label targets.
//!
//! All types validate their invariants at construction and are immutable
//! afterwards, so they are safe to share across threads.

use crate::error::{CalibError, Result};

/// Tolerance for "rows sum to one" checks on probability matrices.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// M x N matrix of raw pre-softmax scores with aligned integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitSet {
    values: Vec<f64>, // row-major, M x N
    labels: Vec<usize>,
    num_classes: usize,
}

impl LogitSet {
    /// Validates shape, label range, and finiteness.
    pub fn new(values: Vec<f64>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(CalibError::InvalidInput(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        if labels.is_empty() {
            return Err(CalibError::EmptyDataset("logit set has no rows".into()));
        }
        if values.len() != labels.len() * num_classes {
            return Err(CalibError::ShapeMismatch(format!(
                "expected {} x {} = {} values, got {}",
                labels.len(),
                num_classes,
                labels.len() * num_classes,
                values.len()
            )));
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(CalibError::InvalidInput(format!(
                    "non-finite logit {} at row {} col {}",
                    v,
                    i / num_classes,
                    i % num_classes
                )));
            }
        }
        for (i, &y) in labels.iter().enumerate() {
            if y >= num_classes {
                return Err(CalibError::InvalidInput(format!(
                    "label {y} out of range [0, {num_classes}) at row {i}"
                )));
            }
        }
        Ok(Self { values, labels, num_classes })
    }

    /// Convenience constructor from per-sample rows.
    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let mut values = Vec::with_capacity(rows.len() * num_classes);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != num_classes {
                return Err(CalibError::ShapeMismatch(format!(
                    "row {} has {} entries, expected {}",
                    i,
                    r.len(),
                    num_classes
                )));
            }
            values.extend_from_slice(r);
        }
        Self::new(values, labels, num_classes)
    }

    pub fn num_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.num_classes..(i + 1) * self.num_classes]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Fraction of rows whose argmax (ties to lowest index) equals the label.
    pub fn accuracy(&self) -> f64 {
        // Row count >= 1 is a construction invariant, so this cannot fail.
        crate::prob::accuracy(&self.values, self.num_classes, &self.labels).unwrap()
    }
}

/// M x N matrix of probabilities with aligned labels; rows sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbSet {
    values: Vec<f64>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl ProbSet {
    pub fn new(values: Vec<f64>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(CalibError::InvalidInput(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        if labels.is_empty() {
            return Err(CalibError::EmptyDataset("probability set has no rows".into()));
        }
        if values.len() != labels.len() * num_classes {
            return Err(CalibError::ShapeMismatch(format!(
                "expected {} x {} = {} values, got {}",
                labels.len(),
                num_classes,
                labels.len() * num_classes,
                values.len()
            )));
        }
        for (row, chunk) in values.chunks_exact(num_classes).enumerate() {
            let mut sum = 0.0;
            for &p in chunk {
                if !(0.0..=1.0).contains(&p) {
                    return Err(CalibError::InvalidInput(format!(
                        "probability {p} outside [0,1] at row {row}"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(CalibError::InvalidInput(format!(
                    "row {row} sums to {sum}, expected 1 within {ROW_SUM_TOL}"
                )));
            }
        }
        for (i, &y) in labels.iter().enumerate() {
            if y >= num_classes {
                return Err(CalibError::InvalidInput(format!(
                    "label {y} out of range [0, {num_classes}) at row {i}"
                )));
            }
        }
        Ok(Self { values, labels, num_classes })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let mut values = Vec::with_capacity(rows.len() * num_classes);
        for r in rows {
            values.extend_from_slice(r);
        }
        Self::new(values, labels, num_classes)
    }

    pub fn num_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.num_classes..(i + 1) * self.num_classes]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn accuracy(&self) -> f64 {
        crate::prob::accuracy(&self.values, self.num_classes, &self.labels).unwrap()
    }
}

/// Per-class counts with max-normalized frequencies and the imbalance ratio.
///
/// `normalized[i] = counts[i] / max(counts)`, so the head class is exactly 1
/// and classes absent from the data are 0. The imbalance ratio is
/// `max(counts) / min(counts)` taken over classes with nonzero count.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassFrequencyProfile {
    counts: Vec<usize>,
    normalized: Vec<f64>,
    imbalance_ratio: f64,
}

impl ClassFrequencyProfile {
    pub fn from_counts(counts: Vec<usize>) -> Result<Self> {
        if counts.is_empty() {
            return Err(CalibError::EmptyDataset("no classes in frequency profile".into()));
        }
        let max = *counts.iter().max().unwrap();
        if max == 0 {
            return Err(CalibError::EmptyDataset(
                "all class counts are zero".into(),
            ));
        }
        let min_nonzero = *counts.iter().filter(|&&c| c > 0).min().unwrap();
        let normalized = counts.iter().map(|&c| c as f64 / max as f64).collect();
        Ok(Self {
            counts,
            normalized,
            imbalance_ratio: max as f64 / min_nonzero as f64,
        })
    }

    /// Tally labels into a profile over `num_classes` classes.
    pub fn from_labels(labels: &[usize], num_classes: usize) -> Result<Self> {
        if num_classes == 0 {
            return Err(CalibError::InvalidInput("num_classes must be positive".into()));
        }
        let mut counts = vec![0usize; num_classes];
        for (i, &y) in labels.iter().enumerate() {
            if y >= num_classes {
                return Err(CalibError::InvalidInput(format!(
                    "label {y} out of range [0, {num_classes}) at row {i}"
                )));
            }
            counts[y] += 1;
        }
        Self::from_counts(counts)
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn normalized(&self) -> &[f64] {
        &self.normalized
    }

    pub fn imbalance_ratio(&self) -> f64 {
        self.imbalance_ratio
    }
}

/// Length-N strictly positive per-class temperatures.
///
/// A scalar temperature is represented as a constant vector; there is no
/// separate scalar type.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureVector {
    t: Vec<f64>,
}

impl TemperatureVector {
    pub fn new(t: Vec<f64>) -> Result<Self> {
        if t.is_empty() {
            return Err(CalibError::InvalidTemperature("empty temperature vector".into()));
        }
        for (i, &v) in t.iter().enumerate() {
            if !v.is_finite() || v <= 0.0 {
                return Err(CalibError::InvalidTemperature(format!(
                    "temperature {v} at class {i} must be finite and > 0"
                )));
            }
        }
        Ok(Self { t })
    }

    /// Constant vector representing a scalar temperature.
    pub fn constant(t: f64, num_classes: usize) -> Result<Self> {
        Self::new(vec![t; num_classes])
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.t
    }

    pub fn is_constant(&self) -> bool {
        self.t.iter().all(|&v| v == self.t[0])
    }
}

/// M x N soft-label targets. Row sums are recorded, not forced to one:
/// the class-distribution-aware smoothing formula yields rows that do not
/// sum to one, and they are kept as written unless explicitly renormalized.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabelSet {
    values: Vec<f64>,
    row_sums: Vec<f64>,
    num_classes: usize,
}

impl SoftLabelSet {
    pub fn new(values: Vec<f64>, num_classes: usize) -> Result<Self> {
        if num_classes == 0 || values.is_empty() || values.len() % num_classes != 0 {
            return Err(CalibError::ShapeMismatch(format!(
                "{} values do not form rows of {} classes",
                values.len(),
                num_classes
            )));
        }
        for (i, &v) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(CalibError::InvalidInput(format!(
                    "soft label {} outside [0,1] at row {} col {}",
                    v,
                    i / num_classes,
                    i % num_classes
                )));
            }
        }
        let row_sums = values
            .chunks_exact(num_classes)
            .map(|r| r.iter().sum())
            .collect();
        Ok(Self { values, row_sums, num_classes })
    }

    pub fn num_samples(&self) -> usize {
        self.row_sums.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.num_classes..(i + 1) * self.num_classes]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row_sums(&self) -> &[f64] {
        &self.row_sums
    }

    /// Divide each row by its recorded sum (the optional escape hatch for
    /// users who need proper distributions out of the vector formula).
    pub fn renormalized(&self) -> Result<Self> {
        let mut values = self.values.clone();
        for (row, sum) in values.chunks_exact_mut(self.num_classes).zip(&self.row_sums) {
            if *sum <= 0.0 {
                return Err(CalibError::InvalidInput(
                    "cannot renormalize a zero-sum soft-label row".into(),
                ));
            }
            for v in row {
                *v /= sum;
            }
        }
        Self::new(values, self.num_classes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logit_set_rejects_nan() {
        let err = LogitSet::new(vec![0.0, f64::NAN], vec![0], 2).unwrap_err();
        assert!(matches!(err, CalibError::InvalidInput(_)));
    }

    #[test]
    fn logit_set_rejects_out_of_range_label() {
        let err = LogitSet::new(vec![0.0, 1.0], vec![2], 2).unwrap_err();
        assert!(matches!(err, CalibError::InvalidInput(_)));
    }

    #[test]
    fn logit_set_rejects_single_class() {
        let err = LogitSet::new(vec![0.0], vec![0], 1).unwrap_err();
        assert!(matches!(err, CalibError::InvalidInput(_)));
    }

    #[test]
    fn prob_set_rejects_bad_row_sum() {
        let err = ProbSet::new(vec![0.6, 0.6], vec![0], 2).unwrap_err();
        assert!(matches!(err, CalibError::InvalidInput(_)));
    }

    #[test]
    fn profile_from_labels_tallies_and_normalizes() {
        let p = ClassFrequencyProfile::from_labels(&[0, 0, 1], 2).unwrap();
        assert_eq!(p.counts(), &[2, 1]);
        assert_eq!(p.normalized(), &[1.0, 0.5]);
        assert_eq!(p.imbalance_ratio(), 2.0);
    }

    #[test]
    fn profile_absent_class_gets_zero_and_is_excluded_from_ratio() {
        let p = ClassFrequencyProfile::from_labels(&[0, 0, 2], 3).unwrap();
        assert_eq!(p.counts(), &[2, 0, 1]);
        assert_eq!(p.normalized(), &[1.0, 0.0, 0.5]);
        assert_eq!(p.imbalance_ratio(), 2.0);
    }

    #[test]
    fn profile_rejects_all_zero() {
        let err = ClassFrequencyProfile::from_counts(vec![0, 0]).unwrap_err();
        assert!(matches!(err, CalibError::EmptyDataset(_)));
    }

    #[test]
    fn temperature_vector_rejects_non_positive() {
        assert!(TemperatureVector::new(vec![1.0, 0.0]).is_err());
        assert!(TemperatureVector::new(vec![1.0, -2.0]).is_err());
        assert!(TemperatureVector::new(vec![f64::NAN]).is_err());
        assert!(TemperatureVector::constant(1.5, 3).is_ok());
    }

    #[test]
    fn soft_labels_record_row_sums() {
        let s = SoftLabelSet::new(vec![0.85, 0.025, 0.025, 0.025], 4).unwrap();
        assert!((s.row_sums()[0] - 0.925).abs() < 1e-15);
        let r = s.renormalized().unwrap();
        assert!((r.row_sums()[0] - 1.0).abs() < 1e-12);
    }
}
