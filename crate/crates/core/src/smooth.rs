//! Label smoothing: uniform and class-distribution-aware smoothing vectors,
//! soft-label construction, and the soft-label cross-entropy loss.
//!
//! Soft labels follow the vector formula literally:
//! `target = onehot * (1 - alpha_c) + alpha_c / N` elementwise, so with a
//! non-constant vector the rows do not sum to one. Row sums are recorded on
//! the [`SoftLabelSet`] and renormalization is an explicit opt-in.

use crate::error::{CalibError, Result};
use crate::types::{ClassFrequencyProfile, SoftLabelSet};

/// Probabilities are clamped here before any logarithm.
pub const LOG_CLAMP: f64 = 1e-12;

/// Length-N per-class smoothing factors in `[0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingVector {
    alpha: Vec<f64>,
}

impl SmoothingVector {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(CalibError::InvalidSmoothing("empty smoothing vector".into()));
        }
        for (i, &a) in alpha.iter().enumerate() {
            if !a.is_finite() || !(0.0..1.0).contains(&a) {
                return Err(CalibError::InvalidSmoothing(format!(
                    "alpha {a} at class {i} must be in [0, 1)"
                )));
            }
        }
        Ok(Self { alpha })
    }

    /// Constant vector representing scalar label smoothing.
    pub fn constant(alpha: f64, num_classes: usize) -> Result<Self> {
        Self::new(vec![alpha; num_classes])
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.alpha
    }
}

/// Class-distribution-aware smoothing vector: `alpha + gamma * f_c`.
///
/// Head classes receive larger smoothing. Rejected when `alpha + gamma >= 1`,
/// which would leave no mass on the true class of the head.
pub fn cda_alpha(alpha: f64, profile: &ClassFrequencyProfile, gamma: f64) -> Result<SmoothingVector> {
    if !alpha.is_finite() || !(0.0..1.0).contains(&alpha) {
        return Err(CalibError::InvalidSmoothing(format!(
            "alpha must be in [0, 1), got {alpha}"
        )));
    }
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(CalibError::InvalidSmoothing(format!(
            "gamma must be finite and >= 0, got {gamma}"
        )));
    }
    if alpha + gamma >= 1.0 {
        return Err(CalibError::InvalidSmoothing(format!(
            "alpha + gamma = {} leaves no mass on the true class",
            alpha + gamma
        )));
    }
    SmoothingVector::new(
        profile
            .normalized()
            .iter()
            .map(|&f| alpha + gamma * f)
            .collect(),
    )
}

/// Build soft labels from hard labels and a smoothing vector.
///
/// Row `i` holds `1 - alpha_y + alpha_y / N` at the true class `y` and
/// `alpha_c / N` at every other class `c`.
pub fn soft_labels(
    labels: &[usize],
    smoothing: &SmoothingVector,
    num_classes: usize,
) -> Result<SoftLabelSet> {
    if smoothing.len() != num_classes {
        return Err(CalibError::ShapeMismatch(format!(
            "smoothing vector has {} entries for {} classes",
            smoothing.len(),
            num_classes
        )));
    }
    if labels.is_empty() {
        return Err(CalibError::EmptyDataset("no labels to smooth".into()));
    }
    let alpha = smoothing.as_slice();
    let n = num_classes as f64;
    let base: Vec<f64> = alpha.iter().map(|&a| a / n).collect();
    let mut values = Vec::with_capacity(labels.len() * num_classes);
    for (i, &y) in labels.iter().enumerate() {
        if y >= num_classes {
            return Err(CalibError::InvalidInput(format!(
                "label {y} out of range [0, {num_classes}) at row {i}"
            )));
        }
        let start = values.len();
        values.extend_from_slice(&base);
        values[start + y] += 1.0 - alpha[y];
    }
    SoftLabelSet::new(values, num_classes)
}

/// Soft-label cross entropy of one row: `sum_c -target_c * log(prob_c)`,
/// with probabilities clamped at [`LOG_CLAMP`]. Equals NLL for one-hot
/// targets.
pub fn soft_ce_loss(probs_row: &[f64], targets_row: &[f64]) -> Result<f64> {
    if probs_row.len() != targets_row.len() {
        return Err(CalibError::ShapeMismatch(format!(
            "probability row has {} entries, target row has {}",
            probs_row.len(),
            targets_row.len()
        )));
    }
    let mut loss = 0.0;
    for (&p, &t) in probs_row.iter().zip(targets_row) {
        loss -= t * p.max(LOG_CLAMP).ln();
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cda_alpha_gamma_zero_reduces_to_scalar() {
        let profile = ClassFrequencyProfile::from_counts(vec![9, 3, 1]).unwrap();
        let sv = cda_alpha(0.1, &profile, 0.0).unwrap();
        assert_eq!(sv.as_slice(), &[0.1, 0.1, 0.1]);
    }

    #[test]
    fn cda_alpha_paper_arithmetic() {
        // alpha 0.1, gamma 0.01: f=1 gives 0.11, f=0.1 gives 0.101.
        let profile = ClassFrequencyProfile::from_counts(vec![1000, 100]).unwrap();
        let sv = cda_alpha(0.1, &profile, 0.01).unwrap();
        assert_abs_diff_eq!(sv.as_slice()[0], 0.11, epsilon = 1e-15);
        assert_abs_diff_eq!(sv.as_slice()[1], 0.101, epsilon = 1e-15);
    }

    #[test]
    fn cda_alpha_all_zero_is_hard_labels() {
        let profile = ClassFrequencyProfile::from_counts(vec![5, 5]).unwrap();
        let sv = cda_alpha(0.0, &profile, 0.0).unwrap();
        assert_eq!(sv.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn cda_alpha_rejects_saturating_sum() {
        let profile = ClassFrequencyProfile::from_counts(vec![5, 5]).unwrap();
        let err = cda_alpha(0.95, &profile, 0.05).unwrap_err();
        assert!(matches!(err, CalibError::InvalidSmoothing(_)));
    }

    #[test]
    fn soft_labels_scalar_identity() {
        // alpha 0.1, N=10: 0.91 on the true class, 0.01 elsewhere.
        let sv = SmoothingVector::constant(0.1, 10).unwrap();
        let s = soft_labels(&[3], &sv, 10).unwrap();
        let row = s.row(0);
        for (c, &v) in row.iter().enumerate() {
            if c == 3 {
                assert_abs_diff_eq!(v, 0.91, epsilon = 1e-15);
            } else {
                assert_abs_diff_eq!(v, 0.01, epsilon = 1e-15);
            }
        }
        assert_abs_diff_eq!(s.row_sums()[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn soft_labels_zero_alpha_is_one_hot() {
        let sv = SmoothingVector::constant(0.0, 4).unwrap();
        let s = soft_labels(&[2, 0], &sv, 4).unwrap();
        assert_eq!(s.row(0), &[0.0, 0.0, 1.0, 0.0]);
        assert_eq!(s.row(1), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn soft_labels_vector_fixture_elementwise() {
        let sv = SmoothingVector::new(vec![0.2, 0.1, 0.1, 0.1]).unwrap();
        let s = soft_labels(&[0], &sv, 4).unwrap();
        // Independent elementwise evaluation of onehot*(1-a_c) + a_c/N.
        let onehot = [1.0, 0.0, 0.0, 0.0];
        let alpha = [0.2, 0.1, 0.1, 0.1];
        for c in 0..4 {
            let expected = onehot[c] * (1.0 - alpha[c]) + alpha[c] / 4.0;
            assert_abs_diff_eq!(s.row(0)[c], expected, epsilon = 1e-15);
        }
        assert_eq!(s.row(0), &[0.85, 0.025, 0.025, 0.025]);
        assert_abs_diff_eq!(s.row_sums()[0], 0.925, epsilon = 1e-15);
    }

    #[test]
    fn soft_labels_row_sum_closed_form() {
        // sum = 1 - alpha_y + mean(alpha), an identity of the vector formula.
        let alpha = vec![0.3, 0.05, 0.12, 0.01, 0.2];
        let sv = SmoothingVector::new(alpha.clone()).unwrap();
        let mean: f64 = alpha.iter().sum::<f64>() / 5.0;
        let s = soft_labels(&[0, 1, 2, 3, 4], &sv, 5).unwrap();
        for (i, &y) in [0usize, 1, 2, 3, 4].iter().enumerate() {
            assert_abs_diff_eq!(s.row_sums()[i], 1.0 - alpha[y] + mean, epsilon = 1e-12);
        }
    }

    #[test]
    fn head_class_keeps_less_true_mass() {
        // f_0 > f_1, so a sample labeled 0 keeps strictly less true-class mass.
        let profile = ClassFrequencyProfile::from_counts(vec![100, 10]).unwrap();
        let sv = cda_alpha(0.1, &profile, 0.05).unwrap();
        let s = soft_labels(&[0, 1], &sv, 2).unwrap();
        assert!(s.row(0)[0] < s.row(1)[1]);
    }

    #[test]
    fn soft_ce_perfect_prediction_is_zero() {
        let loss = soft_ce_loss(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]).unwrap();
        assert!(loss.abs() < 1e-10);
    }

    #[test]
    fn soft_ce_uniform_uniform_is_log_n() {
        let loss = soft_ce_loss(&[0.25; 4], &[0.25; 4]).unwrap();
        assert_abs_diff_eq!(loss, 4f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn soft_ce_ls_target_uniform_prediction_is_log_n() {
        // LS rows sum to one, so against a uniform prediction the loss is
        // exactly log N.
        let sv = SmoothingVector::constant(0.1, 10).unwrap();
        let targets = soft_labels(&[4], &sv, 10).unwrap();
        let loss = soft_ce_loss(&[0.1; 10], targets.row(0)).unwrap();
        assert_abs_diff_eq!(loss, 10f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn soft_ce_minimized_at_normalized_targets() {
        // Cross entropy over distributions is minimized at p = t / sum(t);
        // spot-check by perturbing within the simplex.
        let target = [0.6, 0.2, 0.125];
        let sum: f64 = target.iter().sum();
        let opt: Vec<f64> = target.iter().map(|t| t / sum).collect();
        let at_opt = soft_ce_loss(&opt, &target).unwrap();
        for (i, j) in [(0usize, 1usize), (1, 2), (2, 0)] {
            for eps in [1e-3, 1e-2] {
                let mut p = opt.clone();
                p[i] += eps;
                p[j] -= eps;
                assert!(soft_ce_loss(&p, &target).unwrap() > at_opt);
            }
        }
    }
}
