//! Temperature fitting and class-distribution-aware temperature vectors.
//!
//! The optimal scalar temperature is found with a naive line search: a coarse
//! grid over `[t_min, t_max]` followed by re-gridding around the incumbent
//! with a shrinking width. The class-distribution-aware vector adds
//! `gamma * f_c` on top of the fitted scalar, so frequent classes are damped
//! harder.

use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};
use crate::prob::{nll, softmax};
use crate::types::{ClassFrequencyProfile, LogitSet, ProbSet, TemperatureVector};

/// Line-search parameters for the scalar temperature fit.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TsFitConfig {
    pub t_min: f64,
    pub t_max: f64,
    pub coarse_steps: usize,
    pub refine_rounds: usize,
    pub refine_factor: f64,
}

impl Default for TsFitConfig {
    fn default() -> Self {
        Self {
            t_min: 0.05,
            t_max: 10.0,
            coarse_steps: 200,
            refine_rounds: 3,
            refine_factor: 0.1,
        }
    }
}

impl TsFitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_min.is_finite() && self.t_max.is_finite()) || self.t_min <= 0.0 || self.t_min >= self.t_max {
            return Err(CalibError::InvalidSpec(format!(
                "need 0 < t_min < t_max, got [{}, {}]",
                self.t_min, self.t_max
            )));
        }
        if self.coarse_steps < 10 {
            return Err(CalibError::InvalidSpec(format!(
                "coarse_steps must be >= 10, got {}",
                self.coarse_steps
            )));
        }
        if !self.refine_factor.is_finite() || self.refine_factor <= 0.0 || self.refine_factor >= 1.0 {
            return Err(CalibError::InvalidSpec(format!(
                "refine_factor must be in (0, 1), got {}",
                self.refine_factor
            )));
        }
        Ok(())
    }
}

/// Down-scale factor for the class-distribution-aware temperature vector.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CdaConfig {
    pub gamma: f64,
}

impl Default for CdaConfig {
    fn default() -> Self {
        Self { gamma: 0.1 }
    }
}

impl CdaConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(CalibError::InvalidSpec(format!(
                "gamma must be finite and >= 0, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

fn grid(lo: f64, hi: f64, steps: usize) -> impl Iterator<Item = f64> {
    let span = hi - lo;
    let denom = (steps - 1) as f64;
    (0..steps).map(move |i| lo + span * i as f64 / denom)
}

/// Fit the scalar temperature minimizing mean NLL on `logits`.
///
/// Deterministic; ties break toward the smaller temperature. `logits` is
/// intended to be a held-out validation split.
pub fn fit_optimal_temperature(logits: &LogitSet, cfg: &TsFitConfig) -> Result<f64> {
    cfg.validate()?;
    let n = logits.num_classes();
    let eval = |t: f64| -> f64 {
        let temps = TemperatureVector::constant(t, n).expect("grid temperatures are positive");
        nll(logits, &temps).expect("dimensions fixed by construction")
    };

    let mut best_t = f64::NAN;
    let mut best_nll = f64::INFINITY;
    let mut consider = |t: f64, v: f64| {
        if v.is_finite() && (v < best_nll || (v == best_nll && t < best_t)) {
            best_nll = v;
            best_t = t;
        }
    };

    for t in grid(cfg.t_min, cfg.t_max, cfg.coarse_steps) {
        consider(t, eval(t));
    }
    if !best_t.is_finite() {
        return Err(CalibError::FitFailure(
            "NLL was non-finite across the whole coarse grid".into(),
        ));
    }

    let mut width = cfg.t_max - cfg.t_min;
    for _ in 0..cfg.refine_rounds {
        width *= cfg.refine_factor;
        let lo = (best_t - width / 2.0).max(cfg.t_min);
        let hi = (best_t + width / 2.0).min(cfg.t_max);
        if hi <= lo {
            break;
        }
        let mut round_best: Option<(f64, f64)> = None;
        for t in grid(lo, hi, cfg.coarse_steps) {
            let v = eval(t);
            if v.is_finite() {
                let better = match round_best {
                    None => true,
                    Some((bt, bv)) => v < bv || (v == bv && t < bt),
                };
                if better {
                    round_best = Some((t, v));
                }
            }
        }
        if let Some((t, v)) = round_best {
            if v < best_nll || (v == best_nll && t < best_t) {
                best_nll = v;
                best_t = t;
            }
        }
    }
    Ok(best_t)
}

/// Class-distribution-aware temperature vector: `t_opt + gamma * f_c`.
///
/// Classes the model never saw have `f_c = 0` and keep exactly `t_opt`.
pub fn cda_temperature(
    t_opt: f64,
    profile: &ClassFrequencyProfile,
    cfg: &CdaConfig,
) -> Result<TemperatureVector> {
    cfg.validate()?;
    if !t_opt.is_finite() || t_opt <= 0.0 {
        return Err(CalibError::InvalidTemperature(format!(
            "t_opt must be finite and > 0, got {t_opt}"
        )));
    }
    TemperatureVector::new(
        profile
            .normalized()
            .iter()
            .map(|&f| t_opt + cfg.gamma * f)
            .collect(),
    )
}

/// Divide each logit column by its class temperature, then softmax per row.
pub fn apply_temperature(logits: &LogitSet, temps: &TemperatureVector) -> Result<ProbSet> {
    if temps.len() != logits.num_classes() {
        return Err(CalibError::ShapeMismatch(format!(
            "temperature vector has {} entries for {} classes",
            temps.len(),
            logits.num_classes()
        )));
    }
    let mut values = Vec::with_capacity(logits.values().len());
    for i in 0..logits.num_samples() {
        values.extend_from_slice(&softmax(logits.row(i), temps)?);
    }
    ProbSet::new(values, logits.labels().to_vec(), logits.num_classes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    /// Logits drawn as log of a known posterior: the resulting "model" is
    /// perfectly calibrated, so the optimal temperature is 1 by construction.
    fn calibrated_logits(samples: usize, classes: usize, scale: f64, seed: u64) -> LogitSet {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut values = Vec::with_capacity(samples * classes);
        let mut labels = Vec::with_capacity(samples);
        for _ in 0..samples {
            // Random posterior via softmax of random scores.
            let raw: Vec<f64> = (0..classes).map(|_| rng.random_range(-2.0..2.0)).collect();
            let temps = TemperatureVector::constant(1.0, classes).unwrap();
            let q = softmax(&raw, &temps).unwrap();
            // Draw the label from that posterior.
            let u: f64 = rng.random_range(0.0..1.0);
            let mut acc = 0.0;
            let mut label = classes - 1;
            for (c, &p) in q.iter().enumerate() {
                acc += p;
                if u < acc {
                    label = c;
                    break;
                }
            }
            labels.push(label);
            values.extend(q.iter().map(|&p| scale * p.max(1e-300).ln()));
        }
        LogitSet::new(values, labels, classes).unwrap()
    }

    #[test]
    fn fit_recovers_unit_temperature() {
        let logits = calibrated_logits(20_000, 5, 1.0, 42);
        let cfg = TsFitConfig::default();
        let t = fit_optimal_temperature(&logits, &cfg).unwrap();
        assert!((t - 1.0).abs() < 0.05, "fitted {t}");

        // Dense-grid oracle: no temperature on the coarse grid beats the fit.
        let n = logits.num_classes();
        let fitted_nll = nll(&logits, &TemperatureVector::constant(t, n).unwrap()).unwrap();
        for i in 0..cfg.coarse_steps {
            let g = cfg.t_min + (cfg.t_max - cfg.t_min) * i as f64 / (cfg.coarse_steps - 1) as f64;
            let v = nll(&logits, &TemperatureVector::constant(g, n).unwrap()).unwrap();
            assert!(fitted_nll <= v);
        }
    }

    #[test]
    fn fit_recovers_scaling_factor() {
        let logits = calibrated_logits(20_000, 5, 2.0, 43);
        let t = fit_optimal_temperature(&logits, &TsFitConfig::default()).unwrap();
        assert!((t - 2.0).abs() / 2.0 < 0.02, "fitted {t}");
    }

    #[test]
    fn fit_improves_on_unit_temperature() {
        let logits = calibrated_logits(5_000, 4, 3.0, 44);
        let cfg = TsFitConfig::default();
        let t = fit_optimal_temperature(&logits, &cfg).unwrap();
        let n = logits.num_classes();
        let at_fit = nll(&logits, &TemperatureVector::constant(t, n).unwrap()).unwrap();
        let at_one = nll(&logits, &TemperatureVector::constant(1.0, n).unwrap()).unwrap();
        assert!(at_fit <= at_one);
    }

    #[test]
    fn fit_rejects_bad_config() {
        let logits = calibrated_logits(10, 3, 1.0, 1);
        let cfg = TsFitConfig { t_min: 0.0, ..Default::default() };
        assert!(fit_optimal_temperature(&logits, &cfg).is_err());
        let cfg = TsFitConfig { coarse_steps: 5, ..Default::default() };
        assert!(fit_optimal_temperature(&logits, &cfg).is_err());
    }

    #[test]
    fn cda_temperature_paper_arithmetic() {
        // t_opt 1.551 with gamma 0.1: head class (f=1) gets 1.651, a class
        // with f=0.1 gets 1.561.
        let profile = ClassFrequencyProfile::from_counts(vec![1000, 100]).unwrap();
        let temps = cda_temperature(1.551, &profile, &CdaConfig::default()).unwrap();
        assert_abs_diff_eq!(temps.as_slice()[0], 1.651, epsilon = 1e-12);
        assert_abs_diff_eq!(temps.as_slice()[1], 1.561, epsilon = 1e-12);
    }

    #[test]
    fn cda_gamma_zero_is_constant() {
        let profile = ClassFrequencyProfile::from_counts(vec![10, 5, 1]).unwrap();
        let temps = cda_temperature(1.7, &profile, &CdaConfig { gamma: 0.0 }).unwrap();
        assert_eq!(temps.as_slice(), &[1.7, 1.7, 1.7]);
    }

    #[test]
    fn cda_uniform_frequencies_is_constant_shifted() {
        let profile = ClassFrequencyProfile::from_counts(vec![50, 50, 50]).unwrap();
        let temps = cda_temperature(2.0, &profile, &CdaConfig { gamma: 0.1 }).unwrap();
        for &t in temps.as_slice() {
            assert_abs_diff_eq!(t, 2.1, epsilon = 1e-15);
        }
    }

    #[test]
    fn cda_zero_frequency_class_keeps_t_opt() {
        let profile = ClassFrequencyProfile::from_labels(&[0, 0, 2], 3).unwrap();
        let temps = cda_temperature(1.5, &profile, &CdaConfig { gamma: 0.1 }).unwrap();
        assert_eq!(temps.as_slice()[1], 1.5);
    }

    #[test]
    fn apply_identity_temperature_matches_plain_softmax() {
        let logits = LogitSet::from_rows(&[vec![0.3, -1.0, 2.0]], vec![2], 3).unwrap();
        let temps = TemperatureVector::constant(1.0, 3).unwrap();
        let probs = apply_temperature(&logits, &temps).unwrap();
        let direct = softmax(logits.row(0), &temps).unwrap();
        assert_eq!(probs.row(0), direct.as_slice());
    }

    #[test]
    fn apply_hand_fixture() {
        // temps [1, 2] on logits [2, 2] divide to [2, 1]
        let logits = LogitSet::from_rows(&[vec![2.0, 2.0]], vec![0], 2).unwrap();
        let temps = TemperatureVector::new(vec![1.0, 2.0]).unwrap();
        let probs = apply_temperature(&logits, &temps).unwrap();
        assert_abs_diff_eq!(probs.row(0)[0], 0.7311, epsilon = 5e-5);
        assert_abs_diff_eq!(probs.row(0)[1], 0.2689, epsilon = 5e-5);
    }

    #[test]
    fn apply_dimension_mismatch() {
        let logits = LogitSet::from_rows(&[vec![0.0, 0.0]], vec![0], 2).unwrap();
        let temps = TemperatureVector::constant(1.0, 3).unwrap();
        assert!(matches!(
            apply_temperature(&logits, &temps),
            Err(CalibError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn vector_constant_equals_scalar_bitwise() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        for _ in 0..50 {
            let row: Vec<f64> = (0..4).map(|_| rng.random_range(-5.0..5.0)).collect();
            let t = rng.random_range(0.2..4.0);
            let scalar = softmax(&row, &TemperatureVector::constant(t, 4).unwrap()).unwrap();
            let vector = softmax(&row, &TemperatureVector::new(vec![t; 4]).unwrap()).unwrap();
            assert_eq!(scalar, vector);
        }
    }

    #[test]
    fn increasing_one_class_temperature_decreases_its_probability() {
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        for _ in 0..50 {
            let row: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            let mut t = vec![1.0; 5];
            let c = rng.random_range(0usize..5);
            let base = softmax(&row, &TemperatureVector::new(t.clone()).unwrap()).unwrap();
            t[c] = 1.5;
            let bumped = softmax(&row, &TemperatureVector::new(t).unwrap()).unwrap();
            if base[c] < 1.0 && row[c] > 0.0 {
                assert!(bumped[c] < base[c]);
            }
        }
    }
}
