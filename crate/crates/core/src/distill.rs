//! Self-distillation with per-class temperature scaling.
//!
//! The distillation loss is the KL divergence between the teacher and
//! student distributions, both obtained by elementwise division of the
//! logits by the temperature vector followed by softmax. The teacher is
//! constant: no gradient flows through it, and its scaled probabilities are
//! precomputed once before training. The student trains on
//! `(1 - lambda) * CE(hard labels) + lambda * KL`.

use crate::calibrate::apply_temperature;
use crate::error::{CalibError, Result};
use crate::prob::softmax_plain;
use crate::smooth::{SmoothingVector, LOG_CLAMP};
use crate::train::{
    run_sgd, targets_for_mode, DistillTerm, LossMode, Model, TrainConfig, TrainOutcome,
};
use crate::datagen::Dataset;
use crate::types::TemperatureVector;

/// KL(p || q) with clamped logs. Exactly zero for identical inputs; the
/// final sum is floored at zero since rounding can leave a tiny negative.
pub(crate) fn kl_div(p: &[f64], q: &[f64]) -> f64 {
    let mut kl = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            kl += pi * (pi.max(LOG_CLAMP).ln() - qi.max(LOG_CLAMP).ln());
        }
    }
    kl.max(0.0)
}

/// Distillation loss for one teacher/student logit pair.
pub fn kd_loss(
    teacher_row: &[f64],
    student_row: &[f64],
    temps: &TemperatureVector,
) -> Result<f64> {
    if teacher_row.len() != student_row.len() || teacher_row.len() != temps.len() {
        return Err(CalibError::ShapeMismatch(format!(
            "teacher {}, student {}, temps {} must all agree",
            teacher_row.len(),
            student_row.len(),
            temps.len()
        )));
    }
    let t = temps.as_slice();
    let scale = |row: &[f64]| -> Vec<f64> {
        softmax_plain(&row.iter().zip(t).map(|(&z, &ti)| z / ti).collect::<Vec<_>>())
    };
    Ok(kl_div(&scale(teacher_row), &scale(student_row)))
}

/// Distillation loss plus its gradient with respect to the student logits.
pub fn kd_loss_grad(
    teacher_row: &[f64],
    student_row: &[f64],
    temps: &TemperatureVector,
) -> Result<(f64, Vec<f64>)> {
    let loss = kd_loss(teacher_row, student_row, temps)?;
    let t = temps.as_slice();
    let scale = |row: &[f64]| -> Vec<f64> {
        softmax_plain(&row.iter().zip(t).map(|(&z, &ti)| z / ti).collect::<Vec<_>>())
    };
    let p_t = scale(teacher_row);
    let p_s = scale(student_row);
    let grad = (0..t.len()).map(|c| (p_s[c] - p_t[c]) / t[c]).collect();
    Ok((loss, grad))
}

fn default_fuse_lambda() -> f64 {
    0.5
}

#[derive(Debug, Clone)]
pub struct DistillConfig {
    pub temps: TemperatureVector,
    /// Fusion weight: 0 is plain CE training, 1 is distillation only.
    pub fuse_lambda: f64,
    pub train: TrainConfig,
}

impl DistillConfig {
    pub fn new(temps: TemperatureVector, train: TrainConfig) -> Self {
        Self { temps, fuse_lambda: default_fuse_lambda(), train }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if !self.fuse_lambda.is_finite() || !(0.0..=1.0).contains(&self.fuse_lambda) {
            return Err(CalibError::InvalidSpec(format!(
                "fuse_lambda must be in [0, 1], got {}",
                self.fuse_lambda
            )));
        }
        Ok(())
    }
}

/// Train a student of the teacher's architecture from a fresh seeded
/// initialization under the fused CE + distillation objective.
///
/// With `fuse_lambda = 0` this takes exactly the plain-CE training path, so
/// the trajectory is reproduced bit for bit.
pub fn self_distill(teacher: &Model, data: &Dataset, cfg: &DistillConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if teacher.feature_dim() != data.feature_dim || teacher.num_classes() != data.num_classes() {
        return Err(CalibError::ShapeMismatch(format!(
            "teacher is {}x{}, dataset is {}x{}",
            teacher.feature_dim(),
            teacher.num_classes(),
            data.feature_dim,
            data.num_classes()
        )));
    }
    if cfg.temps.len() != data.num_classes() {
        return Err(CalibError::ShapeMismatch(format!(
            "temperature vector has {} entries for {} classes",
            cfg.temps.len(),
            data.num_classes()
        )));
    }
    if let Some(width) = cfg.train.hidden_width {
        if teacher.arch() != (crate::train::ModelArch::OneHidden { width }) {
            return Err(CalibError::InvalidSpec(
                "student architecture must match the teacher for self-distillation".into(),
            ));
        }
    }

    // Student CE always uses hard labels; the smoothing modes belong to train().
    let hard = targets_for_mode(
        data,
        &TrainConfig { loss_mode: LossMode::Ce, ..cfg.train.clone() },
    )?;
    debug_assert!({
        let sv = SmoothingVector::constant(0.0, data.num_classes()).unwrap();
        sv.as_slice().iter().all(|&a| a == 0.0)
    });

    if cfg.fuse_lambda == 0.0 {
        return run_sgd(data, &hard, 1.0, None, None, &cfg.train, teacher.arch());
    }

    let teacher_logits = teacher.forward(data)?;
    let teacher_probs = apply_temperature(&teacher_logits, &cfg.temps)?;
    let term = DistillTerm {
        teacher_probs: teacher_probs.values().to_vec(),
        temps: &cfg.temps,
        lambda: cfg.fuse_lambda,
    };
    run_sgd(
        data,
        &hard,
        1.0 - cfg.fuse_lambda,
        Some(&term),
        None,
        &cfg.train,
        teacher.arch(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::train;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn toy_dataset() -> Dataset {
        let features = vec![
            1.5, 2.0, 1.8, 2.2, 2.1, 1.9, //
            -1.5, -2.0, -1.8, -2.2, -2.1, -1.9,
        ];
        Dataset::new(features, 2, vec![0, 0, 0, 1, 1, 1], 2).unwrap()
    }

    #[test]
    fn kd_identity_is_exactly_zero() {
        let temps = TemperatureVector::new(vec![1.0, 2.0, 4.0]).unwrap();
        let row = [0.7, -1.2, 3.3];
        assert_eq!(kd_loss(&row, &row, &temps).unwrap(), 0.0);
    }

    #[test]
    fn kd_constant_vector_equals_scalar_form() {
        let teacher = [2.0, 0.5, -1.0];
        let student = [1.0, 1.0, 0.0];
        let via_vector = kd_loss(
            &teacher,
            &student,
            &TemperatureVector::new(vec![3.0, 3.0, 3.0]).unwrap(),
        )
        .unwrap();
        let via_constant = kd_loss(
            &teacher,
            &student,
            &TemperatureVector::constant(3.0, 3).unwrap(),
        )
        .unwrap();
        assert_eq!(via_vector, via_constant);
    }

    #[test]
    fn kd_three_class_hand_fixture() {
        // Scaled softmaxes computed by hand from temps [1, 2, 4].
        let teacher = [1.0, 2.0, 3.0];
        let student = [0.0, 1.0, -1.0];
        let temps = TemperatureVector::new(vec![1.0, 2.0, 4.0]).unwrap();

        let scale = |row: [f64; 3]| -> Vec<f64> {
            let s = [row[0] / 1.0, row[1] / 2.0, row[2] / 4.0];
            let exp: Vec<f64> = s.iter().map(|v| v.exp()).collect();
            let sum: f64 = exp.iter().sum();
            exp.iter().map(|v| v / sum).collect()
        };
        let p = scale(teacher);
        let q = scale(student);
        let expected: f64 = p
            .iter()
            .zip(&q)
            .map(|(&pi, &qi)| pi * (pi.ln() - qi.ln()))
            .sum();

        let got = kd_loss(&teacher, &student, &temps).unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-12);
    }

    #[test]
    fn kd_non_negative_on_random_pairs() {
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        for _ in 0..200 {
            let t: Vec<f64> = (0..4).map(|_| rng.random_range(-4.0..4.0)).collect();
            let s: Vec<f64> = (0..4).map(|_| rng.random_range(-4.0..4.0)).collect();
            let temps = TemperatureVector::new(
                (0..4).map(|_| rng.random_range(0.5..5.0)).collect(),
            )
            .unwrap();
            assert!(kd_loss(&t, &s, &temps).unwrap() >= 0.0);
        }
    }

    #[test]
    fn kd_grad_matches_finite_differences() {
        let temps = TemperatureVector::new(vec![1.0, 2.0, 4.0]).unwrap();
        let teacher = [1.0, -0.5, 0.7];
        let student = [0.3, 0.9, -1.1];
        let (_, grad) = kd_loss_grad(&teacher, &student, &temps).unwrap();
        let eps = 1e-5;
        for k in 0..3 {
            let mut up = student;
            up[k] += eps;
            let mut dn = student;
            dn[k] -= eps;
            let fd = (kd_loss(&teacher, &up, &temps).unwrap()
                - kd_loss(&teacher, &dn, &temps).unwrap())
                / (2.0 * eps);
            assert_abs_diff_eq!(grad[k], fd, epsilon = 1e-8);
        }
    }

    #[test]
    fn lambda_zero_reproduces_plain_ce_training_bitwise() {
        let ds = toy_dataset();
        let train_cfg = TrainConfig { epochs: 6, seed: 9, ..Default::default() };
        let plain = train(&ds, None, &train_cfg).unwrap();

        let teacher = plain.model.clone();
        let cfg = DistillConfig {
            temps: TemperatureVector::constant(4.0, 2).unwrap(),
            fuse_lambda: 0.0,
            train: train_cfg,
        };
        let distilled = self_distill(&teacher, &ds, &cfg).unwrap();
        assert_eq!(plain.model.flat_params(), distilled.model.flat_params());
        for (a, b) in plain.trace.iter().zip(&distilled.trace) {
            assert_eq!(a.train_loss.to_bits(), b.train_loss.to_bits());
        }
    }

    #[test]
    fn lambda_one_with_teacher_at_init_stays_put() {
        // The linear student initializes at zero; a zero teacher makes the
        // distillation gradient vanish, so nothing ever moves.
        let ds = toy_dataset();
        let teacher = Model::zeros_linear(2, 2).unwrap();
        let cfg = DistillConfig {
            temps: TemperatureVector::constant(4.0, 2).unwrap(),
            fuse_lambda: 1.0,
            train: TrainConfig { epochs: 5, seed: 3, ..Default::default() },
        };
        let out = self_distill(&teacher, &ds, &cfg).unwrap();
        assert_eq!(out.model.flat_params(), teacher.flat_params());
        for row in &out.trace {
            assert_abs_diff_eq!(row.train_loss, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn self_distill_is_deterministic() {
        let ds = toy_dataset();
        let teacher = train(&ds, None, &TrainConfig { epochs: 5, seed: 1, ..Default::default() })
            .unwrap()
            .model;
        let cfg = DistillConfig {
            temps: TemperatureVector::new(vec![1.5, 2.5]).unwrap(),
            fuse_lambda: 0.5,
            train: TrainConfig { epochs: 5, seed: 21, ..Default::default() },
        };
        let a = self_distill(&teacher, &ds, &cfg).unwrap();
        let b = self_distill(&teacher, &ds, &cfg).unwrap();
        assert_eq!(a.model.flat_params(), b.model.flat_params());
    }
}
