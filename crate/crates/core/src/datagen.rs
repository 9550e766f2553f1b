//! Synthetic long-tailed dataset generation.
//!
//! Class counts follow the exponential imbalance profile used for the
//! standard long-tailed CIFAR construction: class `i` out of `N` keeps
//! `max_per_class * ratio^(-i / (N - 1))` samples, so the head class keeps
//! everything and the last class keeps `max_per_class / ratio`. Features are
//! an isotropic Gaussian mixture with seeded per-class mean directions, which
//! is enough to make training-time methods observable at desk scale.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};
use crate::types::ClassFrequencyProfile;

fn default_holdout_fraction() -> f64 {
    0.2
}

/// Parameters for one synthetic dataset draw.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub max_per_class: usize,
    pub imbalance_ratio: f64,
    pub feature_dim: usize,
    pub class_separation: f64,
    pub seed: u64,
    /// Fraction of each class held out; split into test (ceil half) and
    /// validation (floor half).
    #[serde(default = "default_holdout_fraction")]
    pub holdout_fraction: f64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(CalibError::InvalidSpec(format!(
                "num_classes must be >= 2, got {}",
                self.num_classes
            )));
        }
        if self.feature_dim < 1 {
            return Err(CalibError::InvalidSpec("feature_dim must be >= 1".into()));
        }
        if self.max_per_class == 0 {
            return Err(CalibError::InvalidSpec("max_per_class must be >= 1".into()));
        }
        if !self.imbalance_ratio.is_finite() || self.imbalance_ratio < 1.0 {
            return Err(CalibError::InvalidSpec(format!(
                "imbalance_ratio must be finite and >= 1, got {}",
                self.imbalance_ratio
            )));
        }
        if !self.class_separation.is_finite() || self.class_separation <= 0.0 {
            return Err(CalibError::InvalidSpec(format!(
                "class_separation must be finite and > 0, got {}",
                self.class_separation
            )));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(CalibError::InvalidSpec(format!(
                "holdout_fraction must be in [0, 1), got {}",
                self.holdout_fraction
            )));
        }
        Ok(())
    }
}

/// Feature matrix with aligned labels and the class-frequency profile of
/// exactly these labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<f64>, // row-major, M x feature_dim
    pub feature_dim: usize,
    pub labels: Vec<usize>,
    pub profile: ClassFrequencyProfile,
}

impl Dataset {
    pub fn new(features: Vec<f64>, feature_dim: usize, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if feature_dim == 0 {
            return Err(CalibError::InvalidSpec("feature_dim must be >= 1".into()));
        }
        if labels.is_empty() {
            return Err(CalibError::EmptyDataset("dataset has no samples".into()));
        }
        if features.len() != labels.len() * feature_dim {
            return Err(CalibError::ShapeMismatch(format!(
                "expected {} x {} feature values, got {}",
                labels.len(),
                feature_dim,
                features.len()
            )));
        }
        let profile = ClassFrequencyProfile::from_labels(&labels, num_classes)?;
        Ok(Self { features, feature_dim, labels, profile })
    }

    pub fn num_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn num_classes(&self) -> usize {
        self.profile.num_classes()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }
}

/// Train / validation / test partition of one synthetic draw.
#[derive(Debug, Clone)]
pub struct SplitDataset {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

impl SplitDataset {
    /// Profile of all splits combined (the distribution the draw realized).
    pub fn combined_profile(&self) -> Result<ClassFrequencyProfile> {
        let n = self.train.num_classes();
        let mut counts = vec![0usize; n];
        for ds in [&self.train, &self.val, &self.test] {
            for (c, &k) in counts.iter_mut().zip(ds.profile.counts()) {
                *c += k;
            }
        }
        ClassFrequencyProfile::from_counts(counts)
    }
}

/// Exponential long-tail class counts.
///
/// Rounded to nearest with a floor of one sample; an exact head/tail ratio
/// that would drop the tail below one sample is rejected as infeasible.
pub fn longtail_counts(
    max_per_class: usize,
    num_classes: usize,
    imbalance_ratio: f64,
) -> Result<Vec<usize>> {
    if num_classes == 0 {
        return Err(CalibError::InvalidSpec("num_classes must be >= 1".into()));
    }
    if max_per_class == 0 {
        return Err(CalibError::InvalidSpec("max_per_class must be >= 1".into()));
    }
    if !imbalance_ratio.is_finite() || imbalance_ratio < 1.0 {
        return Err(CalibError::InvalidSpec(format!(
            "imbalance_ratio must be finite and >= 1, got {imbalance_ratio}"
        )));
    }
    if max_per_class as f64 / imbalance_ratio < 1.0 {
        return Err(CalibError::InfeasibleSpec(format!(
            "tail class would hold {} < 1 samples",
            max_per_class as f64 / imbalance_ratio
        )));
    }
    if num_classes == 1 {
        return Ok(vec![max_per_class]);
    }
    let mut counts = Vec::with_capacity(num_classes);
    for i in 0..num_classes {
        let exponent = -(i as f64) / (num_classes as f64 - 1.0);
        let exact = max_per_class as f64 * imbalance_ratio.powf(exponent);
        counts.push((exact.round() as usize).max(1));
    }
    Ok(counts)
}

/// Tally labels into a [`ClassFrequencyProfile`].
pub fn frequency_profile(labels: &[usize], num_classes: usize) -> Result<ClassFrequencyProfile> {
    ClassFrequencyProfile::from_labels(labels, num_classes)
}

/// Per-class holdout sizes: (test, val). Classes with one sample keep it in
/// train; classes with two or more always give at least one test sample.
fn holdout_sizes(n: usize, fraction: f64) -> (usize, usize) {
    if n < 2 || fraction <= 0.0 {
        return (0, 0);
    }
    let hold = ((n as f64 * fraction).floor() as usize).clamp(1, n - 1);
    (hold.div_ceil(2), hold / 2)
}

/// Draw a Gaussian-mixture dataset with long-tailed class counts.
///
/// Per-class mean directions are seeded draws on the unit sphere scaled by
/// `class_separation`; features add unit-variance isotropic noise. The PRNG
/// stream order (means first, then samples in class order) is part of the
/// reproducibility contract.
pub fn sample_gaussian_mixture(spec: &SyntheticSpec) -> Result<SplitDataset> {
    spec.validate()?;
    let counts = longtail_counts(spec.max_per_class, spec.num_classes, spec.imbalance_ratio)?;
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let d = spec.feature_dim;

    let mut means = Vec::with_capacity(spec.num_classes);
    for _ in 0..spec.num_classes {
        let mut dir: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            dir[0] = 1.0;
        } else {
            for v in dir.iter_mut() {
                *v /= norm;
            }
        }
        for v in dir.iter_mut() {
            *v *= spec.class_separation;
        }
        means.push(dir);
    }

    let mut parts: [(Vec<f64>, Vec<usize>); 3] = Default::default();
    for (c, &n_c) in counts.iter().enumerate() {
        let (n_test, n_val) = holdout_sizes(n_c, spec.holdout_fraction);
        for s in 0..n_c {
            let part = if s < n_test {
                &mut parts[2]
            } else if s < n_test + n_val {
                &mut parts[1]
            } else {
                &mut parts[0]
            };
            for dim in 0..d {
                let noise: f64 = rng.sample(StandardNormal);
                part.0.push(means[c][dim] + noise);
            }
            part.1.push(c);
        }
    }

    let [(train_f, train_l), (val_f, val_l), (test_f, test_l)] = parts;
    Ok(SplitDataset {
        train: Dataset::new(train_f, d, train_l, spec.num_classes)?,
        val: Dataset::new(val_f, d, val_l, spec.num_classes)?,
        test: Dataset::new(test_f, d, test_l, spec.num_classes)?,
    })
}
