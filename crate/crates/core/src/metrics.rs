//! Calibration and uncertainty metrics: ECE, SCE, TACE, Brier score, UCE,
//! plus reliability-diagram and frequency-vs-confidence table emission.
//!
//! All binned metrics share one partition rule: `num_bins` equal-width
//! intervals `(lo, hi]` over [0, 1], with 0 included in the first bin.

use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};
use crate::prob::argmax_tie_lowest;
use crate::smooth::LOG_CLAMP;
use crate::types::{ClassFrequencyProfile, ProbSet};

fn default_num_bins() -> usize {
    10
}

fn default_tace_threshold() -> f64 {
    1e-3
}

fn default_tace_ranges() -> usize {
    10
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricsConfig {
    #[serde(default = "default_num_bins")]
    pub num_bins: usize,
    #[serde(default = "default_tace_threshold")]
    pub tace_threshold: f64,
    #[serde(default = "default_tace_ranges")]
    pub tace_ranges: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            num_bins: default_num_bins(),
            tace_threshold: default_tace_threshold(),
            tace_ranges: default_tace_ranges(),
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_bins < 2 {
            return Err(CalibError::InvalidSpec(format!(
                "num_bins must be >= 2, got {}",
                self.num_bins
            )));
        }
        if !(0.0..1.0).contains(&self.tace_threshold) {
            return Err(CalibError::InvalidSpec(format!(
                "tace_threshold must be in [0, 1), got {}",
                self.tace_threshold
            )));
        }
        if self.tace_ranges < 1 {
            return Err(CalibError::InvalidSpec("tace_ranges must be >= 1".into()));
        }
        Ok(())
    }
}

/// Which statistic the report was binned over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BinningMode {
    Confidence,
    Uncertainty,
}

/// Per-bin statistics. Empty bins carry zero counts and zero means.
#[derive(Debug, Clone, PartialEq)]
pub struct BinStats {
    pub count: usize,
    pub accuracy: f64,
    pub mean_confidence: f64,
    pub mean_uncertainty: f64,
}

impl BinStats {
    pub fn error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            1.0 - self.accuracy
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinReport {
    pub num_bins: usize,
    pub bins: Vec<BinStats>,
    pub total: usize,
    pub mode: BinningMode,
}

/// Shared bin partition: equal-width `(lo, hi]` intervals with 0 in bin 0.
pub fn bin_index(x: f64, num_bins: usize) -> usize {
    if x <= 0.0 {
        return 0;
    }
    let idx = (x * num_bins as f64).ceil() as usize;
    idx.saturating_sub(1).min(num_bins - 1)
}

/// Normalized predictive entropy `H(p) / log N`, in [0, 1].
pub fn predictive_uncertainty(probs_row: &[f64]) -> f64 {
    let n = probs_row.len();
    if n < 2 {
        return 0.0;
    }
    let mut h = 0.0;
    for &p in probs_row {
        if p > 0.0 {
            h -= p * p.ln();
        }
    }
    h / (n as f64).ln()
}

fn bin_over<F>(probs: &ProbSet, cfg: &MetricsConfig, mode: BinningMode, key: F) -> Result<BinReport>
where
    F: Fn(&[f64]) -> f64,
{
    cfg.validate()?;
    let b = cfg.num_bins;
    let mut count = vec![0usize; b];
    let mut sum_conf = vec![0.0; b];
    let mut sum_correct = vec![0.0; b];
    let mut sum_unc = vec![0.0; b];
    for i in 0..probs.num_samples() {
        let row = probs.row(i);
        let pred = argmax_tie_lowest(row);
        let idx = bin_index(key(row), b);
        count[idx] += 1;
        sum_conf[idx] += row[pred];
        if pred == probs.labels()[i] {
            sum_correct[idx] += 1.0;
        }
        sum_unc[idx] += predictive_uncertainty(row);
    }
    let bins = (0..b)
        .map(|i| {
            if count[i] == 0 {
                BinStats { count: 0, accuracy: 0.0, mean_confidence: 0.0, mean_uncertainty: 0.0 }
            } else {
                let n = count[i] as f64;
                BinStats {
                    count: count[i],
                    accuracy: sum_correct[i] / n,
                    mean_confidence: sum_conf[i] / n,
                    mean_uncertainty: sum_unc[i] / n,
                }
            }
        })
        .collect();
    Ok(BinReport { num_bins: b, bins, total: probs.num_samples(), mode })
}

/// Bin samples by confidence (max-class probability).
pub fn bin_stats(probs: &ProbSet, cfg: &MetricsConfig) -> Result<BinReport> {
    bin_over(probs, cfg, BinningMode::Confidence, |row| {
        row[argmax_tie_lowest(row)]
    })
}

/// Bin samples by normalized predictive entropy.
pub fn uncertainty_bin_stats(probs: &ProbSet, cfg: &MetricsConfig) -> Result<BinReport> {
    bin_over(probs, cfg, BinningMode::Uncertainty, predictive_uncertainty)
}

/// Expected calibration error: bin-weighted |accuracy - confidence|.
pub fn ece(report: &BinReport) -> Result<f64> {
    if report.mode != BinningMode::Confidence {
        return Err(CalibError::WrongBinning(
            "ECE requires a confidence-binned report".into(),
        ));
    }
    let total = report.total as f64;
    Ok(report
        .bins
        .iter()
        .map(|b| (b.count as f64 / total) * (b.accuracy - b.mean_confidence).abs())
        .sum())
}

/// Static calibration error: classwise binned gaps averaged over classes.
///
/// For every class `c`, all samples are binned by their class-`c`
/// probability; the bin accuracy is the fraction of members whose true label
/// is `c`.
pub fn sce(probs: &ProbSet, cfg: &MetricsConfig) -> Result<f64> {
    cfg.validate()?;
    let b = cfg.num_bins;
    let n_classes = probs.num_classes();
    let m = probs.num_samples() as f64;
    let mut total = 0.0;
    for c in 0..n_classes {
        let mut count = vec![0usize; b];
        let mut sum_p = vec![0.0; b];
        let mut sum_hit = vec![0.0; b];
        for i in 0..probs.num_samples() {
            let p = probs.row(i)[c];
            let idx = bin_index(p, b);
            count[idx] += 1;
            sum_p[idx] += p;
            if probs.labels()[i] == c {
                sum_hit[idx] += 1.0;
            }
        }
        for i in 0..b {
            if count[i] > 0 {
                let n = count[i] as f64;
                total += (n / m) * (sum_hit[i] / n - sum_p[i] / n).abs();
            }
        }
    }
    Ok(total / n_classes as f64)
}

/// Thresholded adaptive calibration error.
///
/// Per class, probabilities below the threshold are dropped, the survivors
/// are split into `tace_ranges` equal-count ranges, and the mean absolute
/// accuracy/confidence gap is taken over populated class-range cells only.
pub fn tace(probs: &ProbSet, cfg: &MetricsConfig) -> Result<f64> {
    cfg.validate()?;
    let r = cfg.tace_ranges;
    let mut total = 0.0;
    let mut populated = 0usize;
    for c in 0..probs.num_classes() {
        let mut survivors: Vec<(f64, bool)> = Vec::new();
        for i in 0..probs.num_samples() {
            let p = probs.row(i)[c];
            if p >= cfg.tace_threshold {
                survivors.push((p, probs.labels()[i] == c));
            }
        }
        // Stable sort keeps the original sample order among equal
        // probabilities, making the partition deterministic.
        survivors.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let s = survivors.len();
        if s == 0 {
            continue;
        }
        for range in 0..r {
            let lo = range * s / r;
            let hi = (range + 1) * s / r;
            if hi <= lo {
                continue;
            }
            let cell = &survivors[lo..hi];
            let n = cell.len() as f64;
            let conf: f64 = cell.iter().map(|(p, _)| p).sum::<f64>() / n;
            let acc = cell.iter().filter(|(_, hit)| *hit).count() as f64 / n;
            total += (acc - conf).abs();
            populated += 1;
        }
    }
    if populated == 0 {
        return Ok(0.0);
    }
    Ok(total / populated as f64)
}

/// Multiclass Brier score: mean squared distance to the one-hot label,
/// summed over classes. In [0, 2].
pub fn brier(probs: &ProbSet) -> f64 {
    let mut total = 0.0;
    for i in 0..probs.num_samples() {
        for (c, &p) in probs.row(i).iter().enumerate() {
            let y = if probs.labels()[i] == c { 1.0 } else { 0.0 };
            total += (p - y) * (p - y);
        }
    }
    total / probs.num_samples() as f64
}

/// Uncertainty calibration error: bins over normalized predictive entropy,
/// weighting |error - uncertainty| per bin.
pub fn uce(probs: &ProbSet, cfg: &MetricsConfig) -> Result<f64> {
    let report = uncertainty_bin_stats(probs, cfg)?;
    let total = report.total as f64;
    Ok(report
        .bins
        .iter()
        .map(|b| (b.count as f64 / total) * (b.error() - b.mean_uncertainty).abs())
        .sum())
}

/// Mean NLL recomputed from probabilities (clamped logs), for reports built
/// from probability files where logits are unavailable.
pub fn nll_from_probs(probs: &ProbSet) -> f64 {
    let mut total = 0.0;
    for i in 0..probs.num_samples() {
        total -= probs.row(i)[probs.labels()[i]].max(LOG_CLAMP).ln();
    }
    total / probs.num_samples() as f64
}

/// One reliability-diagram row per bin, empty bins included.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ReliabilityRow {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub n: usize,
    pub acc: f64,
    pub conf: f64,
    pub gap: f64,
    #[serde(skip)]
    pub empty: bool,
}

pub fn reliability_rows(report: &BinReport) -> Vec<ReliabilityRow> {
    let b = report.num_bins as f64;
    report
        .bins
        .iter()
        .enumerate()
        .map(|(i, stats)| ReliabilityRow {
            bin_lo: i as f64 / b,
            bin_hi: (i + 1) as f64 / b,
            n: stats.count,
            acc: stats.accuracy,
            conf: stats.mean_confidence,
            gap: if stats.count == 0 {
                0.0
            } else {
                stats.mean_confidence - stats.accuracy
            },
            empty: stats.count == 0,
        })
        .collect()
}

/// Per-class mean true-class confidence against the class frequency profile.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ClassConfidenceRow {
    pub class: usize,
    pub count: usize,
    pub freq_normalized: f64,
    /// Mean probability assigned to class `c` over samples labeled `c`;
    /// absent classes emit null.
    pub mean_confidence: Option<f64>,
}

pub fn confidence_by_class(
    probs: &ProbSet,
    profile: &ClassFrequencyProfile,
) -> Result<Vec<ClassConfidenceRow>> {
    if profile.num_classes() != probs.num_classes() {
        return Err(CalibError::ShapeMismatch(format!(
            "profile has {} classes, probabilities have {}",
            profile.num_classes(),
            probs.num_classes()
        )));
    }
    let n = probs.num_classes();
    let mut sum = vec![0.0; n];
    let mut count = vec![0usize; n];
    for i in 0..probs.num_samples() {
        let y = probs.labels()[i];
        sum[y] += probs.row(i)[y];
        count[y] += 1;
    }
    Ok((0..n)
        .map(|c| ClassConfidenceRow {
            class: c,
            count: profile.counts()[c],
            freq_normalized: profile.normalized()[c],
            mean_confidence: if count[c] == 0 {
                None
            } else {
                Some(sum[c] / count[c] as f64)
            },
        })
        .collect())
}

/// The full metric suite over one probability set.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub acc: f64,
    pub ece: f64,
    pub sce: f64,
    pub tace: f64,
    pub brier: f64,
    pub uce: f64,
    pub nll: f64,
    pub config: MetricsConfig,
}

impl MetricsReport {
    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn full_report(probs: &ProbSet, cfg: &MetricsConfig) -> Result<MetricsReport> {
    let conf_report = bin_stats(probs, cfg)?;
    Ok(MetricsReport {
        schema_version: crate::SCHEMA_VERSION,
        acc: probs.accuracy(),
        ece: ece(&conf_report)?,
        sce: sce(probs, cfg)?,
        tace: tace(probs, cfg)?,
        brier: brier(probs),
        uce: uce(probs, cfg)?,
        nll: nll_from_probs(probs),
        config: cfg.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn probs(rows: &[Vec<f64>], labels: Vec<usize>) -> ProbSet {
        let n = rows[0].len();
        ProbSet::from_rows(rows, labels, n).unwrap()
    }

    #[test]
    fn bin_index_boundary_rule() {
        assert_eq!(bin_index(0.0, 10), 0);
        assert_eq!(bin_index(0.05, 10), 0);
        assert_eq!(bin_index(0.1, 10), 0); // (0, 0.1] closes at 0.1
        assert_eq!(bin_index(0.100001, 10), 1);
        assert_eq!(bin_index(0.95, 10), 9);
        assert_eq!(bin_index(1.0, 10), 9);
    }

    #[test]
    fn bin_stats_all_confident_correct() {
        let p = probs(&[vec![1.0, 0.0], vec![1.0, 0.0]], vec![0, 0]);
        let r = bin_stats(&p, &MetricsConfig::default()).unwrap();
        assert_eq!(r.bins[9].count, 2);
        assert_eq!(r.bins[9].accuracy, 1.0);
        assert_eq!(r.bins[9].mean_confidence, 1.0);
        assert_eq!(r.bins.iter().map(|b| b.count).sum::<usize>(), 2);
    }

    #[test]
    fn bin_stats_six_sample_hand_tally() {
        // Confidences: 0.55, 0.62, 0.62, 0.91, 0.78, 1.0
        // bins (B=10): 5, 6, 6, 9, 7, 9. Correct: y=0 rows 0,1,3,5; wrong 2,4.
        let p = probs(
            &[
                vec![0.55, 0.45],
                vec![0.62, 0.38],
                vec![0.38, 0.62],
                vec![0.91, 0.09],
                vec![0.22, 0.78],
                vec![1.0, 0.0],
            ],
            vec![0, 0, 0, 0, 0, 0],
        );
        let r = bin_stats(&p, &MetricsConfig::default()).unwrap();
        assert_eq!(r.bins[5].count, 1);
        assert_abs_diff_eq!(r.bins[5].accuracy, 1.0);
        assert_abs_diff_eq!(r.bins[5].mean_confidence, 0.55, epsilon = 1e-15);
        assert_eq!(r.bins[6].count, 2);
        assert_abs_diff_eq!(r.bins[6].accuracy, 0.5);
        assert_abs_diff_eq!(r.bins[6].mean_confidence, 0.62, epsilon = 1e-15);
        assert_eq!(r.bins[7].count, 1);
        assert_abs_diff_eq!(r.bins[7].accuracy, 0.0);
        assert_eq!(r.bins[9].count, 2);
        assert_abs_diff_eq!(r.bins[9].accuracy, 1.0);
        assert_abs_diff_eq!(r.bins[9].mean_confidence, 0.955, epsilon = 1e-15);
    }

    #[test]
    fn ece_all_confident_half_correct() {
        let p = probs(
            &[vec![1.0, 0.0], vec![1.0, 0.0]],
            vec![0, 1],
        );
        let r = bin_stats(&p, &MetricsConfig::default()).unwrap();
        assert_abs_diff_eq!(ece(&r).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn ece_rejects_uncertainty_binned_report() {
        let p = probs(&[vec![0.9, 0.1]], vec![0]);
        let r = uncertainty_bin_stats(&p, &MetricsConfig::default()).unwrap();
        assert!(matches!(ece(&r), Err(CalibError::WrongBinning(_))));
    }

    #[test]
    fn sce_one_class_degenerate_all_correct() {
        // Predicting class 0 with certainty, always right: class-0 bins have
        // acc = conf = 1, class-1 bins acc = conf = 0.
        let p = probs(&[vec![1.0, 0.0], vec![1.0, 0.0]], vec![0, 0]);
        assert_abs_diff_eq!(sce(&p, &MetricsConfig::default()).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn brier_perfect_and_inverted() {
        let perfect = probs(&[vec![1.0, 0.0]], vec![0]);
        assert_eq!(brier(&perfect), 0.0);
        let wrong = probs(&[vec![1.0, 0.0], vec![1.0, 0.0]], vec![1, 1]);
        assert_eq!(brier(&wrong), 2.0);
    }

    #[test]
    fn brier_uniform_binary() {
        let p = probs(&[vec![0.5, 0.5]], vec![0]);
        assert_abs_diff_eq!(brier(&p), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn uncertainty_one_hot_and_uniform() {
        assert_eq!(predictive_uncertainty(&[1.0, 0.0, 0.0]), 0.0);
        assert_abs_diff_eq!(predictive_uncertainty(&[0.25; 4]), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            predictive_uncertainty(&[0.5, 0.5, 0.0, 0.0]),
            0.5,
            epsilon = 1e-12
        );
    }

    #[test]
    fn uce_one_hot_all_correct_is_zero() {
        let p = probs(&[vec![1.0, 0.0], vec![0.0, 1.0]], vec![0, 1]);
        assert_abs_diff_eq!(uce(&p, &MetricsConfig::default()).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn uce_uniform_predictions_closed_form() {
        // Uniform rows land in the top uncertainty bin; with accuracy 1/N the
        // gap is |(1 - 1/N) - 1| = 1/N.
        let n = 4;
        let rows: Vec<Vec<f64>> = (0..4).map(|_| vec![0.25; n]).collect();
        // Argmax ties to class 0, so exactly the row labeled 0 is correct.
        let p = probs(&rows, vec![0, 1, 2, 3]);
        assert_abs_diff_eq!(
            uce(&p, &MetricsConfig::default()).unwrap(),
            0.25,
            epsilon = 1e-12
        );
    }

    #[test]
    fn tace_threshold_drops_class_entirely() {
        // Class 1 probabilities all below the threshold: only class 0 cells
        // contribute, and they are perfectly confident and correct.
        let p = probs(
            &[vec![0.9995, 0.0005], vec![0.9999, 0.0001]],
            vec![0, 0],
        );
        let cfg = MetricsConfig { tace_ranges: 1, ..Default::default() };
        let got = tace(&p, &cfg).unwrap();
        // Single class-0 cell: conf = 0.9997, acc = 1.
        assert_abs_diff_eq!(got, 1.0 - 0.9997, epsilon = 1e-12);
    }

    #[test]
    fn reliability_rows_cover_unit_interval() {
        let p = probs(&[vec![0.7, 0.3]], vec![0]);
        let rows = reliability_rows(&bin_stats(&p, &MetricsConfig::default()).unwrap());
        assert_eq!(rows.len(), 10);
        assert_eq!(rows[0].bin_lo, 0.0);
        assert_eq!(rows[9].bin_hi, 1.0);
        for w in rows.windows(2) {
            assert_eq!(w[0].bin_hi, w[1].bin_lo);
        }
        assert!(rows[0].empty && rows[0].n == 0 && rows[0].acc == 0.0 && rows[0].conf == 0.0);
        assert!(!rows[6].empty && rows[6].n == 1);
    }

    #[test]
    fn confidence_by_class_uniform_predictor() {
        let rows: Vec<Vec<f64>> = (0..3).map(|_| vec![0.25; 4]).collect();
        let p = probs(&rows, vec![0, 1, 2]);
        let profile = ClassFrequencyProfile::from_labels(&[0, 1, 2], 4).unwrap();
        let out = confidence_by_class(&p, &profile).unwrap();
        assert_eq!(out.len(), 4);
        for row in &out[..3] {
            assert_abs_diff_eq!(row.mean_confidence.unwrap(), 0.25, epsilon = 1e-15);
        }
        assert!(out[3].mean_confidence.is_none());
        assert_eq!(out[3].count, 0);
    }

    #[test]
    fn metrics_permutation_invariant() {
        let rows = vec![
            vec![0.7, 0.2, 0.1],
            vec![0.1, 0.8, 0.1],
            vec![0.3, 0.3, 0.4],
            vec![0.5, 0.25, 0.25],
        ];
        let labels = vec![0, 1, 2, 1];
        let p1 = probs(&rows, labels.clone());
        let perm = [2usize, 0, 3, 1];
        let rows2: Vec<Vec<f64>> = perm.iter().map(|&i| rows[i].clone()).collect();
        let labels2: Vec<usize> = perm.iter().map(|&i| labels[i]).collect();
        let p2 = probs(&rows2, labels2);
        let cfg = MetricsConfig::default();
        let a = full_report(&p1, &cfg).unwrap();
        let b = full_report(&p2, &cfg).unwrap();
        assert_abs_diff_eq!(a.ece, b.ece, epsilon = 1e-12);
        assert_abs_diff_eq!(a.sce, b.sce, epsilon = 1e-12);
        assert_abs_diff_eq!(a.tace, b.tace, epsilon = 1e-12);
        assert_abs_diff_eq!(a.brier, b.brier, epsilon = 1e-12);
        assert_abs_diff_eq!(a.uce, b.uce, epsilon = 1e-12);
        assert_abs_diff_eq!(a.nll, b.nll, epsilon = 1e-12);
        assert_eq!(a.acc, b.acc);
    }

    #[test]
    fn metric_ranges() {
        let rows = vec![vec![0.6, 0.3, 0.1], vec![0.2, 0.5, 0.3]];
        let p = probs(&rows, vec![0, 2]);
        let cfg = MetricsConfig::default();
        let r = full_report(&p, &cfg).unwrap();
        assert!((0.0..=1.0).contains(&r.ece));
        assert!((0.0..=1.0).contains(&r.sce));
        assert!((0.0..=1.0).contains(&r.tace));
        assert!((0.0..=2.0).contains(&r.brier));
        assert!((0.0..=1.0).contains(&r.uce));
        assert!(r.nll >= 0.0);
    }
}
