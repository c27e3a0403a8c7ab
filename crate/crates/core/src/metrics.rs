//! Evaluation metrics: ROC curves and AUC, error counts, label moving
//! averages.

use std::cmp::Ordering;
use std::io::Write;

use crate::error::{Error, Result};
use crate::forecast::Forecast;

/// ROC curve from a threshold sweep, plus the Mann-Whitney AUC.
#[derive(Clone, Debug, PartialEq)]
pub struct RocCurve {
    /// `(false positive rate, true positive rate)` from (0, 0) to (1, 1).
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

impl RocCurve {
    /// Trapezoidal area under `points`.
    pub fn trapezoid_area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
            .sum()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["fpr", "tpr"])?;
        for (fpr, tpr) in &self.points {
            out.write_record([fpr.to_string(), tpr.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn class_counts(scores: &[(f64, usize)]) -> Result<(u64, u64)> {
    let mut pos = 0u64;
    let mut neg = 0u64;
    for &(s, y) in scores {
        if s.is_nan() {
            return Err(Error::UndefinedMetric("NaN score".into()));
        }
        match y {
            0 => neg += 1,
            1 => pos += 1,
            other => {
                return Err(Error::InvalidLabel {
                    label: other,
                    arity: 2,
                })
            }
        }
    }
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(
            "ROC needs at least one positive and one negative label".into(),
        ));
    }
    Ok((pos, neg))
}

fn sorted_descending(scores: &[(f64, usize)]) -> Vec<(f64, usize)> {
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));
    sorted
}

/// ROC analysis of scores for label 1. The AUC is the probability that a
/// random positive outscores a random negative, ties counting one half.
pub fn roc_auc(scores: &[(f64, usize)]) -> Result<RocCurve> {
    let (pos, neg) = class_counts(scores)?;
    let sorted = sorted_descending(scores);

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    // twice the Mann-Whitney U, kept integral
    let mut twice_u = 0u64;
    let mut i = 0;
    while i < sorted.len() {
        let threshold = sorted[i].0;
        let (mut group_pos, mut group_neg) = (0u64, 0u64);
        while i < sorted.len() && sorted[i].0 == threshold {
            if sorted[i].1 == 1 {
                group_pos += 1;
            } else {
                group_neg += 1;
            }
            i += 1;
        }
        // negatives ranked strictly below this group are those not yet seen
        let below = neg - fp - group_neg;
        twice_u += 2 * group_pos * below + group_pos * group_neg;
        tp += group_pos;
        fp += group_neg;
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    let auc = twice_u as f64 / (2 * pos * neg) as f64;
    Ok(RocCurve { points, auc })
}

/// Number of observations whose most probable label is wrong.
pub fn error_count(predictions: &[Forecast], labels: &[usize]) -> Result<usize> {
    if predictions.len() != labels.len() {
        return Err(Error::ArityMismatch {
            expected: predictions.len(),
            found: labels.len(),
        });
    }
    Ok(predictions
        .iter()
        .zip(labels)
        .filter(|(p, y)| p.predicted_label() != **y)
        .count())
}

/// Mean of `labels[n..n + window]` for every admissible `n`.
pub fn moving_average(labels: &[usize], window: usize) -> Result<Vec<f64>> {
    if window == 0 || window > labels.len() {
        return Err(Error::TooLarge(format!(
            "window {window} does not fit a sequence of length {}",
            labels.len()
        )));
    }
    let mut prefix = Vec::with_capacity(labels.len() + 1);
    prefix.push(0u64);
    for &y in labels {
        prefix.push(prefix.last().unwrap() + y as u64);
    }
    Ok((0..=labels.len() - window)
        .map(|n| (prefix[n + window] - prefix[n]) as f64 / window as f64)
        .collect())
}
