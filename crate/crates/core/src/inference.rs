//! Turning raw anomaly scores into normal/anomaly decisions.
//!
//! Two rules are provided: the transductive two-cluster rule (1-D 2-means on
//! the test scores, lower cluster = normal) and an inductive quantile
//! threshold computed from training scores. Both are deterministic; ties at
//! the threshold go to normal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Anomaly,
}

impl Label {
    pub fn as_i8(self) -> i8 {
        match self {
            Label::Normal => 1,
            Label::Anomaly => -1,
        }
    }
}

/// One thresholded decision; `label` is anomaly iff `score > threshold_used`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub label: Label,
    pub score: f64,
    pub threshold_used: f64,
}

/// Labels scores against a fixed threshold (strict; ties are normal).
pub fn decide(scores: &[f64], threshold: f64) -> Vec<Decision> {
    scores
        .iter()
        .map(|&score| Decision {
            label: if score > threshold {
                Label::Anomaly
            } else {
                Label::Normal
            },
            score,
            threshold_used: threshold,
        })
        .collect()
}

/// 1-D 2-means on the scores with deterministic initialization (centroids at
/// the min and max score) run to a Lloyd fixed point. Points in the
/// lower-centroid cluster are normal; the reported threshold is the midpoint
/// between the two final centroids.
pub fn classify_kmeans2(scores: &[f64]) -> Result<(Vec<Label>, f64)> {
    if scores.len() < 2 {
        return Err(Error::invalid(format!(
            "two-cluster rule needs at least 2 scores, got {}",
            scores.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::validation("scores must be finite"));
    }
    let lo = scores.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Err(Error::DegenerateInput(
            "all scores are equal; the two-cluster rule cannot split them — use quantile mode"
                .into(),
        ));
    }

    let (mut c_lo, mut c_hi) = (lo, hi);
    let mut cut = (c_lo + c_hi) / 2.0;
    loop {
        // Assignment step: nearer centroid; midpoint ties go low.
        let (mut sum_lo, mut n_lo, mut sum_hi, mut n_hi) = (0.0f64, 0usize, 0.0f64, 0usize);
        for &s in scores {
            if s <= cut {
                sum_lo += s;
                n_lo += 1;
            } else {
                sum_hi += s;
                n_hi += 1;
            }
        }
        debug_assert!(
            n_lo > 0 && n_hi > 0,
            "min/max init keeps both clusters filled"
        );
        let new_lo = sum_lo / n_lo as f64;
        let new_hi = sum_hi / n_hi as f64;
        let new_cut = (new_lo + new_hi) / 2.0;
        let fixed_point = new_cut == cut;
        c_lo = new_lo;
        c_hi = new_hi;
        cut = new_cut;
        if fixed_point {
            break;
        }
    }

    let threshold = (c_lo + c_hi) / 2.0;
    let labels = scores
        .iter()
        .map(|&s| {
            if s > threshold {
                Label::Anomaly
            } else {
                Label::Normal
            }
        })
        .collect();
    Ok((labels, threshold))
}

/// Linear-interpolation quantile of a sorted copy of `values` (R type 7).
fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Inductive rule: the threshold is the q-quantile of the training scores.
pub fn classify_quantile(
    train_scores: &[f64],
    test_scores: &[f64],
    q: f64,
) -> Result<(Vec<Label>, f64)> {
    if train_scores.is_empty() {
        return Err(Error::invalid("quantile rule needs training scores"));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::invalid(format!("q must lie in (0,1), got {q}")));
    }
    if train_scores
        .iter()
        .chain(test_scores)
        .any(|s| !s.is_finite())
    {
        return Err(Error::validation("scores must be finite"));
    }
    let threshold = quantile(train_scores, q);
    let labels = test_scores
        .iter()
        .map(|&s| {
            if s > threshold {
                Label::Anomaly
            } else {
                Label::Normal
            }
        })
        .collect();
    Ok((labels, threshold))
}
