//! Binary-classification evaluation for the one-class setting.
//!
//! The positive class is the normal class (+1); anomalies are the negative
//! class (-1). Alongside accuracy and F1 on the positives, the report carries
//! the negative-class analogs TNR = TN/N, NPV = TN/(TN+FN), and their
//! harmonic mean F1-bar, which stay informative on unbalanced sets. AUC
//! treats the anomaly as the detection target: higher score = more anomalous.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Confusion counts plus every derived metric. Ratios whose denominator is
/// zero are reported as 0 and named in `degenerate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub accuracy: f64,
    pub f1: f64,
    pub tnr: f64,
    pub npv: f64,
    pub f1_bar: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub false_alarm_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degenerate: Vec<String>,
}

fn validate_labels(name: &str, labels: &[i8]) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::invalid(format!("{name} must be nonempty")));
    }
    if let Some(bad) = labels.iter().find(|&&l| l != 1 && l != -1) {
        return Err(Error::invalid(format!(
            "{name} must contain only +1/-1, found {bad}"
        )));
    }
    Ok(())
}

fn ratio(num: usize, den: usize, name: &str, degenerate: &mut Vec<String>) -> f64 {
    if den == 0 {
        degenerate.push(name.to_string());
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Confusion counts and the full metric set from predicted vs true ±1
/// labels.
pub fn report(pred: &[i8], truth: &[i8]) -> Result<EvalReport> {
    if pred.len() != truth.len() {
        return Err(Error::invalid(format!(
            "prediction count {} does not match label count {}",
            pred.len(),
            truth.len()
        )));
    }
    validate_labels("predictions", pred)?;
    validate_labels("labels", truth)?;

    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (1, 1) => tp += 1,
            (1, -1) => fp += 1,
            (-1, -1) => tn += 1,
            (-1, 1) => fn_ += 1,
            _ => unreachable!("labels validated above"),
        }
    }

    let mut degenerate = Vec::new();
    let total = tp + fp + tn + fn_;
    let accuracy = ratio(tp + tn, total, "accuracy", &mut degenerate);
    let precision = ratio(tp, tp + fp, "precision", &mut degenerate);
    let recall = ratio(tp, tp + fn_, "recall", &mut degenerate);
    let f1 = if precision + recall == 0.0 {
        degenerate.push("f1".into());
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let tnr = ratio(tn, tn + fp, "tnr", &mut degenerate);
    let npv = ratio(tn, tn + fn_, "npv", &mut degenerate);
    let f1_bar = if tnr + npv == 0.0 {
        degenerate.push("f1_bar".into());
        0.0
    } else {
        2.0 * tnr * npv / (tnr + npv)
    };

    Ok(EvalReport {
        tp,
        fp,
        tn,
        fn_,
        accuracy,
        f1,
        tnr,
        npv,
        f1_bar,
        auc: None,
        false_alarm_rate: None,
        degenerate,
    })
}

/// Area under the ROC curve with the anomaly class (-1) as the detection
/// target and higher scores more anomalous. Computed as the Mann-Whitney
/// rank statistic with ties contributing ½.
pub fn auc(scores: &[f64], truth: &[i8]) -> Result<f64> {
    if scores.len() != truth.len() {
        return Err(Error::invalid("scores and labels must have equal length"));
    }
    validate_labels("labels", truth)?;
    let n_anom = truth.iter().filter(|&&l| l == -1).count();
    let n_norm = truth.len() - n_anom;
    if n_anom == 0 || n_norm == 0 {
        return Err(Error::validation(
            "AUC needs both classes present in the labels",
        ));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::validation("scores must be finite"));
    }

    // Average ranks with tie groups sharing their mean rank.
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut ranks = vec![0.0f64; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg_rank;
        }
        i = j + 1;
    }

    let rank_sum_anom: f64 = truth
        .iter()
        .zip(&ranks)
        .filter(|(&l, _)| l == -1)
        .map(|(_, &r)| r)
        .sum();
    let n_a = n_anom as f64;
    let n_n = n_norm as f64;
    Ok((rank_sum_anom - n_a * (n_a + 1.0) / 2.0) / (n_a * n_n))
}

/// Fraction of true normals that were flagged as anomalies.
pub fn false_alarm_rate(pred: &[i8], truth: &[i8]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::invalid(
            "predictions and labels must have equal length",
        ));
    }
    validate_labels("predictions", pred)?;
    validate_labels("labels", truth)?;
    let normals = truth.iter().filter(|&&l| l == 1).count();
    if normals == 0 {
        return Err(Error::validation(
            "false alarm rate undefined without true normals",
        ));
    }
    let alarms = pred
        .iter()
        .zip(truth)
        .filter(|(&p, &t)| t == 1 && p == -1)
        .count();
    Ok(alarms as f64 / normals as f64)
}
