//! Range-AUC and VUS.
//!
//! Labels are softened with a linear ramp of length `buffer` on both sides
//! of every event (`1 - k / (buffer + 1)` at `k` steps outside), clipped at
//! the series ends. All distinct score thresholds are swept with tied
//! scores entering together. ROC area uses the trapezoid rule from (0, 0);
//! PR area is average precision `sum (R_i - R_{i-1}) P_i`. With
//! `buffer = 0` the ROC area is the classic AUC.

use super::{events, pointwise::check_pair};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeAuc {
    pub roc: f64,
    pub pr: f64,
}

pub fn soft_labels(truth: &[u8], buffer: usize) -> Vec<f64> {
    let mut out: Vec<f64> = truth.iter().map(|&v| f64::from(v)).collect();
    let n = truth.len();
    for e in events(truth) {
        for k in 1..=buffer {
            let w = 1.0 - k as f64 / (buffer + 1) as f64;
            if e.start >= k {
                out[e.start - k] = out[e.start - k].max(w);
            }
            if e.end + k < n {
                out[e.end + k] = out[e.end + k].max(w);
            }
        }
    }
    out
}

pub fn range_auc(scores: &[f64], truth: &[u8], buffer: usize) -> Result<RangeAuc> {
    if scores.len() != truth.len() {
        return Err(Error::invalid("scores and truth differ in length"));
    }
    check_pair(truth, truth)?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numeric("NaN score".into()));
    }
    if !truth.contains(&1) {
        return Err(Error::UndefinedMetric("range-AUC needs at least one true event".into()));
    }
    if !truth.contains(&0) {
        return Err(Error::UndefinedMetric("range-AUC needs at least one normal point".into()));
    }
    let labels = soft_labels(truth, buffer);
    let pos: f64 = labels.iter().sum();
    let neg: f64 = labels.iter().map(|l| 1.0 - l).sum();

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let (mut tp, mut fp) = (0.0, 0.0);
    let (mut tpr0, mut fpr0) = (0.0, 0.0);
    let mut roc = 0.0;
    let mut pr = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let mut j = i;
        while j < order.len() && scores[order[j]] == s {
            tp += labels[order[j]];
            fp += 1.0 - labels[order[j]];
            j += 1;
        }
        let tpr = tp / pos;
        let fpr = fp / neg;
        roc += (fpr - fpr0) * (tpr + tpr0) / 2.0;
        pr += (tpr - tpr0) * (tp / j as f64);
        tpr0 = tpr;
        fpr0 = fpr;
        i = j;
    }
    Ok(RangeAuc {
        roc: roc.clamp(0.0, 1.0),
        pr: pr.clamp(0.0, 1.0),
    })
}

/// Range-AUC averaged over buffers `0..=max_buffer`.
pub fn vus(scores: &[f64], truth: &[u8], max_buffer: usize) -> Result<RangeAuc> {
    let mut acc = RangeAuc { roc: 0.0, pr: 0.0 };
    for l in 0..=max_buffer {
        let r = range_auc(scores, truth, l)?;
        acc.roc += r.roc;
        acc.pr += r.pr;
    }
    let n = (max_buffer + 1) as f64;
    Ok(RangeAuc {
        roc: acc.roc / n,
        pr: acc.pr / n,
    })
}
