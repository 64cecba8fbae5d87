//! Evaluation without point adjustment: point-wise F1, affiliation
//! precision/recall, Range-AUC and VUS.

mod affiliation;
mod pointwise;
mod range;

use std::fmt::Write as _;

pub use affiliation::{affiliation_pr, Affiliation};
pub use pointwise::{f1_pointwise, PointwiseScores};
pub use range::{range_auc, soft_labels, vus, RangeAuc};

use crate::error::{Error, Result};
use crate::scoring::ScoreSeries;

/// Closed interval `[start, end]` of consecutive anomalous points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub start: usize,
    pub end: usize,
}

pub fn events(labels: &[u8]) -> Vec<Event> {
    let mut out = Vec::new();
    let mut open: Option<usize> = None;
    for (t, &v) in labels.iter().enumerate() {
        match (v == 1, open) {
            (true, None) => open = Some(t),
            (false, Some(s)) => {
                out.push(Event { start: s, end: t - 1 });
                open = None;
            }
            _ => {}
        }
    }
    if let Some(s) = open {
        out.push(Event {
            start: s,
            end: labels.len() - 1,
        });
    }
    out
}

/// Buffer lengths for the threshold-free metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalConfig {
    /// Ramp length for R_A_R / R_A_P.
    pub range_buffer: usize,
    /// VUS averages over buffers `0..=vus_max_buffer`.
    pub vus_max_buffer: usize,
}

impl EvalConfig {
    /// `range_buffer = win / 10`, VUS grid `0..=win / 2`.
    pub fn for_window(win: usize) -> Self {
        Self {
            range_buffer: win / 10,
            vus_max_buffer: win / 2,
        }
    }
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self::for_window(crate::timeseries::DEFAULT_WINDOW)
    }
}

pub const REPORT_COLUMNS: [&str; 7] = ["f1", "aff_p", "aff_r", "r_a_r", "r_a_p", "v_roc", "v_pr"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub f1: f64,
    pub aff_p: f64,
    pub aff_r: f64,
    pub r_a_r: f64,
    pub r_a_p: f64,
    pub v_roc: f64,
    pub v_pr: f64,
    /// Nothing was predicted, so `aff_p` is a convention.
    pub aff_p_undefined: bool,
}

impl EvalReport {
    pub fn values(&self) -> [f64; 7] {
        [self.f1, self.aff_p, self.aff_r, self.r_a_r, self.r_a_p, self.v_roc, self.v_pr]
    }

    fn from_values(v: [f64; 7], aff_p_undefined: bool) -> Self {
        Self {
            f1: v[0],
            aff_p: v[1],
            aff_r: v[2],
            r_a_r: v[3],
            r_a_p: v[4],
            v_roc: v[5],
            v_pr: v[6],
            aff_p_undefined,
        }
    }

    /// `key=value` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in REPORT_COLUMNS.iter().zip(self.values()) {
            writeln!(out, "{k}={v}").unwrap();
        }
        writeln!(out, "aff_p_undefined={}", self.aff_p_undefined).unwrap();
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut v = [f64::NAN; 7];
        let mut undefined = None;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, val) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("report line {line:?}")))?;
            if k == "aff_p_undefined" {
                undefined = Some(val.parse().map_err(|_| Error::invalid(format!("report flag {val:?}")))?);
                continue;
            }
            let i = REPORT_COLUMNS
                .iter()
                .position(|c| *c == k)
                .ok_or_else(|| Error::invalid(format!("unknown report key {k:?}")))?;
            v[i] = val.parse().map_err(|_| Error::invalid(format!("report value {val:?}")))?;
        }
        if v.iter().any(|x| x.is_nan()) {
            return Err(Error::invalid("report is missing a metric"));
        }
        Ok(Self::from_values(v, undefined.unwrap_or(false)))
    }

    /// Header row plus one value row.
    pub fn to_csv(&self) -> String {
        let vals: Vec<String> = self.values().iter().map(f64::to_string).collect();
        format!("{}\n{}\n", REPORT_COLUMNS.join(","), vals.join(","))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(REPORT_COLUMNS.join(",").as_str()) {
            return Err(Error::invalid("report csv header mismatch"));
        }
        let row = lines.next().ok_or_else(|| Error::invalid("report csv has no values"))?;
        let parsed: Vec<f64> = row
            .split(',')
            .map(|x| x.parse().map_err(|_| Error::invalid(format!("report value {x:?}"))))
            .collect::<Result<_>>()?;
        let v: [f64; 7] = parsed
            .try_into()
            .map_err(|_| Error::invalid("report csv needs 7 values"))?;
        Ok(Self::from_values(v, false))
    }
}

/// All seven metrics from raw scores; binary predictions come from the
/// percentile threshold at `alpha`.
pub fn evaluate(scores: &[f64], truth: &[u8], alpha: f64, cfg: EvalConfig) -> Result<EvalReport> {
    let series = ScoreSeries::new(scores.to_vec(), alpha)?;
    evaluate_with_labels(scores, &series.labels, truth, cfg)
}

pub fn evaluate_with_labels(scores: &[f64], pred: &[u8], truth: &[u8], cfg: EvalConfig) -> Result<EvalReport> {
    let f = f1_pointwise(pred, truth)?;
    let aff = affiliation_pr(pred, truth)?;
    let r = range_auc(scores, truth, cfg.range_buffer)?;
    let v = vus(scores, truth, cfg.vus_max_buffer)?;
    Ok(EvalReport {
        f1: f.f1,
        aff_p: aff.precision,
        aff_r: aff.recall,
        r_a_r: r.roc,
        r_a_p: r.pr,
        v_roc: v.roc,
        v_pr: v.pr,
        aff_p_undefined: aff.precision_undefined,
    })
}
