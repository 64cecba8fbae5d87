//! Per-point anomaly scores from a trained model and percentile labels.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ClusterModel, ModelState};
use crate::multi;
use crate::single::{self, nearest_rank};
use crate::timeseries::{covering_windows, TimeSeriesDataset};

/// Scores with their percentile threshold and the derived labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSeries {
    pub scores: Vec<f64>,
    pub threshold: f64,
    pub labels: Vec<u8>,
    pub alpha: f64,
}

impl ScoreSeries {
    pub fn new(scores: Vec<f64>, alpha: f64) -> Result<Self> {
        let threshold = percentile_threshold(&scores, alpha)?;
        let labels = apply_threshold(&scores, threshold);
        Ok(Self {
            scores,
            threshold,
            labels,
            alpha,
        })
    }

    pub fn labeled_fraction(&self) -> f64 {
        self.labels.iter().map(|&l| f64::from(l)).sum::<f64>() / self.labels.len() as f64
    }

    /// `time_index,score,label` with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_index,score,label\n");
        for (t, (s, l)) in self.scores.iter().zip(&self.labels).enumerate() {
            writeln!(out, "{t},{s},{l}").unwrap();
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Reads the score column of a file written by [`ScoreSeries::to_csv`].
pub fn parse_scores_csv(text: &str) -> Result<Vec<f64>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("time_index,score,label") {
        return Err(Error::invalid("scores file header mismatch"));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            let mut f = l.split(',');
            let t: usize = f
                .next()
                .and_then(|x| x.trim().parse().ok())
                .ok_or_else(|| Error::invalid(format!("bad time index in {l:?}")))?;
            if t != i {
                return Err(Error::invalid(format!("time index {t} out of order")));
            }
            f.next()
                .and_then(|x| x.trim().parse().ok())
                .ok_or_else(|| Error::invalid(format!("bad score in {l:?}")))
        })
        .collect()
}

/// Nearest-rank `(1 - alpha)` percentile of the scores.
pub fn percentile_threshold(scores: &[f64], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha {alpha} outside (0, 1)")));
    }
    if scores.is_empty() {
        return Err(Error::invalid("no scores to threshold"));
    }
    nearest_rank(scores, 1.0 - alpha)
}

pub fn apply_threshold(scores: &[f64], threshold: f64) -> Vec<u8> {
    scores.iter().map(|&s| u8::from(s > threshold)).collect()
}

/// Embeds the series window by window (stride = window) and returns one
/// feature vector per time step. A final end-aligned window contributes
/// only the points its predecessors did not cover.
pub fn embed_series(model: &ModelState, data: &TimeSeriesDataset) -> Result<Vec<Vec<f64>>> {
    let embedder = model.build_embedder()?;
    if data.dim() != model.embedder.input_dim {
        return Err(Error::invalid(format!(
            "model expects {} channels, data has {}",
            model.embedder.input_dim,
            data.dim()
        )));
    }
    let data = match &model.normalization {
        Some(n) => n.apply(data)?,
        None => data.clone(),
    };
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(data.len());
    for w in covering_windows(data.len(), model.window)? {
        let h = embedder.embed(&model.params, data.slice(w.start, w.length))?;
        let skip = out.len() - w.start;
        out.extend(h.into_iter().skip(skip));
    }
    Ok(out)
}

/// Single-cluster score per point: hard-target one-directed term with the
/// trained `nu`, plus `|h - c|^2 - R^2`.
pub fn score_single(data: &TimeSeriesDataset, model: &ModelState) -> Result<Vec<f64>> {
    let ClusterModel::Single(state) = &model.cluster else {
        return Err(Error::invalid("score_single needs a single-cluster model"));
    };
    let nu = state.nu();
    embed_series(model, data)?
        .iter()
        .map(|h| single::point_score(h, &state.center, nu, state.radius_sq))
        .collect()
}

/// Multi-cluster score per point: row KL plus summed squared distances.
pub fn score_multi(data: &TimeSeriesDataset, model: &ModelState) -> Result<Vec<f64>> {
    let ClusterModel::Multi(state) = &model.cluster else {
        return Err(Error::invalid("score_multi needs a multi-cluster model"));
    };
    multi::multi_anomaly_score(&embed_series(model, data)?, &state.centers)
}

/// `|h - c|^2 - R^2` alone, the score of the distance-only ablation. Defined
/// for a zero center, unlike [`score_single`].
pub fn score_distance(data: &TimeSeriesDataset, model: &ModelState) -> Result<Vec<f64>> {
    let ClusterModel::Single(state) = &model.cluster else {
        return Err(Error::invalid("score_distance needs a single-cluster model"));
    };
    Ok(embed_series(model, data)?
        .iter()
        .map(|h| single::sq_dist(h, &state.center) - state.radius_sq)
        .collect())
}

pub fn score(data: &TimeSeriesDataset, model: &ModelState) -> Result<Vec<f64>> {
    match model.cluster {
        ClusterModel::Single(_) => score_single(data, model),
        ClusterModel::Multi(_) => score_multi(data, model),
    }
}
