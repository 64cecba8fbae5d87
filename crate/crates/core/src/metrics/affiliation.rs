//! Affiliation precision and recall on integer time.
//!
//! The timeline is split into one affiliation zone per ground-truth event;
//! the border between consecutive events sits at the floor of the midpoint
//! of the gap (ties go to the earlier event). Inside a zone:
//!
//! * each predicted point `x` at distance `d` from the event scores the
//!   fraction of zone points whose distance to the event is at least `d`
//!   (probability a uniformly random zone point would be at least as far);
//! * each event point `y` whose nearest in-zone prediction is at distance
//!   `d` scores the fraction of zone points at least `d` away from `y`.
//!
//! Precision averages zones holding predictions, recall averages all zones.

use super::pointwise::check_pair;
use super::{events, Event};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affiliation {
    pub precision: f64,
    pub recall: f64,
    /// Set when nothing was predicted; `precision` is then 0.
    pub precision_undefined: bool,
}

/// Zone `[a, b]` for each event.
pub(crate) fn zones(ev: &[Event], len: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(ev.len());
    let mut start = 0;
    for (j, e) in ev.iter().enumerate() {
        let end = match ev.get(j + 1) {
            Some(next) => (e.end + next.start) / 2,
            None => len - 1,
        };
        out.push((start, end));
        start = end + 1;
    }
    out
}

fn dist_to_event(x: usize, e: &Event) -> usize {
    if x < e.start {
        e.start - x
    } else {
        x.saturating_sub(e.end)
    }
}

/// Zone points at distance `>= d` from the event.
fn count_far_from_event(zone: (usize, usize), e: &Event, d: usize) -> usize {
    let (a, b) = zone;
    if d == 0 {
        return b - a + 1;
    }
    let left = (e.start + 1).saturating_sub(a + d);
    let right = (b + 1).saturating_sub(e.end + d);
    left + right
}

/// Zone points at distance `>= d` from `y`.
fn count_far_from_point(zone: (usize, usize), y: usize, d: usize) -> usize {
    let (a, b) = zone;
    if d == 0 {
        return b - a + 1;
    }
    let left = if y >= a + d { y - d - a + 1 } else { 0 };
    let right = if y + d <= b { b - (y + d) + 1 } else { 0 };
    left + right
}

pub fn affiliation_pr(pred: &[u8], truth: &[u8]) -> Result<Affiliation> {
    check_pair(pred, truth)?;
    let ev = events(truth);
    if ev.is_empty() {
        return Err(Error::UndefinedMetric("affiliation needs at least one true event".into()));
    }
    let zs = zones(&ev, truth.len());
    let mut precisions = Vec::new();
    let mut recall_sum = 0.0;
    for (e, &(a, b)) in ev.iter().zip(&zs) {
        let size = (b - a + 1) as f64;
        let preds: Vec<usize> = (a..=b).filter(|&x| pred[x] == 1).collect();
        if preds.is_empty() {
            continue;
        }
        let p: f64 = preds
            .iter()
            .map(|&x| count_far_from_event((a, b), e, dist_to_event(x, e)) as f64 / size)
            .sum();
        precisions.push(p / preds.len() as f64);

        // nearest prediction per event point via two sweeps
        let mut r = 0.0;
        let mut k = 0;
        for y in e.start..=e.end {
            while k + 1 < preds.len() && preds[k + 1] <= y {
                k += 1;
            }
            let mut d = preds[k].abs_diff(y);
            if let Some(&nx) = preds.get(k + 1) {
                d = d.min(nx.abs_diff(y));
            }
            r += count_far_from_point((a, b), y, d) as f64 / size;
        }
        recall_sum += r / (e.end - e.start + 1) as f64;
    }
    let precision_undefined = precisions.is_empty();
    let precision = if precision_undefined {
        0.0
    } else {
        precisions.iter().sum::<f64>() / precisions.len() as f64
    };
    Ok(Affiliation {
        precision,
        recall: recall_sum / ev.len() as f64,
        precision_undefined,
    })
}
