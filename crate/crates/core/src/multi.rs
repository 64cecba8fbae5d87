//! Multi-center extension: Student-t soft assignment, sharpened target
//! distribution, KL clustering loss, summed-distance loss and the
//! corresponding anomaly score. The threshold `nu` plays no part here.

use crate::diff::{Tape, Var};
use crate::error::{Error, Result};
use crate::single::sq_dist;

#[derive(Debug, Clone, PartialEq)]
pub struct MultiClusterState {
    /// `k` centers of dimension `f`.
    pub centers: Vec<Vec<f64>>,
    pub lambda: f64,
}

impl MultiClusterState {
    pub fn k(&self) -> usize {
        self.centers.len()
    }
}

fn check_centers(centers: &[Vec<f64>]) -> Result<()> {
    if centers.is_empty() {
        return Err(Error::invalid("at least one center required"));
    }
    Ok(())
}

/// `q_tj = (1 + |h_t - c_j|^2)^-1 / sum_j (1 + |h_t - c_j|^2)^-1`.
pub fn student_t_assign(h: &[Vec<f64>], centers: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    check_centers(centers)?;
    Ok(h
        .iter()
        .map(|ht| {
            let w: Vec<f64> = centers.iter().map(|c| 1.0 / (1.0 + sq_dist(ht, c))).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|x| x / s).collect()
        })
        .collect())
}

pub fn student_t_assign_tape(tape: &mut Tape, h: &[Vec<Var>], centers: &[Vec<Var>]) -> Result<Vec<Vec<Var>>> {
    if centers.is_empty() {
        return Err(Error::invalid("at least one center required"));
    }
    let mut q = Vec::with_capacity(h.len());
    for ht in h {
        let mut w = Vec::with_capacity(centers.len());
        for c in centers {
            let d = tape.sq_dist(ht, c)?;
            let denom = tape.affine(d, 1.0, 1.0);
            w.push(tape.pow_const(denom, -1.0)?);
        }
        let s = tape.sum(&w);
        let row = w.into_iter().map(|x| tape.div(x, s)).collect::<std::result::Result<Vec<_>, _>>()?;
        q.push(row);
    }
    Ok(q)
}

/// `p_tj = (q_tj^2 / f_j) / sum_j (q_tj^2 / f_j)` with column masses `f_j = sum_t q_tj`.
pub fn target_distribution(q: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = q.first().map_or(0, Vec::len);
    let mut mass = vec![0.0; k];
    for row in q {
        for (m, v) in mass.iter_mut().zip(row) {
            *m += v;
        }
    }
    q.iter()
        .map(|row| {
            let w: Vec<f64> = row
                .iter()
                .zip(&mass)
                .map(|(&v, &m)| if m > 0.0 { v * v / m } else { 0.0 })
                .collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|x| x / s).collect()
        })
        .collect()
}

fn kl_term(p: f64, q: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p * (p / q.max(f64::MIN_POSITIVE)).ln()
    }
}

/// KL divergence of one row.
pub fn row_kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(&a, &b)| kl_term(a, b)).sum()
}

/// `KL(P | Q) = sum_t sum_j p_tj log(p_tj / q_tj)`.
pub fn kl_cluster_loss(p: &[Vec<f64>], q: &[Vec<f64>]) -> Result<f64> {
    if p.len() != q.len() || p.iter().zip(q).any(|(a, b)| a.len() != b.len()) {
        return Err(Error::invalid("p and q shapes differ"));
    }
    Ok(p.iter().zip(q).map(|(a, b)| row_kl(a, b)).sum())
}

/// KL loss on the tape with `p` as a constant target.
pub fn kl_cluster_loss_tape(tape: &mut Tape, p: &[Vec<f64>], q: &[Vec<Var>]) -> Result<Var> {
    if p.len() != q.len() {
        return Err(Error::invalid("p and q shapes differ"));
    }
    let mut constant = 0.0;
    let mut weights = Vec::new();
    let mut logs = Vec::new();
    for (pr, qr) in p.iter().zip(q) {
        for (&pv, &qv) in pr.iter().zip(qr) {
            if pv > 0.0 {
                constant += pv * pv.ln();
                logs.push(tape.log(qv)?);
                weights.push(tape.leaf(-pv));
            }
        }
    }
    let cross = tape.linear(&weights, &logs, None)?;
    Ok(tape.affine(cross, 1.0, constant))
}

/// `(1/n) sum_j sum_t |h_t - c_j|^2 + lambda * omega` with `n = T`.
pub fn multi_distance_loss(h: &[Vec<f64>], centers: &[Vec<f64>], lambda: f64, omega: f64) -> Result<f64> {
    check_centers(centers)?;
    if h.is_empty() {
        return Err(Error::invalid("empty feature sequence"));
    }
    let total: f64 = h.iter().map(|ht| centers.iter().map(|c| sq_dist(ht, c)).sum::<f64>()).sum();
    Ok(total / h.len() as f64 + lambda * omega)
}

/// Summed squared distances to all centers scaled by `1/n`, on the tape.
pub fn multi_distance_tape(tape: &mut Tape, h: &[Vec<Var>], centers: &[Vec<Var>], n: usize) -> Result<Var> {
    let mut ds = Vec::with_capacity(h.len() * centers.len());
    for ht in h {
        for c in centers {
            ds.push(tape.sq_dist(ht, c)?);
        }
    }
    let s = tape.sum(&ds);
    Ok(tape.affine(s, 1.0 / n as f64, 0.0))
}

/// Per-point `sum_j p_tj log(p_tj / q_tj) + sum_j |h_t - c_j|^2`, with `q`
/// and `p` computed from `h` and the trained centers.
pub fn multi_anomaly_score(h: &[Vec<f64>], centers: &[Vec<f64>]) -> Result<Vec<f64>> {
    let q = student_t_assign(h, centers)?;
    let p = target_distribution(&q);
    Ok(score_with(h, centers, &q, &p))
}

pub fn score_with(h: &[Vec<f64>], centers: &[Vec<f64>], q: &[Vec<f64>], p: &[Vec<f64>]) -> Vec<f64> {
    h.iter()
        .zip(q.iter().zip(p))
        .map(|(ht, (qr, pr))| row_kl(pr, qr) + centers.iter().map(|c| sq_dist(ht, c)).sum::<f64>())
        .collect()
}
