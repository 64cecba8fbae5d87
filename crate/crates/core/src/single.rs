//! Single-cluster objective: cosine soft assignment against a learnable
//! center, thresholded auxiliary targets, the one-directed adaptive loss
//! and the hypersphere distance loss.
//!
//! Each loss exists twice: as plain `f64` functions (with closed-form
//! gradients for the one-directed loss) and as tape builders used for
//! training. Tests check the two routes against each other.

use crate::diff::{sigmoid, Tape, Var};
use crate::error::{DiffError, Error, Result};

/// Lower clamp for `q` before it enters a logarithm.
pub const Q_FLOOR: f64 = 1e-7;

/// Learnable and fixed state of the single cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    pub center: Vec<f64>,
    /// Unconstrained threshold parameter; `nu = sigmoid(nu_raw)`.
    pub nu_raw: f64,
    /// Squared radius, recomputed from a quantile of training distances.
    pub radius_sq: f64,
    pub rho: f64,
    pub lambda: f64,
    pub tau: f64,
}

impl ClusterState {
    pub fn new(dim: usize, nu0: f64, rho: f64, lambda: f64, tau: f64) -> Result<Self> {
        if !(nu0 > 0.0 && nu0 < 1.0) {
            return Err(Error::invalid(format!("initial nu {nu0} outside (0, 1)")));
        }
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::invalid(format!("rho {rho} outside (0, 1]")));
        }
        if !(0.0..=0.5).contains(&tau) {
            return Err(Error::invalid(format!("tau {tau} outside [0, 0.5]")));
        }
        if !(lambda >= 0.0) {
            return Err(Error::invalid("lambda must be non-negative"));
        }
        Ok(Self {
            center: vec![0.0; dim],
            nu_raw: crate::diff::logit(nu0),
            radius_sq: 0.0,
            rho,
            lambda,
            tau,
        })
    }

    pub fn nu(&self) -> f64 {
        sigmoid(self.nu_raw)
    }

    pub fn center_norm(&self) -> f64 {
        self.center.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Cosine similarity of `h` and `center` mapped from `[-1, 1]` to `[0, 1]`.
pub fn soft_assign(h: &[f64], center: &[f64]) -> Result<f64> {
    let (nh, nc) = (norm(h), norm(center));
    if nh == 0.0 || nc == 0.0 {
        return Err(DiffError::ZeroNorm { op: "soft_assign" }.into());
    }
    let cos = h.iter().zip(center).map(|(a, b)| a * b).sum::<f64>() / (nh * nc);
    Ok(((cos + 1.0) / 2.0).clamp(0.0, 1.0))
}

pub fn soft_assign_tape(tape: &mut Tape, h: &[Var], center: &[Var]) -> Result<Var> {
    let cos = tape.cosine_sim(h, center)?;
    Ok(tape.affine(cos, 0.5, 0.5))
}

/// Hard targets (`1` iff `q >= nu`) and their smoothed version
/// `p (1 - tau) + (1 - p) tau`.
pub fn assign_target(q: &[f64], nu: f64, tau: f64) -> (Vec<u8>, Vec<f64>) {
    let hard: Vec<u8> = q.iter().map(|&qt| u8::from(qt >= nu)).collect();
    let soft = hard
        .iter()
        .map(|&p| {
            let p = f64::from(p);
            p * (1.0 - tau) + (1.0 - p) * tau
        })
        .collect();
    (hard, soft)
}

/// Slope of the linear branch, `(1 - nu^(1-nu)) / (1 - nu)`.
pub fn linear_slope(nu: f64) -> f64 {
    (1.0 - nu.powf(1.0 - nu)) / (1.0 - nu)
}

/// `f1 = slope(nu) (q - 1) + 1`, the argument of the log for targets near 1.
pub fn f1(q: f64, nu: f64) -> f64 {
    linear_slope(nu) * (q - 1.0) + 1.0
}

/// `f2 = q^(1 - nu)`, the argument of the log for targets near 0.
pub fn f2(q: f64, nu: f64) -> f64 {
    q.powf(1.0 - nu)
}

fn check_nu(nu: f64) -> Result<()> {
    if nu > 0.0 && nu < 1.0 {
        Ok(())
    } else {
        Err(Error::Diff(DiffError::Domain { op: "nu", value: nu }))
    }
}

/// Per-point one-directed loss `-(p log f1 + (1 - p) log f2)` with `q`
/// clamped to `[Q_FLOOR, 1]`.
pub fn one_directed_term(q: f64, p: f64, nu: f64) -> f64 {
    let q = q.clamp(Q_FLOOR, 1.0);
    -(p * f1(q, nu).ln() + (1.0 - p) * (1.0 - nu) * q.ln())
}

pub fn one_directed_loss(q: &[f64], p: &[f64], nu: f64) -> Result<f64> {
    check_nu(nu)?;
    if q.len() != p.len() {
        return Err(DiffError::Shape {
            expected: q.len(),
            got: p.len(),
        }
        .into());
    }
    Ok(q.iter().zip(p).map(|(&qt, &pt)| one_directed_term(qt, pt, nu)).sum())
}

/// The braced factor of `d f1 / d nu`: `nu^nu + nu - nu^2 - 1 + nu (1 - nu) log nu`,
/// i.e. `g1 - g2 + g3`. Negative on (0, 1).
pub fn g_combination(nu: f64) -> f64 {
    let g1 = nu.powf(nu) + nu;
    let g2 = nu * nu + 1.0;
    let g3 = nu * (1.0 - nu) * nu.ln();
    g1 - g2 + g3
}

/// `d f1 / d nu = (q - 1) / ((1 - nu)^2 nu^nu) * (g1 - g2 + g3)`.
pub fn df1_dnu(q: f64, nu: f64) -> f64 {
    (q - 1.0) / ((1.0 - nu).powi(2) * nu.powf(nu)) * g_combination(nu)
}

/// Closed-form gradients of [`one_directed_loss`]: per-point `dL/dq` and
/// the total `dL/dnu`, targets held fixed.
pub fn grad_one_directed(q: &[f64], p: &[f64], nu: f64) -> Result<(Vec<f64>, f64)> {
    check_nu(nu)?;
    if q.len() != p.len() {
        return Err(DiffError::Shape {
            expected: q.len(),
            got: p.len(),
        }
        .into());
    }
    let slope = linear_slope(nu);
    let mut dq = Vec::with_capacity(q.len());
    let mut dnu = 0.0;
    for (&q_raw, &pt) in q.iter().zip(p) {
        let inside = (Q_FLOOR..=1.0).contains(&q_raw);
        let qt = q_raw.clamp(Q_FLOOR, 1.0);
        let f1v = f1(qt, nu);
        let f2v = f2(qt, nu);
        let df1_dq = slope;
        let df2_dq = (1.0 - nu) / qt.powf(nu);
        let df2_dnu = -f2v * qt.ln();
        let g = -pt / f1v * df1_dq - (1.0 - pt) / f2v * df2_dq;
        dq.push(if inside { g } else { 0.0 });
        dnu += -pt / f1v * df1_dnu(qt, nu) - (1.0 - pt) / f2v * df2_dnu;
    }
    Ok((dq, dnu))
}

/// Tape version of [`one_directed_loss`]; `p` is a constant target.
pub fn one_directed_loss_tape(tape: &mut Tape, q: &[Var], p: &[f64], nu: Var) -> Result<Var> {
    let terms = one_directed_terms_tape(tape, q, p, nu)?;
    let total = tape.sum(&terms);
    Ok(tape.neg(total))
}

/// `p log f1 + (1 - p) log f2` per point (note: without the leading minus).
fn one_directed_terms_tape(tape: &mut Tape, q: &[Var], p: &[f64], nu: Var) -> Result<Vec<Var>> {
    if q.len() != p.len() {
        return Err(DiffError::Shape {
            expected: q.len(),
            got: p.len(),
        }
        .into());
    }
    check_nu(tape.value(nu))?;
    // slope = (1 - nu^(1-nu)) / (1 - nu), with nu^(1-nu) = exp((1-nu) log nu)
    let one_minus_nu = tape.affine(nu, -1.0, 1.0);
    let log_nu = tape.log(nu)?;
    let expo = tape.mul(one_minus_nu, log_nu);
    let pow = tape.exp(expo);
    let num = tape.affine(pow, -1.0, 1.0);
    let slope = tape.div(num, one_minus_nu)?;
    let mut terms = Vec::with_capacity(q.len());
    for (&qt, &pt) in q.iter().zip(p) {
        let qc = tape.clamp(qt, Q_FLOOR, 1.0);
        let log_q = tape.log(qc)?;
        let mut parts = Vec::with_capacity(2);
        if pt != 0.0 {
            let qm1 = tape.affine(qc, 1.0, -1.0);
            let s = tape.mul(slope, qm1);
            let f1 = tape.affine(s, 1.0, 1.0);
            let lf1 = tape.log(f1)?;
            parts.push(tape.affine(lf1, pt, 0.0));
        }
        if pt != 1.0 {
            let lf2 = tape.mul(one_minus_nu, log_q);
            parts.push(tape.affine(lf2, 1.0 - pt, 0.0));
        }
        terms.push(if parts.len() == 1 { parts[0] } else { tape.add(parts[0], parts[1]) });
    }
    Ok(terms)
}

/// Nearest-rank quantile at `level` in [0, 1] (level 0 gives the minimum).
pub fn nearest_rank(values: &[f64], level: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("quantile of empty input"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Numeric("NaN in quantile input".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // guard against 0.9 * 100 = 90.00000000000001
    let rank = ((level * n as f64) - 1e-9).ceil().max(1.0) as usize;
    Ok(sorted[rank.min(n) - 1])
}

/// `R^2` as the nearest-rank `(1 - rho)` quantile of squared distances.
pub fn update_radius(distances_sq: &[f64], rho: f64) -> Result<f64> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::invalid(format!("rho {rho} outside (0, 1]")));
    }
    nearest_rank(distances_sq, 1.0 - rho)
}

/// `R^2 + (1/rho) sum_t max(0, |h_t - c|^2 - R^2) + lambda * omega`.
pub fn distance_loss(h: &[Vec<f64>], center: &[f64], radius_sq: f64, rho: f64, lambda: f64, omega: f64) -> f64 {
    let hinge: f64 = h.iter().map(|ht| (sq_dist(ht, center) - radius_sq).max(0.0)).sum();
    radius_sq + hinge / rho + lambda * omega
}

/// Hinge part of the distance loss on the tape, `(1/rho) sum_t max(0, d_t - R^2)`.
/// The `R^2` and regularizer terms are added by the caller once per batch.
pub fn distance_hinge_tape(tape: &mut Tape, h: &[Vec<Var>], center: &[Var], radius_sq: f64, rho: f64) -> Result<Var> {
    let mut hinges = Vec::with_capacity(h.len());
    for ht in h {
        let d = tape.sq_dist(ht, center)?;
        let shifted = tape.affine(d, 1.0, -radius_sq);
        hinges.push(tape.max0(shifted));
    }
    let s = tape.sum(&hinges);
    Ok(tape.affine(s, 1.0 / rho, 0.0))
}

/// Full distance loss on the tape.
pub fn distance_loss_tape(
    tape: &mut Tape,
    h: &[Vec<Var>],
    center: &[Var],
    weights: &[Var],
    state: &ClusterState,
) -> Result<Var> {
    let hinge = distance_hinge_tape(tape, h, center, state.radius_sq, state.rho)?;
    let omega = tape.sq_norm(weights);
    let reg = tape.affine(omega, state.lambda, state.radius_sq);
    Ok(tape.add(hinge, reg))
}

pub fn total_loss(distance: f64, cluster: f64) -> Result<f64> {
    let total = distance + cluster;
    if !total.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite loss: distance {distance}, cluster {cluster}"
        )));
    }
    Ok(total)
}

/// Per-point anomaly score: one-directed term with hard targets and the
/// trained `nu`, plus `|h - c|^2 - R^2`.
pub fn point_score(h: &[f64], center: &[f64], nu: f64, radius_sq: f64) -> Result<f64> {
    let q = soft_assign(h, center)?;
    let p = if q >= nu { 1.0 } else { 0.0 };
    Ok(one_directed_term(q, p, nu) + sq_dist(h, center) - radius_sq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn soft_assign_examples() {
        let c = [1.0, 2.0, -0.5];
        assert!((soft_assign(&c, &c).unwrap() - 1.0).abs() < 1e-15);
        assert!((soft_assign(&[-2.0, 1.0, 0.0], &c).unwrap() - 0.5).abs() < 1e-15);
        let neg: Vec<f64> = c.iter().map(|x| -x).collect();
        assert!(soft_assign(&neg, &c).unwrap().abs() < 1e-15);
        assert!(soft_assign(&[0.0; 3], &c).is_err());
        assert!(soft_assign(&c, &[0.0; 3]).is_err());
    }

    #[test]
    fn target_examples() {
        assert_eq!(assign_target(&[0.8], 0.5, 0.0), (vec![1], vec![1.0]));
        let (h, s) = assign_target(&[0.3], 0.5, 0.1);
        assert_eq!(h, vec![0]);
        assert!((s[0] - 0.1).abs() < 1e-15);
        let (_, s) = assign_target(&[0.1, 0.9, 0.5], 0.5, 0.5);
        assert!(s.iter().all(|&v| v == 0.5));
        // threshold is inclusive
        assert_eq!(assign_target(&[0.5], 0.5, 0.0).0, vec![1]);
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn loss_anchor_values() {
        for nu in [0.1, 0.5, 0.9] {
            assert!(one_directed_loss(&[1.0], &[1.0], nu).unwrap().abs() < 1e-15);
        }
        let a = one_directed_loss(&[0.25], &[0.0], 0.5).unwrap();
        assert!((a - 0.693147).abs() < 1e-6, "{a}");
        let b = one_directed_loss(&[0.9], &[1.0], 0.5).unwrap();
        assert!((b - 0.060364464658).abs() < 1e-6, "{b}");
        assert!((f1(0.9, 0.5) - 0.941421).abs() < 1e-6);
    }

    #[test]
    fn gradient_anchor_values() {
        let (dq, dnu) = grad_one_directed(&[0.25], &[0.0], 0.5).unwrap();
        assert!((dq[0] + 2.0).abs() < 1e-12);
        assert!((dnu - 0.25f64.ln()).abs() < 1e-12);
        for nu in [0.2, 0.5, 0.8] {
            let (dq, _) = grad_one_directed(&[1.0], &[1.0], nu).unwrap();
            assert!((dq[0] + linear_slope(nu)).abs() < 1e-12);
            assert!(dq[0] < 0.0);
        }
    }

    #[test]
    fn rejects_nu_outside_open_interval() {
        assert!(one_directed_loss(&[0.5], &[1.0], 1.0).is_err());
        assert!(grad_one_directed(&[0.5], &[1.0], 0.0).is_err());
    }

    #[test]
    fn tape_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let n = 5;
            let q: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.99)).collect();
            let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let nu = rng.random_range(0.01..0.99);
            let mut tape = Tape::new();
            let qv = tape.leaves(&q);
            let nv = tape.leaf(nu);
            let loss = one_directed_loss_tape(&mut tape, &qv, &p, nv).unwrap();
            assert!((tape.value(loss) - one_directed_loss(&q, &p, nu).unwrap()).abs() < 1e-12);
            tape.backward(loss).unwrap();
            let (dq, dnu) = grad_one_directed(&q, &p, nu).unwrap();
            for i in 0..n {
                assert!((tape.grad(qv[i]) - dq[i]).abs() < 1e-10);
            }
            assert!((tape.grad(nv) - dnu).abs() < 1e-10);
        }
    }

    #[test]
    fn clamped_q_has_zero_gradient() {
        let (dq, _) = grad_one_directed(&[1e-9], &[0.0], 0.5).unwrap();
        assert_eq!(dq[0], 0.0);
        let l = one_directed_loss(&[0.0], &[0.0], 0.5).unwrap();
        assert!((l - 0.5 * -(Q_FLOOR.ln())).abs() < 1e-12);
    }

    #[test]
    fn radius_examples() {
        let d: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(update_radius(&d, 0.1).unwrap(), 90.0);
        assert_eq!(update_radius(&d, 1.0).unwrap(), 1.0);
        assert_eq!(update_radius(&[4.0; 10], 0.3).unwrap(), 4.0);
        assert_eq!(update_radius(&[7.0], 0.1).unwrap(), 7.0);
        assert!(update_radius(&[], 0.1).is_err());
        assert!(update_radius(&[1.0], 0.0).is_err());
    }

    #[test]
    fn distance_loss_examples() {
        let c = vec![1.0, -1.0];
        assert_eq!(distance_loss(&[c.clone(), c.clone()], &c, 0.0, 0.1, 0.0, 3.0), 0.0);
        let h = vec![vec![2.0, 0.0]];
        assert_eq!(distance_loss(&h, &c, 1.0, 1.0, 0.0, 0.0), 2.0);
        let close = vec![vec![1.1, -1.0]];
        assert!((distance_loss(&close, &c, 1.0, 0.1, 0.5, 2.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn distance_tape_matches_plain_and_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let state = ClusterState {
            center: vec![0.2, -0.4, 0.6],
            nu_raw: 0.0,
            radius_sq: 0.5,
            rho: 0.2,
            lambda: 0.01,
            tau: 0.1,
        };
        let h: Vec<Vec<f64>> = (0..6).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let w: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let omega: f64 = w.iter().map(|x| x * x).sum();
        let eval = |c: &[f64]| distance_loss(&h, c, state.radius_sq, state.rho, state.lambda, omega);

        let mut tape = Tape::new();
        let hv: Vec<Vec<Var>> = h.iter().map(|r| tape.leaves(r)).collect();
        let cv = tape.leaves(&state.center);
        let wv = tape.leaves(&w);
        let loss = distance_loss_tape(&mut tape, &hv, &cv, &wv, &state).unwrap();
        assert!((tape.value(loss) - eval(&state.center)).abs() < 1e-12);
        tape.backward(loss).unwrap();
        for i in 0..3 {
            let mut cp = state.center.clone();
            let mut cm = state.center.clone();
            cp[i] += 1e-5;
            cm[i] -= 1e-5;
            let fd = (eval(&cp) - eval(&cm)) / 2e-5;
            assert!((tape.grad(cv[i]) - fd).abs() <= 1e-4 * fd.abs().max(1e-6));
        }
        for (i, &wi) in w.iter().enumerate() {
            assert!((tape.grad(wv[i]) - 2.0 * state.lambda * wi).abs() < 1e-12);
        }
    }

    #[test]
    fn cluster_loss_center_gradient_matches_finite_differences() {
        // q depends on the center; targets and nu held fixed
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let h: Vec<Vec<f64>> = (0..5).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let c: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let nu = 0.6;
            let q0: Vec<f64> = h.iter().map(|ht| soft_assign(ht, &c).unwrap()).collect();
            let (_, p) = assign_target(&q0, nu, 0.1);
            let eval = |c: &[f64]| {
                let q: Vec<f64> = h.iter().map(|ht| soft_assign(ht, c).unwrap()).collect();
                one_directed_loss(&q, &p, nu).unwrap()
            };
            let mut tape = Tape::new();
            let cv = tape.leaves(&c);
            let nv = tape.leaf(nu);
            let mut q = Vec::new();
            for ht in &h {
                let hv = tape.leaves(ht);
                q.push(soft_assign_tape(&mut tape, &hv, &cv).unwrap());
            }
            let loss = one_directed_loss_tape(&mut tape, &q, &p, nv).unwrap();
            tape.backward(loss).unwrap();
            for i in 0..4 {
                let mut cp = c.clone();
                let mut cm = c.clone();
                cp[i] += 1e-5;
                cm[i] -= 1e-5;
                let fd = (eval(&cp) - eval(&cm)) / 2e-5;
                let g = tape.grad(cv[i]);
                assert!((g - fd).abs() <= 1e-4 * g.abs().max(fd.abs()).max(1e-6), "g={g} fd={fd}");
            }
        }
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn total_loss_examples() {
        assert_eq!(total_loss(0.0, 0.0).unwrap(), 0.0);
        assert!((total_loss(2.0, 0.693147).unwrap() - 2.693147).abs() < 1e-12);
        assert!(total_loss(f64::NAN, 0.0).is_err());
        assert!(total_loss(1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn point_score_at_center_is_minus_radius() {
        let c = [0.3, 0.4];
        assert!((point_score(&c, &c, 0.7, 2.5).unwrap() + 2.5).abs() < 1e-12);
    }

    #[test]
    fn point_score_is_affine_in_distance_at_fixed_q() {
        // scaling h along the center direction keeps q = 1 and raises the distance
        let c = [1.0, 1.0];
        let mut last = f64::NEG_INFINITY;
        for s in [1.5, 2.0, 3.0, 5.0] {
            let h = [s, s];
            let score = point_score(&h, &c, 0.6, 0.0).unwrap();
            assert!((score - sq_dist(&h, &c)).abs() < 1e-12);
            assert!(score > last);
            last = score;
        }
    }

    #[test]
    fn state_parameterization() {
        let s = ClusterState::new(4, 0.5, 0.1, 1e-4, 0.1).unwrap();
        assert_eq!(s.nu_raw, 0.0);
        assert_eq!(s.nu(), 0.5);
        assert!(ClusterState::new(4, 1.0, 0.1, 0.0, 0.1).is_err());
        assert!(ClusterState::new(4, 0.5, 0.0, 0.0, 0.1).is_err());
        assert!(ClusterState::new(4, 0.5, 0.1, 0.0, 0.6).is_err());
    }
}
