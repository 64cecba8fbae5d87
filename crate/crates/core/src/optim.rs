//! First-order optimizers over flat parameter vectors.

use serde::{Deserialize, Serialize};

use crate::error::DiffError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

fn check_finite(grads: &[f64]) -> Result<(), DiffError> {
    match grads.iter().position(|g| !g.is_finite()) {
        Some(index) => Err(DiffError::NonFiniteGradient { index }),
        None => Ok(()),
    }
}

fn check_shape(params: &[f64], grads: &[f64]) -> Result<(), DiffError> {
    if params.len() != grads.len() {
        return Err(DiffError::Shape {
            expected: params.len(),
            got: grads.len(),
        });
    }
    Ok(())
}

pub fn sgd_step(params: &mut [f64], grads: &[f64], lr: f64) -> Result<(), DiffError> {
    check_shape(params, grads)?;
    check_finite(grads)?;
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }
}

pub fn adam_step(
    params: &mut [f64],
    state: &mut AdamState,
    grads: &[f64],
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Result<(), DiffError> {
    check_shape(params, grads)?;
    check_shape(&state.m, grads)?;
    check_finite(grads)?;
    state.step += 1;
    let bc1 = 1.0 - beta1.powi(state.step as i32);
    let bc2 = 1.0 - beta2.powi(state.step as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Either optimizer behind one interface.
#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer {
    Sgd { lr: f64 },
    Adam { lr: f64, state: AdamState },
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, n_params: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd { lr },
            OptimizerKind::Adam => Optimizer::Adam {
                lr,
                state: AdamState::new(n_params),
            },
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), DiffError> {
        match self {
            Optimizer::Sgd { lr } => sgd_step(params, grads, *lr),
            Optimizer::Adam { lr, state } => adam_step(params, state, grads, *lr, 0.9, 0.999, 1e-8),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_definition() {
        let mut p = [1.0];
        sgd_step(&mut p, &[0.5], 0.1).unwrap();
        assert!((p[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_lr() {
        let mut p = [0.0];
        let mut s = AdamState::new(1);
        adam_step(&mut p, &mut s, &[1.0], 0.01, 0.9, 0.999, 1e-8).unwrap();
        assert!((p[0] + 0.01).abs() < 1e-9);
        assert_eq!(s.step, 1);
        assert!((s.m[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.1, 2);
        let mut p = [1.5, -2.0];
        for _ in 0..3 {
            opt.step(&mut p, &[0.0, 0.0]).unwrap();
        }
        assert_eq!(p, [1.5, -2.0]);
        let mut opt = Optimizer::new(OptimizerKind::Sgd, 0.1, 2);
        opt.step(&mut p, &[0.0, 0.0]).unwrap();
        assert_eq!(p, [1.5, -2.0]);
    }

    #[test]
    fn nan_gradient_aborts() {
        let mut p = [1.0, 2.0];
        let err = sgd_step(&mut p, &[0.0, f64::NAN], 0.1).unwrap_err();
        assert_eq!(err, DiffError::NonFiniteGradient { index: 1 });
        assert_eq!(p, [1.0, 2.0]);
        let mut s = AdamState::new(2);
        assert!(adam_step(&mut p, &mut s, &[f64::INFINITY, 0.0], 0.1, 0.9, 0.999, 1e-8).is_err());
        assert_eq!(s.step, 0);
    }
}
