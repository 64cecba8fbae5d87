//! Base embedders mapping a window of observations to one hidden feature
//! vector per time step.
//!
//! All kinds share a flat parameter vector whose layout is fixed by the
//! [`EmbedderConfig`]. Recurrent kinds are stacks of GRU cells; in the
//! dilated variant layer `l` reads its recurrent state from
//! `t - dilations[l]` instead of `t - 1`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{Tape, Var};
use crate::error::{DiffError, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    DilatedRnn,
    Gru,
    MlpWindow,
}

impl EmbedderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EmbedderKind::DilatedRnn => "dilated_rnn",
            EmbedderKind::Gru => "gru",
            EmbedderKind::MlpWindow => "mlp_window",
        }
    }
}

impl std::str::FromStr for EmbedderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dilated_rnn" => Ok(EmbedderKind::DilatedRnn),
            "gru" => Ok(EmbedderKind::Gru),
            "mlp_window" => Ok(EmbedderKind::MlpWindow),
            other => Err(Error::invalid(format!("unknown embedder kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedderConfig {
    pub kind: EmbedderKind,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    /// One entry per layer, strictly increasing from 1. Only read by `dilated_rnn`.
    pub dilations: Vec<usize>,
    pub bias: bool,
}

impl EmbedderConfig {
    pub fn new(kind: EmbedderKind, input_dim: usize) -> Self {
        Self {
            kind,
            input_dim,
            hidden_dim: 32,
            layers: 2,
            dilations: vec![1, 2],
            bias: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::invalid("input_dim must be positive"));
        }
        if self.hidden_dim < 2 {
            return Err(Error::invalid("hidden_dim must be at least 2"));
        }
        if self.layers == 0 {
            return Err(Error::invalid("at least one layer required"));
        }
        if self.kind == EmbedderKind::DilatedRnn {
            if self.dilations.len() != self.layers {
                return Err(Error::invalid(format!(
                    "{} dilations for {} layers",
                    self.dilations.len(),
                    self.layers
                )));
            }
            if self.dilations[0] != 1 || self.dilations.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::invalid("dilations must start at 1 and strictly increase"));
            }
        }
        Ok(())
    }

    fn dilation(&self, layer: usize) -> usize {
        match self.kind {
            EmbedderKind::DilatedRnn => self.dilations[layer],
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerLayout {
    n_in: usize,
    weights: usize,
    bias: Option<usize>,
}

/// An embedder architecture: config plus the derived parameter layout.
#[derive(Debug, Clone)]
pub struct Embedder {
    config: EmbedderConfig,
    layers: Vec<LayerLayout>,
    n_params: usize,
}

impl Embedder {
    pub fn new(config: EmbedderConfig) -> Result<Self> {
        config.validate()?;
        let f = config.hidden_dim;
        let gates = match config.kind {
            EmbedderKind::MlpWindow => 1,
            _ => 3,
        };
        let mut offset = 0;
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let n_in = if l == 0 { config.input_dim } else { f };
            let cols = match config.kind {
                EmbedderKind::MlpWindow => n_in,
                _ => n_in + f,
            };
            let weights = offset;
            offset += gates * f * cols;
            let bias = config.bias.then(|| {
                let b = offset;
                offset += gates * f;
                b
            });
            layers.push(LayerLayout { n_in, weights, bias });
        }
        Ok(Self {
            config,
            layers,
            n_params: offset,
        })
    }

    pub fn config(&self) -> &EmbedderConfig {
        &self.config
    }

    pub fn num_params(&self) -> usize {
        self.n_params
    }

    pub fn output_dim(&self) -> usize {
        self.config.hidden_dim
    }

    /// Uniform in `[-a, a]` with `a = sqrt(1 / fan_in)` of the owning matrix.
    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; self.n_params];
        let f = self.config.hidden_dim;
        for layer in &self.layers {
            let (rows, cols) = match self.config.kind {
                EmbedderKind::MlpWindow => (f, layer.n_in),
                _ => (3 * f, layer.n_in + f),
            };
            let a = (1.0 / cols as f64).sqrt();
            for p in &mut params[layer.weights..layer.weights + rows * cols] {
                *p = rng.random_range(-a..=a);
            }
            if let Some(b) = layer.bias {
                for p in &mut params[b..b + rows] {
                    *p = rng.random_range(-a..=a);
                }
            }
        }
        params
    }

    /// Runs the embedder over a row-major `len x input_dim` window and
    /// returns `len` feature vectors of size `hidden_dim`. The hidden state
    /// starts at zero for every window.
    pub fn forward(&self, tape: &mut Tape, params: &[Var], window: &[f64]) -> Result<Vec<Vec<Var>>> {
        if params.len() != self.n_params {
            return Err(DiffError::Shape {
                expected: self.n_params,
                got: params.len(),
            }
            .into());
        }
        let d = self.config.input_dim;
        if window.is_empty() || !window.len().is_multiple_of(d) {
            return Err(Error::invalid(format!(
                "window of {} values does not match input_dim {d}",
                window.len()
            )));
        }
        let len = window.len() / d;
        let inputs: Vec<Vec<Var>> = window.chunks(d).map(|row| tape.leaves(row)).collect();
        match self.config.kind {
            EmbedderKind::MlpWindow => self.forward_mlp(tape, params, inputs),
            _ => self.forward_recurrent(tape, params, inputs, len),
        }
    }

    fn forward_mlp(&self, tape: &mut Tape, params: &[Var], inputs: Vec<Vec<Var>>) -> Result<Vec<Vec<Var>>> {
        let f = self.config.hidden_dim;
        let mut out = Vec::with_capacity(inputs.len());
        for x in inputs {
            let mut h = x;
            for layer in &self.layers {
                let n_in = layer.n_in;
                let mut next = Vec::with_capacity(f);
                for i in 0..f {
                    let row = &params[layer.weights + i * n_in..layer.weights + (i + 1) * n_in];
                    let b = layer.bias.map(|b| params[b + i]);
                    let pre = tape.linear(row, &h, b)?;
                    next.push(tape.tanh(pre));
                }
                h = next;
            }
            out.push(h);
        }
        Ok(out)
    }

    fn forward_recurrent(
        &self,
        tape: &mut Tape,
        params: &[Var],
        inputs: Vec<Vec<Var>>,
        len: usize,
    ) -> Result<Vec<Vec<Var>>> {
        let f = self.config.hidden_dim;
        let zeros: Vec<Var> = (0..f).map(|_| tape.leaf(0.0)).collect();
        let mut below = inputs;
        for (l, layer) in self.layers.iter().enumerate() {
            let dil = self.config.dilation(l);
            let n_in = layer.n_in;
            let cols = n_in + f;
            let mut states: Vec<Vec<Var>> = Vec::with_capacity(len);
            let mut concat = Vec::with_capacity(cols);
            for (t, x) in below.iter().enumerate() {
                let prev = if t >= dil { &states[t - dil] } else { &zeros };
                concat.clear();
                concat.extend_from_slice(x);
                concat.extend_from_slice(prev);
                let row = |g: usize, i: usize| {
                    let start = layer.weights + (g * f + i) * cols;
                    &params[start..start + cols]
                };
                let bias = |g: usize, i: usize| layer.bias.map(|b| params[b + g * f + i]);
                let mut h = Vec::with_capacity(f);
                for i in 0..f {
                    let zp = tape.linear(row(0, i), &concat, bias(0, i))?;
                    let z = tape.sigmoid(zp);
                    let rp = tape.linear(row(1, i), &concat, bias(1, i))?;
                    let r = tape.sigmoid(rp);
                    let n_row = row(2, i);
                    let a = tape.linear(&n_row[..n_in], x, bias(2, i))?;
                    let c = tape.linear(&n_row[n_in..], prev, None)?;
                    let rc = tape.mul(r, c);
                    let np = tape.add(a, rc);
                    let n = tape.tanh(np);
                    // h' = (1 - z) * n + z * prev = n + z * (prev - n)
                    let gap = tape.sub(prev[i], n);
                    let zg = tape.mul(z, gap);
                    h.push(tape.add(n, zg));
                }
                states.push(h);
            }
            below = states;
        }
        Ok(below)
    }

    /// Forward pass returning plain values.
    pub fn embed(&self, params: &[f64], window: &[f64]) -> Result<Vec<Vec<f64>>> {
        let mut tape = Tape::new();
        let vars = tape.leaves(params);
        let h = self.forward(&mut tape, &vars, window)?;
        Ok(h.iter().map(|row| tape.values(row)).collect())
    }
}

/// Squared L2 norm of all embedder parameters, `Omega(W)`.
pub fn weight_penalty(tape: &mut Tape, params: &[Var]) -> Var {
    tape.sq_norm(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(kind: EmbedderKind) -> EmbedderConfig {
        EmbedderConfig {
            kind,
            input_dim: 3,
            hidden_dim: 4,
            layers: 2,
            dilations: vec![1, 2],
            bias: true,
        }
    }

    fn window(len: usize, d: usize) -> Vec<f64> {
        (0..len * d).map(|i| ((i * 7) % 11) as f64 / 5.0 - 1.0).collect()
    }

    #[test]
    fn config_validation() {
        let mut c = config(EmbedderKind::DilatedRnn);
        c.dilations = vec![2, 3];
        assert!(Embedder::new(c.clone()).is_err());
        c.dilations = vec![1, 1];
        assert!(Embedder::new(c.clone()).is_err());
        c.dilations = vec![1];
        assert!(Embedder::new(c.clone()).is_err());
        c.kind = EmbedderKind::Gru;
        assert!(Embedder::new(c.clone()).is_ok());
        c.hidden_dim = 1;
        assert!(Embedder::new(c).is_err());
    }

    #[test]
    fn zero_mlp_outputs_activation_of_zero() {
        let e = Embedder::new(config(EmbedderKind::MlpWindow)).unwrap();
        let h = e.embed(&vec![0.0; e.num_params()], &window(5, 3)).unwrap();
        assert_eq!(h.len(), 5);
        assert!(h.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn output_shape_for_every_kind() {
        for kind in [EmbedderKind::DilatedRnn, EmbedderKind::Gru, EmbedderKind::MlpWindow] {
            let e = Embedder::new(config(kind)).unwrap();
            let h = e.embed(&e.init_params(1), &window(9, 3)).unwrap();
            assert_eq!(h.len(), 9);
            assert!(h.iter().all(|r| r.len() == 4));
        }
    }

    #[test]
    fn window_shape_mismatch() {
        let e = Embedder::new(config(EmbedderKind::Gru)).unwrap();
        assert!(e.embed(&e.init_params(1), &[1.0, 2.0]).is_err());
        assert!(e.embed(&[0.0; 3], &window(2, 3)).is_err());
    }

    #[test]
    fn causality_probe() {
        for kind in [EmbedderKind::DilatedRnn, EmbedderKind::Gru] {
            let e = Embedder::new(config(kind)).unwrap();
            let p = e.init_params(3);
            let w = window(10, 3);
            let base = e.embed(&p, &w).unwrap();
            let mut w2 = w.clone();
            w2[5 * 3 + 1] += 0.5;
            let pert = e.embed(&p, &w2).unwrap();
            for t in 0..10 {
                let changed = base[t].iter().zip(&pert[t]).any(|(a, b)| a != b);
                assert_eq!(changed, t >= 5, "{kind:?} t={t}");
            }
        }
    }

    #[test]
    fn single_step_gru_is_one_cell_application() {
        let mut c = config(EmbedderKind::Gru);
        c.layers = 1;
        c.input_dim = 2;
        c.hidden_dim = 2;
        let e = Embedder::new(c).unwrap();
        let p = e.init_params(9);
        let x = [0.4, -0.7];
        let h = e.embed(&p, &x).unwrap();
        // hand-rolled cell with zero initial state: rows of [W | U], bias after
        let f = 2;
        let cols = 4;
        let bias = &p[3 * f * cols..];
        let pre = |g: usize, i: usize| {
            let r = &p[(g * f + i) * cols..(g * f + i) * cols + 2];
            r[0] * x[0] + r[1] * x[1] + bias[g * f + i]
        };
        for i in 0..f {
            let z = crate::diff::sigmoid(pre(0, i));
            let n = pre(2, i).tanh();
            let expected = (1.0 - z) * n;
            assert!((h[0][i] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let mut c = config(EmbedderKind::MlpWindow);
        c.input_dim = 4;
        c.layers = 1;
        let e = Embedder::new(c).unwrap();
        let a = e.init_params(5);
        assert_eq!(a, e.init_params(5));
        assert_ne!(a, e.init_params(6));
        assert!(a.iter().all(|v| v.abs() <= 0.5));
        assert!(a.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn bias_free_layout_is_smaller() {
        let mut c = config(EmbedderKind::DilatedRnn);
        let with = Embedder::new(c.clone()).unwrap().num_params();
        c.bias = false;
        let without = Embedder::new(c).unwrap().num_params();
        assert_eq!(with - without, 2 * 3 * 4);
    }

    #[test]
    fn forward_gradient_matches_finite_differences() {
        for kind in [EmbedderKind::DilatedRnn, EmbedderKind::Gru, EmbedderKind::MlpWindow] {
            let e = Embedder::new(config(kind)).unwrap();
            let p = e.init_params(2);
            let w = window(6, 3);
            let total = |params: &[f64]| -> f64 { e.embed(params, &w).unwrap().iter().flatten().sum() };
            let mut tape = Tape::new();
            let vars = tape.leaves(&p);
            let h = e.forward(&mut tape, &vars, &w).unwrap();
            let flat: Vec<Var> = h.into_iter().flatten().collect();
            let s = tape.sum(&flat);
            tape.backward(s).unwrap();
            for i in (0..p.len()).step_by(7) {
                let mut pp = p.clone();
                let mut pm = p.clone();
                pp[i] += 1e-5;
                pm[i] -= 1e-5;
                let fd = (total(&pp) - total(&pm)) / 2e-5;
                let g = tape.grad(vars[i]);
                let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-8);
                assert!(rel < 1e-4 || (g - fd).abs() < 1e-9, "{kind:?} i={i} g={g} fd={fd}");
            }
        }
    }
}
