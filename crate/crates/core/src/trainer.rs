//! Training loop: embed, assign, compute the total loss, backpropagate and
//! update the embedder, center(s) and threshold with one optimizer.
//!
//! Per epoch the squared radius (single mode) or the target distribution
//! (multi mode) is refreshed from a full pass over the training windows,
//! then windows are visited in a seeded shuffled order in batches. Every
//! loss term is a sum over time steps with the per-step targets held
//! fixed, so each window is differentiated on its own and the gradients
//! are accumulated on the parameter leaves before the batch update.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{Tape, Var};
use crate::embedder::{Embedder, EmbedderConfig};
use crate::error::{Error, Result};
use crate::model::{ClusterModel, ModelState};
use crate::multi::{self, MultiClusterState};
use crate::optim::{Optimizer, OptimizerKind};
use crate::single::{self, ClusterState};
use crate::timeseries::{make_windows, NormalizationStats, TimeSeriesDataset, WindowView, DEFAULT_WINDOW};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterMode {
    Single,
    Multi,
}

/// Which loss terms drive training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Distance loss plus clustering loss.
    Full,
    /// Distance loss alone (ablation).
    DistanceOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Windows per optimizer step.
    pub batch_windows: usize,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub rho: f64,
    pub lambda: f64,
    pub tau: f64,
    pub nu0: f64,
    pub seed: u64,
    pub mode: ClusterMode,
    pub k: usize,
    pub window: usize,
    pub stride: usize,
    pub objective: Objective,
    /// Keep the center fixed at the origin (DeepSVDD-style control).
    pub freeze_center: bool,
    /// Abort when both the center norm and the embedding spread fall below
    /// this. `0` disables the check.
    pub collapse_tol: f64,
    /// Stop when the relative improvement of `l_total` over `patience`
    /// epochs drops below this. `0` disables early stopping.
    pub convergence_tol: f64,
    pub patience: usize,
    pub snapshot_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_windows: 4,
            optimizer: OptimizerKind::Adam,
            lr: 1e-3,
            rho: 0.1,
            lambda: 1e-4,
            tau: 0.1,
            nu0: 0.5,
            seed: 7,
            mode: ClusterMode::Single,
            k: 1,
            window: DEFAULT_WINDOW,
            stride: DEFAULT_WINDOW,
            objective: Objective::Full,
            freeze_center: false,
            collapse_tol: 1e-6,
            convergence_tol: 1e-5,
            patience: 10,
            snapshot_every: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if !(self.lr > 0.0) {
            return Err(Error::invalid("step size must be positive"));
        }
        if self.batch_windows == 0 || self.window == 0 || self.stride == 0 || self.snapshot_every == 0 {
            return Err(Error::invalid("batch, window, stride and snapshot cadence must be positive"));
        }
        if self.mode == ClusterMode::Multi && self.k == 0 {
            return Err(Error::invalid("multi mode needs k >= 1"));
        }
        ClusterState::new(1, self.nu0, self.rho, self.lambda, self.tau)?;
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Threshold after the epoch (0 in multi mode).
    pub nu: f64,
    /// Squared radius used during the epoch (0 in multi mode).
    pub r_sq: f64,
    /// Mean squared distance of the epoch's embeddings to the nearest center.
    pub mean_dist: f64,
    /// Mean per-batch losses over the epoch.
    pub l_cluster: f64,
    pub l_distance: f64,
    pub l_total: f64,
    pub c_norm: f64,
    pub wall_secs: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

pub const LOG_COLUMNS: [&str; 8] = [
    "epoch", "nu", "r_sq", "mean_dist", "l_cluster", "l_distance", "l_total", "c_norm",
];

impl TrainLog {
    /// CSV with a header and one row per epoch. Wall time is left out so
    /// identical runs produce identical bytes.
    pub fn to_csv(&self) -> String {
        let mut out = LOG_COLUMNS.join(",");
        out.push('\n');
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.epoch, r.nu, r.r_sq, r.mean_dist, r.l_cluster, r.l_distance, r.l_total, r.c_norm
            )
            .unwrap();
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(LOG_COLUMNS.join(",").as_str()) {
            return Err(Error::invalid("train log header mismatch"));
        }
        let mut records = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != LOG_COLUMNS.len() {
                return Err(Error::invalid(format!("train log row {line:?}")));
            }
            let x = |i: usize| -> Result<f64> {
                f[i].parse().map_err(|_| Error::invalid(format!("train log value {:?}", f[i])))
            };
            records.push(EpochRecord {
                epoch: f[0].parse().map_err(|_| Error::invalid("train log epoch"))?,
                nu: x(1)?,
                r_sq: x(2)?,
                mean_dist: x(3)?,
                l_cluster: x(4)?,
                l_distance: x(5)?,
                l_total: x(6)?,
                c_norm: x(7)?,
                wall_secs: 0.0,
            });
        }
        Ok(Self { records })
    }
}

/// Center(s) captured at an epoch boundary, flattened.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterSnapshot {
    pub epoch: usize,
    pub center: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ModelState,
    pub log: TrainLog,
    pub snapshots: Vec<CenterSnapshot>,
}

/// Embeds every window and returns the per-step features.
pub fn embed_windows(embedder: &Embedder, params: &[f64], data: &TimeSeriesDataset, windows: &[WindowView]) -> Result<Vec<Vec<Vec<f64>>>> {
    let mut tape = Tape::new();
    let vars = tape.leaves(params);
    let cp = tape.checkpoint();
    let mut out = Vec::with_capacity(windows.len());
    for w in windows {
        tape.rewind(cp);
        let h = embedder.forward(&mut tape, &vars, data.slice(w.start, w.length))?;
        out.push(h.iter().map(|r| tape.values(r)).collect());
    }
    Ok(out)
}

/// Center initialization: the mean embedding, nudged off the origin when
/// its norm is below `1e-3`.
pub fn warm_start(features: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = features.first().ok_or_else(|| Error::invalid("warm start on empty data"))?;
    let mut c = vec![0.0; first.len()];
    for h in features {
        for (ci, hi) in c.iter_mut().zip(h) {
            *ci += hi;
        }
    }
    let n = features.len() as f64;
    c.iter_mut().for_each(|v| *v /= n);
    if c.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-3 {
        c[0] += 0.1;
    }
    Ok(c)
}

/// `k` centers from evenly spaced embeddings refined by Lloyd iterations.
pub fn init_centers(features: &[Vec<f64>], k: usize) -> Result<Vec<Vec<f64>>> {
    if features.len() < k || k == 0 {
        return Err(Error::invalid(format!("cannot pick {k} centers from {} points", features.len())));
    }
    let n = features.len();
    let mut centers: Vec<Vec<f64>> = (0..k).map(|j| features[(2 * j + 1) * n / (2 * k)].clone()).collect();
    for _ in 0..10 {
        let mut sums = vec![vec![0.0; centers[0].len()]; k];
        let mut counts = vec![0usize; k];
        for h in features {
            let j = nearest(h, &centers);
            counts[j] += 1;
            for (s, v) in sums[j].iter_mut().zip(h) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
    }
    Ok(centers)
}

fn nearest(h: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = single::sq_dist(h, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best.0
}

/// Mean squared distance of every embedding to its nearest center.
pub fn embedding_spread(features: &[Vec<f64>], centers: &[Vec<f64>]) -> f64 {
    let total: f64 = features.iter().map(|h| single::sq_dist(h, &centers[nearest(h, centers)])).sum();
    total / features.len().max(1) as f64
}

/// Layout of the joint parameter vector `[embedder | centers | nu_raw]`.
struct Layout {
    n_embed: usize,
    n_center: usize,
    has_nu: bool,
}

impl Layout {
    fn total(&self) -> usize {
        self.n_embed + self.n_center + usize::from(self.has_nu)
    }
}

struct Batch {
    l_cluster: f64,
    l_distance: f64,
    dist_sum: f64,
    points: usize,
}

/// Fits a z-score normalizer on `raw`, trains on the normalized series and
/// stores the statistics in the model so scoring applies the same map.
pub fn fit(raw: &TimeSeriesDataset, embedder_cfg: &EmbedderConfig, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let stats = NormalizationStats::fit(raw)?;
    let mut out = train(&stats.apply(raw)?, embedder_cfg, cfg)?;
    out.model.normalization = Some(stats);
    Ok(out)
}

/// Trains on already-normalized data.
pub fn train(data: &TimeSeriesDataset, embedder_cfg: &EmbedderConfig, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if embedder_cfg.input_dim != data.dim() {
        return Err(Error::invalid(format!(
            "embedder input_dim {} but data has {} channels",
            embedder_cfg.input_dim,
            data.dim()
        )));
    }
    let embedder = Embedder::new(embedder_cfg.clone())?;
    let win = cfg.window.min(data.len());
    let windows = make_windows(data.len(), win, cfg.stride)?;
    let f = embedder.output_dim();

    let embed_params = embedder.init_params(cfg.seed);
    let initial = embed_windows(&embedder, &embed_params, data, &windows)?;
    let flat_initial: Vec<Vec<f64>> = initial.into_iter().flatten().collect();

    let mut single_state = None;
    let mut multi_state = None;
    let centers0: Vec<Vec<f64>> = match cfg.mode {
        ClusterMode::Single => {
            let mut s = ClusterState::new(f, cfg.nu0, cfg.rho, cfg.lambda, cfg.tau)?;
            if !cfg.freeze_center {
                s.center = warm_start(&flat_initial)?;
            }
            let c = vec![s.center.clone()];
            single_state = Some(s);
            c
        }
        ClusterMode::Multi => {
            let centers = if cfg.freeze_center {
                vec![vec![0.0; f]; cfg.k]
            } else {
                init_centers(&flat_initial, cfg.k)?
            };
            multi_state = Some(MultiClusterState {
                centers: centers.clone(),
                lambda: cfg.lambda,
            });
            centers
        }
    };

    let layout = Layout {
        n_embed: embedder.num_params(),
        n_center: centers0.len() * f,
        has_nu: cfg.mode == ClusterMode::Single,
    };
    let mut params = Vec::with_capacity(layout.total());
    params.extend_from_slice(&embed_params);
    params.extend(centers0.iter().flatten());
    if let Some(s) = &single_state {
        params.push(s.nu_raw);
    }

    let mut tape = Tape::new();
    let vars = tape.leaves(&params);
    let cp = tape.checkpoint();
    let embed_vars = &vars[..layout.n_embed];
    let center_vars: Vec<Vec<Var>> = vars[layout.n_embed..layout.n_embed + layout.n_center]
        .chunks(f)
        .map(<[Var]>::to_vec)
        .collect();
    let nu_var = layout.has_nu.then(|| vars[layout.total() - 1]);

    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.lr, params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut log = TrainLog::default();
    let mut snapshots = vec![CenterSnapshot {
        epoch: 0,
        center: centers0.concat(),
    }];
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut grads = vec![0.0; params.len()];

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let centers: Vec<Vec<f64>> = params[layout.n_embed..layout.n_embed + layout.n_center]
            .chunks(f)
            .map(<[f64]>::to_vec)
            .collect();

        // Epoch-level refresh from a full pass.
        let features = embed_windows(&embedder, &params[..layout.n_embed], data, &windows)?;
        let mut radius_sq = 0.0;
        let mut targets: Vec<Vec<Vec<f64>>> = Vec::new();
        match cfg.mode {
            ClusterMode::Single => {
                let d: Vec<f64> = features.iter().flatten().map(|h| single::sq_dist(h, &centers[0])).collect();
                radius_sq = single::update_radius(&d, cfg.rho)?;
            }
            ClusterMode::Multi => {
                let flat: Vec<Vec<f64>> = features.iter().flatten().cloned().collect();
                let q = multi::student_t_assign(&flat, &centers)?;
                let p = multi::target_distribution(&q);
                let mut it = p.into_iter();
                targets = windows.iter().map(|w| it.by_ref().take(w.length).collect()).collect();
            }
        }

        order.shuffle(&mut rng);
        let mut sums = (0.0, 0.0, 0.0);
        let mut dist_sum = 0.0;
        let mut points = 0usize;
        let mut n_batches = 0usize;
        for batch in order.chunks(cfg.batch_windows) {
            tape.rewind(cp);
            tape.zero_grads();
            let n_batch: usize = batch.iter().map(|&i| windows[i].length).sum();
            let mut b = Batch {
                l_cluster: 0.0,
                l_distance: 0.0,
                dist_sum: 0.0,
                points: 0,
            };
            for &wi in batch {
                tape.rewind(cp);
                let w = windows[wi];
                let h = embedder.forward(&mut tape, embed_vars, data.slice(w.start, w.length))?;
                let root = match cfg.mode {
                    ClusterMode::Single => {
                        single_window_loss(&mut tape, &h, &center_vars[0], nu_var.unwrap(), radius_sq, cfg, &mut b)?
                    }
                    ClusterMode::Multi => {
                        multi_window_loss(&mut tape, &h, &center_vars, &targets[wi], n_batch, cfg, &mut b)?
                    }
                };
                tape.backward(root)?;
            }
            tape.rewind(cp);
            let omega = tape.sq_norm(embed_vars);
            let shift = if cfg.mode == ClusterMode::Single { radius_sq } else { 0.0 };
            let reg = tape.affine(omega, cfg.lambda, shift);
            tape.backward(reg)?;
            b.l_distance += tape.value(reg);

            let total = single::total_loss(b.l_distance, b.l_cluster)?;
            for (g, v) in grads.iter_mut().zip(&vars) {
                *g = tape.grad(*v);
            }
            if cfg.freeze_center {
                grads[layout.n_embed..layout.n_embed + layout.n_center].fill(0.0);
            }
            optimizer
                .step(&mut params, &grads)
                .map_err(|e| Error::Numeric(format!("epoch {epoch}: {e}")))?;
            for (v, &p) in vars.iter().zip(&params) {
                tape.set_value(*v, p);
            }

            sums.0 += b.l_cluster;
            sums.1 += b.l_distance;
            sums.2 += total;
            dist_sum += b.dist_sum;
            points += b.points;
            n_batches += 1;
        }

        let centers: Vec<Vec<f64>> = params[layout.n_embed..layout.n_embed + layout.n_center]
            .chunks(f)
            .map(<[f64]>::to_vec)
            .collect();
        let c_norm = centers.concat().iter().map(|v| v * v).sum::<f64>().sqrt();
        let nb = n_batches as f64;
        let record = EpochRecord {
            epoch,
            nu: if layout.has_nu { crate::diff::sigmoid(params[layout.total() - 1]) } else { 0.0 },
            r_sq: radius_sq,
            mean_dist: dist_sum / points.max(1) as f64,
            l_cluster: sums.0 / nb,
            l_distance: sums.1 / nb,
            l_total: sums.2 / nb,
            c_norm,
            wall_secs: started.elapsed().as_secs_f64(),
        };
        if ![record.nu, record.mean_dist, record.l_total, record.c_norm].iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite training statistics at epoch {epoch}")));
        }
        if cfg.collapse_tol > 0.0 && c_norm < cfg.collapse_tol && record.mean_dist < cfg.collapse_tol {
            return Err(Error::Collapse {
                center_norm: c_norm,
                variance: record.mean_dist,
            });
        }
        log.records.push(record);
        if epoch % cfg.snapshot_every == 0 {
            snapshots.push(CenterSnapshot {
                epoch,
                center: centers.concat(),
            });
        }
        if converged(&log, cfg) {
            break;
        }
    }

    // Final radius from the trained network.
    let centers: Vec<Vec<f64>> = params[layout.n_embed..layout.n_embed + layout.n_center]
        .chunks(f)
        .map(<[f64]>::to_vec)
        .collect();
    let features = embed_windows(&embedder, &params[..layout.n_embed], data, &windows)?;
    let cluster = match cfg.mode {
        ClusterMode::Single => {
            let mut s = single_state.unwrap();
            s.center = centers[0].clone();
            s.nu_raw = params[layout.total() - 1];
            let d: Vec<f64> = features.iter().flatten().map(|h| single::sq_dist(h, &s.center)).collect();
            s.radius_sq = single::update_radius(&d, cfg.rho)?;
            ClusterModel::Single(s)
        }
        ClusterMode::Multi => {
            let mut m = multi_state.unwrap();
            m.centers = centers;
            ClusterModel::Multi(m)
        }
    };
    let model = ModelState {
        embedder: embedder_cfg.clone(),
        params: params[..layout.n_embed].to_vec(),
        cluster,
        window: cfg.window,
        normalization: None,
    };
    Ok(TrainOutcome { model, log, snapshots })
}

fn converged(log: &TrainLog, cfg: &TrainConfig) -> bool {
    if cfg.convergence_tol <= 0.0 || cfg.patience == 0 {
        return false;
    }
    let r = &log.records;
    if r.len() <= cfg.patience {
        return false;
    }
    let old = r[r.len() - 1 - cfg.patience].l_total;
    let new = r[r.len() - 1].l_total;
    (old - new) / old.abs().max(f64::MIN_POSITIVE) < cfg.convergence_tol
}

fn single_window_loss(
    tape: &mut Tape,
    h: &[Vec<Var>],
    center: &[Var],
    nu_raw: Var,
    radius_sq: f64,
    cfg: &TrainConfig,
    b: &mut Batch,
) -> Result<Var> {
    let hinge = single::distance_hinge_tape(tape, h, center, radius_sq, cfg.rho)?;
    b.l_distance += tape.value(hinge);
    let cv = tape.values(center);
    for ht in h {
        b.dist_sum += single::sq_dist(&tape.values(ht), &cv);
    }
    b.points += h.len();
    if cfg.objective == Objective::DistanceOnly {
        return Ok(hinge);
    }
    let nu = tape.sigmoid(nu_raw);
    let q = h
        .iter()
        .map(|ht| single::soft_assign_tape(tape, ht, center))
        .collect::<Result<Vec<_>>>()?;
    let (_, p) = single::assign_target(&tape.values(&q), tape.value(nu), cfg.tau);
    let lc = single::one_directed_loss_tape(tape, &q, &p, nu)?;
    b.l_cluster += tape.value(lc);
    Ok(tape.add(hinge, lc))
}

fn multi_window_loss(
    tape: &mut Tape,
    h: &[Vec<Var>],
    centers: &[Vec<Var>],
    targets: &[Vec<f64>],
    n_batch: usize,
    cfg: &TrainConfig,
    b: &mut Batch,
) -> Result<Var> {
    let dist = multi::multi_distance_tape(tape, h, centers, n_batch)?;
    b.l_distance += tape.value(dist);
    let cv: Vec<Vec<f64>> = centers.iter().map(|c| tape.values(c)).collect();
    for ht in h {
        let hv = tape.values(ht);
        b.dist_sum += cv.iter().map(|c| single::sq_dist(&hv, c)).fold(f64::INFINITY, f64::min);
    }
    b.points += h.len();
    if cfg.objective == Objective::DistanceOnly {
        return Ok(dist);
    }
    let q = multi::student_t_assign_tape(tape, h, centers)?;
    let kl = multi::kl_cluster_loss_tape(tape, targets, &q)?;
    b.l_cluster += tape.value(kl);
    Ok(tape.add(dist, kl))
}

/// CSV of center snapshots with their projection on the top two principal
/// axes of the snapshot set. With fewer than two snapshots only the raw
/// coordinates are written.
pub fn export_centroid_trajectory(snapshots: &[CenterSnapshot]) -> String {
    let dim = snapshots.first().map_or(0, |s| s.center.len());
    let projected = snapshots.len() >= 2;
    let mut out = String::from("epoch");
    if projected {
        out.push_str(",pc1,pc2");
    }
    for i in 0..dim {
        write!(out, ",c{i}").unwrap();
    }
    out.push('\n');
    let coords = if projected { project_2d(snapshots) } else { Vec::new() };
    for (i, s) in snapshots.iter().enumerate() {
        write!(out, "{}", s.epoch).unwrap();
        if projected {
            write!(out, ",{},{}", coords[i].0, coords[i].1).unwrap();
        }
        for v in &s.center {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Coordinates of each snapshot on the top-2 principal axes. Axis signs are
/// fixed so the largest-magnitude component of each axis is positive.
pub fn project_2d(snapshots: &[CenterSnapshot]) -> Vec<(f64, f64)> {
    let m = snapshots.len();
    let dim = snapshots.first().map_or(0, |s| s.center.len());
    if m == 0 || dim == 0 {
        return Vec::new();
    }
    let mut mean = vec![0.0; dim];
    for s in snapshots {
        for (a, v) in mean.iter_mut().zip(&s.center) {
            *a += v / m as f64;
        }
    }
    let centered = nalgebra::DMatrix::from_fn(m, dim, |i, j| snapshots[i].center[j] - mean[j]);
    let cov = centered.transpose() * &centered;
    let eig = nalgebra::SymmetricEigen::new(cov);
    let mut idx: Vec<usize> = (0..dim).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let axis = |k: usize| -> Vec<f64> {
        let Some(&col) = idx.get(k) else {
            return vec![0.0; dim];
        };
        let v: Vec<f64> = eig.eigenvectors.column(col).iter().copied().collect();
        let pivot = v.iter().copied().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        v.into_iter().map(|x| x * sign).collect()
    };
    let (a1, a2) = (axis(0), axis(1));
    (0..m)
        .map(|i| {
            let row = centered.row(i);
            let p1: f64 = row.iter().zip(&a1).map(|(x, y)| x * y).sum();
            let p2: f64 = row.iter().zip(&a2).map(|(x, y)| x * y).sum();
            (p1, p2)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedder::EmbedderKind;
    use crate::timeseries::{fit_normalizer, synth_train_test, SynthSpec};

    fn small_setup(epochs: usize) -> (TimeSeriesDataset, EmbedderConfig, TrainConfig) {
        let (train, _) = synth_train_test(&SynthSpec {
            length: 400,
            ..Default::default()
        })
        .unwrap();
        let train = fit_normalizer(&train).unwrap().apply(&train).unwrap();
        let emb = EmbedderConfig {
            kind: EmbedderKind::DilatedRnn,
            input_dim: 2,
            hidden_dim: 8,
            layers: 2,
            dilations: vec![1, 2],
            bias: true,
        };
        let cfg = TrainConfig {
            epochs,
            window: 50,
            stride: 50,
            batch_windows: 2,
            lr: 1e-2,
            ..Default::default()
        };
        (train, emb, cfg)
    }

    #[test]
    fn warm_start_examples() {
        let v = vec![0.5, -1.0];
        assert_eq!(warm_start(&[v.clone(), v.clone(), v.clone()]).unwrap(), v);
        let c = warm_start(&[vec![1.0, 2.0], vec![-1.0, -2.0]]).unwrap();
        assert_eq!(c, vec![0.1, 0.0]);
        assert!(warm_start(&[]).is_err());
    }

    #[test]
    fn two_epoch_smoke_run_is_deterministic() {
        let (data, emb, cfg) = small_setup(2);
        let a = train(&data, &emb, &cfg).unwrap();
        let b = train(&data, &emb, &cfg).unwrap();
        assert_eq!(a.log.records.len(), 2);
        assert_eq!(a.log.to_csv(), b.log.to_csv());
        assert_eq!(a.model, b.model);
        for r in &a.log.records {
            assert!(r.l_total.is_finite() && r.l_cluster >= 0.0);
            assert!(r.l_distance >= r.r_sq);
        }
        let nu = match &a.model.cluster {
            ClusterModel::Single(s) => s.nu(),
            _ => unreachable!(),
        };
        assert!(nu > 0.0 && nu < 1.0);
    }

    #[test]
    fn multi_mode_trains_k_centers() {
        let (data, emb, mut cfg) = small_setup(2);
        cfg.mode = ClusterMode::Multi;
        cfg.k = 3;
        let out = train(&data, &emb, &cfg).unwrap();
        assert_eq!(out.model.centers().len(), 3);
        assert!(out.log.records.iter().all(|r| r.l_cluster >= 0.0 && r.nu == 0.0));
    }

    #[test]
    fn frozen_center_stays_at_origin() {
        let (data, mut emb, mut cfg) = small_setup(2);
        emb.bias = false;
        cfg.freeze_center = true;
        cfg.objective = Objective::DistanceOnly;
        cfg.collapse_tol = 0.0;
        let out = train(&data, &emb, &cfg).unwrap();
        assert!(out.model.centers()[0].iter().all(|&c| c == 0.0));
    }

    #[test]
    fn rejects_bad_config() {
        let (data, emb, cfg) = small_setup(1);
        for bad in [
            TrainConfig { epochs: 0, ..cfg.clone() },
            TrainConfig { lr: 0.0, ..cfg.clone() },
            TrainConfig { nu0: 1.0, ..cfg.clone() },
            TrainConfig { tau: 0.7, ..cfg.clone() },
        ] {
            assert!(train(&data, &emb, &bad).is_err());
        }
        let wrong_dim = EmbedderConfig { input_dim: 3, ..emb };
        assert!(train(&data, &wrong_dim, &cfg).is_err());
    }

    #[test]
    fn snapshots_every_five_epochs() {
        let (data, emb, mut cfg) = small_setup(12);
        cfg.convergence_tol = 0.0;
        let out = train(&data, &emb, &cfg).unwrap();
        let epochs: Vec<usize> = out.snapshots.iter().map(|s| s.epoch).collect();
        assert_eq!(epochs, vec![0, 5, 10]);
    }

    #[test]
    fn log_csv_round_trips() {
        let (data, emb, cfg) = small_setup(2);
        let log = train(&data, &emb, &cfg).unwrap().log;
        let text = log.to_csv();
        assert_eq!(TrainLog::from_csv(&text).unwrap().to_csv(), text);
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn projection_geometry() {
        let snap = |epoch, center: Vec<f64>| CenterSnapshot { epoch, center };
        let same = vec![snap(0, vec![1.0, 2.0, 3.0]), snap(5, vec![1.0, 2.0, 3.0]), snap(10, vec![1.0, 2.0, 3.0])];
        for (a, b) in project_2d(&same) {
            assert!(a.abs() < 1e-12 && b.abs() < 1e-12);
        }
        let two = vec![snap(0, vec![0.0, 0.0, 0.0]), snap(5, vec![3.0, 4.0, 0.0])];
        let p = project_2d(&two);
        assert!(((p[0].0 - p[1].0).abs() - 5.0).abs() < 1e-9);
        assert!(p[0].1.abs() < 1e-9 && p[1].1.abs() < 1e-9);

        let csv = export_centroid_trajectory(&two);
        assert!(csv.starts_with("epoch,pc1,pc2,c0,c1,c2\n"));
        let raw = export_centroid_trajectory(&two[..1]);
        assert!(raw.starts_with("epoch,c0,c1,c2\n"));
        assert_eq!(raw.lines().count(), 2);
    }
}
