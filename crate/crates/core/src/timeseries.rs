//! Multivariate time series: CSV ingestion, z-score normalization,
//! windowing and a seeded synthetic generator with injected anomalies.
//!
//! CSV layout is one row per time step, `d` comma-separated numeric fields,
//! optionally followed by a `0`/`1` label field.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Window size used by the public benchmarks.
pub const DEFAULT_WINDOW: usize = 100;

/// Floor applied to per-channel standard deviations.
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    pub name: String,
    /// Row-major `length x dim` observations.
    values: Vec<f64>,
    labels: Option<Vec<u8>>,
    dim: usize,
}

impl TimeSeriesDataset {
    pub fn new(
        name: impl Into<String>,
        values: Vec<f64>,
        dim: usize,
        labels: Option<Vec<u8>>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dataset needs at least one channel"));
        }
        if !values.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "{} values do not fill rows of width {dim}",
                values.len()
            )));
        }
        let length = values.len() / dim;
        if let Some(l) = &labels {
            if l.len() != length {
                return Err(Error::invalid(format!(
                    "{} labels for {length} time steps",
                    l.len()
                )));
            }
            if l.iter().any(|&v| v > 1) {
                return Err(Error::invalid("labels must be 0 or 1"));
            }
        }
        Ok(Self {
            name: name.into(),
            values,
            labels,
            dim,
        })
    }

    pub fn from_rows(name: impl Into<String>, rows: &[Vec<f64>], labels: Option<Vec<u8>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid("ragged rows"));
        }
        Self::new(name, rows.concat(), dim, labels)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn channel(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().skip(c).step_by(self.dim).copied()
    }

    /// Rows `start..start + length`, row-major.
    pub fn slice(&self, start: usize, length: usize) -> &[f64] {
        &self.values[start * self.dim..(start + length) * self.dim]
    }

    pub fn without_labels(&self) -> Self {
        Self {
            labels: None,
            ..self.clone()
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for t in 0..self.len() {
            for (c, v) in self.row(t).iter().enumerate() {
                if c > 0 {
                    out.push(',');
                }
                write!(out, "{v}").unwrap();
            }
            if let Some(l) = &self.labels {
                write!(out, ",{}", l[t]).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Reads a dataset from CSV. Blank lines are skipped; anything else that
/// fails to parse is an error naming the offending line.
pub fn load_csv(path: &Path, has_labels: bool) -> Result<TimeSeriesDataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_csv(&text, has_labels, &name).map_err(|(line, msg)| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    })
}

pub fn parse_csv(
    text: &str,
    has_labels: bool,
    name: &str,
) -> std::result::Result<TimeSeriesDataset, (usize, String)> {
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut dim = None;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let n_values = if has_labels {
            if fields.len() < 2 {
                return Err((lineno, "expected at least one value and a label".into()));
            }
            fields.len() - 1
        } else {
            fields.len()
        };
        match dim {
            None => dim = Some(n_values),
            Some(d) if d != n_values => {
                return Err((lineno, format!("ragged row: {n_values} fields, expected {d}")))
            }
            _ => {}
        }
        for f in &fields[..n_values] {
            let v: f64 = f
                .parse()
                .map_err(|_| (lineno, format!("non-numeric cell {f:?}")))?;
            if !v.is_finite() {
                return Err((lineno, format!("non-finite cell {f:?}")));
            }
            values.push(v);
        }
        if has_labels {
            match fields[n_values] {
                "0" => labels.push(0),
                "1" => labels.push(1),
                other => return Err((lineno, format!("label {other:?} outside {{0,1}}"))),
            }
        }
    }
    let dim = dim.ok_or((0, "empty file".to_string()))?;
    TimeSeriesDataset::new(name, values, dim, has_labels.then_some(labels))
        .map_err(|e| (0, e.to_string()))
}

/// Per-channel mean and population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormalizationStats {
    pub fn fit(train: &TimeSeriesDataset) -> Result<Self> {
        let n = train.len();
        if n < 2 {
            return Err(Error::invalid("normalization needs at least 2 time steps"));
        }
        let mut mean = Vec::with_capacity(train.dim());
        let mut std = Vec::with_capacity(train.dim());
        for c in 0..train.dim() {
            let m = train.channel(c).sum::<f64>() / n as f64;
            let var = train.channel(c).map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
            mean.push(m);
            std.push(var.sqrt().max(STD_FLOOR));
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, ds: &TimeSeriesDataset) -> Result<TimeSeriesDataset> {
        self.map(ds, |v, m, s| (v - m) / s)
    }

    pub fn invert(&self, ds: &TimeSeriesDataset) -> Result<TimeSeriesDataset> {
        self.map(ds, |v, m, s| v * s + m)
    }

    fn map(&self, ds: &TimeSeriesDataset, f: impl Fn(f64, f64, f64) -> f64) -> Result<TimeSeriesDataset> {
        if ds.dim() != self.mean.len() {
            return Err(Error::invalid(format!(
                "dataset has {} channels, stats have {}",
                ds.dim(),
                self.mean.len()
            )));
        }
        let d = ds.dim();
        let values = ds
            .values()
            .iter()
            .enumerate()
            .map(|(i, &v)| f(v, self.mean[i % d], self.std[i % d]))
            .collect();
        TimeSeriesDataset::new(ds.name.clone(), values, d, ds.labels.clone())
    }
}

pub fn fit_normalizer(train: &TimeSeriesDataset) -> Result<NormalizationStats> {
    NormalizationStats::fit(train)
}

pub fn apply_normalizer(ds: &TimeSeriesDataset, stats: &NormalizationStats) -> Result<TimeSeriesDataset> {
    stats.apply(ds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowView {
    pub start: usize,
    pub length: usize,
}

impl WindowView {
    pub fn end(&self) -> usize {
        self.start + self.length
    }
}

/// Windows at `0, stride, 2*stride, ...` while they fit inside the series.
pub fn make_windows(len: usize, win: usize, stride: usize) -> Result<Vec<WindowView>> {
    if win == 0 || stride == 0 {
        return Err(Error::invalid("window and stride must be positive"));
    }
    if win > len {
        return Err(Error::invalid(format!("window {win} longer than series {len}")));
    }
    Ok((0..=len - win)
        .step_by(stride)
        .map(|start| WindowView { start, length: win })
        .collect())
}

/// Non-overlapping windows covering every index of the series. When `len`
/// is not a multiple of `win` a final window aligned to the end is added;
/// it overlaps its predecessor. Series shorter than `win` get a single
/// window of length `len`.
pub fn covering_windows(len: usize, win: usize) -> Result<Vec<WindowView>> {
    if len == 0 {
        return Err(Error::invalid("empty series"));
    }
    let win = win.min(len);
    let mut windows = make_windows(len, win, win)?;
    let last_end = windows.last().map_or(0, WindowView::end);
    if last_end < len {
        windows.push(WindowView {
            start: len - win,
            length: win,
        });
    }
    Ok(windows)
}

/// Parameters of the synthetic generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub length: usize,
    pub dim: usize,
    /// Fraction of test points covered by anomaly segments, in (0, 0.5).
    pub anomaly_ratio: f64,
    pub seed: u64,
    /// Standard deviation of the additive Gaussian noise.
    pub noise: f64,
    /// Sinusoid amplitude; anomalies are offset by 3 to 5 times this.
    pub amplitude: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            length: 2000,
            dim: 2,
            anomaly_ratio: 0.1,
            seed: 7,
            noise: 0.05,
            amplitude: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnomalyKind {
    Spike,
    LevelShift,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalySegment {
    pub start: usize,
    pub length: usize,
    pub kind: AnomalyKind,
    pub channels: Vec<usize>,
}

/// A generated series together with the anomaly-free signal it was built from.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub dataset: TimeSeriesDataset,
    pub baseline: Vec<f64>,
    pub segments: Vec<AnomalySegment>,
}

struct Channel {
    period: f64,
    phase: f64,
    harmonic: f64,
}

const MIN_SEGMENT: usize = 5;
const MAX_SEGMENT: usize = 20;

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if !(self.anomaly_ratio > 0.0 && self.anomaly_ratio < 0.5) {
            return Err(Error::invalid(format!(
                "anomaly ratio {} outside (0, 0.5)",
                self.anomaly_ratio
            )));
        }
        if self.length < 2 || self.dim == 0 {
            return Err(Error::invalid("synthetic series needs length >= 2 and dim >= 1"));
        }
        if !(self.noise >= 0.0 && self.amplitude > 0.0) {
            return Err(Error::invalid("noise must be >= 0 and amplitude > 0"));
        }
        Ok(())
    }

    fn channels(&self, rng: &mut ChaCha8Rng) -> Vec<Channel> {
        (0..self.dim)
            .map(|_| Channel {
                period: rng.random_range(20.0..60.0),
                phase: rng.random_range(0.0..std::f64::consts::TAU),
                harmonic: rng.random_range(0.0..0.3),
            })
            .collect()
    }

    fn baseline(&self, channels: &[Channel], offset: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let noise = Normal::new(0.0, self.noise).unwrap();
        let mut values = Vec::with_capacity(self.length * self.dim);
        for t in offset..offset + self.length {
            for ch in channels {
                let w = std::f64::consts::TAU * t as f64 / ch.period + ch.phase;
                let clean = self.amplitude * ((1.0 - ch.harmonic) * w.sin() + ch.harmonic * (2.0 * w).sin());
                values.push(clean + noise.sample(rng));
            }
        }
        values
    }
}

/// Anomaly-injected series with labels.
pub fn synth_dataset(spec: &SynthSpec) -> Result<TimeSeriesDataset> {
    Ok(synth_components(spec)?.dataset)
}

/// Normal-only training series and a labelled test series sharing the same
/// sinusoid parameters. The test series continues the training one in time.
pub fn synth_train_test(spec: &SynthSpec) -> Result<(TimeSeriesDataset, TimeSeriesDataset)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let channels = spec.channels(&mut rng);
    let train_values = spec.baseline(&channels, 0, &mut rng);
    let train = TimeSeriesDataset::new("synth-train", train_values, spec.dim, None)?;
    let test = inject(spec, &channels, spec.length, &mut rng)?.dataset;
    Ok((train, test))
}

pub fn synth_components(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let channels = spec.channels(&mut rng);
    inject(spec, &channels, 0, &mut rng)
}

fn inject(spec: &SynthSpec, channels: &[Channel], offset: usize, rng: &mut ChaCha8Rng) -> Result<SynthOutput> {
    let baseline = spec.baseline(channels, offset, rng);
    let n = spec.length;
    let target = ((spec.anomaly_ratio * n as f64).round() as usize).max(1);

    let mut lengths = Vec::new();
    let mut remaining = target;
    while remaining > 0 {
        let l = if remaining <= MAX_SEGMENT {
            remaining
        } else {
            rng.random_range(MIN_SEGMENT..=MAX_SEGMENT).min(remaining - MIN_SEGMENT)
        };
        lengths.push(l);
        remaining -= l;
    }
    // Gaps between segments are at least one point so segments stay distinct.
    let m = lengths.len();
    let slack = n
        .checked_sub(target + m.saturating_sub(1))
        .ok_or_else(|| Error::invalid("series too short for the requested anomaly ratio"))?;
    let mut cuts: Vec<usize> = (0..m).map(|_| rng.random_range(0..=slack)).collect();
    cuts.sort_unstable();

    let mut values = baseline.clone();
    let mut labels = vec![0u8; n];
    let mut segments = Vec::with_capacity(m);
    let mut used = 0;
    for (i, (&len, &cut)) in lengths.iter().zip(&cuts).enumerate() {
        let start = used + cut + i;
        used += len;
        let kind = if rng.random_bool(0.5) {
            AnomalyKind::Spike
        } else {
            AnomalyKind::LevelShift
        };
        let mut chans: Vec<usize> = (0..spec.dim).filter(|_| rng.random_bool(0.5)).collect();
        if chans.is_empty() {
            chans.push(rng.random_range(0..spec.dim));
        }
        let shift_sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let shift = shift_sign * spec.amplitude * rng.random_range(3.0..5.0);
        for t in start..start + len {
            labels[t] = 1;
            for &c in &chans {
                let delta = match kind {
                    AnomalyKind::LevelShift => shift,
                    AnomalyKind::Spike => {
                        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                        sign * spec.amplitude * rng.random_range(3.0..5.0)
                    }
                };
                values[t * spec.dim + c] += delta;
            }
        }
        segments.push(AnomalySegment {
            start,
            length: len,
            kind,
            channels: chans,
        });
    }
    let dataset = TimeSeriesDataset::new("synth-test", values, spec.dim, Some(labels))?;
    Ok(SynthOutput {
        dataset,
        baseline,
        segments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_plain_and_labelled_csv() {
        let ds = parse_csv("1,2\n3,4\n5,6", false, "x").unwrap();
        assert_eq!((ds.len(), ds.dim()), (3, 2));
        assert_eq!(ds.row(1), &[3.0, 4.0]);
        let ds = parse_csv("1,2,0\n3,4,1\n5,6,0\n", true, "x").unwrap();
        assert_eq!(ds.labels().unwrap(), &[0, 1, 0]);
        assert_eq!(ds.dim(), 2);
    }

    #[test]
    fn rejects_malformed_csv() {
        let (line, msg) = parse_csv("1,2\n1,x\n", false, "x").unwrap_err();
        assert_eq!(line, 2);
        assert!(msg.contains("non-numeric"));
        assert!(parse_csv("1,2\n1,2,3\n", false, "x").unwrap_err().1.contains("ragged"));
        assert!(parse_csv("1,2,2\n", true, "x").unwrap_err().1.contains("label"));
        assert!(parse_csv("", false, "x").is_err());
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let err = load_csv(Path::new("/nonexistent/definitely.csv"), false).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn normalizer_examples() {
        let ds = TimeSeriesDataset::new("x", vec![0.0, 5.0, 2.0, 5.0], 2, None).unwrap();
        let stats = fit_normalizer(&ds).unwrap();
        assert_eq!(stats.mean, vec![1.0, 5.0]);
        assert_eq!(stats.std, vec![1.0, STD_FLOOR]);
        let z = stats.apply(&ds).unwrap();
        assert_eq!(z.values(), &[-1.0, 0.0, 1.0, 0.0]);

        let test = TimeSeriesDataset::new("t", vec![3.0, 5.0], 2, None).unwrap();
        assert_eq!(stats.apply(&test).unwrap().values()[0], 2.0);

        let single = TimeSeriesDataset::new("s", vec![1.0], 1, None).unwrap();
        assert!(fit_normalizer(&single).is_err());
    }

    #[test]
    fn window_counts() {
        assert_eq!(make_windows(250, 100, 100).unwrap().iter().map(|w| w.start).collect::<Vec<_>>(), vec![0, 100]);
        assert_eq!(make_windows(100, 100, 1).unwrap().len(), 1);
        assert_eq!(make_windows(5, 2, 1).unwrap().len(), 4);
        assert!(make_windows(5, 6, 1).is_err());
    }

    #[test]
    fn covering_windows_reach_the_end() {
        let w = covering_windows(250, 100).unwrap();
        assert_eq!(w.iter().map(|w| w.start).collect::<Vec<_>>(), vec![0, 100, 150]);
        let w = covering_windows(30, 100).unwrap();
        assert_eq!(w, vec![WindowView { start: 0, length: 30 }]);
    }

    #[test]
    fn synth_is_deterministic() {
        let spec = SynthSpec { seed: 7, ..Default::default() };
        assert_eq!(synth_dataset(&spec).unwrap(), synth_dataset(&spec).unwrap());
        let other = SynthSpec { seed: 8, ..Default::default() };
        assert_ne!(synth_dataset(&spec).unwrap(), synth_dataset(&other).unwrap());
    }

    #[test]
    fn synth_label_count() {
        let spec = SynthSpec {
            length: 1000,
            anomaly_ratio: 0.1,
            ..Default::default()
        };
        let sum: u32 = synth_dataset(&spec).unwrap().labels().unwrap().iter().map(|&l| l as u32).sum();
        assert!((80..=120).contains(&sum), "label sum {sum}");
    }

    #[test]
    fn synth_rejects_bad_ratio() {
        for r in [0.0, 0.5, 0.6, -0.1] {
            let spec = SynthSpec { anomaly_ratio: r, ..Default::default() };
            assert!(synth_dataset(&spec).is_err());
        }
    }

    #[test]
    fn noiseless_anomalies_stand_out() {
        let spec = SynthSpec {
            length: 500,
            dim: 1,
            noise: 0.0,
            ..Default::default()
        };
        let out = synth_components(&spec).unwrap();
        let labels = out.dataset.labels().unwrap();
        for t in 0..spec.length {
            let diff = (out.dataset.values()[t] - out.baseline[t]).abs();
            if labels[t] == 1 {
                assert!(diff >= 3.0 * spec.amplitude, "t={t} diff={diff}");
            } else {
                assert_eq!(diff, 0.0);
            }
        }
    }

    #[test]
    fn train_split_is_anomaly_free() {
        let (train, test) = synth_train_test(&SynthSpec::default()).unwrap();
        assert!(train.labels().is_none());
        assert_eq!(train.len(), test.len());
        assert!(train.values().iter().all(|v| v.abs() < 1.5));
    }

    proptest! {
        #[test]
        fn labels_match_segments(seed in 0u64..500, ratio in 0.01f64..0.45, len in 200usize..800) {
            let spec = SynthSpec { length: len, anomaly_ratio: ratio, seed, ..Default::default() };
            let out = synth_components(&spec).unwrap();
            let mut from_segments = vec![0u8; len];
            for s in &out.segments {
                for t in s.start..s.start + s.length {
                    prop_assert_eq!(from_segments[t], 0);
                    from_segments[t] = 1;
                }
            }
            prop_assert_eq!(out.dataset.labels().unwrap(), &from_segments[..]);
        }

        #[test]
        fn normalization_round_trips(vals in proptest::collection::vec(-1e3f64..1e3, 6..60)) {
            let n = vals.len() / 3 * 3;
            let ds = TimeSeriesDataset::new("p", vals[..n].to_vec(), 3, None).unwrap();
            let stats = fit_normalizer(&ds).unwrap();
            let z = stats.apply(&ds).unwrap();
            for c in 0..3 {
                let m = z.channel(c).sum::<f64>() / z.len() as f64;
                prop_assert!(m.abs() < 1e-9);
            }
            let back = stats.invert(&z).unwrap();
            for (a, b) in back.values().iter().zip(ds.values()) {
                prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
            }
        }

        #[test]
        fn windows_stay_in_bounds(len in 1usize..300, win in 1usize..100, stride in 1usize..120) {
            prop_assume!(win <= len);
            let w = make_windows(len, win, stride).unwrap();
            prop_assert_eq!(w.len(), (len - win) / stride + 1);
            for pair in w.windows(2) {
                prop_assert_eq!(pair[0].end() <= pair[1].start, stride >= win);
            }
            prop_assert!(w.iter().all(|v| v.end() <= len));
        }
    }
}
