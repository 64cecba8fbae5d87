//! Trained model state and its versioned text artifact.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! save/load cycle reproduces every parameter bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use crate::embedder::{Embedder, EmbedderConfig, EmbedderKind};
use crate::error::{Error, Result};
use crate::multi::MultiClusterState;
use crate::single::ClusterState;
use crate::timeseries::NormalizationStats;

pub const ARTIFACT_HEADER: &str = "madcluster-model";
pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum ClusterModel {
    Single(ClusterState),
    Multi(MultiClusterState),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub embedder: EmbedderConfig,
    pub params: Vec<f64>,
    pub cluster: ClusterModel,
    pub window: usize,
    pub normalization: Option<NormalizationStats>,
}

impl ModelState {
    pub fn build_embedder(&self) -> Result<Embedder> {
        let e = Embedder::new(self.embedder.clone())?;
        if e.num_params() != self.params.len() {
            return Err(Error::Artifact(format!(
                "embedder expects {} parameters, model has {}",
                e.num_params(),
                self.params.len()
            )));
        }
        Ok(e)
    }

    pub fn mode_name(&self) -> &'static str {
        match self.cluster {
            ClusterModel::Single(_) => "single",
            ClusterModel::Multi(_) => "multi",
        }
    }

    pub fn centers(&self) -> Vec<Vec<f64>> {
        match &self.cluster {
            ClusterModel::Single(s) => vec![s.center.clone()],
            ClusterModel::Multi(m) => m.centers.clone(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let e = &self.embedder;
        let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ");
        writeln!(out, "{ARTIFACT_HEADER} {ARTIFACT_VERSION}").unwrap();
        writeln!(out, "mode {}", self.mode_name()).unwrap();
        writeln!(out, "window {}", self.window).unwrap();
        writeln!(out, "embedder.kind {}", e.kind.as_str()).unwrap();
        writeln!(out, "embedder.input_dim {}", e.input_dim).unwrap();
        writeln!(out, "embedder.hidden_dim {}", e.hidden_dim).unwrap();
        writeln!(out, "embedder.layers {}", e.layers).unwrap();
        let dil: Vec<String> = e.dilations.iter().map(usize::to_string).collect();
        writeln!(out, "embedder.dilations {}", dil.join(" ")).unwrap();
        writeln!(out, "embedder.bias {}", u8::from(e.bias)).unwrap();
        match &self.normalization {
            Some(n) => {
                writeln!(out, "norm.mean {}", join(&n.mean)).unwrap();
                writeln!(out, "norm.std {}", join(&n.std)).unwrap();
            }
            None => writeln!(out, "norm none").unwrap(),
        }
        match &self.cluster {
            ClusterModel::Single(s) => {
                writeln!(out, "nu_raw {}", s.nu_raw).unwrap();
                writeln!(out, "nu {}", s.nu()).unwrap();
                writeln!(out, "radius_sq {}", s.radius_sq).unwrap();
                writeln!(out, "rho {}", s.rho).unwrap();
                writeln!(out, "lambda {}", s.lambda).unwrap();
                writeln!(out, "tau {}", s.tau).unwrap();
                writeln!(out, "centers 1").unwrap();
                writeln!(out, "center {}", join(&s.center)).unwrap();
            }
            ClusterModel::Multi(m) => {
                writeln!(out, "lambda {}", m.lambda).unwrap();
                writeln!(out, "centers {}", m.k()).unwrap();
                for c in &m.centers {
                    writeln!(out, "center {}", join(c)).unwrap();
                }
            }
        }
        writeln!(out, "params {}", self.params.len()).unwrap();
        for chunk in self.params.chunks(8) {
            writeln!(out, "{}", join(chunk)).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let bad = |msg: String| Error::Artifact(msg);

        let header = lines.next().ok_or_else(|| bad("empty artifact".into()))?;
        let mut hp = header.split_whitespace();
        if hp.next() != Some(ARTIFACT_HEADER) {
            return Err(bad(format!("not a model artifact: {header:?}")));
        }
        let version: u32 = hp
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("missing version".into()))?;
        if version != ARTIFACT_VERSION {
            return Err(bad(format!(
                "artifact version {version}, this build reads {ARTIFACT_VERSION}"
            )));
        }

        let mut next_kv = |key: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| bad(format!("missing {key}")))?;
            let (k, v) = line.split_once(' ').unwrap_or((line, ""));
            if k != key {
                return Err(bad(format!("expected {key}, found {k}")));
            }
            Ok(v.trim().to_string())
        };
        fn num<T: std::str::FromStr>(s: &str, key: &str) -> Result<T> {
            s.parse().map_err(|_| Error::Artifact(format!("bad value for {key}: {s:?}")))
        }
        fn floats(s: &str, key: &str) -> Result<Vec<f64>> {
            s.split_whitespace().map(|x| num(x, key)).collect()
        }

        let mode = next_kv("mode")?;
        let window = num(&next_kv("window")?, "window")?;
        let kind: EmbedderKind = next_kv("embedder.kind")?.parse()?;
        let input_dim = num(&next_kv("embedder.input_dim")?, "input_dim")?;
        let hidden_dim = num(&next_kv("embedder.hidden_dim")?, "hidden_dim")?;
        let layers = num(&next_kv("embedder.layers")?, "layers")?;
        let dilations = next_kv("embedder.dilations")?
            .split_whitespace()
            .map(|x| num(x, "dilations"))
            .collect::<Result<Vec<usize>>>()?;
        let bias = num::<u8>(&next_kv("embedder.bias")?, "bias")? == 1;
        let embedder = EmbedderConfig {
            kind,
            input_dim,
            hidden_dim,
            layers,
            dilations,
            bias,
        };

        // norm is either "norm none" or a mean/std pair
        let norm_line = next_kv_any(&mut lines)?;
        let normalization = match norm_line.0.as_str() {
            "norm" if norm_line.1 == "none" => None,
            "norm.mean" => {
                let mean = floats(&norm_line.1, "norm.mean")?;
                let (k, v) = next_kv_any(&mut lines)?;
                if k != "norm.std" {
                    return Err(bad(format!("expected norm.std, found {k}")));
                }
                Some(NormalizationStats {
                    mean,
                    std: floats(&v, "norm.std")?,
                })
            }
            k => return Err(bad(format!("expected norm, found {k}"))),
        };

        let mut next_kv = |key: &str| -> Result<String> {
            let (k, v) = next_kv_any(&mut lines)?;
            if k != key {
                return Err(bad(format!("expected {key}, found {k}")));
            }
            Ok(v)
        };
        let cluster = match mode.as_str() {
            "single" => {
                let nu_raw = num(&next_kv("nu_raw")?, "nu_raw")?;
                next_kv("nu")?;
                let radius_sq = num(&next_kv("radius_sq")?, "radius_sq")?;
                let rho = num(&next_kv("rho")?, "rho")?;
                let lambda = num(&next_kv("lambda")?, "lambda")?;
                let tau = num(&next_kv("tau")?, "tau")?;
                let k: usize = num(&next_kv("centers")?, "centers")?;
                if k != 1 {
                    return Err(bad(format!("single mode with {k} centers")));
                }
                let center = floats(&next_kv("center")?, "center")?;
                ClusterModel::Single(ClusterState {
                    center,
                    nu_raw,
                    radius_sq,
                    rho,
                    lambda,
                    tau,
                })
            }
            "multi" => {
                let lambda = num(&next_kv("lambda")?, "lambda")?;
                let k: usize = num(&next_kv("centers")?, "centers")?;
                let centers = (0..k)
                    .map(|_| floats(&next_kv("center")?, "center"))
                    .collect::<Result<Vec<_>>>()?;
                ClusterModel::Multi(MultiClusterState { centers, lambda })
            }
            other => return Err(bad(format!("unknown mode {other:?}"))),
        };
        let n: usize = num(&next_kv("params")?, "params")?;
        let mut params = Vec::with_capacity(n);
        for line in lines {
            params.extend(floats(line, "params")?);
        }
        if params.len() != n {
            return Err(bad(format!("expected {n} parameters, found {}", params.len())));
        }
        let model = ModelState {
            embedder,
            params,
            cluster,
            window,
            normalization,
        };
        model.build_embedder()?;
        for c in model.centers() {
            if c.len() != model.embedder.hidden_dim {
                return Err(bad("center dimension differs from hidden_dim".into()));
            }
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn next_kv_any<'a>(lines: &mut impl Iterator<Item = &'a str>) -> Result<(String, String)> {
    let line = lines
        .next()
        .ok_or_else(|| Error::Artifact("truncated artifact".into()))?;
    let (k, v) = line.split_once(' ').unwrap_or((line, ""));
    Ok((k.to_string(), v.trim().to_string()))
}
