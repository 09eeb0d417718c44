//! Experiment configuration: JSON with fixed sections, dotted-path overrides
//! and validation before any computation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use surrogate_bvm::fisher::FisherDerivative;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    /// Uniform prior box; defaults to `θ0 ± max(1, θ0/8)`.
    #[serde(default)]
    pub prior: Option<BoxConfig>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub fisher: FisherConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    SquareIntegral(SquareIntConfig),
    Schrodinger(SchrodingerConfig),
    Parabolic(ParabolicConfig),
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::SquareIntegral(SquareIntConfig::default())
    }
}

impl ModelConfig {
    pub fn theta0(&self) -> f64 {
        match self {
            Self::SquareIntegral(c) => c.theta0,
            Self::Schrodinger(c) => c.theta0,
            Self::Parabolic(c) => c.theta0,
        }
    }

    pub fn p(&self) -> usize {
        match self {
            Self::SquareIntegral(c) => c.p,
            Self::Schrodinger(c) => c.p,
            Self::Parabolic(c) => c.p,
        }
    }

    pub fn lambda_scale(&self) -> f64 {
        match self {
            Self::SquareIntegral(c) => c.lambda_scale,
            Self::Schrodinger(c) => c.lambda_scale,
            Self::Parabolic(c) => c.lambda_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SquareIntConfig {
    pub theta0: f64,
    pub p: usize,
    pub lambda_scale: f64,
    /// Integration limits; observation `k` uses `z[k mod len]`.
    pub z: Vec<f64>,
    pub n_steps: usize,
}

impl Default for SquareIntConfig {
    fn default() -> Self {
        Self {
            theta0: 2.0,
            p: 3,
            lambda_scale: 0.01,
            z: vec![1.0],
            n_steps: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchrodingerConfig {
    pub theta0: f64,
    pub p: usize,
    pub lambda_scale: f64,
    /// Field resolution `n × n`.
    pub grid_n: usize,
}

impl Default for SchrodingerConfig {
    fn default() -> Self {
        Self {
            theta0: 2.0,
            p: 1,
            lambda_scale: 0.01,
            grid_n: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParabolicConfig {
    pub theta0: f64,
    pub p: usize,
    pub lambda_scale: f64,
    pub t_max: f64,
    /// Observation times, equally spaced from `0.1 t_max` to `0.9 t_max`.
    pub t_points: usize,
    pub source_nodes: usize,
}

impl Default for ParabolicConfig {
    fn default() -> Self {
        Self {
            theta0: 1.0,
            p: 3,
            lambda_scale: 0.01,
            t_max: 0.5,
            t_points: 5,
            source_nodes: 100,
        }
    }
}

impl ParabolicConfig {
    pub fn times(&self) -> Vec<f64> {
        let n = self.t_points;
        if n == 1 {
            return vec![0.5 * self.t_max];
        }
        (0..n)
            .map(|i| self.t_max * (0.1 + 0.8 * i as f64 / (n - 1) as f64))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    /// Batch size for `simulate` and `posterior`.
    pub n: usize,
    pub seed: u64,
    /// Batch sizes for `bvm-sweep`.
    pub n_values: Vec<usize>,
    pub replicates: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            n: 250,
            seed: 1,
            n_values: vec![50, 250, 1250],
            replicates: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Grid bounds; default to the prior box.
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub nodes: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            lower: None,
            upper: None,
            nodes: 4001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    /// Feynman-Kac paths per quadrature node.
    pub paths: usize,
    pub dt: f64,
    /// Latent draws behind Monte Carlo moments.
    pub fields: usize,
    /// Quadrature nodes per axis, boundary included.
    pub quad_grid: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            paths: 32,
            dt: 1e-3,
            fields: 100,
            quad_grid: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FisherConfig {
    pub n_outer: usize,
    pub n_inner: usize,
    pub shared_inner: bool,
    pub derivative: DerivativeConfig,
    /// θ0 grid; defaults per model.
    pub theta0_values: Option<Vec<f64>>,
    /// Observation time index for the parabolic model.
    pub time_index: usize,
}

impl Default for FisherConfig {
    fn default() -> Self {
        Self {
            n_outer: 10_000,
            n_inner: 10_000,
            shared_inner: true,
            derivative: DerivativeConfig::Analytic,
            theta0_values: None,
            time_index: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeConfig {
    Analytic,
    CentralDifference,
}

impl DerivativeConfig {
    pub fn mode(self) -> FisherDerivative {
        match self {
            Self::Analytic => FisherDerivative::Analytic,
            Self::CentralDifference => surrogate_bvm::fisher::CENTRAL_DIFFERENCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    /// Reads `path` (or starts from `{}`), applies `key=value` overrides and
    /// the seed/output flags, then deserializes and validates.
    pub fn resolve(
        path: Option<&Path>,
        overrides: &[String],
        seed: Option<u64>,
        out: Option<&Path>,
    ) -> Result<Self, CliError> {
        let mut doc = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => Value::Object(Default::default()),
        };
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        if let Some(s) = seed {
            set_path(&mut doc, "sampling.seed", Value::from(s))?;
        }
        if let Some(o) = out {
            set_path(
                &mut doc,
                "output.directory",
                Value::from(o.to_string_lossy().into_owned()),
            )?;
        }
        // a model section without `kind` means the square-integral example
        if let Some(Value::Object(m)) = doc.get_mut("model") {
            m.entry("kind")
                .or_insert_with(|| Value::from("square_integral"));
        }
        let mut cfg: Self =
            serde_json::from_value(doc).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        // record defaults explicitly so meta.json shows what ran
        let (lo, hi) = cfg.grid_bounds();
        cfg.prior = Some(cfg.prior_box());
        cfg.grid.lower = Some(lo);
        cfg.grid.upper = Some(hi);
        cfg.fisher.theta0_values = Some(cfg.theta0_values());
        Ok(cfg)
    }

    pub fn prior_box(&self) -> BoxConfig {
        self.prior.clone().unwrap_or_else(|| {
            let t = self.model.theta0();
            let w = (t.abs() / 8.0).max(1.0);
            BoxConfig {
                lower: t - w,
                upper: t + w,
            }
        })
    }

    pub fn grid_bounds(&self) -> (f64, f64) {
        let b = self.prior_box();
        (
            self.grid.lower.unwrap_or(b.lower),
            self.grid.upper.unwrap_or(b.upper),
        )
    }

    pub fn theta0_values(&self) -> Vec<f64> {
        self.fisher
            .theta0_values
            .clone()
            .unwrap_or_else(|| match self.model {
                ModelConfig::SquareIntegral(_) => (0..=14).map(|k| 5.0 * k as f64).collect(),
                ModelConfig::Schrodinger(_) => (0..=10).map(|k| k as f64).collect(),
                ModelConfig::Parabolic(_) => (0..=4).map(|k| 0.5 * k as f64).collect(),
            })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        let t0 = self.model.theta0();
        if !t0.is_finite() {
            return bad("model.theta0 must be finite".into());
        }
        if !(self.model.lambda_scale() > 0.0) {
            return bad("model.lambda_scale must be positive".into());
        }
        let p = self.model.p();
        match &self.model {
            ModelConfig::SquareIntegral(c) => {
                if !(1..=3).contains(&p) {
                    return bad("model.p must be 1, 2 or 3 for square_integral".into());
                }
                if c.z.is_empty() || c.z.iter().any(|z| !(*z > 0.0)) {
                    return bad("model.z must be a non-empty list of positive numbers".into());
                }
                if c.n_steps < 2 {
                    return bad("model.n_steps must be at least 2".into());
                }
            }
            ModelConfig::Schrodinger(c) => {
                if !(1..=16).contains(&p) {
                    return bad("model.p must lie in 1..=16 for schrodinger".into());
                }
                if c.grid_n < 2 {
                    return bad("model.grid_n must be at least 2".into());
                }
            }
            ModelConfig::Parabolic(c) => {
                if p == 0 || p > self.mc.quad_grid {
                    return bad("model.p must lie in 1..=mc.quad_grid for parabolic".into());
                }
                if !(c.t_max > 0.0) || c.t_points == 0 || c.source_nodes < 2 {
                    return bad(
                        "model.t_max, model.t_points and model.source_nodes must be positive"
                            .into(),
                    );
                }
                if self.fisher.time_index >= c.t_points {
                    return bad("fisher.time_index must be below model.t_points".into());
                }
            }
        }
        if self.sampling.n == 0 || self.sampling.replicates == 0 {
            return bad("sampling.n and sampling.replicates must be positive".into());
        }
        if self.sampling.n_values.is_empty() || self.sampling.n_values.contains(&0) {
            return bad("sampling.n_values must be a non-empty list of positive sizes".into());
        }
        let b = self.prior_box();
        if !(b.upper > b.lower) || !b.lower.is_finite() || !b.upper.is_finite() {
            return bad("prior box must satisfy lower < upper".into());
        }
        let (lo, hi) = self.grid_bounds();
        if !(hi > lo) || self.grid.nodes < 2 {
            return bad("grid needs lower < upper and at least 2 nodes".into());
        }
        if !(self.mc.dt > 0.0) || self.mc.paths == 0 || self.mc.fields < 4 {
            return bad("mc.dt and mc.paths must be positive and mc.fields at least 4".into());
        }
        if self.mc.quad_grid < 3 {
            return bad("mc.quad_grid must be at least 3".into());
        }
        if matches!(self.model, ModelConfig::Schrodinger(_)) && self.mc.quad_grid.is_multiple_of(2)
        {
            return bad("mc.quad_grid must be odd for schrodinger".into());
        }
        if self.fisher.n_outer < 2 || self.fisher.n_inner < 2 {
            return bad("fisher.n_outer and fisher.n_inner must be at least 2".into());
        }
        if self.theta0_values().iter().any(|t| !t.is_finite()) || self.theta0_values().is_empty() {
            return bad("fisher.theta0_values must be finite and non-empty".into());
        }
        Ok(())
    }
}

/// `a.b.c=value`; the value is parsed as JSON and falls back to a string.
pub fn apply_override(doc: &mut Value, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{spec}` is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    set_path(doc, key.trim(), value)
}

fn set_path(doc: &mut Value, key: &str, value: Value) -> Result<(), CliError> {
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(CliError::Config(format!("malformed override key `{key}`")));
    }
    let mut cur = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = match cur {
            Value::Object(m) => m,
            Value::Null => {
                *cur = Value::Object(Default::default());
                cur.as_object_mut().expect("just set")
            }
            _ => {
                return Err(CliError::Config(format!(
                    "`{key}` descends into a non-object"
                )))
            }
        };
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    unreachable!("loop returns on the last component")
}
