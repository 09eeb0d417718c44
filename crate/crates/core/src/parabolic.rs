//! Parabolic example with time-indexed observations.
//!
//! `u_θ(t, x)` solves the backward problem `∂_t u + 𝒜u − c_θ u + f = 0` on
//! `(0, t_max) × O` with `u = g_θ` on the parabolic boundary, where
//! `𝒜 = ½ Σ a_{ij} ∂_i∂_j + b·∇`. The Feynman-Kac representation is
//!
//! `u(t,x) = E[g_θ(τ, X_τ) e^{−∫_t^τ c_θ} + ∫_t^τ f(X_s) e^{−∫_t^s c_θ} ds]`
//!
//! with `τ` the first exit of `(s, X_s)` from `[t, t_max) × O`. Observation
//! `i` collects Legendre coefficients of `u_θ(t_i, ·)` for a random source `f`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::legendre::{LegendreBasis, LegendreProjector};
use crate::linalg::{min_eigenvalue, psd_sqrt, Matrix};
use crate::mc::{jackknife_mean_cov, McEstimate, McScalar};
use crate::model::{
    DerivativeMode, MomentDerivative, MomentModel, MomentPair, ObservationGenerator, ThetaVector,
};
use crate::rng::{RandomStream, StreamRng};
use crate::schrodinger::{ensemble_moments, MomentEstimates};

/// Potential `c_θ(x) ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Potential {
    Constant(f64),
    /// `c_θ = θ²`.
    ThetaSquared,
}

impl Potential {
    #[inline]
    pub fn value(&self, theta: f64) -> f64 {
        match *self {
            Self::Constant(c) => c,
            Self::ThetaSquared => theta * theta,
        }
    }

    #[inline]
    pub fn dtheta(&self, theta: f64) -> f64 {
        match *self {
            Self::Constant(_) => 0.0,
            Self::ThetaSquared => 2.0 * theta,
        }
    }
}

/// Boundary and terminal data `g_θ(t, x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BoundaryData {
    Constant(f64),
    /// `g_θ(t, x) = 1 + θ x₁`.
    OnePlusThetaX,
}

impl BoundaryData {
    #[inline]
    pub fn value(&self, theta: f64, x: &[f64]) -> f64 {
        match *self {
            Self::Constant(c) => c,
            Self::OnePlusThetaX => 1.0 + theta * x[0],
        }
    }

    #[inline]
    pub fn dtheta(&self, _theta: f64, x: &[f64]) -> f64 {
        match *self {
            Self::Constant(_) => 0.0,
            Self::OnePlusThetaX => x[0],
        }
    }

    pub fn sup_abs(&self, theta: f64, lower: &[f64], upper: &[f64]) -> f64 {
        match *self {
            Self::Constant(c) => c.abs(),
            Self::OnePlusThetaX => (1.0 + theta * lower[0])
                .abs()
                .max((1.0 + theta * upper[0]).abs()),
        }
    }
}

/// Source term `f(x) ≥ 0`, a function of the first coordinate.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Zero,
    Constant(f64),
    /// Values on a uniform grid of `[lower₁, upper₁]`, linearly interpolated.
    Grid {
        lower: f64,
        upper: f64,
        values: Vec<f64>,
    },
}

impl Source {
    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Constant(c) => *c,
            Self::Grid {
                lower,
                upper,
                values,
            } => {
                let n = values.len();
                let s = ((x[0] - lower) / (upper - lower)).clamp(0.0, 1.0) * (n - 1) as f64;
                let j = (s as usize).min(n - 2);
                let w = s - j as f64;
                (1.0 - w) * values[j] + w * values[j + 1]
            }
        }
    }

    pub fn sup(&self) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Constant(c) => c.abs(),
            Self::Grid { values, .. } => values.iter().fold(0.0, |a, v| a.max(v.abs())),
        }
    }
}

/// Draws `f(x) = exp(B(x))` on `n` nodes of `[lower, upper]`, `B` a Brownian
/// motion started at 0.
pub fn sample_source(stream: RandomStream, lower: f64, upper: f64, n: usize) -> Result<Source> {
    if n < 2 || !(upper > lower) {
        return Err(Error::invalid(
            "source grid needs n >= 2 on a non-empty interval",
        ));
    }
    let sd = ((upper - lower) / (n - 1) as f64).sqrt();
    let mut rng = stream.rng();
    let mut b = 0.0;
    let mut values = Vec::with_capacity(n);
    values.push(1.0);
    for _ in 1..n {
        b += sd * rng.normal();
        values.push(b.exp());
    }
    Ok(Source::Grid {
        lower,
        upper,
        values,
    })
}

/// Problem data.
#[derive(Debug, Clone, PartialEq)]
pub struct ParabolicSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub t_max: f64,
    pub diffusion: Matrix<f64>,
    pub drift: Vec<f64>,
    pub potential: Potential,
    pub boundary: BoundaryData,
    pub times: Vec<f64>,
    sigma: Matrix<f64>,
}

impl ParabolicSpec {
    /// Validates the data and factors `a = σσᵀ`. Requires uniform ellipticity.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        lower: Vec<f64>,
        upper: Vec<f64>,
        t_max: f64,
        diffusion: Matrix<f64>,
        drift: Vec<f64>,
        potential: Potential,
        boundary: BoundaryData,
        times: Vec<f64>,
    ) -> Result<Self> {
        let spec = Self::new_unchecked(
            lower, upper, t_max, diffusion, drift, potential, boundary, times,
        )?;
        let lmin = min_eigenvalue(&spec.diffusion)?;
        if !(lmin > 0.0) {
            return Err(Error::invalid(format!(
                "diffusion must be positive definite (smallest eigenvalue {lmin:e})"
            )));
        }
        Ok(spec)
    }

    /// As [`ParabolicSpec::new`] but accepts a degenerate diffusion; used to
    /// test the path simulator.
    #[allow(clippy::too_many_arguments)]
    pub fn new_unchecked(
        lower: Vec<f64>,
        upper: Vec<f64>,
        t_max: f64,
        diffusion: Matrix<f64>,
        drift: Vec<f64>,
        potential: Potential,
        boundary: BoundaryData,
        times: Vec<f64>,
    ) -> Result<Self> {
        let q = lower.len();
        if q == 0
            || upper.len() != q
            || drift.len() != q
            || diffusion.rows() != q
            || diffusion.cols() != q
        {
            return Err(Error::dim(
                "domain, drift and diffusion must share dimension q",
            ));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(u > l)) {
            return Err(Error::invalid("domain box must be non-empty"));
        }
        if !(t_max > 0.0) {
            return Err(Error::invalid("t_max must be positive"));
        }
        if times.iter().any(|&t| !(t > 0.0 && t < t_max)) {
            return Err(Error::invalid("observation times must lie in (0, t_max)"));
        }
        if let Potential::Constant(c) = potential {
            if c < 0.0 {
                return Err(Error::invalid("potential must be nonnegative"));
            }
        }
        let sigma = psd_sqrt(&diffusion)?;
        Ok(Self {
            lower,
            upper,
            t_max,
            diffusion,
            drift,
            potential,
            boundary,
            times,
            sigma,
        })
    }

    /// Domain `(0,1)`, `a = 1`, `b = 0`, `c_θ = θ²`, `g_θ = 1 + θx`,
    /// `t_max = 0.5`, five observation times from 0.05 to 0.45.
    pub fn reference() -> Self {
        let times = (0..5).map(|i| 0.05 + 0.1 * i as f64).collect();
        Self::new(
            vec![0.0],
            vec![1.0],
            0.5,
            Matrix::identity(1),
            vec![0.0],
            Potential::ThetaSquared,
            BoundaryData::OnePlusThetaX,
            times,
        )
        .expect("reference instance is valid")
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn sigma(&self) -> &Matrix<f64> {
        &self.sigma
    }

    fn inside(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&v, (&l, &u))| v > l && v < u)
    }

    /// Fraction of the step `p → q` at which it leaves the box.
    fn exit_fraction(&self, p: &[f64], q: &[f64]) -> f64 {
        let mut s: f64 = 1.0;
        for k in 0..p.len() {
            let d = q[k] - p[k];
            if q[k] <= self.lower[k] {
                s = s.min((p[k] - self.lower[k]) / -d);
            } else if q[k] >= self.upper[k] {
                s = s.min((self.upper[k] - p[k]) / d);
            }
        }
        s.clamp(0.0, 1.0)
    }

    #[inline]
    fn step(&self, p: &[f64], h: f64, rng: &mut StreamRng, xi: &mut [f64], out: &mut [f64]) {
        let q = p.len();
        rng.fill_normal(xi);
        let sh = h.sqrt();
        for i in 0..q {
            let mut noise = 0.0;
            for j in 0..q {
                noise += self.sigma[(i, j)] * xi[j];
            }
            out[i] = p[i] + self.drift[i] * h + sh * noise;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExitFlag {
    Boundary,
    Terminal,
}

/// A simulated path of the diffusion up to exit or `t_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionPath {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub exit_flag: ExitFlag,
    pub exit_time: f64,
    pub exit_point: Vec<f64>,
}

fn check_start(spec: &ParabolicSpec, x0: &[f64], t0: f64, dt: f64) -> Result<()> {
    if x0.len() != spec.dim() {
        return Err(Error::dim("start point has the wrong dimension"));
    }
    if !spec.inside(x0) {
        return Err(Error::invalid(format!(
            "start point {x0:?} is not interior"
        )));
    }
    if !(t0 <= spec.t_max) || t0 < 0.0 {
        return Err(Error::invalid("start time must lie in [0, t_max]"));
    }
    if !(dt > 0.0) {
        return Err(Error::invalid("dt must be positive"));
    }
    Ok(())
}

/// Default cap on the number of steps per path.
pub const STEP_CAP: usize = 10_000_000;

/// Euler–Maruyama path `X_{k+1} = X_k + b Δt + σ √Δt ξ_k` from `(t0, x0)`,
/// stopped at the first exit (interpolated onto the boundary) or at
/// `t_max` (the last step is shortened to land on it).
pub fn euler_maruyama_path(
    x0: &[f64],
    t0: f64,
    spec: &ParabolicSpec,
    dt: f64,
    stream: RandomStream,
) -> Result<DiffusionPath> {
    check_start(spec, x0, t0, dt)?;
    let q = spec.dim();
    let mut rng = stream.rng();
    let mut t = t0;
    let mut p = x0.to_vec();
    let mut next = vec![0.0; q];
    let mut xi = vec![0.0; q];
    let mut times = vec![t];
    let mut states = vec![p.clone()];
    for _ in 0..STEP_CAP {
        let h = dt.min(spec.t_max - t);
        if h <= 0.0 {
            return Ok(DiffusionPath {
                times,
                states,
                exit_flag: ExitFlag::Terminal,
                exit_time: t,
                exit_point: p,
            });
        }
        spec.step(&p, h, &mut rng, &mut xi, &mut next);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("diffusion state".into()));
        }
        if !spec.inside(&next) {
            let s = spec.exit_fraction(&p, &next);
            let exit: Vec<f64> = (0..q).map(|k| p[k] + s * (next[k] - p[k])).collect();
            let te = t + s * h;
            times.push(te);
            states.push(exit.clone());
            return Ok(DiffusionPath {
                times,
                states,
                exit_flag: ExitFlag::Boundary,
                exit_time: te,
                exit_point: exit,
            });
        }
        t = if h < dt { spec.t_max } else { t + h };
        p.copy_from_slice(&next);
        times.push(t);
        states.push(p.clone());
    }
    Err(Error::StepCapExceeded { cap: STEP_CAP })
}

/// Pathwise payoff and its θ-derivative for one walk.
fn walk_payoff(
    x0: &[f64],
    t0: f64,
    spec: &ParabolicSpec,
    source: &Source,
    theta: f64,
    dt: f64,
    rng: &mut StreamRng,
) -> Result<(f64, f64)> {
    let q = spec.dim();
    let c = spec.potential.value(theta);
    let dc = spec.potential.dtheta(theta);
    let mut t = t0;
    let mut p = x0.to_vec();
    let mut next = vec![0.0; q];
    let mut xi = vec![0.0; q];
    // D = ∫c, dD = ∫∂_θ c along the path (left endpoint)
    let mut d = 0.0;
    let mut dd = 0.0;
    let mut run = 0.0;
    let mut drun = 0.0;
    let finish = |x: &[f64], d: f64, dd: f64, run: f64, drun: f64| {
        let disc = (-d).exp();
        let g = spec.boundary.value(theta, x);
        let dg = spec.boundary.dtheta(theta, x);
        (g * disc + run, (dg - g * dd) * disc + drun)
    };
    for _ in 0..STEP_CAP {
        let h = dt.min(spec.t_max - t);
        if h <= 0.0 {
            return Ok(finish(&p, d, dd, run, drun));
        }
        spec.step(&p, h, &mut *rng, &mut xi, &mut next);
        let s = if spec.inside(&next) {
            1.0
        } else {
            spec.exit_fraction(&p, &next)
        };
        let hs = s * h;
        let disc = (-d).exp();
        let fp = source.eval(&p);
        run += fp * disc * hs;
        drun -= fp * disc * dd * hs;
        d += c * hs;
        dd += dc * hs;
        if s < 1.0 || !spec.inside(&next) {
            let exit: Vec<f64> = (0..q).map(|k| p[k] + s * (next[k] - p[k])).collect();
            return Ok(finish(&exit, d, dd, run, drun));
        }
        t = if h < dt { spec.t_max } else { t + h };
        p.copy_from_slice(&next);
    }
    Err(Error::StepCapExceeded { cap: STEP_CAP })
}

/// `u_θ(t, x0)` and `∂_θ u_θ(t, x0)` on shared paths.
#[derive(Debug, Clone, PartialEq)]
pub struct FkParabolicEstimate {
    pub value: McScalar,
    pub dtheta: McScalar,
}

/// Monte Carlo Feynman-Kac estimate; path `k` uses substream `k`.
#[allow(clippy::too_many_arguments)]
pub fn fk_parabolic(
    t: f64,
    x0: &[f64],
    spec: &ParabolicSpec,
    source: &Source,
    theta: f64,
    n_paths: usize,
    dt: f64,
    stream: RandomStream,
) -> Result<FkParabolicEstimate> {
    check_start(spec, x0, t, dt)?;
    if n_paths == 0 {
        return Err(Error::invalid("need at least one path"));
    }
    let mut vals = Vec::with_capacity(n_paths);
    let mut ders = Vec::with_capacity(n_paths);
    for k in 0..n_paths {
        let (v, d) = walk_payoff(
            x0,
            t,
            spec,
            source,
            theta,
            dt,
            &mut stream.substream(k as u64).rng(),
        )?;
        vals.push(v);
        ders.push(d);
    }
    let est = |s: &[f64]| -> Result<McScalar> {
        if s.len() < 2 {
            Ok(McEstimate {
                value: s[0],
                std_error: 0.0,
                n_samples: 1,
            })
        } else {
            McEstimate::from_samples(s)
        }
    };
    Ok(FkParabolicEstimate {
        value: est(&vals)?,
        dtheta: est(&ders)?,
    })
}

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParabolicSettings {
    pub dt: f64,
    pub paths_per_node: usize,
    /// Quadrature nodes on `[lower₁, upper₁]`, endpoints included.
    pub quad_points: usize,
    pub n_fields: usize,
    pub p: usize,
    pub source_nodes: usize,
}

impl Default for ParabolicSettings {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            paths_per_node: 2000,
            quad_points: 21,
            n_fields: 100,
            p: 3,
            source_nodes: 100,
        }
    }
}

impl ParabolicSettings {
    pub fn desk() -> Self {
        Self {
            dt: 1e-3,
            paths_per_node: 32,
            quad_points: 11,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || self.paths_per_node == 0 || self.n_fields == 0 {
            return Err(Error::invalid(
                "dt, paths_per_node and n_fields must be positive",
            ));
        }
        if self.quad_points < 3 {
            return Err(Error::invalid("quad_points must be at least 3"));
        }
        if self.p == 0 || self.p > self.quad_points {
            return Err(Error::invalid("p must be in 1..=quad_points"));
        }
        if self.source_nodes < 2 {
            return Err(Error::invalid("source_nodes must be at least 2"));
        }
        Ok(())
    }
}

/// Node values of `u_θ(t_i, ·)` and `∂_θu_θ(t_i, ·)` with standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParabolicSolution {
    pub nodes: Vec<f64>,
    pub values: Vec<McScalar>,
    pub dtheta: Vec<McScalar>,
}

/// Solves at every quadrature node of `[lower₁, upper₁]` at time `t_i`;
/// endpoints take the boundary data. Node `g` uses substream `g`.
pub fn solve_at_time(
    source: &Source,
    spec: &ParabolicSpec,
    theta: f64,
    index: usize,
    settings: &ParabolicSettings,
    stream: RandomStream,
) -> Result<ParabolicSolution> {
    settings.validate()?;
    if spec.dim() != 1 {
        return Err(Error::invalid(
            "coefficient projection is implemented for q = 1",
        ));
    }
    let t = *spec
        .times
        .get(index)
        .ok_or_else(|| Error::dim(format!("no observation time for index {index}")))?;
    let m = settings.quad_points;
    let (lo, hi) = (spec.lower[0], spec.upper[0]);
    let h = (hi - lo) / (m - 1) as f64;
    let nodes: Vec<f64> = (0..m).map(|g| lo + g as f64 * h).collect();
    let per: Vec<FkParabolicEstimate> = (0..m)
        .into_par_iter()
        .map(|g| {
            let x = [nodes[g]];
            if g == 0 || g == m - 1 {
                let exact = |v: f64| McEstimate {
                    value: v,
                    std_error: 0.0,
                    n_samples: 0,
                };
                return Ok(FkParabolicEstimate {
                    value: exact(spec.boundary.value(theta, &x)),
                    dtheta: exact(spec.boundary.dtheta(theta, &x)),
                });
            }
            fk_parabolic(
                t,
                &x,
                spec,
                source,
                theta,
                settings.paths_per_node,
                settings.dt,
                stream.substream(g as u64),
            )
        })
        .collect::<Result<_>>()?;
    let (values, dtheta) = per.into_iter().map(|e| (e.value, e.dtheta)).unzip();
    Ok(ParabolicSolution {
        nodes,
        values,
        dtheta,
    })
}

fn projector(spec: &ParabolicSpec, settings: &ParabolicSettings) -> Result<LegendreProjector<f64>> {
    let basis = LegendreBasis::new(settings.p - 1, spec.upper[0] - spec.lower[0])?;
    LegendreProjector::new(&basis, settings.quad_points, settings.p)
}

/// `(η_{θ,i}(f), ∂_θ η_{θ,i}(f))`: first `p` Legendre coefficients of
/// `u_θ(t_i, ·)` and of its θ-derivative.
pub fn eta_coeffs_parabolic(
    source: &Source,
    spec: &ParabolicSpec,
    theta: f64,
    index: usize,
    settings: &ParabolicSettings,
    stream: RandomStream,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let sol = solve_at_time(source, spec, theta, index, settings, stream)?;
    let proj = projector(spec, settings)?;
    let v: Vec<f64> = sol.values.iter().map(|e| e.value).collect();
    let d: Vec<f64> = sol.dtheta.iter().map(|e| e.value).collect();
    Ok((proj.apply(&v)?, proj.apply(&d)?))
}

type CacheEntry = Arc<(Vec<Vec<f64>>, Vec<Vec<f64>>)>;

/// Monte Carlo surrogate moments per observation time. Field `k` draws its
/// source from `stream.substream(k).substream(0)` and its paths for index
/// `i` from `.substream(1).substream(i)`, independent of θ, so estimates at
/// nearby θ share random numbers. Per-field draws are cached per `(θ, i)`.
pub struct ParabolicMomentModel {
    spec: ParabolicSpec,
    settings: ParabolicSettings,
    lambda: Matrix<f64>,
    stream: RandomStream,
    cache: Mutex<HashMap<(u64, usize), CacheEntry>>,
}

impl ParabolicMomentModel {
    pub fn new(
        spec: ParabolicSpec,
        settings: ParabolicSettings,
        lambda: Matrix<f64>,
        stream: RandomStream,
    ) -> Result<Self> {
        settings.validate()?;
        if lambda.rows() != settings.p || lambda.cols() != settings.p {
            return Err(Error::dim("Λ does not match p"));
        }
        if spec.dim() != 1 {
            return Err(Error::invalid("moment model is implemented for q = 1"));
        }
        Ok(Self {
            spec,
            settings,
            lambda,
            stream,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn spec(&self) -> &ParabolicSpec {
        &self.spec
    }

    pub fn n_indices(&self) -> usize {
        self.spec.times.len()
    }

    fn draws(&self, theta: f64, index: usize) -> Result<CacheEntry> {
        let key = (theta.to_bits(), index);
        if let Some(e) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(e.clone());
        }
        let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..self.settings.n_fields)
            .into_par_iter()
            .map(|k| {
                let s = self.stream.substream(k as u64);
                let src = sample_source(
                    s.substream(0),
                    self.spec.lower[0],
                    self.spec.upper[0],
                    self.settings.source_nodes,
                )?;
                eta_coeffs_parabolic(
                    &src,
                    &self.spec,
                    theta,
                    index,
                    &self.settings,
                    s.substream(1).substream(index as u64),
                )
            })
            .collect::<Result<_>>()?;
        let (etas, detas): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
        let entry = Arc::new((etas, detas));
        self.cache
            .lock()
            .expect("cache lock")
            .insert(key, entry.clone());
        Ok(entry)
    }

    /// Per-field `η_{θ,i}` and `∂_θ η_{θ,i}` behind the moments.
    pub fn draws_at(&self, theta: f64, index: usize) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let e = self.draws(theta, index)?;
        Ok((e.0.clone(), e.1.clone()))
    }

    /// Moment estimates with jackknife standard errors.
    pub fn estimates(&self, theta: f64, index: usize) -> Result<MomentEstimates> {
        let e = self.draws(theta, index)?;
        let (mean, covariance) = jackknife_mean_cov(&e.0, 100)?;
        let (dmean, _) = jackknife_mean_cov(&e.1, 100)?;
        Ok(MomentEstimates {
            mean,
            covariance,
            dmean,
        })
    }
}

impl MomentModel<f64> for ParabolicMomentModel {
    fn param_dim(&self) -> usize {
        1
    }

    fn obs_dim(&self) -> usize {
        self.settings.p
    }

    fn moments(&self, theta: &ThetaVector<f64>, index: usize) -> Result<MomentPair<f64>> {
        let e = self.draws(theta[0], index)?;
        Ok(ensemble_moments(&e.0, &e.1, &self.lambda)?.0)
    }

    fn derivative_mode(&self) -> DerivativeMode<f64> {
        DerivativeMode::Analytic
    }

    fn moment_derivative(
        &self,
        theta: &ThetaVector<f64>,
        index: usize,
        l: usize,
    ) -> Result<MomentDerivative<f64>> {
        if l != 0 {
            return Err(Error::dim("parabolic model has d = 1"));
        }
        let e = self.draws(theta[0], index)?;
        Ok(ensemble_moments(&e.0, &e.1, &self.lambda)?.1)
    }
}

/// Data generator; observation `k` is taken at time index `k mod n_t`.
#[derive(Debug, Clone)]
pub struct ParabolicGenerator {
    pub spec: ParabolicSpec,
    pub settings: ParabolicSettings,
    pub lambda: Matrix<f64>,
}

impl ObservationGenerator for ParabolicGenerator {
    fn obs_dim(&self) -> usize {
        self.settings.p
    }

    fn noise_covariance(&self, _index: usize) -> Matrix<f64> {
        self.lambda.clone()
    }

    fn draw_forward(
        &self,
        theta: &ThetaVector<f64>,
        index: usize,
        stream: RandomStream,
    ) -> Result<Vec<f64>> {
        let src = sample_source(
            stream.substream(0),
            self.spec.lower[0],
            self.spec.upper[0],
            self.settings.source_nodes,
        )?;
        Ok(eta_coeffs_parabolic(
            &src,
            &self.spec,
            theta[0],
            index,
            &self.settings,
            stream.substream(1),
        )?
        .0)
    }

    fn index_for(&self, k: usize) -> usize {
        k % self.spec.times.len()
    }
}
