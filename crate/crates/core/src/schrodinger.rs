//! Stationary Schrödinger example on the unit square.
//!
//! For a positive potential `f` the Dirichlet problem `Δu − 2fu = 0` in
//! `(0,1)²`, `u = g_θ` on the boundary, has the Feynman-Kac representation
//! `u(x) = E[g_θ(B_τ) exp(−∫₀^τ f(B_s) ds)]` for a standard planar Brownian
//! motion started at `x`. Observations are tensor-Legendre coefficients of
//! `u` plus Gaussian noise.
//!
//! Boundary data are separable, `g_θ(x,y) = Σ_m φ_m(θ) h_m(x,y)`, so one set
//! of paths per field yields the component coefficients and `η_θ` at every
//! θ follows by linear combination. Derivatives in θ then share the paths of
//! the value (common random numbers) automatically.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::legendre::TensorLegendreBasis;
use crate::linalg::Matrix;
use crate::mc::{jackknife_mean_cov, McEstimate, McMatrix, McScalar, McVector};
use crate::model::{
    DerivativeMode, MomentDerivative, MomentModel, MomentPair, ObservationGenerator, ThetaVector,
};
use crate::rng::{RandomStream, StreamRng};

/// Potential on an `n × n` grid of `[0,1]²` with bilinear interpolation.
/// `values[a·n + b] = f(x_a, y_b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field2D {
    n: usize,
    values: Vec<f64>,
}

impl Field2D {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("field grid needs n >= 2"));
        }
        if values.len() != n * n {
            return Err(Error::dim(format!("field needs {} values", n * n)));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(
                "field values must be finite and nonnegative",
            ));
        }
        Ok(Self { n, values })
    }

    pub fn constant(n: usize, c: f64) -> Result<Self> {
        Self::new(n, vec![c; n * n])
    }

    pub fn from_fn(n: usize, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let h = 1.0 / (n.max(2) - 1) as f64;
        let values = (0..n * n)
            .map(|g| f((g / n) as f64 * h, (g % n) as f64 * h))
            .collect();
        Self::new(n, values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at_node(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.n + b]
    }

    /// Bilinear interpolation; arguments are clamped to the square.
    #[inline]
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let m = (self.n - 1) as f64;
        let sx = (x.clamp(0.0, 1.0)) * m;
        let sy = (y.clamp(0.0, 1.0)) * m;
        let a = (sx as usize).min(self.n - 2);
        let b = (sy as usize).min(self.n - 2);
        let fx = sx - a as f64;
        let fy = sy - b as f64;
        let r0 = a * self.n + b;
        let r1 = r0 + self.n;
        let v00 = self.values[r0];
        let v01 = self.values[r0 + 1];
        let v10 = self.values[r1];
        let v11 = self.values[r1 + 1];
        (1.0 - fx) * ((1.0 - fy) * v00 + fy * v01) + fx * ((1.0 - fy) * v10 + fy * v11)
    }
}

/// Draws `f(x, y) = exp(2 B₁(x) + 3 B₂(y))` on the `n × n` grid.
pub fn sample_field(stream: RandomStream, n: usize) -> Result<Field2D> {
    if n < 2 {
        return Err(Error::invalid("field grid needs n >= 2"));
    }
    let sd = (1.0 / (n - 1) as f64).sqrt();
    let mut rng = stream.rng();
    let walk = |rng: &mut StreamRng| {
        let mut b = vec![0.0; n];
        for k in 1..n {
            b[k] = b[k - 1] + sd * rng.normal();
        }
        b
    };
    let b1 = walk(&mut rng);
    let b2 = walk(&mut rng);
    let values = (0..n * n)
        .map(|g| (2.0 * b1[g / n] + 3.0 * b2[g % n]).exp())
        .collect();
    Field2D::new(n, values)
}

/// Spatial part `h_m` of a boundary term.
#[derive(Clone)]
pub enum Spatial {
    Constant(f64),
    X,
    Y,
    /// `(x − ½)²`.
    CenteredXSquared,
    Custom(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Spatial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "Constant({c})"),
            Self::X => write!(f, "X"),
            Self::Y => write!(f, "Y"),
            Self::CenteredXSquared => write!(f, "CenteredXSquared"),
            Self::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl Spatial {
    #[inline]
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::X => x,
            Self::Y => y,
            Self::CenteredXSquared => (x - 0.5) * (x - 0.5),
            Self::Custom(h) => h(x, y),
        }
    }
}

/// θ-dependence `φ_m` of a boundary term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ThetaFactor {
    One,
    Theta,
    ThetaSquared,
}

impl ThetaFactor {
    pub fn value(self, theta: f64) -> f64 {
        match self {
            Self::One => 1.0,
            Self::Theta => theta,
            Self::ThetaSquared => theta * theta,
        }
    }

    pub fn derivative(self, theta: f64) -> f64 {
        match self {
            Self::One => 0.0,
            Self::Theta => 1.0,
            Self::ThetaSquared => 2.0 * theta,
        }
    }
}

/// Boundary data `g_θ = Σ_m φ_m(θ) h_m`.
#[derive(Debug, Clone)]
pub struct BoundaryFn {
    terms: Vec<(ThetaFactor, Spatial)>,
}

impl BoundaryFn {
    pub fn new(terms: Vec<(ThetaFactor, Spatial)>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::invalid("boundary needs at least one term"));
        }
        Ok(Self { terms })
    }

    /// `g_θ(x, y) = (x − ½)² + θ² y`.
    pub fn reference() -> Self {
        Self {
            terms: vec![
                (ThetaFactor::One, Spatial::CenteredXSquared),
                (ThetaFactor::ThetaSquared, Spatial::Y),
            ],
        }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            terms: vec![(ThetaFactor::One, Spatial::Constant(c))],
        }
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[(ThetaFactor, Spatial)] {
        &self.terms
    }

    pub fn eval(&self, theta: f64, x: f64, y: f64) -> f64 {
        self.terms
            .iter()
            .map(|(p, h)| p.value(theta) * h.eval(x, y))
            .sum()
    }

    pub fn dtheta(&self, theta: f64, x: f64, y: f64) -> f64 {
        self.terms
            .iter()
            .map(|(p, h)| p.derivative(theta) * h.eval(x, y))
            .sum()
    }

    pub fn components(&self, x: f64, y: f64) -> Vec<f64> {
        self.terms.iter().map(|(_, h)| h.eval(x, y)).collect()
    }

    pub fn factors(&self, theta: f64) -> Vec<f64> {
        self.terms.iter().map(|(p, _)| p.value(theta)).collect()
    }

    pub fn factor_derivatives(&self, theta: f64) -> Vec<f64> {
        self.terms
            .iter()
            .map(|(p, _)| p.derivative(theta))
            .collect()
    }

    /// `(min, max)` of `g_θ` over a fine sampling of the boundary.
    pub fn range_on_boundary(&self, theta: f64) -> (f64, f64) {
        let n = 400;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for k in 0..=n {
            let s = k as f64 / n as f64;
            for (x, y) in [(s, 0.0), (s, 1.0), (0.0, s), (1.0, s)] {
                let v = self.eval(theta, x, y);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    }
}

/// Limits applied to each Brownian walk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkLimits {
    /// A path that has not exited after this many steps is an error.
    pub step_cap: usize,
    /// Walks whose accumulated `∫f` exceeds this are stopped with weight 0.
    pub kill_log_discount: f64,
}

impl Default for WalkLimits {
    fn default() -> Self {
        Self {
            step_cap: 10_000_000,
            kill_log_discount: 40.0,
        }
    }
}

/// End state of one walk: exit point and accumulated `∫₀^τ f`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkOutcome {
    pub exit: [f64; 2],
    /// `+∞` when the walk was stopped by the discount threshold.
    pub log_discount: f64,
}

impl WalkOutcome {
    pub fn weight(&self) -> f64 {
        (-self.log_discount).exp()
    }
}

#[inline]
fn inside(x: f64, y: f64) -> bool {
    x > 0.0 && x < 1.0 && y > 0.0 && y < 1.0
}

/// Fraction `s ∈ (0, 1]` of the step from `p` to `q` at which it leaves the
/// square.
#[inline]
fn exit_fraction(p: [f64; 2], q: [f64; 2]) -> f64 {
    let mut s: f64 = 1.0;
    for k in 0..2 {
        let d = q[k] - p[k];
        if q[k] <= 0.0 {
            s = s.min(p[k] / -d);
        } else if q[k] >= 1.0 {
            s = s.min((1.0 - p[k]) / d);
        }
    }
    s.clamp(0.0, 1.0)
}

/// One Brownian walk from `x0` with step `dt`, left-endpoint discount and
/// linear interpolation of the exit point.
pub fn walk(
    x0: [f64; 2],
    field: &Field2D,
    dt: f64,
    limits: WalkLimits,
    rng: &mut StreamRng,
) -> Result<WalkOutcome> {
    let sd = dt.sqrt();
    let mut p = x0;
    let mut acc = 0.0;
    for _ in 0..limits.step_cap {
        let fp = field.eval(p[0], p[1]);
        let q = [p[0] + sd * rng.normal(), p[1] + sd * rng.normal()];
        if !inside(q[0], q[1]) {
            let s = exit_fraction(p, q);
            acc += s * dt * fp;
            let exit = [
                (p[0] + s * (q[0] - p[0])).clamp(0.0, 1.0),
                (p[1] + s * (q[1] - p[1])).clamp(0.0, 1.0),
            ];
            return Ok(WalkOutcome {
                exit,
                log_discount: acc,
            });
        }
        acc += dt * fp;
        if acc > limits.kill_log_discount {
            return Ok(WalkOutcome {
                exit: q,
                log_discount: f64::INFINITY,
            });
        }
        p = q;
    }
    Err(Error::StepCapExceeded {
        cap: limits.step_cap,
    })
}

fn check_start(x0: [f64; 2], dt: f64) -> Result<()> {
    if !inside(x0[0], x0[1]) {
        return Err(Error::invalid(format!(
            "start point {x0:?} is not interior"
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::invalid("dt must be positive"));
    }
    Ok(())
}

/// `n_paths` walks from `x0`; walk `k` uses substream `k`.
pub fn fk_walks(
    x0: [f64; 2],
    field: &Field2D,
    n_paths: usize,
    dt: f64,
    limits: WalkLimits,
    stream: RandomStream,
) -> Result<Vec<WalkOutcome>> {
    check_start(x0, dt)?;
    if n_paths == 0 {
        return Err(Error::invalid("need at least one path"));
    }
    (0..n_paths)
        .map(|k| walk(x0, field, dt, limits, &mut stream.substream(k as u64).rng()))
        .collect()
}

/// Monte Carlo estimate of `u(x0)` with default walk limits.
pub fn fk_solution_at(
    x0: [f64; 2],
    field: &Field2D,
    g: &BoundaryFn,
    theta: f64,
    n_paths: usize,
    dt: f64,
    stream: RandomStream,
) -> Result<McScalar> {
    let walks = fk_walks(x0, field, n_paths, dt, WalkLimits::default(), stream)?;
    payoff_estimate(&walks, |w| g.eval(theta, w.exit[0], w.exit[1]))
}

fn payoff_estimate(walks: &[WalkOutcome], g: impl Fn(&WalkOutcome) -> f64) -> Result<McScalar> {
    let samples: Vec<f64> = walks
        .iter()
        .map(|w| {
            let wt = w.weight();
            if wt == 0.0 {
                0.0
            } else {
                wt * g(w)
            }
        })
        .collect();
    if samples.len() < 2 {
        return Ok(McEstimate {
            value: samples[0],
            std_error: 0.0,
            n_samples: 1,
        });
    }
    McEstimate::from_samples(&samples)
}

/// Solver settings for the Schrödinger forward map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchrodingerSettings {
    pub grid_n: usize,
    pub dt: f64,
    pub paths_per_node: usize,
    /// Side of the quadrature grid (boundary nodes included); odd.
    pub quad_grid: usize,
    pub n_fields: usize,
    pub p: usize,
    pub limits: WalkLimits,
}

impl Default for SchrodingerSettings {
    fn default() -> Self {
        Self {
            grid_n: 100,
            dt: 1e-4,
            paths_per_node: 2000,
            quad_grid: 21,
            n_fields: 100,
            p: 1,
            limits: WalkLimits::default(),
        }
    }
}

impl SchrodingerSettings {
    /// Reduced budget for tests and quick experiments.
    pub fn desk() -> Self {
        Self {
            dt: 1e-3,
            paths_per_node: 32,
            quad_grid: 11,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_n < 2 {
            return Err(Error::invalid("grid_n must be at least 2"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::invalid("dt must be positive"));
        }
        if self.paths_per_node == 0 || self.n_fields == 0 {
            return Err(Error::invalid(
                "paths_per_node and n_fields must be positive",
            ));
        }
        if self.quad_grid < 3 || self.quad_grid.is_multiple_of(2) {
            return Err(Error::invalid("quad_grid must be odd and at least 3"));
        }
        if self.p == 0 || self.p > 16 {
            return Err(Error::invalid("p must be in 1..=16"));
        }
        Ok(())
    }
}

/// Node values of each boundary component on the quadrature grid, with
/// standard errors. `values[m][g]` is component `m` at node `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSolution {
    pub quad_grid: usize,
    pub values: Vec<Vec<f64>>,
    pub std_errors: Vec<Vec<f64>>,
    /// Per-node walks (empty at boundary nodes), kept for recombination.
    walks: Vec<Vec<WalkOutcome>>,
}

impl ComponentSolution {
    pub fn node_point(&self, g: usize) -> [f64; 2] {
        let m = self.quad_grid;
        let h = 1.0 / (m - 1) as f64;
        [(g / m) as f64 * h, (g % m) as f64 * h]
    }

    pub fn is_boundary(&self, g: usize) -> bool {
        let m = self.quad_grid;
        let (a, b) = (g / m, g % m);
        a == 0 || b == 0 || a == m - 1 || b == m - 1
    }

    /// `u_θ` at every node with standard errors.
    pub fn solution(&self, g: &BoundaryFn, theta: f64) -> Vec<McScalar> {
        (0..self.values[0].len())
            .map(|node| {
                if self.walks[node].is_empty() {
                    let x = self.node_point(node);
                    McEstimate {
                        value: g.eval(theta, x[0], x[1]),
                        std_error: 0.0,
                        n_samples: 0,
                    }
                } else {
                    payoff_estimate(&self.walks[node], |w| g.eval(theta, w.exit[0], w.exit[1]))
                        .expect("non-empty walks")
                }
            })
            .collect()
    }
}

/// Solves each boundary component at every interior quadrature node; node
/// `g` uses substream `g` of `stream`.
pub fn solve_components(
    field: &Field2D,
    g: &BoundaryFn,
    settings: &SchrodingerSettings,
    stream: RandomStream,
) -> Result<ComponentSolution> {
    settings.validate()?;
    let m = settings.quad_grid;
    let h = 1.0 / (m - 1) as f64;
    let per_node: Vec<(Vec<f64>, Vec<f64>, Vec<WalkOutcome>)> = (0..m * m)
        .into_par_iter()
        .map(|node| {
            let (a, b) = (node / m, node % m);
            let x = [a as f64 * h, b as f64 * h];
            if a == 0 || b == 0 || a == m - 1 || b == m - 1 {
                return Ok((g.components(x[0], x[1]), vec![0.0; g.n_terms()], Vec::new()));
            }
            let walks = fk_walks(
                x,
                field,
                settings.paths_per_node,
                settings.dt,
                settings.limits,
                stream.substream(node as u64),
            )?;
            let mut means = Vec::with_capacity(g.n_terms());
            let mut ses = Vec::with_capacity(g.n_terms());
            for (_, hm) in g.terms() {
                let e = payoff_estimate(&walks, |w| hm.eval(w.exit[0], w.exit[1]))?;
                means.push(e.value);
                ses.push(e.std_error);
            }
            Ok((means, ses, walks))
        })
        .collect::<Result<_>>()?;
    let n_terms = g.n_terms();
    let mut values = vec![Vec::with_capacity(m * m); n_terms];
    let mut std_errors = vec![Vec::with_capacity(m * m); n_terms];
    let mut walks = Vec::with_capacity(m * m);
    for (v, s, w) in per_node {
        for t in 0..n_terms {
            values[t].push(v[t]);
            std_errors[t].push(s[t]);
        }
        walks.push(w);
    }
    Ok(ComponentSolution {
        quad_grid: m,
        values,
        std_errors,
        walks,
    })
}

/// Tensor-Legendre coefficients of each boundary component's solution:
/// `coeffs[m]` has length `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentCoeffs {
    pub coeffs: Vec<Vec<f64>>,
}

impl ComponentCoeffs {
    pub fn eta(&self, factors: &[f64]) -> Vec<f64> {
        let p = self.coeffs[0].len();
        (0..p)
            .map(|j| self.coeffs.iter().zip(factors).map(|(c, f)| f * c[j]).sum())
            .collect()
    }
}

/// Component coefficients for one field.
pub fn component_coeffs(
    field: &Field2D,
    g: &BoundaryFn,
    settings: &SchrodingerSettings,
    stream: RandomStream,
) -> Result<ComponentCoeffs> {
    let sol = solve_components(field, g, settings, stream)?;
    let basis = TensorLegendreBasis::<f64>::new(settings.p)?;
    let coeffs = sol
        .values
        .iter()
        .map(|v| basis.project(v, settings.quad_grid))
        .collect::<Result<_>>()?;
    Ok(ComponentCoeffs { coeffs })
}

/// `η_θ(f)`: first `p` tensor-Legendre coefficients of the Feynman-Kac
/// solution on the `m × m` quadrature grid.
pub fn eta_coeffs(
    field: &Field2D,
    g: &BoundaryFn,
    theta: f64,
    settings: &SchrodingerSettings,
    stream: RandomStream,
) -> Result<Vec<f64>> {
    Ok(component_coeffs(field, g, settings, stream)?.eta(&g.factors(theta)))
}

/// Forward-map draws for `n_fields` random fields: field `k` is drawn from
/// `stream.substream(k).substream(0)` and its paths from `.substream(1)`.
#[derive(Debug, Clone)]
pub struct SchrodingerEnsemble {
    boundary: BoundaryFn,
    members: Vec<ComponentCoeffs>,
}

impl SchrodingerEnsemble {
    pub fn simulate(
        boundary: BoundaryFn,
        settings: &SchrodingerSettings,
        first_field: usize,
        stream: RandomStream,
    ) -> Result<Self> {
        settings.validate()?;
        let members = (first_field..first_field + settings.n_fields)
            .into_par_iter()
            .map(|k| {
                let s = stream.substream(k as u64);
                let field = sample_field(s.substream(0), settings.grid_n)?;
                component_coeffs(&field, &boundary, settings, s.substream(1))
            })
            .collect::<Result<_>>()?;
        Ok(Self { boundary, members })
    }

    pub fn from_members(boundary: BoundaryFn, members: Vec<ComponentCoeffs>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::invalid("ensemble is empty"));
        }
        if members.iter().any(|m| m.coeffs.len() != boundary.n_terms()) {
            return Err(Error::dim("component count differs from boundary terms"));
        }
        Ok(Self { boundary, members })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[ComponentCoeffs] {
        &self.members
    }

    pub fn boundary(&self) -> &BoundaryFn {
        &self.boundary
    }

    pub fn p(&self) -> usize {
        self.members[0].coeffs[0].len()
    }

    pub fn etas(&self, theta: f64) -> Vec<Vec<f64>> {
        let f = self.boundary.factors(theta);
        self.members.iter().map(|m| m.eta(&f)).collect()
    }

    pub fn detas(&self, theta: f64) -> Vec<Vec<f64>> {
        let f = self.boundary.factor_derivatives(theta);
        self.members.iter().map(|m| m.eta(&f)).collect()
    }

    pub fn extend(&mut self, other: SchrodingerEnsemble) {
        self.members.extend(other.members);
    }
}

/// Plug-in moments of a finite sample of `η` vectors and their θ-derivatives:
/// mean, `(1/n)`-normalized covariance plus `Λ`, and the exact derivatives
/// of both.
pub fn ensemble_moments(
    etas: &[Vec<f64>],
    detas: &[Vec<f64>],
    lambda: &Matrix<f64>,
) -> Result<(MomentPair<f64>, MomentDerivative<f64>)> {
    let n = etas.len();
    if n == 0 || detas.len() != n {
        return Err(Error::invalid(
            "ensemble moments need matching, non-empty samples",
        ));
    }
    let p = etas[0].len();
    let nf = n as f64;
    let mean: Vec<f64> = (0..p)
        .map(|j| etas.iter().map(|e| e[j]).sum::<f64>() / nf)
        .collect();
    let dmean: Vec<f64> = (0..p)
        .map(|j| detas.iter().map(|e| e[j]).sum::<f64>() / nf)
        .collect();
    let mut cov = Matrix::zeros(p, p);
    let mut dcov = Matrix::zeros(p, p);
    for (e, de) in etas.iter().zip(detas) {
        for a in 0..p {
            let ra = e[a] - mean[a];
            let da = de[a] - dmean[a];
            for b in 0..p {
                let rb = e[b] - mean[b];
                let db = de[b] - dmean[b];
                cov[(a, b)] += ra * rb / nf;
                dcov[(a, b)] += (da * rb + ra * db) / nf;
            }
        }
    }
    cov.axpy_mut(1.0, lambda)?;
    Ok((
        MomentPair::new(mean, cov.symmetrized())?,
        MomentDerivative {
            mean: dmean,
            covariance: dcov.symmetrized(),
        },
    ))
}

/// Monte Carlo moment estimates at one θ.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimates {
    pub mean: McVector,
    /// Sample covariance of `η` (without `Λ`).
    pub covariance: McMatrix,
    pub dmean: McVector,
}

/// Surrogate moments estimated from a fixed field ensemble. The ensemble is
/// θ-free, so moments at every θ reuse the same fields and paths.
#[derive(Debug, Clone)]
pub struct SchrodingerMomentModel {
    ensemble: SchrodingerEnsemble,
    lambda: Matrix<f64>,
}

impl SchrodingerMomentModel {
    pub fn new(ensemble: SchrodingerEnsemble, lambda: Matrix<f64>) -> Result<Self> {
        if lambda.rows() != ensemble.p() || lambda.cols() != ensemble.p() {
            return Err(Error::dim("Λ does not match p"));
        }
        Ok(Self { ensemble, lambda })
    }

    pub fn simulate(
        boundary: BoundaryFn,
        lambda: Matrix<f64>,
        settings: &SchrodingerSettings,
        stream: RandomStream,
    ) -> Result<Self> {
        Self::new(
            SchrodingerEnsemble::simulate(boundary, settings, 0, stream)?,
            lambda,
        )
    }

    pub fn ensemble(&self) -> &SchrodingerEnsemble {
        &self.ensemble
    }

    pub fn lambda(&self) -> &Matrix<f64> {
        &self.lambda
    }

    /// Moments with jackknife standard errors over up to 100 blocks.
    pub fn estimates(&self, theta: f64) -> Result<MomentEstimates> {
        let etas = self.ensemble.etas(theta);
        let detas = self.ensemble.detas(theta);
        let (mean, covariance) = jackknife_mean_cov(&etas, 100)?;
        let (dmean, _) = jackknife_mean_cov(&detas, 100)?;
        Ok(MomentEstimates {
            mean,
            covariance,
            dmean,
        })
    }
}

impl MomentModel<f64> for SchrodingerMomentModel {
    fn param_dim(&self) -> usize {
        1
    }

    fn obs_dim(&self) -> usize {
        self.ensemble.p()
    }

    fn moments(&self, theta: &ThetaVector<f64>, _index: usize) -> Result<MomentPair<f64>> {
        let etas = self.ensemble.etas(theta[0]);
        let detas = self.ensemble.detas(theta[0]);
        Ok(ensemble_moments(&etas, &detas, &self.lambda)?.0)
    }

    fn derivative_mode(&self) -> DerivativeMode<f64> {
        DerivativeMode::Analytic
    }

    fn moment_derivative(
        &self,
        theta: &ThetaVector<f64>,
        _index: usize,
        l: usize,
    ) -> Result<MomentDerivative<f64>> {
        if l != 0 {
            return Err(Error::dim("Schrödinger model has d = 1"));
        }
        let etas = self.ensemble.etas(theta[0]);
        let detas = self.ensemble.detas(theta[0]);
        Ok(ensemble_moments(&etas, &detas, &self.lambda)?.1)
    }
}

/// Data generator: each observation draws a fresh field and fresh paths.
/// In fixed mode every observation reuses one field and one path stream.
#[derive(Debug, Clone)]
pub struct SchrodingerGenerator {
    pub boundary: BoundaryFn,
    pub lambda: Matrix<f64>,
    pub settings: SchrodingerSettings,
    pub fixed: Option<(Field2D, RandomStream)>,
}

impl ObservationGenerator for SchrodingerGenerator {
    fn obs_dim(&self) -> usize {
        self.settings.p
    }

    fn noise_covariance(&self, _index: usize) -> Matrix<f64> {
        self.lambda.clone()
    }

    fn draw_forward(
        &self,
        theta: &ThetaVector<f64>,
        _index: usize,
        stream: RandomStream,
    ) -> Result<Vec<f64>> {
        match &self.fixed {
            Some((field, paths)) => {
                eta_coeffs(field, &self.boundary, theta[0], &self.settings, *paths)
            }
            None => {
                let field = sample_field(stream.substream(0), self.settings.grid_n)?;
                eta_coeffs(
                    &field,
                    &self.boundary,
                    theta[0],
                    &self.settings,
                    stream.substream(1),
                )
            }
        }
    }
}
