//! Bernstein–von Mises limit of the surrogate posterior.
//!
//! The surrogate posterior concentrates around `T_N = θ* + V⁻¹∇l^{(N)}(θ*)/N`
//! with covariance `(N V)⁻¹`, where `V` is the Hessian of the average Gaussian
//! KL divergence at `θ*`. This module computes `V` in closed form from moment
//! derivatives, cross-checks it by finite differences, and measures how far a
//! grid posterior is from its Gaussian limit in L1.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{dot, min_eigenvalue, Cholesky, LinalgError, Matrix};
use crate::model::{
    format_float, surrogate_loglik, surrogate_loglik_grad, MomentModel, MomentPair,
    ObservationBatch, ThetaVector,
};
use crate::scalar::{compensated_sum, Real};

fn chol_or_pd_error<T: Real>(a: &Matrix<T>, what: &str) -> Result<Cholesky<T>> {
    Cholesky::new(a).map_err(|e| match e {
        LinalgError::NotPositiveDefinite { .. } => {
            Error::invalid(format!("{what} covariance is not positive definite"))
        }
        other => other.into(),
    })
}

/// `KL(N(μ0, Σ0) ‖ N(μ1, Σ1))`, clamped at zero against rounding.
pub fn gaussian_kl<T: Real>(m0: &MomentPair<T>, m1: &MomentPair<T>) -> Result<T> {
    if m0.dim() != m1.dim() {
        return Err(Error::dim(format!("p = {} vs p = {}", m0.dim(), m1.dim())));
    }
    let c0 = chol_or_pd_error(&m0.covariance, "first")?;
    let c1 = chol_or_pd_error(&m1.covariance, "second")?;
    gaussian_kl_factored(&m0.mean, &c0, m1, &c1)
}

fn gaussian_kl_factored<T: Real>(
    mean0: &[T],
    c0: &Cholesky<T>,
    m1: &MomentPair<T>,
    c1: &Cholesky<T>,
) -> Result<T> {
    let p = T::from_usize_lossy(mean0.len());
    let diff: Vec<T> = m1.mean.iter().zip(mean0).map(|(&a, &b)| a - b).collect();
    // tr(Σ1⁻¹Σ0) = ‖L1⁻¹ L0‖_F²
    let l0 = c0.factor();
    let mut tr = T::zero();
    for j in 0..l0.cols() {
        let col: Vec<T> = (0..l0.rows()).map(|i| l0[(i, j)]).collect();
        let y = c1.forward_solve(&col);
        tr += dot(&y, &y);
    }
    let kl = T::lit(0.5) * (c1.inv_quad_form(&diff) + tr - p + c1.log_det() - c0.log_det());
    if !kl.is_finite() {
        return Err(Error::NonFinite("Gaussian KL".into()));
    }
    Ok(kl.max(T::zero()))
}

/// Regular lattice over an axis-aligned box. Nodes are enumerated
/// lexicographically with the first axis varying slowest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid<T> {
    lower: Vec<T>,
    upper: Vec<T>,
    counts: Vec<usize>,
}

impl<T: Real> Grid<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>, counts: Vec<usize>) -> Result<Self> {
        let d = lower.len();
        if d == 0 || upper.len() != d || counts.len() != d {
            return Err(Error::dim(
                "grid bounds and counts must share a positive length",
            ));
        }
        for k in 0..d {
            if counts[k] == 0 {
                return Err(Error::invalid("grid axes need at least one node"));
            }
            if !(lower[k].is_finite() && upper[k].is_finite()) || upper[k] < lower[k] {
                return Err(Error::invalid(format!("bad bounds on axis {k}")));
            }
            if counts[k] > 1 && upper[k] == lower[k] {
                return Err(Error::invalid(format!("axis {k} has zero width")));
            }
        }
        Ok(Self {
            lower,
            upper,
            counts,
        })
    }

    pub fn uniform_1d(lo: T, hi: T, n: usize) -> Result<Self> {
        Self::new(vec![lo], vec![hi], vec![n])
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Node spacing per axis; a single-node axis is given the full box width.
    pub fn spacing(&self) -> Vec<T> {
        (0..self.dim())
            .map(|k| {
                let w = self.upper[k] - self.lower[k];
                if self.counts[k] == 1 {
                    if w > T::zero() {
                        w
                    } else {
                        T::one()
                    }
                } else {
                    w / T::from_usize_lossy(self.counts[k] - 1)
                }
            })
            .collect()
    }

    pub fn cell_volume(&self) -> T {
        self.spacing().into_iter().fold(T::one(), |a, b| a * b)
    }

    pub fn axis_value(&self, k: usize, j: usize) -> T {
        if self.counts[k] == 1 {
            self.lower[k]
        } else {
            self.lower[k] + T::from_usize_lossy(j) * self.spacing()[k]
        }
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            idx[k] = flat % self.counts[k];
            flat /= self.counts[k];
        }
        idx
    }

    pub fn node(&self, flat: usize) -> Vec<T> {
        self.multi_index(flat)
            .into_iter()
            .enumerate()
            .map(|(k, j)| self.axis_value(k, j))
            .collect()
    }

    pub fn nodes(&self) -> Vec<Vec<T>> {
        (0..self.len()).map(|g| self.node(g)).collect()
    }

    /// Same box with each axis count replaced by `2(n − 1) + 1`.
    pub fn refined(&self) -> Self {
        Self {
            lower: self.lower.clone(),
            upper: self.upper.clone(),
            counts: self
                .counts
                .iter()
                .map(|&n| if n > 1 { 2 * n - 1 } else { 1 })
                .collect(),
        }
    }
}

/// Multiplicity of each model index in a list (e.g. a batch's `index_of`).
fn index_weights<T: Real>(indices: &[usize]) -> Result<Vec<(usize, T)>> {
    if indices.is_empty() {
        return Err(Error::invalid("index set is empty"));
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &i in indices {
        *counts.entry(i).or_insert(0) += 1;
    }
    let n = T::from_usize_lossy(indices.len());
    Ok(counts
        .into_iter()
        .map(|(i, c)| (i, T::from_usize_lossy(c) / n))
        .collect())
}

/// Average KL `(1/N) Σ_i KL(Q_{θ0,i} ‖ Q_{θ,i})` over a list of indices.
pub fn average_kl<T: Real, M: MomentModel<T> + ?Sized>(
    model: &M,
    theta0: &ThetaVector<T>,
    theta: &ThetaVector<T>,
    indices: &[usize],
) -> Result<T> {
    let weights = index_weights::<T>(indices)?;
    let mut terms = Vec::with_capacity(weights.len());
    for (i, w) in weights {
        let m0 = model.moments(theta0, i)?;
        let m1 = model.moments(theta, i)?;
        terms.push(w * gaussian_kl(&m0, &m1)?);
    }
    Ok(compensated_sum(terms))
}

/// Average KL at every grid node.
pub fn kl_profile<T: Real, M: MomentModel<T> + Sync + ?Sized>(
    model: &M,
    theta0: &ThetaVector<T>,
    grid: &Grid<T>,
    indices: &[usize],
) -> Result<Vec<T>> {
    if grid.dim() != theta0.dim() {
        return Err(Error::dim("grid dimension differs from theta"));
    }
    let weights = index_weights::<T>(indices)?;
    let base: Vec<(T, MomentPair<T>, Cholesky<T>)> = weights
        .iter()
        .map(|&(i, w)| {
            let m = model.moments(theta0, i)?;
            let c = chol_or_pd_error(&m.covariance, "reference")?;
            Ok((w, m, c))
        })
        .collect::<Result<_>>()?;
    (0..grid.len())
        .into_par_iter()
        .map(|g| {
            let th = ThetaVector::new(grid.node(g))?;
            let mut terms = Vec::with_capacity(base.len());
            for ((i, _), (w, m0, c0)) in weights.iter().zip(&base) {
                let m1 = model.moments(&th, *i)?;
                let c1 = chol_or_pd_error(&m1.covariance, "candidate")?;
                terms.push(*w * gaussian_kl_factored(&m0.mean, c0, &m1, &c1)?);
            }
            Ok(compensated_sum(terms))
        })
        .collect()
}

/// Index of the smallest value; ties go to the lowest index.
pub fn argmin<T: Real>(values: &[T]) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (k, &v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        match best {
            Some((_, b)) if v >= b => {}
            _ => best = Some((k, v)),
        }
    }
    best.map(|(k, _)| k)
}

/// `V^{(i)} = ½[tr(A_l A_k)] + [∂μ_lᵀ Σ⁻¹ ∂μ_k]`, `A_l = Σ⁻¹ ∂Σ_l`.
pub fn bvm_precision_index<T: Real, M: MomentModel<T> + ?Sized>(
    model: &M,
    theta: &ThetaVector<T>,
    index: usize,
) -> Result<Matrix<T>> {
    let pair = model.moments(theta, index)?;
    let chol = Cholesky::new(&pair.covariance).map_err(|e| match e {
        LinalgError::NotPositiveDefinite { pivot, .. } => Error::NotPositiveDefinite {
            index,
            theta: theta.to_f64_vec(),
            pivot,
        },
        other => other.into(),
    })?;
    let derivs = model.moment_gradients(theta, index)?;
    let d = derivs.len();
    let a: Vec<Matrix<T>> = derivs
        .iter()
        .map(|dv| chol.solve_mat(&dv.covariance))
        .collect::<std::result::Result<_, _>>()?;
    let w: Vec<Vec<T>> = derivs
        .iter()
        .map(|dv| chol.solve_vec(&dv.mean))
        .collect::<std::result::Result<_, _>>()?;
    let half = T::lit(0.5);
    let mut v = Matrix::zeros(d, d);
    for l in 0..d {
        for k in l..d {
            let val = half * a[l].trace_of_product(&a[k]) + dot(&derivs[l].mean, &w[k]);
            v[(l, k)] = val;
            v[(k, l)] = val;
        }
    }
    Ok(v)
}

/// Averaged precision with its positive-definiteness diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionSummary<T> {
    pub v: Matrix<T>,
    pub per_index: BTreeMap<usize, Matrix<T>>,
    pub min_eigenvalue: T,
    pub positive_definite: bool,
}

/// Count-weighted average of `V^{(i)}` over `indices`.
pub fn bvm_precision_avg<T: Real, M: MomentModel<T> + ?Sized>(
    model: &M,
    theta: &ThetaVector<T>,
    indices: &[usize],
) -> Result<PrecisionSummary<T>> {
    let weights = index_weights::<T>(indices)?;
    let d = theta.dim();
    let mut per_index = BTreeMap::new();
    let mut v = Matrix::zeros(d, d);
    for (i, w) in weights {
        let vi = bvm_precision_index(model, theta, i)?;
        v.axpy_mut(w, &vi)?;
        per_index.insert(i, vi);
    }
    let v = v.symmetrized();
    let min_eig = min_eigenvalue(&v)?;
    let positive_definite = Cholesky::new(&v).is_ok() && min_eig > T::zero();
    Ok(PrecisionSummary {
        v,
        per_index,
        min_eigenvalue: min_eig,
        positive_definite,
    })
}

/// Default relative step of the KL-Hessian stencil.
pub const HESSIAN_REL_STEP: f64 = 1e-3;

/// Central second-difference Hessian of `θ ↦ average_kl(θ0, θ)` at `θ0`,
/// with steps `rel_step · max(1, |θ_l|)`; symmetrized.
pub fn hessian_kl_fd<T: Real, M: MomentModel<T> + ?Sized>(
    model: &M,
    theta0: &ThetaVector<T>,
    indices: &[usize],
    rel_step: T,
) -> Result<Matrix<T>> {
    if rel_step <= T::zero() {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let d = theta0.dim();
    let h: Vec<T> = theta0
        .iter()
        .map(|t| rel_step * T::one().max(t.abs()))
        .collect();
    let f = |th: &ThetaVector<T>| average_kl(model, theta0, th, indices);
    let f0 = f(theta0)?;
    let mut hess = Matrix::zeros(d, d);
    let two = T::lit(2.0);
    for l in 0..d {
        let fp = f(&theta0.with_component(l, theta0[l] + h[l]))?;
        let fm = f(&theta0.with_component(l, theta0[l] - h[l]))?;
        hess[(l, l)] = (fp - two * f0 + fm) / (h[l] * h[l]);
        for k in (l + 1)..d {
            let at = |sl: T, sk: T| {
                let t = theta0.with_component(l, theta0[l] + sl * h[l]);
                let t = t.with_component(k, theta0[k] + sk * h[k]);
                f(&t)
            };
            let one = T::one();
            let val = (at(one, one)? - at(one, -one)? - at(-one, one)? + at(-one, -one)?)
                / (T::lit(4.0) * h[l] * h[k]);
            hess[(l, k)] = val;
            hess[(k, l)] = val;
        }
    }
    if !hess.is_finite() {
        return Err(Error::NonFinite("KL Hessian".into()));
    }
    Ok(hess.symmetrized())
}

/// Gaussian limit `N(T_N, (N V)⁻¹)` of the surrogate posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct BvmLimit<T> {
    pub theta_star: ThetaVector<T>,
    pub t_n: ThetaVector<T>,
    pub v: Matrix<T>,
    pub v_inverse: Matrix<T>,
    pub v_per_index: BTreeMap<usize, Matrix<T>>,
    pub per_index_count: BTreeMap<usize, usize>,
    pub n_obs: usize,
}

#[derive(Serialize)]
struct BvmLimitJson {
    theta_star: Vec<f64>,
    #[serde(rename = "T_N")]
    t_n: Vec<f64>,
    #[serde(rename = "V")]
    v: Vec<f64>,
    #[serde(rename = "V_inverse")]
    v_inverse: Vec<f64>,
    per_index_count: BTreeMap<String, usize>,
    n_obs: usize,
}

impl<T: Real> BvmLimit<T> {
    /// Posterior covariance `(N V)⁻¹`.
    pub fn covariance(&self) -> Matrix<T> {
        self.v_inverse
            .scaled(T::one() / T::from_usize_lossy(self.n_obs))
    }

    pub fn to_json(&self) -> serde_json::Value {
        let j = BvmLimitJson {
            theta_star: self.theta_star.to_f64_vec(),
            t_n: self.t_n.to_f64_vec(),
            v: self.v.as_slice().iter().map(|x| x.as_f64()).collect(),
            v_inverse: self
                .v_inverse
                .as_slice()
                .iter()
                .map(|x| x.as_f64())
                .collect(),
            per_index_count: self
                .per_index_count
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
            n_obs: self.n_obs,
        };
        serde_json::to_value(j).expect("plain data serializes")
    }

    pub fn write_json_path(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut f, &self.to_json())?;
        writeln!(f)?;
        Ok(())
    }
}

/// Builds the Gaussian limit at `θ*` for a batch:
/// `T_N = θ* + V⁻¹ ∇l^{(N)}(θ*) / N`.
pub fn center_tn<T: Real, M: MomentModel<T> + ?Sized>(
    model: &M,
    theta_star: &ThetaVector<T>,
    batch: &ObservationBatch<T>,
) -> Result<BvmLimit<T>> {
    let summary = bvm_precision_avg(model, theta_star, batch.index_of())?;
    limit_from_precision(model, theta_star, batch, summary)
}

/// As [`center_tn`] with a precompiled precision summary.
pub fn limit_from_precision<T: Real, M: MomentModel<T> + ?Sized>(
    model: &M,
    theta_star: &ThetaVector<T>,
    batch: &ObservationBatch<T>,
    summary: PrecisionSummary<T>,
) -> Result<BvmLimit<T>> {
    if !summary.positive_definite {
        return Err(Error::SingularPrecision {
            min_eigenvalue: summary.min_eigenvalue.as_f64(),
        });
    }
    let chol = Cholesky::new(&summary.v).map_err(|_| Error::SingularPrecision {
        min_eigenvalue: summary.min_eigenvalue.as_f64(),
    })?;
    let grad = surrogate_loglik_grad(model, theta_star, batch)?;
    let step = chol.solve_vec(&grad)?;
    let n = T::from_usize_lossy(batch.len());
    let t_n = theta_star.offset(&step, T::one() / n);
    Ok(BvmLimit {
        theta_star: theta_star.clone(),
        t_n,
        v_inverse: chol.inverse().symmetrized(),
        v: summary.v,
        v_per_index: summary.per_index,
        per_index_count: batch.index_counts(),
        n_obs: batch.len(),
    })
}

/// Prior on θ.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorSpec<T> {
    /// Uniform density on an axis-aligned box.
    UniformBox { lower: Vec<T>, upper: Vec<T> },
    /// Density tabulated on a regular grid and interpolated multilinearly;
    /// zero outside the grid box. Normalized on construction.
    Tabulated { grid: Grid<T>, values: Vec<T> },
}

impl<T: Real> PriorSpec<T> {
    pub fn uniform(lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::dim("prior bounds must share a positive length"));
        }
        if lower
            .iter()
            .zip(&upper)
            .any(|(l, u)| !(u > l) || !l.is_finite() || !u.is_finite())
        {
            return Err(Error::invalid("prior box must have positive finite width"));
        }
        Ok(Self::UniformBox { lower, upper })
    }

    /// Tabulated prior; `values` are nonnegative and row-major over `grid`.
    /// The table is rescaled so its multilinear interpolant integrates to 1.
    pub fn tabulated(grid: Grid<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::dim("prior table does not match grid"));
        }
        if grid.counts().iter().any(|&n| n < 2) {
            return Err(Error::invalid("tabulated prior needs two nodes per axis"));
        }
        if values.iter().any(|v| !(*v >= T::zero()) || !v.is_finite()) {
            return Err(Error::invalid(
                "prior values must be finite and nonnegative",
            ));
        }
        // trapezoid weights integrate the multilinear interpolant exactly
        let vol = grid.cell_volume();
        let mass = compensated_sum((0..grid.len()).map(|g| {
            let w =
                grid.multi_index(g)
                    .iter()
                    .zip(grid.counts())
                    .fold(T::one(), |acc, (&j, &n)| {
                        if j == 0 || j == n - 1 {
                            acc * T::lit(0.5)
                        } else {
                            acc
                        }
                    });
            w * values[g]
        })) * vol;
        if !(mass > T::zero()) {
            return Err(Error::invalid("prior table has zero mass"));
        }
        Ok(Self::Tabulated {
            values: values.into_iter().map(|v| v / mass).collect(),
            grid,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::UniformBox { lower, .. } => lower.len(),
            Self::Tabulated { grid, .. } => grid.dim(),
        }
    }

    pub fn support(&self) -> (Vec<T>, Vec<T>) {
        match self {
            Self::UniformBox { lower, upper } => (lower.clone(), upper.clone()),
            Self::Tabulated { grid, .. } => (grid.lower().to_vec(), grid.upper().to_vec()),
        }
    }

    pub fn density(&self, theta: &[T]) -> T {
        let (lo, hi) = self.support();
        if theta
            .iter()
            .zip(lo.iter().zip(&hi))
            .any(|(&t, (&l, &u))| t < l || t > u)
        {
            return T::zero();
        }
        match self {
            Self::UniformBox { lower, upper } => {
                T::one()
                    / lower
                        .iter()
                        .zip(upper)
                        .fold(T::one(), |a, (&l, &u)| a * (u - l))
            }
            Self::Tabulated { grid, values } => multilinear(grid, values, theta),
        }
    }

    pub fn log_density(&self, theta: &[T]) -> T {
        self.density(theta).ln()
    }
}

fn multilinear<T: Real>(grid: &Grid<T>, values: &[T], x: &[T]) -> T {
    let d = grid.dim();
    let h = grid.spacing();
    let mut base = vec![0usize; d];
    let mut frac = vec![T::zero(); d];
    for k in 0..d {
        let n = grid.counts()[k];
        let s = ((x[k] - grid.lower()[k]) / h[k]).max(T::zero());
        let j = s.floor().to_usize().unwrap_or(0).min(n - 2);
        base[k] = j;
        frac[k] = (s - T::from_usize_lossy(j)).min(T::one());
    }
    let mut acc = T::zero();
    for corner in 0..(1usize << d) {
        let mut w = T::one();
        let mut flat = 0usize;
        for k in 0..d {
            let bit = (corner >> k) & 1;
            w *= if bit == 1 {
                frac[k]
            } else {
                T::one() - frac[k]
            };
            flat = flat * grid.counts()[k] + base[k] + bit;
        }
        acc += w * values[flat];
    }
    acc
}

/// Normalized posterior density on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorGrid<T> {
    pub grid: Grid<T>,
    pub log_unnorm: Vec<T>,
    pub density: Vec<T>,
    pub cell_volume: T,
}

impl<T: Real> PosteriorGrid<T> {
    /// Normalizes unnormalized log-densities with a max shift so that
    /// `Σ density · cell_volume = 1`.
    pub fn from_log_unnorm(grid: Grid<T>, log_unnorm: Vec<T>) -> Result<Self> {
        if log_unnorm.len() != grid.len() {
            return Err(Error::dim("log density does not match grid"));
        }
        if log_unnorm.iter().any(|v| v.is_nan() || *v == T::infinity()) {
            return Err(Error::NonFinite("posterior log density".into()));
        }
        let max = log_unnorm.iter().copied().fold(T::neg_infinity(), T::max);
        if max == T::neg_infinity() {
            return Err(Error::EmptyPosterior);
        }
        let w: Vec<T> = log_unnorm.iter().map(|&v| (v - max).exp()).collect();
        let cell_volume = grid.cell_volume();
        let z = compensated_sum(w.iter().copied()) * cell_volume;
        let density = w.into_iter().map(|v| v / z).collect();
        Ok(Self {
            grid,
            log_unnorm,
            density,
            cell_volume,
        })
    }

    pub fn total_mass(&self) -> T {
        compensated_sum(self.density.iter().copied()) * self.cell_volume
    }

    pub fn mean(&self) -> Vec<T> {
        let d = self.grid.dim();
        (0..d)
            .map(|k| {
                compensated_sum(
                    self.density
                        .iter()
                        .enumerate()
                        .map(|(g, &p)| p * self.grid.node(g)[k]),
                ) * self.cell_volume
            })
            .collect()
    }

    /// Posterior mass of nodes inside the closed box `[lower, upper]`.
    pub fn mass_in_box(&self, lower: &[T], upper: &[T]) -> T {
        compensated_sum(self.density.iter().enumerate().filter_map(|(g, &p)| {
            let x = self.grid.node(g);
            let inside = x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(&t, (&l, &u))| t >= l && t <= u);
            inside.then_some(p)
        })) * self.cell_volume
    }

    /// CSV `theta_1..theta_d,log_unnorm,density`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=self.grid.dim())
            .map(|k| format!("theta_{k}"))
            .collect();
        header.push("log_unnorm".into());
        header.push("density".into());
        w.write_record(&header)?;
        for g in 0..self.grid.len() {
            let mut rec: Vec<String> = self
                .grid
                .node(g)
                .into_iter()
                .map(|v| format_float(v.as_f64()))
                .collect();
            rec.push(format_float(self.log_unnorm[g].as_f64()));
            rec.push(format_float(self.density[g].as_f64()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Surrogate posterior `∝ exp(l^{(N)}(θ)) π(θ)` on a grid.
pub fn posterior_grid<T: Real, M: MomentModel<T> + Sync + ?Sized>(
    model: &M,
    batch: &ObservationBatch<T>,
    prior: &PriorSpec<T>,
    grid: &Grid<T>,
) -> Result<PosteriorGrid<T>> {
    if prior.dim() != grid.dim() || grid.dim() != model.param_dim() {
        return Err(Error::dim("prior, grid and model disagree on d"));
    }
    let log_unnorm: Vec<T> = (0..grid.len())
        .into_par_iter()
        .map(|g| {
            let node = grid.node(g);
            let lp = prior.log_density(&node);
            if lp == T::neg_infinity() {
                return Ok(lp);
            }
            let th = ThetaVector::new(node)?;
            Ok(surrogate_loglik(model, &th, batch)? + lp)
        })
        .collect::<Result<_>>()?;
    PosteriorGrid::from_log_unnorm(grid.clone(), log_unnorm)
}

/// L1 distance between a grid density and `N(mean, precision⁻¹)`, the latter
/// renormalized on the same grid.
pub fn l1_distance_to_gaussian<T: Real>(
    pg: &PosteriorGrid<T>,
    mean: &[T],
    precision: &Matrix<T>,
) -> Result<T> {
    let d = pg.grid.dim();
    if mean.len() != d || precision.rows() != d {
        return Err(Error::dim("Gaussian dimension differs from grid"));
    }
    let half = T::lit(0.5);
    let log_q: Vec<T> = (0..pg.grid.len())
        .map(|g| {
            let r: Vec<T> = pg
                .grid
                .node(g)
                .iter()
                .zip(mean)
                .map(|(&a, &b)| a - b)
                .collect();
            -half * dot(&r, &precision.matvec(&r).expect("square"))
        })
        .collect();
    let q = PosteriorGrid::from_log_unnorm(pg.grid.clone(), log_q)?;
    let l1 = compensated_sum(
        pg.density
            .iter()
            .zip(&q.density)
            .map(|(&a, &b)| (a - b).abs()),
    ) * pg.cell_volume;
    Ok(l1.min(T::lit(2.0)))
}

/// L1 distance between the grid posterior and `N(T_N, (N V)⁻¹)`.
pub fn l1_distance<T: Real>(pg: &PosteriorGrid<T>, limit: &BvmLimit<T>) -> Result<T> {
    let prec = limit.v.scaled(T::from_usize_lossy(limit.n_obs));
    l1_distance_to_gaussian(pg, &limit.t_n, &prec)
}

/// Normalized second-order Taylor residual
/// `[l(θ) − l(θ*) − ∇l(θ*)ᵀΔ + ½ N ΔᵀVΔ] / (N ‖Δ‖²)`, `Δ = θ − θ*`.
pub fn taylor_remainder_scalar<T: Real, M: MomentModel<T> + ?Sized>(
    model: &M,
    batch: &ObservationBatch<T>,
    theta: &ThetaVector<T>,
    theta_star: &ThetaVector<T>,
    v: &Matrix<T>,
) -> Result<T> {
    let delta: Vec<T> = theta
        .iter()
        .zip(theta_star.iter())
        .map(|(&a, &b)| a - b)
        .collect();
    let norm2 = dot(&delta, &delta);
    if norm2 == T::zero() {
        return Err(Error::invalid("theta must differ from theta_star"));
    }
    let n = T::from_usize_lossy(batch.len());
    let l1 = surrogate_loglik(model, theta, batch)?;
    let l0 = surrogate_loglik(model, theta_star, batch)?;
    let g = surrogate_loglik_grad(model, theta_star, batch)?;
    let quad = dot(&delta, &v.matvec(&delta)?);
    let r = l1 - l0 - dot(&g, &delta) + T::lit(0.5) * n * quad;
    Ok(r / (n * norm2))
}
