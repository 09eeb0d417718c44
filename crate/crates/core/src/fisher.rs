//! Nested Monte Carlo estimate of the true Fisher information
//!
//! `I_θ = E[ s(X) s(X)ᵀ ]`, `s(x) = ∫ ∂_θ p_{θ,f}(x) dP(f) / ∫ p_{θ,f}(x) dP(f)`,
//!
//! where `p_{θ,f}` is the Gaussian density of `X` given the latent `f`, with
//! mean `η_θ(f)` and θ-free covariance `Λ`. Inner integrals average over a
//! pool of latent draws in the log domain, the outer expectation over fresh
//! draws of `X`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::mc::{jackknife_matrix_mean, McMatrix};
use crate::model::{ThetaVector, FD_REL_STEP};
use crate::parabolic::{
    eta_coeffs_parabolic, sample_source, ParabolicSettings, ParabolicSpec, Source,
};
use crate::rng::RandomStream;
use crate::schrodinger::{
    component_coeffs, sample_field, BoundaryFn, ComponentCoeffs, SchrodingerSettings,
};
use crate::square_integral::{simulate_bm_path, SquareIntForward, SquareIntLatent};

/// A forward map driven by a random latent: `X | f ~ N(η_θ(f), Λ)`.
pub trait LatentForwardModel: Sync {
    type Latent: Send + Sync;

    fn param_dim(&self) -> usize;
    fn obs_dim(&self) -> usize;
    fn noise_covariance(&self) -> &Matrix<f64>;
    fn sample_latent(&self, stream: RandomStream) -> Result<Self::Latent>;
    fn eta(&self, latent: &Self::Latent, theta: &ThetaVector<f64>) -> Result<Vec<f64>>;

    /// `∂_{θ_l} η_θ(f)` for each `l`, if known in closed form.
    fn deta(
        &self,
        _latent: &Self::Latent,
        _theta: &ThetaVector<f64>,
    ) -> Option<Result<Vec<Vec<f64>>>> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FisherDerivative {
    Analytic,
    CentralDifference { rel_step: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FisherSettings {
    pub n_outer: usize,
    pub n_inner: usize,
    pub derivative: FisherDerivative,
    /// Reuse one inner latent pool for every outer draw.
    pub shared_inner: bool,
    /// Largest tolerated fraction of dropped outer draws.
    pub max_drop_fraction: f64,
    pub jackknife_blocks: usize,
}

impl Default for FisherSettings {
    fn default() -> Self {
        Self {
            n_outer: 10_000,
            n_inner: 10_000,
            derivative: FisherDerivative::Analytic,
            shared_inner: true,
            max_drop_fraction: 0.01,
            jackknife_blocks: 100,
        }
    }
}

impl FisherSettings {
    pub fn validate(&self) -> Result<()> {
        if self.n_outer < 2 || self.n_inner < 2 {
            return Err(Error::invalid("n_outer and n_inner must be at least 2"));
        }
        if let FisherDerivative::CentralDifference { rel_step } = self.derivative {
            if !(rel_step > 0.0) {
                return Err(Error::invalid("central-difference step must be positive"));
            }
        }
        if !(0.0..1.0).contains(&self.max_drop_fraction) {
            return Err(Error::invalid("max_drop_fraction must lie in [0, 1)"));
        }
        if self.jackknife_blocks < 2 {
            return Err(Error::invalid("need at least two jackknife blocks"));
        }
        Ok(())
    }
}

/// `∂_θ η_θ(f)` as `d` vectors of length `p`, analytic or by a central
/// difference at fixed latent.
pub fn forward_jacobian<M: LatentForwardModel>(
    model: &M,
    latent: &M::Latent,
    theta: &ThetaVector<f64>,
    mode: FisherDerivative,
) -> Result<Vec<Vec<f64>>> {
    match mode {
        FisherDerivative::Analytic => model
            .deta(latent, theta)
            .ok_or_else(|| Error::invalid("model has no analytic forward derivative"))?,
        FisherDerivative::CentralDifference { rel_step } => (0..model.param_dim())
            .map(|l| {
                let h = rel_step * theta[l].abs().max(1.0);
                let up = model.eta(latent, &theta.with_component(l, theta[l] + h))?;
                let dn = model.eta(latent, &theta.with_component(l, theta[l] - h))?;
                Ok(up
                    .iter()
                    .zip(&dn)
                    .map(|(u, d)| (u - d) / (2.0 * h))
                    .collect())
            })
            .collect(),
    }
}

/// `p_{θ,f}(x)` and `∇_θ p_{θ,f}(x) = p · Jᵀ Λ⁻¹ (x − η)` given
/// `η = η_θ(f)` and rows `J[l] = ∂_{θ_l} η`.
pub fn gaussian_density_and_dtheta(
    x: &[f64],
    eta: &[f64],
    jac: &[Vec<f64>],
    lambda: &Matrix<f64>,
) -> Result<(f64, Vec<f64>)> {
    let chol = Cholesky::new(lambda).map_err(|_| Error::invalid("Λ must be positive definite"))?;
    let p = x.len();
    if eta.len() != p || jac.iter().any(|j| j.len() != p) {
        return Err(Error::dim("x, η and ∂η must have equal length"));
    }
    let r: Vec<f64> = x.iter().zip(eta).map(|(a, b)| a - b).collect();
    let w = chol.solve_vec(&r)?;
    let quad: f64 = r.iter().zip(&w).map(|(a, b)| a * b).sum();
    let log_p = -0.5 * (p as f64 * (2.0 * std::f64::consts::PI).ln() + chol.log_det() + quad);
    let dens = log_p.exp();
    let grad = jac
        .iter()
        .map(|j| dens * j.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    Ok((dens, grad))
}

/// [`gaussian_density_and_dtheta`] for a model and latent.
pub fn conditional_density_and_dtheta<M: LatentForwardModel>(
    model: &M,
    x: &[f64],
    latent: &M::Latent,
    theta: &ThetaVector<f64>,
    mode: FisherDerivative,
) -> Result<(f64, Vec<f64>)> {
    let eta = model.eta(latent, theta)?;
    let jac = forward_jacobian(model, latent, theta, mode)?;
    gaussian_density_and_dtheta(x, &eta, &jac, model.noise_covariance())
}

/// θ-free latent draws; draw `k` uses `stream.substream(k)`.
pub struct LatentPool<L> {
    pub latents: Vec<L>,
}

impl<L: Send + Sync> LatentPool<L> {
    pub fn sample<M: LatentForwardModel<Latent = L>>(
        model: &M,
        n: usize,
        stream: RandomStream,
    ) -> Result<Self> {
        let latents = (0..n)
            .into_par_iter()
            .map(|k| model.sample_latent(stream.substream(k as u64)))
            .collect::<Result<_>>()?;
        Ok(Self { latents })
    }

    pub fn len(&self) -> usize {
        self.latents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.latents.is_empty()
    }
}

/// Latent means and Jacobians at one θ, whitened by `Λ = LLᵀ`.
struct WhitenedPool {
    p: usize,
    d: usize,
    /// `L⁻¹η_k`, row-major `n × p`.
    nu: Vec<f64>,
    /// `L⁻¹ ∂_l η_k`, row-major `n × d × p`.
    jac: Vec<f64>,
}

impl WhitenedPool {
    fn build<M: LatentForwardModel>(
        model: &M,
        latents: &[M::Latent],
        theta: &ThetaVector<f64>,
        mode: FisherDerivative,
        chol: &Cholesky<f64>,
    ) -> Result<Self> {
        let (p, d) = (model.obs_dim(), model.param_dim());
        let rows: Vec<(Vec<f64>, Vec<f64>)> = latents
            .par_iter()
            .map(|lat| {
                let eta = model.eta(lat, theta)?;
                let jac = forward_jacobian(model, lat, theta, mode)?;
                if eta.len() != p || jac.len() != d {
                    return Err(Error::dim(
                        "forward map output does not match model dimensions",
                    ));
                }
                let mut j = Vec::with_capacity(d * p);
                for row in &jac {
                    j.extend(chol.forward_solve(row));
                }
                Ok((chol.forward_solve(&eta), j))
            })
            .collect::<Result<_>>()?;
        let mut nu = Vec::with_capacity(rows.len() * p);
        let mut jac = Vec::with_capacity(rows.len() * d * p);
        for (a, b) in rows {
            nu.extend(a);
            jac.extend(b);
        }
        Ok(Self { p, d, nu, jac })
    }

    fn len(&self) -> usize {
        self.nu.len() / self.p
    }

    /// Posterior-weighted score `Σ_k w_k J_kᵀ(y − ν_k) / Σ_k w_k` with
    /// `w_k ∝ exp(−½‖y − ν_k‖²)`; `None` when the weights vanish.
    fn score(&self, y: &[f64]) -> Option<Vec<f64>> {
        let (p, d) = (self.p, self.d);
        let n = self.len();
        let mut logw = Vec::with_capacity(n);
        let mut max = f64::NEG_INFINITY;
        for k in 0..n {
            let nu = &self.nu[k * p..(k + 1) * p];
            let q: f64 = y.iter().zip(nu).map(|(a, b)| (a - b) * (a - b)).sum();
            let lw = -0.5 * q;
            max = max.max(lw);
            logw.push(lw);
        }
        if !max.is_finite() {
            return None;
        }
        let mut wsum = 0.0;
        let mut num = vec![0.0; d];
        for k in 0..n {
            let w = (logw[k] - max).exp();
            if w == 0.0 {
                continue;
            }
            wsum += w;
            let nu = &self.nu[k * p..(k + 1) * p];
            for (l, acc) in num.iter_mut().enumerate() {
                let j = &self.jac[(k * d + l) * p..(k * d + l + 1) * p];
                let s: f64 = (0..p).map(|i| j[i] * (y[i] - nu[i])).sum();
                *acc += w * s;
            }
        }
        if !(wsum > 0.0) || num.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some(num.into_iter().map(|v| v / wsum).collect())
    }
}

/// The estimate with bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherEstimate {
    pub info: McMatrix,
    pub dropped: usize,
    pub n_outer: usize,
}

impl FisherEstimate {
    /// Smallest eigenvalue of the symmetrized estimate.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(crate::linalg::min_eigenvalue(
            &self.info.value.symmetrized(),
        )?)
    }
}

fn outer_scores<M: LatentForwardModel>(
    model: &M,
    theta0: &ThetaVector<f64>,
    settings: &FisherSettings,
    chol: &Cholesky<f64>,
    outer_latents: &[M::Latent],
    noise_stream: RandomStream,
    inner: impl Fn(usize) -> Result<std::sync::Arc<WhitenedPool>> + Sync,
) -> Result<FisherEstimate> {
    let p = model.obs_dim();
    let scores: Vec<Option<Vec<f64>>> = outer_latents
        .par_iter()
        .enumerate()
        .map(|(k, lat)| {
            let eta = model.eta(lat, theta0)?;
            // y = L⁻¹X = L⁻¹η + ξ
            let mut y = chol.forward_solve(&eta);
            let mut rng = noise_stream.substream(k as u64).rng();
            for v in y.iter_mut().take(p) {
                *v += rng.normal();
            }
            Ok(inner(k)?.score(&y))
        })
        .collect::<Result<_>>()?;
    let total = scores.len();
    let kept: Vec<Matrix<f64>> = scores
        .into_iter()
        .flatten()
        .map(|s| Matrix::outer(&s, &s))
        .collect();
    let dropped = total - kept.len();
    if dropped as f64 > settings.max_drop_fraction * total as f64 || kept.len() < 2 {
        return Err(Error::TooManyDroppedDraws { dropped, total });
    }
    let mut info = jackknife_matrix_mean(&kept, settings.jackknife_blocks)?;
    info.value = info.value.symmetrized();
    Ok(FisherEstimate {
        info,
        dropped,
        n_outer: total,
    })
}

/// Nested Monte Carlo estimate of `I_{θ0}` with entrywise jackknife errors.
///
/// Stream layout: outer draw `k` takes its latent from
/// `stream.substream(1).substream(k)` and its noise from
/// `stream.substream(2).substream(k)`. The shared inner pool is
/// `stream.substream(0)`; unshared pools for draw `k` are
/// `stream.substream(3).substream(k)`.
pub fn true_fisher_mc<M: LatentForwardModel>(
    model: &M,
    theta0: &ThetaVector<f64>,
    settings: &FisherSettings,
    stream: RandomStream,
) -> Result<FisherEstimate> {
    settings.validate()?;
    let outer = LatentPool::sample(model, settings.n_outer, stream.substream(1))?;
    if settings.shared_inner {
        let inner = LatentPool::sample(model, settings.n_inner, stream.substream(0))?;
        return true_fisher_mc_pooled(model, theta0, settings, &inner, &outer, stream.substream(2));
    }
    let chol = noise_factor(model)?;
    let pools = stream.substream(3);
    outer_scores(
        model,
        theta0,
        settings,
        &chol,
        &outer.latents,
        stream.substream(2),
        |k| {
            let pool = LatentPool::sample(model, settings.n_inner, pools.substream(k as u64))?;
            Ok(std::sync::Arc::new(WhitenedPool::build(
                model,
                &pool.latents,
                theta0,
                settings.derivative,
                &chol,
            )?))
        },
    )
}

/// As [`true_fisher_mc`] with caller-supplied latent pools, which may be
/// reused across θ0. Outer noise for draw `k` uses `noise.substream(k)`.
pub fn true_fisher_mc_pooled<M: LatentForwardModel>(
    model: &M,
    theta0: &ThetaVector<f64>,
    settings: &FisherSettings,
    inner: &LatentPool<M::Latent>,
    outer: &LatentPool<M::Latent>,
    noise: RandomStream,
) -> Result<FisherEstimate> {
    settings.validate()?;
    if theta0.dim() != model.param_dim() {
        return Err(Error::dim("θ0 does not match the model"));
    }
    if inner.len() < 2 || outer.len() < 2 {
        return Err(Error::invalid("latent pools need at least two draws"));
    }
    let chol = noise_factor(model)?;
    let pool = std::sync::Arc::new(WhitenedPool::build(
        model,
        &inner.latents,
        theta0,
        settings.derivative,
        &chol,
    )?);
    outer_scores(
        model,
        theta0,
        settings,
        &chol,
        &outer.latents,
        noise,
        |_| Ok(pool.clone()),
    )
}

fn noise_factor<M: LatentForwardModel>(model: &M) -> Result<Cholesky<f64>> {
    let lambda = model.noise_covariance();
    if lambda.rows() != model.obs_dim() {
        return Err(Error::dim("Λ does not match the observation dimension"));
    }
    Cholesky::new(lambda).map_err(|_| Error::invalid("Λ must be positive definite"))
}

/// `√(se_a² + se_b²)`.
pub fn combined_se(a: f64, b: f64) -> f64 {
    a.hypot(b)
}

/// Square-integral example with a fixed `z`.
#[derive(Debug, Clone)]
pub struct SquareIntLatentModel {
    pub forward: SquareIntForward,
    pub lambda: Matrix<f64>,
}

impl SquareIntLatentModel {
    pub fn new(z: f64, n_steps: usize, lambda: Matrix<f64>) -> Result<Self> {
        Ok(Self {
            forward: SquareIntForward::new(z, n_steps, lambda.rows())?,
            lambda,
        })
    }
}

impl LatentForwardModel for SquareIntLatentModel {
    type Latent = SquareIntLatent;

    fn param_dim(&self) -> usize {
        1
    }

    fn obs_dim(&self) -> usize {
        self.lambda.rows()
    }

    fn noise_covariance(&self) -> &Matrix<f64> {
        &self.lambda
    }

    fn sample_latent(&self, stream: RandomStream) -> Result<SquareIntLatent> {
        let path = simulate_bm_path(self.forward.z(), self.forward.n_steps(), stream)?;
        self.forward.latent(&path)
    }

    fn eta(&self, latent: &SquareIntLatent, theta: &ThetaVector<f64>) -> Result<Vec<f64>> {
        Ok(latent.eta(theta[0]))
    }

    fn deta(
        &self,
        latent: &SquareIntLatent,
        theta: &ThetaVector<f64>,
    ) -> Option<Result<Vec<Vec<f64>>>> {
        Some(Ok(vec![latent.deta(theta[0])]))
    }
}

/// Schrödinger example; a latent is one field together with its walks.
#[derive(Debug, Clone)]
pub struct SchrodingerLatentModel {
    pub boundary: BoundaryFn,
    pub settings: SchrodingerSettings,
    pub lambda: Matrix<f64>,
}

impl LatentForwardModel for SchrodingerLatentModel {
    type Latent = ComponentCoeffs;

    fn param_dim(&self) -> usize {
        1
    }

    fn obs_dim(&self) -> usize {
        self.settings.p
    }

    fn noise_covariance(&self) -> &Matrix<f64> {
        &self.lambda
    }

    fn sample_latent(&self, stream: RandomStream) -> Result<ComponentCoeffs> {
        let field = sample_field(stream.substream(0), self.settings.grid_n)?;
        component_coeffs(&field, &self.boundary, &self.settings, stream.substream(1))
    }

    fn eta(&self, latent: &ComponentCoeffs, theta: &ThetaVector<f64>) -> Result<Vec<f64>> {
        Ok(latent.eta(&self.boundary.factors(theta[0])))
    }

    fn deta(
        &self,
        latent: &ComponentCoeffs,
        theta: &ThetaVector<f64>,
    ) -> Option<Result<Vec<Vec<f64>>>> {
        Some(Ok(vec![
            latent.eta(&self.boundary.factor_derivatives(theta[0]))
        ]))
    }
}

/// Parabolic example at one observation time. A latent is a source together
/// with the path stream, so forward maps at different θ share paths.
#[derive(Debug, Clone)]
pub struct ParabolicLatentModel {
    pub spec: ParabolicSpec,
    pub settings: ParabolicSettings,
    pub lambda: Matrix<f64>,
    pub index: usize,
}

impl LatentForwardModel for ParabolicLatentModel {
    type Latent = (Source, RandomStream);

    fn param_dim(&self) -> usize {
        1
    }

    fn obs_dim(&self) -> usize {
        self.settings.p
    }

    fn noise_covariance(&self) -> &Matrix<f64> {
        &self.lambda
    }

    fn sample_latent(&self, stream: RandomStream) -> Result<(Source, RandomStream)> {
        let src = sample_source(
            stream.substream(0),
            self.spec.lower[0],
            self.spec.upper[0],
            self.settings.source_nodes,
        )?;
        Ok((src, stream.substream(1)))
    }

    fn eta(&self, latent: &(Source, RandomStream), theta: &ThetaVector<f64>) -> Result<Vec<f64>> {
        Ok(eta_coeffs_parabolic(
            &latent.0,
            &self.spec,
            theta[0],
            self.index,
            &self.settings,
            latent.1,
        )?
        .0)
    }

    fn deta(
        &self,
        latent: &(Source, RandomStream),
        theta: &ThetaVector<f64>,
    ) -> Option<Result<Vec<Vec<f64>>>> {
        Some(
            eta_coeffs_parabolic(
                &latent.0,
                &self.spec,
                theta[0],
                self.index,
                &self.settings,
                latent.1,
            )
            .map(|r| vec![r.1]),
        )
    }
}

/// `X = θ + f + γ` with `f, γ ~ N(0, 1)`: `X ~ N(θ, 2)` so `I = 1/2`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LinearToyModel;

static UNIT: std::sync::LazyLock<Matrix<f64>> = std::sync::LazyLock::new(|| Matrix::identity(1));

impl LatentForwardModel for LinearToyModel {
    type Latent = f64;

    fn param_dim(&self) -> usize {
        1
    }

    fn obs_dim(&self) -> usize {
        1
    }

    fn noise_covariance(&self) -> &Matrix<f64> {
        &UNIT
    }

    fn sample_latent(&self, stream: RandomStream) -> Result<f64> {
        Ok(stream.rng().normal())
    }

    fn eta(&self, latent: &f64, theta: &ThetaVector<f64>) -> Result<Vec<f64>> {
        Ok(vec![theta[0] + latent])
    }

    fn deta(&self, _latent: &f64, _theta: &ThetaVector<f64>) -> Option<Result<Vec<Vec<f64>>>> {
        Some(Ok(vec![vec![1.0]]))
    }
}

/// Default central-difference mode.
pub const CENTRAL_DIFFERENCE: FisherDerivative = FisherDerivative::CentralDifference {
    rel_step: FD_REL_STEP,
};
