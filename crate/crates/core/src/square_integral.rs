//! Squared-Brownian-integral example.
//!
//! The latent function is a Brownian motion `f` on `[0, z]` and the forward
//! operator is `T_{z,θ}(f)(t) = ∫₀ᵗ (f(s) − θ)² ds`. Observations are the
//! first three Legendre coefficients of `T_{z,θ}(f)` plus `N(0, Λ)` noise.
//! Mean and covariance of the coefficients are available in closed form.

use num_rational::Ratio;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::legendre::{legendre_coeff_int_as, LegendreBasis, LegendreProjector};
use crate::linalg::Matrix;
use crate::mc::{jackknife_mean_cov, McMatrix, McVector};
use crate::model::{
    DerivativeMode, MomentDerivative, MomentModel, MomentPair, ObservationGenerator, ThetaVector,
};
use crate::rng::RandomStream;
use crate::scalar::{CoeffScalar, Real};

/// Observation dimension of the example.
pub const MAX_P: usize = 3;
/// Default time steps of simulated paths.
pub const DEFAULT_STEPS: usize = 1000;
/// Default noise scale, `Λ = 0.01 I`.
pub const DEFAULT_LAMBDA_SCALE: f64 = 0.01;

fn inv<C: CoeffScalar>(n: usize) -> C {
    C::one() / C::from_usize(n).expect("small integer")
}

fn frac<C: CoeffScalar>(num: usize, den: usize) -> C {
    C::from_usize(num).expect("small integer") / C::from_usize(den).expect("small integer")
}

/// `b_{k,l}`.
pub fn cov_coeff_b<C: CoeffScalar>(k: usize, l: usize) -> C {
    let s = inv::<C>(k + l + 6);
    let first = inv::<C>(k + 4) * s.clone() + inv::<C>(k + 2) * (inv::<C>(l + 4) - s.clone());
    let second = inv::<C>(k + 5) * s.clone() + inv::<C>(k + 1) * (inv::<C>(l + 5) - s);
    frac::<C>(2, 3) * first - frac::<C>(1, 3) * second
}

/// `c_{k,l}`.
pub fn cov_coeff_c<C: CoeffScalar>(k: usize, l: usize) -> C {
    let s = inv::<C>(k + l + 5);
    let first = inv::<C>(k + 3) * s.clone() + inv::<C>(k + 2) * (inv::<C>(l + 3) - s.clone());
    let second = inv::<C>(k + 4) * s.clone() + inv::<C>(k + 1) * (inv::<C>(l + 4) - s);
    frac::<C>(2, 1) * first - frac::<C>(2, 3) * second
}

/// Rational parts of the `z⁵` and `θ² z⁴` covariance matrices:
/// `Σ_{l≤j1} Σ_{k≤j2} â_{j1,l} â_{j2,k} b_{k,l}` (and with `c`), where
/// `â` drops the `√(2j+1)` factor of the Legendre coefficient.
pub fn cov_rational_parts<C: CoeffScalar>(j1: usize, j2: usize) -> Result<(C, C)> {
    let mut bsum = C::zero();
    let mut csum = C::zero();
    for l in 0..=j1 {
        let a1: C = legendre_coeff_int_as(j1, l)?;
        for k in 0..=j2 {
            let a2: C = legendre_coeff_int_as(j2, k)?;
            let w = a1.clone() * a2;
            bsum = bsum + w.clone() * cov_coeff_b::<C>(k, l);
            csum = csum + w * cov_coeff_c::<C>(k, l);
        }
    }
    Ok((bsum, csum))
}

fn ratio_to_f64(r: &Ratio<i128>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// The `p × p` matrices `B` and `C` with `Σ_θ = Λ + z⁵ B + θ² z⁴ C`,
/// accumulated exactly in rationals and rounded once.
pub fn sigma_tables<T: Real>(p: usize) -> Result<(Matrix<T>, Matrix<T>)> {
    let mut b = Matrix::zeros(p, p);
    let mut c = Matrix::zeros(p, p);
    for j1 in 0..p {
        for j2 in 0..p {
            let (rb, rc) = cov_rational_parts::<Ratio<i128>>(j1, j2)?;
            let s = (((2 * j1 + 1) * (2 * j2 + 1)) as f64).sqrt();
            b[(j1, j2)] = T::lit(s * ratio_to_f64(&rb));
            c[(j1, j2)] = T::lit(s * ratio_to_f64(&rc));
        }
    }
    Ok((b.symmetrized(), c.symmetrized()))
}

fn check_z<T: Real>(z: T) -> Result<()> {
    if z > T::zero() && z.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("z must be positive, got {z}")))
    }
}

/// `μ_θ(z) = (z^{5/2}/6 + z^{3/2}θ²/2, √3(z^{5/2}/12 + z^{3/2}θ²/6), √5 z^{5/2}/60)`.
pub fn mean_mu<T: Real>(theta: T, z: T) -> Result<[T; 3]> {
    check_z(z)?;
    let z32 = z * z.sqrt();
    let z52 = z * z32;
    let t2 = theta * theta;
    let s3 = T::lit(3.0).sqrt();
    let s5 = T::lit(5.0).sqrt();
    Ok([
        z52 / T::lit(6.0) + z32 * t2 / T::lit(2.0),
        s3 * (z52 / T::lit(12.0) + z32 * t2 / T::lit(6.0)),
        s5 * z52 / T::lit(60.0),
    ])
}

/// `∂μ/∂θ = θ z^{3/2} (1, √3/3, 0)`.
pub fn mean_mu_dtheta<T: Real>(theta: T, z: T) -> Result<[T; 3]> {
    check_z(z)?;
    let g = theta * z * z.sqrt();
    Ok([g, T::lit(3.0).sqrt() * g / T::lit(3.0), T::zero()])
}

/// `Σ_θ(z) = Λ + z⁵ B + θ² z⁴ C` with `p = Λ.rows()`.
pub fn covariance_sigma<T: Real>(theta: T, z: T, lambda: &Matrix<T>) -> Result<Matrix<T>> {
    check_z(z)?;
    let (b, c) = sigma_tables::<T>(lambda.rows())?;
    sigma_from_tables(theta, z, lambda, &b, &c)
}

fn sigma_from_tables<T: Real>(
    theta: T,
    z: T,
    lambda: &Matrix<T>,
    b: &Matrix<T>,
    c: &Matrix<T>,
) -> Result<Matrix<T>> {
    let z4 = z.powi(4);
    let mut s = lambda.clone();
    s.axpy_mut(z4 * z, b)?;
    s.axpy_mut(theta * theta * z4, c)?;
    Ok(s)
}

/// Closed-form surrogate moments for observations at interval lengths `z_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareIntModel<T> {
    z: Vec<T>,
    lambda: Matrix<T>,
    b: Matrix<T>,
    c: Matrix<T>,
}

impl<T: Real> SquareIntModel<T> {
    /// Model index `i` uses `z[i]`; `p = Λ.rows() ≤ 3`.
    pub fn new(z: Vec<T>, lambda: Matrix<T>) -> Result<Self> {
        if z.is_empty() {
            return Err(Error::invalid("need at least one z"));
        }
        for &zi in &z {
            check_z(zi)?;
        }
        let p = lambda.rows();
        if p == 0 || p > MAX_P || lambda.cols() != p {
            return Err(Error::dim(format!("Λ must be p×p with 1 <= p <= {MAX_P}")));
        }
        if !lambda.is_symmetric(T::lit(1e-12)) {
            return Err(Error::invalid("Λ must be symmetric"));
        }
        let (b, c) = sigma_tables(p)?;
        Ok(Self { z, lambda, b, c })
    }

    /// Single interval length shared by all observations.
    pub fn iid(z: T, lambda: Matrix<T>) -> Result<Self> {
        Self::new(vec![z], lambda)
    }

    /// `Λ = scale · I_p`.
    pub fn with_scaled_identity(z: Vec<T>, p: usize, scale: T) -> Result<Self> {
        Self::new(z, Matrix::scaled_identity(p, scale))
    }

    pub fn z_sequence(&self) -> &[T] {
        &self.z
    }

    pub fn lambda(&self) -> &Matrix<T> {
        &self.lambda
    }

    fn z_of(&self, index: usize) -> Result<T> {
        if self.z.len() == 1 {
            return Ok(self.z[0]);
        }
        self.z
            .get(index)
            .copied()
            .ok_or_else(|| Error::dim(format!("no z for model index {index}")))
    }
}

impl<T: Real> MomentModel<T> for SquareIntModel<T> {
    fn param_dim(&self) -> usize {
        1
    }

    fn obs_dim(&self) -> usize {
        self.lambda.rows()
    }

    fn moments(&self, theta: &ThetaVector<T>, index: usize) -> Result<MomentPair<T>> {
        let z = self.z_of(index)?;
        let p = self.obs_dim();
        let mu = mean_mu(theta[0], z)?;
        let sigma = sigma_from_tables(theta[0], z, &self.lambda, &self.b, &self.c)?;
        MomentPair::new(mu[..p].to_vec(), sigma)
    }

    fn derivative_mode(&self) -> DerivativeMode<T> {
        DerivativeMode::Analytic
    }

    fn moment_derivative(
        &self,
        theta: &ThetaVector<T>,
        index: usize,
        l: usize,
    ) -> Result<MomentDerivative<T>> {
        if l != 0 {
            return Err(Error::dim("square-integral model has d = 1"));
        }
        let z = self.z_of(index)?;
        let p = self.obs_dim();
        let dm = mean_mu_dtheta(theta[0], z)?;
        Ok(MomentDerivative {
            mean: dm[..p].to_vec(),
            covariance: self.c.scaled(T::lit(2.0) * theta[0] * z.powi(4)),
        })
    }
}

/// Brownian path on the uniform grid of `[0, z]` with `n_steps` steps.
pub fn simulate_bm_path(z: f64, n_steps: usize, stream: RandomStream) -> Result<Vec<f64>> {
    check_z(z)?;
    if n_steps == 0 {
        return Err(Error::invalid("n_steps must be at least 1"));
    }
    let sd = (z / n_steps as f64).sqrt();
    let mut rng = stream.rng();
    let mut path = Vec::with_capacity(n_steps + 1);
    let mut b = 0.0;
    path.push(b);
    for _ in 0..n_steps {
        b += sd * rng.normal();
        path.push(b);
    }
    Ok(path)
}

/// `t ↦ ∫₀ᵗ (f(s) − θ)² ds` by cumulative trapezoid on the path grid,
/// returned on the coarser uniform grid with `out_steps` steps.
pub fn forward_map<T: Real>(path: &[T], z: T, theta: T, out_steps: usize) -> Result<Vec<T>> {
    check_z(z)?;
    if path.len() < 2 {
        return Err(Error::invalid("path needs at least two points"));
    }
    let n = path.len() - 1;
    if out_steps == 0 || out_steps > n || !n.is_multiple_of(out_steps) {
        return Err(Error::dim(format!(
            "output grid with {out_steps} steps does not subsample a path with {n} steps"
        )));
    }
    let stride = n / out_steps;
    let half_h = z / T::from_usize_lossy(n) * T::lit(0.5);
    let mut out = Vec::with_capacity(out_steps + 1);
    let mut acc = T::zero();
    let mut prev = (path[0] - theta).powi(2);
    out.push(acc);
    for (i, &f) in path.iter().enumerate().skip(1) {
        let cur = (f - theta).powi(2);
        acc += half_h * (prev + cur);
        prev = cur;
        if i % stride == 0 {
            out.push(acc);
        }
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("forward map".into()));
    }
    Ok(out)
}

/// Reusable projection of forward-map values onto the first `p` Legendre
/// coefficients on `[0, z]`.
#[derive(Debug, Clone)]
pub struct SquareIntForward {
    z: f64,
    n_steps: usize,
    projector: LegendreProjector<f64>,
}

impl SquareIntForward {
    pub fn new(z: f64, n_steps: usize, p: usize) -> Result<Self> {
        let basis = LegendreBasis::new(p.max(1) - 1, z)?;
        Ok(Self {
            z,
            n_steps,
            projector: LegendreProjector::new(&basis, n_steps + 1, p)?,
        })
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// `η_{z,θ}(f)`.
    pub fn eta(&self, path: &[f64], theta: f64) -> Result<Vec<f64>> {
        let t = forward_map(path, self.z, theta, self.n_steps)?;
        self.projector.apply(&t)
    }

    /// Decomposition `η_θ = A − 2θ B' + θ² C'` of the coefficient vector.
    pub fn latent(&self, path: &[f64]) -> Result<SquareIntLatent> {
        let a = self
            .projector
            .apply(&forward_map(path, self.z, 0.0, self.n_steps)?)?;
        let h = self.z / self.n_steps as f64;
        let mut cum = Vec::with_capacity(path.len());
        let mut acc = 0.0;
        cum.push(0.0);
        for w in path.windows(2) {
            acc += 0.5 * h * (w[0] + w[1]);
            cum.push(acc);
        }
        let b = self.projector.apply(&cum)?;
        let t: Vec<f64> = (0..path.len()).map(|i| i as f64 * h).collect();
        let c = self.projector.apply(&t)?;
        Ok(SquareIntLatent { a, b, c })
    }
}

/// `θ`-free summary of one Brownian path: `η_θ = a − 2θ b + θ² c`, exact
/// under the trapezoid forward map.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareIntLatent {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl SquareIntLatent {
    pub fn eta(&self, theta: f64) -> Vec<f64> {
        (0..self.a.len())
            .map(|j| self.a[j] - 2.0 * theta * self.b[j] + theta * theta * self.c[j])
            .collect()
    }

    pub fn deta(&self, theta: f64) -> Vec<f64> {
        (0..self.a.len())
            .map(|j| -2.0 * self.b[j] + 2.0 * theta * self.c[j])
            .collect()
    }
}

/// Data generator for the example.
#[derive(Debug, Clone)]
pub struct SquareIntGenerator {
    forwards: Vec<SquareIntForward>,
    lambda: Matrix<f64>,
}

impl SquareIntGenerator {
    /// Observation `k` uses `z[k mod len]`.
    pub fn new(z: Vec<f64>, lambda: Matrix<f64>, n_steps: usize) -> Result<Self> {
        let p = lambda.rows();
        if p == 0 || p > MAX_P {
            return Err(Error::dim("square-integral observations have 1 <= p <= 3"));
        }
        if z.is_empty() {
            return Err(Error::invalid("need at least one z"));
        }
        let forwards = z
            .iter()
            .map(|&zi| SquareIntForward::new(zi, n_steps, p))
            .collect::<Result<_>>()?;
        Ok(Self { forwards, lambda })
    }
}

impl ObservationGenerator for SquareIntGenerator {
    fn obs_dim(&self) -> usize {
        self.lambda.rows()
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
        let fw = &self.forwards[index];
        let path = simulate_bm_path(fw.z(), fw.n_steps(), stream)?;
        fw.eta(&path, theta[0])
    }

    fn index_for(&self, k: usize) -> usize {
        k % self.forwards.len()
    }
}

/// Brute-force moments of the first `n_coeffs` coefficients of
/// `T_{z,θ}(f)` (no noise) over `n_paths` Brownian paths, with jackknife
/// standard errors over 100 blocks.
pub fn mc_moments_oracle(
    theta: f64,
    z: f64,
    n_paths: usize,
    n_steps: usize,
    n_coeffs: usize,
    stream: RandomStream,
) -> Result<(McVector, McMatrix)> {
    if n_paths < 100 {
        return Err(Error::invalid("the oracle needs at least 100 paths"));
    }
    let fw = SquareIntForward::new(z, n_steps, n_coeffs)?;
    let samples: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|k| {
            let path = simulate_bm_path(z, n_steps, stream.substream(k as u64))?;
            fw.eta(&path, theta)
        })
        .collect::<Result<_>>()?;
    jackknife_mean_cov(&samples, 100)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bvm::{bvm_precision_index, hessian_kl_fd};
    use crate::model::central_difference_derivative;

    type R = Ratio<i64>;

    #[test]
    fn b_and_c_at_origin() {
        assert_eq!(cov_coeff_b::<R>(0, 0), R::new(1, 30));
        assert_eq!(cov_coeff_c::<R>(0, 0), R::new(1, 5));
        assert!((cov_coeff_b::<f64>(0, 0) - 1.0 / 30.0).abs() < 1e-15);
        assert!((cov_coeff_c::<f64>(0, 0) - 0.2).abs() < 1e-15);
        // constant term of the second moment minus the squared mean
        let cross: R = R::new(1, 18) - R::new(1, 45) + R::new(1, 36) - R::new(1, 36);
        assert_eq!(cross, R::new(1, 30));
        assert_eq!(R::new(1, 3) - R::new(1, 6) + R::new(1, 30), R::new(1, 5));
        for k in 0..5 {
            for l in 0..5 {
                assert_eq!(cov_coeff_b::<R>(k, l), cov_coeff_b::<R>(l, k));
                assert_eq!(cov_coeff_c::<R>(k, l), cov_coeff_c::<R>(l, k));
            }
        }
        assert_eq!(cov_coeff_b::<R>(0, 1), R::new(8, 315));
    }

    #[test]
    fn exact_covariance_at_unit_interval() {
        let s = |t: f64| covariance_sigma::<f64>(t, 1.0, &Matrix::zeros(3, 3)).unwrap();
        let s3 = 3f64.sqrt();
        let s5 = 5f64.sqrt();
        let s15 = 15f64.sqrt();
        for &t in &[0.0, 0.7, 2.0] {
            let m = s(t);
            let t2 = t * t;
            let want = [
                ((0, 0), t2 / 5.0 + 1.0 / 30.0),
                ((0, 1), s3 * (56.0 * t2 + 11.0) / 630.0),
                ((0, 2), s5 * (8.0 * t2 + 3.0) / 840.0),
                ((1, 1), 13.0 * t2 / 105.0 + 1.0 / 35.0),
                ((1, 2), s15 * (42.0 * t2 + 17.0) / 7560.0),
                ((2, 2), t2 / 126.0 + 1.0 / 252.0),
            ];
            for ((i, j), v) in want {
                assert!(
                    (m[(i, j)] - v).abs() < 1e-14,
                    "({i},{j}) θ={t}: {} vs {v}",
                    m[(i, j)]
                );
                assert_eq!(m[(i, j)], m[(j, i)]);
            }
            assert_eq!(s(t), s(-t));
        }
    }

    #[test]
    fn mean_examples() {
        let m = mean_mu::<f64>(0.0, 1.0).unwrap();
        assert!((m[0] - 1.0 / 6.0).abs() < 1e-15);
        assert!((m[1] - 0.144338).abs() < 1e-6);
        assert!((m[2] - 0.037268).abs() < 1e-6);
        let m = mean_mu::<f64>(2.0, 1.0).unwrap();
        assert!((m[0] - 13.0 / 6.0).abs() < 1e-14);
        assert!((m[1] - 0.75 * 3f64.sqrt()).abs() < 1e-14);
        assert!(mean_mu(1.0, 0.0).is_err());
    }

    #[test]
    fn covariance_minus_lambda_is_psd() {
        for &z in &[0.1, 1.0, 2.0] {
            for &t in &[0.0, 1.0, 40.0] {
                let s = covariance_sigma::<f64>(t, z, &Matrix::zeros(3, 3)).unwrap();
                let e = crate::linalg::min_eigenvalue(&s).unwrap();
                assert!(e > -1e-12 * s.max_abs(), "z={z} θ={t}: {e}");
            }
        }
    }

    #[test]
    fn analytic_derivatives_match_central_differences() {
        let m = SquareIntModel::<f64>::with_scaled_identity(vec![0.5, 1.0], 3, 0.01).unwrap();
        for &t in &[0.3, 2.0, 40.0] {
            let th = ThetaVector::scalar(t).unwrap();
            for i in 0..2 {
                let a = m.moment_derivative(&th, i, 0).unwrap();
                let f = central_difference_derivative(&m, &th, i, 0, 1e-5).unwrap();
                for (x, y) in a.mean.iter().zip(&f.mean) {
                    assert!((x - y).abs() <= 1e-6 * x.abs().max(1e-6));
                }
                let rel = a.covariance.sub(&f.covariance).unwrap().frobenius_norm()
                    / a.covariance.frobenius_norm();
                assert!(rel < 1e-6);
            }
        }
    }

    #[test]
    fn precision_vanishes_at_zero_and_matches_hessian() {
        let m = SquareIntModel::<f64>::with_scaled_identity(vec![1.0], 3, 0.01).unwrap();
        let v0 = bvm_precision_index(&m, &ThetaVector::scalar(0.0).unwrap(), 0).unwrap();
        assert_eq!(v0[(0, 0)], 0.0);
        let th = ThetaVector::scalar(2.0).unwrap();
        let v = bvm_precision_index(&m, &th, 0).unwrap();
        let h = hessian_kl_fd(&m, &th, &[0], 1e-3).unwrap();
        assert!(((v[(0, 0)] - h[(0, 0)]) / v[(0, 0)]).abs() < 1e-4);
    }

    #[test]
    fn scalar_precision_closed_form() {
        let lam = 0.01;
        let m = SquareIntModel::<f64>::with_scaled_identity(vec![1.0], 1, lam).unwrap();
        for &t in &[0.5f64, 2.0, 40.0] {
            let v = bvm_precision_index(&m, &ThetaVector::scalar(t).unwrap(), 0).unwrap()[(0, 0)];
            let s = 1.0 / 30.0 + t * t / 5.0 + lam;
            let ds = 2.0 * t / 5.0;
            let want = 0.5 * (ds / s).powi(2) + t * t / s;
            assert!((v - want).abs() < 1e-12 * want);
        }
    }

    #[test]
    fn f32_model_agrees_with_f64() {
        let m64 = SquareIntModel::<f64>::with_scaled_identity(vec![1.0], 3, 0.01).unwrap();
        let m32 = SquareIntModel::<f32>::with_scaled_identity(vec![1.0], 3, 0.01).unwrap();
        let a = m64.moments(&ThetaVector::scalar(2.0).unwrap(), 0).unwrap();
        let b = m32
            .moments(&ThetaVector::scalar(2.0f32).unwrap(), 0)
            .unwrap();
        for (x, y) in a.covariance.as_slice().iter().zip(b.covariance.as_slice()) {
            assert!((x - *y as f64).abs() < 1e-6 * x.abs().max(1.0));
        }
    }

    #[test]
    fn forward_map_examples() {
        let c = vec![1.5; 1001];
        assert!(forward_map(&c, 1.0, 1.5, 1000)
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
        let zero = vec![0.0; 1001];
        let t = forward_map(&zero, 1.0, 1.0, 100).unwrap();
        for (i, v) in t.iter().enumerate() {
            assert!((v - i as f64 / 100.0).abs() < 1e-12);
        }
        let ramp: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
        let t = forward_map(&ramp, 1.0, 0.0, 1000).unwrap();
        assert!((t[1000] - 1.0 / 3.0).abs() < 1e-4);
        assert!(t.windows(2).all(|w| w[1] >= w[0]));
        assert!(forward_map(&ramp, 1.0, 0.0, 3).is_err());
        assert!(forward_map(&ramp, 1.0, 0.0, 2000).is_err());
    }

    #[test]
    fn latent_decomposition_reproduces_eta() {
        let fw = SquareIntForward::new(0.7, 500, 3).unwrap();
        let path = simulate_bm_path(0.7, 500, RandomStream::new(3, 1)).unwrap();
        let lat = fw.latent(&path).unwrap();
        for &t in &[0.0, 1.3, -2.0, 40.0] {
            let direct = fw.eta(&path, t).unwrap();
            let via = lat.eta(t);
            for (a, b) in direct.iter().zip(&via) {
                assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} vs {b}");
            }
        }
        let zero = vec![0.0; 501];
        let fw1 = SquareIntForward::new(1.0, 500, 3).unwrap();
        let d = fw1.latent(&zero).unwrap().deta(1.0);
        assert!((d[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn brownian_path_basics() {
        let p = simulate_bm_path(2.0, 10, RandomStream::new(1, 2)).unwrap();
        assert_eq!(p.len(), 11);
        assert_eq!(p[0], 0.0);
        assert_eq!(
            p,
            simulate_bm_path(2.0, 10, RandomStream::new(1, 2)).unwrap()
        );
        assert!(simulate_bm_path(1.0, 0, RandomStream::new(1, 2)).is_err());
    }

    #[test]
    fn z_sequence_indices() {
        let m = SquareIntModel::<f64>::with_scaled_identity(vec![1.0, 0.5], 2, 0.01).unwrap();
        let th = ThetaVector::scalar(1.0).unwrap();
        assert!(m.moments(&th, 1).is_ok());
        assert!(m.moments(&th, 2).is_err());
        assert!(SquareIntModel::with_scaled_identity(vec![1.0], 4, 0.01).is_err());
        assert!(SquareIntModel::with_scaled_identity(vec![-1.0], 3, 0.01).is_err());
    }
}
