//! Surrogate-model interface and the Gaussian surrogate likelihood.
//!
//! A hierarchical model draws a latent function `f_i ~ G` and observes
//! `X_i = η_θ^{(i)}(f_i) + γ_i`, `γ_i ~ N(0, Λ)`. The surrogate replaces the
//! intractable law of `X_i` by `N(μ_θ^{(i)}, Σ_θ^{(i)})` with the exact first
//! two moments. [`MomentModel`] exposes those moments and their
//! θ-derivatives; the functions here assemble the surrogate log-likelihood
//! and its score from them.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::ops::Deref;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{psd_sqrt, Cholesky, LinalgError, Matrix};
use crate::rng::RandomStream;
use crate::scalar::{compensated_sum, Real};

/// Model parameter θ ∈ ℝ^d.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaVector<T>(Vec<T>);

impl<T: Real> ThetaVector<T> {
    pub fn new(components: Vec<T>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("theta must have at least one component"));
        }
        if components.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("theta component".into()));
        }
        Ok(Self(components))
    }

    pub fn scalar(value: T) -> Result<Self> {
        Self::new(vec![value])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Copy with component `l` replaced.
    pub fn with_component(&self, l: usize, value: T) -> Self {
        let mut c = self.0.clone();
        c[l] = value;
        Self(c)
    }

    /// `self + step · direction`.
    pub fn offset(&self, direction: &[T], step: T) -> Self {
        Self(
            self.0
                .iter()
                .zip(direction)
                .map(|(&a, &b)| a + step * b)
                .collect(),
        )
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.0.iter().map(|v| v.as_f64()).collect()
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

impl<T> Deref for ThetaVector<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.0
    }
}

/// `N` observations of dimension `p`, each tagged with its model index `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationBatch<T> {
    observations: Vec<Vec<T>>,
    index_of: Vec<usize>,
}

impl<T: Real> ObservationBatch<T> {
    pub fn new(observations: Vec<Vec<T>>, index_of: Vec<usize>) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::invalid("a batch needs at least one observation"));
        }
        if observations.len() != index_of.len() {
            return Err(Error::dim(format!(
                "{} observations but {} indices",
                observations.len(),
                index_of.len()
            )));
        }
        let p = observations[0].len();
        if p == 0 {
            return Err(Error::invalid("observations must have positive dimension"));
        }
        for (k, x) in observations.iter().enumerate() {
            if x.len() != p {
                return Err(Error::dim(format!(
                    "observation {k} has length {} (expected {p})",
                    x.len()
                )));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("observation {k}")));
            }
        }
        Ok(Self {
            observations,
            index_of,
        })
    }

    /// All observations share model index 0.
    pub fn iid(observations: Vec<Vec<T>>) -> Result<Self> {
        let n = observations.len();
        Self::new(observations, vec![0; n])
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.observations[0].len()
    }

    pub fn observations(&self) -> &[Vec<T>] {
        &self.observations
    }

    pub fn index_of(&self) -> &[usize] {
        &self.index_of
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[T])> {
        self.index_of
            .iter()
            .copied()
            .zip(self.observations.iter().map(Vec::as_slice))
    }

    /// Observation count per distinct model index, in ascending index order.
    pub fn index_counts(&self) -> BTreeMap<usize, usize> {
        let mut m = BTreeMap::new();
        for &i in &self.index_of {
            *m.entry(i).or_insert(0) += 1;
        }
        m
    }

    /// First `n` observations.
    pub fn head(&self, n: usize) -> Result<Self> {
        let n = n.min(self.len());
        Self::new(self.observations[..n].to_vec(), self.index_of[..n].to_vec())
    }

    /// Writes `index,x_1,...,x_p` CSV with 17 significant digits.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["index".to_string()];
        header.extend((1..=self.dim()).map(|k| format!("x_{k}")));
        w.write_record(&header)?;
        for (i, x) in self.iter() {
            let mut rec = vec![i.to_string()];
            rec.extend(x.iter().map(|v| format_float(v.as_f64())));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.get(0) != Some("index") {
            return Err(Error::invalid("first CSV column must be `index`"));
        }
        for (k, h) in headers.iter().enumerate().skip(1) {
            if h != format!("x_{k}") {
                return Err(Error::invalid(format!("unexpected column `{h}`")));
            }
        }
        let mut obs = Vec::new();
        let mut idx = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let i: usize = rec[0]
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad index `{}`", &rec[0])))?;
            let x = rec
                .iter()
                .skip(1)
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map(T::lit)
                        .map_err(|_| Error::invalid(format!("bad value `{s}`")))
                })
                .collect::<Result<Vec<T>>>()?;
            idx.push(i);
            obs.push(x);
        }
        Self::new(obs, idx)
    }

    pub fn read_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// Lossless 17-significant-digit float formatting used by every CSV writer.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Surrogate mean `μ_θ^{(i)}` and covariance `Σ_θ^{(i)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentPair<T> {
    pub mean: Vec<T>,
    pub covariance: Matrix<T>,
}

/// Relative asymmetry tolerated in a covariance.
pub const SYMMETRY_TOL: f64 = 1e-12;

impl<T: Real> MomentPair<T> {
    pub fn new(mean: Vec<T>, covariance: Matrix<T>) -> Result<Self> {
        let p = mean.len();
        if covariance.rows() != p || covariance.cols() != p {
            return Err(Error::dim(format!(
                "mean has length {p} but covariance is {}x{}",
                covariance.rows(),
                covariance.cols()
            )));
        }
        if !covariance.is_symmetric(T::lit(SYMMETRY_TOL)) {
            return Err(Error::invalid("covariance is not symmetric"));
        }
        Ok(Self { mean, covariance })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// First θ-derivative of a moment pair along one coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentDerivative<T> {
    pub mean: Vec<T>,
    pub covariance: Matrix<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DerivativeMode<T> {
    Analytic,
    /// Central differences with step `rel_step · max(1, |θ_l|)`.
    CentralDifference {
        rel_step: T,
    },
}

/// Default relative step of the first-derivative stencil.
pub const FD_REL_STEP: f64 = 1e-5;

/// Abstract surrogate model.
pub trait MomentModel<T: Real> {
    /// Parameter dimension `d`.
    fn param_dim(&self) -> usize;
    /// Observation dimension `p`.
    fn obs_dim(&self) -> usize;
    fn moments(&self, theta: &ThetaVector<T>, index: usize) -> Result<MomentPair<T>>;

    fn derivative_mode(&self) -> DerivativeMode<T> {
        DerivativeMode::CentralDifference {
            rel_step: T::lit(FD_REL_STEP),
        }
    }

    /// `(∂μ/∂θ_l, ∂Σ/∂θ_l)`. The default is a central difference; models with
    /// closed forms override it together with [`MomentModel::derivative_mode`].
    fn moment_derivative(
        &self,
        theta: &ThetaVector<T>,
        index: usize,
        l: usize,
    ) -> Result<MomentDerivative<T>> {
        let rel = match self.derivative_mode() {
            DerivativeMode::CentralDifference { rel_step } => rel_step,
            DerivativeMode::Analytic => T::lit(FD_REL_STEP),
        };
        central_difference_derivative(self, theta, index, l, rel)
    }

    /// All `d` derivatives at once.
    fn moment_gradients(
        &self,
        theta: &ThetaVector<T>,
        index: usize,
    ) -> Result<Vec<MomentDerivative<T>>> {
        (0..self.param_dim())
            .map(|l| self.moment_derivative(theta, index, l))
            .collect()
    }
}

/// Central-difference derivative of the moments, independent of any
/// analytic override.
pub fn central_difference_derivative<T: Real, M: MomentModel<T> + ?Sized>(
    model: &M,
    theta: &ThetaVector<T>,
    index: usize,
    l: usize,
    rel_step: T,
) -> Result<MomentDerivative<T>> {
    if l >= theta.dim() {
        return Err(Error::dim(format!(
            "coordinate {l} out of range for d = {}",
            theta.dim()
        )));
    }
    let h = rel_step * T::one().max(theta[l].abs());
    let plus = model.moments(&theta.with_component(l, theta[l] + h), index)?;
    let minus = model.moments(&theta.with_component(l, theta[l] - h), index)?;
    let inv = T::one() / (h + h);
    let mean = plus
        .mean
        .iter()
        .zip(&minus.mean)
        .map(|(&a, &b)| (a - b) * inv)
        .collect();
    let covariance = plus.covariance.sub(&minus.covariance)?.scaled(inv);
    Ok(MomentDerivative { mean, covariance })
}

fn factor_at<T: Real>(pair: &MomentPair<T>, index: usize, theta: &[T]) -> Result<Cholesky<T>> {
    Cholesky::new(&pair.covariance).map_err(|e| match e {
        LinalgError::NotPositiveDefinite { pivot, .. } => Error::NotPositiveDefinite {
            index,
            theta: theta.iter().map(|v| v.as_f64()).collect(),
            pivot,
        },
        other => other.into(),
    })
}

struct IndexTerms<T> {
    mean: Vec<T>,
    chol: Cholesky<T>,
}

fn index_terms<T: Real, M: MomentModel<T> + ?Sized>(
    model: &M,
    theta: &ThetaVector<T>,
    batch: &ObservationBatch<T>,
) -> Result<BTreeMap<usize, IndexTerms<T>>> {
    if batch.dim() != model.obs_dim() {
        return Err(Error::dim(format!(
            "batch has p = {} but model has p = {}",
            batch.dim(),
            model.obs_dim()
        )));
    }
    if theta.dim() != model.param_dim() {
        return Err(Error::dim(format!(
            "theta has d = {} but model has d = {}",
            theta.dim(),
            model.param_dim()
        )));
    }
    let mut out = BTreeMap::new();
    for &i in batch.index_counts().keys() {
        let pair = model.moments(theta, i)?;
        let chol = factor_at(&pair, i, theta)?;
        out.insert(
            i,
            IndexTerms {
                mean: pair.mean,
                chol,
            },
        );
    }
    Ok(out)
}

/// Log-density of `N_p(mean, LLᵀ)` at `x`.
pub fn gaussian_log_density<T: Real>(x: &[T], mean: &[T], chol: &Cholesky<T>) -> T {
    let r: Vec<T> = x.iter().zip(mean).map(|(&a, &b)| a - b).collect();
    let p = T::from_usize_lossy(x.len());
    let half = T::lit(0.5);
    -half * (p * T::lit(std::f64::consts::TAU).ln() + chol.log_det() + chol.inv_quad_form(&r))
}

/// `l^{(N)}(θ) = Σ_i log φ(X_i; μ_θ^{(i)}, Σ_θ^{(i)})`.
pub fn surrogate_loglik<T: Real, M: MomentModel<T> + ?Sized>(
    model: &M,
    theta: &ThetaVector<T>,
    batch: &ObservationBatch<T>,
) -> Result<T> {
    let terms = index_terms(model, theta, batch)?;
    Ok(compensated_sum(batch.iter().map(|(i, x)| {
        let t = &terms[&i];
        gaussian_log_density(x, &t.mean, &t.chol)
    })))
}

/// `∇l^{(N)}(θ)` via the Gaussian chain rule
/// `∂_l log φ = ∂μ_lᵀ Σ⁻¹ r + ½ rᵀ Σ⁻¹ ∂Σ_l Σ⁻¹ r − ½ tr(Σ⁻¹ ∂Σ_l)`.
pub fn surrogate_loglik_grad<T: Real, M: MomentModel<T> + ?Sized>(
    model: &M,
    theta: &ThetaVector<T>,
    batch: &ObservationBatch<T>,
) -> Result<Vec<T>> {
    let terms = index_terms(model, theta, batch)?;
    let d = theta.dim();
    let half = T::lit(0.5);
    let mut per_index = BTreeMap::new();
    for (&i, t) in &terms {
        let derivs = model.moment_gradients(theta, i)?;
        let traces: Vec<T> = derivs
            .iter()
            .map(|dv| t.chol.solve_mat(&dv.covariance).map(|a| a.trace()))
            .collect::<std::result::Result<_, _>>()?;
        per_index.insert(i, (derivs, traces));
    }
    let mut parts: Vec<Vec<T>> = vec![Vec::with_capacity(batch.len()); d];
    for (i, x) in batch.iter() {
        let t = &terms[&i];
        let (derivs, traces) = &per_index[&i];
        let r: Vec<T> = x.iter().zip(&t.mean).map(|(&a, &b)| a - b).collect();
        let alpha = t.chol.solve_vec(&r)?;
        for l in 0..d {
            let dv = &derivs[l];
            let lin = crate::linalg::dot(&dv.mean, &alpha);
            let quad = crate::linalg::dot(&alpha, &dv.covariance.matvec(&alpha)?);
            parts[l].push(lin + half * quad - half * traces[l]);
        }
    }
    Ok(parts.into_iter().map(compensated_sum).collect())
}

/// Sufficient statistics `(x, vec(x xᵀ))` of the Gaussian family, row-major.
pub fn exp_family_stats<T: Real>(x: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(x.len() + x.len() * x.len());
    out.extend_from_slice(x);
    for &a in x {
        for &b in x {
            out.push(a * b);
        }
    }
    out
}

/// Latent sampler plus forward map of an example model, used to simulate
/// data from the true hierarchical law.
pub trait ObservationGenerator: Sync {
    fn obs_dim(&self) -> usize;
    /// Noise covariance `Λ^{(i)}`; may be degenerate for data generation.
    fn noise_covariance(&self, index: usize) -> Matrix<f64>;
    /// `η_θ^{(i)}(f)` for a fresh latent draw taken from `stream`.
    fn draw_forward(
        &self,
        theta: &ThetaVector<f64>,
        index: usize,
        stream: RandomStream,
    ) -> Result<Vec<f64>>;
    /// Model index of the `k`-th observation.
    fn index_for(&self, k: usize) -> usize {
        let _ = k;
        0
    }
}

/// Draws `X_k = η_{θ0}^{(i_k)}(f_k) + γ_k` for `k = 0..n`. Observation `k`
/// uses substream `k` of `stream`, so the batch does not depend on the
/// number of worker threads.
pub fn sample_observations<G: ObservationGenerator + ?Sized>(
    generator: &G,
    theta0: &ThetaVector<f64>,
    n: usize,
    stream: RandomStream,
) -> Result<ObservationBatch<f64>> {
    if n == 0 {
        return Err(Error::invalid("N must be at least 1"));
    }
    let p = generator.obs_dim();
    let mut roots: BTreeMap<usize, Matrix<f64>> = BTreeMap::new();
    for k in 0..n {
        let i = generator.index_for(k);
        if let std::collections::btree_map::Entry::Vacant(e) = roots.entry(i) {
            let lam = generator.noise_covariance(i);
            if lam.rows() != p || lam.cols() != p {
                return Err(Error::dim("noise covariance does not match p"));
            }
            e.insert(psd_sqrt(&lam)?);
        }
    }
    let rows: Vec<Result<(usize, Vec<f64>)>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let i = generator.index_for(k);
            let s = stream.substream(k as u64);
            let mut eta = generator.draw_forward(theta0, i, s.substream(0))?;
            if eta.len() != p {
                return Err(Error::dim("forward map returned wrong length"));
            }
            let mut rng = s.substream(1).rng();
            let xi: Vec<f64> = (0..p).map(|_| rng.normal()).collect();
            let noise = roots[&i].matvec(&xi)?;
            for (e, g) in eta.iter_mut().zip(noise) {
                *e += g;
            }
            if eta.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("simulated observation {k}")));
            }
            Ok((i, eta))
        })
        .collect();
    let mut obs = Vec::with_capacity(n);
    let mut idx = Vec::with_capacity(n);
    for r in rows {
        let (i, x) = r?;
        idx.push(i);
        obs.push(x);
    }
    ObservationBatch::new(obs, idx)
}

#[cfg(test)]
pub(crate) mod test_models {
    use super::*;

    /// `μ_θ = θ` (p = d), `Σ = σ² I`; closed-form derivatives.
    pub struct LinearGaussian<T> {
        pub dim: usize,
        pub variance: T,
    }

    impl<T: Real> MomentModel<T> for LinearGaussian<T> {
        fn param_dim(&self) -> usize {
            self.dim
        }
        fn obs_dim(&self) -> usize {
            self.dim
        }
        fn moments(&self, theta: &ThetaVector<T>, _index: usize) -> Result<MomentPair<T>> {
            MomentPair::new(
                theta.to_vec(),
                Matrix::scaled_identity(self.dim, self.variance),
            )
        }
        fn derivative_mode(&self) -> DerivativeMode<T> {
            DerivativeMode::Analytic
        }
        fn moment_derivative(
            &self,
            _theta: &ThetaVector<T>,
            _index: usize,
            l: usize,
        ) -> Result<MomentDerivative<T>> {
            let mut mean = vec![T::zero(); self.dim];
            mean[l] = T::one();
            Ok(MomentDerivative {
                mean,
                covariance: Matrix::zeros(self.dim, self.dim),
            })
        }
    }

    /// Constant moments.
    pub struct Constant {
        pub pair: MomentPair<f64>,
        pub d: usize,
    }

    impl MomentModel<f64> for Constant {
        fn param_dim(&self) -> usize {
            self.d
        }
        fn obs_dim(&self) -> usize {
            self.pair.dim()
        }
        fn moments(&self, _theta: &ThetaVector<f64>, _index: usize) -> Result<MomentPair<f64>> {
            Ok(self.pair.clone())
        }
    }

    /// Nonlinear two-parameter model with θ-dependent covariance and a
    /// per-index scale; derivatives by hand.
    pub struct Curved;

    impl MomentModel<f64> for Curved {
        fn param_dim(&self) -> usize {
            2
        }
        fn obs_dim(&self) -> usize {
            2
        }
        fn moments(&self, th: &ThetaVector<f64>, index: usize) -> Result<MomentPair<f64>> {
            let s = 1.0 + index as f64 * 0.5;
            let (a, b) = (th[0], th[1]);
            let mean = vec![s * a * a + b, (a * b).sin()];
            let cov =
                Matrix::from_rows(&[vec![1.0 + a * a, 0.3 * b], vec![0.3 * b, 2.0 + b.exp()]])?;
            MomentPair::new(mean, cov)
        }
        fn derivative_mode(&self) -> DerivativeMode<f64> {
            DerivativeMode::Analytic
        }
        fn moment_derivative(
            &self,
            th: &ThetaVector<f64>,
            index: usize,
            l: usize,
        ) -> Result<MomentDerivative<f64>> {
            let s = 1.0 + index as f64 * 0.5;
            let (a, b) = (th[0], th[1]);
            Ok(if l == 0 {
                MomentDerivative {
                    mean: vec![2.0 * s * a, b * (a * b).cos()],
                    covariance: Matrix::from_rows(&[vec![2.0 * a, 0.0], vec![0.0, 0.0]])?,
                }
            } else {
                MomentDerivative {
                    mean: vec![1.0, a * (a * b).cos()],
                    covariance: Matrix::from_rows(&[vec![0.0, 0.3], vec![0.3, b.exp()]])?,
                }
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::test_models::*;
    use super::*;
    use proptest::prelude::*;

    fn lg() -> LinearGaussian<f64> {
        LinearGaussian {
            dim: 1,
            variance: 1.0,
        }
    }

    #[test]
    fn loglik_standard_normal_values() {
        let th = ThetaVector::scalar(0.0).unwrap();
        let b0 = ObservationBatch::iid(vec![vec![0.0]]).unwrap();
        let b1 = ObservationBatch::iid(vec![vec![1.0]]).unwrap();
        let c = -0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((surrogate_loglik(&lg(), &th, &b0).unwrap() - c).abs() < 1e-14);
        assert!((surrogate_loglik(&lg(), &th, &b1).unwrap() - (c - 0.5)).abs() < 1e-14);
        assert!((c + 0.918939).abs() < 1e-6);
    }

    #[test]
    fn loglik_bivariate_hand_value() {
        let pair = MomentPair::new(
            vec![0.0, 0.0],
            Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap(),
        )
        .unwrap();
        let m = Constant { pair, d: 1 };
        let th = ThetaVector::scalar(0.0).unwrap();
        let b = ObservationBatch::iid(vec![vec![1.0, 2.0]]).unwrap();
        // Σ⁻¹ = [[2,-1],[-1,2]]/3, xᵀΣ⁻¹x = (2 - 4 + 8)/3 = 2
        let expected = -(2.0 * std::f64::consts::PI).ln() - 0.5 * 3f64.ln() - 1.0;
        let got = surrogate_loglik(&m, &th, &b).unwrap();
        assert!((got - expected).abs() < 1e-13);
        assert!((got + 3.38719).abs() < 1e-5);
    }

    #[test]
    fn loglik_reports_non_pd_index() {
        let pair = MomentPair::new(vec![0.0], Matrix::from_rows(&[vec![-1.0]]).unwrap()).unwrap();
        let m = Constant { pair, d: 1 };
        let th = ThetaVector::scalar(0.5).unwrap();
        let b = ObservationBatch::new(vec![vec![0.0]], vec![3]).unwrap();
        match surrogate_loglik(&m, &th, &b) {
            Err(Error::NotPositiveDefinite { index, theta, .. }) => {
                assert_eq!(index, 3);
                assert_eq!(theta, vec![0.5]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn score_of_linear_gaussian() {
        let b = ObservationBatch::iid(vec![vec![0.7]]).unwrap();
        let at = ThetaVector::scalar(0.7).unwrap();
        assert_eq!(surrogate_loglik_grad(&lg(), &at, &b).unwrap(), vec![0.0]);
        let b = ObservationBatch::iid(vec![vec![1.7]]).unwrap();
        assert!((surrogate_loglik_grad(&lg(), &at, &b).unwrap()[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn exp_family_stats_row_major() {
        assert_eq!(exp_family_stats(&[2.0]), vec![2.0, 4.0]);
        assert_eq!(
            exp_family_stats(&[1.0, 2.0]),
            vec![1.0, 2.0, 1.0, 2.0, 2.0, 4.0]
        );
        assert_eq!(exp_family_stats(&[0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn batch_validation() {
        assert!(ObservationBatch::<f64>::iid(vec![]).is_err());
        assert!(ObservationBatch::iid(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(ObservationBatch::iid(vec![vec![f64::NAN]]).is_err());
        assert!(ThetaVector::<f64>::new(vec![]).is_err());
        assert!(ThetaVector::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn csv_roundtrip_is_lossless() {
        let b = ObservationBatch::new(
            vec![vec![0.1, -1.0 / 3.0], vec![1e-300, 2.5e10]],
            vec![0, 4],
        )
        .unwrap();
        let mut buf = Vec::new();
        b.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("index,x_1,x_2\n"));
        let back = ObservationBatch::<f64>::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn gradient_matches_finite_differences_on_curved_model() {
        let m = Curved;
        let b = ObservationBatch::new(
            vec![vec![1.0, 0.2], vec![-0.3, 0.5], vec![2.0, -1.0]],
            vec![0, 1, 1],
        )
        .unwrap();
        let th = ThetaVector::new(vec![0.4, -0.2]).unwrap();
        let g = surrogate_loglik_grad(&m, &th, &b).unwrap();
        for l in 0..2 {
            let h = 1e-5 * th[l].abs().max(1.0);
            let fp = surrogate_loglik(&m, &th.with_component(l, th[l] + h), &b).unwrap();
            let fm = surrogate_loglik(&m, &th.with_component(l, th[l] - h), &b).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            assert!(
                (g[l] - fd).abs() <= 1e-6 * fd.abs().max(1.0),
                "{l}: {} vs {fd}",
                g[l]
            );
        }
    }

    #[test]
    fn analytic_derivatives_agree_with_default_stencil() {
        let th = ThetaVector::new(vec![0.9, 0.3]).unwrap();
        for l in 0..2 {
            let a = Curved.moment_derivative(&th, 1, l).unwrap();
            let fd = central_difference_derivative(&Curved, &th, 1, l, 1e-5).unwrap();
            for (x, y) in a.mean.iter().zip(&fd.mean) {
                assert!((x - y).abs() <= 1e-5 * x.abs().max(1e-3));
            }
            assert!(a.covariance.sub(&fd.covariance).unwrap().max_abs() < 1e-8);
        }
    }

    proptest! {
        #[test]
        fn loglik_is_additive_over_singletons(xs in proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0, 0usize..3), 1..12),
                                              a in -1.0f64..1.0, b in -1.0f64..1.0) {
            let obs: Vec<Vec<f64>> = xs.iter().map(|t| vec![t.0, t.1]).collect();
            let idx: Vec<usize> = xs.iter().map(|t| t.2).collect();
            let batch = ObservationBatch::new(obs.clone(), idx.clone()).unwrap();
            let th = ThetaVector::new(vec![a, b]).unwrap();
            let total = surrogate_loglik(&Curved, &th, &batch).unwrap();
            let parts: f64 = obs.iter().zip(&idx).map(|(x, &i)| {
                let single = ObservationBatch::new(vec![x.clone()], vec![i]).unwrap();
                surrogate_loglik(&Curved, &th, &single).unwrap()
            }).sum();
            prop_assert!((total - parts).abs() <= 1e-10 * xs.len() as f64);
        }
    }
}
