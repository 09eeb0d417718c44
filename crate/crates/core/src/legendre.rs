//! Normalized shifted Legendre polynomials and quadrature projections.

use crate::error::{Error, Result};
use crate::scalar::{CoeffScalar, Real};

fn binomial(n: u64, k: u64) -> i128 {
    let k = k.min(n - k);
    let mut c: i128 = 1;
    for i in 0..k {
        c = c * (n - i) as i128 / (i + 1) as i128;
    }
    c
}

/// Integer part `(−1)^{j+k} C(j,k) C(j+k,k)` of the Legendre coefficient.
pub fn legendre_coeff_int(j: usize, k: usize) -> Result<i128> {
    if k > j {
        return Err(Error::invalid(format!(
            "legendre coefficient needs k <= j (got j={j}, k={k})"
        )));
    }
    let sign = if (j + k).is_multiple_of(2) { 1 } else { -1 };
    Ok(sign * binomial(j as u64, k as u64) * binomial((j + k) as u64, k as u64))
}

/// Integer part as any coefficient scalar (exact for rationals).
pub fn legendre_coeff_int_as<C: CoeffScalar>(j: usize, k: usize) -> Result<C> {
    let v = legendre_coeff_int(j, k)?;
    C::from_i128(v).ok_or_else(|| Error::invalid("coefficient overflows the scalar"))
}

/// `a_{j,k} = √(2j+1) (−1)^{j+k} C(j,k) C(j+k,k)`.
pub fn legendre_coeff<T: Real>(j: usize, k: usize) -> Result<T> {
    let int = legendre_coeff_int(j, k)?;
    Ok(T::lit((2 * j + 1) as f64).sqrt() * T::lit(int as f64))
}

/// Orthonormal polynomials `e_j^z(x) = Σ_k a_{j,k} z^{−k−1/2} x^k` on `[0, z]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LegendreBasis<T> {
    max_order: usize,
    z: T,
    /// `coeffs[j][k] = a_{j,k}`.
    coeffs: Vec<Vec<T>>,
}

impl<T: Real> LegendreBasis<T> {
    pub fn new(max_order: usize, z: T) -> Result<Self> {
        if !(z > T::zero()) || !z.is_finite() {
            return Err(Error::invalid("interval length z must be positive"));
        }
        let coeffs = (0..=max_order)
            .map(|j| {
                (0..=j)
                    .map(|k| legendre_coeff(j, k))
                    .collect::<Result<Vec<T>>>()
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            max_order,
            z,
            coeffs,
        })
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn z(&self) -> T {
        self.z
    }

    pub fn coeff(&self, j: usize, k: usize) -> T {
        self.coeffs[j][k]
    }

    pub fn eval(&self, j: usize, x: T) -> T {
        let s = x / self.z;
        let c = &self.coeffs[j];
        let mut acc = T::zero();
        for k in (0..c.len()).rev() {
            acc = acc * s + c[k];
        }
        acc / self.z.sqrt()
    }

    /// `e_j^z` sampled on the uniform grid of `n_points` nodes over `[0, z]`.
    pub fn sample(&self, j: usize, n_points: usize) -> Vec<T> {
        let h = self.z / T::from_usize_lossy(n_points.max(2) - 1);
        (0..n_points)
            .map(|i| self.eval(j, T::from_usize_lossy(i) * h))
            .collect()
    }
}

/// Composite Simpson weights for `n` equispaced nodes with spacing `h`.
/// An odd number of intervals closes with a 3/8 panel; two nodes fall back
/// to the trapezoid rule.
pub fn simpson_weights<T: Real>(n: usize, h: T) -> Result<Vec<T>> {
    if n < 2 {
        return Err(Error::invalid("quadrature needs at least two nodes"));
    }
    let mut w = vec![T::zero(); n];
    let intervals = n - 1;
    if intervals == 1 {
        w[0] = h * T::lit(0.5);
        w[1] = h * T::lit(0.5);
        return Ok(w);
    }
    let (simpson_end, tail) = if intervals.is_multiple_of(2) {
        (intervals, false)
    } else {
        (intervals - 3, true)
    };
    let third = h / T::lit(3.0);
    let mut i = 0;
    while i < simpson_end {
        w[i] += third;
        w[i + 1] += T::lit(4.0) * third;
        w[i + 2] += third;
        i += 2;
    }
    if tail {
        let e = h * T::lit(3.0 / 8.0);
        let s = simpson_end;
        w[s] += e;
        w[s + 1] += T::lit(3.0) * e;
        w[s + 2] += T::lit(3.0) * e;
        w[s + 3] += e;
    }
    Ok(w)
}

/// `⟨values, e_j^z⟩` for values on the uniform grid of `[0, z]`.
pub fn project_legendre<T: Real>(values: &[T], basis: &LegendreBasis<T>, j: usize) -> Result<T> {
    if j > basis.max_order() {
        return Err(Error::invalid(format!(
            "order {j} exceeds basis order {}",
            basis.max_order()
        )));
    }
    let n = values.len();
    let h = basis.z() / T::from_usize_lossy(n.max(2) - 1);
    let w = simpson_weights(n, h)?;
    let e = basis.sample(j, n);
    Ok(values
        .iter()
        .zip(&e)
        .zip(&w)
        .fold(T::zero(), |acc, ((&v, &b), &wt)| acc + v * b * wt))
}

/// First `p` coefficients `⟨values, e_j^z⟩`, `j = 0..p`.
pub fn project_legendre_all<T: Real>(
    values: &[T],
    basis: &LegendreBasis<T>,
    p: usize,
) -> Result<Vec<T>> {
    (0..p).map(|j| project_legendre(values, basis, j)).collect()
}

/// Precomputed quadrature-weighted basis rows for repeated projections of
/// values on one uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LegendreProjector<T> {
    rows: Vec<Vec<T>>,
}

impl<T: Real> LegendreProjector<T> {
    pub fn new(basis: &LegendreBasis<T>, n_points: usize, p: usize) -> Result<Self> {
        if p == 0 || p > basis.max_order() + 1 {
            return Err(Error::invalid(format!(
                "cannot project onto {p} coefficients"
            )));
        }
        let h = basis.z() / T::from_usize_lossy(n_points.max(2) - 1);
        let w = simpson_weights(n_points, h)?;
        let rows = (0..p)
            .map(|j| {
                basis
                    .sample(j, n_points)
                    .into_iter()
                    .zip(&w)
                    .map(|(e, &wt)| e * wt)
                    .collect()
            })
            .collect();
        Ok(Self { rows })
    }

    pub fn n_points(&self) -> usize {
        self.rows[0].len()
    }

    pub fn apply(&self, values: &[T]) -> Result<Vec<T>> {
        if values.len() != self.n_points() {
            return Err(Error::dim(format!(
                "projector expects {} values, got {}",
                self.n_points(),
                values.len()
            )));
        }
        Ok(self
            .rows
            .iter()
            .map(|r| {
                r.iter()
                    .zip(values)
                    .fold(T::zero(), |a, (&w, &v)| a + w * v)
            })
            .collect())
    }
}

/// Tensor products `e_i(x) e_j(y)` on `[0,1]²`, `0 ≤ i, j ≤ 3`, ordered
/// row-major in `(i, j)`; only the first `p` are used.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorLegendreBasis<T> {
    line: LegendreBasis<T>,
    p: usize,
}

pub const TENSOR_ORDER: usize = 3;

impl<T: Real> TensorLegendreBasis<T> {
    pub fn new(p: usize) -> Result<Self> {
        let side = TENSOR_ORDER + 1;
        if p == 0 || p > side * side {
            return Err(Error::invalid(format!("p must be in 1..={}", side * side)));
        }
        Ok(Self {
            line: LegendreBasis::new(TENSOR_ORDER, T::one())?,
            p,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// `(i, j)` of the `k`-th selected element.
    pub fn orders(k: usize) -> (usize, usize) {
        (k / (TENSOR_ORDER + 1), k % (TENSOR_ORDER + 1))
    }

    pub fn eval(&self, k: usize, x: T, y: T) -> T {
        let (i, j) = Self::orders(k);
        self.line.eval(i, x) * self.line.eval(j, y)
    }

    /// Projects values on the `m × m` grid of `[0,1]²` (boundary included,
    /// `values[a·m + b] = u(x_a, y_b)`) onto the first `p` elements.
    pub fn project(&self, values: &[T], m: usize) -> Result<Vec<T>> {
        if values.len() != m * m {
            return Err(Error::dim(format!(
                "expected {} values, got {}",
                m * m,
                values.len()
            )));
        }
        let h = T::one() / T::from_usize_lossy(m.max(2) - 1);
        let w = simpson_weights(m, h)?;
        let cols: Vec<Vec<T>> = (0..=TENSOR_ORDER).map(|i| self.line.sample(i, m)).collect();
        Ok((0..self.p)
            .map(|k| {
                let (i, j) = Self::orders(k);
                let mut acc = T::zero();
                for a in 0..m {
                    let mut row = T::zero();
                    for b in 0..m {
                        row += values[a * m + b] * cols[j][b] * w[b];
                    }
                    acc += row * cols[i][a] * w[a];
                }
                acc
            })
            .collect())
    }
}
