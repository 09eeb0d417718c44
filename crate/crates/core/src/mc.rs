//! Monte Carlo estimates with error bars.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// A Monte Carlo value with its standard error and the number of samples
/// that produced it. `V` is `f64`, `Vec<f64>` or `Matrix<f64>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate<V> {
    pub value: V,
    pub std_error: V,
    pub n_samples: usize,
}

pub type McScalar = McEstimate<f64>;
pub type McVector = McEstimate<Vec<f64>>;
pub type McMatrix = McEstimate<Matrix<f64>>;

impl McEstimate<f64> {
    /// Sample mean with standard error `s / √n`.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(Error::invalid(
                "need at least two samples for a standard error",
            ));
        }
        let nf = n as f64;
        let mean = samples.iter().sum::<f64>() / nf;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0);
        Ok(Self {
            value: mean,
            std_error: (var / nf).sqrt(),
            n_samples: n,
        })
    }

    /// Whether `target` lies within `k` standard errors of the value.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.std_error
    }
}

/// Jackknife standard errors from leave-one-block-out replicates.
///
/// `replicates[b][k]` is component `k` of the statistic with block `b` removed.
pub fn jackknife_std_errors(replicates: &[Vec<f64>]) -> Vec<f64> {
    let b = replicates.len();
    if b < 2 {
        return vec![0.0; replicates.first().map_or(0, Vec::len)];
    }
    let dim = replicates[0].len();
    let bf = b as f64;
    (0..dim)
        .map(|k| {
            let mean = replicates.iter().map(|r| r[k]).sum::<f64>() / bf;
            let ss = replicates
                .iter()
                .map(|r| (r[k] - mean).powi(2))
                .sum::<f64>();
            ((bf - 1.0) / bf * ss).sqrt()
        })
        .collect()
}

/// Contiguous block boundaries: `n` items into at most `blocks` blocks.
pub fn block_ranges(n: usize, blocks: usize) -> Vec<std::ops::Range<usize>> {
    let blocks = blocks.clamp(1, n.max(1));
    (0..blocks)
        .map(|b| (b * n / blocks)..((b + 1) * n / blocks))
        .filter(|r| !r.is_empty())
        .collect()
}

#[derive(Clone)]
struct Sums {
    n: usize,
    s1: Vec<f64>,
    s2: Matrix<f64>,
}

impl Sums {
    fn new(p: usize) -> Self {
        Self {
            n: 0,
            s1: vec![0.0; p],
            s2: Matrix::zeros(p, p),
        }
    }

    fn push(&mut self, x: &[f64], shift: &[f64]) {
        self.n += 1;
        let p = x.len();
        for i in 0..p {
            let di = x[i] - shift[i];
            self.s1[i] += di;
            for j in 0..p {
                self.s2[(i, j)] += di * (x[j] - shift[j]);
            }
        }
    }

    fn minus(&self, other: &Sums) -> Sums {
        Sums {
            n: self.n - other.n,
            s1: self.s1.iter().zip(&other.s1).map(|(a, b)| a - b).collect(),
            s2: self.s2.sub(&other.s2).expect("same shape"),
        }
    }

    fn mean_cov(&self, shift: &[f64]) -> (Vec<f64>, Matrix<f64>) {
        let n = self.n as f64;
        let p = self.s1.len();
        let centered: Vec<f64> = self.s1.iter().map(|s| s / n).collect();
        let cov = Matrix::from_fn(p, p, |i, j| {
            (self.s2[(i, j)] - n * centered[i] * centered[j]) / (n - 1.0)
        });
        let mean = centered.iter().zip(shift).map(|(c, s)| c + s).collect();
        (mean, cov)
    }
}

/// Sample mean and (n−1)-normalized sample covariance of vector samples,
/// with jackknife standard errors over `blocks` contiguous blocks.
pub fn jackknife_mean_cov(samples: &[Vec<f64>], blocks: usize) -> Result<(McVector, McMatrix)> {
    let n = samples.len();
    if n < 4 {
        return Err(Error::invalid("need at least four samples"));
    }
    let p = samples[0].len();
    if samples.iter().any(|s| s.len() != p) {
        return Err(Error::dim("samples have different lengths"));
    }
    let shift = samples[0].clone();
    let ranges = block_ranges(n, blocks);
    let block_sums: Vec<Sums> = ranges
        .iter()
        .map(|r| {
            let mut s = Sums::new(p);
            for x in &samples[r.clone()] {
                s.push(x, &shift);
            }
            s
        })
        .collect();
    let mut total = Sums::new(p);
    for b in &block_sums {
        total.n += b.n;
        for i in 0..p {
            total.s1[i] += b.s1[i];
        }
        total.s2.axpy_mut(1.0, &b.s2).expect("same shape");
    }
    let (mean, cov) = total.mean_cov(&shift);
    let mut mean_reps = Vec::with_capacity(block_sums.len());
    let mut cov_reps = Vec::with_capacity(block_sums.len());
    for b in &block_sums {
        let (m, c) = total.minus(b).mean_cov(&shift);
        mean_reps.push(m);
        cov_reps.push(c.into_row_major());
    }
    let mean_se = jackknife_std_errors(&mean_reps);
    let cov_se = Matrix::from_row_major(p, p, jackknife_std_errors(&cov_reps))?;
    Ok((
        McEstimate {
            value: mean,
            std_error: mean_se,
            n_samples: n,
        },
        McEstimate {
            value: cov,
            std_error: cov_se,
            n_samples: n,
        },
    ))
}

/// Entrywise mean of matrix samples with jackknife standard errors.
pub fn jackknife_matrix_mean(samples: &[Matrix<f64>], blocks: usize) -> Result<McMatrix> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    let (r, c) = (samples[0].rows(), samples[0].cols());
    let ranges = block_ranges(n, blocks);
    let block_sums: Vec<Matrix<f64>> = ranges
        .iter()
        .map(|rg| {
            let mut acc = Matrix::zeros(r, c);
            for m in &samples[rg.clone()] {
                acc.axpy_mut(1.0, m).expect("same shape");
            }
            acc
        })
        .collect();
    let mut total = Matrix::zeros(r, c);
    for b in &block_sums {
        total.axpy_mut(1.0, b)?;
    }
    let value = total.scaled(1.0 / n as f64);
    let reps: Vec<Vec<f64>> = ranges
        .iter()
        .zip(&block_sums)
        .map(|(rg, b)| {
            let m = n - rg.len();
            total
                .sub(b)
                .expect("same shape")
                .scaled(1.0 / m as f64)
                .into_row_major()
        })
        .collect();
    let se = Matrix::from_row_major(r, c, jackknife_std_errors(&reps))?;
    Ok(McEstimate {
        value,
        std_error: se,
        n_samples: n,
    })
}
