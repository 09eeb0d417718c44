//! Finite-difference reference solvers used as test oracles.
#![allow(dead_code)]

/// Solves `Δu − 2 f u = 0` on `(0,1)²` with `u = g` on the boundary, on an
/// `n × n` node grid (five-point stencil, SOR). Returns node values
/// `u[a*n + b] = u(x_a, y_b)`.
pub fn elliptic_fd(n: usize, f: impl Fn(f64, f64) -> f64, g: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let h = 1.0 / (n - 1) as f64;
    let x = |a: usize| a as f64 * h;
    let mut u = vec![0.0; n * n];
    let mut pot = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            let boundary = a == 0 || b == 0 || a == n - 1 || b == n - 1;
            if boundary {
                u[a * n + b] = g(x(a), x(b));
            } else {
                pot[a * n + b] = f(x(a), x(b));
            }
        }
    }
    let omega = 2.0 / (1.0 + (std::f64::consts::PI * h).sin());
    for _ in 0..20_000 {
        let mut delta: f64 = 0.0;
        for a in 1..n - 1 {
            for b in 1..n - 1 {
                let k = a * n + b;
                let nb = u[k - n] + u[k + n] + u[k - 1] + u[k + 1];
                let gs = nb / (4.0 + 2.0 * h * h * pot[k]);
                let new = u[k] + omega * (gs - u[k]);
                delta = delta.max((new - u[k]).abs());
                u[k] = new;
            }
        }
        if delta < 1e-12 {
            return u;
        }
    }
    panic!("SOR did not converge");
}

/// Bilinear interpolation of node values from [`elliptic_fd`].
pub fn interp2(u: &[f64], n: usize, x: f64, y: f64) -> f64 {
    let s = x * (n - 1) as f64;
    let t = y * (n - 1) as f64;
    let a = (s as usize).min(n - 2);
    let b = (t as usize).min(n - 2);
    let (wx, wy) = (s - a as f64, t - b as f64);
    let v = |i: usize, j: usize| u[i * n + j];
    (1.0 - wx) * (1.0 - wy) * v(a, b)
        + wx * (1.0 - wy) * v(a + 1, b)
        + (1.0 - wx) * wy * v(a, b + 1)
        + wx * wy * v(a + 1, b + 1)
}

/// Backward problem `∂_t u + ½ u_xx − c u + f(x) = 0` on `(0, t_max) × (0,1)`
/// with `u = g(x)` at `t_max` and on `x ∈ {0, 1}`, solved by implicit Euler
/// in `τ = t_max − t`. Returns `u(t_k, ·)` for `t_k = t_max − k·dτ`,
/// `k = 0..=n_t`, each on `n_x` nodes.
pub fn parabolic_fd(
    n_x: usize,
    n_t: usize,
    t_max: f64,
    c: f64,
    f: impl Fn(f64) -> f64,
    g: impl Fn(f64) -> f64,
) -> Vec<Vec<f64>> {
    let h = 1.0 / (n_x - 1) as f64;
    let dtau = t_max / n_t as f64;
    let xs: Vec<f64> = (0..n_x).map(|i| i as f64 * h).collect();
    let mut u: Vec<f64> = xs.iter().map(|&x| g(x)).collect();
    let mut out = vec![u.clone()];
    let r = 0.5 * dtau / (h * h);
    let m = n_x - 2;
    // constant tridiagonal system: -r u_{i-1} + (1 + 2r + c dτ) u_i - r u_{i+1} = rhs
    let diag = 1.0 + 2.0 * r + c * dtau;
    for _ in 0..n_t {
        let mut rhs: Vec<f64> = (1..n_x - 1).map(|i| u[i] + dtau * f(xs[i])).collect();
        rhs[0] += r * u[0];
        rhs[m - 1] += r * u[n_x - 1];
        // Thomas algorithm
        let mut cp = vec![0.0; m];
        let mut dp = vec![0.0; m];
        cp[0] = -r / diag;
        dp[0] = rhs[0] / diag;
        for i in 1..m {
            let den = diag + r * cp[i - 1];
            cp[i] = -r / den;
            dp[i] = (rhs[i] + r * dp[i - 1]) / den;
        }
        let mut sol = vec![0.0; m];
        sol[m - 1] = dp[m - 1];
        for i in (0..m - 1).rev() {
            sol[i] = dp[i] - cp[i] * sol[i + 1];
        }
        u[1..n_x - 1].copy_from_slice(&sol);
        out.push(u.clone());
    }
    out
}

/// Linear interpolation on a uniform grid of `[0, 1]`.
pub fn interp1(u: &[f64], x: f64) -> f64 {
    let n = u.len();
    let s = x * (n - 1) as f64;
    let a = (s as usize).min(n - 2);
    let w = s - a as f64;
    (1.0 - w) * u[a] + w * u[a + 1]
}

/// `u(t, x)` from a [`parabolic_fd`] solution, linear in time and space.
pub fn parabolic_at(sol: &[Vec<f64>], t_max: f64, t: f64, x: f64) -> f64 {
    let n_t = sol.len() - 1;
    let s = (t_max - t) / t_max * n_t as f64;
    let k = (s as usize).min(n_t - 1);
    let w = s - k as f64;
    (1.0 - w) * interp1(&sol[k], x) + w * interp1(&sol[k + 1], x)
}
