//! Subcommand implementations. Every run writes its data files plus a
//! `meta.json` with the resolved configuration into the output directory.

use std::fmt::Write as _;
use std::path::PathBuf;

use num_rational::Ratio;
use serde::Serialize;
use surrogate_bvm::bvm::{
    bvm_precision_avg, center_tn, l1_distance, posterior_grid, Grid, PosteriorGrid, PriorSpec,
};
use surrogate_bvm::fisher::{
    true_fisher_mc, true_fisher_mc_pooled, FisherEstimate, FisherSettings, LatentForwardModel,
    LatentPool, ParabolicLatentModel, SchrodingerLatentModel, SquareIntLatentModel,
};
use surrogate_bvm::legendre::legendre_coeff;
use surrogate_bvm::linalg::Matrix;
use surrogate_bvm::model::{
    format_float, sample_observations, MomentModel, ObservationBatch, ObservationGenerator,
    ThetaVector,
};
use surrogate_bvm::parabolic::{
    BoundaryData, ParabolicGenerator, ParabolicMomentModel, ParabolicSettings, ParabolicSpec,
    Potential,
};
use surrogate_bvm::schrodinger::{
    BoundaryFn, SchrodingerEnsemble, SchrodingerGenerator, SchrodingerMomentModel,
    SchrodingerSettings, WalkLimits,
};
use surrogate_bvm::square_integral::{
    cov_coeff_b, cov_coeff_c, SquareIntGenerator, SquareIntModel,
};
use surrogate_bvm::{RandomStream, VERSION};

use crate::config::{ExperimentConfig, ModelConfig, ParabolicConfig};
use crate::error::CliError;

/// Stream id of Monte Carlo moment models; replicates use ids `0, 1, ...`.
const MODEL_STREAM: u64 = 1 << 32;
const FISHER_STREAM: u64 = 1 << 33;
/// Legendre orders written by `coeffs`.
const COEFF_ORDERS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Coeffs,
    Simulate,
    Posterior,
    BvmSweep,
    FisherSweep,
}

impl Subcommand {
    fn name(self) -> &'static str {
        match self {
            Self::Coeffs => "coeffs",
            Self::Simulate => "simulate",
            Self::Posterior => "posterior",
            Self::BvmSweep => "bvm-sweep",
            Self::FisherSweep => "fisher-sweep",
        }
    }
}

#[derive(Serialize)]
struct Meta<'a> {
    subcommand: &'a str,
    version: &'a str,
    seed: u64,
    outputs: &'a [String],
    config: &'a ExperimentConfig,
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        std::fs::write(self.dir.join(name), contents)
            .map_err(|e| CliError::Io(format!("{name}: {e}")))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }
}

pub fn run(cmd: Subcommand, cfg: &ExperimentConfig) -> Result<Vec<String>, CliError> {
    let dir = &cfg.output.directory;
    if !dir.is_dir() {
        return Err(CliError::Io(format!(
            "output directory {} does not exist",
            dir.display()
        )));
    }
    let mut out = Outputs {
        dir: dir.clone(),
        files: Vec::new(),
    };
    match cmd {
        Subcommand::Coeffs => coeffs(&mut out)?,
        Subcommand::Simulate => simulate(cfg, &mut out)?,
        Subcommand::Posterior => posterior(cfg, &mut out)?,
        Subcommand::BvmSweep => bvm_sweep(cfg, &mut out)?,
        Subcommand::FisherSweep => fisher_sweep(cfg, &mut out)?,
    }
    let files = out.files.clone();
    let meta = Meta {
        subcommand: cmd.name(),
        version: VERSION,
        seed: cfg.sampling.seed,
        outputs: &files,
        config: cfg,
    };
    let text = serde_json::to_string_pretty(&meta).map_err(|e| CliError::Io(e.to_string()))?;
    out.write("meta.json", &(text + "\n"))?;
    Ok(out.files)
}

fn f(v: f64) -> String {
    format_float(v)
}

/// Exact rational to the nearest double.
fn ratio_f64(r: Ratio<i128>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn coeffs(out: &mut Outputs) -> Result<(), CliError> {
    let mut a = String::from("j,k,a\n");
    for j in 0..COEFF_ORDERS {
        for k in 0..=j {
            let v: f64 = legendre_coeff(j, k).map_err(CliError::core("coeffs"))?;
            writeln!(a, "{j},{k},{}", f(v)).expect("string write");
        }
    }
    out.write("legendre_a.csv", &a)?;
    let mut bc = String::from("k,l,b,c\n");
    for k in 0..COEFF_ORDERS {
        for l in 0..COEFF_ORDERS {
            let b = ratio_f64(cov_coeff_b(k, l));
            let c = ratio_f64(cov_coeff_c(k, l));
            writeln!(bc, "{k},{l},{},{}", f(b), f(c)).expect("string write");
        }
    }
    out.write("cov_bc.csv", &bc)
}

fn lambda(cfg: &ExperimentConfig) -> Matrix<f64> {
    Matrix::scaled_identity(cfg.model.p(), cfg.model.lambda_scale())
}

fn schrodinger_settings(cfg: &ExperimentConfig, grid_n: usize) -> SchrodingerSettings {
    SchrodingerSettings {
        grid_n,
        dt: cfg.mc.dt,
        paths_per_node: cfg.mc.paths,
        quad_grid: cfg.mc.quad_grid,
        n_fields: cfg.mc.fields,
        p: cfg.model.p(),
        limits: WalkLimits::default(),
    }
}

fn parabolic_parts(
    cfg: &ExperimentConfig,
    c: &ParabolicConfig,
) -> Result<(ParabolicSpec, ParabolicSettings), CliError> {
    let spec = ParabolicSpec::new(
        vec![0.0],
        vec![1.0],
        c.t_max,
        Matrix::identity(1),
        vec![0.0],
        Potential::ThetaSquared,
        BoundaryData::OnePlusThetaX,
        c.times(),
    )
    .map_err(CliError::core("parabolic model"))?;
    let settings = ParabolicSettings {
        dt: cfg.mc.dt,
        paths_per_node: cfg.mc.paths,
        quad_points: cfg.mc.quad_grid,
        n_fields: cfg.mc.fields,
        p: cfg.model.p(),
        source_nodes: c.source_nodes,
    };
    settings
        .validate()
        .map_err(CliError::core("parabolic settings"))?;
    Ok((spec, settings))
}

/// Surrogate moment model and data generator for the configured example.
struct Experiment {
    model: Box<dyn MomentModel<f64> + Sync>,
    generator: Box<dyn ObservationGenerator>,
}

fn generator(cfg: &ExperimentConfig) -> Result<Box<dyn ObservationGenerator>, CliError> {
    let lam = lambda(cfg);
    Ok(match &cfg.model {
        ModelConfig::SquareIntegral(c) => Box::new(
            SquareIntGenerator::new(c.z.clone(), lam, c.n_steps)
                .map_err(CliError::core("square-integral generator"))?,
        ),
        ModelConfig::Schrodinger(c) => Box::new(SchrodingerGenerator {
            boundary: BoundaryFn::reference(),
            lambda: lam,
            settings: schrodinger_settings(cfg, c.grid_n),
            fixed: None,
        }),
        ModelConfig::Parabolic(c) => {
            let (spec, settings) = parabolic_parts(cfg, c)?;
            Box::new(ParabolicGenerator {
                spec,
                settings,
                lambda: lam,
            })
        }
    })
}

fn experiment(cfg: &ExperimentConfig) -> Result<Experiment, CliError> {
    let lam = lambda(cfg);
    let stream = RandomStream::new(cfg.sampling.seed, MODEL_STREAM);
    let model: Box<dyn MomentModel<f64> + Sync> = match &cfg.model {
        ModelConfig::SquareIntegral(c) => Box::new(
            SquareIntModel::new(c.z.clone(), lam)
                .map_err(CliError::core("square-integral model"))?,
        ),
        ModelConfig::Schrodinger(c) => Box::new(
            SchrodingerMomentModel::simulate(
                BoundaryFn::reference(),
                lam,
                &schrodinger_settings(cfg, c.grid_n),
                stream,
            )
            .map_err(CliError::core("schrodinger moments"))?,
        ),
        ModelConfig::Parabolic(c) => {
            let (spec, settings) = parabolic_parts(cfg, c)?;
            Box::new(
                ParabolicMomentModel::new(spec, settings, lam, stream)
                    .map_err(CliError::core("parabolic moments"))?,
            )
        }
    };
    Ok(Experiment {
        model,
        generator: generator(cfg)?,
    })
}

fn theta0(cfg: &ExperimentConfig) -> Result<ThetaVector<f64>, CliError> {
    ThetaVector::scalar(cfg.model.theta0()).map_err(CliError::core("theta0"))
}

fn data_stream(cfg: &ExperimentConfig, replicate: usize, size_index: usize) -> RandomStream {
    RandomStream::new(cfg.sampling.seed, replicate as u64).substream(size_index as u64)
}

fn batch(
    cfg: &ExperimentConfig,
    gen: &dyn ObservationGenerator,
    n: usize,
    stream: RandomStream,
) -> Result<ObservationBatch<f64>, CliError> {
    sample_observations(gen, &theta0(cfg)?, n, stream).map_err(CliError::core("simulate"))
}

fn simulate(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<(), CliError> {
    let gen = generator(cfg)?;
    let b = batch(cfg, gen.as_ref(), cfg.sampling.n, data_stream(cfg, 0, 0))?;
    b.write_csv_path(out.path("observations.csv"))
        .map_err(CliError::core("observations.csv"))
}

fn prior_and_grid(cfg: &ExperimentConfig) -> Result<(PriorSpec<f64>, Grid<f64>), CliError> {
    let b = cfg.prior_box();
    let prior =
        PriorSpec::uniform(vec![b.lower], vec![b.upper]).map_err(CliError::core("prior"))?;
    let (lo, hi) = cfg.grid_bounds();
    let grid = Grid::uniform_1d(lo, hi, cfg.grid.nodes).map_err(CliError::core("grid"))?;
    Ok((prior, grid))
}

struct PosteriorRun {
    grid: PosteriorGrid<f64>,
    l1: f64,
    limit: surrogate_bvm::BvmLimit64,
}

fn posterior_for(
    cfg: &ExperimentConfig,
    exp: &Experiment,
    b: &ObservationBatch<f64>,
) -> Result<PosteriorRun, CliError> {
    let (prior, grid) = prior_and_grid(cfg)?;
    let pg = posterior_grid(exp.model.as_ref(), b, &prior, &grid)
        .map_err(CliError::core("posterior"))?;
    let limit =
        center_tn(exp.model.as_ref(), &theta0(cfg)?, b).map_err(CliError::core("bvm limit"))?;
    let l1 = l1_distance(&pg, &limit).map_err(CliError::core("l1 distance"))?;
    Ok(PosteriorRun {
        grid: pg,
        l1,
        limit,
    })
}

#[derive(Serialize)]
struct PosteriorSummary {
    n: usize,
    theta0: f64,
    posterior_mean: f64,
    t_n: f64,
    l1: f64,
}

fn posterior(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<(), CliError> {
    let exp = experiment(cfg)?;
    let b = batch(
        cfg,
        exp.generator.as_ref(),
        cfg.sampling.n,
        data_stream(cfg, 0, 0),
    )?;
    b.write_csv_path(out.path("observations.csv"))
        .map_err(CliError::core("observations.csv"))?;
    let r = posterior_for(cfg, &exp, &b)?;
    r.grid
        .write_csv_path(out.path("posterior.csv"))
        .map_err(CliError::core("posterior.csv"))?;
    r.limit
        .write_json_path(out.path("bvm_limit.json"))
        .map_err(CliError::core("bvm_limit.json"))?;
    let s = PosteriorSummary {
        n: b.len(),
        theta0: cfg.model.theta0(),
        posterior_mean: r.grid.mean()[0],
        t_n: r.limit.t_n[0],
        l1: r.l1,
    };
    let text = serde_json::to_string_pretty(&s).map_err(|e| CliError::Io(e.to_string()))?;
    out.write("summary.json", &(text + "\n"))
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

fn bvm_sweep(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<(), CliError> {
    let exp = experiment(cfg)?;
    let t0 = cfg.model.theta0();
    let mut rows = String::from("n,replicate,t_n,posterior_mean,l1,mass_in_interval\n");
    let mut summary = String::from("n,median_l1,median_mass_in_interval\n");
    for (a, &n) in cfg.sampling.n_values.iter().enumerate() {
        let half = 5.0 / (n as f64).sqrt();
        let mut l1s = Vec::new();
        let mut masses = Vec::new();
        for r in 0..cfg.sampling.replicates {
            let b = batch(cfg, exp.generator.as_ref(), n, data_stream(cfg, r, a))?;
            let run = posterior_for(cfg, &exp, &b)?;
            let mass = run.grid.mass_in_box(&[t0 - half], &[t0 + half]);
            writeln!(
                rows,
                "{n},{r},{},{},{},{}",
                f(run.limit.t_n[0]),
                f(run.grid.mean()[0]),
                f(run.l1),
                f(mass)
            )
            .expect("string write");
            l1s.push(run.l1);
            masses.push(mass);
        }
        writeln!(summary, "{n},{},{}", f(median(l1s)), f(median(masses))).expect("string write");
    }
    out.write("bvm_sweep.csv", &rows)?;
    out.write("bvm_summary.csv", &summary)
}

fn fisher_settings(cfg: &ExperimentConfig) -> FisherSettings {
    FisherSettings {
        n_outer: cfg.fisher.n_outer,
        n_inner: cfg.fisher.n_inner,
        derivative: cfg.fisher.derivative.mode(),
        shared_inner: cfg.fisher.shared_inner,
        ..FisherSettings::default()
    }
}

/// Estimates `I_{θ0}` over the θ0 grid, reusing latent pools when shared.
fn fisher_over<M: LatentForwardModel>(
    model: &M,
    thetas: &[f64],
    settings: &FisherSettings,
    stream: RandomStream,
) -> Result<Vec<FisherEstimate>, CliError> {
    if !settings.shared_inner {
        return thetas
            .iter()
            .enumerate()
            .map(|(k, &t)| {
                let th = ThetaVector::scalar(t).map_err(CliError::core("theta0"))?;
                true_fisher_mc(
                    model,
                    &th,
                    settings,
                    stream.substream(3).substream(k as u64),
                )
                .map_err(CliError::core(format!("fisher at theta0 = {t}")))
            })
            .collect();
    }
    let inner = LatentPool::sample(model, settings.n_inner, stream.substream(0))
        .map_err(CliError::core("inner latent pool"))?;
    let outer = LatentPool::sample(model, settings.n_outer, stream.substream(1))
        .map_err(CliError::core("outer latent pool"))?;
    fisher_with_pools(model, thetas, settings, &inner, &outer, stream)
}

fn fisher_with_pools<M: LatentForwardModel>(
    model: &M,
    thetas: &[f64],
    settings: &FisherSettings,
    inner: &LatentPool<M::Latent>,
    outer: &LatentPool<M::Latent>,
    stream: RandomStream,
) -> Result<Vec<FisherEstimate>, CliError> {
    thetas
        .iter()
        .map(|&t| {
            let th = ThetaVector::scalar(t).map_err(CliError::core("theta0"))?;
            true_fisher_mc_pooled(model, &th, settings, inner, outer, stream.substream(2))
                .map_err(CliError::core(format!("fisher at theta0 = {t}")))
        })
        .collect()
}

fn v_star<M: MomentModel<f64> + ?Sized>(
    model: &M,
    t: f64,
    index: usize,
) -> Result<Matrix<f64>, CliError> {
    let th = ThetaVector::scalar(t).map_err(CliError::core("theta0"))?;
    Ok(bvm_precision_avg(model, &th, &[index])
        .map_err(CliError::core(format!("V at theta0 = {t}")))?
        .v)
}

fn fisher_sweep(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<(), CliError> {
    let thetas = cfg.theta0_values();
    let settings = fisher_settings(cfg);
    let stream = RandomStream::new(cfg.sampling.seed, FISHER_STREAM);
    let lam = lambda(cfg);
    let (estimates, vs): (Vec<FisherEstimate>, Vec<Matrix<f64>>) = match &cfg.model {
        ModelConfig::SquareIntegral(c) => {
            let m = SquareIntLatentModel::new(c.z[0], c.n_steps, lam.clone())
                .map_err(CliError::core("fisher model"))?;
            let sm = SquareIntModel::iid(c.z[0], lam)
                .map_err(CliError::core("square-integral model"))?;
            let est = fisher_over(&m, &thetas, &settings, stream)?;
            let vs = thetas
                .iter()
                .map(|&t| v_star(&sm, t, 0))
                .collect::<Result<_, _>>()?;
            (est, vs)
        }
        ModelConfig::Schrodinger(c) => {
            let m = SchrodingerLatentModel {
                boundary: BoundaryFn::reference(),
                settings: schrodinger_settings(cfg, c.grid_n),
                lambda: lam.clone(),
            };
            // V comes from the same forward-map draws as the inner pool
            let inner = LatentPool::sample(&m, settings.n_inner, stream.substream(0))
                .map_err(CliError::core("inner latent pool"))?;
            let ens =
                SchrodingerEnsemble::from_members(BoundaryFn::reference(), inner.latents.clone())
                    .map_err(CliError::core("ensemble"))?;
            let mm = SchrodingerMomentModel::new(ens, lam)
                .map_err(CliError::core("schrodinger moments"))?;
            let est = if settings.shared_inner {
                let outer = LatentPool::sample(&m, settings.n_outer, stream.substream(1))
                    .map_err(CliError::core("outer latent pool"))?;
                fisher_with_pools(&m, &thetas, &settings, &inner, &outer, stream)?
            } else {
                fisher_over(&m, &thetas, &settings, stream)?
            };
            let vs = thetas
                .iter()
                .map(|&t| v_star(&mm, t, 0))
                .collect::<Result<_, _>>()?;
            (est, vs)
        }
        ModelConfig::Parabolic(c) => {
            let (spec, psettings) = parabolic_parts(cfg, c)?;
            let m = ParabolicLatentModel {
                spec: spec.clone(),
                settings: psettings,
                lambda: lam.clone(),
                index: cfg.fisher.time_index,
            };
            let mm = ParabolicMomentModel::new(
                spec,
                psettings,
                lam,
                RandomStream::new(cfg.sampling.seed, MODEL_STREAM),
            )
            .map_err(CliError::core("parabolic moments"))?;
            let est = fisher_over(&m, &thetas, &settings, stream)?;
            let vs = thetas
                .iter()
                .map(|&t| v_star(&mm, t, cfg.fisher.time_index))
                .collect::<Result<_, _>>()?;
            (est, vs)
        }
    };
    let mut csv = String::from("theta0,entry_row,entry_col,I_hat,I_se,V_star\n");
    for ((t, e), v) in thetas.iter().zip(&estimates).zip(&vs) {
        let d = v.rows();
        for r in 0..d {
            for c in 0..d {
                writeln!(
                    csv,
                    "{},{r},{c},{},{},{}",
                    f(*t),
                    f(e.info.value[(r, c)]),
                    f(e.info.std_error[(r, c)]),
                    f(v[(r, c)])
                )
                .expect("string write");
            }
        }
    }
    out.write("fisher_sweep.csv", &csv)
}
