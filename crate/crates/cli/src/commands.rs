//! Execution of one configured experiment into a [`Table`].

use anyhow::{bail, Result};
use spatial_extremes::cluster::{empirical_cluster_laplace, limit_cluster_laplace_mc, sample_nonempty_clusters};
use spatial_extremes::index::{
    br_theta_block_profile, exact_to_f64, level_u, mixture_theta, theta_block_empirical, theta_classical_empirical,
    theta_from_tail_samples, theta_run_empirical, IndexReport, TailRegion,
};
use spatial_extremes::lattice::{CornerIndex, InvariantOrder, LatticePoint, Window};
use spatial_extremes::model::{MmaWeights, ModelSpec, VariogramSpec};
use spatial_extremes::rng::RngStream;
use spatial_extremes::stats::Estimate;
use spatial_extremes::tailfield::{br_tail_fdd_mc, br_tail_marginal_cdf, estimate_tail_field, TailFieldBatch};
use spatial_extremes::testfn::PointFunction;
use spatial_extremes::verify::{run_campaign, run_counterexample_check, VerifyOptions};

use crate::config::{Command, ExperimentConfig};
use crate::table::{Cell, Table};

/// Result of a command; `passed` is false only for failed verdicts.
pub struct Outcome {
    pub table: Table,
    pub passed: bool,
}

impl Outcome {
    fn ok(table: Table) -> Self {
        Outcome { table, passed: true }
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    match cfg.command {
        Command::MmaTheta => mma_theta(cfg).map(Outcome::ok),
        Command::MmaEmpirical => mma_empirical(cfg).map(Outcome::ok),
        Command::BrTheta => br_theta(cfg).map(Outcome::ok),
        Command::BrFig1 => br_fig1(cfg).map(Outcome::ok),
        Command::BrTailcdf => br_tailcdf(cfg).map(Outcome::ok),
        Command::Tailfield => tailfield(cfg).map(Outcome::ok),
        Command::ClusterLaplace => cluster_laplace(cfg).map(Outcome::ok),
        Command::Counterexample => counterexample(cfg),
        Command::Verify => verify(cfg),
    }
}

fn stream(cfg: &ExperimentConfig) -> RngStream {
    RngStream::new(cfg.seed).labeled(cfg.command.name())
}

fn dim(cfg: &ExperimentConfig) -> usize {
    cfg.model.dim().unwrap_or(cfg.geometry.n.len())
}

fn point(v: &[i64], k: usize, what: &str) -> Result<LatticePoint> {
    if v.len() != k {
        bail!("{what} has {} coordinates, the model needs {k}", v.len());
    }
    Ok(LatticePoint(v.to_vec()))
}

fn n_r(cfg: &ExperimentConfig) -> Result<(LatticePoint, LatticePoint)> {
    let k = dim(cfg);
    Ok((point(&cfg.geometry.n, k, "n")?, point(&cfg.geometry.r, k, "r")?))
}

fn usize_of(x: u64) -> Result<usize> {
    Ok(usize::try_from(x)?)
}

/// Fields needed so that a `q` threshold retains `k` of them.
fn n_for(q: f64, k: u64) -> u64 {
    (k as f64 / (1.0 - q)).ceil() as u64 + 1
}

fn tail_batch(cfg: &ExperimentConfig, s: &RngStream) -> Result<TailFieldBatch> {
    let lags = Window::centered(dim(cfg), cfg.geometry.lags)?;
    let q = cfg.statistics.q;
    Ok(estimate_tail_field(&cfg.model, cfg.model.alpha(), &lags, q, n_for(q, cfg.statistics.n_mc), s)?)
}

const INDEX_COLUMNS: [&str; 8] = ["method", "corner", "theta", "se", "tau", "u", "r", "n"];

fn push_report(table: &mut Table, report: &IndexReport) {
    for rec in report.records() {
        table.push(
            vec![
                rec.method.into(),
                rec.corner.into(),
                rec.theta.into(),
                rec.se.into(),
                rec.tau.into(),
                rec.u.into(),
                rec.r.into(),
                rec.n.into(),
            ],
            &rec.model_digest,
        );
    }
}

fn mma_components(model: &ModelSpec) -> Result<Vec<(f64, MmaWeights)>> {
    let weights = |m: &ModelSpec| -> Result<MmaWeights> {
        match m {
            ModelSpec::MaxMovingAverage { weights, .. } => Ok(MmaWeights::from_map(weights)?),
            _ => bail!("mma-theta needs a diagonal max-moving average or a mixture of them"),
        }
    };
    match model {
        ModelSpec::Mixture { components } => components.iter().map(|c| Ok((c.weight, weights(&c.model)?))).collect(),
        m => Ok(vec![(1.0, weights(m)?)]),
    }
}

fn base_report(cfg: &ExperimentConfig, n: &LatticePoint, r: &LatticePoint) -> Result<IndexReport> {
    Ok(IndexReport {
        tau: cfg.statistics.tau,
        u: level_u(&cfg.model, n, cfg.statistics.tau)?,
        r: Some(r.clone()),
        n: Some(n.clone()),
        seed: cfg.seed,
        model_digest: cfg.model.digest(),
        ..IndexReport::default()
    })
}

fn mma_theta(cfg: &ExperimentConfig) -> Result<Table> {
    let exact = mixture_theta(&mma_components(&cfg.model)?)?;
    let (n, r) = n_r(cfg)?;
    let mut closed = base_report(cfg, &n, &r)?;
    closed.theta_classical = Some(("closed-form".into(), Estimate::exact(exact_to_f64(&exact.classical))));
    closed.theta_run = exact
        .corners
        .iter()
        .map(|(c, v)| (c.clone(), "closed-form".to_string(), Estimate::exact(exact_to_f64(v))))
        .collect();
    let mut table = Table::new(&INDEX_COLUMNS, cfg.seed);
    push_report(&mut table, &closed);
    if cfg.extra.empirical {
        let s = stream(cfg);
        let reps = usize_of(cfg.statistics.n_replicates)?;
        let tau = cfg.statistics.tau;
        let mut mc = base_report(cfg, &n, &r)?;
        mc.theta_classical = Some((
            "classical-empirical".into(),
            theta_classical_empirical(&cfg.model, &n, tau, reps, &s.labeled("classical"))?,
        ));
        for (i, c) in CornerIndex::all(2).into_iter().enumerate() {
            let e = theta_run_empirical(&cfg.model, &c, &r, &n, tau, reps, &s.labeled("run").child(i as u64))?;
            mc.theta_run.push((c, "run-empirical".into(), e));
        }
        mc.validate()?;
        push_report(&mut table, &mc);
    }
    Ok(table)
}

fn mma_empirical(cfg: &ExperimentConfig) -> Result<Table> {
    let (n, r) = n_r(cfg)?;
    let k = n.dim();
    let s = stream(cfg);
    let reps = usize_of(cfg.statistics.n_replicates)?;
    let tau = cfg.statistics.tau;
    let m = &cfg.model;
    let mut rep = base_report(cfg, &n, &r)?;
    rep.theta_classical = Some((
        "classical-empirical".into(),
        theta_classical_empirical(m, &n, tau, reps, &s.labeled("classical"))?,
    ));
    rep.theta_block = Some((
        "block-empirical".into(),
        theta_block_empirical(m, &n, &r, tau, reps, &s.labeled("block"))?,
    ));
    for (i, c) in CornerIndex::all(k).into_iter().enumerate() {
        let e = theta_run_empirical(m, &c, &r, &n, tau, reps, &s.labeled("run").child(i as u64))?;
        rep.theta_run.push((c, "run-empirical".into(), e));
    }
    let batch = tail_batch(cfg, &s.labeled("tailfield"))?;
    let bound = cfg.geometry.lags;
    for c in CornerIndex::all(k) {
        let region = TailRegion::Orthant { corner: c.clone(), bound };
        let e = theta_from_tail_samples(&batch.samples, &region)?;
        warn_boundary(&region, e.boundary_fraction);
        rep.theta_tailfield.push((c, "tailfield".into(), e.estimate));
    }
    let region = TailRegion::HalfSpace {
        order: InvariantOrder::lexicographic(k),
        bound,
    };
    let e = theta_from_tail_samples(&batch.samples, &region)?;
    warn_boundary(&region, e.boundary_fraction);
    rep.theta_halfspace = Some(("halfspace-tailfield".into(), e.estimate));
    rep.validate()?;
    let mut table = Table::new(&INDEX_COLUMNS, cfg.seed);
    push_report(&mut table, &rep);
    Ok(table)
}

fn warn_boundary(region: &TailRegion, fraction: f64) {
    if fraction > 0.01 {
        eprintln!("warning: {:.1}% of tail samples exceed 1 on the outer shell of {region:?}", 100.0 * fraction);
    }
}

fn variogram(model: &ModelSpec) -> Result<&VariogramSpec> {
    match model {
        ModelSpec::BrownResnick { variogram } => Ok(variogram),
        _ => bail!("this command needs a Brown–Resnick model"),
    }
}

/// Truncation levels reported along with `M` itself.
fn profile_levels(m: i64) -> Vec<i64> {
    let mut ms: Vec<i64> = [1, 2, 5, 10, 20, 50, 100, 200].into_iter().filter(|&x| x < m).collect();
    ms.push(m);
    ms
}

fn br_theta(cfg: &ExperimentConfig) -> Result<Table> {
    let v = variogram(&cfg.model)?;
    let k = dim(cfg);
    let ms = profile_levels(cfg.geometry.truncation);
    let n_mc = usize_of(cfg.statistics.n_mc)?;
    let est = br_theta_block_profile(v, &ms, &InvariantOrder::lexicographic(k), n_mc, &stream(cfg))?;
    let mut table = Table::new(&["m", "theta_b", "se", "n_mc"], cfg.seed);
    let digest = cfg.model.digest();
    for (m, e) in ms.iter().zip(est) {
        table.push(vec![(*m).into(), e.value.into(), e.se.into(), cfg.statistics.n_mc.into()], &digest);
    }
    Ok(table)
}

/// One block index per grid point. All points share their random numbers,
/// which keeps differences across the grid smooth.
fn br_fig1(cfg: &ExperimentConfig) -> Result<Table> {
    let grid = &cfg.extra.hurst_grid;
    if grid.is_empty() || grid.iter().any(|&h| !(h > 0.0 && h < 1.0)) {
        bail!("Hurst grid must be a nonempty list in (0,1)");
    }
    let m = cfg.geometry.truncation;
    let n_mc = usize_of(cfg.statistics.n_mc)?;
    let s = stream(cfg);
    let order = InvariantOrder::lexicographic(2);
    let mut table = Table::new(&["H_1", "H_2", "theta_b", "se", "m", "n_mc"], cfg.seed);
    for &h1 in grid {
        for &h2 in grid {
            let model = ModelSpec::BrownResnick {
                variogram: VariogramSpec::AdditiveFBM { hurst: vec![h1, h2] },
            };
            let v = variogram(&model)?;
            let e = br_theta_block_profile(v, &[m], &order, n_mc, &s)?[0];
            table.push(
                vec![h1.into(), h2.into(), e.value.into(), e.se.into(), m.into(), cfg.statistics.n_mc.into()],
                &model.digest(),
            );
        }
    }
    Ok(table)
}

fn br_tailcdf(cfg: &ExperimentConfig) -> Result<Table> {
    let v = variogram(&cfg.model)?;
    let k = dim(cfg);
    let n_mc = usize_of(cfg.statistics.n_mc)?;
    let s = stream(cfg);
    let digest = cfg.model.digest();
    let mut table = Table::new(&["point", "gamma", "y", "closed_form", "mc", "se", "z"], cfg.seed);
    let mut idx = 0u64;
    for p in &cfg.extra.points {
        let t = point(p, k, "point")?;
        let gamma = v.gamma(&t.0);
        for &y in &cfg.extra.levels {
            let exact = br_tail_marginal_cdf(gamma, y);
            let e = br_tail_fdd_mc(std::slice::from_ref(&t), &[y], v, n_mc, &s.child(idx))?;
            idx += 1;
            let z = e.z_distance(&Estimate::exact(exact));
            table.push(
                vec![
                    t.to_string().into(),
                    gamma.into(),
                    y.into(),
                    exact.into(),
                    e.value.into(),
                    e.se.into(),
                    z.into(),
                ],
                &digest,
            );
        }
    }
    Ok(table)
}

fn tailfield(cfg: &ExperimentConfig) -> Result<Table> {
    let lags = Window::centered(dim(cfg), cfg.geometry.lags)?;
    let st = &cfg.statistics;
    let batch = estimate_tail_field(&cfg.model, cfg.model.alpha(), &lags, st.q, st.n_replicates, &stream(cfg))?;
    let mut cols = vec!["replicate".to_string(), "threshold".into(), "root_norm".into()];
    cols.extend(lags.points().map(|t| format!("Y{t}")));
    let mut table = Table::with_columns(cols, cfg.seed);
    let digest = cfg.model.digest();
    for (i, smp) in batch.samples.iter().enumerate() {
        let mut row: Vec<Cell> = vec![(i as u64).into(), batch.threshold.into(), smp.root_norm.into()];
        row.extend(smp.y_values.iter().map(|&y| Cell::Real(y)));
        table.push(row, &digest);
    }
    Ok(table)
}

fn cluster_laplace(cfg: &ExperimentConfig) -> Result<Table> {
    let (n, r) = n_r(cfg)?;
    let k = n.dim();
    let s = stream(cfg);
    let u = level_u(&cfg.model, &n, cfg.statistics.tau)?;
    let clusters =
        sample_nonempty_clusters(&cfg.model, &r, u, usize_of(cfg.statistics.n_replicates)?, &s.labeled("clusters"))?;
    let spectral = tail_batch(cfg, &s.labeled("tailfield"))?.spectral();
    let order = InvariantOrder::lexicographic(k);
    let digest = cfg.model.digest();
    let mut table = Table::new(
        &[
            "function",
            "empirical",
            "empirical_se",
            "limit",
            "limit_se",
            "z",
            "theta_half",
            "boundary_mass",
            "warning",
        ],
        cfg.seed,
    );
    for id in &cfg.extra.functions {
        let f = PointFunction::catalog(id)?;
        let emp = empirical_cluster_laplace(&clusters, &f)?;
        let lim = limit_cluster_laplace_mc(&spectral, &f, cfg.model.alpha(), &order, None, 16)?;
        table.push(
            vec![
                id.as_str().into(),
                emp.value.into(),
                emp.se.into(),
                lim.estimate.value.into(),
                lim.estimate.se.into(),
                emp.z_distance(&lim.estimate).into(),
                lim.theta_half.into(),
                lim.boundary_mass.into(),
                lim.warning.unwrap_or_default().into(),
            ],
            &digest,
        );
    }
    Ok(table)
}

fn counterexample(cfg: &ExperimentConfig) -> Result<Outcome> {
    let alpha = match cfg.model {
        ModelSpec::CounterexampleField { alpha } => alpha,
        _ => bail!("counterexample needs the counterexample model"),
    };
    let (run, rows) = run_counterexample_check(
        alpha,
        &cfg.extra.ranks,
        usize_of(cfg.statistics.n_replicates)?,
        cfg.seed,
    )?;
    for c in &run.checks {
        if !c.pass {
            eprintln!("check failed: {} = {} (threshold {})", c.id, c.statistic, c.threshold);
        }
    }
    let digest = cfg.model.digest();
    let mut table = Table::new(&["rank", "parity", "estimate", "se", "limit"], cfg.seed);
    for r in rows {
        let parity = if r.rank % 2 == 1 { "odd" } else { "even" };
        table.push(
            vec![r.rank.into(), parity.into(), r.estimate.value.into(), r.estimate.se.into(), r.limit.into()],
            &digest,
        );
    }
    Ok(Outcome::ok(table))
}

fn verify(cfg: &ExperimentConfig) -> Result<Outcome> {
    let opts = VerifyOptions {
        q: cfg.statistics.q,
        exceedances: usize_of(cfg.statistics.n_mc)?,
        lag_radius: cfg.geometry.lags,
        scale: cfg.extra.scale,
        ..VerifyOptions::default()
    };
    let run = run_campaign(&cfg.extra.campaign, &cfg.model, &opts, cfg.seed)?;
    let digest = run.model.digest();
    let mut table = Table::new(&["campaign", "check", "statistic", "threshold", "comparison", "pass"], cfg.seed);
    for c in &run.checks {
        let cmp = match c.comparison {
            spatial_extremes::verify::Comparison::AtMost => "at-most",
            spatial_extremes::verify::Comparison::AtLeast => "at-least",
        };
        table.push(
            vec![
                run.name.as_str().into(),
                c.id.as_str().into(),
                c.statistic.into(),
                c.threshold.into(),
                cmp.into(),
                c.pass.into(),
            ],
            &digest,
        );
    }
    Ok(Outcome {
        table,
        passed: run.passed(),
    })
}
