//! Named, seed-reproducible verification campaigns with pass/fail verdicts.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{LatticePoint, Window};
use crate::model::ModelSpec;
use crate::rng::{par_map, RngStream};
use crate::simulate::{counterexample_block, ln_factorial, pareto_in_block, partner_given};
use crate::stats::{ks_statistic, ks_two_sample_test, Estimate, MeanVar};
use crate::tailfield::{
    estimate_tail_field, rs_transform_with, verify_change_of_time, SpectralFieldSample, ZERO_TOLERANCE,
};
use crate::testfn::TestFunction;

/// Verdict thresholds shared by every campaign.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Largest KS distance of the root norm to the Pareto law.
    pub pareto_ks: f64,
    /// Largest `|lhs - rhs|` in standard errors.
    pub z: f64,
    /// Family-wise level of the per-lag two-sample tests.
    pub ks_level: f64,
    /// Smallest separation of the counterexample groups, in standard errors.
    pub separation: f64,
    /// Allowed bias of a counterexample rank against its group limit.
    pub closeness: f64,
}

pub const THRESHOLDS: Thresholds = Thresholds {
    pareto_ks: 0.02,
    z: 3.0,
    ks_level: 0.01,
    separation: 5.0,
    closeness: 0.02,
};

impl Default for Thresholds {
    fn default() -> Self {
        THRESHOLDS
    }
}

/// How a statistic is compared with its threshold.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    AtMost,
    AtLeast,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub id: String,
    pub statistic: f64,
    pub threshold: f64,
    pub comparison: Comparison,
    pub pass: bool,
}

impl Check {
    pub fn new(id: impl Into<String>, statistic: f64, threshold: f64, comparison: Comparison) -> Self {
        let pass = match comparison {
            Comparison::AtMost => statistic <= threshold,
            Comparison::AtLeast => statistic >= threshold,
        };
        Check {
            id: id.into(),
            statistic,
            threshold,
            comparison,
            pass,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationRun {
    pub name: String,
    pub model: ModelSpec,
    pub checks: Vec<Check>,
    pub seed: u64,
}

impl VerificationRun {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Sampling settings of the tail-based campaigns.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerifyOptions {
    /// Threshold quantile; close to 1 so that off-cluster values are below
    /// [`ZERO_TOLERANCE`] after rescaling.
    pub q: f64,
    /// Retained exceedances.
    pub exceedances: usize,
    /// Lag window `[-radius, radius]^2`.
    pub lag_radius: i64,
    /// Multiplies every spectral value; anything but 1 breaks the lag-0
    /// normalization.
    pub scale: f64,
    /// Adds negative-control checks.
    pub controls: bool,
    pub thresholds: Thresholds,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            q: 1.0 - 1e-14,
            exceedances: 4000,
            lag_radius: 6,
            scale: 1.0,
            controls: true,
            thresholds: THRESHOLDS,
        }
    }
}

fn lag_window(spec: &ModelSpec, radius: i64) -> Result<Window> {
    Window::centered(spec.dim().unwrap_or(2), radius)
}

fn n_for(q: f64, k: usize) -> u64 {
    (k as f64 / (1.0 - q)).ceil() as u64 + 1
}

/// Spectral samples of a model, scaled by `opts.scale`.
pub fn spectral_samples(spec: &ModelSpec, opts: &VerifyOptions, stream: &RngStream) -> Result<Vec<SpectralFieldSample>> {
    let lags = lag_window(spec, opts.lag_radius)?;
    let batch = estimate_tail_field(spec, spec.alpha(), &lags, opts.q, n_for(opts.q, opts.exceedances), stream)?;
    Ok(batch
        .spectral()
        .into_iter()
        .map(|s| if opts.scale == 1.0 { s } else { s.scaled(opts.scale) })
        .collect())
}

/// KS distance of `||Y(0)||` to the Pareto(alpha) law.
pub fn run_pareto_root_check(spec: &ModelSpec, alpha: f64, opts: &VerifyOptions, seed: u64) -> Result<VerificationRun> {
    let stream = RngStream::new(seed).labeled("pareto-root");
    let lags = lag_window(spec, 1)?;
    let batch = estimate_tail_field(spec, alpha, &lags, opts.q, n_for(opts.q, opts.exceedances), &stream)?;
    let roots: Vec<f64> = batch.samples.iter().map(|s| s.root_norm).collect();
    let t = &opts.thresholds;
    let ks = ks_statistic(&roots, |y| if y <= 1.0 { 0.0 } else { 1.0 - y.powf(-alpha) });
    let mut checks = vec![Check::new("pareto-root:ks", ks, t.pareto_ks, Comparison::AtMost)];
    if opts.controls {
        let wrong = 2.0 * alpha;
        let ks_wrong = ks_statistic(&roots, |y| if y <= 1.0 { 0.0 } else { 1.0 - y.powf(-wrong) });
        checks.push(Check::new(
            "control:wrong-index-rejected",
            ks_wrong,
            t.pareto_ks,
            Comparison::AtLeast,
        ));
    }
    Ok(VerificationRun {
        name: "pareto-root".into(),
        model: spec.clone(),
        checks,
        seed,
    })
}

/// Shifts and test functions of the change-of-time campaign on `Z^2`.
pub fn change_of_time_catalog() -> (Vec<LatticePoint>, Vec<TestFunction>) {
    let p = |a: i64, b: i64| LatticePoint(vec![a, b]);
    let shifts = vec![p(1, 0), p(0, 1), p(1, 1)];
    let gs = vec![
        TestFunction::one(),
        TestFunction::IndicatorExceed {
            level: 0.5,
            lags: vec![p(0, 0), p(1, 0)],
        },
        TestFunction::BoundedContinuous {
            id: "ramp05".into(),
            lags: vec![p(0, 0), p(0, 1), p(1, 1)],
        },
    ];
    (shifts, gs)
}

fn change_of_time_checks(
    samples: &[SpectralFieldSample],
    shifts: &[LatticePoint],
    gs: &[TestFunction],
    alpha: f64,
    prefix: &str,
) -> Result<Vec<(String, f64)>> {
    let mut out = Vec::new();
    for s in shifts {
        for g in gs {
            let r = verify_change_of_time(samples, s, g, alpha)?;
            out.push((format!("{prefix}s={s}:{}", g.name()), r.z()));
        }
    }
    Ok(out)
}

/// `E[g(Theta(. - s)) 1(Theta(-s) != 0)] = E[g(Theta/||Theta(s)||) ||Theta(s)||^alpha]`
/// for every shift and function of [`change_of_time_catalog`].
pub fn run_change_of_time_check(spec: &ModelSpec, opts: &VerifyOptions, seed: u64) -> Result<VerificationRun> {
    let stream = RngStream::new(seed).labeled("change-of-time");
    let samples = spectral_samples(spec, opts, &stream)?;
    let (shifts, gs) = change_of_time_catalog();
    let alpha = spec.alpha();
    let t = &opts.thresholds;
    let mut checks: Vec<Check> = change_of_time_checks(&samples, &shifts, &gs, alpha, "")?
        .into_iter()
        .map(|(id, z)| Check::new(id, z, t.z, Comparison::AtMost))
        .collect();
    if opts.controls {
        // a copy of the root at lag s0 gives E||Theta(s0)||^alpha = 1 while
        // Theta(-s0) still vanishes with positive probability
        let s0 = &shifts[0];
        let corrupted: Vec<SpectralFieldSample> = samples
            .iter()
            .map(|s| {
                let mut c = s.clone();
                let i0 = c.lags.index_of(&LatticePoint::zero(2)).expect("origin lag");
                let i1 = c.lags.index_of(s0).expect("shift lag");
                c.theta_values[i1] = c.theta_values[i0];
                c
            })
            .collect();
        let z = change_of_time_checks(&corrupted, &[s0.clone()], &[TestFunction::one()], alpha, "")?[0].1;
        checks.push(Check::new("control:root-copied-to-shift-rejected", z, t.z, Comparison::AtLeast));
    }
    Ok(VerificationRun {
        name: "change-of-time".into(),
        model: spec.clone(),
        checks,
        seed,
    })
}

/// Bonferroni-adjusted smallest per-lag p-value, and the largest distance.
fn rs_min_adjusted_p(samples: &[SpectralFieldSample], stream: &RngStream) -> Result<(f64, f64)> {
    if samples.len() < 20 {
        return Err(Error::InsufficientSamples {
            got: samples.len(),
            needed: 20,
            hint: "increase exceedances".into(),
        });
    }
    let half = samples.len() / 2;
    let (a, b) = samples.split_at(half);
    let transformed: Vec<SpectralFieldSample> = par_map(a.len(), stream, |i, r| rs_transform_with(&a[i], r))
        .into_iter()
        .collect::<Result<_>>()?;
    let lags = &samples[0].lags;
    let test: Vec<usize> = lags
        .points()
        .enumerate()
        .filter(|(_, t)| t.sup_norm() <= 2)
        .map(|(i, _)| i)
        .collect();
    let clean = |x: f64| if x <= ZERO_TOLERANCE { 0.0 } else { x };
    let mut worst_p: f64 = 1.0;
    let mut worst_d: f64 = 0.0;
    for &i in &test {
        let xa: Vec<f64> = transformed.iter().map(|s| clean(s.norm_at_index(i))).collect();
        let xb: Vec<f64> = b.iter().map(|s| clean(s.norm_at_index(i))).collect();
        let (d, p) = ks_two_sample_test(&xa, &xb);
        worst_p = worst_p.min(p);
        worst_d = worst_d.max(d);
    }
    Ok(((worst_p * test.len() as f64).min(1.0), worst_d))
}

/// Per-lag two-sample KS between `Theta^{RS}` (first half of the samples)
/// and `Theta` (second half) over lags with `||t||_inf <= 2`; passes when the
/// Bonferroni-adjusted smallest p-value is above the level.
pub fn run_rs_invariance_check(spec: &ModelSpec, opts: &VerifyOptions, seed: u64) -> Result<VerificationRun> {
    let stream = RngStream::new(seed).labeled("rs-invariance");
    let samples = spectral_samples(spec, opts, &stream)?;
    run_rs_invariance_on(spec, &samples, opts, seed, &stream)
}

/// [`run_rs_invariance_check`] on given samples.
pub fn run_rs_invariance_on(
    spec: &ModelSpec,
    samples: &[SpectralFieldSample],
    opts: &VerifyOptions,
    seed: u64,
    stream: &RngStream,
) -> Result<VerificationRun> {
    let t = &opts.thresholds;
    let (p, d) = rs_min_adjusted_p(samples, &stream.labeled("shift"))?;
    let mut checks = vec![
        Check::new("rs:adjusted-min-p", p, t.ks_level, Comparison::AtLeast),
        Check::new("rs:max-ks-distance", d, 1.0, Comparison::AtMost),
    ];
    if opts.controls {
        let bad: Vec<SpectralFieldSample> = samples.iter().map(|s| s.scaled(2.0)).collect();
        let (pc, _) = rs_min_adjusted_p(&bad, &stream.labeled("control"))?;
        checks.push(Check::new("control:unnormalized-root-rejected", pc, t.ks_level, Comparison::AtMost));
    }
    Ok(VerificationRun {
        name: "rs-invariance".into(),
        model: spec.clone(),
        checks,
        seed,
    })
}

/// `a_m^alpha P(a_m^{-1}(Z_1, Z_2) in (1,2]^2)` by importance sampling:
/// `Z_1` is drawn from its law on `(a_m, 2 a_m]`, which has probability
/// `a_m^{-alpha}(1 - 2^{-alpha})`, and `Z_2` from its conditional law.
pub fn counterexample_scaled_box(alpha: f64, m: u64, n: usize, stream: &RngStream) -> Result<Estimate> {
    if !(alpha > 0.0) || m < 1 {
        return invalid("need alpha > 0 and rank m >= 1");
    }
    if n < 2 {
        return Err(Error::InsufficientSamples {
            got: n,
            needed: 2,
            hint: "increase n_replicates".into(),
        });
    }
    let ln_a = ln_factorial(m);
    if ln_a > 700.0 {
        return invalid(format!("rank {m} exceeds the floating-point range"));
    }
    let mass = -(-alpha * std::f64::consts::LN_2).exp_m1();
    let (lo, hi) = (ln_a.exp(), (ln_a + std::f64::consts::LN_2).exp());
    let vals = par_map(n, stream, |_, r| {
        let z = pareto_in_block(alpha, ln_a, ln_a + std::f64::consts::LN_2, r).exp();
        debug_assert_eq!(counterexample_block(z.ln()), m);
        let w = partner_given(z, alpha, r);
        if w > lo && w <= hi {
            mass
        } else {
            0.0
        }
    });
    Ok(vals.into_iter().collect::<MeanVar>().estimate())
}

/// Per-rank estimates of the counterexample campaign.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleRow {
    pub rank: u64,
    pub estimate: Estimate,
    /// `1 - 2^{-alpha}` for odd ranks, `(1 - 2^{-alpha})^2` for even ones.
    pub limit: f64,
}

/// Odd ranks should cluster near `1 - 2^{-alpha}` and even ranks near
/// `(1 - 2^{-alpha})^2`, with the group means well separated.
pub fn run_counterexample_check(
    alpha: f64,
    ranks: &[u64],
    n_replicates: usize,
    seed: u64,
) -> Result<(VerificationRun, Vec<CounterexampleRow>)> {
    let stream = RngStream::new(seed).labeled("counterexample");
    let t = THRESHOLDS;
    let c = -(-alpha * std::f64::consts::LN_2).exp_m1();
    let mut rows = Vec::with_capacity(ranks.len());
    let mut checks = Vec::new();
    for &m in ranks {
        let e = counterexample_scaled_box(alpha, m, n_replicates, &stream.child(m))?;
        let limit = if m % 2 == 1 { c } else { c * c };
        let bias = (e.value - limit).abs();
        checks.push(Check::new(
            format!("rank {m}: |estimate - limit|"),
            bias,
            t.closeness + t.z * e.se,
            Comparison::AtMost,
        ));
        rows.push(CounterexampleRow { rank: m, estimate: e, limit });
    }
    let group = |odd: bool| -> Option<Estimate> {
        let g: Vec<&Estimate> = rows
            .iter()
            .filter(|r| (r.rank % 2 == 1) == odd)
            .map(|r| &r.estimate)
            .collect();
        if g.is_empty() {
            return None;
        }
        let k = g.len() as f64;
        let mean = g.iter().map(|e| e.value).sum::<f64>() / k;
        let se = g.iter().map(|e| e.se * e.se).sum::<f64>().sqrt() / k;
        Some(Estimate::new(mean, se))
    };
    match (group(true), group(false)) {
        (Some(o), Some(e)) => {
            checks.push(Check::new("odd-even separation (se)", o.z_distance(&e), t.separation, Comparison::AtLeast));
        }
        _ => return invalid("need both odd and even ranks"),
    }
    Ok((
        VerificationRun {
            name: "counterexample".into(),
            model: ModelSpec::CounterexampleField { alpha },
            checks,
            seed,
        },
        rows,
    ))
}

/// Campaign names accepted by [`run_campaign`].
pub const CAMPAIGNS: [&str; 4] = ["pareto-root", "change-of-time", "rs-invariance", "counterexample"];

/// Runs a named campaign on a model.
pub fn run_campaign(name: &str, spec: &ModelSpec, opts: &VerifyOptions, seed: u64) -> Result<VerificationRun> {
    match name {
        "pareto-root" => {
            let o = VerifyOptions {
                exceedances: opts.exceedances.max(20_000),
                ..*opts
            };
            run_pareto_root_check(spec, spec.alpha(), &o, seed)
        }
        "change-of-time" => run_change_of_time_check(spec, opts, seed),
        "rs-invariance" => run_rs_invariance_check(spec, opts, seed),
        "counterexample" => {
            let ranks: Vec<u64> = (20..=41).collect();
            Ok(run_counterexample_check(spec.alpha(), &ranks, 20_000, seed)?.0)
        }
        other => invalid(format!("unknown campaign {other:?} (known: {})", CAMPAIGNS.join(", "))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdicts() {
        assert!(Check::new("a", 0.01, 0.02, Comparison::AtMost).pass);
        assert!(!Check::new("a", 0.03, 0.02, Comparison::AtMost).pass);
        assert!(Check::new("a", 6.0, 5.0, Comparison::AtLeast).pass);
    }

    #[test]
    fn odd_ranks_are_exact() {
        let e = counterexample_scaled_box(1.0, 21, 100, &RngStream::new(1)).unwrap();
        assert_eq!(e.value, 0.5);
        assert_eq!(e.se, 0.0);
        let e = counterexample_scaled_box(2.0, 5, 100, &RngStream::new(1)).unwrap();
        assert_eq!(e.value, 0.75);
    }

    #[test]
    fn single_atoms_pass_rs() {
        let lags = Window::centered(2, 3).unwrap();
        let mut v = vec![0.0; lags.len()];
        v[lags.index_of(&LatticePoint::zero(2)).unwrap()] = 1.0;
        let s = SpectralFieldSample {
            lags,
            d: 1,
            theta_values: v,
            alpha: 1.0,
            norm: crate::lattice::Norm::Abs,
        };
        let samples = vec![s; 100];
        let spec = ModelSpec::preset("iid").unwrap();
        let run = run_rs_invariance_on(&spec, &samples, &VerifyOptions::default(), 1, &RngStream::new(1)).unwrap();
        assert!(run.passed(), "{run:?}");
    }

    #[test]
    fn unknown_campaign() {
        let spec = ModelSpec::preset("iid").unwrap();
        assert!(run_campaign("bogus", &spec, &VerifyOptions::default(), 1).is_err());
    }
}
