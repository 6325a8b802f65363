//! Extremal indices: Monte Carlo estimators of the classical, block, run,
//! tail-field and half-space indices, exact closed forms for the diagonal
//! max-moving average and the Brown–Resnick block index.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gaussian::{CholeskyFactor, TwoSidedFbm};
use crate::lattice::{corner_point, half_space_region, orthant_region, CornerIndex, InvariantOrder, LatticePoint, Window};
use crate::model::{ModelSpec, MmaWeights, VariogramSpec, MMA_OFFSETS};
use crate::rng::{par_map, par_try_map, RngStream};
use crate::simulate::{FieldSampler, SamplerOptions};
use crate::stats::{proportion, Estimate, MeanVar};
use crate::tailfield::TailFieldSample;

/// Exact rational type of the closed forms.
pub type Exact = Ratio<i128>;

fn cardinality(n: &LatticePoint) -> Result<f64> {
    if n.0.is_empty() || n.0.iter().any(|&c| c < 1) {
        return invalid(format!("window size must be >= 1 in every axis, got {n}"));
    }
    Ok(n.0.iter().map(|&c| c as f64).product())
}

fn marginal(spec: &ModelSpec, k: usize) -> Result<FieldSampler> {
    let w = Window::positive_box(&LatticePoint::splat(k, 1))?;
    FieldSampler::new(spec, &w, &SamplerOptions::default(), &RngStream::new(0))
}

/// The level `u` with `(prod n_l) P(||X(0)|| > u) = tau`, from the exact
/// marginal of the model.
pub fn level_u(spec: &ModelSpec, n: &LatticePoint, tau: f64) -> Result<f64> {
    let total = cardinality(n)?;
    if !(tau > 0.0) {
        return invalid(format!("tau must be positive, got {tau}"));
    }
    if tau >= total {
        return invalid(format!("tau = {tau} must be below the window size {total}"));
    }
    marginal(spec, n.dim())?.upper_quantile(tau / total)
}

fn check_theta(e: Estimate, what: &str) -> Result<Estimate> {
    if e.value - 3.0 * e.se > 1.0 || e.value + 3.0 * e.se < 0.0 || !e.value.is_finite() {
        return Err(Error::Statistical(format!(
            "{what} estimate {} (se {}) is outside [0,1]",
            e.value, e.se
        )));
    }
    Ok(e)
}

/// `-ln(p)/tau` with `p` the Monte Carlo frequency of `M_X(R_n^+) <= u`.
pub fn theta_classical_empirical(
    spec: &ModelSpec,
    n: &LatticePoint,
    tau: f64,
    n_replicates: usize,
    stream: &RngStream,
) -> Result<Estimate> {
    let u = level_u(spec, n, tau)?;
    let window = Window::positive_box(n)?;
    let sampler = FieldSampler::new(spec, &window, &SamplerOptions::default(), &stream.labeled("pilot"))?;
    let below = par_try_map(n_replicates, stream, |_, r| {
        Ok(sampler.sample(u, r)?.iter().all(|&x| x.abs() <= u))
    })?;
    let k = below.iter().filter(|&&b| b).count();
    if k == 0 || k == n_replicates {
        return Err(Error::InsufficientSamples {
            got: k,
            needed: 1,
            hint: "P(M <= u) estimated as 0 or 1; change tau or n".into(),
        });
    }
    let p = k as f64 / n_replicates as f64;
    let se = ((1.0 - p) / (p * n_replicates as f64)).sqrt() / tau;
    check_theta(Estimate::new(-p.ln() / tau, se), "classical index")
}

/// `P(M_X(R_r^+) > u) / (|R_r^+| P(||X(0)|| > u))` at `u = u_n(tau)`.
///
/// Splitting the block event by its first exceedance in row-major order,
/// the ratio equals the probability that a uniformly chosen block point
/// exceeding `u` has no exceedance before it. Each replicate draws such a
/// point and a field conditioned on its exceedance.
pub fn theta_block_empirical(
    spec: &ModelSpec,
    n: &LatticePoint,
    r: &LatticePoint,
    tau: f64,
    n_replicates: usize,
    stream: &RngStream,
) -> Result<Estimate> {
    r.check_dim(n.dim())?;
    if r.0.iter().zip(&n.0).any(|(a, b)| a > b) {
        return invalid(format!("block {r} larger than window {n}"));
    }
    let u = level_u(spec, n, tau)?;
    let block = Window::positive_box(r)?;
    let sampler = FieldSampler::new(spec, &block, &SamplerOptions::default(), &stream.labeled("pilot"))?;
    let len = block.len();
    let first = par_try_map(n_replicates, stream, |_, rng| {
        let site = rand::Rng::random_range(rng, 0..len);
        let x = sampler.sample_given_exceedance(site, u, u, rng)?;
        Ok(x[..site].iter().all(|v| v.abs() <= u))
    })?;
    let k = first.iter().filter(|&&b| b).count();
    if k == 0 {
        return Err(Error::InsufficientSamples {
            got: 0,
            needed: 1,
            hint: "no block exceedance was a first exceedance; increase n_replicates".into(),
        });
    }
    check_theta(proportion(k, n_replicates), "block index")
}

/// Fraction of fields with no exceedance in `R_r^+` other than at the
/// corner `t_{n,i}`, among fields conditioned on `X(t_{n,i}) > u_n(tau)`.
/// Every replicate is a conditioning event.
pub fn theta_run_empirical(
    spec: &ModelSpec,
    corner: &CornerIndex,
    r: &LatticePoint,
    n: &LatticePoint,
    tau: f64,
    n_replicates: usize,
    stream: &RngStream,
) -> Result<Estimate> {
    if r.0.iter().any(|&c| c < 2) {
        return invalid(format!("run block must be >= 2 in every axis, got {r}"));
    }
    if n_replicates < 10 {
        return Err(Error::InsufficientSamples {
            got: n_replicates,
            needed: 10,
            hint: "increase n_replicates".into(),
        });
    }
    let u = level_u(spec, n, tau)?;
    let block = Window::positive_box(r)?;
    let t = corner_point(corner, r)?;
    let sampler = FieldSampler::new(spec, &block, &SamplerOptions::default(), &stream.labeled("pilot"))?;
    let site = sampler.site_of(&t)?;
    let alone = par_try_map(n_replicates, stream, |_, rng| {
        let x = sampler.sample_given_exceedance(site, u, u, rng)?;
        Ok(x.iter()
            .enumerate()
            .all(|(j, v)| j == site || v.abs() <= u))
    })?;
    let k = alone.iter().filter(|&&b| b).count();
    check_theta(proportion(k, n_replicates), "run index")
}

/// Region over which `sup ||Y(t)||` is taken.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TailRegion {
    /// `{t (1 - 2i) >= 0, t != 0, ||t||_inf <= bound}`.
    Orthant { corner: CornerIndex, bound: i64 },
    /// `{t ≺ 0, ||t||_inf <= bound}`.
    HalfSpace { order: InvariantOrder, bound: i64 },
}

impl TailRegion {
    pub fn points(&self) -> Result<Vec<LatticePoint>> {
        match self {
            TailRegion::Orthant { corner, bound } => orthant_region(corner, *bound),
            TailRegion::HalfSpace { order, bound } => half_space_region(order, *bound),
        }
    }

    pub fn bound(&self) -> i64 {
        match self {
            TailRegion::Orthant { bound, .. } | TailRegion::HalfSpace { bound, .. } => *bound,
        }
    }
}

/// Tail-sample index with its truncation diagnostic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailIndexEstimate {
    pub estimate: Estimate,
    /// Fraction of samples exceeding 1 on the outer shell `||t||_inf = bound`
    /// of the region; a large value means the bound is too small.
    pub boundary_fraction: f64,
}

/// `P(sup_{t in region} ||Y(t)|| <= 1)` from tail-field samples.
pub fn theta_from_tail_samples(samples: &[TailFieldSample], region: &TailRegion) -> Result<TailIndexEstimate> {
    let Some(first) = samples.first() else {
        return Err(Error::InsufficientSamples {
            got: 0,
            needed: 1,
            hint: "no tail samples".into(),
        });
    };
    let pts = region.points()?;
    let mut idx = Vec::with_capacity(pts.len());
    let mut shell = Vec::new();
    for t in &pts {
        let i = first
            .lags
            .index_of(t)
            .ok_or_else(|| Error::InvalidParameter(format!("region point {t} outside lag window {}", first.lags)))?;
        idx.push(i);
        if t.sup_norm() == region.bound() {
            shell.push(i);
        }
    }
    let mut ok = 0usize;
    let mut edge = 0usize;
    for s in samples {
        if s.lags != first.lags {
            return invalid("tail samples have different lag windows");
        }
        if idx.iter().all(|&i| s.norm_at_index(i) <= 1.0) {
            ok += 1;
        }
        if shell.iter().any(|&i| s.norm_at_index(i) > 1.0) {
            edge += 1;
        }
    }
    Ok(TailIndexEstimate {
        estimate: proportion(ok, samples.len()),
        boundary_fraction: edge as f64 / samples.len() as f64,
    })
}

/// Which index a closed form refers to.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThetaTarget {
    Classical,
    Corner(CornerIndex),
}

/// Exact rational value of a decimal `x` with at most 9 fractional digits.
pub fn exact_decimal(x: f64) -> Result<Exact> {
    if !x.is_finite() {
        return invalid(format!("{x} is not finite"));
    }
    let text = format!("{x}");
    let (neg, body) = match text.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, text.as_str()),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if frac.len() > 9 || int.len() > 18 {
        return invalid(format!("{x} is not a short decimal; exact arithmetic needs at most 9 fractional digits"));
    }
    let digits: i128 = format!("{int}{frac}")
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("cannot read {x} as a decimal")))?;
    let r = Exact::new(digits, 10i128.pow(frac.len() as u32));
    Ok(if neg { -r } else { r })
}

fn exact_weights(a: &MmaWeights) -> Result<[Exact; 4]> {
    Ok([
        exact_decimal(a.0[0])?,
        exact_decimal(a.0[1])?,
        exact_decimal(a.0[2])?,
        exact_decimal(a.0[3])?,
    ])
}

/// Weight at a diagonal offset after negating the axes where `i_l = 1`.
fn reflected(w: &[Exact; 4], corner: &CornerIndex, v: [i64; 2]) -> Exact {
    let b = corner.bits();
    let src = [
        if b[0] == 1 { -v[0] } else { v[0] },
        if b[1] == 1 { -v[1] } else { v[1] },
    ];
    let pos = MMA_OFFSETS.iter().position(|o| *o == src).expect("diagonal offset");
    w[pos]
}

/// Closed-form indices of the diagonal max-moving average: `1/(1+s)` for
/// the classical index, and for corner `(0,0)`
/// `1 - [a_{-1,-1} + min(a_{-1,1}, a_{-1,-1}) + a_{1,1} + min(a_{1,-1}, a_{-1,-1})]/(1+s)`;
/// other corners reflect the stencil through the axes with `i_l = 1`.
pub fn mma_theta_closed_form(a: &MmaWeights, target: &ThetaTarget) -> Result<Exact> {
    let w = exact_weights(a)?;
    let one = Exact::from_integer(1);
    let mass = one + w.iter().fold(Exact::from_integer(0), |s, x| s + x);
    match target {
        ThetaTarget::Classical => Ok(one / mass),
        ThetaTarget::Corner(c) => {
            if c.dim() != 2 {
                return Err(Error::DimensionMismatch { expected: 2, got: c.dim() });
            }
            let g = |v| reflected(&w, c, v);
            let mm = g([-1, -1]);
            let covered = mm + g([-1, 1]).min(mm) + g([1, 1]) + g([1, -1]).min(mm);
            Ok(one - covered / mass)
        }
    }
}

/// Exact indices of a mixture of diagonal max-moving averages.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureTheta {
    pub classical: Exact,
    /// Per corner in [`CornerIndex::all`] order.
    pub corners: Vec<(CornerIndex, Exact)>,
}

/// Weighted averages of the component closed forms. The components must
/// share `s`, so that they contribute equally to high exceedances.
pub fn mixture_theta(components: &[(f64, MmaWeights)]) -> Result<MixtureTheta> {
    if components.is_empty() {
        return invalid("mixture needs at least one component");
    }
    let mut weights = Vec::with_capacity(components.len());
    let mut s0: Option<Exact> = None;
    for (p, a) in components {
        let wp = exact_decimal(*p)?;
        if wp < Exact::from_integer(0) {
            return invalid("mixture weights must be nonnegative");
        }
        weights.push(wp);
        let s = exact_weights(a)?.iter().fold(Exact::from_integer(0), |t, x| t + x);
        match s0 {
            None => s0 = Some(s),
            Some(t) if t != s => {
                return invalid(format!(
                    "components have different s ({t} vs {s}); the averaging rule needs equal s"
                ))
            }
            _ => {}
        }
    }
    let total = weights.iter().fold(Exact::from_integer(0), |t, x| t + x);
    if total != Exact::from_integer(1) {
        return invalid(format!("mixture weights sum to {total}, not 1"));
    }
    let avg = |target: &ThetaTarget| -> Result<Exact> {
        let mut acc = Exact::from_integer(0);
        for ((_, a), wp) in components.iter().zip(&weights) {
            acc += *wp * mma_theta_closed_form(a, target)?;
        }
        Ok(acc)
    };
    let classical = avg(&ThetaTarget::Classical)?;
    let corners = CornerIndex::all(2)
        .into_iter()
        .map(|c| {
            let v = avg(&ThetaTarget::Corner(c.clone()))?;
            Ok((c, v))
        })
        .collect::<Result<_>>()?;
    Ok(MixtureTheta { classical, corners })
}

/// `f64` value of an exact index.
pub fn exact_to_f64(x: &Exact) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

enum BlockDriver {
    // per axis a two-sided fBm on [-M, M]
    Additive { axes: Vec<TwoSidedFbm>, hurst: Vec<f64> },
    // half-space points (origin first) sorted by sup norm
    Dense { chol: CholeskyFactor, half_var: Vec<f64>, shells: Vec<i64> },
}

/// Per-replicate values `(V(0) - max_{t≺0, ||t||_inf<=M} V(t))^+`,
/// `V = exp(W - sigma^2/2)`, for every `M` in `ms` (increasing), from the
/// same draws. Replicate `i` uses `stream.child(i)`, and for additive fBm
/// axis `l` uses `stream.child(i).child(l)`, so runs with different Hurst
/// parameters share their normals.
pub fn br_theta_block_paths(
    variogram: &VariogramSpec,
    ms: &[i64],
    order: &InvariantOrder,
    n_mc: usize,
    stream: &RngStream,
) -> Result<Vec<Vec<f64>>> {
    variogram.validate()?;
    if ms.is_empty() || ms[0] < 1 || ms.windows(2).any(|w| w[0] >= w[1]) {
        return invalid("truncations M must be >= 1 and strictly increasing");
    }
    let k = order.dim();
    if let Some(kv) = variogram.dim() {
        if kv != k {
            return Err(Error::DimensionMismatch { expected: kv, got: k });
        }
    }
    let big = *ms.last().unwrap();
    let driver = match variogram {
        VariogramSpec::AdditiveFBM { hurst } => BlockDriver::Additive {
            axes: hurst
                .iter()
                .map(|&h| TwoSidedFbm::new(h, -big, big))
                .collect::<Result<_>>()?,
            hurst: hurst.clone(),
        },
        _ => {
            let mut pts = half_space_region(order, big)?;
            pts.sort_by_key(|t| t.sup_norm());
            pts.insert(0, LatticePoint::zero(k));
            let n = pts.len();
            if n > 6000 {
                return invalid(format!("dense half-space sampling limited to 6000 points, got {n}"));
            }
            let mut cov = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    cov[i * n + j] = variogram.covariance(&pts[i].0, &pts[j].0);
                }
            }
            BlockDriver::Dense {
                chol: CholeskyFactor::new(&cov, n)?,
                half_var: pts.iter().map(|t| 0.5 * variogram.sigma2(&t.0)).collect(),
                shells: pts.iter().map(|t| t.sup_norm()).collect(),
            }
        }
    };
    let InvariantOrder::Lexicographic { axes: ord_axes, signs } = order;
    Ok(par_map(n_mc, stream, |i, _| {
        let rep = stream.child(i as u64);
        match &driver {
            BlockDriver::Additive { axes, hurst } => {
                // log of exp(B(x) - |x|^{2H}/2), per axis, indexed x + big
                let logs: Vec<Vec<f64>> = axes
                    .iter()
                    .zip(hurst)
                    .enumerate()
                    .map(|(l, (a, &h))| {
                        let path = a.sample(&mut rep.child(l as u64).rng());
                        path.iter()
                            .enumerate()
                            .map(|(j, b)| b - 0.5 * ((j as i64 - big).abs() as f64).powf(2.0 * h))
                            .collect()
                    })
                    .collect();
                // running maxima over 1..=m on the negative side (relative to
                // the order's sign) and over [-m, m]
                ms.iter()
                    .map(|&m| {
                        let mut best = f64::NEG_INFINITY;
                        for p in 0..k {
                            let ax = ord_axes[p];
                            let sg = signs[p] as i64;
                            let mut piv = f64::NEG_INFINITY;
                            for x in 1..=m {
                                piv = piv.max(logs[ax][(big - sg * x) as usize]);
                            }
                            let mut lsum = piv;
                            for &later in &ord_axes[p + 1..] {
                                let row = &logs[later];
                                let full = row[(big - m) as usize..=(big + m) as usize]
                                    .iter()
                                    .cloned()
                                    .fold(f64::NEG_INFINITY, f64::max);
                                lsum += full;
                            }
                            best = best.max(lsum);
                        }
                        (1.0 - best.exp()).max(0.0)
                    })
                    .collect()
            }
            BlockDriver::Dense { chol, half_var, shells } => {
                let w = chol.sample(&mut rep.rng());
                let v0 = (w[0] - half_var[0]).exp();
                let mut out = Vec::with_capacity(ms.len());
                let mut best = 0.0f64;
                let mut j = 1;
                for &m in ms {
                    while j < w.len() && shells[j] <= m {
                        best = best.max((w[j] - half_var[j]).exp());
                        j += 1;
                    }
                    out.push((v0 - best).max(0.0));
                }
                out
            }
        }
    }))
}

/// `theta_b = E max_{t⪯0} V(t) - E max_{t≺0} V(t)` over the half-space
/// truncated to `||t||_inf <= M`, with common random numbers.
pub fn br_theta_block_mc(
    variogram: &VariogramSpec,
    m: i64,
    order: &InvariantOrder,
    n_mc: usize,
    stream: &RngStream,
) -> Result<Estimate> {
    Ok(br_theta_block_profile(variogram, &[m], order, n_mc, stream)?[0])
}

/// [`br_theta_block_mc`] at several truncations from the same replicates.
pub fn br_theta_block_profile(
    variogram: &VariogramSpec,
    ms: &[i64],
    order: &InvariantOrder,
    n_mc: usize,
    stream: &RngStream,
) -> Result<Vec<Estimate>> {
    if n_mc < 2 {
        return invalid("n_mc must be >= 2");
    }
    let paths = br_theta_block_paths(variogram, ms, order, n_mc, stream)?;
    Ok((0..ms.len())
        .map(|j| paths.iter().map(|p| p[j]).collect::<MeanVar>().estimate())
        .collect())
}

/// One row of an index report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexRecord {
    pub method: String,
    /// Corner as `(i_1,...,i_k)`, empty for cornerless indices.
    pub corner: String,
    pub theta: f64,
    pub se: f64,
    pub tau: f64,
    pub u: f64,
    pub r: String,
    pub n: String,
    pub seed: u64,
    pub model_digest: String,
    pub version: String,
}

/// Named index estimates of one model, with their common settings.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IndexReport {
    pub theta_classical: Option<(String, Estimate)>,
    pub theta_block: Option<(String, Estimate)>,
    pub theta_run: Vec<(CornerIndex, String, Estimate)>,
    pub theta_tailfield: Vec<(CornerIndex, String, Estimate)>,
    pub theta_halfspace: Option<(String, Estimate)>,
    pub tau: f64,
    pub u: f64,
    pub r: Option<LatticePoint>,
    pub n: Option<LatticePoint>,
    pub seed: u64,
    pub model_digest: String,
}

impl IndexReport {
    /// Flattened rows in a fixed order: classical, block, run corners,
    /// tail-field corners, half-space.
    pub fn records(&self) -> Vec<IndexRecord> {
        let show = |p: &Option<LatticePoint>| p.as_ref().map(|x| x.to_string()).unwrap_or_default();
        let row = |method: &str, corner: String, e: &Estimate| IndexRecord {
            method: method.to_string(),
            corner,
            theta: e.value,
            se: e.se,
            tau: self.tau,
            u: self.u,
            r: show(&self.r),
            n: show(&self.n),
            seed: self.seed,
            model_digest: self.model_digest.clone(),
            version: crate::VERSION.to_string(),
        };
        let mut out = Vec::new();
        if let Some((m, e)) = &self.theta_classical {
            out.push(row(m, String::new(), e));
        }
        if let Some((m, e)) = &self.theta_block {
            out.push(row(m, String::new(), e));
        }
        for (c, m, e) in self.theta_run.iter().chain(&self.theta_tailfield) {
            out.push(row(m, c.to_string(), e));
        }
        if let Some((m, e)) = &self.theta_halfspace {
            out.push(row(m, String::new(), e));
        }
        out
    }

    /// Flags any estimate further than three standard errors outside `[0,1]`.
    pub fn validate(&self) -> Result<()> {
        let all = self
            .theta_classical
            .iter()
            .chain(&self.theta_block)
            .chain(&self.theta_halfspace)
            .map(|(_, e)| e)
            .chain(self.theta_run.iter().chain(&self.theta_tailfield).map(|(_, _, e)| e));
        for e in all {
            check_theta(*e, "index")?;
        }
        Ok(())
    }
}
