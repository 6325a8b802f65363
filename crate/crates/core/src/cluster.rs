//! Cluster processes of blocks, their empirical and limiting Laplace
//! functionals, and the anti-clustering diagnostic.

use std::cmp::Ordering;
use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::index::level_u;
use crate::lattice::{FieldSample, InvariantOrder, LatticePoint, Norm, Window};
use crate::model::ModelSpec;
use crate::rng::{par_try_map, RngStream};
use crate::simulate::{FieldSampler, SamplerOptions};
use crate::stats::{Estimate, MeanVar};
use crate::tailfield::SpectralFieldSample;
use crate::testfn::PointFunction;

/// `C = sum_{t in block} delta_{u^{-1} X(t)}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterProcess {
    /// Rescaled values `u^{-1} X(t)` in row-major block order, `d` per atom.
    pub atoms: Vec<f64>,
    pub d: usize,
    pub norm: Norm,
    pub block: Window,
    pub u: f64,
    pub nonempty: bool,
}

impl ClusterProcess {
    fn from_values(values: &[f64], d: usize, norm: Norm, block: Window, u: f64) -> Self {
        let atoms: Vec<f64> = values.iter().map(|v| v / u).collect();
        let nonempty = atoms.chunks_exact(d).any(|a| norm.apply(a) > 1.0);
        ClusterProcess {
            atoms,
            d,
            norm,
            block,
            u,
            nonempty,
        }
    }

    pub fn atom_norms(&self) -> impl Iterator<Item = f64> + '_ {
        self.atoms.chunks_exact(self.d).map(|a| self.norm.apply(a))
    }

    /// Number of atoms with norm above 1.
    pub fn exceedances(&self) -> usize {
        self.atom_norms().filter(|&r| r > 1.0).count()
    }

    /// `exp(-sum_atoms f(||atom||))`.
    pub fn laplace(&self, f: &PointFunction) -> f64 {
        (-self.atom_norms().map(|r| f.eval(r)).sum::<f64>()).exp()
    }
}

/// Splits a sample into the disjoint blocks `lo + j r + R_r^+`.
pub fn cluster_process_extract(sample: &FieldSample, r: &LatticePoint, u: f64) -> Result<Vec<ClusterProcess>> {
    let w = &sample.window;
    r.check_dim(w.dim())?;
    if !(u > 0.0) {
        return invalid(format!("threshold must be positive, got {u}"));
    }
    let shape = w.shape();
    let mut counts = Vec::with_capacity(shape.len());
    for (l, (&s, &rl)) in shape.iter().zip(&r.0).enumerate() {
        if rl < 1 || s as i64 % rl != 0 {
            return invalid(format!("window side {s} on axis {l} is not a multiple of the block side {rl}"));
        }
        counts.push(s as i64 / rl);
    }
    let grid = Window::positive_box(&LatticePoint(counts))?;
    let base = Window::positive_box(r)?;
    let d = sample.d;
    let mut out = Vec::with_capacity(grid.len());
    for j in grid.points() {
        let offset = LatticePoint(
            j.0.iter()
                .zip(&r.0)
                .zip(&w.lo().0)
                .map(|((a, b), c)| a * b + c)
                .collect(),
        );
        let block = base.translated(&offset)?;
        let mut vals = Vec::with_capacity(block.len() * d);
        for t in block.points() {
            let i = w.index_of(&t).expect("block inside window");
            vals.extend_from_slice(sample.value(i));
        }
        out.push(ClusterProcess::from_values(&vals, d, sample.norm, block, u));
    }
    Ok(out)
}

/// Draws `n_clusters` blocks `R_r^+` conditioned on `M_X(R_r^+) > u`.
///
/// A block point is chosen uniformly and the field is drawn given an
/// exceedance there; the draw is kept when no earlier point (row-major)
/// exceeds. Accepted fields follow the conditional law exactly; the
/// acceptance rate is the finite-block index.
pub fn sample_nonempty_clusters(
    spec: &ModelSpec,
    r: &LatticePoint,
    u: f64,
    n_clusters: usize,
    stream: &RngStream,
) -> Result<Vec<ClusterProcess>> {
    let block = Window::positive_box(r)?;
    let sampler = FieldSampler::new(spec, &block, &SamplerOptions::default(), &stream.labeled("pilot"))?;
    let len = block.len();
    let attempts = stream.labeled("attempts");
    let mut out: Vec<ClusterProcess> = Vec::with_capacity(n_clusters);
    let mut next = 0u64;
    let batch = (n_clusters.max(16) * 3).min(1 << 16);
    while out.len() < n_clusters {
        if next > 1000 * n_clusters as u64 + 10_000 {
            return Err(Error::InsufficientSamples {
                got: out.len(),
                needed: n_clusters,
                hint: "first-exceedance acceptance rate too low".into(),
            });
        }
        let start = next;
        let got = par_try_map(batch, &attempts.labeled(&start.to_string()), |_, rng| {
            let site = rand::Rng::random_range(rng, 0..len);
            let x = sampler.sample_given_exceedance(site, u, u, rng)?;
            Ok(if x[..site].iter().all(|v| v.abs() <= u) { Some(x) } else { None })
        })?;
        next += batch as u64;
        for x in got.into_iter().flatten() {
            if out.len() == n_clusters {
                break;
            }
            out.push(ClusterProcess::from_values(&x, 1, Norm::Abs, block.clone(), u));
        }
    }
    Ok(out)
}

fn nonempty_only(clusters: &[ClusterProcess]) -> Result<Vec<&ClusterProcess>> {
    let ne: Vec<&ClusterProcess> = clusters.iter().filter(|c| c.nonempty).collect();
    if ne.is_empty() {
        return Err(Error::InsufficientSamples {
            got: 0,
            needed: 1,
            hint: "no nonempty clusters".into(),
        });
    }
    Ok(ne)
}

/// `E[exp(-sum_t f(u^{-1} X(t))) | M_X(block) > u]` over nonempty clusters.
pub fn empirical_cluster_laplace(clusters: &[ClusterProcess], f: &PointFunction) -> Result<Estimate> {
    f.validate()?;
    Ok(nonempty_only(clusters)?
        .iter()
        .map(|c| c.laplace(f))
        .collect::<MeanVar>()
        .estimate())
}

/// Hard-core version: the first exceedance is free and any further atom
/// above 1 kills the cluster, i.e. `P(exactly one exceedance | at least one)`.
pub fn empirical_cluster_hard_core(clusters: &[ClusterProcess]) -> Result<Estimate> {
    Ok(nonempty_only(clusters)?
        .iter()
        .map(|c| if c.exceedances() == 1 { 1.0 } else { 0.0 })
        .collect::<MeanVar>()
        .estimate())
}

/// Limit Laplace functional with its truncation diagnostic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaplaceEstimate {
    pub estimate: Estimate,
    /// The normalizing half-space index that was used.
    pub theta_half: f64,
    /// Mean of `sum ||Theta(t)||^alpha` over lags beyond half the window.
    pub boundary_mass: f64,
    pub warning: Option<String>,
}

#[derive(Clone, Copy)]
enum Move {
    // crossing below v: B += h
    Jump(f64),
    // crossing below v: A += da, B += db, ramps += dn
    Slope(f64, f64, i32),
}

/// `int_0^{vmax} exp(-sum_t f(v^{-1/alpha} theta_t)) dv`.
fn term_integral(thetas: &[f64], f: &PointFunction, alpha: f64, vmax: f64, gl: &GaussLegendre) -> f64 {
    if vmax <= 0.0 {
        return 0.0;
    }
    let mut events: Vec<(f64, Move)> = Vec::new();
    for &th in thetas.iter().filter(|&&t| t > 0.0) {
        match *f {
            PointFunction::Zero => {}
            PointFunction::Step { level, height } => events.push(((th / level).powf(alpha), Move::Jump(height))),
            PointFunction::Ramp { start, width, height } => {
                let k = height / width;
                events.push(((th / start).powf(alpha), Move::Slope(k * th, -k * start, 1)));
                events.push(((th / (start + width)).powf(alpha), Move::Slope(-k * th, k * start + height, -1)));
            }
        }
    }
    events.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (mut a, mut b, mut ramps) = (0.0f64, 0.0f64, 0i32);
    let apply = |m: Move, a: &mut f64, b: &mut f64, ramps: &mut i32| match m {
        Move::Jump(h) => *b += h,
        Move::Slope(da, db, dn) => {
            *a += da;
            *b += db;
            *ramps += dn;
        }
    };
    let mut i = 0;
    while i < events.len() && events[i].0 >= vmax {
        apply(events[i].1, &mut a, &mut b, &mut ramps);
        i += 1;
    }
    let inv = -1.0 / alpha;
    let mut total = 0.0;
    let mut hi = vmax;
    loop {
        let lo = if i < events.len() { events[i].0 } else { 0.0 };
        if hi > lo {
            total += if ramps == 0 {
                (hi - lo) * (-b).exp()
            } else {
                let (aa, bb) = (a, b);
                gl.integrate(lo, hi, |v| (-(aa * v.powf(inv) + bb)).exp())
            };
        }
        if i >= events.len() {
            break;
        }
        // apply every event at this breakpoint
        let v = events[i].0;
        while i < events.len() && events[i].0 == v {
            apply(events[i].1, &mut a, &mut b, &mut ramps);
            i += 1;
        }
        if ramps == 0 {
            a = 0.0;
        }
        hi = v;
    }
    total
}

/// `Psi_C(f) = theta_half^{-1} int_0^inf E[e^{-sum_{t⪰0} f(yTheta(t))} 1(y max_{t⪰0}||Theta(t)|| > 1)
/// - e^{-sum_{t≻0} f(yTheta(t))} 1(y max_{t≻0}||Theta(t)|| > 1)] d(-y^{-alpha})`.
///
/// With `v = y^{-alpha}` each bracketed term is an integral over
/// `(0, max ||Theta||^alpha)`; the exponent is piecewise of the form
/// `A y + B` between breakpoints of `f`, and each piece is integrated with
/// `quad_points`-node Gauss–Legendre. When `theta_half` is `None` the mean
/// of `max_{t⪰0}||Theta||^alpha - max_{t≻0}||Theta||^alpha` is used, the
/// value of the integral at `f = 0`, so that `Psi_C(0) = 1`.
pub fn limit_cluster_laplace_mc(
    spectral: &[SpectralFieldSample],
    f: &PointFunction,
    alpha: f64,
    order: &InvariantOrder,
    theta_half: Option<f64>,
    quad_points: usize,
) -> Result<LaplaceEstimate> {
    f.validate()?;
    let Some(first) = spectral.first() else {
        return Err(Error::InsufficientSamples {
            got: 0,
            needed: 2,
            hint: "no spectral samples".into(),
        });
    };
    let lags = &first.lags;
    if order.dim() != lags.dim() {
        return Err(Error::DimensionMismatch {
            expected: lags.dim(),
            got: order.dim(),
        });
    }
    let gl = GaussLegendre::new(
        NonZeroUsize::new(quad_points).ok_or_else(|| Error::InvalidParameter("quad_points must be >= 1".into()))?,
    );
    let pts: Vec<LatticePoint> = lags.points().collect();
    let side: Vec<Ordering> = pts.iter().map(|t| order.cmp_zero(&t.0)).collect();
    let half_radius = lags
        .lo()
        .0
        .iter()
        .zip(&lags.hi().0)
        .map(|(a, b)| (-a).min(*b))
        .min()
        .unwrap_or(0)
        / 2;
    let mut ints = Vec::with_capacity(spectral.len());
    let mut dens = Vec::with_capacity(spectral.len());
    let mut boundary = MeanVar::new();
    for s in spectral {
        if &s.lags != lags {
            return invalid("spectral samples have different lag windows");
        }
        let norms = s.norms();
        let zero: Vec<f64> = norms
            .iter()
            .zip(&side)
            .filter(|(_, o)| **o != Ordering::Less)
            .map(|(r, _)| *r)
            .collect();
        let plus: Vec<f64> = norms
            .iter()
            .zip(&side)
            .filter(|(_, o)| **o == Ordering::Greater)
            .map(|(r, _)| *r)
            .collect();
        let m0 = zero.iter().cloned().fold(0.0, f64::max).powf(alpha);
        let mp = plus.iter().cloned().fold(0.0, f64::max).powf(alpha);
        let t0 = term_integral(&zero, f, alpha, m0, &gl);
        let tp = term_integral(&plus, f, alpha, mp, &gl);
        ints.push(t0 - tp);
        dens.push(m0 - mp);
        boundary.push(
            norms
                .iter()
                .zip(&pts)
                .filter(|(_, t)| t.sup_norm() > half_radius)
                .map(|(r, _)| r.powf(alpha))
                .sum(),
        );
    }
    let n = ints.len() as f64;
    let num: MeanVar = ints.iter().cloned().collect();
    let den: MeanVar = dens.iter().cloned().collect();
    let (estimate, th) = match theta_half {
        Some(th) => {
            if !(th > 0.0 && th <= 1.0) {
                return invalid(format!("theta_half must lie in (0,1], got {th}"));
            }
            (Estimate::new(num.mean() / th, num.se() / th), th)
        }
        None => {
            let th = den.mean();
            if !(th > 0.0) {
                return Err(Error::Statistical("half-space index estimated as 0".into()));
            }
            let psi = num.mean() / th;
            let resid: MeanVar = ints.iter().zip(&dens).map(|(i, d)| i - psi * d).collect();
            let se = (resid.variance() / n).sqrt() / th;
            (Estimate::new(psi, se), th)
        }
    };
    let bm = boundary.mean();
    let warning = (bm > 0.01).then(|| format!("spectral mass {bm:.3} beyond half the lag window; enlarge the lags"));
    Ok(LaplaceEstimate {
        estimate,
        theta_half: th,
        boundary_mass: bm,
        warning,
    })
}

/// One row of the anti-clustering profile.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnticlusterRow {
    pub m: i64,
    pub probability: Estimate,
}

/// `P(M_X(R_r \ R_M) > u | ||X(0)|| > u)` for each `M`, with
/// `R_n = [-n+1 : n-1]^k` and `u = u_n(tau)`. Every replicate is a field
/// drawn given the exceedance at the origin.
pub fn check_anticluster(
    spec: &ModelSpec,
    r: &LatticePoint,
    tau: f64,
    m_list: &[i64],
    n_replicates: usize,
    n: &LatticePoint,
    stream: &RngStream,
) -> Result<Vec<AnticlusterRow>> {
    r.check_dim(n.dim())?;
    if m_list.is_empty() || m_list[0] < 1 || m_list.windows(2).any(|w| w[0] >= w[1]) {
        return invalid("M list must be positive and increasing");
    }
    let rmin = *r.0.iter().min().unwrap();
    if *m_list.last().unwrap() >= rmin {
        return invalid(format!("largest M must be below min r = {rmin}"));
    }
    if n_replicates < 10 {
        return Err(Error::InsufficientSamples {
            got: n_replicates,
            needed: 10,
            hint: "increase n_replicates".into(),
        });
    }
    let u = level_u(spec, n, tau)?;
    let lo = LatticePoint(r.0.iter().map(|c| -c + 1).collect());
    let hi = LatticePoint(r.0.iter().map(|c| c - 1).collect());
    let window = Window::new(lo, hi)?;
    let sampler = FieldSampler::new(spec, &window, &SamplerOptions::default(), &stream.labeled("pilot"))?;
    let site = sampler.site_of(&LatticePoint::zero(n.dim()))?;
    let shell: Vec<i64> = window.points().map(|t| t.sup_norm()).collect();
    // farthest exceedance distance, 0 when there is none besides the origin
    let reach = par_try_map(n_replicates, stream, |_, rng| {
        let x = sampler.sample_given_exceedance(site, u, u, rng)?;
        Ok(x.iter()
            .zip(&shell)
            .filter(|(v, _)| v.abs() > u)
            .map(|(_, s)| *s)
            .max()
            .unwrap_or(0))
    })?;
    Ok(m_list
        .iter()
        .map(|&m| AnticlusterRow {
            m,
            probability: reach
                .iter()
                .map(|&d| if d >= m { 1.0 } else { 0.0 })
                .collect::<MeanVar>()
                .estimate(),
        })
        .collect())
}
