//! Seedable samplers for every model, unconditional and conditioned on an
//! exceedance at one site.
//!
//! A [`FieldSampler`] is prepared once for a `(model, window)` pair and then
//! drawn from many times; all randomness comes from the generator passed to
//! each call.

mod br;
mod counterexample;

use rand::Rng;
use rand::distr::Open01;

pub use br::{BrownResnickSampler, GaussianWindowSampler};
pub use counterexample::{
    counterexample_block, ln_factorial, partner_given, sample_pair_with, pareto_in_block,
};

use crate::error::{invalid, Error, Result};
use crate::gaussian::HoskingFbm;
use crate::lattice::{FieldSample, LatticePoint, Window};
use crate::model::{ModelSpec, Stencil, VariogramSpec};
use crate::rng::RngStream;

/// Tuning of the approximate Brown–Resnick sampler.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplerOptions {
    /// Quantile level `1 - accuracy` of the pilot surrogate `Q`.
    pub br_accuracy: f64,
    /// Cap on Poisson terms before an accuracy failure is raised.
    pub br_max_terms: usize,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        SamplerOptions {
            br_accuracy: 1e-3,
            br_max_terms: 100_000,
        }
    }
}

/// Standard Fréchet(alpha) draw by inversion.
pub fn frechet<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    let e = -u.ln();
    if alpha == 1.0 {
        1.0 / e
    } else {
        e.powf(-1.0 / alpha)
    }
}

/// Fréchet(alpha) conditioned on exceeding `c`.
fn frechet_above<R: Rng + ?Sized>(alpha: f64, c: f64, rng: &mut R) -> f64 {
    let p = -(-c.powf(-alpha)).exp_m1();
    let v: f64 = rng.sample(Open01);
    let e = -(-v * p).ln_1p();
    if alpha == 1.0 {
        1.0 / e
    } else {
        e.powf(-1.0 / alpha)
    }
}

/// Fréchet(1) conditioned on not exceeding `c`.
fn frechet1_below<R: Rng + ?Sized>(c: f64, rng: &mut R) -> f64 {
    let v: f64 = rng.sample(Open01);
    1.0 / (1.0 / c - v.ln())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return invalid(format!("alpha must be positive, got {alpha}"));
    }
    Ok(())
}

/// iid Fréchet(alpha) field.
pub fn sample_frechet_field(alpha: f64, window: &Window, stream: &RngStream) -> Result<FieldSample> {
    check_alpha(alpha)?;
    let mut rng = stream.rng();
    let values: Vec<f64> = (0..window.len()).map(|_| frechet(alpha, &mut rng)).collect();
    FieldSample::scalar(
        window.clone(),
        values,
        ModelSpec::IIDFrechet { alpha }.tag(),
        stream.seed,
    )
}

/// Max-moving average `X(t) = max_v w_v Z(t+v)` with Fréchet(1) noise.
pub fn sample_mma_field(spec: &ModelSpec, window: &Window, stream: &RngStream) -> Result<FieldSample> {
    let sampler = MmaSampler::new(spec.stencil()?, window)?;
    let values = sampler.sample(&mut stream.rng());
    FieldSample::scalar(window.clone(), values, spec.tag(), stream.seed)
}

/// Exact `(fBm_H(0), ..., fBm_H(n))`.
pub fn sample_fbm_path(hurst: f64, n: usize, stream: &RngStream) -> Result<Vec<f64>> {
    Ok(HoskingFbm::new(hurst, n)?.sample_path(&mut stream.rng()))
}

/// `W(t) = sum_l fBm_{H_l}(t_l)` on the window.
pub fn sample_additive_fbm(hurst: &[f64], window: &Window, stream: &RngStream) -> Result<FieldSample> {
    let v = VariogramSpec::AdditiveFBM { hurst: hurst.to_vec() };
    v.validate()?;
    let g = GaussianWindowSampler::new(&v, window)?;
    let values = g.sample(&mut stream.rng());
    FieldSample::scalar(window.clone(), values, format!("additive-fbm {hurst:?}"), stream.seed)
}

/// Approximate Brown–Resnick field; see [`BrownResnickSampler`].
pub fn sample_brown_resnick(
    variogram: &VariogramSpec,
    window: &Window,
    stream: &RngStream,
    accuracy: f64,
) -> Result<FieldSample> {
    let opts = SamplerOptions {
        br_accuracy: accuracy,
        ..SamplerOptions::default()
    };
    let s = BrownResnickSampler::new(variogram, window, &opts, &stream.labeled("br-pilot"))?;
    let values = s.sample(0.0, &mut stream.rng())?;
    FieldSample::scalar(
        window.clone(),
        values,
        ModelSpec::BrownResnick {
            variogram: variogram.clone(),
        }
        .tag(),
        stream.seed,
    )
}

/// One draw of the factorial-block pair `(Z_1, Z_2)`.
pub fn sample_counterexample_pair(alpha: f64, stream: &RngStream) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    Ok(sample_pair_with(alpha, &mut stream.rng()))
}

/// Independent pairs along anti-diagonals `t_1 + t_2 = c`; the site takes
/// `Z_1` when `t_1` is odd and `Z_2` otherwise.
pub fn sample_counterexample_field(alpha: f64, window: &Window, stream: &RngStream) -> Result<FieldSample> {
    let s = FieldSampler::new(
        &ModelSpec::CounterexampleField { alpha },
        window,
        &SamplerOptions::default(),
        stream,
    )?;
    let values = s.sample(0.0, &mut stream.rng())?;
    FieldSample::scalar(
        window.clone(),
        values,
        ModelSpec::CounterexampleField { alpha }.tag(),
        stream.seed,
    )
}

/// Any model on a window.
pub fn sample_model(
    spec: &ModelSpec,
    window: &Window,
    opts: &SamplerOptions,
    stream: &RngStream,
) -> Result<FieldSample> {
    let s = FieldSampler::new(spec, window, opts, &stream.labeled("pilot"))?;
    let values = s.sample(0.0, &mut stream.rng())?;
    FieldSample::scalar(window.clone(), values, spec.tag(), stream.seed)
}

/// Max-moving-average sampler with precomputed index arithmetic.
#[derive(Clone, Debug)]
pub struct MmaSampler {
    stencil: Stencil,
    ext_len: usize,
    // index into the enlarged noise window of each window point
    base: Vec<usize>,
    // linear index shift of each stencil offset in the enlarged window
    deltas: Vec<isize>,
}

impl MmaSampler {
    pub fn new(stencil: Stencil, window: &Window) -> Result<Self> {
        if stencil.dim() != window.dim() {
            return Err(Error::DimensionMismatch {
                expected: stencil.dim(),
                got: window.dim(),
            });
        }
        let ext = window.enlarged(&stencil.radius())?;
        let shape = ext.shape();
        let mut strides = vec![1isize; shape.len()];
        for l in (0..shape.len().saturating_sub(1)).rev() {
            strides[l] = strides[l + 1] * shape[l + 1] as isize;
        }
        let deltas = stencil
            .offsets()
            .iter()
            .map(|o| o.iter().zip(&strides).map(|(&v, &s)| v as isize * s).sum())
            .collect();
        let base = window
            .points()
            .map(|t| ext.index_of(&t).expect("window inside its enlargement"))
            .collect();
        Ok(MmaSampler {
            stencil,
            ext_len: ext.len(),
            base,
            deltas,
        })
    }

    fn combine(&self, z: &[f64]) -> Vec<f64> {
        let w = self.stencil.weights();
        self.base
            .iter()
            .map(|&b| {
                let mut m = z[b];
                for j in 1..w.len() {
                    let v = w[j] * z[(b as isize + self.deltas[j]) as usize];
                    if v > m {
                        m = v;
                    }
                }
                m
            })
            .collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.ext_len).map(|_| frechet(1.0, rng)).collect();
        self.combine(&z)
    }

    /// Exact draw given `X(site) > u`: the first source (in stencil order)
    /// pushing the site over `u` is chosen with its exact probability,
    /// earlier sources are drawn below their thresholds and the chosen one
    /// above its threshold.
    pub fn sample_given_exceedance<R: Rng + ?Sized>(&self, site: usize, u: f64, rng: &mut R) -> Vec<f64> {
        let mut z: Vec<f64> = (0..self.ext_len).map(|_| frechet(1.0, rng)).collect();
        let w = self.stencil.weights();
        let p: Vec<f64> = w.iter().map(|&wj| -(-wj / u).exp_m1()).collect();
        let mut first = Vec::with_capacity(w.len());
        let mut none_before = 1.0;
        for &pj in &p {
            first.push(none_before * pj);
            none_before *= 1.0 - pj;
        }
        let total: f64 = first.iter().sum();
        let mut x = rng.random::<f64>() * total;
        let mut chosen = first.len() - 1;
        for (j, f) in first.iter().enumerate() {
            if x < *f {
                chosen = j;
                break;
            }
            x -= f;
        }
        let b = self.base[site] as isize;
        for j in 0..=chosen {
            let idx = (b + self.deltas[j]) as usize;
            let c = u / w[j];
            z[idx] = if j < chosen {
                frechet1_below(c, rng)
            } else {
                frechet_above(1.0, c, rng)
            };
        }
        self.combine(&z)
    }

    pub fn mass(&self) -> f64 {
        self.stencil.mass()
    }
}

/// Counterexample field sampler on a planar window.
#[derive(Clone, Debug)]
pub struct CounterexampleSampler {
    alpha: f64,
    window: Window,
    c_lo: i64,
    n_diag: usize,
}

impl CounterexampleSampler {
    pub fn new(alpha: f64, window: &Window) -> Result<Self> {
        check_alpha(alpha)?;
        if window.dim() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                got: window.dim(),
            });
        }
        let (lo, hi) = (window.lo().coords(), window.hi().coords());
        let c_lo = lo[0] + lo[1];
        let n_diag = (hi[0] + hi[1] - c_lo + 1) as usize;
        Ok(CounterexampleSampler {
            alpha,
            window: window.clone(),
            c_lo,
            n_diag,
        })
    }

    fn assemble(&self, pairs: &[(f64, f64)]) -> Vec<f64> {
        self.window
            .points()
            .map(|t| {
                let (t1, t2) = (t.0[0], t.0[1]);
                let pair = pairs[(t1 + t2 - self.c_lo) as usize];
                if t1.rem_euclid(2) == 1 {
                    pair.0
                } else {
                    pair.1
                }
            })
            .collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let pairs: Vec<(f64, f64)> = (0..self.n_diag).map(|_| sample_pair_with(self.alpha, rng)).collect();
        self.assemble(&pairs)
    }

    pub fn sample_given_exceedance<R: Rng + ?Sized>(&self, site: usize, u: f64, rng: &mut R) -> Vec<f64> {
        let mut pairs: Vec<(f64, f64)> =
            (0..self.n_diag).map(|_| sample_pair_with(self.alpha, rng)).collect();
        let s = self.window.point_at(site);
        let c = (s.0[0] + s.0[1] - self.c_lo) as usize;
        let v = if u > 1.0 {
            let e: f64 = rng.sample(Open01);
            u * e.powf(-1.0 / self.alpha)
        } else {
            let e: f64 = rng.sample(Open01);
            e.powf(-1.0 / self.alpha)
        };
        let partner = partner_given(v, self.alpha, rng);
        pairs[c] = if s.0[0].rem_euclid(2) == 1 {
            (v, partner)
        } else {
            (partner, v)
        };
        self.assemble(&pairs)
    }
}

#[derive(Debug)]
enum Kind {
    Iid { alpha: f64, len: usize },
    Mma(MmaSampler),
    BrownResnick(Box<BrownResnickSampler>),
    Counterexample(CounterexampleSampler),
    Mixture(Vec<(f64, FieldSampler)>),
}

/// A model prepared for repeated sampling on a fixed window.
#[derive(Debug)]
pub struct FieldSampler {
    window: Window,
    kind: Kind,
}

impl FieldSampler {
    /// `pilot` seeds the Brown–Resnick pilot runs; other models ignore it.
    pub fn new(spec: &ModelSpec, window: &Window, opts: &SamplerOptions, pilot: &RngStream) -> Result<Self> {
        spec.validate()?;
        if let Some(k) = spec.dim() {
            if k != window.dim() {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    got: window.dim(),
                });
            }
        }
        let kind = match spec {
            ModelSpec::IIDFrechet { alpha } => Kind::Iid {
                alpha: *alpha,
                len: window.len(),
            },
            ModelSpec::MaxMovingAverage { .. } | ModelSpec::GeneralMaxMovingAverage { .. } => {
                Kind::Mma(MmaSampler::new(spec.stencil()?, window)?)
            }
            ModelSpec::BrownResnick { variogram } => {
                Kind::BrownResnick(Box::new(BrownResnickSampler::new(variogram, window, opts, pilot)?))
            }
            ModelSpec::CounterexampleField { alpha } => {
                Kind::Counterexample(CounterexampleSampler::new(*alpha, window)?)
            }
            ModelSpec::Mixture { components } => Kind::Mixture(
                components
                    .iter()
                    .enumerate()
                    .map(|(j, c)| {
                        Ok((
                            c.weight,
                            FieldSampler::new(&c.model, window, opts, &pilot.child(j as u64))?,
                        ))
                    })
                    .collect::<Result<_>>()?,
            ),
        };
        Ok(FieldSampler {
            window: window.clone(),
            kind,
        })
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    /// One field on the window. `floor` only affects Brown–Resnick: values
    /// below it may be truncated (see [`BrownResnickSampler::sample`]).
    pub fn sample<R: Rng + ?Sized>(&self, floor: f64, rng: &mut R) -> Result<Vec<f64>> {
        match &self.kind {
            Kind::Iid { alpha, len } => Ok((0..*len).map(|_| frechet(*alpha, rng)).collect()),
            Kind::Mma(m) => Ok(m.sample(rng)),
            Kind::BrownResnick(b) => b.sample(floor, rng),
            Kind::Counterexample(c) => Ok(c.sample(rng)),
            Kind::Mixture(parts) => {
                let j = pick(parts.iter().map(|p| p.0), rng);
                parts[j].1.sample(floor, rng)
            }
        }
    }

    /// One field drawn from its conditional law given `||X(site)|| > u`,
    /// `site` being a linear index into the window.
    pub fn sample_given_exceedance<R: Rng + ?Sized>(
        &self,
        site: usize,
        u: f64,
        floor: f64,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        if site >= self.window.len() {
            return Err(Error::OutsideWindow(format!("site index {site}")));
        }
        if !(u > 0.0 && u.is_finite()) {
            return invalid(format!("conditioning level must be positive, got {u}"));
        }
        match &self.kind {
            Kind::Iid { alpha, len } => {
                let mut v: Vec<f64> = (0..*len).map(|_| frechet(*alpha, rng)).collect();
                v[site] = frechet_above(*alpha, u, rng);
                Ok(v)
            }
            Kind::Mma(m) => Ok(m.sample_given_exceedance(site, u, rng)),
            Kind::BrownResnick(b) => b.sample_given_exceedance(site, u, floor, rng),
            Kind::Counterexample(c) => Ok(c.sample_given_exceedance(site, u, rng)),
            Kind::Mixture(parts) => {
                let j = pick(parts.iter().map(|p| p.0 * p.1.tail_prob(u)), rng);
                parts[j].1.sample_given_exceedance(site, u, floor, rng)
            }
        }
    }

    /// `P(||X(0)|| > u)`.
    pub fn tail_prob(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 1.0;
        }
        match &self.kind {
            Kind::Iid { alpha, .. } => -(-u.powf(-alpha)).exp_m1(),
            Kind::Mma(m) => -(-m.mass() / u).exp_m1(),
            Kind::BrownResnick(_) => -(-1.0 / u).exp_m1(),
            Kind::Counterexample(c) => {
                if u <= 1.0 {
                    1.0
                } else {
                    u.powf(-c.alpha)
                }
            }
            Kind::Mixture(parts) => parts.iter().map(|(w, s)| w * s.tail_prob(u)).sum(),
        }
    }

    /// The level `x` with `P(||X(0)|| > x) = p`.
    pub fn upper_quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return invalid(format!("tail probability must lie in (0,1), got {p}"));
        }
        Ok(match &self.kind {
            Kind::Iid { alpha, .. } => (-(-p).ln_1p()).powf(-1.0 / alpha),
            Kind::Mma(m) => m.mass() / -(-p).ln_1p(),
            Kind::BrownResnick(_) => 1.0 / -(-p).ln_1p(),
            Kind::Counterexample(c) => p.powf(-1.0 / c.alpha),
            Kind::Mixture(parts) => {
                let qs: Vec<f64> = parts
                    .iter()
                    .filter(|(w, _)| *w > 0.0)
                    .map(|(_, s)| s.upper_quantile(p))
                    .collect::<Result<_>>()?;
                let mut lo = qs.iter().cloned().fold(f64::INFINITY, f64::min).ln();
                let mut hi = qs.iter().cloned().fold(0.0, f64::max).ln();
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if self.tail_prob(mid.exp()) > p {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo < 1e-15 * hi.abs().max(1.0) {
                        break;
                    }
                }
                (0.5 * (lo + hi)).exp()
            }
        })
    }

    /// Linear index of a lattice point of the window.
    pub fn site_of(&self, t: &LatticePoint) -> Result<usize> {
        self.window
            .index_of(t)
            .ok_or_else(|| Error::OutsideWindow(t.to_string()))
    }
}

/// Categorical draw proportional to nonnegative weights.
fn pick<R: Rng + ?Sized, I: Iterator<Item = f64>>(weights: I, rng: &mut R) -> usize {
    let w: Vec<f64> = weights.collect();
    let total: f64 = w.iter().sum();
    let mut x = rng.random::<f64>() * total;
    for (j, wj) in w.iter().enumerate() {
        if x < *wj {
            return j;
        }
        x -= wj;
    }
    w.iter().rposition(|&v| v > 0.0).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::par_map;
    use crate::stats::{ks_statistic, proportion, MeanVar};

    fn mma_default() -> ModelSpec {
        ModelSpec::preset("mma-default").unwrap()
    }

    #[test]
    fn frechet_field_deterministic_and_cdf() {
        let w = Window::positive_box(&LatticePoint(vec![10, 10])).unwrap();
        let s = RngStream::new(1);
        assert_eq!(
            sample_frechet_field(1.0, &w, &s).unwrap(),
            sample_frechet_field(1.0, &w, &s).unwrap()
        );
        assert!(sample_frechet_field(0.0, &w, &s).is_err());
        let big = Window::positive_box(&LatticePoint(vec![1000, 1000])).unwrap();
        let f = sample_frechet_field(1.0, &big, &s).unwrap();
        let below = f.values.iter().filter(|&&z| z <= 1.0).count();
        let p = proportion(below, f.values.len());
        assert!((p.value - (-1f64).exp()).abs() < 0.002, "{}", p.value);
        let above = f.values.iter().filter(|&&z| z > 100.0).count();
        let q = proportion(above, f.values.len());
        let exact = -(-0.01f64).exp_m1();
        assert!((q.value - exact).abs() < 4.0 * q.se, "{} vs {exact}", q.value);
    }

    #[test]
    fn mma_zero_weights_is_noise() {
        let spec = ModelSpec::mma([0.0; 4]).unwrap();
        let w = Window::positive_box(&LatticePoint(vec![6, 7])).unwrap();
        let s = RngStream::new(2);
        let x = sample_mma_field(&spec, &w, &s).unwrap();
        // the noise window equals the field window for an empty stencil
        let z = sample_frechet_field(1.0, &w, &s).unwrap();
        assert_eq!(x.values, z.values);
    }

    #[test]
    fn mma_marginal_matches_power_law() {
        let spec = mma_default();
        let w = Window::positive_box(&LatticePoint(vec![1, 1])).unwrap();
        let sampler = FieldSampler::new(&spec, &w, &SamplerOptions::default(), &RngStream::new(0)).unwrap();
        let n = 200_000;
        let xs = par_map(n, &RngStream::new(3), |_, r| sampler.sample(0.0, r).unwrap()[0]);
        let p = proportion(xs.iter().filter(|&&x| x <= 10.0).count(), n);
        let target = (-0.1f64).exp().powf(2.5);
        assert!((p.value - target).abs() < 0.003, "{} vs {target}", p.value);
    }

    #[test]
    fn mma_direct_definition() {
        let spec = mma_default();
        let w = Window::new(LatticePoint(vec![-2, 3]), LatticePoint(vec![1, 5])).unwrap();
        let m = MmaSampler::new(spec.stencil().unwrap(), &w).unwrap();
        let s = RngStream::new(4);
        let ext = w.enlarged(&[1, 1]).unwrap();
        let z: Vec<f64> = {
            let mut r = s.rng();
            (0..ext.len()).map(|_| frechet(1.0, &mut r)).collect()
        };
        let x = m.sample(&mut s.rng());
        let st = spec.stencil().unwrap();
        for (i, t) in w.points().enumerate() {
            let mut best = 0.0f64;
            for (o, wt) in st.offsets().iter().zip(st.weights()) {
                let q = LatticePoint(t.0.iter().zip(o).map(|(a, b)| a + b).collect());
                best = best.max(wt * z[ext.index_of(&q).unwrap()]);
            }
            assert_eq!(x[i], best);
        }
    }

    #[test]
    fn conditional_mma_matches_rejection() {
        // compare the law of X(t) given X(0) > u from the exact sampler with
        // plain rejection sampling at a moderate level
        let spec = mma_default();
        let w = Window::cube(&LatticePoint(vec![2, 2])).unwrap();
        let sampler = FieldSampler::new(&spec, &w, &SamplerOptions::default(), &RngStream::new(0)).unwrap();
        let site = sampler.site_of(&LatticePoint(vec![0, 0])).unwrap();
        let probe = sampler.site_of(&LatticePoint(vec![1, 1])).unwrap();
        let u = 5.0;
        let exact = par_map(20_000, &RngStream::new(5), |_, r| {
            let x = sampler.sample_given_exceedance(site, u, 0.0, r).unwrap();
            assert!(x[site] > u);
            x[probe] / u
        });
        let mut rejected = Vec::new();
        let mut r = RngStream::new(6).rng();
        while rejected.len() < 20_000 {
            let x = sampler.sample(0.0, &mut r).unwrap();
            if x[site] > u {
                rejected.push(x[probe] / u);
            }
        }
        let (d, p) = crate::stats::ks_two_sample_test(&exact, &rejected);
        assert!(p > 0.001, "KS {d} p {p}");
    }

    #[test]
    fn counterexample_pair_marginal_and_diagonal() {
        let n = 100_000;
        let pairs = par_map(n, &RngStream::new(7), |_, r| sample_pair_with(1.0, r));
        let p = proportion(pairs.iter().filter(|p| p.0 > 2.0).count(), n);
        assert!((p.value - 0.5).abs() < 0.005);
        assert!(pairs.iter().filter(|p| p.0 < 2.0).all(|p| p.0 == p.1));
        let z1: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
        let ks = ks_statistic(&z1, |x| 1.0 - (-x).exp());
        assert!(ks < 0.01, "{ks}");
    }

    #[test]
    fn counterexample_field_layout() {
        let w = Window::cube(&LatticePoint(vec![3, 3])).unwrap();
        let f = sample_counterexample_field(1.0, &w, &RngStream::new(8)).unwrap();
        assert!(f.values.iter().all(|&v| v >= 1.0));
        let s = CounterexampleSampler::new(1.0, &w).unwrap();
        let x = s.sample(&mut RngStream::new(8).rng());
        assert_eq!(x, f.values);
    }

    #[test]
    fn conditional_tail_and_quantile_consistent() {
        let w = Window::positive_box(&LatticePoint(vec![2, 2])).unwrap();
        for name in ["iid", "mma-default", "mma-mixture", "counterexample", "br-fbm"] {
            let spec = ModelSpec::preset(name).unwrap();
            let s = FieldSampler::new(&spec, &w, &SamplerOptions::default(), &RngStream::new(1)).unwrap();
            for p in [1e-3, 0.2, 1e-9] {
                let x = s.upper_quantile(p).unwrap();
                assert!((s.tail_prob(x) / p - 1.0).abs() < 1e-9, "{name} {p}");
            }
        }
    }

    #[test]
    fn conditional_root_is_pareto() {
        let w = Window::positive_box(&LatticePoint(vec![2, 2])).unwrap();
        for name in ["iid", "mma-default", "mma-mixture", "counterexample", "br-stationary"] {
            let spec = ModelSpec::preset(name).unwrap();
            let s = FieldSampler::new(&spec, &w, &SamplerOptions::default(), &RngStream::new(1)).unwrap();
            let u = 1e6;
            let ys = par_map(5000, &RngStream::new(9), |_, r| {
                s.sample_given_exceedance(3, u, 0.25 * u, r).unwrap()[3] / u
            });
            let ks = ks_statistic(&ys, |y| 1.0 - 1.0 / y);
            assert!(ks < 0.025, "{name}: {ks}");
        }
    }

    #[test]
    fn fbm_wrappers() {
        let p = sample_fbm_path(0.5, 10, &RngStream::new(1)).unwrap();
        assert_eq!(p.len(), 11);
        assert_eq!(p[0], 0.0);
        assert!(sample_fbm_path(1.2, 10, &RngStream::new(1)).is_err());
        let w = Window::new(LatticePoint(vec![0, 0]), LatticePoint(vec![3, 4])).unwrap();
        let n = 40_000;
        let v: MeanVar = par_map(n, &RngStream::new(2), |i, _| {
            let f = sample_additive_fbm(&[0.5, 0.5], &w, &RngStream::new(2).child(i as u64)).unwrap();
            let x = f.values[w.index_of(&LatticePoint(vec![3, 4])).unwrap()];
            x * x
        })
        .into_iter()
        .collect();
        assert!((v.mean() / 7.0 - 1.0).abs() < 0.03, "{}", v.mean());
    }
}
