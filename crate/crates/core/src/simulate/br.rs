//! Brown–Resnick fields `X(t) = max_i U_i exp{W_i(t) - sigma^2(t)/2}` with
//! `U_i = 1 / Gamma_i`.
//!
//! The law of `X` only depends on the variogram, so the driving field may be
//! re-anchored at any site `s`: `V_s(t) = exp{W(t) - W(s) - gamma(t-s)/2}`.
//! Anchoring at the conditioning site makes `X(s) = U_1` exactly, which
//! gives exact conditional draws of the leading term.
//!
//! The infinite maximum is truncated once `U_{i+1} Q < min_t max(run(t),
//! floor)`, where `Q` is the pilot `(1 - accuracy)`-quantile of
//! `max_t V_s(t)` over the window.

use std::sync::OnceLock;

use rand::Rng;
use rand::distr::Open01;
use rand_distr::Exp1;

use super::SamplerOptions;
use crate::error::{invalid, Error, Result};
use crate::gaussian::{CholeskyFactor, TwoSidedFbm};
use crate::lattice::Window;
use crate::model::VariogramSpec;
use crate::rng::RngStream;

/// Exact sampler of the driving Gaussian field on a window.
#[derive(Clone, Debug)]
pub enum GaussianWindowSampler {
    /// Sum of independent two-sided fBm paths, one per axis.
    Additive {
        axes: Vec<TwoSidedFbm>,
        // per window point and axis: offset into that axis' path
        index: Vec<u32>,
        k: usize,
    },
    /// Cholesky factor of the covariance over all window points.
    Dense(CholeskyFactor),
}

impl GaussianWindowSampler {
    pub fn new(variogram: &VariogramSpec, window: &Window) -> Result<Self> {
        variogram.validate()?;
        match variogram {
            VariogramSpec::AdditiveFBM { hurst } => {
                let k = window.dim();
                if hurst.len() != k {
                    return Err(Error::DimensionMismatch {
                        expected: hurst.len(),
                        got: k,
                    });
                }
                let (lo, hi) = (window.lo().coords(), window.hi().coords());
                let axes: Vec<TwoSidedFbm> = (0..k)
                    .map(|l| TwoSidedFbm::new(hurst[l], lo[l].min(0), hi[l].max(0)))
                    .collect::<Result<_>>()?;
                let mut index = Vec::with_capacity(window.len() * k);
                for t in window.points() {
                    for l in 0..k {
                        index.push((t.0[l] - axes[l].lo()) as u32);
                    }
                }
                Ok(GaussianWindowSampler::Additive { axes, index, k })
            }
            _ => {
                let pts: Vec<Vec<i64>> = window.points().map(|t| t.0).collect();
                let n = pts.len();
                if n > 6000 {
                    return invalid(format!(
                        "dense Gaussian sampling limited to 6000 points, window has {n}"
                    ));
                }
                let mut cov = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..=i {
                        let c = variogram.covariance(&pts[i], &pts[j]);
                        cov[i * n + j] = c;
                        cov[j * n + i] = c;
                    }
                }
                Ok(GaussianWindowSampler::Dense(CholeskyFactor::new(&cov, n)?))
            }
        }
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        match self {
            GaussianWindowSampler::Additive { axes, index, k } => {
                let paths: Vec<Vec<f64>> = axes.iter().map(|a| a.sample(rng)).collect();
                out.clear();
                out.extend(index.chunks_exact(*k).map(|ix| {
                    ix.iter()
                        .zip(&paths)
                        .map(|(&i, p)| p[i as usize])
                        .sum::<f64>()
                }));
            }
            GaussianWindowSampler::Dense(c) => {
                out.clear();
                out.extend(c.sample(rng));
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut v = Vec::new();
        self.sample_into(rng, &mut v);
        v
    }
}

#[derive(Debug)]
struct SiteCache {
    half_gamma: Vec<f64>,
    q: f64,
}

/// Approximate Brown–Resnick sampler prepared for one window.
#[derive(Debug)]
pub struct BrownResnickSampler {
    variogram: VariogramSpec,
    window: Window,
    gauss: GaussianWindowSampler,
    accuracy: f64,
    max_terms: usize,
    pilot: RngStream,
    pilot_n: usize,
    anchor: usize,
    sites: Vec<OnceLock<SiteCache>>,
}

impl BrownResnickSampler {
    pub fn new(variogram: &VariogramSpec, window: &Window, opts: &SamplerOptions, pilot: &RngStream) -> Result<Self> {
        if !(opts.br_accuracy > 0.0 && opts.br_accuracy < 1.0) {
            return invalid(format!("accuracy must lie in (0,1), got {}", opts.br_accuracy));
        }
        let gauss = GaussianWindowSampler::new(variogram, window)?;
        let pilot_n = ((10.0 / opts.br_accuracy).ceil() as usize).clamp(1000, 20_000);
        let anchor = window.index_of(&window.center()).expect("center inside window");
        Ok(BrownResnickSampler {
            variogram: variogram.clone(),
            window: window.clone(),
            gauss,
            accuracy: opts.br_accuracy,
            max_terms: opts.br_max_terms,
            pilot: pilot.clone(),
            pilot_n,
            anchor,
            sites: (0..window.len()).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn accuracy(&self) -> f64 {
        self.accuracy
    }

    fn site(&self, s: usize) -> &SiteCache {
        self.sites[s].get_or_init(|| {
            let sp = self.window.point_at(s);
            let half_gamma: Vec<f64> = self
                .window
                .points()
                .map(|t| {
                    let d: Vec<i64> = t.0.iter().zip(&sp.0).map(|(a, b)| a - b).collect();
                    0.5 * self.variogram.gamma(&d)
                })
                .collect();
            let mut rng = self.pilot.child(s as u64).rng();
            let mut w = Vec::new();
            let mut maxima: Vec<f64> = (0..self.pilot_n)
                .map(|_| {
                    self.gauss.sample_into(&mut rng, &mut w);
                    let ws = w[s];
                    w.iter()
                        .zip(&half_gamma)
                        .map(|(x, h)| x - ws - h)
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect();
            maxima.sort_by(|a, b| a.total_cmp(b));
            let idx = (((1.0 - self.accuracy) * self.pilot_n as f64).ceil() as usize)
                .clamp(1, self.pilot_n)
                - 1;
            SiteCache {
                half_gamma,
                q: maxima[idx].exp(),
            }
        })
    }

    /// Pilot quantile `Q` used for anchor `site`.
    pub fn surrogate_quantile(&self, site: usize) -> f64 {
        self.site(site).q
    }

    fn run<R: Rng + ?Sized>(&self, site: usize, mut gamma: f64, floor: f64, rng: &mut R) -> Result<Vec<f64>> {
        let cache = self.site(site);
        let n = self.window.len();
        let mut run = vec![0.0f64; n];
        let mut w = Vec::with_capacity(n);
        let mut terms = 0usize;
        loop {
            let u = 1.0 / gamma;
            if terms > 0 {
                let lower = run.iter().fold(f64::INFINITY, |m, &r| m.min(r.max(floor)));
                if u * cache.q < lower {
                    break;
                }
            }
            if terms >= self.max_terms {
                return Err(Error::Accuracy(format!(
                    "Brown-Resnick truncation did not stop after {} terms",
                    self.max_terms
                )));
            }
            self.gauss.sample_into(rng, &mut w);
            let ws = w[site];
            for ((r, x), h) in run.iter_mut().zip(&w).zip(&cache.half_gamma) {
                let v = u * (x - ws - h).exp();
                if v > *r {
                    *r = v;
                }
            }
            terms += 1;
            let e: f64 = rng.sample(Exp1);
            gamma += e;
        }
        Ok(run)
    }

    /// Unconditional draw. Values not below `floor` are exact up to the
    /// truncation event; values below it may be underestimated but stay
    /// below `floor`. `floor = 0` asks for every value.
    pub fn sample<R: Rng + ?Sized>(&self, floor: f64, rng: &mut R) -> Result<Vec<f64>> {
        let g: f64 = rng.sample(Exp1);
        self.run(self.anchor, g, floor, rng)
    }

    /// Draw given `X(site) > u`: anchored at `site`, `X(site) = 1/Gamma_1`,
    /// so `Gamma_1` is drawn from the exponential law restricted to
    /// `[0, 1/u)`.
    pub fn sample_given_exceedance<R: Rng + ?Sized>(
        &self,
        site: usize,
        u: f64,
        floor: f64,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let v: f64 = rng.sample(Open01);
        let p = -(-1.0 / u).exp_m1();
        let g = -(-v * p).ln_1p();
        self.run(site, g, floor, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticePoint;
    use crate::model::CustomVariogram;
    use crate::rng::par_map;
    use crate::stats::ks_statistic;
    use std::sync::Arc;

    #[test]
    fn degenerate_variogram_gives_constant_field() {
        let v = VariogramSpec::Custom(CustomVariogram {
            name: "zero".into(),
            gamma: Arc::new(|_| 0.0),
            sigma2: Arc::new(|_| 0.0),
        });
        let w = Window::cube(&LatticePoint(vec![3, 3])).unwrap();
        let s = BrownResnickSampler::new(&v, &w, &SamplerOptions::default(), &RngStream::new(1)).unwrap();
        let x = s.sample(0.0, &mut RngStream::new(2).rng()).unwrap();
        assert!(x.iter().all(|&y| y == x[0]));
    }

    #[test]
    fn frechet_margins_at_corner_site() {
        let v = VariogramSpec::AdditiveFBM { hurst: vec![0.5, 0.5] };
        let w = Window::positive_box(&LatticePoint(vec![3, 3])).unwrap();
        let s = BrownResnickSampler::new(&v, &w, &SamplerOptions::default(), &RngStream::new(1)).unwrap();
        let xs = par_map(20_000, &RngStream::new(3), |_, r| s.sample(0.0, r).unwrap()[0]);
        let ks = ks_statistic(&xs, |x| (-1.0 / x).exp());
        assert!(ks < 0.015, "{ks}");
    }

    #[test]
    fn additive_sampler_covariance() {
        let v = VariogramSpec::AdditiveFBM { hurst: vec![0.3, 0.7] };
        let w = Window::new(LatticePoint(vec![-2, 1]), LatticePoint(vec![2, 3])).unwrap();
        let g = GaussianWindowSampler::new(&v, &w).unwrap();
        let n = 50_000;
        let draws = par_map(n, &RngStream::new(4), |_, r| g.sample(r));
        let a = w.index_of(&LatticePoint(vec![-2, 3])).unwrap();
        let b = w.index_of(&LatticePoint(vec![1, 1])).unwrap();
        let prods: crate::stats::MeanVar = draws.iter().map(|x| x[a] * x[b]).collect();
        let target = v.covariance(&[-2, 3], &[1, 1]);
        assert!((prods.mean() - target).abs() < 4.0 * prods.se(), "{} vs {target}", prods.mean());
    }
}
