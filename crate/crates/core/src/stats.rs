//! Small statistical utilities: normal CDF, streaming moments, Kolmogorov–
//! Smirnov statistics and order-statistic sampling.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{invalid, Result};

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// A Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    pub fn new(value: f64, se: f64) -> Self {
        Estimate { value, se }
    }

    pub fn exact(value: f64) -> Self {
        Estimate { value, se: 0.0 }
    }

    /// `|self - other|` in units of the combined standard error.
    pub fn z_distance(&self, other: &Estimate) -> f64 {
        let s = (self.se * self.se + other.se * other.se).sqrt();
        let d = (self.value - other.value).abs();
        if s == 0.0 {
            if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            d / s
        }
    }

    pub fn within(&self, target: f64, n_sigma: f64) -> bool {
        (self.value - target).abs() <= n_sigma * self.se
    }
}

/// Streaming mean and variance (Welford), mergeable.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MeanVar {
    n: u64,
    mean: f64,
    m2: f64,
}

impl MeanVar {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &MeanVar) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn se(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }

    pub fn estimate(&self) -> Estimate {
        Estimate::new(self.mean(), self.se())
    }
}

impl FromIterator<f64> for MeanVar {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = MeanVar::new();
        for x in iter {
            m.push(x);
        }
        m
    }
}

/// Binomial proportion with its standard error.
pub fn proportion(successes: usize, n: usize) -> Estimate {
    if n == 0 {
        return Estimate::new(f64::NAN, f64::NAN);
    }
    let p = successes as f64 / n as f64;
    Estimate::new(p, (p * (1.0 - p) / n as f64).sqrt())
}

/// `sup_x |F_n(x) - F(x)|` for a continuous reference CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(|p, q| p.total_cmp(q));
    xb.sort_by(|p, q| p.total_cmp(q));
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic p-value of a KS statistic `d` with effective size `n`,
/// using the Kolmogorov series with Stephens' small-sample correction.
pub fn ks_pvalue(d: f64, n: f64) -> f64 {
    if d <= 0.0 {
        return 1.0;
    }
    let sn = n.sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * lambda * lambda).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample KS test; returns `(statistic, p-value)`.
pub fn ks_two_sample_test(a: &[f64], b: &[f64]) -> (f64, f64) {
    let d = ks_two_sample(a, b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    (d, ks_pvalue(d, na * nb / (na + nb)))
}

/// Upper-tail probability `1 - U_(m)` of the `m`-th smallest of `n` iid
/// uniforms; distributed as Beta(n - m + 1, m).
pub fn upper_order_tail<R: Rng + ?Sized>(n: u64, m: u64, rng: &mut R) -> Result<f64> {
    if m == 0 || m > n {
        return invalid(format!("order statistic index {m} outside 1..={n}"));
    }
    let a = Gamma::new((n - m + 1) as f64, 1.0).map_err(|e| crate::Error::InvalidParameter(e.to_string()))?;
    let b = Gamma::new(m as f64, 1.0).map_err(|e| crate::Error::InvalidParameter(e.to_string()))?;
    let ga = a.sample(rng);
    let gb = b.sample(rng);
    Ok(ga / (ga + gb))
}

/// Simpson's rule on `[a, b]` with `n` (even) panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = if n % 2 == 1 { n + 1 } else { n.max(2) };
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        s += if i % 2 == 1 { 4.0 * f(x) } else { 2.0 * f(x) };
    }
    s * h / 3.0
}
