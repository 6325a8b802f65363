//! Exact Gaussian samplers: Cholesky factors of arbitrary covariance
//! matrices, Hosking's recursion for fractional Gaussian noise, and a
//! two-sided fractional Brownian motion whose restriction to `[-m, m]` is
//! consistent across window sizes.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};

/// Lower-triangular factor `L` with `L L^T = C` for a positive semidefinite
/// `C`. Columns with a (numerically) zero pivot are set to zero.
#[derive(Clone, Debug)]
pub struct CholeskyFactor {
    n: usize,
    // packed rows: row i holds L[i][0..=i]
    rows: Vec<f64>,
}

fn row_start(i: usize) -> usize {
    i * (i + 1) / 2
}

impl CholeskyFactor {
    /// `cov` is the full row-major `n × n` matrix.
    pub fn new(cov: &[f64], n: usize) -> Result<Self> {
        if cov.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: cov.len(),
            });
        }
        let scale = (0..n).map(|i| cov[i * n + i].abs()).fold(0.0, f64::max).max(1e-300);
        let tol = 1e-11 * scale;
        let mut rows = vec![0.0; row_start(n)];
        for i in 0..n {
            for j in 0..=i {
                let mut s = cov[i * n + j];
                let (ri, rj) = (row_start(i), row_start(j));
                for p in 0..j {
                    s -= rows[ri + p] * rows[rj + p];
                }
                if i == j {
                    if s < -1e-8 * scale {
                        return invalid(format!(
                            "covariance matrix is not positive semidefinite (pivot {s:.3e} at {i})"
                        ));
                    }
                    rows[ri + i] = if s <= tol { 0.0 } else { s.sqrt() };
                } else {
                    let d = rows[rj + j];
                    rows[ri + j] = if d == 0.0 { 0.0 } else { s / d };
                }
            }
        }
        Ok(CholeskyFactor { n, rows })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Writes `L z` for fresh standard normals `z` into `out`. Entry `i` only
    /// depends on the first `i + 1` normals drawn.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, z: &mut Vec<f64>, out: &mut [f64]) {
        z.clear();
        z.extend((0..self.n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        for (i, o) in out.iter_mut().enumerate().take(self.n) {
            let r = &self.rows[row_start(i)..row_start(i) + i + 1];
            *o = r.iter().zip(z.iter()).map(|(a, b)| a * b).sum();
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        let mut z = Vec::with_capacity(self.n);
        self.sample_into(rng, &mut z, &mut out);
        out
    }
}

fn check_hurst(h: f64) -> Result<()> {
    if !(h > 0.0 && h < 1.0) {
        return invalid(format!("Hurst parameter must lie in (0,1), got {h}"));
    }
    Ok(())
}

/// Autocovariance of unit-variance fractional Gaussian noise at lag `k`.
pub fn fgn_autocovariance(h: f64, k: usize) -> f64 {
    let k = k as f64;
    let e = 2.0 * h;
    0.5 * ((k + 1.0).powf(e) - 2.0 * k.powf(e) + (k - 1.0).abs().powf(e))
}

/// `Cov(B_H(s), B_H(t)) = (|s|^{2H} + |t|^{2H} - |s-t|^{2H}) / 2`.
pub fn fbm_covariance(h: f64, s: f64, t: f64) -> f64 {
    let e = 2.0 * h;
    0.5 * (s.abs().powf(e) + t.abs().powf(e) - (s - t).abs().powf(e))
}

/// Hosking (Durbin–Levinson) generator of fractional Gaussian noise; the
/// prediction coefficients are computed once and reused for every path.
#[derive(Clone, Debug)]
pub struct HoskingFbm {
    hurst: f64,
    n: usize,
    // phi[j] holds the order-j prediction coefficients phi_{j,1..=j}
    phi: Vec<Vec<f64>>,
    sd: Vec<f64>,
}

impl HoskingFbm {
    pub fn new(hurst: f64, n: usize) -> Result<Self> {
        check_hurst(hurst)?;
        if n == 0 {
            return invalid("fBm path length must be >= 1");
        }
        let rho: Vec<f64> = (0..=n).map(|k| fgn_autocovariance(hurst, k)).collect();
        let mut phi: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut sd = Vec::with_capacity(n);
        let mut v = 1.0;
        phi.push(Vec::new());
        sd.push(1.0);
        for j in 1..n {
            let prev = &phi[j - 1];
            let num = rho[j] - (1..j).map(|i| prev[i - 1] * rho[j - i]).sum::<f64>();
            let kappa = num / v;
            let mut cur = Vec::with_capacity(j);
            for i in 1..j {
                cur.push(prev[i - 1] - kappa * prev[j - i - 1]);
            }
            cur.push(kappa);
            v *= 1.0 - kappa * kappa;
            sd.push(v.max(0.0).sqrt());
            phi.push(cur);
        }
        Ok(HoskingFbm { hurst, n, phi, sd })
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    /// `n` increments of fractional Gaussian noise.
    pub fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.n);
        for j in 0..self.n {
            let pred: f64 = self.phi[j]
                .iter()
                .enumerate()
                .map(|(i, c)| c * x[j - 1 - i])
                .sum();
            let z: f64 = rng.sample(StandardNormal);
            x.push(pred + self.sd[j] * z);
        }
        x
    }

    /// `(B(0), ..., B(n))` with `B(0) = 0`.
    pub fn sample_path<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let noise = self.sample_noise(rng);
        let mut path = Vec::with_capacity(self.n + 1);
        path.push(0.0);
        let mut acc = 0.0;
        for e in noise {
            acc += e;
            path.push(acc);
        }
        path
    }
}

/// Exact sample of `(fBm_H(0), ..., fBm_H(n))`.
pub fn sample_fbm_path<R: Rng + ?Sized>(hurst: f64, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    Ok(HoskingFbm::new(hurst, n)?.sample_path(rng))
}

/// Standard fBm on the integer range `[lo, hi]` (which must contain 0),
/// pinned at `B(0) = 0`. Points are generated in the order `1, -1, 2, -2,
/// ...`, so the values on `[-m, m]` use the same normals for every range
/// containing it.
#[derive(Clone, Debug)]
pub struct TwoSidedFbm {
    lo: i64,
    hi: i64,
    order: Vec<i64>,
    chol: CholeskyFactor,
}

impl TwoSidedFbm {
    pub fn new(hurst: f64, lo: i64, hi: i64) -> Result<Self> {
        check_hurst(hurst)?;
        if lo > 0 || hi < 0 {
            return invalid(format!("fBm range [{lo},{hi}] must contain 0"));
        }
        let reach = hi.max(-lo);
        let mut order = Vec::with_capacity((hi - lo) as usize);
        for m in 1..=reach {
            if m <= hi {
                order.push(m);
            }
            if -m >= lo {
                order.push(-m);
            }
        }
        let n = order.len();
        let mut cov = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                cov[i * n + j] = fbm_covariance(hurst, order[i] as f64, order[j] as f64);
            }
        }
        let chol = CholeskyFactor::new(&cov, n)?;
        Ok(TwoSidedFbm { lo, hi, order, chol })
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.hi
    }

    /// Path values indexed by `x - lo` for `x` in `[lo, hi]`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; (self.hi - self.lo + 1) as usize];
        let vals = self.chol.sample(rng);
        for (x, v) in self.order.iter().zip(vals) {
            out[(x - self.lo) as usize] = v;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{par_map, RngStream};
    use crate::stats::MeanVar;

    #[test]
    fn cholesky_reproduces_matrix() {
        let c = [4.0, 2.0, 0.4, 2.0, 3.0, 0.5, 0.4, 0.5, 1.0];
        let f = CholeskyFactor::new(&c, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..=i.min(j))
                    .map(|p| f.rows[row_start(i) + p] * f.rows[row_start(j) + p])
                    .sum();
                assert!((s - c[i * 3 + j]).abs() < 1e-12);
            }
        }
        // rank-deficient: fully correlated pair
        let g = CholeskyFactor::new(&[1.0, 1.0, 1.0, 1.0], 2).unwrap();
        let mut rng = RngStream::new(1).rng();
        let v = g.sample(&mut rng);
        assert!((v[0] - v[1]).abs() < 1e-12);
        assert!(CholeskyFactor::new(&[1.0, 2.0, 2.0, 1.0], 2).is_err());
    }

    #[test]
    fn hurst_validation() {
        assert!(HoskingFbm::new(0.0, 4).is_err());
        assert!(HoskingFbm::new(1.0, 4).is_err());
        assert!(HoskingFbm::new(0.5, 0).is_err());
        assert!(TwoSidedFbm::new(0.5, 1, 3).is_err());
    }

    #[test]
    fn brownian_increments_uncorrelated() {
        let g = HoskingFbm::new(0.5, 1000).unwrap();
        let paths = par_map(1000, &RngStream::new(5), |_, r| g.sample_noise(r));
        let lag1: MeanVar = paths
            .iter()
            .flat_map(|x| x.windows(2).map(|w| w[0] * w[1]).collect::<Vec<_>>())
            .collect();
        assert!(lag1.mean().abs() < 3e-3, "{}", lag1.mean());
    }

    #[test]
    fn fbm_variance_at_16() {
        let g = HoskingFbm::new(0.75, 16).unwrap();
        let v: MeanVar = par_map(200_000, &RngStream::new(6), |_, r| {
            let p = g.sample_path(r);
            p[16] * p[16]
        })
        .into_iter()
        .collect();
        // target 16^1.5 = 64
        assert!((v.mean() / 64.0 - 1.0).abs() <= 0.01, "{}", v.mean());
    }

    #[test]
    fn fbm_variogram_between_5_and_9() {
        let g = HoskingFbm::new(0.3, 9).unwrap();
        let v: MeanVar = par_map(200_000, &RngStream::new(7), |_, r| {
            let p = g.sample_path(r);
            (p[9] - p[5]).powi(2)
        })
        .into_iter()
        .collect();
        let target = 4f64.powf(0.6);
        assert!((target - 2.297_396_709).abs() < 1e-8);
        assert!((v.mean() - target).abs() < 4.0 * v.se(), "{} vs {target}", v.mean());
    }

    #[test]
    fn hosking_covariance_matches_analytic() {
        let h = 0.7;
        let g = HoskingFbm::new(h, 8).unwrap();
        let n = 100_000;
        let paths = par_map(n, &RngStream::new(8), |_, r| g.sample_path(r));
        for s in 0..=8usize {
            for t in s..=8usize {
                let prods: MeanVar = paths.iter().map(|p| p[s] * p[t]).collect();
                let target = fbm_covariance(h, s as f64, t as f64);
                assert!(
                    (prods.mean() - target).abs() <= 5.0 * prods.se() + 1e-12,
                    "cov({s},{t}) = {} vs {target}",
                    prods.mean()
                );
            }
        }
    }

    #[test]
    fn two_sided_consistent_restriction() {
        let small = TwoSidedFbm::new(0.4, -3, 3).unwrap();
        let big = TwoSidedFbm::new(0.4, -10, 10).unwrap();
        let s = RngStream::new(9);
        let a = small.sample(&mut s.rng());
        let b = big.sample(&mut s.rng());
        for x in -3i64..=3 {
            assert!((a[(x + 3) as usize] - b[(x + 10) as usize]).abs() < 1e-9);
        }
        assert_eq!(a[3], 0.0);
    }

    #[test]
    fn two_sided_variogram() {
        let h = 0.3;
        let f = TwoSidedFbm::new(h, -6, 6).unwrap();
        let v: MeanVar = par_map(100_000, &RngStream::new(10), |_, r| {
            let p = f.sample(r);
            (p[(4 + 6) as usize] - p[(-3 + 6) as usize]).powi(2)
        })
        .into_iter()
        .collect();
        let target = 7f64.powf(2.0 * h);
        assert!((v.mean() - target).abs() < 4.0 * v.se());
    }
}
