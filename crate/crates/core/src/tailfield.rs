//! Tail fields `Y` and spectral fields `Theta = Y / ||Y(0)||`: empirical
//! estimation by conditioning on a root exceedance, exact and Monte Carlo
//! Brown–Resnick tail laws, the RS transform and the change-of-time check.

use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gaussian::CholeskyFactor;
use crate::lattice::{LatticePoint, Norm, Window};
use crate::model::{ModelSpec, VariogramSpec};
use crate::rng::{par_map, par_try_map, RngStream};
use crate::simulate::{FieldSampler, SamplerOptions};
use crate::stats::{normal_cdf, upper_order_tail, Estimate, MeanVar};
use crate::testfn::TestFunction;

/// Norms at or below this value count as zero in identities involving
/// `1(Theta(t) != 0)`.
pub const ZERO_TOLERANCE: f64 = 1e-6;

/// One draw of `x^{-1} X(t)` on the lag window given `||X(0)|| > x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailFieldSample {
    pub lags: Window,
    pub d: usize,
    pub y_values: Vec<f64>,
    pub root_norm: f64,
    pub alpha: f64,
    pub norm: Norm,
}

/// One draw of `Theta(t) = Y(t) / ||Y(0)||` on the lag window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralFieldSample {
    pub lags: Window,
    pub d: usize,
    pub theta_values: Vec<f64>,
    pub alpha: f64,
    pub norm: Norm,
}

fn norm_in(lags: &Window, d: usize, norm: Norm, values: &[f64], t: &LatticePoint) -> Option<f64> {
    lags.index_of(t).map(|i| norm.apply(&values[i * d..(i + 1) * d]))
}

impl TailFieldSample {
    /// `||Y(t)||`, or `None` outside the lag window.
    pub fn norm_at(&self, t: &LatticePoint) -> Option<f64> {
        norm_in(&self.lags, self.d, self.norm, &self.y_values, t)
    }

    pub fn norm_at_index(&self, i: usize) -> f64 {
        self.norm.apply(&self.y_values[i * self.d..(i + 1) * self.d])
    }
}

impl SpectralFieldSample {
    pub fn norm_at(&self, t: &LatticePoint) -> Option<f64> {
        norm_in(&self.lags, self.d, self.norm, &self.theta_values, t)
    }

    pub fn norm_at_index(&self, i: usize) -> f64 {
        self.norm.apply(&self.theta_values[i * self.d..(i + 1) * self.d])
    }

    pub fn norms(&self) -> Vec<f64> {
        (0..self.lags.len()).map(|i| self.norm_at_index(i)).collect()
    }

    /// Multiplies every value by `c` (used to build corrupted controls).
    pub fn scaled(&self, c: f64) -> SpectralFieldSample {
        SpectralFieldSample {
            theta_values: self.theta_values.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }
}

/// Settings of [`estimate_tail_field_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailFieldOptions {
    /// Error out below this many retained exceedances.
    pub min_exceedances: usize,
    pub sampler: SamplerOptions,
    /// Brown–Resnick values below `floor_fraction * x` may be truncated.
    pub floor_fraction: f64,
}

impl Default for TailFieldOptions {
    fn default() -> Self {
        TailFieldOptions {
            min_exceedances: 100,
            sampler: SamplerOptions::default(),
            floor_fraction: 0.05,
        }
    }
}

/// Retained exceedances with the threshold they were conditioned on.
#[derive(Clone, Debug, PartialEq)]
pub struct TailFieldBatch {
    pub threshold: f64,
    pub quantile: f64,
    pub n_replicates: u64,
    pub samples: Vec<TailFieldSample>,
}

impl TailFieldBatch {
    pub fn spectral(&self) -> Vec<SpectralFieldSample> {
        self.samples.iter().map(spectral_from_tail).collect()
    }
}

/// Tail-field samples from `n_replicates` fields thresholded at the
/// empirical `q`-quantile of `||X(0)||`.
///
/// The procedure is simulated in an equivalent form: with `m = ceil(q N)`,
/// the `m`-th order statistic of `||X(0)||` is drawn from its exact law, and
/// given it the `N - m` fields above it are independent draws conditioned on
/// `||X(0)||` exceeding it. The cost is therefore proportional to the number
/// of retained replicates, so `N` can be very large.
pub fn estimate_tail_field(
    spec: &ModelSpec,
    alpha: f64,
    lags: &Window,
    q: f64,
    n_replicates: u64,
    stream: &RngStream,
) -> Result<TailFieldBatch> {
    estimate_tail_field_with(spec, alpha, lags, q, n_replicates, stream, &TailFieldOptions::default())
}

pub fn estimate_tail_field_with(
    spec: &ModelSpec,
    alpha: f64,
    lags: &Window,
    q: f64,
    n_replicates: u64,
    stream: &RngStream,
    opts: &TailFieldOptions,
) -> Result<TailFieldBatch> {
    if !(q > 0.0 && q < 1.0) {
        return invalid(format!("threshold quantile must lie in (0,1), got {q}"));
    }
    if !(alpha > 0.0) {
        return invalid(format!("alpha must be positive, got {alpha}"));
    }
    let origin = LatticePoint::zero(lags.dim());
    if !lags.contains(&origin) {
        return invalid(format!("lag window {lags} must contain the origin"));
    }
    let n = n_replicates;
    // m = ceil(q N), computed through 1 - q to keep precision for huge N
    let retained = (((1.0 - q) * n as f64).floor() as u64).min(n.saturating_sub(1));
    let m = n - retained;
    let retained = retained as usize;
    if retained < opts.min_exceedances {
        return Err(Error::InsufficientSamples {
            got: retained,
            needed: opts.min_exceedances,
            hint: format!(
                "increase n_replicates to at least {}",
                (opts.min_exceedances as f64 / (1.0 - q)).ceil() as u64 + 1
            ),
        });
    }
    let sampler = FieldSampler::new(spec, lags, &opts.sampler, &stream.labeled("pilot"))?;
    let site = sampler.site_of(&origin)?;
    let tail = upper_order_tail(n, m, &mut stream.labeled("threshold").rng())?;
    let x = sampler.upper_quantile(tail)?;
    let floor = opts.floor_fraction * x;
    let samples = par_try_map(retained, &stream.labeled("exceedances"), |_, r| {
        let v = sampler.sample_given_exceedance(site, x, floor, r)?;
        let y_values: Vec<f64> = v.iter().map(|z| z / x).collect();
        Ok(TailFieldSample {
            lags: lags.clone(),
            d: 1,
            root_norm: y_values[site].abs(),
            y_values,
            alpha,
            norm: Norm::Abs,
        })
    })?;
    Ok(TailFieldBatch {
        threshold: x,
        quantile: q,
        n_replicates: n,
        samples,
    })
}

/// `Theta(t) = Y(t) / ||Y(0)||`; the lag-0 norm is exactly one.
pub fn spectral_from_tail(s: &TailFieldSample) -> SpectralFieldSample {
    let r = s.root_norm;
    let mut theta_values: Vec<f64> = s.y_values.iter().map(|v| v / r).collect();
    if let Some(i) = s.lags.index_of(&LatticePoint::zero(s.lags.dim())) {
        // restore exact unit norm against rounding
        let n = s.norm.apply(&theta_values[i * s.d..(i + 1) * s.d]);
        if n > 0.0 {
            for v in &mut theta_values[i * s.d..(i + 1) * s.d] {
                *v /= n;
            }
        }
    }
    SpectralFieldSample {
        lags: s.lags.clone(),
        d: s.d,
        theta_values,
        alpha: s.alpha,
        norm: s.norm,
    }
}

/// `P(Y(t) <= y)` for the Brown–Resnick tail field at a lag with variogram
/// value `gamma_t`:
/// `Phi((2 ln y + gamma)/(2 sqrt gamma)) - Phi((2 ln y - gamma)/(2 sqrt gamma)) / y`.
/// At `gamma_t = 0` the continuity limit `max(0, 1 - 1/y)` is returned.
pub fn br_tail_marginal_cdf(gamma_t: f64, y: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    if y.is_infinite() {
        return 1.0;
    }
    if gamma_t <= 0.0 {
        return (1.0 - 1.0 / y).max(0.0);
    }
    let s = 2.0 * gamma_t.sqrt();
    let ly = 2.0 * y.ln();
    (normal_cdf((ly + gamma_t) / s) - normal_cdf((ly - gamma_t) / s) / y).clamp(0.0, 1.0)
}

/// Monte Carlo `P(Y(t_i) <= y_i for all i)` for the Brown–Resnick tail field,
/// as `E max(V(t_i)/y_i, V(0)) - E max_i V(t_i)/y_i` with
/// `V = exp(W - sigma^2/2)`; both expectations share their draws, so each
/// replicate contributes `(V(0) - max_i V(t_i)/y_i)^+`.
pub fn br_tail_fdd_mc(
    points: &[LatticePoint],
    y: &[f64],
    variogram: &VariogramSpec,
    n_mc: usize,
    stream: &RngStream,
) -> Result<Estimate> {
    variogram.validate()?;
    if points.is_empty() || points.len() != y.len() {
        return invalid("need one level per point and at least one point");
    }
    if y.iter().any(|&v| !(v > 0.0)) {
        return invalid("levels y_i must be positive");
    }
    if n_mc < 10_000 {
        return invalid(format!("n_mc must be >= 10000, got {n_mc}"));
    }
    let k = points[0].dim();
    let mut pts: Vec<Vec<i64>> = vec![vec![0; k]];
    for p in points {
        p.check_dim(k)?;
        pts.push(p.0.clone());
    }
    let n = pts.len();
    let mut cov = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            cov[i * n + j] = variogram.covariance(&pts[i], &pts[j]);
        }
    }
    let chol = CholeskyFactor::new(&cov, n)?;
    let half_var: Vec<f64> = pts.iter().map(|t| 0.5 * variogram.sigma2(t)).collect();
    let vals = par_map(n_mc, stream, |_, r| {
        let w = chol.sample(r);
        let v0 = (w[0] - half_var[0]).exp();
        let m = (1..n)
            .map(|i| (w[i] - half_var[i]).exp() / y[i - 1])
            .fold(0.0, f64::max);
        (v0 - m).max(0.0)
    });
    let est = vals.into_iter().collect::<MeanVar>().estimate();
    if est.value < -3.0 * est.se {
        return Err(Error::Statistical(format!(
            "negative probability estimate {} (se {}); increase n_mc",
            est.value, est.se
        )));
    }
    Ok(est)
}

/// `||Theta||_alpha^alpha = sum_t ||Theta(t)||^alpha` over the lag window.
pub fn alpha_norm(s: &SpectralFieldSample) -> f64 {
    (0..s.lags.len())
        .map(|i| s.norm_at_index(i).powf(s.alpha))
        .sum()
}

/// `Theta^{RS}(t) = Theta(t + I) / ||Theta(I)||` with
/// `P(I = i) ∝ ||Theta(i)||^alpha`; lags `t + I` outside the window are 0.
pub fn rs_transform(s: &SpectralFieldSample, stream: &RngStream) -> Result<SpectralFieldSample> {
    rs_transform_with(s, &mut stream.rng())
}

pub fn rs_transform_with<R: Rng + ?Sized>(s: &SpectralFieldSample, rng: &mut R) -> Result<SpectralFieldSample> {
    let weights: Vec<f64> = (0..s.lags.len())
        .map(|i| s.norm_at_index(i).powf(s.alpha))
        .collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return invalid("spectral sample has no mass");
    }
    let mut x = rng.random::<f64>() * total;
    let mut chosen = weights.iter().rposition(|&w| w > 0.0).expect("positive mass");
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            chosen = i;
            break;
        }
        x -= w;
    }
    let shift = s.lags.point_at(chosen);
    let scale = s.norm_at_index(chosen);
    let d = s.d;
    let mut out = vec![0.0; s.theta_values.len()];
    for (i, t) in s.lags.points().enumerate() {
        let src = &t + &shift;
        if let Some(j) = s.lags.index_of(&src) {
            for c in 0..d {
                out[i * d + c] = s.theta_values[j * d + c] / scale;
            }
        }
    }
    Ok(SpectralFieldSample {
        theta_values: out,
        ..s.clone()
    })
}

/// Both sides of `E[g(Theta(. - s)) 1(Theta(-s) != 0)] =
/// E[g(Theta(.)/||Theta(s)||) ||Theta(s)||^alpha]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangeOfTime {
    pub lhs: Estimate,
    pub rhs: Estimate,
    /// Standard error of the paired difference.
    pub se: f64,
}

impl ChangeOfTime {
    /// `|lhs - rhs|` in standard errors (0 when both sides agree exactly).
    pub fn z(&self) -> f64 {
        let d = (self.lhs.value - self.rhs.value).abs();
        if self.se == 0.0 {
            if d <= 1e-12 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            d / self.se
        }
    }
}

pub fn verify_change_of_time(
    samples: &[SpectralFieldSample],
    s: &LatticePoint,
    g: &TestFunction,
    alpha: f64,
) -> Result<ChangeOfTime> {
    verify_change_of_time_with(samples, s, g, alpha, ZERO_TOLERANCE)
}

pub fn verify_change_of_time_with(
    samples: &[SpectralFieldSample],
    s: &LatticePoint,
    g: &TestFunction,
    alpha: f64,
    zero_tol: f64,
) -> Result<ChangeOfTime> {
    if samples.is_empty() {
        return Err(Error::InsufficientSamples {
            got: 0,
            needed: 1,
            hint: "no spectral samples".into(),
        });
    }
    let neg = -s;
    let mut lhs = MeanVar::new();
    let mut rhs = MeanVar::new();
    let mut diff = MeanVar::new();
    let outside = |t: &LatticePoint| Error::InvalidParameter(format!("lag window too small: {t} needed"));
    for th in samples {
        let at = |t: &LatticePoint| th.norm_at(t).ok_or_else(|| outside(t));
        let back = at(&neg)?;
        let l = if back > zero_tol {
            let shifted: Vec<f64> = g
                .lags()
                .iter()
                .map(|t| at(&(t - s)))
                .collect::<Result<_>>()?;
            g.eval_norms(&shifted)?
        } else {
            0.0
        };
        let fwd = at(s)?;
        let r = if fwd > zero_tol {
            let scaled: Vec<f64> = g
                .lags()
                .iter()
                .map(|t| at(t).map(|v| v / fwd))
                .collect::<Result<_>>()?;
            g.eval_norms(&scaled)? * fwd.powf(alpha)
        } else {
            0.0
        };
        lhs.push(l);
        rhs.push(r);
        diff.push(l - r);
    }
    Ok(ChangeOfTime {
        lhs: lhs.estimate(),
        rhs: rhs.estimate(),
        se: diff.se(),
    })
}

fn lag_label(t: &LatticePoint, c: usize, d: usize) -> String {
    if d == 1 {
        t.to_string()
    } else {
        format!("{t}[{c}]")
    }
}

/// Writes samples as tab-separated columns: `root_norm`, `alpha`, then one
/// column per lag (row-major lag order), one row per replicate.
pub fn write_tail_samples<W: Write>(samples: &[TailFieldSample], mut out: W) -> Result<()> {
    let io = |e: std::io::Error| Error::Serialization(e.to_string());
    let Some(first) = samples.first() else {
        return Ok(());
    };
    let mut header = vec!["root_norm".to_string(), "alpha".to_string()];
    for t in first.lags.points() {
        for c in 0..first.d {
            header.push(lag_label(&t, c, first.d));
        }
    }
    writeln!(out, "{}", header.join("\t")).map_err(io)?;
    for s in samples {
        if s.lags != first.lags || s.d != first.d {
            return invalid("all samples in a batch must share the lag window");
        }
        let mut row = vec![format!("{:e}", s.root_norm), format!("{}", s.alpha)];
        row.extend(s.y_values.iter().map(|v| format!("{v:e}")));
        writeln!(out, "{}", row.join("\t")).map_err(io)?;
    }
    Ok(())
}

fn parse_point(label: &str) -> Result<LatticePoint> {
    let inner = label
        .split('[')
        .next()
        .unwrap_or("")
        .trim()
        .trim_start_matches('(')
        .trim_end_matches(')');
    let coords = inner
        .split(',')
        .map(|c| c.trim().parse::<i64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::Serialization(format!("bad lag label {label:?}")))?;
    Ok(LatticePoint(coords))
}

/// Inverse of [`write_tail_samples`] for scalar samples.
pub fn read_tail_samples<R: BufRead>(input: R) -> Result<Vec<TailFieldSample>> {
    let ser = |m: String| Error::Serialization(m);
    let mut lines = input.lines();
    let Some(header) = lines.next() else {
        return Ok(Vec::new());
    };
    let header = header.map_err(|e| ser(e.to_string()))?;
    let cols: Vec<&str> = header.split('\t').collect();
    if cols.len() < 3 || cols[0] != "root_norm" || cols[1] != "alpha" {
        return Err(ser("missing root_norm/alpha header".into()));
    }
    let pts: Vec<LatticePoint> = cols[2..].iter().map(|c| parse_point(c)).collect::<Result<_>>()?;
    let k = pts[0].dim();
    let lo = LatticePoint((0..k).map(|l| pts.iter().map(|p| p.0[l]).min().unwrap()).collect());
    let hi = LatticePoint((0..k).map(|l| pts.iter().map(|p| p.0[l]).max().unwrap()).collect());
    let lags = Window::new(lo, hi)?;
    if lags.len() != pts.len() || lags.points().zip(&pts).any(|(a, b)| &a != b) {
        return Err(ser("lag columns do not form a row-major window".into()));
    }
    let mut out = Vec::new();
    for line in lines {
        let line = line.map_err(|e| ser(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split('\t')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| ser(e.to_string()))?;
        if vals.len() != cols.len() {
            return Err(ser(format!("row has {} fields, header {}", vals.len(), cols.len())));
        }
        out.push(TailFieldSample {
            lags: lags.clone(),
            d: 1,
            y_values: vals[2..].to_vec(),
            root_norm: vals[0],
            alpha: vals[1],
            norm: Norm::Abs,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn atom(lags: &Window, extra: &[(LatticePoint, f64)]) -> SpectralFieldSample {
        let mut v = vec![0.0; lags.len()];
        v[lags.index_of(&LatticePoint::zero(lags.dim())).unwrap()] = 1.0;
        for (t, x) in extra {
            v[lags.index_of(t).unwrap()] = *x;
        }
        SpectralFieldSample {
            lags: lags.clone(),
            d: 1,
            theta_values: v,
            alpha: 1.0,
            norm: Norm::Abs,
        }
    }

    #[test]
    fn marginal_cdf_values() {
        assert!((1.0 - br_tail_marginal_cdf(4.0, 1.0) - 0.317_310_507_862_914).abs() < 1e-9);
        let want = normal_cdf((2.0 * 2f64.ln() + 1.0) / 2.0) - 0.5 * normal_cdf((2.0 * 2f64.ln() - 1.0) / 2.0);
        assert!((br_tail_marginal_cdf(1.0, 2.0) - want).abs() < 1e-12);
        assert!((want - 0.5953).abs() < 5e-4);
        assert!(br_tail_marginal_cdf(1.0, 1e12) > 1.0 - 1e-9);
        assert_eq!(br_tail_marginal_cdf(0.0, 4.0), 0.75);
        assert_eq!(br_tail_marginal_cdf(0.0, 0.5), 0.0);
        // a valid distribution function on a grid
        for g in [0.01, 1.0, 9.0] {
            let mut prev = 0.0;
            for i in 1..400 {
                let y = 0.01 * 1.05f64.powi(i);
                let c = br_tail_marginal_cdf(g, y);
                assert!(c >= prev - 1e-12 && (0.0..=1.0).contains(&c));
                prev = c;
            }
        }
    }

    #[test]
    fn spectral_normalization_and_homogeneity() {
        let lags = Window::centered(1, 2).unwrap();
        let t = TailFieldSample {
            lags: lags.clone(),
            d: 1,
            y_values: vec![0.1, 0.3, 3.7, 0.0, 1.2],
            root_norm: 3.7,
            alpha: 1.0,
            norm: Norm::Abs,
        };
        let s = spectral_from_tail(&t);
        assert_eq!(s.norm_at(&LatticePoint(vec![0])), Some(1.0));
        let scaled = TailFieldSample {
            y_values: t.y_values.iter().map(|v| v * 2.5).collect(),
            root_norm: 3.7 * 2.5,
            ..t.clone()
        };
        let s2 = spectral_from_tail(&scaled);
        for (a, b) in s.theta_values.iter().zip(&s2.theta_values) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((alpha_norm(&s) - (0.1 + 0.3 + 3.7 + 1.2) / 3.7).abs() < 1e-12);
    }

    #[test]
    fn rs_on_atoms() {
        let lags = Window::centered(1, 3).unwrap();
        let a = atom(&lags, &[]);
        let mut r = RngStream::new(1).rng();
        assert_eq!(rs_transform_with(&a, &mut r).unwrap(), a);
        let b = atom(&lags, &[(LatticePoint(vec![2]), 1.0)]);
        let n = 20_000;
        let zero_root = (0..n)
            .filter(|_| {
                let o = rs_transform_with(&b, &mut r).unwrap();
                o.norm_at(&LatticePoint(vec![2])) == Some(1.0)
            })
            .count();
        let p = zero_root as f64 / n as f64;
        assert!((p - 0.5).abs() < 0.015, "{p}");
        let zero = SpectralFieldSample {
            theta_values: vec![0.0; lags.len()],
            ..a
        };
        assert!(rs_transform_with(&zero, &mut r).is_err());
    }

    #[test]
    fn change_of_time_on_atoms() {
        let lags = Window::centered(2, 3).unwrap();
        let samples = vec![atom(&lags, &[]); 10];
        let s = LatticePoint(vec![1, 0]);
        let g = TestFunction::IndicatorExceed {
            level: 0.5,
            lags: vec![LatticePoint(vec![1, 1])],
        };
        let r = verify_change_of_time(&samples, &s, &g, 1.0).unwrap();
        assert_eq!(r.lhs.value, 0.0);
        assert_eq!(r.rhs.value, 0.0);
        assert_eq!(r.z(), 0.0);
        let far = LatticePoint(vec![5, 0]);
        assert!(verify_change_of_time(&samples, &far, &g, 1.0).is_err());
    }

    #[test]
    fn columnar_round_trip() {
        let lags = Window::new(LatticePoint(vec![-1, 0]), LatticePoint(vec![1, 1])).unwrap();
        let mk = |c: f64| TailFieldSample {
            lags: lags.clone(),
            d: 1,
            y_values: (0..6).map(|i| c * i as f64 + 0.125).collect(),
            root_norm: c * 2.0 + 0.125,
            alpha: 1.0,
            norm: Norm::Abs,
        };
        let samples = vec![mk(1.0), mk(3.5)];
        let mut buf = Vec::new();
        write_tail_samples(&samples, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("root_norm\talpha\t(-1,0)\t(-1,1)\t(0,0)"));
        let back = read_tail_samples(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back, samples);
    }

    #[test]
    fn too_few_exceedances() {
        let lags = Window::centered(2, 1).unwrap();
        let spec = ModelSpec::preset("iid").unwrap();
        let e = estimate_tail_field(&spec, 1.0, &lags, 0.999, 10_000, &RngStream::new(1));
        assert!(matches!(e, Err(Error::InsufficientSamples { .. })));
    }
}
