//! Integer lattice geometry on `Z^k`: points, inclusive hyperrectangles,
//! hypercube corners, translation-invariant orders and window maxima.
//!
//! Windows use inclusive bounds, so `[i:j]` in the usual notation is
//! `Window::new(i, j)`. The two standard boxes are
//! `R_n = [-n+1 : n-1]` ([`Window::cube`]) and `R_n^+ = [0 : n-1]`
//! ([`Window::positive_box`]).

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// A point of `Z^k`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatticePoint(pub Vec<i64>);

impl LatticePoint {
    pub fn new(coords: Vec<i64>) -> Self {
        LatticePoint(coords)
    }

    pub fn zero(k: usize) -> Self {
        LatticePoint(vec![0; k])
    }

    pub fn splat(k: usize, v: i64) -> Self {
        LatticePoint(vec![v; k])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    /// `max_l |t_l|`
    pub fn sup_norm(&self) -> i64 {
        self.0.iter().map(|c| c.abs()).max().unwrap_or(0)
    }

    pub(crate) fn check_dim(&self, k: usize) -> Result<()> {
        if self.dim() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: self.dim(),
            });
        }
        Ok(())
    }
}

impl From<Vec<i64>> for LatticePoint {
    fn from(v: Vec<i64>) -> Self {
        LatticePoint(v)
    }
}

impl<const N: usize> From<[i64; N]> for LatticePoint {
    fn from(v: [i64; N]) -> Self {
        LatticePoint(v.to_vec())
    }
}

impl fmt::Display for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl Add for &LatticePoint {
    type Output = LatticePoint;
    fn add(self, rhs: &LatticePoint) -> LatticePoint {
        debug_assert_eq!(self.dim(), rhs.dim());
        LatticePoint(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &LatticePoint {
    type Output = LatticePoint;
    fn sub(self, rhs: &LatticePoint) -> LatticePoint {
        debug_assert_eq!(self.dim(), rhs.dim());
        LatticePoint(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl Neg for &LatticePoint {
    type Output = LatticePoint;
    fn neg(self) -> LatticePoint {
        LatticePoint(self.0.iter().map(|a| -a).collect())
    }
}

/// Inclusive hyperrectangle `[lo : hi]` in `Z^k`, stored row-major with the
/// last axis varying fastest.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Window {
    lo: LatticePoint,
    hi: LatticePoint,
}

impl Window {
    pub fn new(lo: LatticePoint, hi: LatticePoint) -> Result<Self> {
        if lo.dim() == 0 {
            return invalid("window dimension must be at least 1");
        }
        hi.check_dim(lo.dim())?;
        let mut card: u64 = 1;
        for (a, b) in lo.0.iter().zip(&hi.0) {
            if a > b {
                return invalid(format!("window bounds out of order: lo={lo}, hi={hi}"));
            }
            let extent = u64::try_from(b - a + 1)
                .map_err(|_| Error::InvalidParameter("window extent overflow".into()))?;
            card = card
                .checked_mul(extent)
                .ok_or_else(|| Error::InvalidParameter("window cardinality overflows u64".into()))?;
        }
        if usize::try_from(card).is_err() {
            return invalid("window cardinality does not fit in memory index");
        }
        Ok(Window { lo, hi })
    }

    /// `R_n = [-n+1 : n-1]`.
    pub fn cube(n: &LatticePoint) -> Result<Self> {
        if n.0.iter().any(|&c| c < 1) {
            return invalid(format!("cube size must be >= 1, got {n}"));
        }
        Window::new(
            LatticePoint(n.0.iter().map(|c| -c + 1).collect()),
            LatticePoint(n.0.iter().map(|c| c - 1).collect()),
        )
    }

    /// `R_n^+ = [0 : n-1]`.
    pub fn positive_box(n: &LatticePoint) -> Result<Self> {
        if n.0.iter().any(|&c| c < 1) {
            return invalid(format!("box size must be >= 1, got {n}"));
        }
        Window::new(
            LatticePoint::zero(n.dim()),
            LatticePoint(n.0.iter().map(|c| c - 1).collect()),
        )
    }

    /// `{t : ||t||_inf <= radius}` in dimension `k`.
    pub fn centered(k: usize, radius: i64) -> Result<Self> {
        if radius < 0 {
            return invalid("radius must be nonnegative");
        }
        Window::new(LatticePoint::splat(k, -radius), LatticePoint::splat(k, radius))
    }

    pub fn lo(&self) -> &LatticePoint {
        &self.lo
    }

    pub fn hi(&self) -> &LatticePoint {
        &self.hi
    }

    pub fn dim(&self) -> usize {
        self.lo.dim()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.lo
            .0
            .iter()
            .zip(&self.hi.0)
            .map(|(a, b)| (b - a + 1) as usize)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, t: &LatticePoint) -> bool {
        t.dim() == self.dim()
            && t.0
                .iter()
                .zip(self.lo.0.iter().zip(&self.hi.0))
                .all(|(c, (a, b))| a <= c && c <= b)
    }

    pub fn contains_window(&self, other: &Window) -> bool {
        self.contains(&other.lo) && self.contains(&other.hi)
    }

    /// Row-major linear index of `t`, or `None` when outside.
    pub fn index_of(&self, t: &LatticePoint) -> Option<usize> {
        self.index_of_coords(&t.0)
    }

    pub(crate) fn index_of_coords(&self, t: &[i64]) -> Option<usize> {
        if t.len() != self.dim() {
            return None;
        }
        let mut idx = 0usize;
        for ((&c, &a), &b) in t.iter().zip(&self.lo.0).zip(&self.hi.0) {
            if c < a || c > b {
                return None;
            }
            idx = idx * ((b - a + 1) as usize) + (c - a) as usize;
        }
        Some(idx)
    }

    pub fn point_at(&self, mut idx: usize) -> LatticePoint {
        let shape = self.shape();
        let mut coords = vec![0i64; shape.len()];
        for ax in (0..shape.len()).rev() {
            coords[ax] = self.lo.0[ax] + (idx % shape[ax]) as i64;
            idx /= shape[ax];
        }
        LatticePoint(coords)
    }

    pub fn points(&self) -> impl Iterator<Item = LatticePoint> + '_ {
        (0..self.len()).map(move |i| self.point_at(i))
    }

    /// The window grown by `radius[l]` on both sides of every axis.
    pub fn enlarged(&self, radius: &[i64]) -> Result<Window> {
        if radius.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: radius.len(),
            });
        }
        Window::new(
            LatticePoint(self.lo.0.iter().zip(radius).map(|(a, r)| a - r).collect()),
            LatticePoint(self.hi.0.iter().zip(radius).map(|(b, r)| b + r).collect()),
        )
    }

    pub fn translated(&self, by: &LatticePoint) -> Result<Window> {
        by.check_dim(self.dim())?;
        Window::new(&self.lo + by, &self.hi + by)
    }

    /// Lattice point nearest the geometric center (rounding toward `lo`).
    pub fn center(&self) -> LatticePoint {
        LatticePoint(
            self.lo
                .0
                .iter()
                .zip(&self.hi.0)
                .map(|(a, b)| a + (b - a) / 2)
                .collect(),
        )
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}:{}]", self.lo, self.hi)
    }
}

/// A vertex selector `i ∈ {0,1}^k` of a hyperrectangle.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CornerIndex(Vec<u8>);

impl CornerIndex {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.is_empty() {
            return invalid("corner index must have at least one entry");
        }
        if bits.iter().any(|&b| b > 1) {
            return invalid(format!("corner entries must be 0 or 1, got {bits:?}"));
        }
        Ok(CornerIndex(bits))
    }

    pub fn zero(k: usize) -> Self {
        CornerIndex(vec![0; k])
    }

    pub fn ones(k: usize) -> Self {
        CornerIndex(vec![1; k])
    }

    /// All `2^k` corners, in binary counting order with the first axis most
    /// significant.
    pub fn all(k: usize) -> Vec<CornerIndex> {
        (0..1usize << k)
            .map(|m| CornerIndex((0..k).map(|ax| ((m >> (k - 1 - ax)) & 1) as u8).collect()))
            .collect()
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// `1 - i`
    pub fn complement(&self) -> CornerIndex {
        CornerIndex(self.0.iter().map(|b| 1 - b).collect())
    }

    /// Parses `"(0,1)"`, `"0,1"` or `"01"`.
    pub fn parse(s: &str) -> Result<Self> {
        let body: String = s
            .chars()
            .filter(|c| !matches!(c, '(' | ')' | ' ' | ','))
            .collect();
        let bits = body
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                _ => invalid(format!("bad corner specification {s:?}")),
            })
            .collect::<Result<Vec<u8>>>()?;
        CornerIndex::new(bits)
    }
}

impl fmt::Display for CornerIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, b) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{b}")?;
        }
        write!(f, ")")
    }
}

/// Translation-invariant total order on `Z^k`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InvariantOrder {
    /// Dictionary order over the axes in `axes` order; an axis with sign `-1`
    /// is compared reversed.
    Lexicographic { axes: Vec<usize>, signs: Vec<i8> },
}

impl InvariantOrder {
    /// Plain dictionary order `s_1 < t_1`, then `s_2 < t_2`, ...
    pub fn lexicographic(k: usize) -> Self {
        InvariantOrder::Lexicographic {
            axes: (0..k).collect(),
            signs: vec![1; k],
        }
    }

    pub fn with_axes(axes: Vec<usize>, signs: Vec<i8>) -> Result<Self> {
        let k = axes.len();
        if signs.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: signs.len(),
            });
        }
        let mut seen = vec![false; k];
        for &a in &axes {
            if a >= k || seen[a] {
                return invalid(format!("axes {axes:?} is not a permutation"));
            }
            seen[a] = true;
        }
        if signs.iter().any(|&s| s != 1 && s != -1) {
            return invalid("order signs must be +1 or -1");
        }
        Ok(InvariantOrder::Lexicographic { axes, signs })
    }

    pub fn dim(&self) -> usize {
        match self {
            InvariantOrder::Lexicographic { axes, .. } => axes.len(),
        }
    }

    pub(crate) fn cmp_coords(&self, s: &[i64], t: &[i64]) -> Ordering {
        match self {
            InvariantOrder::Lexicographic { axes, signs } => {
                for (&ax, &sg) in axes.iter().zip(signs) {
                    let o = s[ax].cmp(&t[ax]);
                    if o != Ordering::Equal {
                        return if sg > 0 { o } else { o.reverse() };
                    }
                }
                Ordering::Equal
            }
        }
    }

    /// Sign of `t` relative to the origin: `Less` means `t ≺ 0`.
    pub(crate) fn cmp_zero(&self, t: &[i64]) -> Ordering {
        match self {
            InvariantOrder::Lexicographic { axes, signs } => {
                for (&ax, &sg) in axes.iter().zip(signs) {
                    let o = t[ax].cmp(&0);
                    if o != Ordering::Equal {
                        return if sg > 0 { o } else { o.reverse() };
                    }
                }
                Ordering::Equal
            }
        }
    }
}

pub fn lex_compare(s: &LatticePoint, t: &LatticePoint, order: &InvariantOrder) -> Result<Ordering> {
    s.check_dim(order.dim())?;
    t.check_dim(order.dim())?;
    Ok(order.cmp_coords(&s.0, &t.0))
}

/// Norm used for `||X(t)||` on `R^d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    #[default]
    Abs,
    Sup,
    Euclidean,
}

impl Norm {
    /// Absolute value for scalars, sup norm otherwise.
    pub fn default_for(d: usize) -> Norm {
        if d == 1 {
            Norm::Abs
        } else {
            Norm::Sup
        }
    }

    pub fn apply(self, v: &[f64]) -> f64 {
        match self {
            Norm::Abs | Norm::Sup => v.iter().fold(0.0f64, |m, x| m.max(x.abs())),
            Norm::Euclidean => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        }
    }
}

/// One realization of a (possibly vector-valued) field on a window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub window: Window,
    pub d: usize,
    pub values: Vec<f64>,
    pub norm: Norm,
    pub model_tag: String,
    pub seed: u64,
}

impl FieldSample {
    pub fn new(
        window: Window,
        d: usize,
        values: Vec<f64>,
        norm: Norm,
        model_tag: impl Into<String>,
        seed: u64,
    ) -> Result<Self> {
        if d == 0 {
            return invalid("value dimension must be >= 1");
        }
        if norm == Norm::Abs && d != 1 {
            return invalid("absolute-value norm requires scalar values");
        }
        if values.len() != window.len() * d {
            return Err(Error::DimensionMismatch {
                expected: window.len() * d,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("field values must be finite");
        }
        Ok(FieldSample {
            window,
            d,
            values,
            norm,
            model_tag: model_tag.into(),
            seed,
        })
    }

    /// Scalar field with the default norm.
    pub fn scalar(window: Window, values: Vec<f64>, model_tag: impl Into<String>, seed: u64) -> Result<Self> {
        FieldSample::new(window, 1, values, Norm::Abs, model_tag, seed)
    }

    pub fn value(&self, idx: usize) -> &[f64] {
        &self.values[idx * self.d..(idx + 1) * self.d]
    }

    pub fn norm_at(&self, idx: usize) -> f64 {
        self.norm.apply(self.value(idx))
    }

    pub fn norm_at_point(&self, t: &LatticePoint) -> Result<f64> {
        let idx = self
            .window
            .index_of(t)
            .ok_or_else(|| Error::OutsideWindow(t.to_string()))?;
        Ok(self.norm_at(idx))
    }

    pub fn norms(&self) -> Vec<f64> {
        (0..self.window.len()).map(|i| self.norm_at(i)).collect()
    }
}

/// `M_X(A) = max_{t∈A} ||X(t)||`, with the empty maximum equal to zero.
pub fn window_max(sample: &FieldSample, region: &[LatticePoint]) -> Result<f64> {
    let mut m = 0.0f64;
    for t in region {
        m = m.max(sample.norm_at_point(t)?);
    }
    Ok(m)
}

/// The corner `t_{n,i}` of `R_r^+`: `r_l - 1` where `i_l = 1`, else `0`.
pub fn corner_point(i: &CornerIndex, r: &LatticePoint) -> Result<LatticePoint> {
    r.check_dim(i.dim())?;
    if r.0.iter().any(|&c| c < 1) {
        return invalid(format!("block size must be >= 1, got {r}"));
    }
    Ok(LatticePoint(
        i.0.iter()
            .zip(&r.0)
            .map(|(&b, &rl)| if b == 1 { rl - 1 } else { 0 })
            .collect(),
    ))
}

/// `{t : t_l (1 - 2 i_l) >= 0 for all l, t != 0, ||t||_inf <= bound}`: the
/// closed orthant pointing away from corner `i`, with the origin removed.
pub fn orthant_region(i: &CornerIndex, bound: i64) -> Result<Vec<LatticePoint>> {
    if bound < 1 {
        return invalid("orthant bound must be >= 1");
    }
    let k = i.dim();
    let lo = LatticePoint(i.0.iter().map(|&b| if b == 1 { -bound } else { 0 }).collect());
    let hi = LatticePoint(i.0.iter().map(|&b| if b == 1 { 0 } else { bound }).collect());
    let w = Window::new(lo, hi)?;
    debug_assert_eq!(w.dim(), k);
    Ok(w.points().filter(|t| !t.is_zero()).collect())
}

/// `{t ≺ 0 : ||t||_inf <= bound}` for the given invariant order.
pub fn half_space_region(order: &InvariantOrder, bound: i64) -> Result<Vec<LatticePoint>> {
    if bound < 1 {
        return invalid("half-space bound must be >= 1");
    }
    let w = Window::centered(order.dim(), bound)?;
    Ok(w.points()
        .filter(|t| order.cmp_zero(&t.0) == Ordering::Less)
        .collect())
}
