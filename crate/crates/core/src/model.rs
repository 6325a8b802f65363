//! Closed descriptions of the samplable fields.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::lattice::LatticePoint;

/// Offsets of the four-neighbour diagonal stencil, in the order
/// `a_{-1,-1}, a_{-1,1}, a_{1,1}, a_{1,-1}`.
pub const MMA_OFFSETS: [[i64; 2]; 4] = [[-1, -1], [-1, 1], [1, 1], [1, -1]];

/// Weights of the diagonal max-moving average, in the order of
/// [`MMA_OFFSETS`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MmaWeights(pub [f64; 4]);

impl MmaWeights {
    pub fn new(a: [f64; 4]) -> Result<Self> {
        for (v, off) in a.iter().zip(MMA_OFFSETS) {
            if !(0.0..=1.0).contains(v) {
                return invalid(format!(
                    "weight a_{{{},{}}} = {v} outside [0,1]",
                    off[0], off[1]
                ));
            }
        }
        Ok(MmaWeights(a))
    }

    /// `s = a_{-1,-1} + a_{-1,1} + a_{1,1} + a_{1,-1}`.
    pub fn s(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn get(&self, offset: [i64; 2]) -> f64 {
        MMA_OFFSETS
            .iter()
            .position(|o| *o == offset)
            .map(|i| self.0[i])
            .unwrap_or(0.0)
    }

    fn key(offset: [i64; 2]) -> String {
        format!("{},{}", offset[0], offset[1])
    }

    pub fn to_map(&self) -> BTreeMap<String, f64> {
        MMA_OFFSETS
            .iter()
            .zip(self.0)
            .map(|(o, w)| (Self::key(*o), w))
            .collect()
    }

    pub fn from_map(map: &BTreeMap<String, f64>) -> Result<Self> {
        let mut a = [0.0; 4];
        for (key, w) in map {
            let parsed: Vec<i64> = key
                .split(',')
                .map(|p| p.trim().parse::<i64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::InvalidParameter(format!("bad weight key {key:?}")))?;
            let pos = MMA_OFFSETS
                .iter()
                .position(|o| parsed.as_slice() == o.as_slice())
                .ok_or_else(|| {
                    Error::InvalidParameter(format!(
                        "weight key {key:?} is not one of -1,-1 / -1,1 / 1,1 / 1,-1"
                    ))
                })?;
            a[pos] = *w;
        }
        MmaWeights::new(a)
    }
}

/// Stencil of a max-moving average `X(t) = max_v w_v Z(t + v)`. The origin
/// always carries weight 1 and is stored first; zero weights are dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct Stencil {
    k: usize,
    offsets: Vec<Vec<i64>>,
    weights: Vec<f64>,
}

impl Stencil {
    pub fn new(k: usize, entries: &[(LatticePoint, f64)]) -> Result<Self> {
        if k == 0 {
            return invalid("stencil dimension must be >= 1");
        }
        let mut offsets = vec![vec![0; k]];
        let mut weights = vec![1.0];
        for (off, w) in entries {
            off.check_dim(k)?;
            if !(0.0..=1.0).contains(w) {
                return invalid(format!("stencil weight {w} at {off} outside [0,1]"));
            }
            if off.is_zero() || *w == 0.0 {
                continue;
            }
            if offsets.iter().any(|o| o == &off.0) {
                return invalid(format!("duplicate stencil offset {off}"));
            }
            offsets.push(off.0.clone());
            weights.push(*w);
        }
        Ok(Stencil { k, offsets, weights })
    }

    pub fn from_mma(a: &MmaWeights) -> Self {
        let entries: Vec<(LatticePoint, f64)> = MMA_OFFSETS
            .iter()
            .zip(a.0)
            .map(|(o, w)| (LatticePoint(o.to_vec()), w))
            .collect();
        Stencil::new(2, &entries).expect("validated weights")
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn offsets(&self) -> &[Vec<i64>] {
        &self.offsets
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Per-axis maximal `|v_l|`.
    pub fn radius(&self) -> Vec<i64> {
        (0..self.k)
            .map(|l| self.offsets.iter().map(|o| o[l].abs()).max().unwrap_or(0))
            .collect()
    }

    /// `1 + s`: the exponent in `P(X(0) <= u) = F_Z(u)^{1+s}`.
    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Weight `w_v` of an arbitrary offset (0 off the stencil).
    pub fn weight_at(&self, v: &[i64]) -> f64 {
        self.offsets
            .iter()
            .position(|o| o.as_slice() == v)
            .map(|i| self.weights[i])
            .unwrap_or(0.0)
    }
}

/// A user-supplied lattice function.
pub type LatticeFn = Arc<dyn Fn(&[i64]) -> f64 + Send + Sync>;

/// Variogram and variance function of a user-defined driving field.
#[derive(Clone)]
pub struct CustomVariogram {
    pub name: String,
    /// `gamma(t) = E(W(t) - W(0))^2`.
    pub gamma: LatticeFn,
    /// `sigma^2(t) = Var W(t)`.
    pub sigma2: LatticeFn,
}

impl fmt::Debug for CustomVariogram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomVariogram({})", self.name)
    }
}

impl PartialEq for CustomVariogram {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
    }
}

/// The Gaussian field `W` driving a Brown–Resnick field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum VariogramSpec {
    /// `W(t) = sum_l fBm_{H_l}(t_l)`, `gamma(t) = sum_l |t_l|^{2 H_l}`.
    AdditiveFBM { hurst: Vec<f64> },
    /// Stationary `W` with variance `sigma2` and covariance
    /// `sigma2 * exp(-|t| / range)` (Euclidean `|t|`).
    Stationary { sigma2: f64, range: f64 },
    #[serde(skip)]
    Custom(CustomVariogram),
}

impl VariogramSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            VariogramSpec::AdditiveFBM { hurst } => {
                if hurst.is_empty() {
                    return invalid("additive fBm needs at least one Hurst parameter");
                }
                for &h in hurst {
                    if !(h > 0.0 && h < 1.0) {
                        return invalid(format!("Hurst parameter {h} outside (0,1)"));
                    }
                }
                Ok(())
            }
            VariogramSpec::Stationary { sigma2, range } => {
                if !(*sigma2 >= 0.0 && sigma2.is_finite()) {
                    return invalid(format!("sigma2 must be finite and >= 0, got {sigma2}"));
                }
                if !(*range > 0.0 && range.is_finite()) {
                    return invalid(format!("range must be positive, got {range}"));
                }
                Ok(())
            }
            VariogramSpec::Custom(_) => Ok(()),
        }
    }

    /// Dimension fixed by the variogram, if any.
    pub fn dim(&self) -> Option<usize> {
        match self {
            VariogramSpec::AdditiveFBM { hurst } => Some(hurst.len()),
            _ => None,
        }
    }

    pub fn gamma(&self, t: &[i64]) -> f64 {
        match self {
            VariogramSpec::AdditiveFBM { hurst } => hurst
                .iter()
                .zip(t)
                .map(|(h, &x)| (x.abs() as f64).powf(2.0 * h))
                .sum(),
            VariogramSpec::Stationary { sigma2, range } => {
                2.0 * sigma2 * (1.0 - (-euclid(t) / range).exp())
            }
            VariogramSpec::Custom(c) => (c.gamma)(t),
        }
    }

    pub fn sigma2(&self, t: &[i64]) -> f64 {
        match self {
            VariogramSpec::AdditiveFBM { .. } => self.gamma(t),
            VariogramSpec::Stationary { sigma2, .. } => *sigma2,
            VariogramSpec::Custom(c) => (c.sigma2)(t),
        }
    }

    /// `Cov(W(s), W(t)) = (sigma^2(s) + sigma^2(t) - gamma(t - s)) / 2`.
    pub fn covariance(&self, s: &[i64], t: &[i64]) -> f64 {
        let d: Vec<i64> = t.iter().zip(s).map(|(a, b)| a - b).collect();
        0.5 * (self.sigma2(s) + self.sigma2(t) - self.gamma(&d))
    }
}

fn euclid(t: &[i64]) -> f64 {
    t.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
}

/// One component of a whole-field mixture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub model: ModelSpec,
}

/// An offset/weight pair of a general stencil.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StencilEntry {
    pub offset: LatticePoint,
    pub weight: f64,
}

/// A samplable stationary field. All variants have scalar values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant")]
pub enum ModelSpec {
    /// iid Fréchet(alpha) values.
    IIDFrechet { alpha: f64 },
    /// Max-moving average on `Z^2` over the four diagonal neighbours, keyed
    /// `"-1,-1"`, `"-1,1"`, `"1,1"`, `"1,-1"`, driven by Fréchet(1) noise.
    MaxMovingAverage { k: usize, weights: BTreeMap<String, f64> },
    /// Max-moving average over an arbitrary finite stencil.
    GeneralMaxMovingAverage { stencil: Vec<StencilEntry> },
    BrownResnick { variogram: VariogramSpec },
    /// The factorial-block pair construction laid along anti-diagonals.
    CounterexampleField { alpha: f64 },
    /// Draw one component per field, with the given probabilities.
    Mixture { components: Vec<MixtureComponent> },
}

impl ModelSpec {
    pub fn mma(a: [f64; 4]) -> Result<Self> {
        Ok(ModelSpec::MaxMovingAverage {
            k: 2,
            weights: MmaWeights::new(a)?.to_map(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::IIDFrechet { alpha } | ModelSpec::CounterexampleField { alpha } => {
                if !(*alpha > 0.0 && alpha.is_finite()) {
                    return invalid(format!("alpha must be positive, got {alpha}"));
                }
                Ok(())
            }
            ModelSpec::MaxMovingAverage { k, weights } => {
                if *k != 2 {
                    return invalid(format!("the diagonal max-moving average needs k = 2, got {k}"));
                }
                MmaWeights::from_map(weights).map(|_| ())
            }
            ModelSpec::GeneralMaxMovingAverage { .. } => self.stencil().map(|_| ()),
            ModelSpec::BrownResnick { variogram } => variogram.validate(),
            ModelSpec::Mixture { components } => {
                if components.is_empty() {
                    return invalid("mixture needs at least one component");
                }
                let mut total = 0.0;
                for c in components {
                    if !(0.0..=1.0).contains(&c.weight) {
                        return invalid(format!("mixture weight {} outside [0,1]", c.weight));
                    }
                    c.model.validate()?;
                    total += c.weight;
                }
                if (total - 1.0).abs() > 1e-9 {
                    return invalid(format!("mixture weights sum to {total}, not 1"));
                }
                let dims: Vec<usize> = components.iter().filter_map(|c| c.model.dim()).collect();
                if dims.windows(2).any(|w| w[0] != w[1]) {
                    return invalid("mixture components have different dimensions");
                }
                Ok(())
            }
        }
    }

    /// Lattice dimension required by the model, if it fixes one.
    pub fn dim(&self) -> Option<usize> {
        match self {
            ModelSpec::IIDFrechet { .. } => None,
            ModelSpec::MaxMovingAverage { k, .. } => Some(*k),
            ModelSpec::GeneralMaxMovingAverage { stencil } => stencil.first().map(|e| e.offset.dim()),
            ModelSpec::BrownResnick { variogram } => variogram.dim(),
            ModelSpec::CounterexampleField { .. } => Some(2),
            ModelSpec::Mixture { components } => components.iter().find_map(|c| c.model.dim()),
        }
    }

    /// Tail index of `||X(0)||`.
    pub fn alpha(&self) -> f64 {
        match self {
            ModelSpec::IIDFrechet { alpha } | ModelSpec::CounterexampleField { alpha } => *alpha,
            ModelSpec::Mixture { components } => components
                .first()
                .map(|c| c.model.alpha())
                .unwrap_or(1.0),
            _ => 1.0,
        }
    }

    /// The stencil of a max-moving-average model.
    pub fn stencil(&self) -> Result<Stencil> {
        match self {
            ModelSpec::MaxMovingAverage { weights, .. } => {
                Ok(Stencil::from_mma(&MmaWeights::from_map(weights)?))
            }
            ModelSpec::GeneralMaxMovingAverage { stencil } => {
                let k = stencil.first().map(|e| e.offset.dim()).unwrap_or(1);
                let entries: Vec<(LatticePoint, f64)> =
                    stencil.iter().map(|e| (e.offset.clone(), e.weight)).collect();
                Stencil::new(k, &entries)
            }
            _ => invalid("model is not a max-moving average"),
        }
    }

    /// Short human-readable tag.
    pub fn tag(&self) -> String {
        match self {
            ModelSpec::IIDFrechet { alpha } => format!("iid-frechet(alpha={alpha})"),
            ModelSpec::MaxMovingAverage { weights, .. } => {
                let a = MmaWeights::from_map(weights).map(|w| w.0).unwrap_or_default();
                format!("mma({},{},{},{})", a[0], a[1], a[2], a[3])
            }
            ModelSpec::GeneralMaxMovingAverage { stencil } => format!("mma-general({} terms)", stencil.len()),
            ModelSpec::BrownResnick { variogram } => match variogram {
                VariogramSpec::AdditiveFBM { hurst } => format!("brown-resnick(fbm {hurst:?})"),
                VariogramSpec::Stationary { sigma2, range } => {
                    format!("brown-resnick(stationary sigma2={sigma2} range={range})")
                }
                VariogramSpec::Custom(c) => format!("brown-resnick(custom {})", c.name),
            },
            ModelSpec::CounterexampleField { alpha } => format!("counterexample(alpha={alpha})"),
            ModelSpec::Mixture { components } => format!("mixture({} components)", components.len()),
        }
    }

    /// SHA-256 of the canonical JSON encoding; custom variograms hash their
    /// name instead.
    pub fn digest(&self) -> String {
        let text = serde_json::to_string(self).unwrap_or_else(|_| format!("custom:{}", self.tag()));
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: ModelSpec = serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    /// Named configurations used by the command line and the test suites.
    pub fn preset(name: &str) -> Result<Self> {
        let m = match name {
            "iid" => ModelSpec::IIDFrechet { alpha: 1.0 },
            "mma-default" => ModelSpec::mma([0.1, 0.7, 0.6, 0.1])?,
            "mma-second" => ModelSpec::mma([0.6, 0.2, 0.6, 0.1])?,
            "mma-mixture" => ModelSpec::Mixture {
                components: vec![
                    MixtureComponent {
                        weight: 0.5,
                        model: ModelSpec::mma([0.1, 0.7, 0.6, 0.1])?,
                    },
                    MixtureComponent {
                        weight: 0.5,
                        model: ModelSpec::mma([0.6, 0.2, 0.6, 0.1])?,
                    },
                ],
            },
            "br-fbm" => ModelSpec::BrownResnick {
                variogram: VariogramSpec::AdditiveFBM { hurst: vec![0.5, 0.5] },
            },
            "br-stationary" => ModelSpec::BrownResnick {
                variogram: VariogramSpec::Stationary { sigma2: 1.0, range: 2.0 },
            },
            "counterexample" => ModelSpec::CounterexampleField { alpha: 1.0 },
            other => {
                return invalid(format!(
                    "unknown model preset {other:?} (known: {})",
                    PRESETS.join(", ")
                ))
            }
        };
        Ok(m)
    }
}

pub const PRESETS: [&str; 7] = [
    "iid",
    "mma-default",
    "mma-second",
    "mma-mixture",
    "br-fbm",
    "br-stationary",
    "counterexample",
];
