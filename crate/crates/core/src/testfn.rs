//! Test functions: pointwise functions `f` of `||x||` for Laplace
//! functionals, and bounded functionals `g` of a whole field.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::lattice::LatticePoint;

/// A nonnegative, piecewise-linear function of the norm `r = ||x||`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PointFunction {
    Zero,
    /// `height * 1{r > level}`.
    Step { level: f64, height: f64 },
    /// `height * min(1, (r - start)^+ / width)`.
    Ramp { start: f64, width: f64, height: f64 },
}

/// Identifiers of the fixed catalog, see [`PointFunction::catalog`].
pub const CATALOG: [&str; 4] = ["ind1", "ind2", "ramp1", "ramp05"];

impl PointFunction {
    /// `ind1 = 1{r>1}`, `ind2 = 1{r>2}`, `ramp1 = min(1, (r-1)^+)`,
    /// `ramp05 = min(1, (r-0.5)^+/1.5) / 2`, plus `zero`.
    pub fn catalog(id: &str) -> Result<Self> {
        Ok(match id {
            "zero" => PointFunction::Zero,
            "ind1" => PointFunction::Step { level: 1.0, height: 1.0 },
            "ind2" => PointFunction::Step { level: 2.0, height: 1.0 },
            "ramp1" => PointFunction::Ramp {
                start: 1.0,
                width: 1.0,
                height: 1.0,
            },
            "ramp05" => PointFunction::Ramp {
                start: 0.5,
                width: 1.5,
                height: 0.5,
            },
            other => return invalid(format!("unknown test function {other:?}")),
        })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PointFunction::Zero => Ok(()),
            PointFunction::Step { level, height } => {
                if !(level > 0.0 && height >= 0.0 && height.is_finite()) {
                    return invalid("step needs level > 0 and finite height >= 0");
                }
                Ok(())
            }
            PointFunction::Ramp { start, width, height } => {
                if !(start > 0.0 && width > 0.0 && height >= 0.0 && height.is_finite()) {
                    return invalid("ramp needs start > 0, width > 0 and finite height >= 0");
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            PointFunction::Zero => 0.0,
            PointFunction::Step { level, height } => {
                if r > level {
                    height
                } else {
                    0.0
                }
            }
            PointFunction::Ramp { start, width, height } => height * ((r - start).max(0.0) / width).min(1.0),
        }
    }

    /// `v` such that `f` vanishes on `r <= v` (infinite for `Zero`).
    pub fn vanishes_below(&self) -> f64 {
        match *self {
            PointFunction::Zero => f64::INFINITY,
            PointFunction::Step { level, .. } => level,
            PointFunction::Ramp { start, .. } => start,
        }
    }

    /// `c * f`.
    pub fn scaled(&self, c: f64) -> Self {
        match *self {
            PointFunction::Zero => PointFunction::Zero,
            PointFunction::Step { level, height } => PointFunction::Step {
                level,
                height: c * height,
            },
            PointFunction::Ramp { start, width, height } => PointFunction::Ramp {
                start,
                width,
                height: c * height,
            },
        }
    }
}

/// A bounded functional `g` of a field `x`, evaluated through the norms
/// `||x(t)||` at a finite set of lags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    Constant { value: f64 },
    /// `1{max_{t in lags} ||x(t)|| > level}`.
    IndicatorExceed { level: f64, lags: Vec<LatticePoint> },
    /// `exp(-sum_{t in lags} f(||x(t)||))` for a catalog function `f`.
    BoundedContinuous { id: String, lags: Vec<LatticePoint> },
}

impl TestFunction {
    pub fn one() -> Self {
        TestFunction::Constant { value: 1.0 }
    }

    pub fn lags(&self) -> &[LatticePoint] {
        match self {
            TestFunction::Constant { .. } => &[],
            TestFunction::IndicatorExceed { lags, .. } | TestFunction::BoundedContinuous { lags, .. } => lags,
        }
    }

    pub fn name(&self) -> String {
        match self {
            TestFunction::Constant { value } => format!("const({value})"),
            TestFunction::IndicatorExceed { level, lags } => format!("exceed({level};{} lags)", lags.len()),
            TestFunction::BoundedContinuous { id, lags } => format!("laplace-{id}({} lags)", lags.len()),
        }
    }

    /// Evaluates `g` given the norm at each of its lags (in order).
    pub fn eval_norms(&self, norms: &[f64]) -> Result<f64> {
        Ok(match self {
            TestFunction::Constant { value } => *value,
            TestFunction::IndicatorExceed { level, .. } => {
                if norms.iter().any(|&r| r > *level) {
                    1.0
                } else {
                    0.0
                }
            }
            TestFunction::BoundedContinuous { id, .. } => {
                let f = PointFunction::catalog(id)?;
                (-norms.iter().map(|&r| f.eval(r)).sum::<f64>()).exp()
            }
        })
    }
}
