//! Experiment configuration, readable from and writable to TOML.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use spatial_extremes::model::ModelSpec;

use crate::table::Format;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    MmaTheta,
    MmaEmpirical,
    BrTheta,
    BrFig1,
    BrTailcdf,
    Tailfield,
    ClusterLaplace,
    Counterexample,
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::MmaTheta => "mma-theta",
            Command::MmaEmpirical => "mma-empirical",
            Command::BrTheta => "br-theta",
            Command::BrFig1 => "br-fig1",
            Command::BrTailcdf => "br-tailcdf",
            Command::Tailfield => "tailfield",
            Command::ClusterLaplace => "cluster-laplace",
            Command::Counterexample => "counterexample",
            Command::Verify => "verify",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    /// Observation window `[1, n]`.
    pub n: Vec<i64>,
    /// Block `[1, r]`.
    pub r: Vec<i64>,
    /// Lag window `[-lags, lags]^k` of tail-field samples.
    pub lags: i64,
    /// Truncation `M` of the Brown–Resnick block index.
    pub truncation: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Statistics {
    pub tau: f64,
    /// Threshold quantile of tail-field estimation.
    pub q: f64,
    /// Replicates of the direct Monte Carlo estimators (for `tailfield`, the
    /// virtual number of fields thresholded at `q`).
    pub n_replicates: u64,
    /// Draws of the limit-object estimators (retained exceedances for
    /// tail-based methods).
    pub n_mc: u64,
}

/// Command-specific settings; unused ones keep their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Extra {
    /// `mma-theta`: also run the Monte Carlo estimators.
    pub empirical: bool,
    /// `br-fig1`: Hurst values on each axis.
    pub hurst_grid: Vec<f64>,
    /// `br-tailcdf`: lags and levels, crossed.
    pub points: Vec<Vec<i64>>,
    pub levels: Vec<f64>,
    /// `cluster-laplace`: test functions.
    pub functions: Vec<String>,
    /// `counterexample`: factorial ranks.
    pub ranks: Vec<u64>,
    /// `verify`: campaign name and spectral scale (1 except for the
    /// corrupted control).
    pub campaign: String,
    pub scale: f64,
}

impl Default for Extra {
    fn default() -> Self {
        Extra {
            empirical: false,
            hurst_grid: vec![0.25, 0.5, 0.75],
            points: vec![vec![1, 0], vec![2, 2], vec![3, 1]],
            levels: vec![0.5, 1.0, 2.0],
            functions: ["zero", "ind1", "ind2", "ramp1", "ramp05"].map(String::from).to_vec(),
            ranks: (20..=41).collect(),
            campaign: String::new(),
            scale: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub format: Format,
    #[serde(default)]
    pub extra: Extra,
    pub geometry: Geometry,
    pub statistics: Statistics,
    pub model: ModelSpec,
}

impl ExperimentConfig {
    /// Desk-scale defaults of a command; each finishes in seconds to a few
    /// minutes on one core.
    pub fn defaults(command: Command) -> Self {
        let preset = match command {
            Command::BrTheta | Command::BrFig1 | Command::BrTailcdf => "br-fbm",
            Command::Counterexample => "counterexample",
            Command::Verify => "iid",
            _ => "mma-default",
        };
        let mut geometry = Geometry {
            n: vec![400, 400],
            r: vec![20, 20],
            lags: 6,
            truncation: 50,
        };
        let mut statistics = Statistics {
            tau: 1.0,
            q: 1.0 - 1e-14,
            n_replicates: 1000,
            n_mc: 4000,
        };
        match command {
            Command::BrTheta | Command::BrFig1 => statistics.n_mc = 20_000,
            Command::BrTailcdf => statistics.n_mc = 100_000,
            Command::Tailfield => {
                geometry.lags = 2;
                statistics.q = 0.999;
                statistics.n_replicates = 1_000_000;
            }
            Command::ClusterLaplace => {
                geometry.n = vec![1000, 1000];
                geometry.r = vec![200, 200];
                statistics.n_replicates = 3000;
            }
            Command::Counterexample => statistics.n_replicates = 20_000,
            _ => {}
        }
        ExperimentConfig {
            command,
            seed: 1,
            output: None,
            format: Format::Csv,
            extra: Extra::default(),
            geometry,
            statistics,
            model: ModelSpec::preset(preset).expect("preset exists"),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).context("serializing configuration")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: ExperimentConfig = toml::from_str(text).context("parsing configuration")?;
        c.model.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let g = &self.geometry;
        let s = &self.statistics;
        if g.n.iter().chain(&g.r).any(|&x| x < 1) {
            bail!("window and block extents must be positive");
        }
        if g.lags < 0 || g.truncation < 1 {
            bail!("lags must be >= 0 and truncation >= 1");
        }
        if !(s.tau > 0.0 && s.tau.is_finite()) {
            bail!("tau must be positive, got {}", s.tau);
        }
        if !(s.q > 0.0 && s.q < 1.0) {
            bail!("q must lie in (0,1), got {}", s.q);
        }
        if !(self.extra.scale > 0.0 && self.extra.scale.is_finite()) {
            bail!("scale must be positive");
        }
        Ok(())
    }
}

/// A model given by preset name or as a path to a JSON model file.
pub fn resolve_model(name: &str) -> Result<ModelSpec> {
    if name.ends_with(".json") {
        let text = std::fs::read_to_string(name).with_context(|| format!("reading {name}"))?;
        return Ok(ModelSpec::from_json(&text)?);
    }
    Ok(ModelSpec::preset(name)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL: [Command; 9] = [
        Command::MmaTheta,
        Command::MmaEmpirical,
        Command::BrTheta,
        Command::BrFig1,
        Command::BrTailcdf,
        Command::Tailfield,
        Command::ClusterLaplace,
        Command::Counterexample,
        Command::Verify,
    ];

    #[test]
    fn toml_round_trip() {
        for c in ALL {
            let mut cfg = ExperimentConfig::defaults(c);
            cfg.output = Some("out.csv".into());
            let text = cfg.to_toml().unwrap();
            assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg, "{}", c.name());
            cfg.validate().unwrap();
        }
        let mut cfg = ExperimentConfig::defaults(Command::MmaTheta);
        cfg.model = ModelSpec::preset("mma-mixture").unwrap();
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_input() {
        let text = ExperimentConfig::defaults(Command::Tailfield).to_toml().unwrap();
        assert!(ExperimentConfig::from_toml(&text.replace("seed = 1", "seed = 1\nbogus = 2")).is_err());
        let mut cfg = ExperimentConfig::defaults(Command::Tailfield);
        cfg.statistics.q = 1.0;
        assert!(cfg.validate().is_err());
        assert!(resolve_model("nope").is_err());
    }
}
