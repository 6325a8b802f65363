use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use spatial_extremes::model::ModelSpec;
use spatial_extremes_cli::config::{resolve_model, Command, ExperimentConfig};
use spatial_extremes_cli::{run, Format};

/// Spatial extremal indices, tail fields and cluster statistics of
/// stationary regularly varying random fields.
#[derive(Parser)]
#[command(name = "spext", version)]
struct Cli {
    /// Seed of all random streams.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; output does not depend on it.
    #[arg(long, global = true, env = "SPEXT_THREADS")]
    threads: Option<usize>,
    /// Output file (default: standard output).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// TOML experiment configuration; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the effective configuration as TOML and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args, Default)]
struct Common {
    /// Preset name, `corrupted` (verify only), or a JSON model file.
    #[arg(long)]
    model: Option<String>,
    /// Window extents, comma separated.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<i64>>,
    /// Block extents, comma separated.
    #[arg(long, value_delimiter = ',')]
    r: Option<Vec<i64>>,
    /// Lag radius of tail-field samples.
    #[arg(long)]
    lags: Option<i64>,
    /// Truncation M of the Brown–Resnick block index.
    #[arg(long)]
    truncation: Option<i64>,
    #[arg(long)]
    tau: Option<f64>,
    /// Threshold quantile of tail-field estimation.
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    replicates: Option<u64>,
    #[arg(long)]
    n_mc: Option<u64>,
}

#[derive(Subcommand)]
enum Sub {
    /// Exact corner and classical indices of a diagonal max-moving average
    /// or a mixture of them.
    MmaTheta {
        /// Weights a_{-1,-1}, a_{-1,1}, a_{1,1}, a_{1,-1}.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        weights: Option<Vec<f64>>,
        /// Add Monte Carlo classical and run estimates.
        #[arg(long)]
        empirical: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Classical, block, run, tail-field and half-space estimates.
    MmaEmpirical {
        #[command(flatten)]
        common: Common,
    },
    /// Brown–Resnick block index over a range of truncations.
    BrTheta {
        /// Hurst parameters of an additive fBm variogram.
        #[arg(long, value_delimiter = ',')]
        hurst: Option<Vec<f64>>,
        #[command(flatten)]
        common: Common,
    },
    /// Block index over a square Hurst grid.
    BrFig1 {
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        #[command(flatten)]
        common: Common,
    },
    /// Brown–Resnick tail-field marginal law, closed form against Monte Carlo.
    BrTailcdf {
        /// Lags as `a,b`; repeat the flag for several.
        #[arg(long = "point", allow_hyphen_values = true)]
        points: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<f64>>,
        #[command(flatten)]
        common: Common,
    },
    /// Tail-field samples on a lag window.
    Tailfield {
        #[command(flatten)]
        common: Common,
    },
    /// Cluster Laplace functionals, empirical against the limit.
    ClusterLaplace {
        #[arg(long, value_delimiter = ',')]
        functions: Option<Vec<String>>,
        #[command(flatten)]
        common: Common,
    },
    /// Scaled box probabilities of the counterexample field.
    Counterexample {
        #[arg(long)]
        alpha: Option<f64>,
        /// Ranks as a list `20,21` or a range `20-41`.
        #[arg(long)]
        ranks: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Run a verification campaign; exits 1 if any check fails.
    Verify {
        /// pareto-root, change-of-time, rs-invariance or counterexample.
        campaign: String,
        #[command(flatten)]
        common: Common,
    },
}

impl Sub {
    fn kind(&self) -> Command {
        match self {
            Sub::MmaTheta { .. } => Command::MmaTheta,
            Sub::MmaEmpirical { .. } => Command::MmaEmpirical,
            Sub::BrTheta { .. } => Command::BrTheta,
            Sub::BrFig1 { .. } => Command::BrFig1,
            Sub::BrTailcdf { .. } => Command::BrTailcdf,
            Sub::Tailfield { .. } => Command::Tailfield,
            Sub::ClusterLaplace { .. } => Command::ClusterLaplace,
            Sub::Counterexample { .. } => Command::Counterexample,
            Sub::Verify { .. } => Command::Verify,
        }
    }

    fn common(&self) -> &Common {
        match self {
            Sub::MmaTheta { common, .. }
            | Sub::MmaEmpirical { common }
            | Sub::BrTheta { common, .. }
            | Sub::BrFig1 { common, .. }
            | Sub::BrTailcdf { common, .. }
            | Sub::Tailfield { common }
            | Sub::ClusterLaplace { common, .. }
            | Sub::Counterexample { common, .. }
            | Sub::Verify { common, .. } => common,
        }
    }
}

fn parse_ranks(s: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = s.split_once('-') {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        if a > b {
            bail!("empty rank range {s}");
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|x| Ok(x.trim().parse()?)).collect()
}

fn parse_point(s: &str) -> Result<Vec<i64>> {
    s.trim_matches(|c| c == '(' || c == ')')
        .split(',')
        .map(|x| x.trim().parse::<i64>().with_context(|| format!("bad lag {s:?}")))
        .collect()
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig> {
    let kind = cli.command.kind();
    let mut cfg = match &cli.config {
        Some(p) => {
            let c = ExperimentConfig::load(p)?;
            if c.command != kind {
                bail!("configuration is for {}, not {}", c.command.name(), kind.name());
            }
            c
        }
        None => ExperimentConfig::defaults(kind),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(p) = &cli.out {
        cfg.output = Some(p.clone());
    }
    if let Some(f) = cli.format {
        cfg.format = f;
    }
    let c = cli.command.common();
    if let Some(m) = &c.model {
        if m == "corrupted" {
            if kind != Command::Verify {
                bail!("the corrupted model is a verification control");
            }
            cfg.model = ModelSpec::preset("mma-default")?;
            cfg.extra.scale = 2.0;
        } else {
            cfg.model = resolve_model(m)?;
        }
    }
    let g = &mut cfg.geometry;
    if let Some(v) = &c.n {
        g.n = v.clone();
    }
    if let Some(v) = &c.r {
        g.r = v.clone();
    }
    if let Some(v) = c.lags {
        g.lags = v;
    }
    if let Some(v) = c.truncation {
        g.truncation = v;
    }
    let s = &mut cfg.statistics;
    if let Some(v) = c.tau {
        s.tau = v;
    }
    if let Some(v) = c.q {
        s.q = v;
    }
    if let Some(v) = c.replicates {
        s.n_replicates = v;
    }
    if let Some(v) = c.n_mc {
        s.n_mc = v;
    }
    match &cli.command {
        Sub::MmaTheta { weights, empirical, .. } => {
            if let Some(w) = weights {
                let a: [f64; 4] = w
                    .as_slice()
                    .try_into()
                    .map_err(|_| anyhow::anyhow!("need four weights, got {}", w.len()))?;
                cfg.model = ModelSpec::mma(a)?;
            }
            cfg.extra.empirical |= *empirical;
        }
        Sub::BrTheta { hurst: Some(h), .. } => {
            cfg.model = ModelSpec::BrownResnick {
                variogram: spatial_extremes::model::VariogramSpec::AdditiveFBM { hurst: h.clone() },
            };
        }
        Sub::BrFig1 { grid: Some(g), .. } => cfg.extra.hurst_grid = g.clone(),
        Sub::BrTailcdf { points, levels, .. } => {
            if !points.is_empty() {
                cfg.extra.points = points.iter().map(|p| parse_point(p)).collect::<Result<_>>()?;
            }
            if let Some(l) = levels {
                cfg.extra.levels = l.clone();
            }
        }
        Sub::ClusterLaplace { functions: Some(f), .. } => cfg.extra.functions = f.clone(),
        Sub::Counterexample { alpha, ranks, .. } => {
            if let Some(a) = alpha {
                cfg.model = ModelSpec::CounterexampleField { alpha: *a };
            }
            if let Some(r) = ranks {
                cfg.extra.ranks = parse_ranks(r)?;
            }
        }
        Sub::Verify { campaign, .. } => cfg.extra.campaign = campaign.clone(),
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

enum Failure {
    Input(anyhow::Error),
    Verdict,
}

fn execute(cli: &Cli) -> std::result::Result<(), Failure> {
    let cfg = build_config(cli).map_err(Failure::Input)?;
    if cli.print_config {
        let text = cfg.to_toml().map_err(Failure::Input)?;
        print!("{text}");
        return Ok(());
    }
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::Input(e.into()))?;
    }
    let outcome = run(&cfg).map_err(Failure::Input)?;
    let written = match &cfg.output {
        Some(p) => File::create(p)
            .with_context(|| format!("creating {}", p.display()))
            .and_then(|f| {
                let mut w = BufWriter::new(f);
                outcome.table.write(cfg.format, &mut w)?;
                Ok(w.flush()?)
            }),
        None => {
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            outcome.table.write(cfg.format, &mut w)
        }
    };
    written.map_err(Failure::Input)?;
    if outcome.passed {
        Ok(())
    } else {
        Err(Failure::Verdict)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verdict) => {
            eprintln!("verification failed");
            ExitCode::from(1)
        }
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
