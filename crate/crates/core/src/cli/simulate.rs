use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use super::Common;
use crate::basis::BasisSpec;
use crate::dr::SecondStage;
use crate::error::{Error, Result};
use crate::io::{write_file, write_json, write_observations};
use crate::nuisance::{NoiseScale, NuisanceConfig};
use crate::rng::derive_seed;
use crate::simulate::runner::{write_coverage_csv, write_kappa_csv, PanelRow};
use crate::simulate::{
    coverage_panel, kappa_panel, rate_bench, run_replications, AdversarialParams, EstimatorSpec, ExperimentConfig,
    NuisanceSource, RateBenchConfig, SetupSpec,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Noise {
    /// Second argument of the injected Gaussian is a covariance.
    Variance,
    /// Second argument is a standard deviation.
    Sd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Nuisances {
    /// Exact (1b, adversarial) or noise-injected (1a) truth; every row enters the second stage.
    Dgp,
    /// Local-polynomial fits on half the sample.
    Fitted,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// 1a, 1b or adversarial.
    #[arg(long)]
    pub setup: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Grid points per axis.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Noise orders for setup 1a.
    #[arg(long, value_delimiter = ',')]
    pub c: Option<Vec<f64>>,
    /// Effect scalings for setup 1b.
    #[arg(long, value_delimiter = ',')]
    pub kappa: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub noise: Option<Noise>,
    #[arg(long, value_enum)]
    pub nuisances: Option<Nuisances>,
    /// Second-stage basis for setups 1a and 1b.
    #[arg(long)]
    pub basis: Option<String>,
    /// Confidence level for the inclusion check (setup 1a).
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub n_boot: Option<usize>,
    /// Write the first replication's data as CSV.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub export_data: Option<bool>,
    /// Adversarial dimension.
    #[arg(long)]
    pub d: Option<usize>,
    /// Adversarial cube pairs.
    #[arg(long)]
    pub m: Option<usize>,
    /// Adversarial fine cells per cube (a perfect d-th power).
    #[arg(long)]
    pub k: Option<usize>,
    /// Adversarial cube half-width.
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Propensity smoothness of the adversarial fluctuation.
    #[arg(long)]
    pub smooth_alpha: Option<f64>,
    /// Outcome smoothness of the adversarial fluctuation.
    #[arg(long)]
    pub smooth_beta: Option<f64>,
    /// Adversarial level.
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    /// Second-stage bandwidth for the adversarial setup.
    #[arg(long)]
    pub bandwidth: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateSettings {
    pub setup: String,
    pub n: usize,
    pub reps: usize,
    pub grid: usize,
    pub c: Vec<f64>,
    pub kappa: Vec<f64>,
    pub noise: Noise,
    pub nuisances: Nuisances,
    pub basis: String,
    pub alpha: f64,
    pub n_boot: usize,
    pub export_data: bool,
    pub d: usize,
    pub m: usize,
    pub k: usize,
    pub h: f64,
    pub gamma: f64,
    pub smooth_alpha: f64,
    pub smooth_beta: f64,
    pub theta: f64,
    pub bandwidth: Option<f64>,
}

impl Default for SimulateSettings {
    fn default() -> Self {
        Self {
            setup: "1a".into(),
            n: 1000,
            reps: 100,
            grid: 50,
            c: vec![0.0, 2.0, 3.0, 3.8, 4.0, 5.0],
            kappa: vec![0.1, 0.5, 1.0, 5.0, 10.0],
            noise: Noise::Variance,
            nuisances: Nuisances::Dgp,
            basis: "1,x1,x1^2,x2".into(),
            alpha: 0.05,
            n_boot: 2000,
            export_data: false,
            d: 1,
            m: 2,
            k: 1,
            h: 0.04,
            gamma: 1.0,
            smooth_alpha: 1.0,
            smooth_beta: 1.0,
            theta: 0.0,
            bandwidth: None,
        }
    }
}

fn nuisance_source(s: &SimulateSettings) -> NuisanceSource {
    match s.nuisances {
        Nuisances::Dgp => NuisanceSource::Dgp,
        Nuisances::Fitted => NuisanceSource::Fitted { config: NuisanceConfig::default(), frac_d: 0.5 },
    }
}

fn export(common: &Common, cfg: &ExperimentConfig, name: &str) -> Result<()> {
    // same seed as replication 0
    let (data, _, _) = cfg.setup.generate(cfg.n, derive_seed(cfg.seed, "replication", 0))?;
    write_file(&common.out.join(name), |w| write_observations(&data, w))
}

fn write_panel(common: &Common, rows: &[PanelRow], stem: &str) -> Result<()> {
    for (v, r) in rows {
        r.write_files(&common.out, &format!("{stem}{v}"))?;
    }
    Ok(())
}

pub(super) fn run(common: &Common, s: &SimulateSettings) -> Result<()> {
    let base = |setup: SetupSpec, estimator: EstimatorSpec, alpha: Option<f64>| ExperimentConfig {
        setup,
        estimator,
        n: s.n,
        reps: s.reps,
        grid_resolution: s.grid,
        alpha,
        n_boot: s.n_boot,
        seed: common.seed,
    };
    match s.setup.as_str() {
        "1a" => {
            if s.c.is_empty() {
                return Err(Error::Config("--c needs at least one value".into()));
            }
            let noise = match s.noise {
                Noise::Variance => NoiseScale::Variance,
                Noise::Sd => NoiseScale::StdDev,
            };
            let stage = SecondStage::basis(BasisSpec::parse(2, &s.basis)?);
            let cfg = base(
                SetupSpec::OneA { c: s.c[0], noise },
                EstimatorSpec::Dr { stage, nuisances: nuisance_source(s) },
                Some(s.alpha),
            );
            let rows = coverage_panel(&cfg, &s.c)?;
            write_panel(common, &rows, "setup_1a_c")?;
            write_file(&common.out.join("coverage_vs_c.csv"), |w| write_coverage_csv(&rows, w))?;
            if s.export_data {
                export(common, &cfg, "data_1a.csv")?;
            }
        }
        "1b" => {
            if s.kappa.is_empty() {
                return Err(Error::Config("--kappa needs at least one value".into()));
            }
            let stage = SecondStage::basis(BasisSpec::parse(2, &s.basis)?);
            let cfg = base(
                SetupSpec::OneB { kappa: s.kappa[0] },
                EstimatorSpec::Dr { stage, nuisances: nuisance_source(s) },
                None,
            );
            let rows = kappa_panel(&cfg, &s.kappa)?;
            write_panel(common, &rows, "setup_1b_kappa")?;
            write_file(&common.out.join("risk_vs_kappa.csv"), |w| write_kappa_csv(&rows, w))?;
            if s.export_data {
                export(common, &cfg, "data_1b.csv")?;
            }
        }
        "adversarial" => {
            let params = AdversarialParams::new(s.d, s.m, s.k, s.h, s.gamma, s.smooth_alpha, s.smooth_beta, s.theta);
            params.validate()?;
            let stage = match s.bandwidth {
                Some(bw) => SecondStage::LocalPoly { bandwidth: bw, degree: s.gamma.floor() as u32 },
                None => SecondStage::local_poly_for_smoothness(s.gamma, s.d, s.n, 1.0),
            };
            let cfg =
                base(SetupSpec::Adversarial(params), EstimatorSpec::Dr { stage, nuisances: nuisance_source(s) }, None);
            let report = run_replications(&cfg)?;
            report.write_files(&common.out, "adversarial")?;
            if s.export_data {
                export(common, &cfg, "data_adversarial.csv")?;
            }
        }
        other => return Err(Error::Config(format!("unknown setup `{other}` (expected 1a, 1b or adversarial)"))),
    }
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct RateBenchArgs {
    /// Sample sizes.
    #[arg(long, value_delimiter = ',')]
    pub ns: Option<Vec<usize>>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Constant in h = const * n^{-1/5}.
    #[arg(long)]
    pub bandwidth_const: Option<f64>,
    /// Grid points.
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct RateBenchSettings {
    pub ns: Vec<usize>,
    pub reps: usize,
    pub bandwidth_const: f64,
    pub grid: usize,
}

impl Default for RateBenchSettings {
    fn default() -> Self {
        let d = RateBenchConfig::default();
        Self { ns: d.ns, reps: d.reps, bandwidth_const: d.bandwidth_const, grid: d.grid_resolution }
    }
}

pub(super) fn run_rate(common: &Common, s: &RateBenchSettings) -> Result<()> {
    let cfg = RateBenchConfig {
        ns: s.ns.clone(),
        reps: s.reps,
        bandwidth_const: s.bandwidth_const,
        grid_resolution: s.grid,
        seed: common.seed,
    };
    let report = rate_bench(&cfg)?;
    write_file(&common.out.join("rate.csv"), |w| report.write_csv(w))?;
    write_json(&common.out.join("rate_summary.json"), &report)?;
    log::info!("log-log slope {:.3}", report.slope);
    Ok(())
}
