use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::Common;
use crate::basis::BasisSpec;
use crate::dr::{dr_fit, CateSurface, SecondStage};
use crate::error::{Error, Result};
use crate::inference::{confidence_sets, dr_band};
use crate::io::{read_observations_file, write_confidence_sets, write_file, write_json, write_mask, write_surface};
use crate::lpr::{select_tuning, LprLearner, UStatMode};
use crate::model::{threshold, EvalGrid, ObservationSet, SmoothnessConfig};
use crate::nuisance::{fit_nuisances, split_sample, BandwidthRule, Fold, NuisanceConfig, Provenance, RegressorConfig};
use crate::rng::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dr,
    Lpr,
}

#[derive(Debug, Args, Serialize)]
pub struct EstimateArgs {
    /// Observations CSV with header y,a,x1..xd.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    /// Grid points per axis.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Second-stage basis such as "1,x1,x1^2,x2"; repeat to let
    /// leave-one-out error choose.
    #[arg(long)]
    pub basis: Option<Vec<String>>,
    /// Local-polynomial second stage with this bandwidth instead of a basis.
    #[arg(long)]
    pub bandwidth: Option<f64>,
    #[arg(long)]
    pub degree: Option<u32>,
    /// Share of rows used to fit the nuisances.
    #[arg(long)]
    pub frac_d: Option<f64>,
    /// Swap the folds and average the two fits.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub cross_fit: Option<bool>,
    /// Degree of the local-polynomial nuisance regressions.
    #[arg(long)]
    pub nuisance_degree: Option<u32>,
    /// Propensity clipping level.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Effect smoothness near the level (lpr).
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Effect smoothness away from the level (lpr, defaults to gamma).
    #[arg(long)]
    pub gamma_prime: Option<f64>,
    /// Average nuisance smoothness (lpr).
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    /// Multiplier on the tuned bandwidth (lpr, defaults to the widest covariate range).
    #[arg(long)]
    pub h_scale: Option<f64>,
    /// Cap on the nuisance-basis size (lpr).
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Sample this many in-window pairs per point instead of all of them (lpr).
    #[arg(long)]
    pub pairs: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub n_boot: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimateSettings {
    pub input: Option<PathBuf>,
    pub method: Method,
    pub theta: f64,
    pub grid: usize,
    pub basis: Option<Vec<String>>,
    pub bandwidth: Option<f64>,
    pub degree: u32,
    pub frac_d: f64,
    pub cross_fit: bool,
    pub nuisance_degree: u32,
    pub epsilon: f64,
    pub gamma: f64,
    pub gamma_prime: Option<f64>,
    pub s: f64,
    pub eta: f64,
    pub h_scale: Option<f64>,
    pub k_max: usize,
    pub pairs: Option<usize>,
    pub alpha: f64,
    pub n_boot: usize,
}

impl Default for EstimateSettings {
    fn default() -> Self {
        Self {
            input: None,
            method: Method::Dr,
            theta: 0.0,
            grid: 50,
            basis: None,
            bandwidth: None,
            degree: 1,
            frac_d: 0.5,
            cross_fit: false,
            nuisance_degree: 1,
            epsilon: crate::nuisance::DEFAULT_EPSILON,
            gamma: 2.0,
            gamma_prime: None,
            s: 1.0,
            eta: 0.1,
            h_scale: None,
            k_max: 16,
            pairs: None,
            alpha: 0.05,
            n_boot: 2000,
        }
    }
}

/// Bounding box of the covariates.
fn data_bounds(data: &ObservationSet) -> Result<Vec<(f64, f64)>> {
    let mut b = vec![(f64::INFINITY, f64::NEG_INFINITY); data.dim()];
    for x in data.x().rows() {
        for (k, &v) in x.iter().enumerate() {
            b[k] = (b[k].0.min(v), b[k].1.max(v));
        }
    }
    if let Some(k) = b.iter().position(|&(lo, hi)| lo >= hi) {
        return Err(Error::Config(format!("covariate x{} is constant", k + 1)));
    }
    Ok(b)
}

fn nuisance_config(s: &EstimateSettings, fit_density: bool) -> NuisanceConfig {
    let reg =
        RegressorConfig { degree: s.nuisance_degree, bandwidth: BandwidthRule::Loocv(Vec::new()), epsilon: s.epsilon };
    NuisanceConfig { propensity: reg.clone(), outcome: reg, epsilon: s.epsilon, fit_density }
}

fn second_stage(s: &EstimateSettings, d: usize) -> Result<SecondStage> {
    if let Some(bw) = s.bandwidth {
        if s.basis.is_some() {
            return Err(Error::Config("give either --basis or --bandwidth, not both".into()));
        }
        return Ok(SecondStage::LocalPoly { bandwidth: bw, degree: s.degree });
    }
    let candidates = match &s.basis {
        Some(list) => list.iter().map(|b| BasisSpec::parse(d, b)).collect::<Result<Vec<_>>>()?,
        None => (1..=3).map(|deg| BasisSpec::polynomial(d, deg)).collect(),
    };
    Ok(SecondStage::Basis { candidates })
}

fn check(s: &EstimateSettings) -> Result<()> {
    if !s.theta.is_finite() {
        return Err(Error::Config(format!("theta must be finite, got {}", s.theta)));
    }
    if !(s.alpha > 0.0 && s.alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", s.alpha)));
    }
    if let Some(p) = &s.input {
        if !p.is_file() {
            return Err(Error::Config(format!("input file {} does not exist", p.display())));
        }
    }
    Ok(())
}

pub(super) fn run(common: &Common, s: &EstimateSettings, infer: bool) -> Result<()> {
    check(s)?;
    let input = s.input.as_ref().ok_or_else(|| Error::Config("--input is required".into()))?;
    let data = read_observations_file(input)?;
    let grid = Arc::new(EvalGrid::new(data_bounds(&data)?, s.grid)?);
    let plan = split_sample(data.len(), derive_seed(common.seed, "split", 0), s.frac_d)?;
    let out = &common.out;
    let mut meta = json!({
        "command": if infer { "infer" } else { "estimate" },
        "settings": s,
        "seed": common.seed,
        "n": data.len(),
        "d": data.dim(),
        "theta": s.theta,
        "grid": { "bounds": grid.bounds(), "resolution": grid.resolution() },
    });

    let surface = match (s.method, infer) {
        (Method::Dr, _) => {
            let learner = Arc::new(dr_fit(
                &data,
                &plan,
                &nuisance_config(s, false),
                &second_stage(s, data.dim())?,
                None,
                s.cross_fit,
            )?);
            let surface = learner.surface(&grid)?;
            if infer {
                let (surface, band) =
                    dr_band(&learner, surface, s.alpha, s.n_boot, derive_seed(common.seed, "bootstrap", 0))?;
                let sets = confidence_sets(&surface, s.theta, &band)?;
                write_file(&out.join("confidence_sets.csv"), |w| write_confidence_sets(&sets, w))?;
                write_json(
                    &out.join("band.json"),
                    &json!({
                        "band": band.summary(),
                        "theta": s.theta,
                        "lower_count": sets.c_lower.count(),
                        "plug_in_count": sets.plug_in.count(),
                        "upper_count": sets.c_upper.count(),
                    }),
                )?;
                surface
            } else {
                surface
            }
        }
        (Method::Lpr, true) => return Err(Error::Config("infer supports --method dr only".into())),
        (Method::Lpr, false) => {
            let (surface, diags) = fit_lpr(common, s, &data, &plan, &grid, &mut meta)?;
            write_json(&out.join("lpr_diagnostics.json"), &diags)?;
            surface
        }
    };
    meta["estimator"] = json!(surface.meta.estimator);
    meta["tuning"] = json!(surface.meta.tuning);

    let mask = threshold(&grid, &surface.values, s.theta)?;
    write_file(&out.join("surface.csv"), |w| write_surface(&surface, w))?;
    write_file(&out.join("mask.csv"), |w| write_mask(&mask, w))?;
    write_json(&out.join("meta.json"), &meta)?;
    log::info!("{} of {} grid points above {}", mask.count(), grid.len(), s.theta);
    Ok(())
}

fn fit_lpr(
    common: &Common,
    s: &EstimateSettings,
    data: &ObservationSet,
    plan: &crate::nuisance::SplitPlan,
    grid: &Arc<EvalGrid>,
    meta: &mut serde_json::Value,
) -> Result<(CateSurface, Vec<crate::lpr::PointDiagnostics>)> {
    let smooth = SmoothnessConfig::new(s.gamma, s.gamma_prime.unwrap_or(s.gamma), s.s, s.s, s.eta, 1.0)?;
    let d_rows = plan.indices(Fold::D);
    let z = data.subset(&plan.indices(Fold::Z));
    let nuis = fit_nuisances(
        data,
        &d_rows,
        &nuisance_config(s, true),
        Provenance::Fitted { split_seed: plan.seed, fold: Fold::D },
    )?;
    let mut tuning = select_tuning(&smooth, data.dim(), z.len())?;
    // the tuned h lives on the unit cube
    let spread = grid.bounds().iter().map(|&(lo, hi)| hi - lo).fold(0.0, f64::max);
    let h_scale = s.h_scale.unwrap_or(spread);
    meta["lpr"] =
        json!({ "h_unit": tuning.h, "h_scale": h_scale, "k_tuned": tuning.k, "k_max": s.k_max, "smoothness": smooth });
    tuning.h *= h_scale;
    tuning.k = tuning.k.min(s.k_max);
    let mode = match s.pairs {
        Some(pairs) => UStatMode::Incomplete { pairs, seed: derive_seed(common.seed, "pairs", 0) },
        None => UStatMode::Complete,
    };
    let learner = Arc::new(LprLearner::new(&z, &nuis, tuning, s.gamma.floor() as u32)?);
    learner.surface(grid, mode)
}
