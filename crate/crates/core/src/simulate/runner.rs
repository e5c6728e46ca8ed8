use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dr::{dr_fit, dr_fit_with_nuisances, SecondStage};
use crate::error::{Error, Result};
use crate::inference::{check_inclusions, confidence_sets, dr_band};
use crate::lpr::{select_tuning, LprLearner, UStatMode};
use crate::model::{least_squares_line, loss_d_delta, loss_d_h, threshold, ObservationSet, SmoothnessConfig};
use crate::nuisance::{split_sample, NoiseScale, NuisanceConfig, NuisanceSet, DEFAULT_EPSILON};
use crate::rng::derive_seed;
use crate::simulate::adversarial::{gen_adversarial, AdversarialParams};
use crate::simulate::setups::{gen_rate_1d, gen_setup_1a, gen_setup_1b, DgpTruth};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetupSpec {
    /// Benchmark DGP with oracle nuisances perturbed at order `n^{-1/c}`.
    OneA {
        c: f64,
        noise: NoiseScale,
    },
    /// Benchmark DGP with the effect scaled by `kappa` and exact nuisances.
    OneB {
        kappa: f64,
    },
    Adversarial(AdversarialParams),
    /// One-dimensional quadratic effect with two level crossings.
    Rate1d,
}

impl SetupSpec {
    /// Data, truth, and the nuisances the DGP hands to the estimator.
    pub fn generate(&self, n: usize, seed: u64) -> Result<(ObservationSet, DgpTruth, NuisanceSet)> {
        match self {
            SetupSpec::OneA { c, noise } => gen_setup_1a(n, *c, seed, *noise),
            SetupSpec::OneB { kappa } => {
                let (d, t) = gen_setup_1b(n, *kappa, seed)?;
                let nuis = t.nuisances(DEFAULT_EPSILON)?;
                Ok((d, t, nuis))
            }
            SetupSpec::Adversarial(p) => {
                let (d, t) = gen_adversarial(p, n, seed)?;
                let nuis = t.nuisances(DEFAULT_EPSILON)?;
                Ok((d, t, nuis))
            }
            SetupSpec::Rate1d => {
                let (d, t) = gen_rate_1d(n, seed)?;
                let nuis = t.nuisances(DEFAULT_EPSILON)?;
                Ok((d, t, nuis))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NuisanceSource {
    /// Whatever the setup provides (exact or perturbed truth); the second
    /// stage then uses every row.
    Dgp,
    /// Fit on one fold, second stage on the other.
    Fitted { config: NuisanceConfig, frac_d: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorSpec {
    /// The true effect itself.
    Truth,
    Dr {
        stage: SecondStage,
        nuisances: NuisanceSource,
    },
    Lpr {
        smoothness: SmoothnessConfig,
        h_scale: f64,
        k_max: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub setup: SetupSpec,
    pub estimator: EstimatorSpec,
    pub n: usize,
    pub reps: usize,
    pub grid_resolution: usize,
    /// Compute confidence sets at this level (DR-Learner only).
    pub alpha: Option<f64>,
    pub n_boot: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub metrics: Vec<(String, f64)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub se: f64,
    pub count: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub records: Vec<RepRecord>,
    pub failures: Vec<(usize, String)>,
    pub summary: BTreeMap<String, MetricSummary>,
}

impl ExperimentReport {
    pub fn n_failed(&self) -> usize {
        self.failures.len()
    }

    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.summary.get(metric).map(|s| s.mean)
    }

    pub fn metric(&self, metric: &str) -> Option<&MetricSummary> {
        self.summary.get(metric)
    }

    /// `rep,metric,value` rows, failed replications flagged by a `failed` metric.
    pub fn write_long_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "rep,metric,value")?;
        let mut rows: Vec<(usize, String, f64)> = Vec::new();
        for r in &self.records {
            for (m, v) in &r.metrics {
                rows.push((r.rep, m.clone(), *v));
            }
        }
        for (rep, _) in &self.failures {
            rows.push((*rep, "failed".into(), 1.0));
        }
        rows.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        for (rep, m, v) in rows {
            writeln!(w, "{rep},{m},{v}")?;
        }
        Ok(())
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "config": self.config,
            "reps": self.config.reps,
            "n_ok": self.records.len(),
            "n_failed": self.failures.len(),
            "failures": self.failures,
            "metrics": self.summary,
        })
    }

    pub fn write_files(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let csv = std::fs::File::create(dir.join(format!("{stem}.csv")))?;
        self.write_long_csv(std::io::BufWriter::new(csv))?;
        let json = serde_json::to_string_pretty(&self.summary_json())?;
        std::fs::write(dir.join(format!("{stem}_summary.json")), json + "\n")?;
        Ok(())
    }
}

fn run_one(cfg: &ExperimentConfig, rep: usize) -> Result<Vec<(String, f64)>> {
    let seed = derive_seed(cfg.seed, "replication", rep as u64);
    let (data, truth, nuis) = cfg.setup.generate(cfg.n, seed)?;
    let grid = truth.grid(cfg.grid_resolution)?;
    let tau_true = truth.tau_on(&grid);
    let theta = truth.theta;
    let true_mask = threshold(&grid, &tau_true, theta)?;
    let mut metrics = Vec::new();

    let (values, sets) = match &cfg.estimator {
        EstimatorSpec::Truth => (tau_true.clone(), None),
        EstimatorSpec::Dr { stage, nuisances } => {
            let learner = Arc::new(match nuisances {
                NuisanceSource::Dgp => {
                    let rows: Vec<usize> = (0..data.len()).collect();
                    dr_fit_with_nuisances(&data, &rows, &nuis, stage, None)?
                }
                NuisanceSource::Fitted { config, frac_d } => {
                    let plan = split_sample(data.len(), derive_seed(seed, "split", 0), *frac_d)?;
                    dr_fit(&data, &plan, config, stage, None, false)?
                }
            });
            let surface = learner.surface(&grid)?;
            match cfg.alpha {
                Some(alpha) => {
                    let (surface, band) =
                        dr_band(&learner, surface, alpha, cfg.n_boot, derive_seed(seed, "bootstrap", 0))?;
                    let sets = confidence_sets(&surface, theta, &band)?;
                    (surface.values, Some(sets))
                }
                None => (surface.values, None),
            }
        }
        EstimatorSpec::Lpr { smoothness, h_scale, k_max } => {
            let mut tuning = select_tuning(smoothness, data.dim(), data.len())?;
            tuning.h *= h_scale;
            tuning.k = tuning.k.min(*k_max);
            let learner = LprLearner::new(&data, &nuis, tuning, smoothness.gamma.floor() as u32)?;
            let fits = learner.fit_grid(&grid, UStatMode::Complete)?;
            (fits.iter().map(|p| p.tau_hat).collect(), None)
        }
    };

    let est_mask = threshold(&grid, &values, theta)?;
    metrics.push(("d_h".to_string(), loss_d_h(&est_mask, &true_mask, &tau_true, theta, grid.density())?));
    metrics.push(("d_delta".to_string(), loss_d_delta(&est_mask, &true_mask, grid.density())?));
    if let Some(sets) = sets {
        let (outer, inner) = check_inclusions(&sets, &tau_true, theta)?;
        metrics.push(("outer_inclusion".into(), outer as u8 as f64));
        metrics.push(("inner_inclusion".into(), inner as u8 as f64));
        metrics.push(("covered".into(), (outer && inner) as u8 as f64));
        metrics.push(("c_crit".into(), sets.c_crit));
    }
    Ok(metrics)
}

/// Run `reps` independent replications in parallel; each derives its own
/// seed from the root seed and its index.
pub fn run_replications(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    if cfg.reps == 0 {
        return Err(Error::Config("reps must be at least 1".into()));
    }
    if let Some(a) = cfg.alpha {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {a}")));
        }
    }
    // parameter problems fail the run rather than every replication
    if let SetupSpec::Adversarial(p) = &cfg.setup {
        p.validate()?;
    }
    let outcomes: Vec<(usize, Result<Vec<(String, f64)>>)> =
        (0..cfg.reps).into_par_iter().map(|r| (r, run_one(cfg, r))).collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (rep, out) in outcomes {
        match out {
            Ok(metrics) => records.push(RepRecord { rep, metrics }),
            Err(e @ (Error::Config(_) | Error::Parameter(_) | Error::Shape { .. })) => return Err(e),
            Err(e) => {
                log::warn!("replication {rep} failed: {e}");
                failures.push((rep, e.to_string()));
            }
        }
    }
    let mut summary = BTreeMap::new();
    let mut by_metric: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in &records {
        for (m, v) in &r.metrics {
            by_metric.entry(m.clone()).or_default().push(*v);
        }
    }
    for (m, vals) in by_metric {
        summary.insert(m, summarize(&vals));
    }
    Ok(ExperimentReport { config: cfg.clone(), records, failures, summary })
}

pub fn summarize(vals: &[f64]) -> MetricSummary {
    let n = vals.len();
    let mean = vals.iter().sum::<f64>() / n as f64;
    let se = if n > 1 {
        (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64 / n as f64).sqrt()
    } else {
        0.0
    };
    MetricSummary { mean, se, count: n }
}

/// Least-squares slope of `log risk` on `log n`.
pub fn rate_slope(ns: &[usize], risks: &[f64]) -> Result<f64> {
    if ns.len() != risks.len() {
        return Err(Error::Shape { what: "risks", expected: ns.len(), got: risks.len() });
    }
    if ns.len() < 3 {
        return Err(Error::Config(format!("need at least 3 sample sizes, got {}", ns.len())));
    }
    if let Some(r) = risks.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
        return Err(Error::Domain(format!("risks must be positive, got {r}")));
    }
    let pts: Vec<(f64, f64)> = ns.iter().zip(risks).map(|(&n, &r)| ((n as f64).ln(), r.ln())).collect();
    Ok(least_squares_line(&pts).0)
}

/// Oracle DR-Learner rate sweep: local linear second stage with
/// `h = bandwidth_const * n^{-1/5}` on the one-dimensional crossing DGP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateBenchConfig {
    pub ns: Vec<usize>,
    pub reps: usize,
    pub bandwidth_const: f64,
    pub grid_resolution: usize,
    pub seed: u64,
}

impl Default for RateBenchConfig {
    fn default() -> Self {
        Self { ns: vec![500, 1000, 2000, 4000, 8000], reps: 100, bandwidth_const: 0.5, grid_resolution: 4000, seed: 1 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RateReport {
    pub config: RateBenchConfig,
    pub mean_d_h: Vec<f64>,
    pub se_d_h: Vec<f64>,
    pub failed: Vec<usize>,
    pub slope: f64,
}

impl RateReport {
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "n,mean_d_h,se_d_h,failed")?;
        for i in 0..self.config.ns.len() {
            writeln!(w, "{},{},{},{}", self.config.ns[i], self.mean_d_h[i], self.se_d_h[i], self.failed[i])?;
        }
        Ok(())
    }
}

pub fn rate_bench(cfg: &RateBenchConfig) -> Result<RateReport> {
    let mut mean_d_h = Vec::new();
    let mut se_d_h = Vec::new();
    let mut failed = Vec::new();
    for (i, &n) in cfg.ns.iter().enumerate() {
        let exp = ExperimentConfig {
            setup: SetupSpec::Rate1d,
            estimator: EstimatorSpec::Dr {
                stage: SecondStage::LocalPoly { bandwidth: cfg.bandwidth_const * (n as f64).powf(-0.2), degree: 1 },
                nuisances: NuisanceSource::Dgp,
            },
            n,
            reps: cfg.reps,
            grid_resolution: cfg.grid_resolution,
            alpha: None,
            n_boot: 0,
            seed: derive_seed(cfg.seed, "rate", i as u64),
        };
        let report = run_replications(&exp)?;
        let s = report.metric("d_h").ok_or_else(|| Error::Estimator(format!("every replication failed at n = {n}")))?;
        mean_d_h.push(s.mean);
        se_d_h.push(s.se);
        failed.push(report.n_failed());
    }
    let slope = rate_slope(&cfg.ns, &mean_d_h)?;
    Ok(RateReport { config: cfg.clone(), mean_d_h, se_d_h, failed, slope })
}

/// One row of a figure panel: the swept parameter and the report at it.
pub type PanelRow = (f64, ExperimentReport);

/// Simultaneous-inclusion coverage across noise orders `c`.
pub fn coverage_panel(base: &ExperimentConfig, cs: &[f64]) -> Result<Vec<PanelRow>> {
    let noise = match &base.setup {
        SetupSpec::OneA { noise, .. } => *noise,
        _ => NoiseScale::default(),
    };
    cs.iter()
        .map(|&c| {
            let cfg = ExperimentConfig { setup: SetupSpec::OneA { c, noise }, ..base.clone() };
            Ok((c, run_replications(&cfg)?))
        })
        .collect()
}

/// Mean risk across effect scalings `kappa`.
pub fn kappa_panel(base: &ExperimentConfig, kappas: &[f64]) -> Result<Vec<PanelRow>> {
    kappas
        .iter()
        .map(|&kappa| {
            let cfg = ExperimentConfig { setup: SetupSpec::OneB { kappa }, ..base.clone() };
            Ok((kappa, run_replications(&cfg)?))
        })
        .collect()
}

pub fn write_coverage_csv(rows: &[PanelRow], mut w: impl Write) -> Result<()> {
    writeln!(w, "c,coverage,se,n_ok,n_failed")?;
    for (c, r) in rows {
        let s = r.metric("covered");
        writeln!(
            w,
            "{c},{},{},{},{}",
            s.map_or(f64::NAN, |s| s.mean),
            s.map_or(f64::NAN, |s| s.se),
            r.records.len(),
            r.n_failed()
        )?;
    }
    Ok(())
}

pub fn write_kappa_csv(rows: &[PanelRow], mut w: impl Write) -> Result<()> {
    writeln!(w, "kappa,mean_d_h,se_d_h,mean_d_delta,n_ok,n_failed")?;
    for (k, r) in rows {
        let h = r.metric("d_h");
        writeln!(
            w,
            "{k},{},{},{},{},{}",
            h.map_or(f64::NAN, |s| s.mean),
            h.map_or(f64::NAN, |s| s.se),
            r.mean("d_delta").unwrap_or(f64::NAN),
            r.records.len(),
            r.n_failed()
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn truth_cfg() -> ExperimentConfig {
        ExperimentConfig {
            setup: SetupSpec::OneB { kappa: 1.0 },
            estimator: EstimatorSpec::Truth,
            n: 50,
            reps: 3,
            grid_resolution: 20,
            alpha: None,
            n_boot: 1000,
            seed: 4,
        }
    }

    #[test]
    fn perfect_estimator_has_zero_risk() {
        let r = run_replications(&truth_cfg()).unwrap();
        for rec in &r.records {
            for (m, v) in &rec.metrics {
                assert_eq!(*v, 0.0, "{m}");
            }
        }
    }

    #[test]
    fn reports_are_deterministic() {
        let cfg = ExperimentConfig {
            estimator: EstimatorSpec::Dr {
                stage: SecondStage::basis(crate::basis::BasisSpec::parse(2, "1,x1,x1^2,x2").unwrap()),
                nuisances: NuisanceSource::Dgp,
            },
            alpha: Some(0.1),
            reps: 2,
            n: 200,
            ..truth_cfg()
        };
        let (mut a, mut b) = (Vec::new(), Vec::new());
        run_replications(&cfg).unwrap().write_long_csv(&mut a).unwrap();
        run_replications(&cfg).unwrap().write_long_csv(&mut b).unwrap();
        assert_eq!(a, b);
        assert!(String::from_utf8(a).unwrap().contains("covered"));
    }

    #[test]
    fn slope_of_power_law() {
        let ns = [500, 1000, 2000, 4000, 8000];
        let risks: Vec<f64> = ns.iter().map(|&n| 3.0 * (n as f64).powf(-0.8)).collect();
        assert_abs_diff_eq!(rate_slope(&ns, &risks).unwrap(), -0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(rate_slope(&ns, &[2.0; 5]).unwrap(), 0.0, epsilon = 1e-12);
        assert!(matches!(rate_slope(&ns, &[1.0, 0.0, 1.0, 1.0, 1.0]), Err(Error::Domain(_))));
        assert!(rate_slope(&ns[..2], &risks[..2]).is_err());
    }
}
