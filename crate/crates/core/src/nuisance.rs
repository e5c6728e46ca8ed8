//! First-stage nuisance estimation: sample splitting, local polynomial
//! regressions for the propensity score and arm-specific outcome means, a
//! kernel density for the covariates, and noise-injected parametric oracles.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSpec, LinearPredictor};
use crate::error::{Error, Result};
use crate::localpoly::LocalPolySmoother;
use crate::model::{scalar_fn, Covariates, ObservationSet, ScalarFn};
use crate::rng::substream;

pub const DEFAULT_EPSILON: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Fold {
    /// Nuisance-training fold.
    D,
    /// Second-stage fold.
    Z,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub assignment: Vec<Fold>,
}

impl SplitPlan {
    pub fn indices(&self, fold: Fold) -> Vec<usize> {
        self.assignment.iter().enumerate().filter(|(_, &f)| f == fold).map(|(i, _)| i).collect()
    }

    /// The same partition with the roles of the folds exchanged.
    pub fn swapped(&self) -> Self {
        let assignment = self
            .assignment
            .iter()
            .map(|f| match f {
                Fold::D => Fold::Z,
                Fold::Z => Fold::D,
            })
            .collect();
        Self { seed: self.seed, assignment }
    }
}

/// Random partition into a nuisance fold of `floor(frac_d * n)` rows and a
/// second-stage fold with the rest.
pub fn split_sample(n: usize, seed: u64, frac_d: f64) -> Result<SplitPlan> {
    if !(frac_d > 0.0 && frac_d < 1.0) {
        return Err(Error::Config(format!("frac_d must lie in (0, 1), got {frac_d}")));
    }
    if n < 4 {
        return Err(Error::Config(format!("sample splitting needs n >= 4, got {n}")));
    }
    let n_d = (frac_d * n as f64 + 1e-9).floor() as usize;
    if n_d == 0 || n_d >= n {
        return Err(Error::Config(format!("frac_d = {frac_d} leaves an empty fold at n = {n}")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut substream(seed, "split", 0));
    let mut assignment = vec![Fold::Z; n];
    for &i in &perm[..n_d] {
        assignment[i] = Fold::D;
    }
    Ok(SplitPlan { seed, assignment })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegressionTarget {
    OutcomeArm0,
    OutcomeArm1,
    Treatment,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum BandwidthRule {
    Fixed(f64),
    /// Leave-one-out cross-validation over the given candidates; an empty
    /// list means a log-spaced default set scaled to the data spread.
    Loocv(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressorConfig {
    pub degree: u32,
    pub bandwidth: BandwidthRule,
    pub epsilon: f64,
}

impl Default for RegressorConfig {
    fn default() -> Self {
        Self { degree: 1, bandwidth: BandwidthRule::Loocv(Vec::new()), epsilon: DEFAULT_EPSILON }
    }
}

/// A fitted local polynomial regression.
#[derive(Debug)]
pub struct FittedRegressor {
    smoother: LocalPolySmoother,
    response: Vec<f64>,
    bandwidth: f64,
    clip: Option<(f64, f64)>,
    warned: AtomicBool,
}

impl FittedRegressor {
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let raw = match self.smoother.weights(x, self.bandwidth) {
            Ok(w) => w.apply(&self.response),
            Err(_) => self.sparse_fallback(x),
        };
        match self.clip {
            Some((lo, hi)) => raw.clamp(lo, hi),
            None => raw,
        }
    }

    fn sparse_fallback(&self, x: &[f64]) -> f64 {
        if !self.warned.swap(true, Ordering::Relaxed) {
            log::warn!(
                "sparse region near {x:?}: local polynomial window (h = {}) is empty or singular, using a local fallback",
                self.bandwidth
            );
        }
        let win = self.smoother.window(x, 2.0 * self.bandwidth);
        if win.is_empty() {
            let nn = self.smoother.nearest(x).expect("regressor has training rows");
            self.response[nn]
        } else {
            win.iter().map(|&i| self.response[i]).sum::<f64>() / win.len() as f64
        }
    }

    pub fn into_fn(self) -> ScalarFn {
        let me = Arc::new(self);
        scalar_fn(move |x| me.eval(x))
    }
}

fn default_candidates(xs: &Covariates) -> Vec<f64> {
    let spread = (0..xs.dim())
        .map(|j| {
            let (lo, hi) =
                xs.rows().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r[j]), hi.max(r[j])));
            hi - lo
        })
        .fold(0.0, f64::max)
        .max(1e-12);
    let m = 10;
    (0..m).map(|i| spread * (0.05f64.ln() + (1.0f64.ln() - 0.05f64.ln()) * i as f64 / (m - 1) as f64).exp()).collect()
}

/// Leave-one-out score of a linear smoother at bandwidth `h`, evaluated on
/// at most 400 evenly strided rows. `None` when too many rows fail.
fn loocv_score(smoother: &LocalPolySmoother, y: &[f64], h: f64) -> Option<f64> {
    let n = y.len();
    let stride = n.div_ceil(400).max(1);
    let (mut sum, mut used, mut failed) = (0.0, 0usize, 0usize);
    for i in (0..n).step_by(stride) {
        match smoother.weights_exact(smoother.points().row(i), h) {
            Ok(w) => {
                let wii = w.weight_of(i);
                if 1.0 - wii < 1e-8 {
                    failed += 1;
                    continue;
                }
                let r = (y[i] - w.apply(y)) / (1.0 - wii);
                sum += r * r;
                used += 1;
            }
            Err(_) => failed += 1,
        }
    }
    if used == 0 || failed * 10 > used + failed {
        None
    } else {
        Some(sum / used as f64)
    }
}

/// Select a bandwidth by leave-one-out cross-validation.
pub fn loocv_bandwidth(xs: &Covariates, y: &[f64], degree: u32, candidates: &[f64]) -> Result<f64> {
    let smoother = LocalPolySmoother::new(xs.clone(), degree);
    let cands = if candidates.is_empty() { default_candidates(xs) } else { candidates.to_vec() };
    let mut best: Option<(f64, f64)> = None;
    for &h in &cands {
        if let Some(score) = loocv_score(&smoother, y, h) {
            if best.is_none_or(|(_, s)| score < s) {
                best = Some((h, score));
            }
        }
    }
    match best {
        Some((h, _)) => Ok(h),
        None => {
            let h = cands.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            log::warn!("no bandwidth candidate passed cross-validation, using the largest ({h})");
            Ok(h)
        }
    }
}

/// Fit a local polynomial regression of the requested target.
pub fn fit_regressor(
    data: &ObservationSet,
    target: RegressionTarget,
    cfg: &RegressorConfig,
) -> Result<FittedRegressor> {
    let rows: Vec<usize> = match target {
        RegressionTarget::OutcomeArm0 => (0..data.len()).filter(|&i| data.a()[i] == 0).collect(),
        RegressionTarget::OutcomeArm1 => (0..data.len()).filter(|&i| data.a()[i] == 1).collect(),
        RegressionTarget::Treatment => (0..data.len()).collect(),
    };
    if rows.is_empty() {
        return Err(Error::Config(format!("no training rows for {target:?}")));
    }
    let xs = data.x().subset(&rows);
    let response: Vec<f64> = match target {
        RegressionTarget::Treatment => rows.iter().map(|&i| data.a()[i] as f64).collect(),
        _ => rows.iter().map(|&i| data.y()[i]).collect(),
    };
    let bandwidth = match &cfg.bandwidth {
        BandwidthRule::Fixed(h) if *h > 0.0 => *h,
        BandwidthRule::Fixed(h) => return Err(Error::Config(format!("bandwidth must be positive, got {h}"))),
        BandwidthRule::Loocv(c) => loocv_bandwidth(&xs, &response, cfg.degree, c)?,
    };
    let clip = match target {
        RegressionTarget::Treatment => {
            check_epsilon(cfg.epsilon)?;
            Some((cfg.epsilon, 1.0 - cfg.epsilon))
        }
        _ => None,
    };
    Ok(FittedRegressor {
        smoother: LocalPolySmoother::new(xs, cfg.degree),
        response,
        bandwidth,
        clip,
        warned: AtomicBool::new(false),
    })
}

fn check_epsilon(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 0.5 {
        Ok(())
    } else {
        Err(Error::Config(format!("epsilon must lie in (0, 0.5), got {eps}")))
    }
}

/// Product Gaussian kernel density with Silverman bandwidths.
#[derive(Clone, Debug)]
pub struct KernelDensity {
    xs: Covariates,
    bandwidths: Vec<f64>,
}

impl KernelDensity {
    pub fn fit(xs: &Covariates) -> Result<Self> {
        let n = xs.len();
        if n < 2 {
            return Err(Error::Config("kernel density needs at least two rows".into()));
        }
        let d = xs.dim();
        let factor = 1.06 * (n as f64).powf(-1.0 / (d as f64 + 4.0));
        let bandwidths = (0..d)
            .map(|j| {
                let mean = xs.rows().map(|r| r[j]).sum::<f64>() / n as f64;
                let var = xs.rows().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                (factor * var.sqrt()).max(1e-6)
            })
            .collect();
        Ok(Self { xs: xs.clone(), bandwidths })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let norm: f64 = self.bandwidths.iter().map(|h| h * (2.0 * std::f64::consts::PI).sqrt()).product();
        let s: f64 = self
            .xs
            .rows()
            .map(|r| {
                let q: f64 = r.iter().zip(x).zip(&self.bandwidths).map(|((a, b), h)| ((a - b) / h).powi(2)).sum();
                (-0.5 * q).exp()
            })
            .sum();
        s / (self.xs.len() as f64 * norm)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    Fitted { split_seed: u64, fold: Fold },
    Oracle,
    Perturbed { c: f64, seed: u64 },
}

/// Evaluable nuisance functions. The propensity score is clipped into
/// `[epsilon, 1 - epsilon]` on every evaluation.
#[derive(Clone)]
pub struct NuisanceSet {
    pi_raw: ScalarFn,
    mu0: ScalarFn,
    mu1: ScalarFn,
    density: Option<ScalarFn>,
    epsilon: f64,
    pub provenance: Provenance,
}

impl std::fmt::Debug for NuisanceSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NuisanceSet")
            .field("epsilon", &self.epsilon)
            .field("has_density", &self.density.is_some())
            .field("provenance", &self.provenance)
            .finish()
    }
}

impl NuisanceSet {
    pub fn new(pi: ScalarFn, mu0: ScalarFn, mu1: ScalarFn, epsilon: f64, provenance: Provenance) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(Self { pi_raw: pi, mu0, mu1, density: None, epsilon, provenance })
    }

    pub fn with_density(mut self, density: ScalarFn) -> Self {
        self.density = Some(density);
        self
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn pi(&self, x: &[f64]) -> f64 {
        (self.pi_raw)(x).clamp(self.epsilon, 1.0 - self.epsilon)
    }

    pub fn mu0(&self, x: &[f64]) -> f64 {
        (self.mu0)(x)
    }

    pub fn mu1(&self, x: &[f64]) -> f64 {
        (self.mu1)(x)
    }

    pub fn mu(&self, a: u8, x: &[f64]) -> f64 {
        if a == 1 {
            self.mu1(x)
        } else {
            self.mu0(x)
        }
    }

    pub fn density(&self) -> Option<&ScalarFn> {
        self.density.as_ref()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NuisanceConfig {
    pub propensity: RegressorConfig,
    pub outcome: RegressorConfig,
    pub epsilon: f64,
    /// Also fit a kernel density for the covariates.
    pub fit_density: bool,
}

impl Default for NuisanceConfig {
    fn default() -> Self {
        Self {
            propensity: RegressorConfig::default(),
            outcome: RegressorConfig::default(),
            epsilon: DEFAULT_EPSILON,
            fit_density: false,
        }
    }
}

/// Fit all nuisances on the given rows.
pub fn fit_nuisances(
    data: &ObservationSet,
    rows: &[usize],
    cfg: &NuisanceConfig,
    provenance: Provenance,
) -> Result<NuisanceSet> {
    let train = data.subset(rows);
    let prop_cfg = RegressorConfig { epsilon: cfg.epsilon, ..cfg.propensity.clone() };
    let pi = fit_regressor(&train, RegressionTarget::Treatment, &prop_cfg)?;
    let mu0 = fit_regressor(&train, RegressionTarget::OutcomeArm0, &cfg.outcome)?;
    let mu1 = fit_regressor(&train, RegressionTarget::OutcomeArm1, &cfg.outcome)?;
    log::debug!(
        "nuisance bandwidths: pi {:.4}, mu0 {:.4}, mu1 {:.4}",
        pi.bandwidth(),
        mu0.bandwidth(),
        mu1.bandwidth()
    );
    let mut set = NuisanceSet::new(pi.into_fn(), mu0.into_fn(), mu1.into_fn(), cfg.epsilon, provenance)?;
    if cfg.fit_density {
        let kde = Arc::new(KernelDensity::fit(train.x())?);
        set = set.with_density(scalar_fn(move |x| kde.eval(x)));
    }
    Ok(set)
}

/// Parametric nuisance truth: logistic propensity and linear outcome means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParametricTruth {
    /// Linear predictor inside the logistic link.
    pub pi_logit: LinearPredictor,
    pub mu0: LinearPredictor,
    pub mu1: LinearPredictor,
}

pub fn expit(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

impl ParametricTruth {
    /// `pi = expit(-1 + x1 + x2)`, `mu0 = 0`, `mu1 = kappa (0.15 - x1 - 0.5 x1^2 + x2)`.
    pub fn two_dim_benchmark(kappa: f64) -> Self {
        let lin = BasisSpec::parse(2, "1,x1,x2").expect("static basis");
        let quad = BasisSpec::parse(2, "1,x1,x1^2,x2").expect("static basis");
        Self {
            pi_logit: LinearPredictor { basis: lin.clone(), coef: vec![-1.0, 1.0, 1.0] },
            mu0: LinearPredictor { basis: lin, coef: vec![0.0, 0.0, 0.0] },
            mu1: LinearPredictor { basis: quad, coef: [0.15, -1.0, -0.5, 1.0].iter().map(|c| kappa * c).collect() },
        }
    }

    pub fn pi(&self, x: &[f64]) -> f64 {
        expit(self.pi_logit.eval(x))
    }

    pub fn to_nuisances(&self, epsilon: f64, provenance: Provenance) -> Result<NuisanceSet> {
        let (p, m0, m1) = (self.pi_logit.clone(), self.mu0.clone(), self.mu1.clone());
        NuisanceSet::new(
            scalar_fn(move |x| expit(p.eval(x))),
            scalar_fn(move |x| m0.eval(x)),
            scalar_fn(move |x| m1.eval(x)),
            epsilon,
            provenance,
        )
    }
}

/// How the second argument of the injected Gaussian is read.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseScale {
    /// `N(n^{-1/c}, n^{-1/c} I)` with the second argument a covariance.
    #[default]
    Variance,
    /// Second argument read as a standard deviation.
    StdDev,
}

/// Gaussian coefficient offsets with mean `n^{-1/c}`; all zero when `c == 0`.
pub fn injected_offsets<R: Rng + ?Sized>(c: f64, n: usize, len: usize, scale: NoiseScale, rng: &mut R) -> Vec<f64> {
    if c == 0.0 {
        return vec![0.0; len];
    }
    let mean = (n as f64).powf(-1.0 / c);
    let sd = match scale {
        NoiseScale::Variance => mean.sqrt(),
        NoiseScale::StdDev => mean,
    };
    (0..len).map(|_| mean + sd * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// True parametric nuisances with Gaussian noise of order `n^{-1/c}` added
/// to every coefficient.
pub fn perturbed_oracle(
    truth: &ParametricTruth,
    c: f64,
    n: usize,
    seed: u64,
    scale: NoiseScale,
    epsilon: f64,
) -> Result<NuisanceSet> {
    if !(c == 0.0 || (c > 0.0 && c.is_finite())) {
        return Err(Error::Config(format!("noise order c must be 0 or positive, got {c}")));
    }
    if c == 0.0 {
        return truth.to_nuisances(epsilon, Provenance::Perturbed { c, seed });
    }
    let perturb = |p: &LinearPredictor, stream: &str| {
        let off = injected_offsets(c, n, p.coef.len(), scale, &mut substream(seed, stream, 0));
        LinearPredictor { basis: p.basis.clone(), coef: p.coef.iter().zip(off).map(|(a, b)| a + b).collect() }
    };
    let noisy = ParametricTruth {
        pi_logit: perturb(&truth.pi_logit, "noise-pi"),
        mu0: perturb(&truth.mu0, "noise-mu0"),
        mu1: perturb(&truth.mu1, "noise-mu1"),
    };
    noisy.to_nuisances(epsilon, Provenance::Perturbed { c, seed })
}
