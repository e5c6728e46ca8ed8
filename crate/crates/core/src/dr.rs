//! DR-Learner: doubly robust pseudo-outcomes regressed on effect modifiers
//! with a linear smoother (local polynomial or a finite design basis).

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::localpoly::{well_conditioned, LocalPolySmoother, SmootherWeights};
use crate::model::{scalar_fn, Covariates, EvalGrid, ObservationSet, ScalarFn};
use crate::nuisance::{fit_nuisances, Fold, NuisanceConfig, NuisanceSet, Provenance, SplitPlan};

/// Ridge penalty added to a collinear basis Gram matrix.
pub const RIDGE_FALLBACK: f64 = 1e-8;

/// Doubly robust pseudo-outcome for one row.
pub fn pseudo_outcome(y: f64, a: u8, x: &[f64], nuis: &NuisanceSet) -> f64 {
    let pi = nuis.pi(x);
    let mu1 = nuis.mu1(x);
    let mu0 = nuis.mu0(x);
    let mu_a = if a == 1 { mu1 } else { mu0 };
    (a as f64 - pi) * (y - mu_a) / (pi * (1.0 - pi)) + mu1 - mu0
}

pub fn pseudo_outcomes(data: &ObservationSet, nuis: &NuisanceSet) -> Vec<f64> {
    (0..data.len()).map(|i| pseudo_outcome(data.y()[i], data.a()[i], data.x().row(i), nuis)).collect()
}

/// Second-stage regression of the pseudo-outcomes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SecondStage {
    LocalPoly {
        bandwidth: f64,
        degree: u32,
    },
    /// Least squares on a design basis; with several candidates the one with
    /// the smallest leave-one-out error is used.
    Basis {
        candidates: Vec<BasisSpec>,
    },
}

impl SecondStage {
    /// Local polynomial of degree `floor(gamma)` with `h = c n^{-1/(2 gamma + d)}`.
    pub fn local_poly_for_smoothness(gamma: f64, d: usize, n: usize, c: f64) -> Self {
        SecondStage::LocalPoly {
            bandwidth: c * (n as f64).powf(-1.0 / (2.0 * gamma + d as f64)),
            degree: gamma.floor() as u32,
        }
    }

    pub fn basis(spec: BasisSpec) -> Self {
        SecondStage::Basis { candidates: vec![spec] }
    }
}

/// Ordinary least squares on a design basis, kept as the linear map
/// `coef = C phi` so it can be reused by the bootstrap.
#[derive(Clone, Debug)]
pub struct BasisFit {
    pub spec: BasisSpec,
    pub coef: Vec<f64>,
    /// `(B'B)^{-1} B'`, `p x n`.
    pub coef_map: DMatrix<f64>,
    pub loocv: f64,
    pub ridge: bool,
}

impl BasisFit {
    pub fn fit(spec: &BasisSpec, xs: &Covariates, phi: &[f64]) -> Result<Self> {
        let n = xs.len();
        let p = spec.len();
        if n < p {
            return Err(Error::Estimator(format!("{n} rows cannot identify {p} basis coefficients")));
        }
        let design = DMatrix::from_fn(n, p, |i, j| spec.terms[j].eval(xs.row(i)));
        let mut gram = design.transpose() * &design;
        let ridge = !well_conditioned(&gram);
        if ridge {
            log::warn!("collinear second-stage basis `{spec}`: adding ridge penalty {RIDGE_FALLBACK}");
            for k in 0..p {
                gram[(k, k)] += RIDGE_FALLBACK;
            }
        }
        let inv = gram
            .clone()
            .cholesky()
            .map(|c| c.inverse())
            .or_else(|| gram.clone().try_inverse())
            .ok_or(Error::SingularDesign { condition: f64::INFINITY })?;
        let coef_map = &inv * design.transpose();
        let phi_v = DVector::from_column_slice(phi);
        let coef = &coef_map * &phi_v;
        let fitted = &design * &coef;
        let mut loocv = 0.0;
        for i in 0..n {
            let hii: f64 = (0..p).map(|k| design[(i, k)] * coef_map[(k, i)]).sum();
            let r = (phi[i] - fitted[i]) / (1.0 - hii).max(1e-12);
            loocv += r * r;
        }
        Ok(Self { spec: spec.clone(), coef: coef.as_slice().to_vec(), coef_map, loocv: loocv / n as f64, ridge })
    }

    pub fn predict(&self, v: &[f64]) -> f64 {
        self.spec.terms.iter().zip(&self.coef).map(|(t, c)| c * t.eval(v)).sum()
    }

    pub fn weights(&self, v: &[f64]) -> SmootherWeights {
        let b = DVector::from_vec(self.spec.eval(v));
        let w = self.coef_map.transpose() * b;
        let n = w.len();
        SmootherWeights::from_parts(v.to_vec(), (0..n).collect(), w.as_slice().to_vec(), f64::INFINITY)
    }
}

#[derive(Clone, Debug)]
pub enum FittedSecondStage {
    LocalPoly { smoother: LocalPolySmoother, bandwidth: f64 },
    Basis(BasisFit),
}

/// Second-stage fit on one fold.
#[derive(Clone, Debug)]
pub struct FoldFit {
    /// Global row indices of the second-stage fold.
    pub rows: Vec<usize>,
    /// Effect-modifier values of those rows.
    pub v: Covariates,
    pub phi: Vec<f64>,
    pub stage: FittedSecondStage,
}

impl FoldFit {
    /// Weights over the fold's own rows (local indexing).
    pub fn local_weights(&self, v: &[f64]) -> Result<SmootherWeights> {
        match &self.stage {
            FittedSecondStage::LocalPoly { smoother, bandwidth } => smoother.weights(v, *bandwidth),
            FittedSecondStage::Basis(b) => Ok(b.weights(v)),
        }
    }

    pub fn predict(&self, v: &[f64]) -> Result<f64> {
        match &self.stage {
            FittedSecondStage::Basis(b) => Ok(b.predict(v)),
            FittedSecondStage::LocalPoly { .. } => Ok(self.local_weights(v)?.apply(&self.phi)),
        }
    }
}

/// A fitted DR-Learner: one fold, or two with swapped roles averaged.
#[derive(Clone, Debug)]
pub struct DrLearner {
    pub folds: Vec<FoldFit>,
    /// Total number of rows in the original data.
    pub n_total: usize,
    pub effect_modifiers: Option<Vec<usize>>,
    pub meta: SurfaceMeta,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SurfaceMeta {
    pub estimator: String,
    pub tuning: BTreeMap<String, serde_json::Value>,
}

impl SurfaceMeta {
    pub fn new(estimator: &str) -> Self {
        Self { estimator: estimator.into(), tuning: BTreeMap::new() }
    }

    pub fn with(mut self, key: &str, value: impl Serialize) -> Self {
        self.tuning.insert(key.into(), serde_json::to_value(value).unwrap_or(serde_json::Value::Null));
        self
    }
}

fn project(x: &Covariates, cols: &Option<Vec<usize>>) -> Result<Covariates> {
    match cols {
        Some(c) => x.select_columns(c),
        None => Ok(x.clone()),
    }
}

fn fit_fold(
    data: &ObservationSet,
    rows: Vec<usize>,
    nuis: &NuisanceSet,
    stage: &SecondStage,
    cols: &Option<Vec<usize>>,
) -> Result<(FoldFit, BTreeMap<String, serde_json::Value>)> {
    let z = data.subset(&rows);
    let phi = pseudo_outcomes(&z, nuis);
    let v = project(z.x(), cols)?;
    let mut info = BTreeMap::new();
    let fitted = match stage {
        SecondStage::LocalPoly { bandwidth, degree } => {
            if !(*bandwidth > 0.0) {
                return Err(Error::Config(format!("second-stage bandwidth must be positive, got {bandwidth}")));
            }
            info.insert("bandwidth".into(), (*bandwidth).into());
            info.insert("degree".into(), (*degree).into());
            FittedSecondStage::LocalPoly { smoother: LocalPolySmoother::new(v.clone(), *degree), bandwidth: *bandwidth }
        }
        SecondStage::Basis { candidates } => {
            if candidates.is_empty() {
                return Err(Error::Config("no second-stage basis candidates".into()));
            }
            let mut best: Option<BasisFit> = None;
            for spec in candidates {
                if spec.dim != v.dim() {
                    return Err(Error::Shape { what: "basis dimension", expected: v.dim(), got: spec.dim });
                }
                let fit = BasisFit::fit(spec, &v, &phi)?;
                if best.as_ref().is_none_or(|b| fit.loocv < b.loocv) {
                    best = Some(fit);
                }
            }
            let best = best.expect("nonempty candidates");
            info.insert("basis".into(), best.spec.to_string().into());
            info.insert("loocv".into(), serde_json::json!(best.loocv));
            info.insert("ridge".into(), best.ridge.into());
            FittedSecondStage::Basis(best)
        }
    };
    Ok((FoldFit { rows, v, phi, stage: fitted }, info))
}

/// Second stage on given rows with externally supplied nuisances (oracle or
/// pre-fitted). Every listed row enters the regression.
pub fn dr_fit_with_nuisances(
    data: &ObservationSet,
    rows: &[usize],
    nuis: &NuisanceSet,
    stage: &SecondStage,
    effect_modifiers: Option<Vec<usize>>,
) -> Result<DrLearner> {
    let (fold, info) = fit_fold(data, rows.to_vec(), nuis, stage, &effect_modifiers)?;
    let mut meta = SurfaceMeta::new("dr");
    meta.tuning.extend(info);
    meta = meta.with("nuisances", &nuis.provenance);
    Ok(DrLearner { folds: vec![fold], n_total: data.len(), effect_modifiers, meta })
}

/// Full DR-Learner: nuisances on fold D, second stage on fold Z. With
/// `cross_fit` the roles are swapped and the two fits averaged.
pub fn dr_fit(
    data: &ObservationSet,
    split: &SplitPlan,
    nuis_cfg: &NuisanceConfig,
    stage: &SecondStage,
    effect_modifiers: Option<Vec<usize>>,
    cross_fit: bool,
) -> Result<DrLearner> {
    if split.assignment.len() != data.len() {
        return Err(Error::Shape { what: "split plan", expected: data.len(), got: split.assignment.len() });
    }
    let plans = if cross_fit { vec![split.clone(), split.swapped()] } else { vec![split.clone()] };
    let mut folds = Vec::new();
    let mut meta = SurfaceMeta::new("dr").with("split_seed", split.seed).with("cross_fit", cross_fit);
    for plan in &plans {
        let d_rows = plan.indices(Fold::D);
        let z_rows = plan.indices(Fold::Z);
        let nuis = fit_nuisances(data, &d_rows, nuis_cfg, Provenance::Fitted { split_seed: plan.seed, fold: Fold::D })?;
        let (fold, info) = fit_fold(data, z_rows, &nuis, stage, &effect_modifiers)?;
        meta.tuning.extend(info);
        folds.push(fold);
    }
    Ok(DrLearner { folds, n_total: data.len(), effect_modifiers, meta })
}

impl DrLearner {
    fn modifiers(&self, x: &[f64]) -> Vec<f64> {
        match &self.effect_modifiers {
            Some(c) => c.iter().map(|&j| x[j]).collect(),
            None => x.to_vec(),
        }
    }

    /// Effect-modifier dimension.
    pub fn dim(&self) -> usize {
        self.folds[0].v.dim()
    }

    /// Estimate at an effect-modifier value `v`.
    pub fn predict(&self, v: &[f64]) -> Result<f64> {
        let mut s = 0.0;
        for f in &self.folds {
            s += f.predict(v)?;
        }
        Ok(s / self.folds.len() as f64)
    }

    /// Estimate at a full covariate vector (projected onto the modifiers).
    pub fn predict_x(&self, x: &[f64]) -> Result<f64> {
        self.predict(&self.modifiers(x))
    }

    /// Smoother weights at `v` over global row indices.
    pub fn weights(&self, v: &[f64]) -> Result<SmootherWeights> {
        let scale = 1.0 / self.folds.len() as f64;
        let mut pairs: Vec<(usize, f64)> = Vec::new();
        let mut bw = 0.0f64;
        for f in &self.folds {
            let w = f.local_weights(v)?;
            bw = bw.max(w.bandwidth);
            pairs.extend(w.indices.iter().zip(&w.weights).map(|(&i, &wi)| (f.rows[i], wi * scale)));
        }
        pairs.sort_by_key(|p| p.0);
        let (indices, weights) = pairs.into_iter().unzip();
        Ok(SmootherWeights::from_parts(v.to_vec(), indices, weights, bw))
    }

    /// Pseudo-outcomes on global rows (zero for rows outside every second-stage fold).
    pub fn pseudo_outcomes(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_total];
        for f in &self.folds {
            for (&r, &p) in f.rows.iter().zip(&f.phi) {
                out[r] = p;
            }
        }
        out
    }

    /// Residuals `phi_i - tau_hat(V_i)` from each row's own fold fit.
    pub fn residuals(&self) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n_total];
        for f in &self.folds {
            for (k, &r) in f.rows.iter().enumerate() {
                out[r] = f.phi[k] - f.predict(f.v.row(k))?;
            }
        }
        Ok(out)
    }

    /// Values on a grid over the effect-modifier space.
    pub fn surface(self: &Arc<Self>, grid: &Arc<EvalGrid>) -> Result<CateSurface> {
        if grid.dim() != self.dim() {
            return Err(Error::Shape { what: "grid dimension", expected: self.dim(), got: grid.dim() });
        }
        let values = grid.points().rows().map(|v| self.predict(v)).collect::<Result<Vec<_>>>()?;
        let me = Arc::clone(self);
        Ok(CateSurface {
            tau_hat: scalar_fn(move |v| me.predict(v).unwrap_or(f64::NAN)),
            grid: Arc::clone(grid),
            values,
            se: None,
            meta: self.meta.clone(),
        })
    }
}

/// Estimated CATE on an evaluation grid.
#[derive(Clone)]
pub struct CateSurface {
    pub tau_hat: ScalarFn,
    pub grid: Arc<EvalGrid>,
    pub values: Vec<f64>,
    pub se: Option<Vec<f64>>,
    pub meta: SurfaceMeta,
}

impl std::fmt::Debug for CateSurface {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CateSurface")
            .field("n_points", &self.values.len())
            .field("has_se", &self.se.is_some())
            .field("meta", &self.meta)
            .finish()
    }
}

impl CateSurface {
    pub fn from_values(grid: Arc<EvalGrid>, values: Vec<f64>, tau_hat: ScalarFn, meta: SurfaceMeta) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape { what: "surface values", expected: grid.len(), got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Estimator("surface has non-finite values".into()));
        }
        Ok(Self { tau_hat, grid, values, se: None, meta })
    }

    pub fn with_se(mut self, se: Vec<f64>) -> Result<Self> {
        if se.len() != self.values.len() {
            return Err(Error::Shape { what: "standard errors", expected: self.values.len(), got: se.len() });
        }
        if se.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::Domain("standard errors must be finite and nonnegative".into()));
        }
        self.se = Some(se);
        Ok(self)
    }
}

/// Smoothing bias `sum_i W_i tau(X_i) - tau(x)` given the truth at the rows.
pub fn smoothing_bias(weights: &SmootherWeights, tau_at_rows: &[f64], tau_at_x: f64) -> f64 {
    weights.apply(tau_at_rows) - tau_at_x
}

/// Product-of-errors diagnostic `|pi - pi_hat| (|mu1 - mu1_hat| + |mu0 - mu0_hat|)`.
pub fn nuisance_error_product(truth: &NuisanceSet, est: &NuisanceSet, x: &[f64]) -> f64 {
    (truth.pi(x) - est.pi(x)).abs() * ((truth.mu1(x) - est.mu1(x)).abs() + (truth.mu0(x) - est.mu0(x)).abs())
}
