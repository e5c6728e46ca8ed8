//! Pointwise standard errors, multiplier-bootstrap sup-t critical values and
//! inner/outer confidence sets for level sets of linear-smoother estimates.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dr::{CateSurface, DrLearner, FittedSecondStage};
use crate::error::{Error, Result};
use crate::localpoly::SmootherWeights;
use crate::model::{threshold, EvalGrid, LevelSetMask};
use crate::rng::substream;

/// `sqrt(sum_i W_i^2 r_i^2)`.
pub fn pointwise_sd(weights: &SmootherWeights, residuals: &[f64]) -> Result<f64> {
    if weights.weights.iter().all(|w| *w == 0.0) {
        return Err(Error::UndefinedSigma);
    }
    if let Some(&max) = weights.indices.last() {
        if max >= residuals.len() {
            return Err(Error::Shape { what: "residuals", expected: max + 1, got: residuals.len() });
        }
    }
    Ok(weights.indices.iter().zip(&weights.weights).map(|(&i, w)| (w * residuals[i]).powi(2)).sum::<f64>().sqrt())
}

/// The linear map from row values to grid values.
#[derive(Clone, Debug)]
pub enum GridOperator {
    /// Per-cell sparse weights over global rows.
    Sparse { cells: Vec<SmootherWeights>, n_rows: usize },
    /// `left * right` with `left` cells x r and `right` r x rows.
    LowRank { left: DMatrix<f64>, right: DMatrix<f64> },
}

impl GridOperator {
    /// The grid operator of a fitted DR-Learner. Parametric second stages give
    /// a low-rank factorization.
    pub fn from_dr(learner: &DrLearner, grid: &EvalGrid) -> Result<Self> {
        let all_basis = learner.folds.iter().all(|f| matches!(f.stage, FittedSecondStage::Basis(_)));
        if !all_basis {
            let cells = grid
                .points()
                .rows()
                .collect::<Vec<_>>()
                .par_iter()
                .map(|v| learner.weights(v))
                .collect::<Result<Vec<_>>>()?;
            return Ok(GridOperator::Sparse { cells, n_rows: learner.n_total });
        }
        let scale = 1.0 / learner.folds.len() as f64;
        let rank: usize = learner
            .folds
            .iter()
            .map(|f| match &f.stage {
                FittedSecondStage::Basis(b) => b.spec.len(),
                FittedSecondStage::LocalPoly { .. } => 0,
            })
            .sum();
        let mut left = DMatrix::zeros(grid.len(), rank);
        let mut right = DMatrix::zeros(rank, learner.n_total);
        let mut off = 0;
        for f in &learner.folds {
            if let FittedSecondStage::Basis(b) = &f.stage {
                let p = b.spec.len();
                for (c, v) in grid.points().rows().enumerate() {
                    for (k, t) in b.spec.terms.iter().enumerate() {
                        left[(c, off + k)] = scale * t.eval(v);
                    }
                }
                for (local, &row) in f.rows.iter().enumerate() {
                    for k in 0..p {
                        right[(off + k, row)] = b.coef_map[(k, local)];
                    }
                }
                off += p;
            }
        }
        Ok(GridOperator::LowRank { left, right })
    }

    pub fn n_cells(&self) -> usize {
        match self {
            GridOperator::Sparse { cells, .. } => cells.len(),
            GridOperator::LowRank { left, .. } => left.nrows(),
        }
    }

    pub fn n_rows(&self) -> usize {
        match self {
            GridOperator::Sparse { n_rows, .. } => *n_rows,
            GridOperator::LowRank { right, .. } => right.ncols(),
        }
    }

    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        match self {
            GridOperator::Sparse { cells, .. } => cells.iter().map(|w| w.apply(values)).collect(),
            GridOperator::LowRank { left, right } => {
                let u = right * DVector::from_column_slice(values);
                (left * u).as_slice().to_vec()
            }
        }
    }

    /// Pointwise standard deviation at every cell.
    pub fn pointwise_sd(&self, residuals: &[f64]) -> Result<Vec<f64>> {
        if residuals.len() != self.n_rows() {
            return Err(Error::Shape { what: "residuals", expected: self.n_rows(), got: residuals.len() });
        }
        match self {
            GridOperator::Sparse { cells, .. } => cells.iter().map(|w| pointwise_sd(w, residuals)).collect(),
            GridOperator::LowRank { left, right } => {
                let scaled = scale_columns(right, residuals);
                let cov = &scaled * scaled.transpose();
                Ok((0..left.nrows())
                    .map(|c| {
                        let l = left.row(c);
                        (l * &cov * l.transpose())[(0, 0)].max(0.0).sqrt()
                    })
                    .collect())
            }
        }
    }
}

fn scale_columns(m: &DMatrix<f64>, s: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (j, &sj) in s.iter().enumerate() {
        out.column_mut(j).scale_mut(sj);
    }
    out
}

/// Bootstrap distribution of the sup-t statistic and its critical value.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BandResult {
    pub c_crit: f64,
    pub alpha: f64,
    pub n_boot: usize,
    pub seed: u64,
    /// Ascending.
    pub sup_samples: Vec<f64>,
}

impl BandResult {
    /// Empirical `1 - alpha` quantile of the stored draws.
    pub fn critical_value(&self, alpha: f64) -> f64 {
        upper_quantile(&self.sup_samples, alpha)
    }

    pub fn summary(&self) -> BandSummary {
        BandSummary { c_crit: self.c_crit, alpha: self.alpha, n_boot: self.n_boot, seed: self.seed }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandSummary {
    pub c_crit: f64,
    pub alpha: f64,
    pub n_boot: usize,
    pub seed: u64,
}

/// Order statistic at index `ceil((1 - alpha) B) - 1` of sorted samples.
pub fn upper_quantile(sorted: &[f64], alpha: f64) -> f64 {
    let b = sorted.len();
    let idx = ((1.0 - alpha) * b as f64 - 1e-9).ceil() as usize;
    sorted[idx.clamp(1, b) - 1]
}

/// Multiplier bootstrap: for each draw, `sup_x |sum_i W_i(x) r_i g_i| / sd(x)`
/// over cells with positive sd, with i.i.d. standard normal `g`.
pub fn sup_t_quantile(
    op: &GridOperator,
    residuals: &[f64],
    alpha: f64,
    n_boot: usize,
    seed: u64,
) -> Result<BandResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if n_boot < 1000 {
        return Err(Error::Config(format!("n_boot must be at least 1000, got {n_boot}")));
    }
    let sd = op.pointwise_sd(residuals)?;
    let active: Vec<usize> = (0..sd.len()).filter(|&c| sd[c] > 0.0).collect();
    if active.is_empty() {
        return Err(Error::DegenerateBand);
    }
    let n = op.n_rows();
    let draw = |b: usize, stat: &dyn Fn(&[f64]) -> f64| {
        let mut rng = substream(seed, "bootstrap", b as u64);
        let g: Vec<f64> = (0..n)
            .map(|i| {
                let z: f64 = StandardNormal.sample(&mut rng);
                residuals[i] * z
            })
            .collect();
        stat(&g)
    };
    let mut sup_samples: Vec<f64> = match op {
        GridOperator::Sparse { cells, .. } => {
            let stat = |rg: &[f64]| active.iter().map(|&c| (cells[c].apply(rg) / sd[c]).abs()).fold(0.0, f64::max);
            (0..n_boot).into_par_iter().map(|b| draw(b, &stat)).collect()
        }
        GridOperator::LowRank { left, right } => {
            let left_active = DMatrix::from_fn(active.len(), left.ncols(), |r, c| left[(active[r], c)] / sd[active[r]]);
            let stat = |rg: &[f64]| {
                let u = right * DVector::from_column_slice(rg);
                (&left_active * u).amax()
            };
            (0..n_boot).into_par_iter().map(|b| draw(b, &stat)).collect()
        }
    };
    sup_samples.sort_by(f64::total_cmp);
    Ok(BandResult { c_crit: upper_quantile(&sup_samples, alpha), alpha, n_boot, seed, sup_samples })
}

/// Inner and outer confidence sets together with the plug-in estimate.
#[derive(Clone, Debug)]
pub struct ConfidenceSets {
    pub c_lower: LevelSetMask,
    pub plug_in: LevelSetMask,
    pub c_upper: LevelSetMask,
    pub theta: f64,
    pub alpha: f64,
    pub c_crit: f64,
}

/// `C_l = {(tau_hat - theta)/sd > c}` and `C_u = {(tau_hat - theta)/sd >= -c}`;
/// cells with zero sd are decided by the sign of `tau_hat - theta` alone.
pub fn confidence_sets(surface: &CateSurface, theta: f64, band: &BandResult) -> Result<ConfidenceSets> {
    confidence_sets_with(surface, theta, band.c_crit, band.alpha)
}

pub fn confidence_sets_with(surface: &CateSurface, theta: f64, c_crit: f64, alpha: f64) -> Result<ConfidenceSets> {
    let se = surface
        .se
        .as_ref()
        .ok_or_else(|| Error::Config("confidence sets need pointwise standard errors on the surface".into()))?;
    if !theta.is_finite() {
        return Err(Error::Config(format!("theta must be finite, got {theta}")));
    }
    let (mut lower, mut upper) = (Vec::with_capacity(se.len()), Vec::with_capacity(se.len()));
    for (&t, &s) in surface.values.iter().zip(se) {
        let diff = t - theta;
        if s > 0.0 {
            lower.push(diff / s > c_crit);
            upper.push(diff / s >= -c_crit);
        } else {
            lower.push(diff > 0.0);
            upper.push(diff >= 0.0);
        }
    }
    let grid: Arc<EvalGrid> = Arc::clone(&surface.grid);
    Ok(ConfidenceSets {
        c_lower: LevelSetMask::new(theta, lower, Arc::clone(&grid))?,
        plug_in: threshold(&grid, &surface.values, theta)?,
        c_upper: LevelSetMask::new(theta, upper, grid)?,
        theta,
        alpha,
        c_crit,
    })
}

/// `(closed true set within C_u, C_l within open true set)`, cellwise.
pub fn check_inclusions(sets: &ConfidenceSets, truth_tau: &[f64], theta: f64) -> Result<(bool, bool)> {
    let n = sets.c_upper.member.len();
    if truth_tau.len() != n {
        return Err(Error::Shape { what: "truth on grid", expected: n, got: truth_tau.len() });
    }
    let outer = truth_tau.iter().zip(&sets.c_upper.member).all(|(&t, &u)| t < theta || u);
    let inner = truth_tau.iter().zip(&sets.c_lower.member).all(|(&t, &l)| !l || t > theta);
    Ok((outer, inner))
}

/// Fill in standard errors for a DR-Learner surface and compute the band.
pub fn dr_band(
    learner: &DrLearner,
    surface: CateSurface,
    alpha: f64,
    n_boot: usize,
    seed: u64,
) -> Result<(CateSurface, BandResult)> {
    let op = GridOperator::from_dr(learner, &surface.grid)?;
    let residuals = learner.residuals()?;
    let se = op.pointwise_sd(&residuals)?;
    let band = sup_t_quantile(&op, &residuals, alpha, n_boot, seed)?;
    Ok((surface.with_se(se)?, band))
}
