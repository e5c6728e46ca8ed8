//! Domain types shared by every estimator: observations, evaluation grids,
//! level-set masks, the two set losses and the margin diagnostic.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An evaluable real function of a covariate vector.
pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Wrap a closure as a [`ScalarFn`].
pub fn scalar_fn<F>(f: F) -> ScalarFn
where
    F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
{
    Arc::new(f)
}

/// Row-major matrix of covariate vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct Covariates {
    values: Vec<f64>,
    dim: usize,
}

impl Covariates {
    pub fn new(values: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("covariate dimension must be at least 1".into()));
        }
        if !values.len().is_multiple_of(dim) {
            return Err(Error::Shape {
                what: "covariate buffer",
                expected: (values.len() / dim + 1) * dim,
                got: values.len(),
            });
        }
        Ok(Self { values, dim })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).unwrap_or(1);
        let mut values = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::Shape { what: "covariate row", expected: dim, got: r.len() });
            }
            values.extend_from_slice(r);
        }
        Self::new(values, dim)
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        let mut values = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        Self { values, dim: self.dim }
    }

    /// Keep only the listed columns (in the given order).
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if cols.is_empty() {
            return Err(Error::Config("column selection is empty".into()));
        }
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.dim) {
            return Err(Error::Config(format!("column index {bad} out of range for dimension {}", self.dim)));
        }
        let mut values = Vec::with_capacity(self.len() * cols.len());
        for r in self.rows() {
            values.extend(cols.iter().map(|&c| r[c]));
        }
        Ok(Self { values, dim: cols.len() })
    }
}

/// Observed rows `(y, a, x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSet {
    y: Vec<f64>,
    a: Vec<u8>,
    x: Covariates,
}

impl ObservationSet {
    pub fn new(y: Vec<f64>, a: Vec<u8>, x: Covariates) -> Result<Self> {
        let n = y.len();
        if a.len() != n {
            return Err(Error::Shape { what: "treatment column", expected: n, got: a.len() });
        }
        if x.len() != n {
            return Err(Error::Shape { what: "covariate rows", expected: n, got: x.len() });
        }
        if let Some(i) = a.iter().position(|&v| v > 1) {
            return Err(Error::Data { line: i + 1, message: format!("treatment must be 0 or 1, got {}", a[i]) });
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data { line: i + 1, message: "non-finite outcome".into() });
        }
        if let Some(p) = x.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::Data { line: p / x.dim() + 1, message: "non-finite covariate".into() });
        }
        Ok(Self { y, a, x })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.dim()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn a(&self) -> &[u8] {
        &self.a
    }

    pub fn x(&self) -> &Covariates {
        &self.x
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            y: idx.iter().map(|&i| self.y[i]).collect(),
            a: idx.iter().map(|&i| self.a[i]).collect(),
            x: self.x.subset(idx),
        }
    }
}

/// Equally spaced midpoint grid over a box, with per-cell quadrature measure.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalGrid {
    bounds: Vec<(f64, f64)>,
    resolution: usize,
    points: Covariates,
    cell_volume: f64,
    density: Vec<f64>,
}

impl EvalGrid {
    /// Grid with unit density (cell measures are plain Lebesgue volumes).
    pub fn new(bounds: Vec<(f64, f64)>, resolution: usize) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::Config("grid needs at least one axis".into()));
        }
        if resolution < 2 {
            return Err(Error::Config(format!("grid resolution must be >= 2, got {resolution}")));
        }
        for &(lo, hi) in &bounds {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!("invalid grid axis [{lo}, {hi}]")));
            }
        }
        let d = bounds.len();
        let total = resolution.checked_pow(d as u32).ok_or_else(|| Error::Config("grid too large".into()))?;
        let spacing: Vec<f64> = bounds.iter().map(|&(lo, hi)| (hi - lo) / resolution as f64).collect();
        let mut values = Vec::with_capacity(total * d);
        let mut idx = vec![0usize; d];
        for _ in 0..total {
            for (k, &i) in idx.iter().enumerate() {
                values.push(bounds[k].0 + (i as f64 + 0.5) * spacing[k]);
            }
            // lexicographic order, last axis fastest
            for k in (0..d).rev() {
                idx[k] += 1;
                if idx[k] < resolution {
                    break;
                }
                idx[k] = 0;
            }
        }
        Ok(Self {
            cell_volume: spacing.iter().product(),
            density: vec![1.0; total],
            bounds,
            resolution,
            points: Covariates { values, dim: d },
        })
    }

    /// Replace the density evaluated at each grid point.
    pub fn with_density(mut self, density: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let dens: Vec<f64> = self.points.rows().map(density).collect();
        if let Some(v) = dens.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Domain(format!("density must be finite and nonnegative, got {v}")));
        }
        self.density = dens;
        Ok(self)
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn points(&self) -> &Covariates {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    /// Quadrature weight of each cell: volume times density.
    pub fn cell_measure(&self) -> Vec<f64> {
        self.density.iter().map(|f| f * self.cell_volume).collect()
    }

    /// Evaluate a function at every grid point.
    pub fn map(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        self.points.rows().map(f).collect()
    }

    fn same_layout(&self, other: &EvalGrid) -> bool {
        self.resolution == other.resolution && self.bounds == other.bounds
    }
}

/// Membership of each grid point in an estimated or true level set.
#[derive(Clone, Debug)]
pub struct LevelSetMask {
    pub theta: f64,
    pub member: Vec<bool>,
    pub grid: Arc<EvalGrid>,
}

impl LevelSetMask {
    pub fn new(theta: f64, member: Vec<bool>, grid: Arc<EvalGrid>) -> Result<Self> {
        if member.len() != grid.len() {
            return Err(Error::Shape { what: "mask", expected: grid.len(), got: member.len() });
        }
        Ok(Self { theta, member, grid })
    }

    pub fn full(theta: f64, grid: Arc<EvalGrid>) -> Self {
        Self { theta, member: vec![true; grid.len()], grid }
    }

    pub fn empty(theta: f64, grid: Arc<EvalGrid>) -> Self {
        Self { theta, member: vec![false; grid.len()], grid }
    }

    pub fn count(&self) -> usize {
        self.member.iter().filter(|&&m| m).count()
    }

    /// Cellwise inclusion `self ⊆ other`.
    pub fn is_subset_of(&self, other: &LevelSetMask) -> Result<bool> {
        check_same_grid(self, other)?;
        Ok(self.member.iter().zip(&other.member).all(|(&a, &b)| !a || b))
    }

    pub fn shares_grid(&self, other: &LevelSetMask) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || self.grid.same_layout(&other.grid)
    }
}

fn check_same_grid(a: &LevelSetMask, b: &LevelSetMask) -> Result<()> {
    if a.shares_grid(b) {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Shape { what, expected, got })
    }
}

/// Plug-in upper level set `{x : value(x) > theta}`.
pub fn threshold(grid: &Arc<EvalGrid>, values: &[f64], theta: f64) -> Result<LevelSetMask> {
    threshold_with(grid, values, theta, false)
}

/// Closed variant `{x : value(x) >= theta}`.
pub fn threshold_closed(grid: &Arc<EvalGrid>, values: &[f64], theta: f64) -> Result<LevelSetMask> {
    threshold_with(grid, values, theta, true)
}

fn threshold_with(grid: &Arc<EvalGrid>, values: &[f64], theta: f64, closed: bool) -> Result<LevelSetMask> {
    check_len("threshold values", grid.len(), values.len())?;
    if !theta.is_finite() {
        return Err(Error::Config("theta must be finite".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("threshold values must be finite".into()));
    }
    let member = values.iter().map(|&v| if closed { v >= theta } else { v > theta }).collect();
    Ok(LevelSetMask { theta, member, grid: Arc::clone(grid) })
}

/// Density-weighted measure of the symmetric difference of two masks.
pub fn loss_d_delta(a: &LevelSetMask, b: &LevelSetMask, density: &[f64]) -> Result<f64> {
    check_same_grid(a, b)?;
    check_len("density", a.member.len(), density.len())?;
    let vol = a.grid.cell_volume();
    Ok(a.member.iter().zip(&b.member).zip(density).filter(|((x, y), _)| x != y).map(|(_, f)| f * vol).sum())
}

/// Symmetric difference weighted by `|tau - theta|` and the density.
pub fn loss_d_h(a: &LevelSetMask, b: &LevelSetMask, tau_values: &[f64], theta: f64, density: &[f64]) -> Result<f64> {
    check_same_grid(a, b)?;
    check_len("density", a.member.len(), density.len())?;
    check_len("tau values", a.member.len(), tau_values.len())?;
    let vol = a.grid.cell_volume();
    Ok(a.member
        .iter()
        .zip(&b.member)
        .zip(tau_values.iter().zip(density))
        .filter(|((x, y), _)| x != y)
        .map(|(_, (t, f))| (t - theta).abs() * f * vol)
        .sum())
}

/// Fitted margin exponent from `P(0 < |tau(X) - theta| < t) ~ c0 t^xi`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MarginFit {
    /// `None` when fewer than two radii carry positive mass.
    pub xi_hat: Option<f64>,
    pub c0_hat: Option<f64>,
    pub t_grid: Vec<f64>,
    pub empirical_probs: Vec<f64>,
}

impl MarginFit {
    pub fn is_defined(&self) -> bool {
        self.xi_hat.is_some()
    }
}

/// Empirical margin probabilities and a log-log least-squares fit.
pub fn fit_margin(tau_samples: &[f64], theta: f64, t_grid: &[f64]) -> Result<MarginFit> {
    if tau_samples.is_empty() {
        return Err(Error::Config("margin fit needs at least one sample".into()));
    }
    if t_grid.is_empty() || t_grid.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        return Err(Error::Config("t_grid must hold positive finite radii".into()));
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("t_grid must be strictly increasing".into()));
    }
    let mut dist: Vec<f64> = tau_samples.iter().map(|&t| (t - theta).abs()).filter(|&d| d > 0.0).collect();
    dist.sort_by(|a, b| a.total_cmp(b));
    let n = tau_samples.len() as f64;
    let empirical_probs: Vec<f64> = t_grid.iter().map(|&t| dist.partition_point(|&d| d < t) as f64 / n).collect();

    let pts: Vec<(f64, f64)> =
        t_grid.iter().zip(&empirical_probs).filter(|(_, &p)| p > 0.0).map(|(&t, &p)| (t.ln(), p.ln())).collect();
    if pts.len() < 2 {
        log::warn!("no mass near level {theta}: margin exponent undefined");
        return Ok(MarginFit { xi_hat: None, c0_hat: None, t_grid: t_grid.to_vec(), empirical_probs });
    }
    let (slope, intercept) = least_squares_line(&pts);
    Ok(MarginFit {
        xi_hat: Some(slope.max(0.0)),
        c0_hat: Some(intercept.exp()),
        t_grid: t_grid.to_vec(),
        empirical_probs,
    })
}

/// Ordinary least-squares `(slope, intercept)` of `y` on `x`.
pub(crate) fn least_squares_line(pts: &[(f64, f64)]) -> (f64, f64) {
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

/// Smoothness model: `tau` is `gamma`-smooth within `eta` of the level and
/// `gamma_prime`-smooth elsewhere; the propensity and baseline outcome
/// errors are `alpha`- and `beta`-smooth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessConfig {
    pub gamma: f64,
    pub gamma_prime: f64,
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    pub xi: f64,
    s: f64,
}

impl SmoothnessConfig {
    pub fn new(gamma: f64, gamma_prime: f64, alpha: f64, beta: f64, eta: f64, xi: f64) -> Result<Self> {
        for (name, v) in
            [("gamma", gamma), ("gamma_prime", gamma_prime), ("alpha", alpha), ("beta", beta), ("eta", eta)]
        {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(xi >= 0.0 && xi.is_finite()) {
            return Err(Error::Config(format!("xi must be nonnegative, got {xi}")));
        }
        Ok(Self { gamma, gamma_prime, alpha, beta, eta, xi, s: (alpha + beta) / 2.0 })
    }

    /// Average nuisance smoothness `(alpha + beta) / 2`.
    pub fn s(&self) -> f64 {
        self.s
    }
}

impl fmt::Display for SmoothnessConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "gamma={} gamma'={} alpha={} beta={} s={} eta={} xi={}",
            self.gamma, self.gamma_prime, self.alpha, self.beta, self.s, self.eta, self.xi
        )
    }
}

/// The near-level band `D(eta) = {x : |tau(x) - theta| <= eta}` on a grid.
pub fn near_level_band(tau_values: &[f64], theta: f64, eta: f64) -> Vec<bool> {
    tau_values.iter().map(|t| (t - theta).abs() <= eta).collect()
}
