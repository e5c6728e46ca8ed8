//! Lp-R-Learner: a localized higher-order estimator built from shifted
//! Legendre bases, an indicator kernel on a Euclidean ball, and second-order
//! U-statistic corrections.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::graded_multi_indices;
use crate::dr::{CateSurface, SurfaceMeta};
use crate::error::{Error, Result};
use crate::localpoly::BallIndex;
use crate::model::{scalar_fn, Covariates, EvalGrid, ObservationSet, ScalarFn, SmoothnessConfig};
use crate::nuisance::NuisanceSet;
use crate::rng::substream;

/// Minimum eigenvalue of the nuisance-basis Gram matrix below which a window
/// is rejected.
pub const OMEGA_MIN_EIGENVALUE: f64 = 1e-10;
/// Largest tolerated condition number of the local projection matrix.
pub const Q_MAX_CONDITION: f64 = 1e12;

pub fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k.min(n));
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Monomial coefficients `theta_{0m}, ..., theta_{mm}` of the orthonormal
/// shifted Legendre polynomial of degree `m` on `[0, 1]`.
pub fn legendre_coeffs(m: u32) -> Vec<f64> {
    let scale = (2.0 * m as f64 + 1.0).sqrt();
    (0..=m)
        .map(|l| {
            let sign = if (l + m).is_multiple_of(2) { 1.0 } else { -1.0 };
            sign * scale * binom_f(m, l) * binom_f(m + l, l)
        })
        .collect()
}

fn binom_f(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Values `rho_0(x), ..., rho_max(x)` by the three-term recurrence (stable at
/// high degree where the monomial form is not).
pub fn shifted_legendre_all(max_degree: u32, x: f64, out: &mut [f64]) {
    let t = 2.0 * x - 1.0;
    let (mut p_prev, mut p) = (1.0, t);
    out[0] = 1.0;
    if max_degree >= 1 {
        out[1] = 3f64.sqrt() * t;
    }
    for m in 1..max_degree as usize {
        let next = ((2 * m + 1) as f64 * t * p - m as f64 * p_prev) / (m + 1) as f64;
        p_prev = p;
        p = next;
        out[m + 1] = (2.0 * (m + 1) as f64 + 1.0).sqrt() * p;
    }
}

/// Tensor-product shifted Legendre system on `[0,1]^d`: all products of
/// per-axis polynomials with total degree `<= max_degree`, in graded order,
/// optionally truncated to the first `len` terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LegendreBasis {
    pub d: usize,
    pub max_degree: u32,
    pub coeffs: Vec<Vec<f64>>,
    exponents: Vec<Vec<u32>>,
}

impl LegendreBasis {
    /// Complete basis of length `C(d + max_degree, max_degree)`.
    pub fn new(d: usize, max_degree: u32) -> Self {
        Self {
            d,
            max_degree,
            coeffs: (0..=max_degree).map(legendre_coeffs).collect(),
            exponents: graded_multi_indices(d, max_degree),
        }
    }

    /// Smallest complete basis holding `k` terms, truncated to exactly `k`.
    pub fn with_len(d: usize, k: usize) -> Result<Self> {
        if k == 0 || d == 0 {
            return Err(Error::Config("Legendre basis needs d >= 1 and k >= 1".into()));
        }
        let mut deg = 0u32;
        while binomial(d + deg as usize, deg as usize) < k {
            deg += 1;
        }
        let mut b = Self::new(d, deg);
        b.exponents.truncate(k);
        Ok(b)
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    /// Evaluate at `v` in `[0,1]^d`.
    pub fn eval(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.eval_into(v, &mut out);
        out
    }

    pub fn eval_into(&self, v: &[f64], out: &mut [f64]) {
        let stride = self.max_degree as usize + 1;
        let mut axis = vec![0.0; stride * self.d];
        for (j, &vj) in v.iter().enumerate() {
            shifted_legendre_all(self.max_degree, vj, &mut axis[j * stride..(j + 1) * stride]);
        }
        for (o, e) in out.iter_mut().zip(&self.exponents) {
            *o = e.iter().enumerate().map(|(j, &p)| axis[j * stride + p as usize]).product();
        }
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for m in 1..n {
                let p2 = ((2 * m + 1) as f64 * x * p1 - m as f64 * p0) / (m + 1) as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = (1.0 - x) / 2.0;
        weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Kernel window `{x : 2|x - x0| <= h}` and its affine map onto `[0,1]^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalWindow {
    pub x0: Vec<f64>,
    pub h: f64,
}

impl LocalWindow {
    pub fn new(x0: Vec<f64>, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Config(format!("bandwidth must be positive, got {h}")));
        }
        Ok(Self { x0, h })
    }

    pub fn kernel(&self, x: &[f64]) -> bool {
        let r2: f64 = x.iter().zip(&self.x0).map(|(a, b)| (a - b) * (a - b)).sum();
        4.0 * r2 <= self.h * self.h
    }

    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.x0).map(|(xi, ci)| 0.5 + (xi - ci) / self.h).collect()
    }

    pub fn from_unit(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.x0).map(|(vi, ci)| ci + self.h * (vi - 0.5)).collect()
    }
}

#[derive(Clone, Debug)]
pub struct OmegaEstimate {
    pub matrix: DMatrix<f64>,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
}

/// `int_{[0,1]^d} b(v) b(v)' dF(x0 + h (v - 1/2))` for a covariate density,
/// by tensor Gauss-Legendre quadrature.
pub fn estimate_omega(
    density: &dyn Fn(&[f64]) -> f64,
    window: &LocalWindow,
    b: &LegendreBasis,
) -> Result<OmegaEstimate> {
    let d = window.x0.len();
    if b.d != d {
        return Err(Error::Shape { what: "basis dimension", expected: d, got: b.d });
    }
    let k = b.len();
    let per_axis = (b.max_degree as usize + 8).max(32);
    let (nodes, weights) = gauss_legendre_unit(per_axis);
    let jac = window.h.powi(d as i32);
    let mut omega = DMatrix::<f64>::zeros(k, k);
    let mut idx = vec![0usize; d];
    let mut v = vec![0.0; d];
    let mut bv = vec![0.0; k];
    let total = per_axis.pow(d as u32);
    for _ in 0..total {
        let mut w = jac;
        for j in 0..d {
            v[j] = nodes[idx[j]];
            w *= weights[idx[j]];
        }
        let f = density(&window.from_unit(&v));
        if f != 0.0 {
            b.eval_into(&v, &mut bv);
            let wf = w * f;
            for r in 0..k {
                let br = wf * bv[r];
                for c in r..k {
                    omega[(r, c)] += br * bv[c];
                }
            }
        }
        for j in (0..d).rev() {
            idx[j] += 1;
            if idx[j] < per_axis {
                break;
            }
            idx[j] = 0;
        }
    }
    for r in 0..k {
        for c in 0..r {
            omega[(r, c)] = omega[(c, r)];
        }
    }
    let mut eigenvalues: Vec<f64> = omega.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    if !(eigenvalues[0] >= OMEGA_MIN_EIGENVALUE) {
        return Err(Error::IllConditioned { x0: window.x0.clone(), h: window.h, k, min_eigenvalue: eigenvalues[0] });
    }
    Ok(OmegaEstimate { matrix: omega, eigenvalues })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    HighSmoothness,
    LowSmoothness,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningParams {
    pub h: f64,
    pub k: usize,
    pub regime: Regime,
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "T_prime")]
    pub t_prime: f64,
    /// Pointwise rate inside the near-level band.
    pub r_n: f64,
    /// Pointwise rate away from the level.
    pub r_n_prime: f64,
}

impl TuningParams {
    pub fn new(h: f64, k: usize, regime: Regime) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) || k == 0 {
            return Err(Error::Config(format!("invalid tuning h = {h}, k = {k}")));
        }
        Ok(Self { h, k, regime, t: f64::NAN, t_prime: f64::NAN, r_n: f64::NAN, r_n_prime: f64::NAN })
    }
}

/// Rounds up, treating values within 1e-9 of an integer as that integer.
fn ceil_robust(v: f64) -> usize {
    ((v - 1e-9).ceil().max(1.0)) as usize
}

fn is_high_smoothness(s: f64, d: f64, gamma: f64) -> bool {
    let thr = (d / 4.0) / (1.0 + d / (2.0 * gamma));
    s >= thr - 1e-12 * thr.max(1.0)
}

/// Bandwidth and nuisance-basis size from the smoothness regime.
pub fn select_tuning(cfg: &SmoothnessConfig, d: usize, n: usize) -> Result<TuningParams> {
    if n < 2 || d == 0 {
        return Err(Error::Config(format!("tuning needs n >= 2 and d >= 1, got n = {n}, d = {d}")));
    }
    let (nf, df, s) = (n as f64, d as f64, cfg.s());
    let t = 1.0 + df / (4.0 * s) + df / (2.0 * cfg.gamma);
    let t_prime = 1.0 + df / (4.0 * s) + df / (2.0 * cfg.gamma_prime);
    let rate = |g: f64, tt: f64| {
        if is_high_smoothness(s, df, g) {
            nf.powf(-g / (2.0 * g + df))
        } else {
            nf.powf(-1.0 / tt)
        }
    };
    let (h, k, regime) = if is_high_smoothness(s, df, cfg.gamma) {
        let h = nf.powf(-1.0 / (2.0 * cfg.gamma + df));
        (h, ceil_robust(nf * h.powf(df)), Regime::HighSmoothness)
    } else {
        let h = nf.powf(-1.0 / (t * cfg.gamma));
        let k = ceil_robust(nf.powf((df / (2.0 * s) - df / cfg.gamma) / t));
        (h, k, Regime::LowSmoothness)
    };
    Ok(TuningParams { h, k, regime, t, t_prime, r_n: rate(cfg.gamma, t), r_n_prime: rate(cfg.gamma_prime, t_prime) })
}

/// How the second-order U-statistic terms are computed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum UStatMode {
    /// Every ordered pair (exact, via a factorized sum).
    Complete,
    /// A uniform sample of ordered in-window pairs, rescaled to the full sum.
    Incomplete { pairs: usize, seed: u64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PointDiagnostics {
    pub x0: Vec<f64>,
    pub in_window: usize,
    pub omega_eigenvalues: Vec<f64>,
    pub q_eigenvalues: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct LprPoint {
    pub tau_hat: f64,
    pub diagnostics: PointDiagnostics,
}

/// Second-stage rows with nuisances evaluated once.
#[derive(Clone)]
pub struct LprLearner {
    x: Covariates,
    a: Vec<f64>,
    ra: Vec<f64>,
    ry: Vec<f64>,
    index: BallIndex,
    density: ScalarFn,
    pub tuning: TuningParams,
    pub rho: LegendreBasis,
    pub b: LegendreBasis,
}

impl std::fmt::Debug for LprLearner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LprLearner").field("n", &self.x.len()).field("tuning", &self.tuning).finish()
    }
}

impl LprLearner {
    /// `gamma_floor` sets the local basis degree; the nuisance basis has
    /// `tuning.k` terms.
    pub fn new(data_z: &ObservationSet, nuis: &NuisanceSet, tuning: TuningParams, gamma_floor: u32) -> Result<Self> {
        let density = nuis
            .density()
            .cloned()
            .ok_or_else(|| Error::Config("the Lp-R-Learner needs a covariate density estimate".into()))?;
        let d = data_z.dim();
        let x = data_z.x().clone();
        let mut a = Vec::with_capacity(x.len());
        let mut ra = Vec::with_capacity(x.len());
        let mut ry = Vec::with_capacity(x.len());
        for i in 0..data_z.len() {
            let xi = x.row(i);
            let ai = data_z.a()[i] as f64;
            a.push(ai);
            ra.push(ai - nuis.pi(xi));
            ry.push(data_z.y()[i] - nuis.mu0(xi));
        }
        Ok(Self {
            index: BallIndex::new(&x),
            x,
            a,
            ra,
            ry,
            density,
            rho: LegendreBasis::new(d, gamma_floor),
            b: LegendreBasis::with_len(d, tuning.k)?,
            tuning,
        })
    }

    pub fn dim(&self) -> usize {
        self.x.dim()
    }

    /// Estimate at `x0`. `stream` indexes the pair-sampling substream in
    /// incomplete mode.
    pub fn fit_point(&self, x0: &[f64], mode: UStatMode, stream: u64) -> Result<LprPoint> {
        let window = LocalWindow::new(x0.to_vec(), self.tuning.h)?;
        let idx = self.index.query(&self.x, x0, self.tuning.h / 2.0);
        if idx.len() < 2 {
            return Err(Error::Window {
                x0: x0.to_vec(),
                message: format!("{} rows inside the kernel window", idx.len()),
            });
        }
        let omega = estimate_omega(&*self.density, &window, &self.b)?;
        let omega_inv = omega
            .matrix
            .clone()
            .cholesky()
            .ok_or(Error::IllConditioned {
                x0: x0.to_vec(),
                h: window.h,
                k: self.b.len(),
                min_eigenvalue: omega.eigenvalues[0],
            })?
            .inverse();

        let (m, j, k) = (idx.len(), self.rho.len(), self.b.len());
        let mut rho_w = DMatrix::<f64>::zeros(j, m);
        let mut b_w = DMatrix::<f64>::zeros(k, m);
        for (c, &i) in idx.iter().enumerate() {
            let v = window.to_unit(self.x.row(i));
            rho_w.set_column(c, &DVector::from_vec(self.rho.eval(&v)));
            b_w.set_column(c, &DVector::from_vec(self.b.eval(&v)));
        }
        let n = self.x.len() as f64;
        let (a, ra, ry): (Vec<f64>, Vec<f64>, Vec<f64>) = (
            idx.iter().map(|&i| self.a[i]).collect(),
            idx.iter().map(|&i| self.ra[i]).collect(),
            idx.iter().map(|&i| self.ry[i]).collect(),
        );

        // first-order terms
        let mut q = DMatrix::<f64>::zeros(j, j);
        let mut r = DVector::<f64>::zeros(j);
        for c in 0..m {
            let rc = rho_w.column(c);
            q += (rc * rc.transpose()) * (a[c] * ra[c] / n);
            r += rc * (ry[c] * ra[c] / n);
        }

        // second-order terms: weights u_i with Q2 = sum u_i rho_i rho_i', R2 = sum w_i rho_i
        let pair_norm = n * (n - 1.0);
        let (mut uq, mut ur) = (vec![0.0; m], vec![0.0; m]);
        let proj = &omega_inv * &b_w; // k x m, columns Omega^{-1} b_j
        let pairs_total = m * (m - 1);
        match mode {
            UStatMode::Incomplete { pairs, seed } if pairs < pairs_total => {
                let mut rng = substream(seed, "pairs", stream);
                let scale = pairs_total as f64 / pairs as f64;
                for _ in 0..pairs {
                    let i = rng.random_range(0..m);
                    let mut jj = rng.random_range(0..m - 1);
                    if jj >= i {
                        jj += 1;
                    }
                    let kern = b_w.column(i).dot(&proj.column(jj));
                    uq[i] -= scale * ra[i] * kern * a[jj];
                    ur[i] -= scale * ra[i] * kern * ry[jj];
                }
            }
            _ => {
                let sa = &b_w * DVector::from_column_slice(&a);
                let sy = &b_w * DVector::from_column_slice(&ry);
                let ta = &omega_inv * sa;
                let ty = &omega_inv * sy;
                for c in 0..m {
                    let bc = b_w.column(c);
                    let self_kern = bc.dot(&proj.column(c));
                    let ka = bc.dot(&ta) - self_kern * a[c];
                    let ky = bc.dot(&ty) - self_kern * ry[c];
                    uq[c] = -ra[c] * ka;
                    ur[c] = -ra[c] * ky;
                }
            }
        }
        for c in 0..m {
            let rc = rho_w.column(c);
            q += (rc * rc.transpose()) * (uq[c] / pair_norm);
            r += rc * (ur[c] / pair_norm);
        }

        let mut q_eigs: Vec<f64> = q.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        q_eigs.sort_by(f64::total_cmp);
        let abs_max = q_eigs.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let abs_min = q_eigs.iter().fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
        let condition = abs_max / abs_min;
        if !(condition.is_finite() && condition <= Q_MAX_CONDITION) {
            return Err(Error::SingularDesign { condition });
        }
        let sol = q.lu().solve(&r).ok_or(Error::SingularDesign { condition })?;
        let centre = self.rho.eval(&vec![0.5; self.dim()]);
        let tau_hat = centre.iter().zip(sol.iter()).map(|(c, s)| c * s).sum();
        Ok(LprPoint {
            tau_hat,
            diagnostics: PointDiagnostics {
                x0: x0.to_vec(),
                in_window: m,
                omega_eigenvalues: omega.eigenvalues,
                q_eigenvalues: q_eigs,
            },
        })
    }

    /// Estimates over a grid, in grid order.
    pub fn fit_grid(&self, grid: &EvalGrid, mode: UStatMode) -> Result<Vec<LprPoint>> {
        if grid.dim() != self.dim() {
            return Err(Error::Shape { what: "grid dimension", expected: self.dim(), got: grid.dim() });
        }
        let pts: Vec<&[f64]> = grid.points().rows().collect();
        pts.par_iter().enumerate().map(|(i, x0)| self.fit_point(x0, mode, i as u64)).collect()
    }

    pub fn surface(
        self: &Arc<Self>,
        grid: &Arc<EvalGrid>,
        mode: UStatMode,
    ) -> Result<(CateSurface, Vec<PointDiagnostics>)> {
        let fits = self.fit_grid(grid, mode)?;
        let values = fits.iter().map(|p| p.tau_hat).collect();
        let diags = fits.into_iter().map(|p| p.diagnostics).collect();
        let me = Arc::clone(self);
        let meta = SurfaceMeta::new("lpr")
            .with("h", self.tuning.h)
            .with("k", self.tuning.k)
            .with("regime", self.tuning.regime)
            .with("T", self.tuning.t)
            .with("T_prime", self.tuning.t_prime)
            .with("r_n", self.tuning.r_n)
            .with("J", self.rho.len())
            .with("u_statistic", mode);
        let surf = CateSurface::from_values(
            Arc::clone(grid),
            values,
            scalar_fn(move |x| me.fit_point(x, mode, 0).map(|p| p.tau_hat).unwrap_or(f64::NAN)),
            meta,
        )?;
        Ok((surf, diags))
    }
}

/// One-shot point estimate.
pub fn lp_r_fit_point(
    data_z: &ObservationSet,
    nuis: &NuisanceSet,
    x0: &[f64],
    tuning: &TuningParams,
    gamma_floor: u32,
    mode: UStatMode,
) -> Result<LprPoint> {
    LprLearner::new(data_z, nuis, tuning.clone(), gamma_floor)?.fit_point(x0, mode, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn quad_gram(max_degree: u32) -> DMatrix<f64> {
        let (nodes, weights) = gauss_legendre_unit(64);
        let p = max_degree as usize + 1;
        let mut g = DMatrix::zeros(p, p);
        let mut vals = vec![0.0; p];
        for (x, w) in nodes.iter().zip(&weights) {
            shifted_legendre_all(max_degree, *x, &mut vals);
            for r in 0..p {
                for c in 0..p {
                    g[(r, c)] += w * vals[r] * vals[c];
                }
            }
        }
        g
    }

    #[test]
    fn coefficient_table() {
        assert_eq!(legendre_coeffs(0), vec![1.0]);
        let s3 = 3f64.sqrt();
        let c1 = legendre_coeffs(1);
        assert_abs_diff_eq!(c1[0], -s3, epsilon = 1e-14);
        assert_abs_diff_eq!(c1[1], 2.0 * s3, epsilon = 1e-14);
        let s5 = 5f64.sqrt();
        let c2 = legendre_coeffs(2);
        for (got, want) in c2.iter().zip([s5, -6.0 * s5, 6.0 * s5]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-13);
        }
    }

    #[test]
    fn recurrence_matches_monomial_form() {
        let mut vals = vec![0.0; 7];
        for &x in &[0.0, 0.13, 0.5, 0.77, 1.0] {
            shifted_legendre_all(6, x, &mut vals);
            for m in 0..=6u32 {
                let mono: f64 = legendre_coeffs(m).iter().enumerate().map(|(l, c)| c * x.powi(l as i32)).sum();
                assert_abs_diff_eq!(vals[m as usize], mono, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre_unit(5);
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
        // degree 9 is exact for 5 nodes
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(9)).sum();
        assert_abs_diff_eq!(integral, 0.1, epsilon = 1e-14);
    }

    #[test]
    fn gram_is_identity() {
        let g = quad_gram(6);
        assert!((g - DMatrix::identity(7, 7)).abs().max() < 1e-12);
    }

    #[test]
    fn tensor_layout() {
        let b = LegendreBasis::new(2, 1);
        assert_eq!(b.len(), 3);
        let v = b.eval(&[0.2, 0.9]);
        let s3 = 3f64.sqrt();
        assert_abs_diff_eq!(v[0], 1.0);
        assert_abs_diff_eq!(v[1], s3 * (0.4 - 1.0), epsilon = 1e-14);
        assert_abs_diff_eq!(v[2], s3 * (1.8 - 1.0), epsilon = 1e-14);
        assert_eq!(LegendreBasis::new(3, 2).len(), binomial(5, 2));
        assert_eq!(LegendreBasis::with_len(2, 4).unwrap().len(), 4);
        assert_eq!(LegendreBasis::with_len(2, 4).unwrap().max_degree, 2);
    }

    #[test]
    fn omega_under_uniform_density_is_identity() {
        let w = LocalWindow::new(vec![0.3, 0.4], 0.2).unwrap();
        let dens = |_: &[f64]| 1.0 / 0.04;
        let b = LegendreBasis::with_len(2, 6).unwrap();
        let om = estimate_omega(&dens, &w, &b).unwrap();
        assert!((om.matrix - DMatrix::identity(6, 6)).abs().max() < 1e-10);
    }

    #[test]
    fn omega_linear_density_closed_form() {
        // f(x) = 2x on [0,1] and the window is exactly [0,1]
        let w = LocalWindow::new(vec![0.5], 1.0).unwrap();
        let dens = |x: &[f64]| 2.0 * x[0];
        let b = LegendreBasis::with_len(1, 2).unwrap();
        let om = estimate_omega(&dens, &w, &b).unwrap();
        let s3 = 3f64.sqrt();
        // int 2v dv = 1; int 2v s3(2v-1) dv = s3/3; int 2v 3(2v-1)^2 dv = 1
        assert_abs_diff_eq!(om.matrix[(0, 0)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(om.matrix[(0, 1)], s3 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(om.matrix[(1, 1)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn omega_scalar_is_window_mass() {
        let w = LocalWindow::new(vec![0.5], 0.5).unwrap();
        let dens = |_: &[f64]| 1.0;
        let om = estimate_omega(&dens, &w, &LegendreBasis::with_len(1, 1).unwrap()).unwrap();
        assert_abs_diff_eq!(om.matrix[(0, 0)], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn tuning_cases() {
        let hi = SmoothnessConfig::new(1.0, 1.0, 1.0, 1.0, 0.1, 1.0).unwrap();
        let t = select_tuning(&hi, 1, 1000).unwrap();
        assert_eq!(t.regime, Regime::HighSmoothness);
        assert_abs_diff_eq!(t.h, 0.1, epsilon = 1e-12);
        assert_eq!(t.k, 100);
        let lo = SmoothnessConfig::new(1.0, 1.0, 0.1, 0.1, 0.1, 1.0).unwrap();
        let t = select_tuning(&lo, 1, 10_000).unwrap();
        assert_eq!(t.regime, Regime::LowSmoothness);
        assert_abs_diff_eq!(t.t, 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.h, 0.1, epsilon = 1e-12);
        assert_eq!(t.k, 10_000);
        // boundary: s = (1/4)/(1 + 1/2) = 1/6
        let edge = SmoothnessConfig::new(1.0, 1.0, 1.0 / 6.0, 1.0 / 6.0, 0.1, 1.0).unwrap();
        assert_eq!(select_tuning(&edge, 1, 100).unwrap().regime, Regime::HighSmoothness);
    }

    #[test]
    fn empty_window_is_an_error() {
        use crate::nuisance::Provenance;
        let x = Covariates::new(vec![0.1, 0.2, 0.3, 0.9], 1).unwrap();
        let data = ObservationSet::new(vec![0.0; 4], vec![0, 1, 0, 1], x).unwrap();
        let nuis =
            NuisanceSet::new(scalar_fn(|_| 0.5), scalar_fn(|_| 0.0), scalar_fn(|_| 0.0), 0.01, Provenance::Oracle)
                .unwrap()
                .with_density(scalar_fn(|_| 1.0));
        let tuning = TuningParams::new(0.1, 1, Regime::HighSmoothness).unwrap();
        let err = lp_r_fit_point(&data, &nuis, &[0.6], &tuning, 0, UStatMode::Complete).unwrap_err();
        assert!(matches!(err, Error::Window { .. }));
    }
}
