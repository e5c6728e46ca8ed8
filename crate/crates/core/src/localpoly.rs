//! Local polynomial smoothing with a box kernel.
//!
//! The fit at `x0` is a least-squares polynomial of total degree `degree` in
//! `(x - x0) / h`, using only rows with `|x - x0| <= h` (Euclidean). The
//! fitted value is linear in the responses, `sum_i W_i(x0) y_i`, and the
//! weights are what the DR-Learner and the bootstrap operate on.

use nalgebra::{DMatrix, DVector};

use crate::basis::graded_multi_indices;
use crate::error::{Error, Result};
use crate::model::Covariates;

/// Linear smoother weights at one query point, stored sparsely.
#[derive(Clone, Debug, PartialEq)]
pub struct SmootherWeights {
    pub x0: Vec<f64>,
    /// Row indices with (possibly) nonzero weight, ascending.
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
    /// `(sum W_i^2)^(1/2)`
    pub s_value: f64,
    /// `sum |W_i|`
    pub t_value: f64,
    /// Bandwidth actually used (after any enlargement).
    pub bandwidth: f64,
}

impl SmootherWeights {
    pub fn from_parts(x0: Vec<f64>, indices: Vec<usize>, weights: Vec<f64>, bandwidth: f64) -> Self {
        let s_value = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
        let t_value = weights.iter().map(|w| w.abs()).sum();
        Self { x0, indices, weights, s_value, t_value, bandwidth }
    }

    /// `sum_i W_i v_i` for a vector indexed like the smoother's rows.
    pub fn apply(&self, values: &[f64]) -> f64 {
        self.indices.iter().zip(&self.weights).map(|(&i, w)| w * values[i]).sum()
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (&i, &w) in self.indices.iter().zip(&self.weights) {
            out[i] = w;
        }
        out
    }

    /// Weight attached to row `i` (zero outside the window).
    pub fn weight_of(&self, i: usize) -> f64 {
        match self.indices.binary_search(&i) {
            Ok(p) => self.weights[p],
            Err(_) => 0.0,
        }
    }
}

/// Rows sorted along the first axis for fast ball queries.
#[derive(Clone, Debug)]
pub struct BallIndex {
    order: Vec<usize>,
    keys: Vec<f64>,
}

impl BallIndex {
    pub fn new(xs: &Covariates) -> Self {
        let mut order: Vec<usize> = (0..xs.len()).collect();
        order.sort_by(|&a, &b| xs.row(a)[0].total_cmp(&xs.row(b)[0]).then(a.cmp(&b)));
        let keys = order.iter().map(|&i| xs.row(i)[0]).collect();
        Self { order, keys }
    }

    /// Indices with `|x_i - x0| <= radius`, ascending.
    pub fn query(&self, xs: &Covariates, x0: &[f64], radius: f64) -> Vec<usize> {
        let lo = self.keys.partition_point(|&k| k < x0[0] - radius);
        let hi = self.keys.partition_point(|&k| k <= x0[0] + radius);
        let r2 = radius * radius;
        let mut out: Vec<usize> =
            self.order[lo..hi].iter().copied().filter(|&i| sq_dist(xs.row(i), x0) <= r2).collect();
        out.sort_unstable();
        out
    }

    /// Index of the nearest row (ties broken by lowest index).
    pub fn nearest(&self, xs: &Covariates, x0: &[f64]) -> Option<usize> {
        (0..xs.len()).min_by(|&a, &b| sq_dist(xs.row(a), x0).total_cmp(&sq_dist(xs.row(b), x0)))
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Local polynomial smoother over a fixed set of design points.
#[derive(Clone, Debug)]
pub struct LocalPolySmoother {
    xs: Covariates,
    index: BallIndex,
    degree: u32,
    exponents: Vec<Vec<u32>>,
}

impl LocalPolySmoother {
    pub fn new(xs: Covariates, degree: u32) -> Self {
        let index = BallIndex::new(&xs);
        let exponents = graded_multi_indices(xs.dim(), degree);
        Self { xs, index, degree, exponents }
    }

    pub fn points(&self) -> &Covariates {
        &self.xs
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn n_basis(&self) -> usize {
        self.exponents.len()
    }

    pub fn window(&self, x0: &[f64], h: f64) -> Vec<usize> {
        self.index.query(&self.xs, x0, h)
    }

    pub fn nearest(&self, x0: &[f64]) -> Option<usize> {
        self.index.nearest(&self.xs, x0)
    }

    /// Weights at `x0`; a singular local design is retried once with the
    /// bandwidth doubled before giving up.
    pub fn weights(&self, x0: &[f64], h: f64) -> Result<SmootherWeights> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Config(format!("bandwidth must be positive, got {h}")));
        }
        if x0.len() != self.xs.dim() {
            return Err(Error::Shape { what: "query point", expected: self.xs.dim(), got: x0.len() });
        }
        match self.weights_exact(x0, h) {
            Ok(w) => Ok(w),
            Err(Error::DegenerateWindow { .. }) => self.weights_exact(x0, 2.0 * h),
            Err(e) => Err(e),
        }
    }

    /// Weights at `x0` with no bandwidth enlargement.
    pub fn weights_exact(&self, x0: &[f64], h: f64) -> Result<SmootherWeights> {
        let idx = self.window(x0, h);
        let p = self.exponents.len();
        let degenerate = || Error::DegenerateWindow { x0: x0.to_vec(), bandwidth: h, in_window: idx.len() };
        if idx.len() < p {
            return Err(degenerate());
        }
        let design = DMatrix::from_fn(idx.len(), p, |r, c| {
            let row = self.xs.row(idx[r]);
            self.exponents[c]
                .iter()
                .zip(row.iter().zip(x0))
                .filter(|(&e, _)| e > 0)
                .map(|(&e, (&xi, &ci))| ((xi - ci) / h).powi(e as i32))
                .product()
        });
        let gram = design.transpose() * &design;
        if !well_conditioned(&gram) {
            return Err(degenerate());
        }
        let chol = gram.clone().cholesky().ok_or_else(degenerate)?;
        let mut e0 = DVector::zeros(p);
        e0[0] = 1.0;
        let z = chol.solve(&e0);
        let w = design * z;
        Ok(SmootherWeights::from_parts(x0.to_vec(), idx, w.as_slice().to_vec(), h))
    }
}

/// Relative eigenvalue test on a symmetric positive semidefinite matrix.
pub(crate) fn well_conditioned(gram: &DMatrix<f64>) -> bool {
    let eig = gram.clone().symmetric_eigen().eigenvalues;
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    max > 0.0 && min > 1e-12 * max
}

/// One-shot local polynomial weights at `x0` over design points `xs`.
pub fn local_poly_weights(x0: &[f64], xs: &Covariates, h: f64, degree: u32) -> Result<SmootherWeights> {
    LocalPolySmoother::new(xs.clone(), degree).weights(x0, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn line(xs: &[f64]) -> Covariates {
        Covariates::new(xs.to_vec(), 1).unwrap()
    }

    #[test]
    fn degree_zero_is_window_mean() {
        let xs = line(&[0.0, 0.1, 0.2, 0.9]);
        let w = local_poly_weights(&[0.1], &xs, 0.15, 0).unwrap();
        assert_eq!(w.indices, vec![0, 1, 2]);
        for v in &w.weights {
            assert_abs_diff_eq!(*v, 1.0 / 3.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn three_point_linear_fit_matches_normal_equations() {
        // explicit 2x2 normal equations for intercept/slope at x0 = 0.5
        let pts = [0.0, 0.5, 1.0];
        let xs = line(&pts);
        let w = local_poly_weights(&[0.5], &xs, 10.0, 1).unwrap();
        let u: Vec<f64> = pts.iter().map(|x| (x - 0.5) / 10.0).collect();
        let (s0, s1, s2) = (3.0, u.iter().sum::<f64>(), u.iter().map(|v| v * v).sum::<f64>());
        let det = s0 * s2 - s1 * s1;
        for (i, &ui) in u.iter().enumerate() {
            let expected = (s2 - s1 * ui) / det;
            assert_abs_diff_eq!(w.weights[i], expected, epsilon = 1e-12);
        }
        // symmetric design: the fit at the centre is the plain mean
        for v in &w.weights {
            assert_abs_diff_eq!(*v, 1.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn weights_sum_to_one_and_vanish_outside() {
        let xs = line(&(0..50).map(|i| i as f64 / 49.0).collect::<Vec<_>>());
        let w = local_poly_weights(&[0.3], &xs, 0.2, 2).unwrap();
        assert_abs_diff_eq!(w.weight_sum(), 1.0, epsilon = 1e-10);
        for (i, x) in xs.rows().enumerate() {
            if (x[0] - 0.3).abs() > 0.2 {
                assert_eq!(w.weight_of(i), 0.0);
            }
        }
        let c = vec![4.2; 50];
        assert_abs_diff_eq!(w.apply(&c), 4.2, epsilon = 1e-10);
    }

    #[test]
    fn singular_window_enlarges_once() {
        let xs = line(&[0.0, 0.05, 0.3, 0.35]);
        // h = 0.1 sees two points; degree 2 needs three, so h doubles to 0.2
        // and sees {0.0, 0.05} again: degenerate.
        assert!(matches!(local_poly_weights(&[0.0], &xs, 0.1, 2), Err(Error::DegenerateWindow { .. })));
        // h = 0.2 -> 0.4 picks up all four points.
        let w = local_poly_weights(&[0.0], &xs, 0.2, 2).unwrap();
        assert_eq!(w.bandwidth, 0.4);
    }

    #[test]
    fn ball_query_matches_scan() {
        let xs = Covariates::new((0..200).map(|i| ((i * 37) % 101) as f64 / 100.0).collect(), 2).unwrap();
        let idx = BallIndex::new(&xs);
        let x0 = [0.4, 0.6];
        let got = idx.query(&xs, &x0, 0.25);
        let want: Vec<usize> = (0..xs.len()).filter(|&i| sq_dist(xs.row(i), &x0) <= 0.0625).collect();
        assert_eq!(got, want);
    }
}
