//! Finite design bases for parametric second stages and parametric truths.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponent vectors of total degree `<= max_degree` in `d` variables, in
/// graded order: by total degree, then descending lexicographic within a
/// degree, so `d = 2, max_degree = 1` gives `(0,0), (1,0), (0,1)`.
pub fn graded_multi_indices(d: usize, max_degree: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for total in 0..=max_degree {
        let mut level = Vec::new();
        compositions(d, total, &mut Vec::with_capacity(d), &mut level);
        out.extend(level);
    }
    out
}

fn compositions(d: usize, remaining: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if prefix.len() + 1 == d {
        prefix.push(remaining);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for first in (0..=remaining).rev() {
        prefix.push(first);
        compositions(d, remaining - first, prefix, out);
        prefix.pop();
    }
}

/// One product term: an optional indicator `1(x_col == value)` times a monomial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub powers: Vec<u32>,
    pub indicator: Option<(usize, f64)>,
}

impl Term {
    pub fn monomial(powers: Vec<u32>) -> Self {
        Self { powers, indicator: None }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        if let Some((col, v)) = self.indicator {
            if x[col] != v {
                return 0.0;
            }
        }
        self.powers.iter().zip(x).filter(|(&p, _)| p > 0).map(|(&p, &xi)| xi.powi(p as i32)).product()
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some((col, v)) = self.indicator {
            parts.push(format!("[x{}={}]", col + 1, v));
        }
        for (i, &p) in self.powers.iter().enumerate() {
            match p {
                0 => {}
                1 => parts.push(format!("x{}", i + 1)),
                _ => parts.push(format!("x{}^{}", i + 1, p)),
            }
        }
        if parts.is_empty() {
            write!(f, "1")
        } else {
            write!(f, "{}", parts.join("*"))
        }
    }
}

/// An ordered list of design terms over `dim`-dimensional covariates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub dim: usize,
    pub terms: Vec<Term>,
}

impl BasisSpec {
    pub fn new(dim: usize, terms: Vec<Term>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Config("basis needs at least one term".into()));
        }
        for t in &terms {
            if t.powers.len() != dim {
                return Err(Error::Shape { what: "basis term powers", expected: dim, got: t.powers.len() });
            }
            if let Some((c, _)) = t.indicator {
                if c >= dim {
                    return Err(Error::Config(format!("indicator column x{} out of range", c + 1)));
                }
            }
        }
        Ok(Self { dim, terms })
    }

    /// Full polynomial of total degree `<= degree`.
    pub fn polynomial(dim: usize, degree: u32) -> Self {
        let terms = graded_multi_indices(dim, degree).into_iter().map(Term::monomial).collect();
        Self { dim, terms }
    }

    /// Polynomial of degree `degree` in `cont_col`, fully interacted with the
    /// levels of the discrete column `cat_col`.
    pub fn categorical_polynomial(
        dim: usize,
        cont_col: usize,
        cat_col: usize,
        levels: &[f64],
        degree: u32,
    ) -> Result<Self> {
        let mut terms = Vec::new();
        for &lv in levels {
            for p in 0..=degree {
                let mut powers = vec![0; dim];
                powers[cont_col] = p;
                terms.push(Term { powers, indicator: Some((cat_col, lv)) });
            }
        }
        Self::new(dim, terms)
    }

    /// Parse a comma-separated list such as `1,x1,x1^2,x2` or `[x2=3]*x1`.
    pub fn parse(dim: usize, s: &str) -> Result<Self> {
        let mut terms = Vec::new();
        for raw in s.split(',') {
            let raw = raw.trim();
            if raw.is_empty() {
                continue;
            }
            let mut powers = vec![0u32; dim];
            let mut indicator = None;
            for factor in raw.split('*') {
                let factor = factor.trim();
                if factor == "1" {
                    continue;
                }
                if let Some(inner) = factor.strip_prefix('[').and_then(|f| f.strip_suffix(']')) {
                    let (lhs, rhs) =
                        inner.split_once('=').ok_or_else(|| Error::Config(format!("bad indicator `{factor}`")))?;
                    let col = parse_var(lhs.trim(), dim)?;
                    let v: f64 =
                        rhs.trim().parse().map_err(|_| Error::Config(format!("bad indicator value in `{factor}`")))?;
                    indicator = Some((col, v));
                    continue;
                }
                let (var, pow) = match factor.split_once('^') {
                    Some((v, p)) => (
                        v,
                        p.trim().parse::<u32>().map_err(|_| Error::Config(format!("bad exponent in `{factor}`")))?,
                    ),
                    None => (factor, 1),
                };
                powers[parse_var(var.trim(), dim)?] += pow;
            }
            terms.push(Term { powers, indicator });
        }
        Self::new(dim, terms)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.terms.iter().map(|t| t.eval(x)).collect()
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, t) in out.iter_mut().zip(&self.terms) {
            *o = t.eval(x);
        }
    }
}

fn parse_var(s: &str, dim: usize) -> Result<usize> {
    let idx: usize = s
        .strip_prefix('x')
        .and_then(|r| r.parse().ok())
        .ok_or_else(|| Error::Config(format!("unknown variable `{s}`")))?;
    if idx == 0 || idx > dim {
        return Err(Error::Config(format!("variable `{s}` out of range for dimension {dim}")));
    }
    Ok(idx - 1)
}

impl fmt::Display for BasisSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.terms.iter().map(|t| t.to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

/// Linear predictor `coef . basis(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearPredictor {
    pub basis: BasisSpec,
    pub coef: Vec<f64>,
}

impl LinearPredictor {
    pub fn new(basis: BasisSpec, coef: Vec<f64>) -> Result<Self> {
        if basis.len() != coef.len() {
            return Err(Error::Shape { what: "predictor coefficients", expected: basis.len(), got: coef.len() });
        }
        Ok(Self { basis, coef })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.basis.terms.iter().zip(&self.coef).map(|(t, c)| c * t.eval(x)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graded_order() {
        assert_eq!(graded_multi_indices(2, 1), vec![vec![0, 0], vec![1, 0], vec![0, 1]]);
        assert_eq!(graded_multi_indices(2, 2).len(), 6);
        assert_eq!(graded_multi_indices(2, 2)[3..], [vec![2, 0], vec![1, 1], vec![0, 2]]);
        assert_eq!(graded_multi_indices(1, 3), vec![vec![0], vec![1], vec![2], vec![3]]);
        assert_eq!(graded_multi_indices(3, 2).len(), 10);
    }

    #[test]
    fn parse_round_trip() {
        let b = BasisSpec::parse(2, "1, x1, x1^2, x2").unwrap();
        assert_eq!(b.to_string(), "1,x1,x1^2,x2");
        assert_eq!(b.eval(&[2.0, 3.0]), vec![1.0, 2.0, 4.0, 3.0]);
        let c = BasisSpec::parse(2, "[x2=3]*x1").unwrap();
        assert_eq!(c.eval(&[2.0, 3.0]), vec![2.0]);
        assert_eq!(c.eval(&[2.0, 4.0]), vec![0.0]);
        assert!(BasisSpec::parse(2, "x3").is_err());
    }

    #[test]
    fn categorical_interactions() {
        let b = BasisSpec::categorical_polynomial(2, 0, 1, &[0.0, 1.0], 2).unwrap();
        assert_eq!(b.len(), 6);
        assert_eq!(b.eval(&[2.0, 1.0]), vec![0.0, 0.0, 0.0, 1.0, 2.0, 4.0]);
    }
}
