//! Fluctuated-density construction used for minimax lower bounds, as a
//! data-generating process: `2m` well-separated cubes, half of them carrying
//! a bump in the effect, with propensity and baseline fluctuations at finer
//! scale on the other half.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{scalar_fn, Covariates, ObservationSet};
use crate::rng::substream;
use crate::simulate::setups::DgpTruth;

fn psi(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// C-infinity step from 0 (t <= 0) to 1 (t >= 1).
pub fn smoothstep(t: f64) -> f64 {
    let (a, b) = (psi(t), psi(1.0 - t));
    a / (a + b)
}

/// Product bump: 1 on `[-1/2, 1/2]^d`, 0 outside `[-1, 1]^d`, with factor
/// `smoothstep(2 (1 - |u_j|))` per axis.
pub fn bump(u: &[f64]) -> f64 {
    u.iter().map(|&t| smoothstep(2.0 * (1.0 - t.abs()))).product()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdversarialParams {
    pub d: usize,
    pub m: usize,
    pub k: usize,
    pub h: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
    /// Which cube of each pair carries the effect bump.
    pub omega: Vec<bool>,
    /// Signs of the fine-scale fluctuations, `2m` blocks of `k`.
    pub lambda: Vec<i8>,
}

impl AdversarialParams {
    /// All bits set and alternating signs.
    pub fn new(d: usize, m: usize, k: usize, h: f64, gamma: f64, alpha: f64, beta: f64, theta: f64) -> Self {
        Self {
            d,
            m,
            k,
            h,
            gamma,
            alpha,
            beta,
            theta,
            omega: vec![true; m],
            lambda: (0..2 * m * k).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect(),
        }
    }

    pub fn c_hm(&self) -> f64 {
        let d = self.d as i32;
        1.0 / (1.0 - 2.0 * (2f64.powi(d) - 2f64.powi(-d)) * self.h.powi(d) * self.m as f64)
    }

    /// Lattice cells per axis holding the `2m` cube centres.
    pub fn lattice(&self) -> usize {
        let mut g = 1usize;
        while g.pow(self.d as u32) < 2 * self.m {
            g += 1;
        }
        g
    }

    /// Integer `k^{1/d}`, if `k` is a perfect power.
    fn k_root(&self) -> Option<usize> {
        let q = (self.k as f64).powf(1.0 / self.d as f64).round() as usize;
        (q.pow(self.d as u32) == self.k).then_some(q)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        if self.d == 0 || self.m == 0 || self.k == 0 {
            return bad("d, m and k must be positive".into());
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return bad(format!("h must be positive, got {}", self.h));
        }
        for (name, v) in [("gamma", self.gamma), ("alpha", self.alpha), ("beta", self.beta)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.omega.len() != self.m {
            return bad(format!("omega has length {}, expected m = {}", self.omega.len(), self.m));
        }
        if self.lambda.len() != 2 * self.m * self.k || self.lambda.iter().any(|&l| l != 1 && l != -1) {
            return bad(format!("lambda must hold 2mk = {} signs", 2 * self.m * self.k));
        }
        if self.k_root().is_none() {
            return bad(format!("k = {} is not a perfect power of d = {}", self.k, self.d));
        }
        let g = self.lattice();
        if 2.0 * self.h > 1.0 / g as f64 + 1e-12 {
            return bad(format!(
                "cubes of side 2h = {} overlap: {} centres need spacing 1/{} per axis",
                2.0 * self.h,
                2 * self.m,
                g
            ));
        }
        let c = self.c_hm();
        if !(c.is_finite() && (1.0..=4.0 / 3.0 + 1e-12).contains(&c)) {
            return bad(format!("c_hm = {c} lies outside [1, 4/3]"));
        }
        let q = self.k_root().expect("checked") as f64;
        let fine = self.h / q;
        let (dp, dm) = (fine.powf(self.alpha), fine.powf(self.beta));
        let eff = self.h.powf(self.gamma);
        // extreme values of pi, mu0 and mu1 = mu0 + tau
        let checks = [
            ("pi", 0.5 - dp, 0.5 + dp),
            (
                "mu0",
                0.5 - dm - (self.theta + eff).max(self.theta) / 2.0,
                0.5 + dm - (self.theta + eff).min(self.theta) / 2.0,
            ),
            (
                "mu1",
                0.5 - dm + (self.theta + eff).min(self.theta) / 2.0,
                0.5 + dm + (self.theta + eff).max(self.theta) / 2.0,
            ),
        ];
        for (name, lo, hi) in checks {
            if lo < 0.0 || hi > 1.0 {
                return bad(format!("{name} ranges over [{lo}, {hi}], outside [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Precomputed geometry for fast evaluation.
#[derive(Debug)]
struct Geometry {
    p: AdversarialParams,
    g: usize,
    q: usize,
    centres: Vec<Vec<f64>>,
    /// Lattice cell -> cube index.
    cell_to_cube: Vec<Option<usize>>,
    c_hm: f64,
}

impl Geometry {
    fn new(p: AdversarialParams) -> Self {
        let g = p.lattice();
        let q = p.k_root().expect("validated");
        let mut centres = Vec::with_capacity(2 * p.m);
        let mut cell_to_cube = vec![None; g.pow(p.d as u32)];
        for i in 0..2 * p.m {
            let mut rem = i;
            let mut c = vec![0.0; p.d];
            for j in (0..p.d).rev() {
                c[j] = ((rem % g) as f64 + 0.5) / g as f64;
                rem /= g;
            }
            cell_to_cube[i] = Some(i);
            centres.push(c);
        }
        let c_hm = p.c_hm();
        Self { p, g, q, centres, cell_to_cube, c_hm }
    }

    fn cube_of(&self, x: &[f64]) -> Option<usize> {
        let mut cell = 0usize;
        for &xi in x {
            if !(0.0..=1.0).contains(&xi) {
                return None;
            }
            let c = ((xi * self.g as f64) as usize).min(self.g - 1);
            cell = cell * self.g + c;
        }
        self.cell_to_cube[cell]
    }

    /// `B((x - x_i) / h)`.
    fn coarse(&self, x: &[f64], i: usize) -> f64 {
        let u: Vec<f64> = x.iter().zip(&self.centres[i]).map(|(a, b)| (a - b) / self.p.h).collect();
        bump(&u)
    }

    /// Index `j` of the partition sub-cube of `C_h(x_i)` containing `x`, and
    /// the fine bump `B((x - m_ji) / (h / 2q))`.
    fn fine(&self, x: &[f64], i: usize) -> Option<(usize, f64)> {
        let side = self.p.h / self.q as f64;
        let mut j = 0usize;
        let mut u = Vec::with_capacity(x.len());
        for (xa, ca) in x.iter().zip(&self.centres[i]) {
            let off = xa - (ca - self.p.h / 2.0);
            if !(0.0..=self.p.h).contains(&off) {
                return None;
            }
            let s = ((off / side) as usize).min(self.q - 1);
            j = j * self.q + s;
            let mid = ca - self.p.h / 2.0 + (s as f64 + 0.5) * side;
            u.push((xa - mid) / (side / 2.0));
        }
        Some((j, bump(&u)))
    }

    fn lambda(&self, i: usize, j: usize) -> f64 {
        self.p.lambda[i * self.p.k + j] as f64
    }

    /// Whether cube `i` carries the effect bump.
    fn active(&self, i: usize) -> bool {
        let m = self.p.m;
        if i < m {
            self.p.omega[i]
        } else {
            !self.p.omega[i - m]
        }
    }

    fn tau(&self, x: &[f64]) -> f64 {
        match self.cube_of(x) {
            Some(i) if self.active(i) => self.p.theta + self.p.h.powf(self.p.gamma) * self.coarse(x, i),
            _ => self.p.theta,
        }
    }

    fn fine_scale(&self, smooth: f64) -> f64 {
        (self.p.h / self.q as f64).powf(smooth)
    }

    fn mu0(&self, x: &[f64]) -> f64 {
        let fluct = match self.cube_of(x) {
            Some(i) => self.fine(x, i).map_or(0.0, |(j, b)| self.lambda(i, j) * b),
            None => 0.0,
        };
        0.5 + self.fine_scale(self.p.beta) * fluct - self.tau(x) / 2.0
    }

    /// Propensity fluctuates only on cubes without the effect bump.
    fn pi(&self, x: &[f64]) -> f64 {
        let fluct = match self.cube_of(x) {
            Some(i) if !self.active(i) => self.fine(x, i).map_or(0.0, |(j, b)| self.lambda(i, j) * b),
            _ => 0.0,
        };
        0.5 + self.fine_scale(self.p.alpha) * fluct
    }

    /// `c_hm` on the flat region and on the half-size sub-cubes, 0 elsewhere.
    fn density(&self, x: &[f64]) -> f64 {
        if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return 0.0;
        }
        let Some(i) = self.cube_of(x) else { return self.c_hm };
        let c = &self.centres[i];
        let in_c2h = x.iter().zip(c).all(|(a, b)| (a - b).abs() <= self.p.h);
        if !in_c2h {
            return self.c_hm;
        }
        match self.fine(x, i) {
            Some((_, _)) => {
                let side = self.p.h / self.q as f64;
                let in_s = x.iter().zip(c).all(|(xa, ca)| {
                    let off = xa - (ca - self.p.h / 2.0);
                    let s = ((off / side) as usize).min(self.q - 1);
                    let mid = ca - self.p.h / 2.0 + (s as f64 + 0.5) * side;
                    (xa - mid).abs() <= side / 4.0
                });
                if in_s {
                    self.c_hm
                } else {
                    0.0
                }
            }
            None => 0.0,
        }
    }
}

/// The truth functions of the construction.
pub fn adversarial_truth(params: &AdversarialParams) -> Result<DgpTruth> {
    params.validate()?;
    let geo = Arc::new(Geometry::new(params.clone()));
    let (g1, g2, g3, g4, g5) = (geo.clone(), geo.clone(), geo.clone(), geo.clone(), geo);
    Ok(DgpTruth {
        tau: scalar_fn(move |x| g1.tau(x)),
        pi: scalar_fn(move |x| g2.pi(x)),
        mu0: scalar_fn(move |x| g3.mu0(x)),
        mu1: scalar_fn(move |x| g4.mu0(x) + g4.tau(x)),
        density: scalar_fn(move |x| g5.density(x)),
        theta: params.theta,
        bounds: vec![(0.0, 1.0); params.d],
    })
}

/// Draw `n` rows: `X` from the piecewise-constant density by rejection
/// against the uniform envelope, then `A ~ Bern(pi)`, `Y ~ Bern(mu_A)`.
pub fn gen_adversarial(params: &AdversarialParams, n: usize, seed: u64) -> Result<(ObservationSet, DgpTruth)> {
    let truth = adversarial_truth(params)?;
    let c_hm = params.c_hm();
    let mut rng = substream(seed, "data", 0);
    let d = params.d;
    let mut xs = Vec::with_capacity(n * d);
    let mut a = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut x = vec![0.0; d];
    while a.len() < n {
        for v in x.iter_mut() {
            *v = rng.random();
        }
        let accept: f64 = rng.random();
        if accept * c_hm >= (truth.density)(&x) {
            continue;
        }
        let ai = rng.random_bool((truth.pi)(&x)) as u8;
        let mean = if ai == 1 { (truth.mu1)(&x) } else { (truth.mu0)(&x) };
        let yi = rng.random_bool(mean) as u8 as f64;
        xs.extend_from_slice(&x);
        a.push(ai);
        y.push(yi);
    }
    Ok((ObservationSet::new(y, a, Covariates::new(xs, d)?)?, truth))
}

/// Centres `x_1, ..., x_2m` of the construction's cubes.
pub fn cube_centres(params: &AdversarialParams) -> Result<Vec<Vec<f64>>> {
    params.validate()?;
    Ok(Geometry::new(params.clone()).centres)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small() -> AdversarialParams {
        AdversarialParams::new(1, 2, 4, 0.1, 1.0, 1.0, 1.0, 0.0)
    }

    #[test]
    fn bump_values() {
        assert_eq!(bump(&[0.0, 0.0]), 1.0);
        assert_eq!(bump(&[0.4, -0.5]), 1.0);
        assert_eq!(bump(&[1.5, 0.0]), 0.0);
        assert_eq!(bump(&[1.0, 0.0]), 0.0);
        assert_abs_diff_eq!(bump(&[0.75, 0.0]), 0.5, epsilon = 1e-15);
        let b = bump(&[0.6]);
        assert!(b > 0.5 && b < 1.0);
    }

    #[test]
    fn c_hm_formula() {
        let p = small();
        // 1 / (1 - 2 (2 - 1/2) 0.1 * 2)
        assert_abs_diff_eq!(p.c_hm(), 1.0 / 0.4, epsilon = 1e-12);
        assert!(p.validate().is_err());
        let ok = AdversarialParams::new(1, 2, 4, 0.03, 1.0, 1.0, 1.0, 0.0);
        ok.validate().unwrap();
    }

    #[test]
    fn geometry_rejections() {
        let overlap = AdversarialParams::new(1, 2, 1, 0.2, 1.0, 1.0, 1.0, 0.0);
        assert!(matches!(overlap.validate(), Err(Error::Parameter(_))));
        let not_power = AdversarialParams::new(2, 2, 3, 0.05, 1.0, 1.0, 1.0, 0.0);
        assert!(not_power.validate().is_err());
    }

    #[test]
    fn flat_region_values() {
        let p = AdversarialParams::new(1, 2, 4, 0.03, 1.0, 1.0, 1.0, 0.0);
        let t = adversarial_truth(&p).unwrap();
        // centres at 0.125, 0.375, 0.625, 0.875; 0.25 is far from all cubes
        let x = [0.25];
        assert_eq!((t.tau)(&x), 0.0);
        assert_eq!((t.pi)(&x), 0.5);
        assert_eq!((t.mu0)(&x), 0.5);
        assert_abs_diff_eq!((t.density)(&x), p.c_hm(), epsilon = 1e-15);
        // at an active centre the effect is h^gamma and pi is flat
        assert_abs_diff_eq!((t.tau)(&[0.125]), 0.03, epsilon = 1e-15);
        assert_eq!((t.pi)(&[0.125]), 0.5);
    }
}
