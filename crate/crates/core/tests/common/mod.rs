//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use levelset::model::{scalar_fn, Covariates, ObservationSet};
use levelset::nuisance::{NuisanceSet, Provenance};
use levelset::rng::substream;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn choose(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Orthonormal shifted Legendre polynomial on [0, 1] from its explicit
/// coefficients.
pub fn legendre(m: u32, x: f64) -> f64 {
    let m64 = m as u64;
    (0..=m64)
        .map(|l| {
            let sign = if (l + m64).is_multiple_of(2) { 1.0 } else { -1.0 };
            sign * ((2 * m64 + 1) as f64).sqrt() * choose(m64, l) * choose(m64 + l, l) * x.powi(l as i32)
        })
        .sum()
}

/// All exponent vectors of total degree at most `p`.
pub fn graded(d: usize, p: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur = vec![0u32; d];
    fn rec(k: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if k == cur.len() {
            out.push(cur.clone());
            return;
        }
        for e in 0..=left {
            cur[k] = e;
            rec(k + 1, left - e, cur, out);
        }
        cur[k] = 0;
    }
    rec(0, p, &mut cur, &mut out);
    out
}

pub fn tensor(exps: &[Vec<u32>], v: &[f64]) -> DVector<f64> {
    DVector::from_iterator(exps.len(), exps.iter().map(|e| e.iter().zip(v).map(|(&m, &x)| legendre(m, x)).product()))
}

pub struct Instance {
    pub data: ObservationSet,
    pub pi: fn(&[f64]) -> f64,
    pub mu0: fn(&[f64]) -> f64,
}

pub fn pi_fn(x: &[f64]) -> f64 {
    0.3 + 0.4 * x[0]
}

pub fn mu0_fn(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() - 0.2
}

/// Small random sample with smooth nuisances, `X ~ U(0,1)^d`.
pub fn instance(n: usize, d: usize, seed: u64) -> Instance {
    let mut rng = substream(seed, "oracle-instance", 0);
    let mut xs = Vec::new();
    let mut a = Vec::new();
    let mut y = Vec::new();
    for _ in 0..n {
        let x: Vec<f64> = (0..d).map(|_| rng.random()).collect();
        let ai = rng.random_bool(pi_fn(&x)) as u8;
        let tau = (3.0 * x[0]).sin();
        y.push(mu0_fn(&x) + ai as f64 * tau + rng.random_range(-0.5..0.5));
        a.push(ai);
        xs.extend(x);
    }
    Instance { data: ObservationSet::new(y, a, Covariates::new(xs, d).unwrap()).unwrap(), pi: pi_fn, mu0: mu0_fn }
}

/// Nuisances from the instance with unit covariate density.
pub fn unit_density_nuisances(inst: &Instance) -> NuisanceSet {
    let (p, m) = (inst.pi, inst.mu0);
    NuisanceSet::new(scalar_fn(p), scalar_fn(m), scalar_fn(|_| 0.0), 0.01, Provenance::Oracle)
        .unwrap()
        .with_density(scalar_fn(|_| 1.0))
}

/// The Lp-R-Learner written as literal single and double sums. With unit
/// density, `Omega = h^d I` for an orthonormal `b`.
pub fn brute_force_lpr(inst: &Instance, x0: &[f64], h: f64, b_degree: u32, gamma_floor: u32) -> f64 {
    let data = &inst.data;
    let d = data.dim();
    let n = data.len();
    let rho_e = graded(d, gamma_floor);
    let b_e = graded(d, b_degree);
    let omega_inv = DMatrix::<f64>::identity(b_e.len(), b_e.len()) / h.powi(d as i32);
    let kern = |x: &[f64]| {
        let dist2: f64 = x.iter().zip(x0).map(|(a, b)| (a - b).powi(2)).sum();
        if 2.0 * dist2.sqrt() <= h {
            1.0
        } else {
            0.0
        }
    };
    let unit = |x: &[f64]| -> Vec<f64> { x.iter().zip(x0).map(|(a, b)| 0.5 + (a - b) / h).collect() };
    let rho_h = |x: &[f64]| tensor(&rho_e, &unit(x));
    let b_h = |x: &[f64]| tensor(&b_e, &unit(x)) * kern(x);

    let j = rho_e.len();
    let mut q = DMatrix::<f64>::zeros(j, j);
    let mut r = DVector::<f64>::zeros(j);
    let nf = n as f64;
    for i in 0..n {
        let xi = data.x().row(i);
        let (ai, yi) = (data.a()[i] as f64, data.y()[i]);
        let ri = rho_h(xi);
        let ki = kern(xi);
        let phi_a1 = ai * (ai - (inst.pi)(xi));
        let phi_y1 = (yi - (inst.mu0)(xi)) * (ai - (inst.pi)(xi));
        q += &ri * ri.transpose() * (ki * phi_a1 / nf);
        r += &ri * (ki * phi_y1 / nf);
    }
    let pairs = nf * (nf - 1.0);
    for i1 in 0..n {
        for i2 in 0..n {
            if i1 == i2 {
                continue;
            }
            let (x1, x2) = (data.x().row(i1), data.x().row(i2));
            let (a1, a2) = (data.a()[i1] as f64, data.a()[i2] as f64);
            let y2 = data.y()[i2];
            let (k1, k2) = (kern(x1), kern(x2));
            let cross = (b_h(x1).transpose() * &omega_inv * b_h(x2))[(0, 0)];
            let phi_a2 = -(a1 - (inst.pi)(x1)) * k1 * cross * a2;
            let phi_y2 = -(a1 - (inst.pi)(x1)) * cross * (y2 - (inst.mu0)(x2));
            let r1 = rho_h(x1);
            q += &r1 * r1.transpose() * (k1 * phi_a2 * k2 / pairs);
            r += &r1 * (k1 * phi_y2 * k2 / pairs);
        }
    }
    let centre = tensor(&rho_e, &vec![0.5; d]);
    let sol = q.lu().solve(&r).expect("nonsingular Q");
    centre.dot(&sol)
}
