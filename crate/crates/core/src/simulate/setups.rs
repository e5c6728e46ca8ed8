use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{scalar_fn, Covariates, EvalGrid, ObservationSet, ScalarFn};
use crate::nuisance::{expit, perturbed_oracle, NoiseScale, NuisanceSet, ParametricTruth, Provenance, DEFAULT_EPSILON};
use crate::rng::substream;

/// The true functions of a data-generating process.
#[derive(Clone)]
pub struct DgpTruth {
    pub tau: ScalarFn,
    pub pi: ScalarFn,
    pub mu0: ScalarFn,
    pub mu1: ScalarFn,
    pub density: ScalarFn,
    pub theta: f64,
    /// Covariate support box.
    pub bounds: Vec<(f64, f64)>,
}

impl std::fmt::Debug for DgpTruth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DgpTruth").field("theta", &self.theta).field("bounds", &self.bounds).finish()
    }
}

impl DgpTruth {
    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    /// Oracle nuisances, carrying the true density.
    pub fn nuisances(&self, epsilon: f64) -> Result<NuisanceSet> {
        Ok(NuisanceSet::new(self.pi.clone(), self.mu0.clone(), self.mu1.clone(), epsilon, Provenance::Oracle)?
            .with_density(self.density.clone()))
    }

    /// Midpoint grid over the support with the true density attached.
    pub fn grid(&self, resolution: usize) -> Result<Arc<EvalGrid>> {
        let dens = self.density.clone();
        Ok(Arc::new(EvalGrid::new(self.bounds.clone(), resolution)?.with_density(move |x| dens(x))?))
    }

    pub fn tau_on(&self, grid: &EvalGrid) -> Vec<f64> {
        grid.map(|x| (self.tau)(x))
    }
}

fn from_parametric(truth: &ParametricTruth) -> DgpTruth {
    let (p, m0, m1) = (truth.pi_logit.clone(), truth.mu0.clone(), truth.mu1.clone());
    let (m0b, m1b) = (m0.clone(), m1.clone());
    DgpTruth {
        tau: scalar_fn(move |x| m1b.eval(x) - m0b.eval(x)),
        pi: scalar_fn(move |x| expit(p.eval(x))),
        mu0: scalar_fn(move |x| m0.eval(x)),
        mu1: scalar_fn(move |x| m1.eval(x)),
        density: scalar_fn(|x| if x.iter().all(|v| (-1.0..=1.0).contains(v)) { 0.25 } else { 0.0 }),
        theta: 0.0,
        bounds: vec![(-1.0, 1.0); 2],
    }
}

/// `X ~ U(-1,1)^2`, `A ~ Bern(pi)`, `Y^a ~ N(mu_a, 1)`, `Y = Y^A`.
fn draw_two_dim(n: usize, truth: &ParametricTruth, seed: u64) -> Result<ObservationSet> {
    let mut rng = substream(seed, "data", 0);
    let mut xs = Vec::with_capacity(2 * n);
    let mut a = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let ai = rng.random_bool(truth.pi(&x).clamp(0.0, 1.0)) as u8;
        let z1: f64 = StandardNormal.sample(&mut rng);
        let z0: f64 = StandardNormal.sample(&mut rng);
        let y1 = truth.mu1.eval(&x) + z1;
        let y0 = truth.mu0.eval(&x) + z0;
        xs.extend_from_slice(&x);
        a.push(ai);
        y.push(if ai == 1 { y1 } else { y0 });
    }
    ObservationSet::new(y, a, Covariates::new(xs, 2)?)
}

/// Setup 1A: the benchmark DGP plus oracle nuisances perturbed at order `n^{-1/c}`.
pub fn gen_setup_1a(n: usize, c: f64, seed: u64, scale: NoiseScale) -> Result<(ObservationSet, DgpTruth, NuisanceSet)> {
    if n == 0 {
        return Err(Error::Config("n must be positive".into()));
    }
    let base = ParametricTruth::two_dim_benchmark(1.0);
    let data = draw_two_dim(n, &base, seed)?;
    let truth = from_parametric(&base);
    let nuis = perturbed_oracle(&base, c, n, seed, scale, DEFAULT_EPSILON)?.with_density(truth.density.clone());
    Ok((data, truth, nuis))
}

/// Setup 1B: the benchmark DGP with the effect scaled by `kappa`.
pub fn gen_setup_1b(n: usize, kappa: f64, seed: u64) -> Result<(ObservationSet, DgpTruth)> {
    if n == 0 {
        return Err(Error::Config("n must be positive".into()));
    }
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::Config(format!("kappa must be positive, got {kappa}")));
    }
    let base = ParametricTruth::two_dim_benchmark(kappa);
    Ok((draw_two_dim(n, &base, seed)?, from_parametric(&base)))
}

/// Quadratic effect crossing zero at 1/4 and 3/4 with slope 2, used for
/// rate checks.
pub fn rate_tau(x: f64) -> f64 {
    4.0 * (x - 0.25) * (x - 0.75)
}

/// `X ~ U(0,1)`, `A ~ Bern(1/2)`, `Y = A tau(X) + N(0,1)`, level 0.
pub fn gen_rate_1d(n: usize, seed: u64) -> Result<(ObservationSet, DgpTruth)> {
    let mut rng = substream(seed, "data", 0);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut xs = Vec::with_capacity(n);
    let mut a = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.random();
        let ai = rng.random_bool(0.5) as u8;
        xs.push(x);
        a.push(ai);
        y.push(ai as f64 * rate_tau(x) + noise.sample(&mut rng));
    }
    let truth = DgpTruth {
        tau: scalar_fn(|x| rate_tau(x[0])),
        pi: scalar_fn(|_| 0.5),
        mu0: scalar_fn(|_| 0.0),
        mu1: scalar_fn(|x| rate_tau(x[0])),
        density: scalar_fn(|x| if (0.0..=1.0).contains(&x[0]) { 1.0 } else { 0.0 }),
        theta: 0.0,
        bounds: vec![(0.0, 1.0)],
    };
    Ok((ObservationSet::new(y, a, Covariates::new(xs, 1)?)?, truth))
}
