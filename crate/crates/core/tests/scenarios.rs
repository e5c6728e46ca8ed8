//! Small seeded scenarios with known answers.

mod common;

use std::sync::Arc;

use levelset::basis::BasisSpec;
use levelset::dr::{dr_fit_with_nuisances, pseudo_outcomes, BasisFit, SecondStage};
use levelset::inference::{confidence_sets, dr_band};
use levelset::lpr::{lp_r_fit_point, Regime, TuningParams, UStatMode};
use levelset::model::{scalar_fn, threshold, Covariates, EvalGrid, ObservationSet};
use levelset::nuisance::{expit, NoiseScale, NuisanceSet, Provenance};
use levelset::rng::substream;
use levelset::simulate::{gen_setup_1a, gen_setup_1b};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

#[test]
fn oracle_basis_recovers_setup_1a_coefficients() {
    let spec = BasisSpec::parse(2, "1,x1,x1^2,x2").unwrap();
    let reps = 20;
    let mut coefs = Vec::new();
    for seed in 0..reps {
        let (data, truth, _) = gen_setup_1a(10_000, 0.0, seed, NoiseScale::Variance).unwrap();
        let phi = pseudo_outcomes(&data, &truth.nuisances(0.01).unwrap());
        coefs.push(BasisFit::fit(&spec, data.x(), &phi).unwrap().coef);
    }
    for (k, want) in [0.15, -1.0, -0.5, 1.0].into_iter().enumerate() {
        let v: Vec<f64> = coefs.iter().map(|c| c[k]).collect();
        let m = v.iter().sum::<f64>() / reps as f64;
        let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (reps as f64 - 1.0)).sqrt();
        assert!((m - want).abs() <= 3.0 * sd / (reps as f64).sqrt(), "coef {k}: {m} vs {want} (sd {sd})");
    }
}

#[test]
fn null_effect_stays_inside_pointwise_bands() {
    let n = 2000;
    let mut rng = substream(8, "null", 0);
    let pi = |x: &[f64]| expit(-1.0 + x[0] + x[1]);
    let (mut xs, mut a, mut y) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..n {
        let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        a.push(rng.random_bool(pi(&x)) as u8);
        y.push(normal(&mut rng));
        xs.extend(x);
    }
    let data = ObservationSet::new(y, a, Covariates::new(xs, 2).unwrap()).unwrap();
    let nuis =
        NuisanceSet::new(scalar_fn(pi), scalar_fn(|_| 0.0), scalar_fn(|_| 0.0), 0.01, Provenance::Oracle).unwrap();
    let stage = SecondStage::basis(BasisSpec::parse(2, "1,x1,x1^2,x2").unwrap());
    let rows: Vec<usize> = (0..n).collect();
    let learner = Arc::new(dr_fit_with_nuisances(&data, &rows, &nuis, &stage, None).unwrap());
    let grid = Arc::new(EvalGrid::new(vec![(-1.0, 1.0); 2], 30).unwrap());
    let surface = learner.surface(&grid).unwrap();
    let (surface, _) = dr_band(&learner, surface, 0.05, 1000, 1).unwrap();
    let se = surface.se.as_ref().unwrap();
    let inside = surface.values.iter().zip(se).filter(|(v, s)| v.abs() <= 3.0 * **s).count();
    assert!(inside as f64 >= 0.95 * grid.len() as f64, "{inside} of {}", grid.len());
}

#[test]
fn loocv_picks_the_cubic() {
    let n = 2000;
    let tau = |x: f64| x * x * x - x + 0.3;
    let candidates: Vec<BasisSpec> = (1..=3).map(|p| BasisSpec::polynomial(1, p)).collect();
    let nuis = NuisanceSet::new(
        scalar_fn(|_| 0.5),
        scalar_fn(|_| 0.0),
        scalar_fn(move |x| tau(x[0])),
        0.01,
        Provenance::Oracle,
    )
    .unwrap();
    let stage = SecondStage::Basis { candidates };
    let rows: Vec<usize> = (0..n).collect();
    let mut cubic = 0;
    for seed in 0..100 {
        let mut rng = substream(seed, "cubic", 0);
        let (mut xs, mut a, mut y) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..n {
            let x: f64 = rng.random_range(-1.0..1.0);
            let ai = rng.random_bool(0.5) as u8;
            y.push(ai as f64 * tau(x) + 0.1 * normal(&mut rng));
            a.push(ai);
            xs.push(x);
        }
        let data = ObservationSet::new(y, a, Covariates::new(xs, 1).unwrap()).unwrap();
        let fit = dr_fit_with_nuisances(&data, &rows, &nuis, &stage, None).unwrap();
        if fit.meta.tuning["basis"] == BasisSpec::polynomial(1, 3).to_string() {
            cubic += 1;
        }
    }
    assert!(cubic >= 80, "degree 3 chosen {cubic} times out of 100");
}

#[test]
fn lpr_recovers_a_constant_effect() {
    let (n, t_star) = (5000, 0.7);
    let mu0 = |x: &[f64]| 0.5 * x[0] - 0.1;
    let nuis = NuisanceSet::new(
        scalar_fn(|_| 0.5),
        scalar_fn(mu0),
        scalar_fn(move |x| mu0(x) + t_star),
        0.01,
        Provenance::Oracle,
    )
    .unwrap()
    .with_density(scalar_fn(|x| if (0.0..=1.0).contains(&x[0]) { 1.0 } else { 0.0 }));
    let tuning = TuningParams::new(0.3, 4, Regime::LowSmoothness).unwrap();
    let mut abs_err = 0.0;
    for seed in 0..50 {
        let mut rng = substream(seed, "constant-effect", 0);
        let (mut xs, mut a, mut y) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..n {
            let x: f64 = rng.random();
            let ai = rng.random_bool(0.5) as u8;
            y.push(mu0(&[x]) + ai as f64 * t_star + normal(&mut rng));
            a.push(ai);
            xs.push(x);
        }
        let data = ObservationSet::new(y, a, Covariates::new(xs, 1).unwrap()).unwrap();
        abs_err +=
            (lp_r_fit_point(&data, &nuis, &[0.5], &tuning, 1, UStatMode::Complete).unwrap().tau_hat - t_star).abs();
    }
    assert!(abs_err / 50.0 <= 0.1, "mean |tau_hat - t*| = {}", abs_err / 50.0);
}

#[test]
fn lpr_four_rows_match_double_loop() {
    for seed in 0..10 {
        let inst = common::instance(4, 1, 500 + seed);
        let nuis = common::unit_density_nuisances(&inst);
        let tuning = TuningParams::new(2.0, 1, Regime::LowSmoothness).unwrap();
        let fast = lp_r_fit_point(&inst.data, &nuis, &[0.5], &tuning, 0, UStatMode::Complete).unwrap().tau_hat;
        let slow = common::brute_force_lpr(&inst, &[0.5], 2.0, 0, 0);
        assert!((fast - slow).abs() <= 1e-12 * slow.abs().max(1.0), "seed {seed}: {fast} vs {slow}");
    }
}

#[test]
fn confidence_sets_nest_on_setup_1a() {
    let (data, truth, _) = gen_setup_1a(1000, 0.0, 17, NoiseScale::Variance).unwrap();
    let stage = SecondStage::basis(BasisSpec::parse(2, "1,x1,x1^2,x2").unwrap());
    let rows: Vec<usize> = (0..data.len()).collect();
    let learner = Arc::new(dr_fit_with_nuisances(&data, &rows, &truth.nuisances(0.01).unwrap(), &stage, None).unwrap());
    let grid = truth.grid(50).unwrap();
    let surface = learner.surface(&grid).unwrap();
    let (surface, band) = dr_band(&learner, surface, 0.05, 2000, 3).unwrap();
    let sets = confidence_sets(&surface, 0.0, &band).unwrap();
    assert!(sets.c_lower.is_subset_of(&sets.plug_in).unwrap());
    assert!(sets.plug_in.is_subset_of(&sets.c_upper).unwrap());
    assert!(sets.c_lower.count() < sets.c_upper.count());
}

#[test]
fn setup_1a_treatment_rate_matches_monte_carlo() {
    let n = 100_000;
    let (data, _, _) = gen_setup_1a(n, 0.0, 12, NoiseScale::Variance).unwrap();
    let p_hat = data.a().iter().map(|&a| a as f64).sum::<f64>() / n as f64;
    let mut rng = substream(13, "propensity-mean", 0);
    let draws = 1_000_000;
    let p_mc = (0..draws).map(|_| expit(-1.0 + rng.random_range(-1.0..1.0) + rng.random_range(-1.0..1.0))).sum::<f64>()
        / draws as f64;
    let se = (p_hat * (1.0 - p_hat) / n as f64).sqrt();
    assert!((p_hat - p_mc).abs() <= 3.0 * se, "{p_hat} vs {p_mc} (se {se})");
}

#[test]
fn kappa_scales_the_effect_but_not_its_zero_set() {
    let (_, lo) = gen_setup_1b(1, 0.1, 0).unwrap();
    let (_, hi) = gen_setup_1b(1, 10.0, 0).unwrap();
    let grid = lo.grid(60).unwrap();
    let (mlo, mhi) =
        (threshold(&grid, &lo.tau_on(&grid), 0.0).unwrap(), threshold(&grid, &hi.tau_on(&grid), 0.0).unwrap());
    assert_eq!(mlo.member, mhi.member);

    // mass within 0.1 of the level shrinks as kappa grows
    let mut rng = substream(4, "kappa-margin", 0);
    let xs: Vec<[f64; 2]> =
        (0..1_000_000).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
    let mass: Vec<f64> = [0.1, 1.0, 10.0]
        .into_iter()
        .map(|k| {
            let (_, t) = gen_setup_1b(1, k, 0).unwrap();
            xs.iter()
                .filter(|x| {
                    let v = (t.tau)(&x[..]).abs();
                    v > 0.0 && v < 0.1
                })
                .count() as f64
                / xs.len() as f64
        })
        .collect();
    assert!(mass[0] > mass[1] && mass[1] > mass[2], "{mass:?}");
}
