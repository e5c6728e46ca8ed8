mod common;

use common::{brute_force_lpr, instance, unit_density_nuisances};
use levelset::lpr::{lp_r_fit_point, select_tuning, LprLearner, Regime, TuningParams, UStatMode};
use levelset::model::{scalar_fn, SmoothnessConfig};
use levelset::nuisance::{
    fit_nuisances, split_sample, BandwidthRule, Fold, NuisanceConfig, Provenance, RegressorConfig,
};
use proptest::prelude::*;

fn case(n: usize, d: usize, seed: u64, x0: &[f64], h: f64, b_degree: u32, gamma_floor: u32) -> (f64, f64) {
    let inst = instance(n, d, seed);
    let nuis = unit_density_nuisances(&inst);
    let k = common::graded(d, b_degree).len();
    let tuning = TuningParams::new(h, k, Regime::LowSmoothness).unwrap();
    let fast = lp_r_fit_point(&inst.data, &nuis, x0, &tuning, gamma_floor, UStatMode::Complete).unwrap().tau_hat;
    (fast, brute_force_lpr(&inst, x0, h, b_degree, gamma_floor))
}

#[test]
fn matches_double_loop_one_dim() {
    for (seed, (x0, b_deg)) in [(0.5, 2), (0.3, 0), (0.7, 4), (0.45, 1)].into_iter().enumerate() {
        let (fast, slow) = case(40, 1, seed as u64, &[x0], 0.8, b_deg, 1);
        assert!((fast - slow).abs() <= 1e-12, "seed {seed}: {fast} vs {slow}");
    }
}

#[test]
fn matches_double_loop_two_dim() {
    let (fast, slow) = case(50, 2, 3, &[0.5, 0.5], 1.2, 2, 1);
    assert!((fast - slow).abs() <= 1e-12, "{fast} vs {slow}");
}

#[test]
fn incomplete_with_every_pair_is_complete() {
    let inst = instance(30, 1, 9);
    let nuis = unit_density_nuisances(&inst);
    let tuning = TuningParams::new(0.9, 3, Regime::LowSmoothness).unwrap();
    let full = lp_r_fit_point(&inst.data, &nuis, &[0.5], &tuning, 1, UStatMode::Complete).unwrap().tau_hat;
    let same =
        lp_r_fit_point(&inst.data, &nuis, &[0.5], &tuning, 1, UStatMode::Incomplete { pairs: usize::MAX, seed: 1 })
            .unwrap()
            .tau_hat;
    assert_eq!(full, same);
}

#[test]
fn incomplete_approaches_complete() {
    let inst = instance(50, 1, 4);
    let nuis = unit_density_nuisances(&inst);
    let tuning = TuningParams::new(0.9, 3, Regime::LowSmoothness).unwrap();
    let full = lp_r_fit_point(&inst.data, &nuis, &[0.5], &tuning, 1, UStatMode::Complete).unwrap().tau_hat;
    let err = |pairs: usize| {
        let v: Vec<f64> = (0..20)
            .map(|s| {
                lp_r_fit_point(&inst.data, &nuis, &[0.5], &tuning, 1, UStatMode::Incomplete { pairs, seed: s })
                    .unwrap()
                    .tau_hat
            })
            .collect();
        (v.iter().map(|x| (x - full).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
    };
    let (coarse, fine) = (err(50), err(1500));
    assert!(fine < coarse, "rmse with 1500 pairs {fine} not below rmse with 50 pairs {coarse}");
}

#[test]
fn incomplete_mean_matches_complete_at_n_2000() {
    for inst_seed in [21, 22, 23] {
        let inst = instance(2000, 1, inst_seed);
        let nuis = unit_density_nuisances(&inst);
        let tuning = TuningParams::new(0.3, 4, Regime::LowSmoothness).unwrap();
        let learner = LprLearner::new(&inst.data, &nuis, tuning, 1).unwrap();
        let full = learner.fit_point(&[0.5], UStatMode::Complete, 0).unwrap().tau_hat;
        let reps = 40;
        let v: Vec<f64> = (0..reps)
            .map(|s| learner.fit_point(&[0.5], UStatMode::Incomplete { pairs: 50 * 2000, seed: s }, 0).unwrap().tau_hat)
            .collect();
        let mean = v.iter().sum::<f64>() / reps as f64;
        let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps as f64 - 1.0)).sqrt();
        let se = sd / (reps as f64).sqrt();
        assert!((mean - full).abs() <= 2.0 * se, "instance {inst_seed}: mean {mean}, complete {full}, se {se}");
    }
}

#[test]
fn rmse_decreases_with_n() {
    let smooth = SmoothnessConfig::new(2.0, 2.0, 1.0, 1.0, 0.1, 1.0).unwrap();
    let x0 = [0.5];
    let truth = (3.0f64 * x0[0]).sin();
    let rmse = |n: usize| {
        let sq: f64 = (0..100u64)
            .map(|seed| {
                let inst = instance(n, 1, 10_000 + seed);
                let plan = split_sample(n, seed, 0.5).unwrap();
                let bw = 0.5 * (n as f64 / 2.0).powf(-0.2);
                let reg = RegressorConfig { degree: 1, bandwidth: BandwidthRule::Fixed(bw), epsilon: 0.01 };
                let cfg = NuisanceConfig { propensity: reg.clone(), outcome: reg, epsilon: 0.01, fit_density: false };
                let nuis = fit_nuisances(&inst.data, &plan.indices(Fold::D), &cfg, Provenance::Oracle)
                    .unwrap()
                    .with_density(scalar_fn(|x| if (0.0..=1.0).contains(&x[0]) { 1.0 } else { 0.0 }));
                let z = inst.data.subset(&plan.indices(Fold::Z));
                let mut tuning = select_tuning(&smooth, 1, z.len()).unwrap();
                tuning.k = tuning.k.min(8);
                let fit = lp_r_fit_point(&z, &nuis, &x0, &tuning, 2, UStatMode::Complete).unwrap().tau_hat;
                (fit - truth).powi(2)
            })
            .sum();
        (sq / 100.0).sqrt()
    };
    let r: Vec<f64> = [500, 2000, 8000].into_iter().map(rmse).collect();
    assert!(r[0] > r[1] && r[1] > r[2], "rmse {r:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn double_loop_agreement(seed in 0u64..10_000, n in 20usize..=50, x0 in 0.3f64..0.7, h in 0.6f64..1.2, b_deg in 0u32..4) {
        let (fast, slow) = case(n, 1, seed, &[x0], h, b_deg, 1);
        prop_assert!((fast - slow).abs() <= 1e-12 * slow.abs().max(1.0), "{} vs {}", fast, slow);
    }
}
