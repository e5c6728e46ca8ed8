//! The fluctuated lower-bound construction as a data generator: geometry,
//! density mass, and an oracle DR-Learner fitted to a draw from it.
//!
//!     cargo run --release --example adversarial -- [n] [h]

use std::sync::Arc;

use levelset::dr::{dr_fit_with_nuisances, SecondStage};
use levelset::model::{fit_margin, loss_d_h, threshold};
use levelset::nuisance::DEFAULT_EPSILON;
use levelset::simulate::adversarial::cube_centres;
use levelset::simulate::{gen_adversarial, AdversarialParams};

fn main() -> levelset::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().collect();
    let n = args.get(1).and_then(|v| v.parse().ok()).unwrap_or(5000);
    let h = args.get(2).and_then(|v| v.parse().ok()).unwrap_or(0.04);

    let mut params = AdversarialParams::new(1, 2, 4, h, 1.0, 1.0, 1.0, 0.0);
    params.omega = vec![true, false];
    params.validate()?;
    println!("c_hm = {:.4}, centres {:?}", params.c_hm(), cube_centres(&params)?);

    let (data, truth) = gen_adversarial(&params, n, 9)?;
    let grid = truth.grid(4000)?;
    let mass: f64 = grid.cell_measure().iter().sum();
    println!("density mass on the grid: {mass:.5}");
    let tau = truth.tau_on(&grid);
    let above = tau.iter().filter(|&&t| t > 0.0).count();
    println!("cells with tau > 0: {above} of {}", grid.len());

    let samples: Vec<f64> = data.x().rows().map(|x| (truth.tau)(x)).collect();
    let t_grid: Vec<f64> = (1..=10).map(|i| i as f64 * h / 10.0).collect();
    let margin = fit_margin(&samples, 0.0, &t_grid)?;
    println!("P(0 < |tau| < t) for t up to h: {:?}", margin.empirical_probs);

    let nuis = truth.nuisances(DEFAULT_EPSILON)?;
    let rows: Vec<usize> = (0..n).collect();
    let stage = SecondStage::local_poly_for_smoothness(1.0, 1, n, 0.5);
    let learner = Arc::new(dr_fit_with_nuisances(&data, &rows, &nuis, &stage, None)?);
    let est = learner.surface(&grid)?;
    let d_h = loss_d_h(&threshold(&grid, &est.values, 0.0)?, &threshold(&grid, &tau, 0.0)?, &tau, 0.0, grid.density())?;
    println!("oracle DR-Learner d_h = {d_h:.6}");
    Ok(())
}
