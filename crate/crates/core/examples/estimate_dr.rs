//! DR-Learner on Setup 1A with nuisances fitted by local linear regression
//! on one half of the sample and a loocv-chosen polynomial second stage.
//!
//!     cargo run --release --example estimate_dr -- [n] [seed]

use std::sync::Arc;

use levelset::basis::BasisSpec;
use levelset::dr::{dr_fit, SecondStage};
use levelset::model::{loss_d_delta, loss_d_h, threshold};
use levelset::nuisance::{split_sample, NoiseScale, NuisanceConfig};
use levelset::simulate::gen_setup_1a;

fn main() -> levelset::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().collect();
    let n = args.get(1).and_then(|v| v.parse().ok()).unwrap_or(2000);
    let seed = args.get(2).and_then(|v| v.parse().ok()).unwrap_or(11);

    let (data, truth, _) = gen_setup_1a(n, 0.0, seed, NoiseScale::Variance)?;
    let plan = split_sample(n, seed, 0.5)?;
    let stage = SecondStage::Basis { candidates: (1..=3).map(|p| BasisSpec::polynomial(2, p)).collect() };
    let learner = Arc::new(dr_fit(&data, &plan, &NuisanceConfig::default(), &stage, None, true)?);

    let grid = truth.grid(60)?;
    let surface = learner.surface(&grid)?;
    let tau = truth.tau_on(&grid);
    let est = threshold(&grid, &surface.values, truth.theta)?;
    let oracle = threshold(&grid, &tau, truth.theta)?;

    println!("chosen second stage: {}", surface.meta.tuning["basis"]);
    println!("cells above 0: estimated {}, true {} of {}", est.count(), oracle.count(), grid.len());
    println!("d_delta = {:.4}", loss_d_delta(&est, &oracle, grid.density())?);
    println!("d_h     = {:.5}", loss_d_h(&est, &oracle, &tau, truth.theta, grid.density())?);
    for x in [[0.0, 0.0], [0.5, -0.5], [-0.5, 0.5]] {
        println!("tau({x:?}): true {:+.3}, estimate {:+.3}", (truth.tau)(&x), learner.predict(&x)?);
    }
    Ok(())
}
