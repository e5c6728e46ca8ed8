//! Lp-R-Learner on the one-dimensional quadratic effect with exact
//! nuisances, tuned for the low-smoothness regime, against the truth.
//!
//!     cargo run --release --example lp_r_learner -- [n] [seed]

use std::sync::Arc;

use levelset::lpr::{select_tuning, LprLearner, UStatMode};
use levelset::model::{loss_d_h, threshold, SmoothnessConfig};
use levelset::nuisance::DEFAULT_EPSILON;
use levelset::simulate::gen_rate_1d;

fn main() -> levelset::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().collect();
    let n = args.get(1).and_then(|v| v.parse().ok()).unwrap_or(4000);
    let seed = args.get(2).and_then(|v| v.parse().ok()).unwrap_or(5);

    let (data, truth) = gen_rate_1d(n, seed)?;
    let nuis = truth.nuisances(DEFAULT_EPSILON)?;
    let smooth = SmoothnessConfig::new(2.0, 2.0, 0.15, 0.15, 0.1, 1.0)?;
    let mut tuning = select_tuning(&smooth, 1, n)?;
    println!("regime {:?}: h = {:.4}, k = {}, T = {}", tuning.regime, tuning.h, tuning.k, tuning.t);
    tuning.k = tuning.k.min(8);

    let learner = Arc::new(LprLearner::new(&data, &nuis, tuning, 2)?);
    let grid = truth.grid(40)?;
    let (surface, diags) = learner.surface(&grid, UStatMode::Complete)?;
    let tau = truth.tau_on(&grid);

    println!("{:>8} {:>9} {:>9} {:>7}", "x", "tau", "tau_hat", "window");
    for i in (0..grid.len()).step_by(4) {
        println!("{:8.4} {:+9.4} {:+9.4} {:7}", grid.points().row(i)[0], tau[i], surface.values[i], diags[i].in_window);
    }
    let est = threshold(&grid, &surface.values, 0.0)?;
    let oracle = threshold(&grid, &tau, 0.0)?;
    println!("d_h = {:.5}", loss_d_h(&est, &oracle, &tau, 0.0, grid.density())?);
    Ok(())
}
