//! Inner and outer confidence sets for the upper level set on one Setup 1A
//! sample, from a multiplier-bootstrap band.
//!
//!     cargo run --release --example confidence_sets -- [alpha] [seed]

use std::sync::Arc;

use levelset::basis::BasisSpec;
use levelset::dr::{dr_fit_with_nuisances, SecondStage};
use levelset::inference::{check_inclusions, confidence_sets, dr_band};
use levelset::nuisance::NoiseScale;
use levelset::simulate::gen_setup_1a;

fn main() -> levelset::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().collect();
    let alpha = args.get(1).and_then(|v| v.parse().ok()).unwrap_or(0.05);
    let seed = args.get(2).and_then(|v| v.parse().ok()).unwrap_or(3);

    let n = 1000;
    let (data, truth, nuis) = gen_setup_1a(n, 2.0, seed, NoiseScale::Variance)?;
    let rows: Vec<usize> = (0..n).collect();
    let stage = SecondStage::basis(BasisSpec::parse(2, "1,x1,x1^2,x2")?);
    let learner = Arc::new(dr_fit_with_nuisances(&data, &rows, &nuis, &stage, None)?);

    let grid = truth.grid(50)?;
    let (surface, band) = dr_band(&learner, learner.surface(&grid)?, alpha, 2000, seed)?;
    let sets = confidence_sets(&surface, truth.theta, &band)?;
    let (outer, inner) = check_inclusions(&sets, &truth.tau_on(&grid), truth.theta)?;

    println!("critical value {:.3} at alpha = {alpha}", band.c_crit);
    println!(
        "lower {} <= plug-in {} <= upper {} of {} cells",
        sets.c_lower.count(),
        sets.plug_in.count(),
        sets.c_upper.count(),
        grid.len()
    );
    println!("true set inside upper: {outer}; lower inside true set: {inner}");
    Ok(())
}
