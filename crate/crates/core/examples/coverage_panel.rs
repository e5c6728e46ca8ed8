//! Simultaneous coverage of the inner/outer confidence sets as the nuisance
//! error grows (noise of order n^{-1/c}).
//!
//!     cargo run --release --example coverage_panel -- [reps] [n_boot] [sd|variance]

use levelset::basis::BasisSpec;
use levelset::dr::SecondStage;
use levelset::nuisance::NoiseScale;
use levelset::simulate::runner::write_coverage_csv;
use levelset::simulate::{coverage_panel, EstimatorSpec, ExperimentConfig, NuisanceSource, SetupSpec};

fn main() -> levelset::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().collect();
    let reps = args.get(1).and_then(|v| v.parse().ok()).unwrap_or(200);
    let n_boot = args.get(2).and_then(|v| v.parse().ok()).unwrap_or(2000);
    let noise = match args.get(3).map(String::as_str) {
        Some("sd") => NoiseScale::StdDev,
        _ => NoiseScale::Variance,
    };
    let base = ExperimentConfig {
        setup: SetupSpec::OneA { c: 0.0, noise },
        estimator: EstimatorSpec::Dr {
            stage: SecondStage::basis(BasisSpec::parse(2, "1,x1,x1^2,x2")?),
            nuisances: NuisanceSource::Dgp,
        },
        n: 1000,
        reps,
        grid_resolution: 50,
        alpha: Some(0.05),
        n_boot,
        seed: 2024,
    };
    let rows = coverage_panel(&base, &[0.0, 2.0, 3.0, 3.8, 4.0, 5.0])?;
    write_coverage_csv(&rows, std::io::stdout())?;
    Ok(())
}
