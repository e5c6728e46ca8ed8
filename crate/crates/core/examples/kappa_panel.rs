//! Oracle DR-Learner risk as the effect is scaled by kappa: a flatter effect
//! puts more mass near the level and makes the level set harder to recover.
//!
//!     cargo run --release --example kappa_panel -- [reps]

use levelset::basis::BasisSpec;
use levelset::dr::SecondStage;
use levelset::simulate::runner::write_kappa_csv;
use levelset::simulate::{kappa_panel, EstimatorSpec, ExperimentConfig, NuisanceSource, SetupSpec};

fn main() -> levelset::Result<()> {
    env_logger::init();
    let reps = std::env::args().nth(1).and_then(|v| v.parse().ok()).unwrap_or(200);
    let base = ExperimentConfig {
        setup: SetupSpec::OneB { kappa: 1.0 },
        estimator: EstimatorSpec::Dr {
            stage: SecondStage::basis(BasisSpec::parse(2, "1,x1,x1^2,x2")?),
            nuisances: NuisanceSource::Dgp,
        },
        n: 1000,
        reps,
        grid_resolution: 50,
        alpha: None,
        n_boot: 0,
        seed: 2024,
    };
    let rows = kappa_panel(&base, &[0.1, 0.5, 1.0, 5.0, 10.0])?;
    write_kappa_csv(&rows, std::io::stdout())?;
    Ok(())
}
