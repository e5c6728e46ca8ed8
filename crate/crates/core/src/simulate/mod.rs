//! Data-generating processes, replication runner and empirical rate checks.

pub mod adversarial;
pub mod runner;
pub mod setups;

pub use adversarial::{adversarial_truth, bump, gen_adversarial, AdversarialParams};
pub use runner::{
    coverage_panel, kappa_panel, rate_bench, rate_slope, run_replications, EstimatorSpec, ExperimentConfig,
    ExperimentReport, NuisanceSource, RateBenchConfig, RateReport, SetupSpec,
};
pub use setups::{gen_rate_1d, gen_setup_1a, gen_setup_1b, DgpTruth};
