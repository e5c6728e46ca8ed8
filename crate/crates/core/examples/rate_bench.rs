//! Empirical convergence rate of the thresholded oracle DR-Learner with a
//! local linear second stage, compared against the n^{-4/5} target.
//!
//!     cargo run --release --example rate_bench -- [reps] [bandwidth_const]

use levelset::simulate::{rate_bench, RateBenchConfig};

fn main() -> levelset::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().collect();
    let mut cfg = RateBenchConfig::default();
    if let Some(r) = args.get(1).and_then(|v| v.parse().ok()) {
        cfg.reps = r;
    }
    if let Some(c) = args.get(2).and_then(|v| v.parse().ok()) {
        cfg.bandwidth_const = c;
    }
    let report = rate_bench(&cfg)?;
    report.write_csv(std::io::stdout())?;
    println!("slope {:.3} (target -0.8)", report.slope);
    Ok(())
}
