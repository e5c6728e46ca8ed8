//! Margin exponent of P(0 < |tau(X) - theta| < t) ~ c0 t^xi on two effects
//! with known answers.
//!
//!     cargo run --release --example margin_diagnostic -- [samples]

use rand::Rng;

use levelset::model::fit_margin;
use levelset::rng::substream;

fn main() -> levelset::Result<()> {
    let n = std::env::args().nth(1).and_then(|v| v.parse().ok()).unwrap_or(100_000);
    let t_grid: Vec<f64> = (0..12).map(|i| 0.01 * 30f64.powf(i as f64 / 11.0)).collect();
    let mut rng = substream(1, "margin", 0);

    let uniform: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let fit = fit_margin(&uniform, 0.5, &t_grid)?;
    println!(
        "tau = X, X ~ U(0,1), theta = 1/2:  xi = {:.3} (1), c0 = {:.3} (2)",
        fit.xi_hat.unwrap(),
        fit.c0_hat.unwrap()
    );

    let cubic: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0f64..1.0).powi(3)).collect();
    let fit = fit_margin(&cubic, 0.0, &t_grid)?;
    println!("tau = X^3, X ~ U(-1,1), theta = 0: xi = {:.3} (1/3)", fit.xi_hat.unwrap());

    for (t, p) in fit.t_grid.iter().zip(&fit.empirical_probs) {
        println!("  t = {t:.4}  P = {p:.4}  t^(1/3) = {:.4}", t.cbrt());
    }
    Ok(())
}
