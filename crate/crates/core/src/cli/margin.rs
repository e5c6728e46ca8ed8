use std::path::PathBuf;

use clap::{Args, ValueEnum};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::Common;
use crate::error::{Error, Result};
use crate::io::{write_file, write_json};
use crate::model::fit_margin;
use crate::rng::substream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MarginExample {
    /// `tau(X) = X` with `X ~ U(0,1)`.
    Uniform,
    /// `tau(X) = X^3` with `X ~ U(-1,1)`.
    CubeRoot,
}

#[derive(Debug, Args, Serialize)]
pub struct MarginArgs {
    /// CSV holding effect values, such as a surface written by `estimate`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub column: Option<String>,
    /// Draw effect values from a built-in example instead of reading a file.
    #[arg(long, value_enum)]
    pub example: Option<MarginExample>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    /// Radii, increasing.
    #[arg(long, value_delimiter = ',')]
    pub t_grid: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct MarginSettings {
    pub input: Option<PathBuf>,
    pub column: String,
    pub example: Option<MarginExample>,
    pub samples: usize,
    pub theta: f64,
    pub t_grid: Vec<f64>,
}

impl Default for MarginSettings {
    fn default() -> Self {
        // 12 log-spaced radii on [0.01, 0.3]
        let t_grid = (0..12).map(|i| 0.01 * 30f64.powf(i as f64 / 11.0)).collect();
        Self { input: None, column: "tau_hat".into(), example: None, samples: 100_000, theta: 0.0, t_grid }
    }
}

fn read_column(path: &PathBuf, column: &str) -> Result<Vec<f64>> {
    let mut rdr =
        csv::Reader::from_path(path).map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
    let j = rdr
        .headers()?
        .iter()
        .position(|h| h.trim() == column)
        .ok_or_else(|| Error::Config(format!("input is missing column `{column}`")))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let raw = rec.get(j).unwrap_or("");
        let v: f64 = raw
            .trim()
            .parse()
            .map_err(|_| Error::Data { line, message: format!("cannot parse `{column}` value {raw:?}") })?;
        out.push(v);
    }
    Ok(out)
}

pub(super) fn run(common: &Common, s: &MarginSettings) -> Result<()> {
    let samples = match (&s.input, s.example) {
        (Some(p), None) => read_column(p, &s.column)?,
        (None, Some(ex)) => {
            let mut rng = substream(common.seed, "margin", 0);
            (0..s.samples)
                .map(|_| match ex {
                    MarginExample::Uniform => rng.random::<f64>(),
                    MarginExample::CubeRoot => rng.random_range(-1.0f64..1.0).powi(3),
                })
                .collect()
        }
        _ => return Err(Error::Config("give exactly one of --input and --example".into())),
    };
    let fit = fit_margin(&samples, s.theta, &s.t_grid)?;
    write_file(&common.out.join("margin.csv"), |w| {
        use std::io::Write;
        writeln!(w, "t,prob")?;
        for (t, p) in fit.t_grid.iter().zip(&fit.empirical_probs) {
            writeln!(w, "{t},{p}")?;
        }
        Ok(())
    })?;
    write_json(
        &common.out.join("margin.json"),
        &json!({ "settings": s, "seed": common.seed, "n": samples.len(), "fit": fit }),
    )?;
    match fit.xi_hat {
        Some(xi) => log::info!("xi_hat = {xi:.3}"),
        None => log::warn!("margin exponent undefined"),
    }
    Ok(())
}
