//! Batch command-line front end.
//!
//! Settings resolve as flags, then the matching section of the `--config`
//! JSON file, then built-in defaults. Exit codes: 0 success, 2 usage or
//! configuration error, 3 numerical or estimator failure.

mod estimate;
mod margin;
mod simulate;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};

pub use estimate::{EstimateArgs, EstimateSettings, Method};
pub use margin::{MarginArgs, MarginSettings};
pub use simulate::{RateBenchArgs, RateBenchSettings, SimulateArgs, SimulateSettings};

#[derive(Debug, Parser)]
#[command(name = "levelset", version, about = "Level sets of the conditional average treatment effect")]
pub struct Cli {
    /// JSON file with default settings; a top-level object per command plus
    /// the shared keys `seed`, `threads` and `out`.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "LEVELSET_THREADS")]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a CATE surface and threshold it.
    Estimate(EstimateArgs),
    /// DR-Learner surface with a bootstrap band and inner/outer confidence sets.
    Infer(EstimateArgs),
    /// Monte Carlo replications of a simulation setup.
    Simulate(SimulateArgs),
    /// Empirical convergence rate of the plug-in level set.
    RateBench(RateBenchArgs),
    /// Margin exponent diagnostic.
    Margin(MarginArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Estimate(_) => "estimate",
            Command::Infer(_) => "infer",
            Command::Simulate(_) => "simulate",
            Command::RateBench(_) => "rate-bench",
            Command::Margin(_) => "margin",
        }
    }
}

/// Shared run options after merging.
#[derive(Clone, Debug, Serialize)]
pub struct Common {
    pub seed: u64,
    pub threads: usize,
    pub out: PathBuf,
}

fn read_config(path: Option<&Path>) -> Result<Map<String, Value>> {
    let Some(path) = path else { return Ok(Map::new()) };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(Error::Config("config file must hold a JSON object".into())),
        Err(e) => Err(Error::Config(format!("config {}: {e}", path.display()))),
    }
}

/// Defaults, overlaid by a config section, overlaid by the flags that were set.
pub(crate) fn resolve<S, A>(section: Option<&Value>, flags: &A) -> Result<S>
where
    S: Serialize + DeserializeOwned + Default,
    A: Serialize,
{
    let mut merged = match serde_json::to_value(S::default())? {
        Value::Object(m) => m,
        _ => unreachable!("settings serialize to objects"),
    };
    if let Some(sec) = section {
        let Value::Object(sec) = sec else {
            return Err(Error::Config("config sections must be JSON objects".into()));
        };
        for (k, v) in sec {
            if !merged.contains_key(k) {
                return Err(Error::Config(format!("unknown config key `{k}`")));
            }
            merged.insert(k.clone(), v.clone());
        }
    }
    if let Value::Object(f) = serde_json::to_value(flags)? {
        for (k, v) in f {
            if !v.is_null() {
                merged.insert(k, v);
            }
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| Error::Config(format!("invalid settings: {e}")))
}

fn common(cli: &Cli, cfg: &Map<String, Value>) -> Result<Common> {
    let get_u64 = |k: &str| -> Result<Option<u64>> {
        match cfg.get(k) {
            None => Ok(None),
            Some(v) => {
                v.as_u64().map(Some).ok_or_else(|| Error::Config(format!("config `{k}` must be a nonnegative integer")))
            }
        }
    };
    let out = match (&cli.out, cfg.get("out")) {
        (Some(p), _) => p.clone(),
        (None, Some(Value::String(s))) => PathBuf::from(s),
        (None, Some(_)) => return Err(Error::Config("config `out` must be a string".into())),
        (None, None) => PathBuf::from("."),
    };
    Ok(Common {
        seed: cli.seed.or(get_u64("seed")?).unwrap_or(0),
        threads: cli.threads.or(get_u64("threads")?.map(|t| t as usize)).unwrap_or(0),
        out,
    })
}

fn dispatch(cli: &Cli) -> Result<()> {
    let cfg = read_config(cli.config.as_deref())?;
    let name = cli.command.name();
    let allowed = ["seed", "threads", "out", "estimate", "infer", "simulate", "rate-bench", "margin"];
    if let Some(k) = cfg.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(Error::Config(format!("unknown config key `{k}`")));
    }
    let common = common(cli, &cfg)?;
    let section = cfg.get(name);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    std::fs::create_dir_all(&common.out)
        .map_err(|e| Error::Config(format!("cannot create output directory {}: {e}", common.out.display())))?;
    pool.install(|| match &cli.command {
        Command::Estimate(a) => estimate::run(&common, &resolve(section, a)?, false),
        Command::Infer(a) => estimate::run(&common, &resolve(section, a)?, true),
        Command::Simulate(a) => simulate::run(&common, &resolve(section, a)?),
        Command::RateBench(a) => simulate::run_rate(&common, &resolve(section, a)?),
        Command::Margin(a) => margin::run(&common, &resolve(section, a)?),
    })
}

/// Parse arguments, run, and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
