pub mod basis;
pub mod cli;
pub mod dr;
pub mod error;
pub mod inference;
pub mod io;
pub mod localpoly;
pub mod lpr;
pub mod model;
pub mod nuisance;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
