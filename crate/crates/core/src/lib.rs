pub mod cli;
pub mod config;
pub mod error;
mod fsutil;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod preprocess;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
