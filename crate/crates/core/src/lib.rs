pub mod calibrate;
pub mod cli;
pub mod crf;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod model;
pub mod types;

pub use error::{Error, Result};
