//! Std companion to `agm-core`: CSV datasets, model files and the
//! multi-seed benchmark harness behind the `agm` command.

pub mod bench;
mod error;
pub mod io;
pub mod model_file;

pub use error::{Error, Result};
