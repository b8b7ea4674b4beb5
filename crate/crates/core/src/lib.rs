pub mod cli;
pub mod config;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod eval;
pub mod gradcore;
pub mod losses;
pub mod model;
pub mod planted;
pub mod trainer;

pub use error::{Error, Result};
