pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod kernels;
pub mod limits;
pub mod model;
pub mod moments;
pub mod special;
pub mod spectral;
pub mod ustat;

pub use error::{Error, Result};
