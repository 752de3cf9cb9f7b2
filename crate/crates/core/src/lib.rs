pub mod cli;
pub mod data;
pub mod error;
pub mod model;
pub mod nn;
pub mod qcnn;
pub mod qsim;
pub mod sbfc;
pub mod stats;
pub mod train;

pub use error::{Error, Result};
