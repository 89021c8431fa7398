pub mod coverage;
pub mod dmd;
pub mod error;
pub mod field;
pub mod fusion;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod online;
pub mod placement;
pub mod recon;
pub mod rng;

pub use error::{Error, Result};
pub use faer::{c64, Mat, MatRef};
