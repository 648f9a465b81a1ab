//! Bath-reset cooling of a free-fermion chain, solved one momentum block at a time.

pub mod analytic;
pub mod cm;
pub mod error;
pub mod experiments;
pub mod fock;
pub mod linalg;
pub mod model;
pub mod optimize;
pub mod protocol;

pub use error::{KelvinError, Result};
