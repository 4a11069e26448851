#![no_std]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod estimate;
pub mod grf;
pub mod hcov;
pub mod kernels;
pub mod linalg;
pub mod normal;
pub mod oracle;
pub mod partition;
pub mod rlr;
pub mod sites;

pub use error::{Error, Result};
