pub mod cloud;
pub mod error;
pub mod ndt;
pub mod rng;
pub mod scene;
pub mod factors;
pub mod forest;
pub mod harness;
pub mod planner;

pub use error::{Error, Result};
