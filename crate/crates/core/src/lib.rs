pub mod data;
pub mod error;
pub mod gp;
pub mod metrics;
pub mod missingness;
pub mod network;
pub mod numeric;
pub mod runner;
pub mod tree;

pub use error::{Error, Result};
