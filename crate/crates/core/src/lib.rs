pub mod acceptance;
pub mod admm;
pub mod duality;
pub mod error;
pub mod exec;
pub mod harness;
pub mod instance;
pub mod model;
pub mod socp;
pub mod tracks;

pub use error::{Error, Result};
