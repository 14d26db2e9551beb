pub mod dens;
pub mod deriv;
pub mod error;
pub mod inference;
pub mod information;
pub mod mc_engine;
pub mod model;
pub mod num;
pub mod par;
pub mod preprocess;
pub mod quadrature;
pub mod report;
pub mod rng;
pub mod scenarios;
pub mod sufficiency;

pub use error::{Error, Result};
