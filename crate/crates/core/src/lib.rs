//! Planning toolkit for wildfire-driven transmission shutoffs: network
//! model, raster risk pipeline, scenario generation, day-ahead commitment
//! and de-energization formulation, real-time Monte Carlo evaluation and
//! analytics.

pub mod error;
pub mod grid;
pub mod risk;
pub mod scenario;
pub mod formulation;
pub mod analytics;
pub mod rt;
pub mod sweep;

pub use error::{PspsError, Result};
