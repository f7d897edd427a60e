//! Reconstruction of the Lamé parameters (λ, μ) of isotropic linear elasticity
//! from internal displacement data.

pub mod calculus;
pub mod cgo;
pub mod config;
pub mod elimination;
pub mod error;
pub mod forward;
pub mod grid;
pub mod lambda;
pub mod lfld;
pub mod metrics;
pub mod noise;
pub mod params;
pub mod pipeline;
pub mod reduction;
pub mod store;
pub mod transport;

pub use error::{Error, Result};
pub use grid::{Field, Grid, Mask, Rank};
pub use params::{LameParameters, Phantom, Profile};
