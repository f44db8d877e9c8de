//! Density-feedback control of a human crowd by a small team of guide robots.
//!
//! Humans follow a stochastic differential equation driven by the navigation
//! velocity field that the robots' directional signs generate. The robots run
//! a backstepping controller that consumes a kernel density estimate of the
//! crowd and steers the field toward a desired velocity that makes the density
//! error diffuse away.

pub mod control;
pub mod crowd;
pub mod config;
pub mod density;
pub mod error;
pub mod field;
pub mod guidance;
pub mod metrics;
pub mod rng;
pub mod sim;

pub use error::{EvacError, Result};

pub type Vec2 = nalgebra::Vector2<f64>;
pub type Mat2 = nalgebra::Matrix2<f64>;
