//! Pilot-wave dynamics for the 2-D isotropic oscillator and related field models.

pub mod density;
pub mod drift;
pub mod entropy;
pub mod error;
pub mod field_models;
pub mod grid;
pub mod guidance;
pub mod ode;
pub mod oscillator;
pub mod spectral;
pub mod stats;
pub mod vorticity;

pub use error::{Error, Result};
pub use oscillator::{random_state, Configuration, OscillatorState};
