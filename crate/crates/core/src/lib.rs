//! Stabilized neural ODEs: learning `du/dt = A u + F(u)` for periodic 1-D
//! Burgers and Kuramoto-Sivashinsky dynamics.

pub mod error;
pub mod field;
pub mod diff;
pub mod io;
pub mod metrics;
pub mod node;
pub mod rom;
pub mod spectral;

pub use error::{Error, Result};
pub use field::{from_spectral, to_spectral, Field, Fourier, SpectralField};
pub use spectral::System;
