//! Super-resolution time-delay estimation from multiband OFDM channel
//! measurements.
//!
//! The crate simulates a multibranch receiver probing a multipath channel
//! over several separated frequency bands, lifts the per-band channel
//! estimates into Hankel matrices with multiple shift-invariance structures,
//! and estimates path delays by weighted subspace fitting solved by variable
//! projection. ESPRIT, multiple-invariance MUSIC, and a multiresolution
//! initializer serve as baselines; a deterministic Cramér-Rao bound provides
//! the benchmark floor.

pub mod crlb;
pub mod error;
pub mod estimators;
pub mod frontend;
pub mod hankel;
pub mod linalg;
pub mod model;

pub use error::{Error, Result};

/// Complex sample type used throughout.
pub type C64 = num_complex::Complex64;
