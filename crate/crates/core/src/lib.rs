//! Hybrid far/near-field channel estimation for THz ultra-massive MIMO.
//!
//! The crate is organised bottom-up:
//!
//! - [`channel`] synthesizes array-of-subarrays channels mixing planar
//!   (far-field) and spherical (near-field) wavefronts, and maps them to the
//!   per-subarray angular domain.
//! - [`measurement`] builds the fixed one-bit analog combiners, simulates noisy
//!   pilots and exposes the real-valued inverse problem `y = M h + n` together
//!   with the de-correlated linear estimator.
//! - [`solvers`] holds the classical baselines (LS, OMP, FISTA, OAMP).
//! - [`nn`] is a small fixed-topology convolutional network with hand-written
//!   reverse mode, Adam and Lipschitz control.
//! - [`fpn`] ties the linear estimator and the network together into a
//!   contractive fixed point iteration, and trains it with Jacobian-free
//!   backpropagation.

pub mod channel;
pub mod error;
pub mod fpn;
pub mod io;
pub mod linalg;
pub mod measurement;
pub mod nn;
pub mod rng;
pub mod solvers;

pub use error::{Error, Result};

/// Speed of light used throughout (m/s). A round value keeps the Table I
/// wavelength at exactly 1 mm for a 300 GHz carrier.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;
