//! Fixed-topology convolutional denoiser with hand-written reverse mode.

mod adam;
mod conv;
mod denoiser;
mod lipschitz;
mod scalar;
mod weights;

pub use adam::{AdamConfig, AdamState};
pub use conv::ConvLayer;
pub use denoiser::{Denoiser, DenoiserWeights, Gradients, Tape, HIDDEN_WIDTH, LEAKY_SLOPE, NUM_BLOCKS, NUM_LAYERS};
pub use lipschitz::{contraction_scale, enforce_contraction, estimate_lipschitz, VectorMap, DEFAULT_PERTURB_SCALE};
pub use scalar::Scalar;

/// Default target Lipschitz constant after a contraction correction.
pub const DEFAULT_BETA: f64 = 0.99;
