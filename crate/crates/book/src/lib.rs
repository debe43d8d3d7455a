//! The guide in `book/src`, one module per chapter, so `cargo test` runs
//! every snippet.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/channel-model.md")]
pub mod channel_model {}

#[doc = include_str!("../../../book/src/measurement.md")]
pub mod measurement {}

#[doc = include_str!("../../../book/src/baselines.md")]
pub mod baselines {}

#[doc = include_str!("../../../book/src/denoiser.md")]
pub mod denoiser {}

#[doc = include_str!("../../../book/src/fixed-point.md")]
pub mod fixed_point {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
