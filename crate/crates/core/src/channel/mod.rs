//! Hybrid far/near-field channel model for a planar array-of-subarrays.

mod angular;
mod geometry;
mod material;
mod response;
mod synth;

pub use angular::AngularTransform;
pub use geometry::ArrayGeometry;
pub use material::{path_loss, reflection_coefficient, MaterialModel};
pub use response::{array_response, direction};
pub use synth::{synthesize_channel, ChannelRealization, PathParams, SamplingConfig};
