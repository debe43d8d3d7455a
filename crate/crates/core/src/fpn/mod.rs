//! The fixed point estimator: iterate `h ← R(h + W(y − M h))` to a fixed
//! point, verify it contracts, and train `R` with one-step gradients at the
//! fixed point.

mod calibrate;
mod contraction;
mod iterate;
mod metrics;
mod train;

pub use calibrate::{calibrate_rate, RateCalibration};
pub use contraction::{contraction_check, contraction_ratios, sample_pairs, SamplePair, COINCIDENT_PAIR};
pub use iterate::{
    fixed_point, fixed_point_batch, fpn_infer, fpn_infer_batch, FixedPointOptions, FixedPointTrace, FpnMap,
};
pub use metrics::{batch_nmse, nmse, nmse_db, to_db};
pub use train::{train, EpochRecord, SampleSet, SnrRegime, TrainCheckpoint, TrainConfig, TrainOutcome};
