use super::iterate::{fpn_infer_batch, FixedPointOptions};
use crate::measurement::MeasurementEnsemble;
use crate::nn::{Denoiser, Scalar};
use crate::{Error, Result};

/// Outcome of [`calibrate_rate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateCalibration {
    /// Factor applied to every kernel; 1 when the network already met the target.
    pub kernel_scale: f64,
    /// Fraction of observations converged under `kernel_scale`.
    pub converged_fraction: f64,
}

/// Finds the largest kernel scale in `1, 1 − step, 1 − 2·step, …` (not below
/// `min_scale`) under which at least `fraction` of the observations reach the
/// gap tolerance of `opts` within its iteration cap.
///
/// Shrinking the kernels lowers the gain of the network in every direction,
/// so the observed convergence rate drops at some cost in accuracy. Returns
/// the last candidate tried if none reaches the target.
pub fn calibrate_rate<T: Scalar>(
    ens: &MeasurementEnsemble,
    net: &Denoiser<T>,
    y: &[f64],
    opts: &FixedPointOptions,
    fraction: f64,
    step: f64,
    min_scale: f64,
) -> Result<RateCalibration> {
    if !(step > 0.0 && step < 1.0) || !(min_scale > 0.0 && min_scale <= 1.0) || !(0.0..=1.0).contains(&fraction) {
        return Err(Error::arg("calibration needs 0 < step < 1, 0 < min_scale ≤ 1 and fraction in [0, 1]"));
    }
    if y.is_empty() {
        return Err(Error::arg("calibration needs at least one observation"));
    }
    let mut k = 0;
    loop {
        let scale = 1.0 - k as f64 * step;
        let mut trial = net.clone();
        if k > 0 {
            trial.scale_kernels(scale);
        }
        let traces = fpn_infer_batch(ens, &trial, y, None, opts)?;
        let converged = traces.iter().filter(|t| t.converged).count() as f64 / traces.len() as f64;
        let next = 1.0 - (k + 1) as f64 * step;
        if converged >= fraction || next < min_scale - 1e-12 {
            return Ok(RateCalibration { kernel_scale: scale, converged_fraction: converged });
        }
        k += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{synthesize_channel, ArrayGeometry, MaterialModel, SamplingConfig};
    use crate::nn::DenoiserWeights;

    fn setup() -> (MeasurementEnsemble, Vec<f64>) {
        let geom = ArrayGeometry { num_subarrays: 1, aes_per_subarray: 16, ..ArrayGeometry::table1() };
        let ens = MeasurementEnsemble::build(&geom, 8, 1).unwrap();
        let mut y = Vec::new();
        for i in 0..6 {
            let chan = synthesize_channel(&geom, &MaterialModel::table1(), &SamplingConfig::default(), i).unwrap();
            y.extend(ens.observe(&chan, 10.0, 50 + i).unwrap().y);
        }
        (ens, y)
    }

    #[test]
    fn fast_network_is_left_alone() {
        let (ens, y) = setup();
        let net = DenoiserWeights::scaled_identity(1, 16, 0.3).unwrap();
        let c = calibrate_rate(&ens, &net, &y, &FixedPointOptions::new(1e-3, 15), 0.95, 0.02, 0.5).unwrap();
        assert_eq!(c, RateCalibration { kernel_scale: 1.0, converged_fraction: 1.0 });
    }

    #[test]
    fn slow_network_is_shrunk_until_it_converges() {
        let (ens, y) = setup();
        let net = DenoiserWeights::scaled_identity(1, 16, 0.98).unwrap();
        let opts = FixedPointOptions::new(1e-3, 15);
        let c = calibrate_rate(&ens, &net, &y, &opts, 1.0, 0.02, 0.5).unwrap();
        assert!(c.kernel_scale < 1.0 && c.kernel_scale >= 0.5, "{c:?}");
        assert_eq!(c.converged_fraction, 1.0);
        // one step less shrinkage does not reach the target
        let mut looser = net.clone();
        looser.scale_kernels(c.kernel_scale + 0.02);
        let traces = fpn_infer_batch(&ens, &looser, &y, None, &opts).unwrap();
        assert!(traces.iter().any(|t| !t.converged));
    }

    #[test]
    fn gives_up_at_the_floor() {
        let (ens, y) = setup();
        let net = DenoiserWeights::scaled_identity(1, 16, 0.999).unwrap();
        let c = calibrate_rate(&ens, &net, &y, &FixedPointOptions::new(1e-9, 5), 1.0, 0.01, 0.98).unwrap();
        assert_eq!(c.kernel_scale, 0.98);
        assert!(c.converged_fraction < 1.0);
    }

    #[test]
    fn rejects_bad_arguments() {
        let (ens, y) = setup();
        let net = DenoiserWeights::scaled_identity(1, 16, 0.5).unwrap();
        let opts = FixedPointOptions::new(1e-3, 15);
        assert!(calibrate_rate(&ens, &net, &y, &opts, 0.95, 0.0, 0.5).is_err());
        assert!(calibrate_rate(&ens, &net, &y, &opts, 1.5, 0.01, 0.5).is_err());
        assert!(calibrate_rate(&ens, &net, &[], &opts, 0.95, 0.01, 0.5).is_err());
    }
}
