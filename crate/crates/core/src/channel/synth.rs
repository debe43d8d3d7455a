use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::response::response_with;
use super::{path_loss, reflection_coefficient, AngularTransform, ArrayGeometry, MaterialModel};
use crate::linalg::complex_to_real;
use crate::rng::{rng_from_seed, Rng};
use crate::{Error, Result};

/// Parameters of one propagation path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathParams {
    pub gain: f64,
    pub azimuth: f64,
    pub elevation: f64,
    pub distance: f64,
    pub delay: f64,
    pub reflection: Complex64,
    pub is_los: bool,
    /// Whether the planar-wavefront response was used for this path.
    pub far_field: bool,
}

/// Distributions for the random path parameters. Ranges are `[lo, hi]`;
/// a degenerate range pins the value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub num_paths: usize,
    pub los_distance: f64,
    pub los_delay: f64,
    pub nlos_distance: [f64; 2],
    pub nlos_delay: [f64; 2],
    pub elevation: [f64; 2],
    pub azimuth: [f64; 2],
    pub incidence: [f64; 2],
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            num_paths: 5,
            los_distance: 30.0,
            los_delay: 100e-9,
            nlos_distance: [10.0, 25.0],
            nlos_delay: [100e-9, 110e-9],
            elevation: [-FRAC_PI_2, FRAC_PI_2],
            azimuth: [-PI, PI],
            incidence: [0.0, FRAC_PI_2],
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_paths < 1 {
            return Err(Error::arg("at least one path (the LoS) is required"));
        }
        if !(self.los_distance > 0.0) || !(self.nlos_distance[0] > 0.0) {
            return Err(Error::arg("path distances must be positive"));
        }
        for (name, [lo, hi]) in [
            ("nlos_distance", self.nlos_distance),
            ("nlos_delay", self.nlos_delay),
            ("elevation", self.elevation),
            ("azimuth", self.azimuth),
            ("incidence", self.incidence),
        ] {
            if !(lo <= hi) {
                return Err(Error::arg(format!("{name} range is empty: [{lo}, {hi}]")));
            }
        }
        if self.incidence[0] < 0.0 || self.incidence[1] > FRAC_PI_2 {
            return Err(Error::arg("incidence angles must lie in [0, π/2]"));
        }
        Ok(())
    }
}

/// One channel draw, in the spatial and angular domains.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub paths: Vec<PathParams>,
    pub spatial: Vec<Complex64>,
    pub angular: Vec<Complex64>,
    pub norm_factor: f64,
}

impl ChannelRealization {
    /// `[Re(h̄); Im(h̄)]`, the unknown of the real-valued inverse problem.
    pub fn real_angular(&self) -> Vec<f64> {
        complex_to_real(&self.angular)
    }
}

fn uniform(rng: &mut Rng, [lo, hi]: [f64; 2]) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// `e^{-j2π f τ}` with the cycle count reduced before the trig call.
fn delay_phase(carrier_freq: f64, delay: f64) -> Complex64 {
    let cycles = (carrier_freq * delay).fract();
    Complex64::from_polar(1.0, -2.0 * PI * cycles)
}

/// Draws one normalized hybrid-field channel (`‖h̃‖² = S·S̄`).
pub fn synthesize_channel(
    geom: &ArrayGeometry,
    material: &MaterialModel,
    cfg: &SamplingConfig,
    seed: u64,
) -> Result<ChannelRealization> {
    geom.validate()?;
    material.validate()?;
    cfg.validate()?;
    let mut rng = rng_from_seed(seed);
    let rayleigh = geom.rayleigh_distance();
    let one = Complex64::new(1.0, 0.0);

    let mut paths = Vec::with_capacity(cfg.num_paths);
    for l in 0..cfg.num_paths {
        let elevation = uniform(&mut rng, cfg.elevation);
        let azimuth = uniform(&mut rng, cfg.azimuth);
        let is_los = l == 0;
        let (distance, delay, reflection) = if is_los {
            (cfg.los_distance, cfg.los_delay, one)
        } else {
            let distance = uniform(&mut rng, cfg.nlos_distance);
            let delay = uniform(&mut rng, cfg.nlos_delay);
            let incidence = uniform(&mut rng, cfg.incidence).min(FRAC_PI_2 * (1.0 - 1e-12));
            (distance, delay, reflection_coefficient(material, geom.carrier_freq, incidence))
        };
        let gain = path_loss(material, geom.carrier_freq, cfg.los_distance, reflection)?;
        paths.push(PathParams {
            gain,
            azimuth,
            elevation,
            distance,
            delay,
            reflection,
            is_los,
            far_field: distance > rayleigh,
        });
    }

    let mut spatial = vec![Complex64::new(0.0, 0.0); geom.num_elements()];
    for p in &paths {
        let weight = p.gain * delay_phase(geom.carrier_freq, p.delay);
        let a = response_with(geom, p.azimuth, p.elevation, p.distance, p.far_field);
        for (h, a) in spatial.iter_mut().zip(a) {
            *h += weight * a;
        }
    }
    let energy: f64 = spatial.iter().map(|z| z.norm_sqr()).sum();
    if !(energy > 0.0) {
        return Err(Error::Numerical { iteration: 0, message: "channel has zero energy before normalization".into() });
    }
    let norm_factor = (geom.num_elements() as f64 / energy).sqrt();
    for h in &mut spatial {
        *h *= norm_factor;
    }
    let angular = AngularTransform::new(geom).forward(&spatial)?;
    Ok(ChannelRealization { paths, spatial, angular, norm_factor })
}
