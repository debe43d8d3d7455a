use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, SPEED_OF_LIGHT};

/// Propagation medium and reflecting-surface parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialModel {
    /// Molecular absorption coefficient (1/m).
    pub absorption: f64,
    /// Complex refractive index of the reflector.
    pub refractive_index: Complex64,
    /// Surface roughness standard deviation (m).
    pub roughness: f64,
}

impl MaterialModel {
    pub fn table1() -> Self {
        Self { absorption: 0.0033, refractive_index: Complex64::new(2.24, -0.025), roughness: 8.8e-5 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.absorption >= 0.0) {
            return Err(Error::arg("absorption coefficient must be non-negative"));
        }
        if !(self.roughness >= 0.0) {
            return Err(Error::arg("roughness must be non-negative"));
        }
        if !(self.refractive_index.re > 0.0) {
            return Err(Error::arg("refractive index must have positive real part"));
        }
        Ok(())
    }
}

/// Spread plus absorption loss scaled by `|Γ|`.
///
/// Both factors use the line-of-sight length `r_1`, for every path.
pub fn path_loss(material: &MaterialModel, carrier_freq: f64, los_distance: f64, reflection: Complex64) -> Result<f64> {
    if !(los_distance > 0.0) {
        return Err(Error::arg(format!("LoS distance must be positive, got {los_distance}")));
    }
    let spread = SPEED_OF_LIGHT / (4.0 * std::f64::consts::PI * carrier_freq * los_distance);
    let absorption = (-0.5 * material.absorption * los_distance).exp();
    Ok(reflection.norm() * spread * absorption)
}

/// Fresnel reflection coefficient with Rayleigh roughness attenuation for an
/// incidence angle in `[0, π/2)`.
pub fn reflection_coefficient(material: &MaterialModel, carrier_freq: f64, incidence: f64) -> Complex64 {
    let n_t = material.refractive_index;
    let (sin_in, cos_in) = incidence.sin_cos();
    // cos(arcsin(z)) on the principal branch is sqrt(1 - z²).
    let sin_ref = Complex64::new(sin_in, 0.0) / n_t;
    let cos_ref = (Complex64::new(1.0, 0.0) - sin_ref * sin_ref).sqrt();
    let fresnel = (cos_in - n_t * cos_ref) / (cos_in + n_t * cos_ref);
    let k = 2.0 * std::f64::consts::PI * carrier_freq * material.roughness * cos_in / SPEED_OF_LIGHT;
    fresnel * (-2.0 * k * k).exp()
}
