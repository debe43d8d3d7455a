use num_complex::Complex64;

use super::ArrayGeometry;
use crate::{Error, Result, SPEED_OF_LIGHT};

/// Unit vector pointing towards the source for azimuth `phi`, elevation `theta`.
pub fn direction(phi: f64, theta: f64) -> [f64; 3] {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    [st * cp, st * sp, ct]
}

/// Array response for a source at `(phi, theta, r)`.
///
/// Exact spherical wavefront `exp(-jk‖p − r·t‖)` inside the Rayleigh
/// distance. Beyond it, the planar wavefront `exp(+jk·pᵀt)`, which is the
/// large-`r` limit of the spherical one once the common `exp(-jkr)` is
/// dropped. Element order follows [`ArrayGeometry::positions`].
pub fn array_response(geom: &ArrayGeometry, phi: f64, theta: f64, r: f64) -> Result<Vec<Complex64>> {
    if !(r > 0.0) {
        return Err(Error::arg(format!("source distance must be positive, got {r}")));
    }
    let far = r > geom.rayleigh_distance();
    Ok(response_with(geom, phi, theta, r, far))
}

pub(crate) fn response_with(geom: &ArrayGeometry, phi: f64, theta: f64, r: f64, far: bool) -> Vec<Complex64> {
    let t = direction(phi, theta);
    let k = 2.0 * std::f64::consts::PI * geom.carrier_freq / SPEED_OF_LIGHT;
    geom.positions()
        .into_iter()
        .map(|p| {
            let path = if far {
                -(p[0] * t[0] + p[1] * t[1] + p[2] * t[2])
            } else {
                let d = [p[0] - r * t[0], p[1] - r * t[1], p[2] - r * t[2]];
                (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
            };
            Complex64::from_polar(1.0, -k * path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, PI};

    use super::*;

    fn small() -> ArrayGeometry {
        ArrayGeometry::new(4, 16, 5e-4, 5.6e-2, 3e11).unwrap()
    }

    #[test]
    fn boresight_far_field_is_all_ones() {
        let g = ArrayGeometry::table1();
        let r = 2.0 * g.rayleigh_distance();
        for phi in [0.0, 1.0, -2.5] {
            let a = array_response(&g, phi, 0.0, r).unwrap();
            for z in a {
                assert!((z - Complex64::new(1.0, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn half_wavelength_offset_flips_sign() {
        let g = small();
        let a = array_response(&g, 0.0, FRAC_PI_2, 1e3).unwrap();
        // element 5 of subarray 1 sits at x = 5e-4, i.e. half a wavelength
        let idx = g.ae_side();
        let p = g.positions()[idx];
        assert!((p[0] - 5e-4).abs() < 1e-15 && p[1] == 0.0);
        assert!((a[idx] - Complex64::new(-1.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn unit_modulus_everywhere() {
        let g = small();
        for (phi, theta, r) in [(0.3, 0.7, 5.0), (-2.0, -1.2, 50.0), (PI, 0.1, 0.5)] {
            for z in array_response(&g, phi, theta, r).unwrap() {
                assert!((z.norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn non_positive_distance_rejected() {
        assert!(array_response(&small(), 0.0, 0.0, 0.0).is_err());
        assert!(array_response(&small(), 0.0, 0.0, -3.0).is_err());
    }

    #[test]
    fn near_field_approaches_far_field() {
        let g = ArrayGeometry::table1();
        let (phi, theta) = (0.7, 0.9);
        let far = response_with(&g, phi, theta, 1.0, true);
        let gaps: Vec<f64> = [2.0, 10.0, 100.0]
            .iter()
            .map(|m| {
                let near = response_with(&g, phi, theta, m * g.rayleigh_distance(), false);
                let align = near[0].conj() * far[0];
                near.iter().zip(&far).map(|(n, f)| (n * align * f.conj()).arg().abs()).fold(0.0, f64::max)
            })
            .collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
        assert!(gaps[2] < 0.05);
    }
}
