use serde::{Deserialize, Serialize};

use crate::{Error, Result, SPEED_OF_LIGHT};

/// Planar array-of-subarrays: `√S × √S` subarrays, each a `√S̄ × √S̄` uniform
/// planar array, lying in the x-y plane with the first element at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub num_subarrays: usize,
    pub aes_per_subarray: usize,
    /// Spacing between adjacent elements inside a subarray (m).
    pub ae_spacing: f64,
    /// Gap between adjacent subarrays (m).
    pub sa_spacing: f64,
    /// Carrier frequency (Hz).
    pub carrier_freq: f64,
}

fn exact_sqrt(n: usize) -> Option<usize> {
    let r = (n as f64).sqrt().round() as usize;
    (r * r == n).then_some(r)
}

impl ArrayGeometry {
    pub fn new(
        num_subarrays: usize,
        aes_per_subarray: usize,
        ae_spacing: f64,
        sa_spacing: f64,
        carrier_freq: f64,
    ) -> Result<Self> {
        let geom = Self { num_subarrays, aes_per_subarray, ae_spacing, sa_spacing, carrier_freq };
        geom.validate()?;
        Ok(geom)
    }

    /// The 300 GHz, 4 × 256 element array used in the reference simulations.
    pub fn table1() -> Self {
        Self { num_subarrays: 4, aes_per_subarray: 256, ae_spacing: 5.0e-4, sa_spacing: 5.6e-2, carrier_freq: 3.0e11 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, n) in [("num_subarrays", self.num_subarrays), ("aes_per_subarray", self.aes_per_subarray)] {
            if n == 0 || exact_sqrt(n).is_none() {
                return Err(Error::arg(format!("{name} = {n} is not a positive perfect square")));
            }
        }
        for (name, v) in
            [("ae_spacing", self.ae_spacing), ("sa_spacing", self.sa_spacing), ("carrier_freq", self.carrier_freq)]
        {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::arg(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// `√S`
    pub fn sa_side(&self) -> usize {
        exact_sqrt(self.num_subarrays).expect("validated geometry")
    }

    /// `√S̄`
    pub fn ae_side(&self) -> usize {
        exact_sqrt(self.aes_per_subarray).expect("validated geometry")
    }

    /// Total number of antenna elements `S·S̄`.
    pub fn num_elements(&self) -> usize {
        self.num_subarrays * self.aes_per_subarray
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq
    }

    /// Pitch between the first elements of neighbouring subarrays.
    fn sa_pitch(&self) -> f64 {
        (self.ae_side() as f64 - 1.0) * self.ae_spacing + self.sa_spacing
    }

    /// Coordinate of element `s̄` of subarray `s` (both 1-based, row-major
    /// within the array and within each subarray).
    pub fn ae_coordinate(&self, s: usize, s_bar: usize) -> Result<[f64; 3]> {
        if s == 0 || s > self.num_subarrays {
            return Err(Error::arg(format!("subarray index {s} outside 1..={}", self.num_subarrays)));
        }
        if s_bar == 0 || s_bar > self.aes_per_subarray {
            return Err(Error::arg(format!("element index {s_bar} outside 1..={}", self.aes_per_subarray)));
        }
        Ok(self.coordinate0(s - 1, s_bar - 1))
    }

    fn coordinate0(&self, s: usize, s_bar: usize) -> [f64; 3] {
        let (sa_side, ae_side) = (self.sa_side(), self.ae_side());
        let (m, n) = (s / sa_side, s % sa_side);
        let (mb, nb) = (s_bar / ae_side, s_bar % ae_side);
        let pitch = self.sa_pitch();
        [m as f64 * pitch + mb as f64 * self.ae_spacing, n as f64 * pitch + nb as f64 * self.ae_spacing, 0.0]
    }

    /// All element coordinates in channel-vector order (`(s-1)·S̄ + (s̄-1)`).
    pub fn positions(&self) -> Vec<[f64; 3]> {
        (0..self.num_subarrays)
            .flat_map(|s| (0..self.aes_per_subarray).map(move |sb| (s, sb)))
            .map(|(s, sb)| self.coordinate0(s, sb))
            .collect()
    }

    /// Largest element-to-element distance (the square's diagonal).
    pub fn aperture(&self) -> f64 {
        let extent = (self.sa_side() as f64 - 1.0) * self.sa_pitch() + (self.ae_side() as f64 - 1.0) * self.ae_spacing;
        extent * std::f64::consts::SQRT_2
    }

    /// Far/near-field boundary `2D²/λ`.
    pub fn rayleigh_distance(&self) -> f64 {
        let d = self.aperture();
        2.0 * d * d / self.wavelength()
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;

    #[test]
    fn origin_element() {
        let g = ArrayGeometry::table1();
        assert_eq!(g.ae_coordinate(1, 1).unwrap(), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn second_subarray_and_second_element() {
        let g = ArrayGeometry::table1();
        let p = g.ae_coordinate(2, 1).unwrap();
        assert_eq!(p[0], 0.0);
        assert_relative_eq!(p[1], 0.0635, max_relative = 1e-12);
        assert_eq!(p[2], 0.0);
        let p = g.ae_coordinate(1, 2).unwrap();
        assert_eq!(p[0], 0.0);
        assert_relative_eq!(p[1], 5e-4, max_relative = 1e-12);
    }

    #[test]
    fn out_of_range_index() {
        let g = ArrayGeometry::table1();
        assert!(g.ae_coordinate(0, 1).is_err());
        assert!(g.ae_coordinate(5, 1).is_err());
        assert!(g.ae_coordinate(1, 257).is_err());
    }

    #[test]
    fn rejects_non_square_counts() {
        assert!(ArrayGeometry::new(3, 256, 5e-4, 5.6e-2, 3e11).is_err());
        assert!(ArrayGeometry::new(4, 0, 5e-4, 5.6e-2, 3e11).is_err());
        assert!(ArrayGeometry::new(4, 256, -1.0, 5.6e-2, 3e11).is_err());
    }

    #[test]
    fn rayleigh_distance_table1() {
        let d = ArrayGeometry::table1().rayleigh_distance();
        assert!((d - 20.0).abs() / 20.0 < 0.02, "got {d}");
    }

    #[test]
    fn rayleigh_distance_single_element_is_zero() {
        let g = ArrayGeometry::new(1, 1, 5e-4, 5.6e-2, 3e11).unwrap();
        assert_eq!(g.rayleigh_distance(), 0.0);
    }

    #[test]
    fn aperture_matches_brute_force_and_scales_quadratically() {
        let g = ArrayGeometry::new(4, 16, 5e-4, 5.6e-2, 3e11).unwrap();
        let pos = g.positions();
        let mut dmax: f64 = 0.0;
        for a in &pos {
            for b in &pos {
                let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
                dmax = dmax.max(d);
            }
        }
        assert_relative_eq!(g.aperture(), dmax, max_relative = 1e-12);

        let doubled = ArrayGeometry::new(4, 16, 1e-3, 1.12e-1, 3e11).unwrap();
        assert_relative_eq!(doubled.aperture(), 2.0 * g.aperture(), max_relative = 1e-12);
        assert_relative_eq!(doubled.rayleigh_distance(), 4.0 * g.rayleigh_distance(), max_relative = 1e-12);
    }
}
