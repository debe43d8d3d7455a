use num_complex::Complex64;

use super::ArrayGeometry;
use crate::{Error, Result};

/// Per-subarray unitary 2-D DFT: `h̄ = blkdiag(U_1, …, U_S) h̃` where each
/// `U_s = D ⊗ D` and `D` is the normalized `√S̄`-point DFT matrix.
#[derive(Debug, Clone)]
pub struct AngularTransform {
    num_subarrays: usize,
    side: usize,
    /// `D[k][n] = exp(-j2πkn/N)/√N`, row-major.
    dft: Vec<Complex64>,
}

impl AngularTransform {
    pub fn new(geom: &ArrayGeometry) -> Self {
        let side = geom.ae_side();
        let norm = 1.0 / (side as f64).sqrt();
        let dft = (0..side * side)
            .map(|i| {
                let (k, n) = (i / side, i % side);
                let angle = -2.0 * std::f64::consts::PI * ((k * n) % side) as f64 / side as f64;
                Complex64::from_polar(norm, angle)
            })
            .collect();
        Self { num_subarrays: geom.num_subarrays, side, dft }
    }

    pub fn len(&self) -> usize {
        self.num_subarrays * self.side * self.side
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Spatial → angular (`Fᴴ h̃`).
    pub fn forward(&self, spatial: &[Complex64]) -> Result<Vec<Complex64>> {
        self.apply(spatial, false)
    }

    /// Angular → spatial (`F h̄`).
    pub fn inverse(&self, angular: &[Complex64]) -> Result<Vec<Complex64>> {
        self.apply(angular, true)
    }

    fn apply(&self, x: &[Complex64], adjoint: bool) -> Result<Vec<Complex64>> {
        Error::check_len("angular transform", self.len(), x.len())?;
        let n = self.side;
        let d = |k: usize, m: usize| {
            let v = self.dft[k * n + m];
            if adjoint {
                v.conj()
            } else {
                v
            }
        };
        let mut out = vec![Complex64::new(0.0, 0.0); x.len()];
        let mut tmp = vec![Complex64::new(0.0, 0.0); n * n];
        for (block, dst) in x.chunks(n * n).zip(out.chunks_mut(n * n)) {
            // tmp = D · X (rows), dst = tmp · Dᵀ (columns); D is symmetric.
            for k in 0..n {
                for c in 0..n {
                    tmp[k * n + c] = (0..n).map(|m| d(k, m) * block[m * n + c]).sum();
                }
            }
            for r in 0..n {
                for k in 0..n {
                    dst[r * n + k] = (0..n).map(|c| tmp[r * n + c] * d(k, c)).sum();
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;
    use crate::rng::rng_from_seed;

    fn norm(v: &[Complex64]) -> f64 {
        v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    fn random_vec(len: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = rng_from_seed(seed);
        (0..len).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
    }

    #[test]
    fn zero_maps_to_zero() {
        let t = AngularTransform::new(&ArrayGeometry::table1());
        let z = vec![Complex64::new(0.0, 0.0); t.len()];
        assert!(t.forward(&z).unwrap().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn unitary_round_trip() {
        let t = AngularTransform::new(&ArrayGeometry::table1());
        for seed in 0..5 {
            let x = random_vec(t.len(), seed);
            let fx = t.forward(&x).unwrap();
            assert!((norm(&fx) - norm(&x)).abs() / norm(&x) < 1e-10);
            let back = t.inverse(&fx).unwrap();
            let err: Vec<_> = back.iter().zip(&x).map(|(a, b)| a - b).collect();
            assert!(norm(&err) / norm(&x) < 1e-10);
        }
    }

    #[test]
    fn matches_brute_force_kronecker_dft() {
        let g = ArrayGeometry::new(4, 16, 5e-4, 5.6e-2, 3e11).unwrap();
        let t = AngularTransform::new(&g);
        let x = random_vec(t.len(), 9);
        let fast = t.forward(&x).unwrap();
        let n = 4usize;
        for s in 0..4 {
            for k1 in 0..n {
                for k2 in 0..n {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for m in 0..n {
                        for c in 0..n {
                            let ph = -2.0 * std::f64::consts::PI * (k1 * m + k2 * c) as f64 / n as f64;
                            acc += Complex64::from_polar(1.0 / n as f64, ph) * x[s * 16 + m * n + c];
                        }
                    }
                    assert!((acc - fast[s * 16 + k1 * n + k2]).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn length_mismatch_rejected() {
        let t = AngularTransform::new(&ArrayGeometry::table1());
        assert!(t.forward(&[Complex64::new(1.0, 0.0); 3]).is_err());
    }
}
