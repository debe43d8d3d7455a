use rand::Rng as _;
use rand_distr::StandardNormal;

use super::denoiser::{Denoiser, NUM_LAYERS};
use super::scalar::Scalar;
use crate::rng::rng_from_seed;
use crate::{linalg, Error, Result};

/// Relative perturbation size used by [`estimate_lipschitz`] by default.
pub const DEFAULT_PERTURB_SCALE: f64 = 1e-3;

/// A batched map on real vectors, evaluated in `f64` at the interface.
pub trait VectorMap: Sync {
    fn dim(&self) -> usize;
    fn apply_batch(&self, input: &[f64], rows: usize) -> Result<Vec<f64>>;
}

impl<T: Scalar> VectorMap for Denoiser<T> {
    fn dim(&self) -> usize {
        Denoiser::dim(self)
    }

    fn apply_batch(&self, input: &[f64], rows: usize) -> Result<Vec<f64>> {
        let x: Vec<T> = input.iter().map(|v| T::from_f64(*v)).collect();
        Ok(self.forward_batch(&x, rows)?.into_iter().map(T::to_f64).collect())
    }
}

/// Empirical Lipschitz constant `Σ‖R(xᵢ+δᵢ) − R(xᵢ)‖ / Σ‖δᵢ‖` over a batch.
///
/// `δᵢ` is i.i.d. Gaussian with per-entry deviation
/// `perturb_scale · mean‖xᵢ‖ / √dim` (or `perturb_scale` when every input is zero).
pub fn estimate_lipschitz<M: VectorMap + ?Sized>(
    map: &M,
    inputs: &[f64],
    rows: usize,
    perturb_scale: f64,
    seed: u64,
) -> Result<f64> {
    if rows == 0 {
        return Err(Error::arg("Lipschitz estimate needs at least one input"));
    }
    if !(perturb_scale > 0.0) {
        return Err(Error::arg(format!("perturbation scale must be positive, got {perturb_scale}")));
    }
    let dim = map.dim();
    Error::check_len("Lipschitz inputs", rows * dim, inputs.len())?;
    let mean_norm = inputs.chunks_exact(dim).map(linalg::norm).sum::<f64>() / rows as f64;
    let sigma = if mean_norm > 0.0 { perturb_scale * mean_norm / (dim as f64).sqrt() } else { perturb_scale };
    let mut rng = rng_from_seed(seed);
    let perturbed: Vec<f64> = inputs.iter().map(|x| x + sigma * rng.sample::<f64, _>(StandardNormal)).collect();
    let base = map.apply_batch(inputs, rows)?;
    let moved = map.apply_batch(&perturbed, rows)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..rows {
        let r = i * dim..(i + 1) * dim;
        num += linalg::dist(&moved[r.clone()], &base[r.clone()]);
        den += linalg::dist(&perturbed[r.clone()], &inputs[r]);
    }
    let l = num / den;
    if !l.is_finite() {
        return Err(Error::Numerical { iteration: 0, message: "non-finite Lipschitz estimate".into() });
    }
    Ok(l)
}

/// Per-layer kernel factor `(β/L)^(1/layers)` when `L ≥ 1`, otherwise `None`.
pub fn contraction_scale(lipschitz: f64, beta: f64, layers: usize) -> Option<f64> {
    (lipschitz >= 1.0).then(|| (beta / lipschitz).powf(1.0 / layers as f64))
}

/// Rescales every kernel by `(β/L)^(1/9)` if `L ≥ 1`. Returns whether the
/// weights changed.
pub fn enforce_contraction<T: Scalar>(net: &mut Denoiser<T>, lipschitz: f64, beta: f64) -> bool {
    match contraction_scale(lipschitz, beta, NUM_LAYERS) {
        Some(f) => {
            net.scale_kernels(f);
            true
        }
        None => false,
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::super::denoiser::{leaky, relu};
    use super::*;
    use crate::nn::{ConvLayer, LEAKY_SLOPE};

    fn gaussian(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng_from_seed(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn identity_and_half_networks() {
        let id = Denoiser::<f64>::scaled_identity(2, 16, 1.0).unwrap();
        let x = gaussian(4 * id.dim(), 1);
        let l = estimate_lipschitz(&id, &x, 4, DEFAULT_PERTURB_SCALE, 7).unwrap();
        assert!((l - 1.0).abs() < 1e-9, "{l}");
        let half = Denoiser::<f64>::scaled_identity(2, 16, 0.5).unwrap();
        let l = estimate_lipschitz(&half, &x, 4, DEFAULT_PERTURB_SCALE, 7).unwrap();
        assert!((l - 0.5).abs() < 1e-6, "{l}");
    }

    #[test]
    fn empty_batch_rejected() {
        let id = Denoiser::<f64>::scaled_identity(1, 4, 1.0).unwrap();
        assert!(estimate_lipschitz(&id, &[], 0, 1e-3, 0).is_err());
        assert!(estimate_lipschitz(&id, &[0.0; 8], 1, 0.0, 0).is_err());
    }

    #[test]
    fn zero_inputs_use_absolute_scale() {
        let half = Denoiser::<f64>::scaled_identity(1, 4, 0.5).unwrap();
        let l = estimate_lipschitz(&half, &[0.0; 16], 2, 1e-3, 3).unwrap();
        assert!((l - 0.5).abs() < 1e-9);
    }

    #[test]
    fn scale_factor_for_mild_violation() {
        let f = contraction_scale(1.25, 0.99, 9).unwrap();
        assert!((f - 0.974_422_36).abs() < 1e-8, "{f}");
        assert!(contraction_scale(0.8, 0.99, 9).is_none());
    }

    #[test]
    fn enforcement_touches_kernels_only() {
        let mut net = Denoiser::<f64>::he_uniform(1, 4, 2).unwrap();
        let bias = gaussian(HIDDEN, 3);
        let mut first = net.layers()[0].clone();
        first = ConvLayer::from_oihw(2, HIDDEN, 3, &first.kernel_oihw(), &bias).unwrap();
        net.set_layer(0, first).unwrap();
        let before = net.clone();
        assert!(!enforce_contraction(&mut net, 0.8, 0.99));
        assert_eq!(net.layers(), before.layers());
        assert!(enforce_contraction(&mut net, 1.25, 0.99));
        let f = contraction_scale(1.25, 0.99, 9).unwrap();
        for (a, b) in net.layers().iter().zip(before.layers()) {
            assert_eq!(a.bias(), b.bias());
            for (x, y) in a.kernel_oihw().iter().zip(b.kernel_oihw()) {
                assert!((x - f * y).abs() < 1e-15);
            }
        }
    }

    const HIDDEN: usize = crate::nn::HIDDEN_WIDTH;

    /// Nine scalar gains in sequence: the Lipschitz constant is their product.
    struct LinearChain(Vec<ConvLayer<f64>>);

    impl VectorMap for LinearChain {
        fn dim(&self) -> usize {
            3
        }

        fn apply_batch(&self, input: &[f64], _rows: usize) -> Result<Vec<f64>> {
            let gain: f64 = self.0.iter().map(|l| l.kernel_oihw()[0]).product();
            Ok(input.iter().map(|x| gain * x).collect())
        }
    }

    #[test]
    fn linear_chain_lands_on_beta() {
        let gains = [1.3, -0.9, 1.1, 1.05, 0.8, 1.6, 1.2, -1.1, 0.95];
        let mut chain =
            LinearChain(gains.iter().map(|g| ConvLayer::from_oihw(1, 1, 1, &[*g], &[0.0]).unwrap()).collect());
        let x = gaussian(3 * 5, 4);
        let l = estimate_lipschitz(&chain, &x, 5, 1e-3, 1).unwrap();
        let product: f64 = gains.iter().product::<f64>().abs();
        assert!((l - product).abs() < 1e-9 && l > 1.0);
        let f = contraction_scale(l, 0.99, chain.0.len()).unwrap();
        for layer in &mut chain.0 {
            let k = layer.kernel_oihw()[0] * f;
            *layer = ConvLayer::from_oihw(1, 1, 1, &[k], &[0.0]).unwrap();
        }
        let after = estimate_lipschitz(&chain, &x, 5, 1e-3, 2).unwrap();
        assert!((after - 0.99).abs() < 1e-12, "{after}");
    }

    proptest! {
        #[test]
        fn activations_are_one_lipschitz(a in -1e3f64..1e3, b in -1e3f64..1e3) {
            let mut r = [a, b];
            relu(&mut r);
            prop_assert!((r[0] - r[1]).abs() <= (a - b).abs());
            let mut l = [a, b];
            leaky(&mut l);
            prop_assert!((l[0] - l[1]).abs() <= (a - b).abs());
            prop_assert!(r[0] >= 0.0 && (a >= 0.0 || l[0] == LEAKY_SLOPE * a));
        }
    }
}
