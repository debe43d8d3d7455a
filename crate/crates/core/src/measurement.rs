//! Pilot measurement model.
//!
//! `Q` slots of unit pilots are received through random one-bit analog
//! combiners (one per subarray and slot, entries `±1/√(S·S̄)`) with an identity
//! digital combiner. Stacking the slots and moving to the angular domain gives
//! the complex problem `ȳ = M̄ h̄ + n̄`; its real embedding `y = M h + n` is what
//! every estimator in this crate works with.

use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::{AngularTransform, ArrayGeometry, ChannelRealization};
use crate::linalg::{batch_matvec, complex_to_real, matvec, real_embedding};
use crate::rng::{rng_from_seed, stream, sub_seed};
use crate::{io, Error, Result};

const FORMAT: &str = "hybrid-fpn/ensemble";
const VERSION: u32 = 1;

/// Relative singular-value cutoff of the pseudoinverse.
pub const PINV_CUTOFF: f64 = 1e-10;

/// Fixed combiners plus the derived operators. Immutable once built.
#[derive(Debug, Clone)]
pub struct MeasurementEnsemble {
    geometry: ArrayGeometry,
    num_slots: usize,
    seed: u64,
    /// `±1`, ordered (slot, subarray, element). The actual weights carry a
    /// `1/√(S·S̄)` factor.
    signs: Vec<f32>,
    complex_op: DMatrix<Complex64>,
    op: DMatrix<f64>,
    pinv: DMatrix<f64>,
    le: DMatrix<f64>,
    step_size: f64,
    rank: usize,
    op_norm_sq: f64,
}

/// Noisy pilots in real form.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedSignal {
    pub y: Vec<f64>,
    pub snr_db: f64,
    pub noise_var: f64,
}

/// `σ_n² = 10^(-SNR/10)`
pub fn noise_var_from_snr(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

#[derive(Serialize, Deserialize)]
struct EnsembleHeader {
    format: String,
    version: u32,
    num_subarrays: usize,
    aes_per_subarray: usize,
    num_slots: usize,
    seed: u64,
    geometry: ArrayGeometry,
}

impl MeasurementEnsemble {
    /// Draws the one-bit combiners from `seed` and assembles `M̄`, `M`, `M†`
    /// and the de-correlated LE matrix `W = η M†`.
    pub fn build(geometry: &ArrayGeometry, num_slots: usize, seed: u64) -> Result<Self> {
        geometry.validate()?;
        if num_slots == 0 {
            return Err(Error::arg("at least one pilot slot is required"));
        }
        let mut rng = rng_from_seed(sub_seed(seed, stream::COMBINER, 0));
        let signs =
            (0..num_slots * geometry.num_elements()).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        Self::from_signs(geometry, num_slots, seed, signs)
    }

    fn from_signs(geometry: &ArrayGeometry, num_slots: usize, seed: u64, signs: Vec<f32>) -> Result<Self> {
        let (s, sb) = (geometry.num_subarrays, geometry.aes_per_subarray);
        let n = s * sb;
        Error::check_len("combiner signs", num_slots * n, signs.len())?;
        if signs.iter().any(|&v| v != 1.0 && v != -1.0) {
            return Err(Error::Format("combiner signs must be ±1".into()));
        }
        let scale = 1.0 / (n as f64).sqrt();
        let transform = AngularTransform::new(geometry);
        // Row (q, s) of M̄ is w_{s,q}ᴴ U_sᴴ = conj(U_s w_{s,q}) on the columns of subarray s.
        let mut complex_op = DMatrix::zeros(s * num_slots, n);
        for q in 0..num_slots {
            let w: Vec<Complex64> =
                signs[q * n..(q + 1) * n].iter().map(|&v| Complex64::new(v as f64 * scale, 0.0)).collect();
            let uw = transform.forward(&w)?;
            for sa in 0..s {
                for k in 0..sb {
                    complex_op[(q * s + sa, sa * sb + k)] = uw[sa * sb + k].conj();
                }
            }
        }
        let op = real_embedding(&complex_op);
        let (pinv, rank, sigma_max) = block_pinv(&op, s, sb, num_slots)?;
        let trace: f64 = pinv.iter().zip(op.transpose().iter()).map(|(a, b)| a * b).sum();
        if !(trace > 0.0) {
            return Err(Error::Numerical { iteration: 0, message: "measurement operator has no range".into() });
        }
        let step_size = (2 * n) as f64 / trace;
        let le = &pinv * step_size;
        Ok(Self {
            geometry: *geometry,
            num_slots,
            seed,
            signs,
            complex_op,
            op,
            pinv,
            le,
            step_size,
            rank,
            op_norm_sq: sigma_max * sigma_max,
        })
    }

    pub fn geometry(&self) -> &ArrayGeometry {
        &self.geometry
    }

    pub fn num_slots(&self) -> usize {
        self.num_slots
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Length of `h` (`2·S·S̄`).
    pub fn signal_dim(&self) -> usize {
        self.op.ncols()
    }

    /// Length of `y` (`2·S·Q`).
    pub fn measurement_dim(&self) -> usize {
        self.op.nrows()
    }

    pub fn complex_operator(&self) -> &DMatrix<Complex64> {
        &self.complex_op
    }

    /// Real operator `M`.
    pub fn operator(&self) -> &DMatrix<f64> {
        &self.op
    }

    /// `M†`
    pub fn pinv(&self) -> &DMatrix<f64> {
        &self.pinv
    }

    /// `W = η M†`
    pub fn le_matrix(&self) -> &DMatrix<f64> {
        &self.le
    }

    /// `η = 2SS̄ / tr(M†M)`
    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// `‖M‖₂²`, from the singular values computed for the pseudoinverse.
    pub fn op_norm_sq(&self) -> f64 {
        self.op_norm_sq
    }

    /// Analog weight `(w_{s,q})_j` for 0-based indices.
    pub fn combiner_weight(&self, slot: usize, subarray: usize, element: usize) -> f64 {
        let n = self.geometry.num_elements();
        let idx = slot * n + subarray * self.geometry.aes_per_subarray + element;
        self.signs[idx] as f64 / (n as f64).sqrt()
    }

    /// `M h`
    pub fn apply(&self, h: &[f64]) -> Result<Vec<f64>> {
        Error::check_len("signal", self.signal_dim(), h.len())?;
        Ok(matvec(&self.op, h))
    }

    /// Noise after combining, real-embedded: `n` of `y = M h + n`.
    ///
    /// `n_q ~ CN(0, σ² I)` is drawn per antenna and slot, then passed through
    /// `W_RF,qᴴ`.
    pub fn combined_noise(&self, noise_var: f64, noise_seed: u64) -> Vec<Complex64> {
        let (s, sb) = (self.geometry.num_subarrays, self.geometry.aes_per_subarray);
        let mut rng = rng_from_seed(sub_seed(noise_seed, stream::NOISE, 0));
        let std = (noise_var / 2.0).sqrt();
        let mut out = vec![Complex64::new(0.0, 0.0); s * self.num_slots];
        for q in 0..self.num_slots {
            for sa in 0..s {
                let mut acc = Complex64::new(0.0, 0.0);
                for j in 0..sb {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    acc += self.combiner_weight(q, sa, j) * Complex64::new(std * re, std * im);
                }
                out[q * s + sa] = acc;
            }
        }
        out
    }

    /// Receives the pilots of `chan` via the complex model `ȳ = M̄ h̄ + n̄`.
    pub fn observe(&self, chan: &ChannelRealization, snr_db: f64, noise_seed: u64) -> Result<ReceivedSignal> {
        Error::check_len("channel", self.geometry.num_elements(), chan.angular.len())?;
        let noise_var = noise_var_from_snr(snr_db);
        let h = nalgebra::DVector::from_column_slice(&chan.angular);
        let clean = &self.complex_op * h;
        let noise = self.combined_noise(noise_var, noise_seed);
        let y_bar: Vec<Complex64> = clean.iter().zip(&noise).map(|(a, b)| a + b).collect();
        Ok(ReceivedSignal { y: complex_to_real(&y_bar), snr_db, noise_var })
    }

    /// Same draw as [`observe`](Self::observe) but through the real model
    /// `y = M h + n`, starting from the real angular channel.
    pub fn observe_real(&self, h: &[f64], snr_db: f64, noise_seed: u64) -> Result<ReceivedSignal> {
        let noise_var = noise_var_from_snr(snr_db);
        let mut y = self.apply(h)?;
        let noise = complex_to_real(&self.combined_noise(noise_var, noise_seed));
        for (y, n) in y.iter_mut().zip(noise) {
            *y += n;
        }
        Ok(ReceivedSignal { y, snr_db, noise_var })
    }

    /// De-correlated linear estimator `h + W(y − M h)`.
    pub fn le_apply(&self, h: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        Error::check_len("le_apply h", self.signal_dim(), h.len())?;
        Error::check_len("le_apply y", self.measurement_dim(), y.len())?;
        let mut out = h.to_vec();
        self.le_apply_batch(&mut out, y, 1)?;
        Ok(out)
    }

    /// In-place batched LE on row-major batches: `h[b] ← h[b] + W(y[b] − M h[b])`.
    pub fn le_apply_batch(&self, h: &mut [f64], y: &[f64], rows: usize) -> Result<()> {
        Error::check_len("le_apply h", rows * self.signal_dim(), h.len())?;
        Error::check_len("le_apply y", rows * self.measurement_dim(), y.len())?;
        let mut residual = y.to_vec();
        batch_matvec(&self.op, h, rows, -1.0, 1.0, &mut residual);
        batch_matvec(&self.le, &residual, rows, 1.0, 1.0, h);
        Ok(())
    }

    /// Writes the header and the `±1` sign patterns; operators are rebuilt on load.
    pub fn save(&self, path: &Path) -> Result<()> {
        io::save(path, &self.header(), &self.signs)
    }

    pub fn write_to(&self, w: impl std::io::Write) -> Result<()> {
        io::write_container(w, &self.header(), &self.signs)
    }

    fn header(&self) -> EnsembleHeader {
        EnsembleHeader {
            format: FORMAT.into(),
            version: VERSION,
            num_subarrays: self.geometry.num_subarrays,
            aes_per_subarray: self.geometry.aes_per_subarray,
            num_slots: self.num_slots,
            seed: self.seed,
            geometry: self.geometry,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, signs): (EnsembleHeader, _) = io::load(path)?;
        Self::from_header(header, signs)
    }

    pub fn read_from(r: impl std::io::Read) -> Result<Self> {
        let (header, signs): (EnsembleHeader, _) = io::read_container(r)?;
        Self::from_header(header, signs)
    }

    fn from_header(header: EnsembleHeader, signs: Vec<f32>) -> Result<Self> {
        if header.format != FORMAT || header.version != VERSION {
            return Err(Error::Format(format!(
                "expected {FORMAT} v{VERSION}, found {} v{}",
                header.format, header.version
            )));
        }
        let g = header.geometry;
        if g.num_subarrays != header.num_subarrays || g.aes_per_subarray != header.aes_per_subarray {
            return Err(Error::Format("geometry block disagrees with header sizes".into()));
        }
        Self::from_signs(&g, header.num_slots, header.seed, signs)
    }
}

/// Pseudoinverse of the real operator via per-subarray SVDs.
///
/// Rows `{q·S+s, SQ+q·S+s}` of `M` only touch columns `{s·S̄+k, SS̄+s·S̄+k}`, so
/// `M` is a row/column permutation of `blkdiag(M_1, …, M_S)` and `M†` is the
/// same permutation of the block pseudoinverses. Singular values below
/// `PINV_CUTOFF · σ_max` (global maximum) are dropped. Returns `(M†, rank, σ_max)`.
fn block_pinv(op: &DMatrix<f64>, s: usize, sb: usize, q: usize) -> Result<(DMatrix<f64>, usize, f64)> {
    let (sq, n) = (s * q, s * sb);
    let rows_of =
        |sa: usize| -> Vec<usize> { (0..q).map(|k| k * s + sa).chain((0..q).map(|k| sq + k * s + sa)).collect() };
    let cols_of =
        |sa: usize| -> Vec<usize> { (0..sb).map(|k| sa * sb + k).chain((0..sb).map(|k| n + sa * sb + k)).collect() };
    let svds: Vec<_> = (0..s)
        .map(|sa| {
            let (rows, cols) = (rows_of(sa), cols_of(sa));
            let block = DMatrix::from_fn(rows.len(), cols.len(), |i, j| op[(rows[i], cols[j])]);
            block.svd(true, true)
        })
        .collect();
    let sigma_max = svds.iter().map(|d| d.singular_values.max()).fold(0.0, f64::max);
    let cutoff = PINV_CUTOFF * sigma_max;
    let mut pinv = DMatrix::zeros(op.ncols(), op.nrows());
    let mut rank = 0;
    for (sa, svd) in svds.into_iter().enumerate() {
        rank += svd.singular_values.iter().filter(|&&v| v > cutoff).count();
        let block =
            svd.pseudo_inverse(cutoff).map_err(|e| Error::Numerical { iteration: 0, message: e.to_string() })?;
        let (rows, cols) = (rows_of(sa), cols_of(sa));
        for (j, &c) in cols.iter().enumerate() {
            for (i, &r) in rows.iter().enumerate() {
                pinv[(c, r)] = block[(j, i)];
            }
        }
    }
    Ok((pinv, rank, sigma_max))
}

#[cfg(test)]
mod tests {
    use nalgebra::SymmetricEigen;

    use super::*;
    use crate::channel::{synthesize_channel, MaterialModel, SamplingConfig};
    use crate::linalg::{dist, norm};

    fn small() -> ArrayGeometry {
        ArrayGeometry::new(4, 16, 5e-4, 5.6e-2, 3e11).unwrap()
    }

    #[test]
    fn table1_dimensions_and_step() {
        let ens = MeasurementEnsemble::build(&ArrayGeometry::table1(), 128, 1).unwrap();
        assert_eq!(ens.operator().shape(), (1024, 2048));
        assert_eq!(ens.le_matrix().shape(), (2048, 1024));
        assert_eq!(ens.rank(), 1024);
        assert!((ens.step_size() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn weights_are_one_bit_and_block_diagonal() {
        let g = small();
        let ens = MeasurementEnsemble::build(&g, 6, 3).unwrap();
        let v = 1.0 / 8.0;
        for q in 0..6 {
            for s in 0..4 {
                for j in 0..16 {
                    assert_eq!(ens.combiner_weight(q, s, j).abs(), v);
                }
            }
        }
        // each row of M̄ is zero outside its own subarray's columns
        let m = ens.complex_operator();
        for q in 0..6 {
            for s in 0..4 {
                for col in 0..64 {
                    if col / 16 != s {
                        assert_eq!(m[(q * 4 + s, col)].norm(), 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn block_pinv_matches_dense_svd() {
        let ens = MeasurementEnsemble::build(&small(), 6, 5).unwrap();
        let dense = ens.operator().clone().pseudo_inverse(1e-10).unwrap();
        let diff = (&dense - ens.pinv()).abs().max();
        assert!(diff < 1e-9, "max diff {diff}");
    }

    #[test]
    fn rank_deficient_operator_step() {
        // Q > S̄ means M has more rows than independent directions per block
        let ens = MeasurementEnsemble::build(&small(), 20, 2).unwrap();
        assert_eq!(ens.rank(), 2 * 4 * 16);
        assert!((ens.step_size() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn decorrelated_and_projector_spectrum() {
        let ens = MeasurementEnsemble::build(&small(), 8, 9).unwrap();
        let wm = ens.le_matrix() * ens.operator();
        let n = wm.nrows();
        let trace = n as f64 - wm.trace();
        assert!(trace.abs() / n as f64 <= 1e-6);
        let pm = ens.pinv() * ens.operator();
        let pm = (&pm + pm.transpose()) * 0.5;
        let eig = SymmetricEigen::new(pm);
        for l in eig.eigenvalues.iter() {
            assert!(l.abs() < 1e-8 || (l - 1.0).abs() < 1e-8, "eigenvalue {l}");
        }
        let radius = eig.eigenvalues.iter().map(|l| (1.0 - ens.step_size() * l).abs()).fold(0.0, f64::max);
        assert!((radius - 1.0).abs() < 1e-6);
    }

    #[test]
    fn operator_norm_matches_power_iteration() {
        let ens = MeasurementEnsemble::build(&small(), 8, 4).unwrap();
        let power = crate::linalg::spectral_norm_sq(ens.operator(), 1e-13, 100_000);
        assert!((power - ens.op_norm_sq()).abs() / ens.op_norm_sq() < 1e-6);
    }

    #[test]
    fn same_seed_same_operator() {
        let a = MeasurementEnsemble::build(&small(), 5, 77).unwrap();
        let b = MeasurementEnsemble::build(&small(), 5, 77).unwrap();
        assert_eq!(a.operator(), b.operator());
        let c = MeasurementEnsemble::build(&small(), 5, 78).unwrap();
        assert_ne!(a.operator(), c.operator());
    }

    #[test]
    fn zero_slots_rejected() {
        assert!(MeasurementEnsemble::build(&small(), 0, 1).is_err());
    }

    #[test]
    fn noiseless_observation_is_exact() {
        let g = small();
        let ens = MeasurementEnsemble::build(&g, 8, 1).unwrap();
        let ch = synthesize_channel(&g, &MaterialModel::table1(), &SamplingConfig::default(), 4).unwrap();
        let h = ch.real_angular();
        let clean = ens.apply(&h).unwrap();
        let rx = ens.observe(&ch, f64::INFINITY, 3).unwrap();
        assert_eq!(rx.noise_var, 0.0);
        assert!(dist(&rx.y, &clean) / norm(&clean) < 1e-10);
    }

    #[test]
    fn complex_and_real_models_agree() {
        let g = small();
        let ens = MeasurementEnsemble::build(&g, 8, 1).unwrap();
        for seed in 0..10 {
            let ch = synthesize_channel(&g, &MaterialModel::table1(), &SamplingConfig::default(), seed).unwrap();
            let a = ens.observe(&ch, 5.0, seed).unwrap();
            let b = ens.observe_real(&ch.real_angular(), 5.0, seed).unwrap();
            assert!(dist(&a.y, &b.y) / norm(&a.y) < 1e-10);
        }
    }

    #[test]
    fn combined_noise_power_per_rf_chain() {
        // E|w_{s,q}ᴴ n_q|² = σ² ‖w‖² = σ²/S
        let g = small();
        let ens = MeasurementEnsemble::build(&g, 4, 1).unwrap();
        let var = 0.3;
        let draws = 10_000;
        let total: f64 = (0..draws).map(|i| ens.combined_noise(var, i).iter().map(|z| z.norm_sqr()).sum::<f64>()).sum();
        let per_chain = total / (draws as f64 * 4.0 * 4.0);
        let expected = var / 4.0;
        assert!((per_chain - expected).abs() / expected < 0.05, "{per_chain} vs {expected}");
    }

    #[test]
    fn le_fixed_on_consistent_input_and_affine() {
        let ens = MeasurementEnsemble::build(&small(), 8, 1).unwrap();
        let mut rng = rng_from_seed(5);
        let mut rand_vec = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
        let h = rand_vec(128);
        let y = ens.apply(&h).unwrap();
        let out = ens.le_apply(&h, &y).unwrap();
        assert!(dist(&out, &h) < 1e-10 * norm(&h));

        let (h1, h2, y1, y2) = (rand_vec(128), rand_vec(128), rand_vec(64), rand_vec(64));
        let sum = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + y).collect::<Vec<_>>();
        let lhs = ens.le_apply(&sum(&h1, &h2), &sum(&y1, &y2)).unwrap();
        let zero = ens.le_apply(&vec![0.0; 128], &vec![0.0; 64]).unwrap();
        let rhs: Vec<f64> = sum(&ens.le_apply(&h1, &y1).unwrap(), &ens.le_apply(&h2, &y2).unwrap())
            .iter()
            .zip(&zero)
            .map(|(a, b)| a - b)
            .collect();
        assert!(dist(&lhs, &rhs) < 1e-10);
        assert!(ens.le_apply(&h1, &y1[..10]).is_err());
    }

    #[test]
    fn le_is_one_lipschitz() {
        let ens = MeasurementEnsemble::build(&small(), 8, 2).unwrap();
        let mut rng = rng_from_seed(8);
        let y: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut worst: f64 = 0.0;
        for _ in 0..200 {
            let a: Vec<f64> = (0..128).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..128).map(|_| rng.random_range(-1.0..1.0)).collect();
            let r = dist(&ens.le_apply(&a, &y).unwrap(), &ens.le_apply(&b, &y).unwrap()) / dist(&a, &b);
            worst = worst.max(r);
        }
        assert!(worst <= 1.0 + 1e-9, "{worst}");
    }

    #[test]
    fn persisted_ensemble_round_trips() {
        let ens = MeasurementEnsemble::build(&small(), 7, 21).unwrap();
        let mut buf = Vec::new();
        ens.write_to(&mut buf).unwrap();
        let back = MeasurementEnsemble::read_from(&buf[..]).unwrap();
        assert_eq!(back.operator(), ens.operator());
        assert_eq!(back.le_matrix(), ens.le_matrix());
        assert_eq!(back.seed(), 21);
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(buf, again);
    }
}
