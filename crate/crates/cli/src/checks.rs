//! Invariant checks shared by `verify` and the acceptance suite.

use std::time::Instant;

use hybrid_fpn::channel::{synthesize_channel, ArrayGeometry};
use hybrid_fpn::fpn::{contraction_ratios, fpn_infer_batch, nmse_db, sample_pairs, FixedPointOptions};
use hybrid_fpn::linalg::{dist, norm};
use hybrid_fpn::measurement::MeasurementEnsemble;
use hybrid_fpn::nn::{estimate_lipschitz, DenoiserWeights, DEFAULT_PERTURB_SCALE};
use hybrid_fpn::rng::{rng_from_seed, stream, sub_seed};
use hybrid_fpn::solvers::{solve_omp, OmpOptions};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index::sample;
use rand::Rng as _;

use crate::commands::benchmark::TestBatch;
use crate::commands::Context;
use crate::error::CliResult;

/// One named pass/fail line.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

/// `|tr(I − W M)| / tr(I)` and the time it took.
pub fn trace_identity(ens: &MeasurementEnsemble) -> (f64, f64) {
    let start = Instant::now();
    let (w, m) = (ens.le_matrix(), ens.operator());
    let n = ens.signal_dim();
    // tr(W M) = Σ_ij W_ij M_ji
    let mut tr = 0.0;
    for i in 0..n {
        for j in 0..m.nrows() {
            tr += w[(i, j)] * m[(j, i)];
        }
    }
    ((n as f64 - tr).abs() / n as f64, start.elapsed().as_secs_f64())
}

/// Projector spectrum from a dense symmetric eigendecomposition of `M†M`:
/// the largest distance of an eigenvalue to `{0, 1}`, the deviation of
/// `‖I − ηM†M‖₂` from 1, and the time taken.
pub fn projector_spectrum(ens: &MeasurementEnsemble) -> (f64, f64, f64) {
    let start = Instant::now();
    let p = ens.pinv() * ens.operator();
    let sym = (&p + p.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym).eigenvalues;
    let off = eig.iter().map(|l| l.abs().min((l - 1.0).abs())).fold(0.0, f64::max);
    let n = p.nrows();
    let reflect = DMatrix::<f64>::identity(n, n) - &p * ens.step_size();
    let sym = (&reflect + reflect.transpose()) * 0.5;
    let radius = SymmetricEigen::new(sym).eigenvalues.iter().fold(0f64, |a, l| a.max(l.abs()));
    (off, (radius - 1.0).abs(), start.elapsed().as_secs_f64())
}

pub fn rayleigh_table1() -> f64 {
    ArrayGeometry::table1().rayleigh_distance()
}

/// Largest relative difference between the complex and the real-embedded
/// forward models over `instances` channel and noise draws.
pub fn real_complex_gap(ctx: &Context, instances: usize, seed: u64) -> CliResult<f64> {
    let mut worst = 0f64;
    for i in 0..instances as u64 {
        let chan = synthesize_channel(
            &ctx.cfg.geometry,
            &ctx.cfg.material,
            &ctx.cfg.sampling,
            sub_seed(seed, stream::CHANNEL, i),
        )?;
        let snr = rng_from_seed(sub_seed(seed, stream::SNR, i)).random_range(0.0..20.0);
        let noise_seed = sub_seed(seed, stream::NOISE, i);
        let complex = ctx.ens.observe(&chan, snr, noise_seed)?;
        let real = ctx.ens.observe_real(&chan.real_angular(), snr, noise_seed)?;
        worst = worst.max(dist(&complex.y, &real.y) / norm(&complex.y));
    }
    Ok(worst)
}

/// Worst NMSE (dB) of OMP on noise-free `k`-sparse signals with Gaussian
/// amplitudes on random supports.
pub fn omp_sparse_recovery(ens: &MeasurementEnsemble, k: usize, instances: usize, seed: u64) -> CliResult<f64> {
    let n = ens.signal_dim();
    let opts = OmpOptions { sparsity: k, residual_tol: 1e-12, record_iterates: false };
    let mut worst = f64::NEG_INFINITY;
    for i in 0..instances as u64 {
        let mut rng = rng_from_seed(sub_seed(seed, stream::CHANNEL, i));
        let mut h = vec![0.0; n];
        for j in sample(&mut rng, n, k) {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            h[j] = sign * rng.random_range(0.5..2.0);
        }
        let y = ens.apply(&h)?;
        let est = solve_omp(ens, &y, &opts)?.estimate;
        worst = worst.max(nmse_db(&est, &h)?);
    }
    Ok(worst)
}

/// Contraction of a trained estimator on held-out data: the network's
/// Lipschitz estimate at the held-out fixed points (largest over batches of
/// `batch_rows`), and the largest ratio `‖f(h₁) − f(h₂)‖/‖h₁ − h₂‖` over
/// `pairs` points drawn around real inference runs.
pub fn trained_contraction(
    ctx: &Context,
    net: &DenoiserWeights,
    batch: &TestBatch,
    batch_rows: usize,
    pairs: usize,
    seed: u64,
) -> CliResult<(f64, f64)> {
    let n = ctx.ens.signal_dim();
    let m = ctx.ens.measurement_dim();
    let opts = FixedPointOptions { record_iterates: true, ..ctx.cfg.fpn_options() };
    let mut traces = Vec::with_capacity(batch.len());
    for chunk in batch.y.chunks(64 * m) {
        traces.extend(fpn_infer_batch(&ctx.ens, net, chunk, None, &opts)?);
    }
    let fixed: Vec<f64> = traces.iter().flat_map(|t| t.estimate.iter().copied()).collect();
    let mut lip = 0f64;
    for (b, chunk) in fixed.chunks(batch_rows * n).enumerate() {
        let rows = chunk.len() / n;
        lip = lip.max(estimate_lipschitz(
            net,
            chunk,
            rows,
            DEFAULT_PERTURB_SCALE,
            sub_seed(seed, stream::PERTURB, b as u64),
        )?);
    }
    let pairs = sample_pairs(&traces, pairs, 0.01, sub_seed(seed, stream::PAIRS, 0))?;
    let ratio = contraction_ratios(&ctx.ens, net, &pairs, &batch.y)?.into_iter().fold(0.0, f64::max);
    Ok((lip, ratio))
}
