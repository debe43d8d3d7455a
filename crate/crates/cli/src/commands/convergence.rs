use hybrid_fpn::fpn::{fpn_infer_batch, nmse, to_db, FixedPointOptions};
use hybrid_fpn::linalg::{dist, matvec_t, norm};
use hybrid_fpn::nn::{Denoiser, DenoiserWeights};
use hybrid_fpn::solvers::{solve_fista, solve_oamp, FistaOptions, OampOptions};
use serde::{Deserialize, Serialize};

use super::benchmark::{fpn_traces, observe_test, TestBatch};
use super::{ensure_dir, fixed, write_csv, Context, RegimeWeights};
use crate::config::Method;
use crate::dataset::Split;
use crate::error::{CliError, CliResult};
use crate::plot;

pub const PER_ITERATION_HEADER: [&str; 3] = ["t", "method", "nmse_db"];
pub const GAP_HEADER: [&str; 3] = ["t", "snr_db", "log10_normalized_gap"];

/// Stopping tolerance of the reference fixed point used for the gap curves.
pub const REFERENCE_EPSILON: f64 = 1e-10;
const REFERENCE_MAX_ITER: usize = 2000;
const CHUNK: usize = 64;

/// `R²` of the least-squares line through `(xs, ys)`. A constant `ys` fits
/// perfectly.
pub fn linear_fit_r2(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if syy == 0.0 {
        return 1.0;
    }
    if sxx == 0.0 {
        return 0.0;
    }
    sxy * sxy / (sxx * syy)
}

/// `log₁₀ ‖h⁽ᵗ⁾ − ĥ‖/‖ĥ‖` for `t = 1..=T` at one SNR.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapCurve {
    pub snr_db: f64,
    /// One curve per sample.
    pub per_sample: Vec<Vec<f64>>,
    /// Mean over samples at each `t`.
    pub mean: Vec<f64>,
    /// Fit quality of the mean curve.
    pub r2: f64,
    pub per_sample_r2: Vec<f64>,
}

impl GapCurve {
    /// Share of samples whose own curve fits a line with `R² > threshold`.
    pub fn fraction_linear(&self, threshold: f64) -> f64 {
        let ok = self.per_sample_r2.iter().filter(|r| **r > threshold).count();
        ok as f64 / self.per_sample_r2.len().max(1) as f64
    }
}

fn steps(iterations: usize) -> Vec<f64> {
    (1..=iterations).map(|t| t as f64).collect()
}

/// Gap curves measured in double precision, against a fixed point converged
/// far below the plotted range.
pub fn gap_curve(ctx: &Context, net: &DenoiserWeights, batch: &TestBatch, iterations: usize) -> CliResult<GapCurve> {
    let net64: Denoiser<f64> = net.cast();
    let m = ctx.ens.measurement_dim();
    let opts = FixedPointOptions {
        epsilon: REFERENCE_EPSILON,
        max_iter: REFERENCE_MAX_ITER.max(iterations),
        record_iterates: true,
    };
    let mut per_sample = Vec::with_capacity(batch.len());
    for chunk in batch.y.chunks(CHUNK * m) {
        for tr in fpn_infer_batch(&ctx.ens, &net64, chunk, None, &opts)? {
            let reference = &tr.estimate;
            let scale = norm(reference);
            if scale == 0.0 {
                return Err(CliError::Numerical("fixed point is the zero vector; gaps are undefined".into()));
            }
            let its = tr.iterates.as_ref().expect("recorded");
            let curve: Vec<f64> = (1..=iterations)
                .map(|t| {
                    // a run that stopped early has reached the reference already
                    let h = its.get(t).unwrap_or(reference);
                    (dist(h, reference) / scale).max(f64::MIN_POSITIVE).log10()
                })
                .collect();
            per_sample.push(curve);
        }
    }
    let ts = steps(iterations);
    let mean: Vec<f64> = (0..iterations)
        .map(|t| per_sample.iter().map(|c| c[t]).sum::<f64>() / per_sample.len().max(1) as f64)
        .collect();
    let per_sample_r2 = per_sample.iter().map(|c| linear_fit_r2(&ts, c)).collect();
    Ok(GapCurve { snr_db: batch.snr_db, r2: linear_fit_r2(&ts, &mean), mean, per_sample, per_sample_r2 })
}

fn mean_db(sums: Vec<f64>, count: usize) -> Vec<f64> {
    sums.into_iter().map(|s| to_db(s / count.max(1) as f64)).collect()
}

/// Mean NMSE (dB) of the estimator after each of the first `iterations`
/// applications, ignoring the stopping tolerance.
pub fn fpn_nmse_per_iteration(
    ctx: &Context,
    net: &DenoiserWeights,
    batch: &TestBatch,
    iterations: usize,
) -> CliResult<Vec<f64>> {
    let opts = FixedPointOptions { epsilon: f64::MIN_POSITIVE, max_iter: iterations, record_iterates: true };
    let m = ctx.ens.measurement_dim();
    let mut sums = vec![0.0; iterations];
    for (c, chunk) in batch.y.chunks(CHUNK * m).enumerate() {
        for (k, tr) in fpn_infer_batch(&ctx.ens, net, chunk, None, &opts)?.iter().enumerate() {
            let its = tr.iterates.as_ref().expect("recorded");
            for (t, s) in sums.iter_mut().enumerate() {
                *s += nmse(&its[t + 1], batch.h_row(c * CHUNK + k))?;
            }
        }
    }
    Ok(mean_db(sums, batch.len()))
}

/// Mean NMSE (dB) after each of the first `iterations` steps of `method`.
pub fn nmse_per_iteration(
    ctx: &Context,
    method: Method,
    weights: &RegimeWeights,
    batch: &TestBatch,
    iterations: usize,
) -> CliResult<Vec<f64>> {
    if method == Method::FpnOamp {
        return fpn_nmse_per_iteration(ctx, weights.for_snr(batch.snr_db)?, batch, iterations);
    }
    let mut sums = vec![0.0; iterations];
    for i in 0..batch.len() {
        let y = batch.y_row(i);
        let report = match method {
            Method::Fista => {
                let peak = matvec_t(ctx.ens.operator(), y).iter().fold(0f64, |a, v| a.max(v.abs()));
                let o = ctx.cfg.fista_options(peak);
                solve_fista(&ctx.ens, y, &FistaOptions { max_iter: iterations, tol: 0.0, record_iterates: true, ..o })?
            }
            Method::Oamp => {
                let o = ctx.cfg.oamp_options();
                let o = OampOptions { max_iter: iterations, tol: 0.0, record_iterates: true, ..o };
                solve_oamp(&ctx.ens, y, batch.noise_var, &o)?
            }
            _ => return Err(CliError::Config(format!("{} has no iteration curve", method.name()))),
        };
        let its = report.iterates.unwrap_or_default();
        for (t, s) in sums.iter_mut().enumerate() {
            // solvers that stop early keep their last estimate
            let h =
                its.get(t).or(its.last()).ok_or_else(|| CliError::Numerical("solver recorded no iterates".into()))?;
            *s += nmse(h, batch.h_row(i))?;
        }
    }
    Ok(mean_db(sums, batch.len()))
}

/// Rapid-convergence numbers for the estimator at one SNR.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpeedSummary {
    pub snr_db: f64,
    /// NMSE after four applications and of the returned estimate.
    pub nmse_db_at_4: f64,
    pub nmse_db_converged: f64,
    /// Share of samples whose gap reached the tolerance within the cap.
    pub converged_fraction: f64,
    pub mean_iterations: f64,
}

pub fn speed_summary(ctx: &Context, net: &DenoiserWeights, batch: &TestBatch) -> CliResult<SpeedSummary> {
    let traces = fpn_traces(ctx, net, batch)?;
    let n = batch.len().max(1) as f64;
    let mut total = 0.0;
    for (i, tr) in traces.iter().enumerate() {
        total += nmse(&tr.estimate, batch.h_row(i))?;
    }
    Ok(SpeedSummary {
        snr_db: batch.snr_db,
        nmse_db_at_4: fpn_nmse_per_iteration(ctx, net, batch, 4)?[3],
        nmse_db_converged: to_db(total / n),
        converged_fraction: traces.iter().filter(|t| t.converged).count() as f64 / n,
        mean_iterations: traces.iter().map(|t| t.iterations_used).sum::<usize>() as f64 / n,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// `(method, NMSE dB per iteration)` at the per-iteration SNR.
    pub per_iteration: Vec<(Method, Vec<f64>)>,
    pub gaps: Vec<GapCurve>,
    pub speed: Vec<SpeedSummary>,
}

/// Computes all convergence curves without writing anything.
pub fn analyse(
    ctx: &Context,
    weights: &RegimeWeights,
    shard: &crate::dataset::DatasetShard,
) -> CliResult<ConvergenceReport> {
    let sw = &ctx.cfg.sweep;
    let t = sw.iterations;
    let batch = observe_test(ctx, shard, sw.per_iteration_snr_db, sw.samples, sw.seed)?;
    if batch.is_empty() {
        return Err(CliError::Config("the test shard is empty".into()));
    }
    let mut per_iteration = Vec::new();
    for &method in &sw.methods {
        if matches!(method, Method::Fista | Method::Oamp | Method::FpnOamp) {
            per_iteration.push((method, nmse_per_iteration(ctx, method, weights, &batch, t)?));
        }
    }
    let mut gaps = Vec::new();
    let mut speed = Vec::new();
    for &snr in &sw.gap_snr_db {
        let batch = observe_test(ctx, shard, snr, sw.samples, sw.seed)?;
        let net = weights.for_snr(snr)?;
        gaps.push(gap_curve(ctx, net, &batch, t)?);
        speed.push(speed_summary(ctx, net, &batch)?);
    }
    Ok(ConvergenceReport { per_iteration, gaps, speed })
}

/// `per_iteration.csv` and `gap.csv`, with the fit statistics in the sidecars.
pub fn run(ctx: &Context, plots: bool) -> CliResult<ConvergenceReport> {
    let shard = ctx.load_shard(Split::Test, None)?;
    let weights = RegimeWeights::load(ctx)?;
    let report = analyse(ctx, &weights, &shard)?;
    ensure_dir(&ctx.out)?;
    ctx.save_config()?;
    let digest = ctx.cfg.digest();

    let mut rows = Vec::new();
    for (method, curve) in &report.per_iteration {
        for (t, v) in curve.iter().enumerate() {
            rows.push((t + 1, method.name(), fixed(*v, 4)));
        }
    }
    let extra = serde_json::json!({ "snr_db": ctx.cfg.sweep.per_iteration_snr_db, "speed": report.speed });
    write_csv(&ctx.out.join("per_iteration.csv"), &PER_ITERATION_HEADER, &rows, &digest, extra)?;

    let mut rows = Vec::new();
    for g in &report.gaps {
        for (t, v) in g.mean.iter().enumerate() {
            rows.push((t + 1, fixed(g.snr_db, 2), fixed(*v, 6)));
        }
    }
    let fits: Vec<_> = report
        .gaps
        .iter()
        .map(|g| serde_json::json!({ "snr_db": g.snr_db, "r2": g.r2, "fraction_r2_above_0.99": g.fraction_linear(0.99) }))
        .collect();
    write_csv(&ctx.out.join("gap.csv"), &GAP_HEADER, &rows, &digest, serde_json::json!({ "fits": fits }))?;
    if plots {
        plot::per_iteration(&ctx.out.join("per_iteration.svg"), &report.per_iteration)?;
        plot::gaps(&ctx.out.join("gap.svg"), &report.gaps)?;
    }
    Ok(report)
}
