use std::time::Instant;

use hybrid_fpn::fpn::{fpn_infer_batch, nmse, to_db, FixedPointTrace};
use hybrid_fpn::linalg::matvec_t;
use hybrid_fpn::measurement::noise_var_from_snr;
use hybrid_fpn::nn::DenoiserWeights;
use hybrid_fpn::rng::{stream, sub_seed};
use hybrid_fpn::solvers::{solve_fista, solve_ls, solve_oamp, solve_omp};
use serde::{Deserialize, Serialize};

use super::{ensure_dir, fixed, write_csv, Context, RegimeWeights};
use crate::config::Method;
use crate::dataset::{DatasetShard, Split};
use crate::error::{CliError, CliResult};
use crate::plot;

pub const CSV_HEADER: [&str; 3] = ["snr_db", "method", "nmse_db"];

/// Rows evaluated together by the fixed point estimator.
const FPN_BATCH: usize = 64;

/// One `(method, SNR)` point of the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub method: Method,
    pub snr_db: f64,
    pub nmse_db: f64,
    /// Mean iterations per sample (1 for direct methods).
    pub iterations: f64,
    /// Mean wall time per sample.
    pub wall_time_ms: f64,
    pub config_digest: String,
}

/// Test channels re-observed at a fixed SNR.
pub struct TestBatch {
    pub snr_db: f64,
    pub noise_var: f64,
    pub dim: usize,
    pub h: Vec<f64>,
    pub y: Vec<f64>,
}

impl TestBatch {
    pub fn len(&self) -> usize {
        self.h.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    pub fn h_row(&self, i: usize) -> &[f64] {
        &self.h[i * self.dim..(i + 1) * self.dim]
    }

    pub fn y_row(&self, i: usize) -> &[f64] {
        let m = self.y.len() / self.len().max(1);
        &self.y[i * m..(i + 1) * m]
    }
}

/// Observes the first `samples` test channels at `snr_db`. Noise for channel
/// `i` comes from `sub_seed(seed, NOISE, i)`, so every SNR sees the same
/// noise direction.
pub fn observe_test(
    ctx: &Context,
    shard: &DatasetShard,
    snr_db: f64,
    samples: usize,
    seed: u64,
) -> CliResult<TestBatch> {
    let count = samples.min(shard.len());
    let n = ctx.ens.signal_dim();
    let mut batch = TestBatch {
        snr_db,
        noise_var: noise_var_from_snr(snr_db),
        dim: n,
        h: Vec::with_capacity(count * n),
        y: Vec::with_capacity(count * ctx.ens.measurement_dim()),
    };
    for i in 0..count {
        let h: Vec<f64> = shard.h_row(i).iter().map(|v| *v as f64).collect();
        let rx = ctx.ens.observe_real(&h, snr_db, sub_seed(seed, stream::NOISE, i as u64))?;
        batch.h.extend_from_slice(&h);
        batch.y.extend_from_slice(&rx.y);
    }
    Ok(batch)
}

/// Per-sample NMSE (linear) and iteration counts of one method.
pub struct MethodResult {
    pub nmse: Vec<f64>,
    pub iterations: Vec<usize>,
    pub wall_time_s: f64,
}

impl MethodResult {
    /// Mean of the per-sample ratios, in dB.
    pub fn nmse_db(&self) -> f64 {
        to_db(self.nmse.iter().sum::<f64>() / self.nmse.len().max(1) as f64)
    }
}

/// Runs the fixed point estimator on every row of `batch`.
pub fn fpn_traces(ctx: &Context, net: &DenoiserWeights, batch: &TestBatch) -> CliResult<Vec<FixedPointTrace>> {
    let m = ctx.ens.measurement_dim();
    let opts = ctx.cfg.fpn_options();
    let mut traces = Vec::with_capacity(batch.len());
    for chunk in batch.y.chunks(FPN_BATCH * m) {
        traces.extend(fpn_infer_batch(&ctx.ens, net, chunk, None, &opts)?);
    }
    Ok(traces)
}

pub fn evaluate_method(
    ctx: &Context,
    method: Method,
    weights: &RegimeWeights,
    batch: &TestBatch,
) -> CliResult<MethodResult> {
    let start = Instant::now();
    let mut nmse_all = Vec::with_capacity(batch.len());
    let mut iterations = Vec::with_capacity(batch.len());
    if method == Method::FpnOamp {
        let net = weights.for_snr(batch.snr_db)?;
        for (i, tr) in fpn_traces(ctx, net, batch)?.iter().enumerate() {
            nmse_all.push(nmse(&tr.estimate, batch.h_row(i))?);
            iterations.push(tr.iterations_used);
        }
    } else {
        for i in 0..batch.len() {
            let y = batch.y_row(i);
            let report = match method {
                Method::Ls => solve_ls(&ctx.ens, y)?,
                Method::Omp => solve_omp(&ctx.ens, y, &ctx.cfg.omp_options())?,
                Method::Fista => {
                    let peak = matvec_t(ctx.ens.operator(), y).iter().fold(0f64, |a, v| a.max(v.abs()));
                    solve_fista(&ctx.ens, y, &ctx.cfg.fista_options(peak))?
                }
                Method::Oamp => solve_oamp(&ctx.ens, y, batch.noise_var, &ctx.cfg.oamp_options())?,
                Method::FpnOamp => unreachable!(),
            };
            nmse_all.push(nmse(&report.estimate, batch.h_row(i))?);
            iterations.push(report.iterations_used);
        }
    }
    let result = MethodResult { nmse: nmse_all, iterations, wall_time_s: start.elapsed().as_secs_f64() };
    if !result.nmse_db().is_finite() {
        return Err(CliError::Numerical(format!(
            "{} produced a non-finite NMSE at {} dB",
            method.name(),
            batch.snr_db
        )));
    }
    Ok(result)
}

/// Evaluates every configured method at every sweep SNR.
pub fn sweep(ctx: &Context, weights: &RegimeWeights, shard: &DatasetShard) -> CliResult<Vec<MetricsRecord>> {
    let sw = &ctx.cfg.sweep;
    if sw.methods.contains(&Method::FpnOamp) {
        for &snr in &sw.snr_db {
            weights.for_snr(snr)?;
        }
    }
    let digest = ctx.cfg.digest();
    let mut records = Vec::new();
    for &snr in &sw.snr_db {
        let batch = observe_test(ctx, shard, snr, sw.samples, sw.seed)?;
        if batch.is_empty() {
            return Err(CliError::Config("the test shard is empty".into()));
        }
        for &method in &sw.methods {
            let r = evaluate_method(ctx, method, weights, &batch)?;
            let n = batch.len() as f64;
            eprintln!("{snr:>5} dB  {:<9} {:>8.3} dB", method.name(), r.nmse_db());
            records.push(MetricsRecord {
                method,
                snr_db: snr,
                nmse_db: r.nmse_db(),
                iterations: r.iterations.iter().sum::<usize>() as f64 / n,
                wall_time_ms: 1e3 * r.wall_time_s / n,
                config_digest: digest.clone(),
            });
        }
    }
    Ok(records)
}

/// `nmse_vs_snr.csv` plus the `metrics.json` records.
pub fn run(ctx: &Context, plots: bool) -> CliResult<Vec<MetricsRecord>> {
    let shard = ctx.load_shard(Split::Test, None)?;
    let weights = RegimeWeights::load(ctx)?;
    let records = sweep(ctx, &weights, &shard)?;
    ensure_dir(&ctx.out)?;
    ctx.save_config()?;
    let rows: Vec<(String, &str, String)> =
        records.iter().map(|r| (fixed(r.snr_db, 2), r.method.name(), fixed(r.nmse_db, 4))).collect();
    let csv_path = ctx.out.join("nmse_vs_snr.csv");
    write_csv(
        &csv_path,
        &CSV_HEADER,
        &rows,
        &ctx.cfg.digest(),
        serde_json::json!({ "samples": ctx.cfg.sweep.samples }),
    )?;
    let mpath = ctx.out.join("metrics.json");
    let text = serde_json::to_string_pretty(&records).expect("json");
    std::fs::write(&mpath, text + "\n").map_err(|e| CliError::io(&mpath, e))?;
    if plots {
        plot::nmse_vs_snr(&ctx.out.join("nmse_vs_snr.svg"), &records)?;
    }
    Ok(records)
}
