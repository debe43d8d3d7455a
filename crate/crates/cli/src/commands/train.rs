use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use hybrid_fpn::fpn::{calibrate_rate, train, EpochRecord, RateCalibration, SnrRegime, TrainCheckpoint, TrainConfig};
use hybrid_fpn::nn::{AdamState, DenoiserWeights};
use serde::{Deserialize, Serialize};

use super::{ensure_dir, fixed, write_csv, Context};
use crate::dataset::{DatasetShard, Split};
use crate::error::{CliError, CliResult};

/// Kernel scale candidates of the final calibration: `1, 0.99, …, 0.8`.
const CALIBRATION_STEP: f64 = 0.01;
const CALIBRATION_FLOOR: f64 = 0.8;

pub const LOG_HEADER: [&str; 5] = ["epoch", "train_nmse_db", "val_nmse_db", "lipschitz_estimate", "lr"];

#[derive(Debug, Clone)]
pub struct TrainRequest {
    pub regime: SnrRegime,
    /// Continue from the checkpoint in the weights directory.
    pub resume: bool,
    /// Explicit shard paths; default to the ones `generate` writes.
    pub train_shard: Option<PathBuf>,
    pub val_shard: Option<PathBuf>,
}

/// Training state kept beside the weights so a run can be continued.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointHeader {
    format: String,
    resume_digest: String,
    epochs_done: usize,
    log: Vec<EpochRecord>,
    warm_len: usize,
}

#[derive(Debug)]
pub struct TrainSummary {
    pub weights_path: PathBuf,
    pub log: Vec<EpochRecord>,
    pub peak_tape_bytes: usize,
    /// Set when the final epoch was reached with calibration enabled.
    pub calibration: Option<RateCalibration>,
}

pub fn log_path(ctx: &Context, regime: SnrRegime) -> PathBuf {
    ctx.out.join(format!("train_log_{}.csv", regime.tag()))
}

fn adam_path(ctx: &Context, regime: SnrRegime) -> PathBuf {
    ctx.weights_dir().join(format!("{}.adam", regime.tag()))
}

/// Uncalibrated weights that training continues from.
fn state_weights_path(ctx: &Context, regime: SnrRegime) -> PathBuf {
    ctx.weights_dir().join(format!("{}.state.weights", regime.tag()))
}

fn checkpoint_path(ctx: &Context, regime: SnrRegime) -> PathBuf {
    ctx.weights_dir().join(format!("{}.ckpt", regime.tag()))
}

fn load_split(ctx: &Context, explicit: &Option<PathBuf>, split: Split, regime: SnrRegime) -> CliResult<DatasetShard> {
    let path = explicit.clone().unwrap_or_else(|| ctx.shard_path(split, Some(regime)));
    let shard = DatasetShard::load(&path)?;
    shard.check_matches(&ctx.ens, split, Some(regime))?;
    Ok(shard)
}

/// Trains one regime, checkpointing after every epoch.
pub fn run(ctx: &Context, req: &TrainRequest) -> CliResult<TrainSummary> {
    let regime = req.regime;
    let cfg = TrainConfig { regime, ..ctx.cfg.train.clone() };
    let train_set = load_split(ctx, &req.train_shard, Split::Train, regime)?.sample_set()?;
    let val_set = load_split(ctx, &req.val_shard, Split::Val, regime)?.sample_set()?;
    let target = ctx.cfg.solvers.fpn.min_converged_fraction;
    ctx.save_config()?;
    ensure_dir(&ctx.weights_dir())?;
    let digest = ctx.cfg.resume_digest(regime);

    let (mut state, mut log) = if req.resume {
        let (ckpt, log) = load_checkpoint(ctx, regime, &digest)?;
        (Some(ckpt), log)
    } else {
        (None, Vec::new())
    };
    let mut peak = 0;
    let mut calibration = None;
    let start = state.as_ref().map_or(0, |c| c.epochs_done);
    for epoch in start + 1..=cfg.epochs {
        let step = TrainConfig { epochs: epoch, ..cfg.clone() };
        let outcome = train(&ctx.ens, &train_set, &val_set, &step, ctx.cfg.train_seed, state.take(), |r| {
            eprintln!(
                "[{}] epoch {:>3}  train {:>7.3} dB  val {:>7.3} dB  L {:.3}  lr {:.2e}  iters {:.1}  {:.1}s",
                regime.tag(),
                r.epoch,
                r.train_nmse_db,
                r.val_nmse_db,
                r.lipschitz_estimate,
                r.lr,
                r.mean_iterations,
                r.wall_time_s
            )
        })?;
        peak = peak.max(outcome.peak_tape_bytes);
        log.extend(outcome.log);
        let mut deployed = outcome.checkpoint.weights.clone();
        if epoch == cfg.epochs && target > 0.0 {
            let c = calibrate_rate(
                &ctx.ens,
                &deployed,
                &val_set.y,
                &ctx.cfg.fpn_options(),
                target,
                CALIBRATION_STEP,
                CALIBRATION_FLOOR,
            )?;
            eprintln!(
                "[{}] kernel scale {:.2}: {:.1}% of validation samples converge within {} iterations",
                regime.tag(),
                c.kernel_scale,
                100.0 * c.converged_fraction,
                ctx.cfg.solvers.fpn.max_iter
            );
            deployed.scale_kernels(c.kernel_scale);
            calibration = Some(c);
        }
        save_checkpoint(ctx, regime, &digest, &outcome.checkpoint, &deployed, calibration, &log)?;
        write_log(ctx, regime, &log)?;
        state = Some(outcome.checkpoint);
    }
    Ok(TrainSummary { weights_path: ctx.weights_path(regime), log, peak_tape_bytes: peak, calibration })
}

fn write_log(ctx: &Context, regime: SnrRegime, log: &[EpochRecord]) -> CliResult<()> {
    let rows: Vec<(usize, String, String, String, String)> = log
        .iter()
        .map(|r| {
            (
                r.epoch,
                fixed(r.train_nmse_db, 6),
                fixed(r.val_nmse_db, 6),
                fixed(r.lipschitz_estimate, 6),
                format!("{}", r.lr),
            )
        })
        .collect();
    let extra = serde_json::json!({ "regime": regime.tag(), "training_digest": ctx.cfg.training_digest(regime) });
    write_csv(&log_path(ctx, regime), &LOG_HEADER, &rows, &ctx.cfg.digest(), extra)
}

fn save_checkpoint(
    ctx: &Context,
    regime: SnrRegime,
    digest: &str,
    ckpt: &TrainCheckpoint,
    deployed: &DenoiserWeights,
    calibration: Option<RateCalibration>,
    log: &[EpochRecord],
) -> CliResult<()> {
    let meta = serde_json::json!({
        "regime": regime.tag(),
        "config_digest": ctx.cfg.digest(),
        "training_digest": ctx.cfg.training_digest(regime),
        "epochs_done": ckpt.epochs_done,
        "val_nmse_db": log.last().map(|r| r.val_nmse_db),
        "kernel_scale": calibration.map_or(1.0, |c| c.kernel_scale),
        "val_converged_fraction": calibration.map(|c| c.converged_fraction),
    });
    let wpath = ctx.weights_path(regime);
    deployed.save(&wpath, &meta).map_err(|e| CliError::io(&wpath, e))?;
    let spath = state_weights_path(ctx, regime);
    ckpt.weights.save(&spath, &meta).map_err(|e| CliError::io(&spath, e))?;
    let apath = adam_path(ctx, regime);
    ckpt.adam.save(&apath).map_err(|e| CliError::io(&apath, e))?;

    let header = CheckpointHeader {
        format: "hybrid-fpn/train-state".into(),
        resume_digest: digest.into(),
        epochs_done: ckpt.epochs_done,
        log: log.to_vec(),
        warm_len: ckpt.warm.len(),
    };
    let cpath = checkpoint_path(ctx, regime);
    let io = |e: std::io::Error| CliError::io(&cpath, e);
    let mut w = BufWriter::new(File::create(&cpath).map_err(io)?);
    w.write_all(serde_json::to_string(&header).expect("json").as_bytes()).map_err(io)?;
    w.write_all(b"\n").map_err(io)?;
    // warm starts are kept at full precision so a resumed run matches exactly
    for v in &ckpt.warm {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

fn load_checkpoint(ctx: &Context, regime: SnrRegime, digest: &str) -> CliResult<(TrainCheckpoint, Vec<EpochRecord>)> {
    let cpath = checkpoint_path(ctx, regime);
    let (header, warm) = read_state(&cpath)?;
    if header.resume_digest != digest {
        return Err(CliError::Config(format!(
            "{} was written for a different training setup; start without --resume",
            cpath.display()
        )));
    }
    let spath = state_weights_path(ctx, regime);
    let (weights, _) = DenoiserWeights::load(&spath).map_err(|e| CliError::io(&spath, e))?;
    let apath = adam_path(ctx, regime);
    let adam = AdamState::load(&apath).map_err(|e| CliError::io(&apath, e))?;
    let ckpt = TrainCheckpoint { weights, adam, epochs_done: header.epochs_done, warm };
    Ok((ckpt, header.log))
}

fn read_state(path: &Path) -> CliResult<(CheckpointHeader, Vec<f64>)> {
    let io = |e: std::io::Error| CliError::io(path, e);
    let mut bytes = Vec::new();
    BufReader::new(File::open(path).map_err(io)?).read_to_end(&mut bytes).map_err(io)?;
    let split = bytes.iter().position(|b| *b == b'\n').ok_or_else(|| CliError::io(path, "missing header line"))?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[..split]).map_err(|e| CliError::io(path, e))?;
    let payload = &bytes[split + 1..];
    if payload.len() != header.warm_len * 8 {
        return Err(CliError::io(path, "truncated warm-start payload"));
    }
    let warm = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok((header, warm))
}
