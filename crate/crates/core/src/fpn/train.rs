use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::iterate::{fpn_infer_batch, FixedPointOptions};
use super::metrics::to_db;
use crate::measurement::MeasurementEnsemble;
use crate::nn::{
    enforce_contraction, estimate_lipschitz, AdamState, Denoiser, DenoiserWeights, DEFAULT_BETA, DEFAULT_PERTURB_SCALE,
};
use crate::rng::{rng_from_seed, stream, sub_seed};
use crate::{linalg, Error, Result};

/// Corrections attempted per weight update before giving up on `L < 1`.
const MAX_CORRECTIONS: usize = 8;

/// SNR range a weight set is trained for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnrRegime {
    Low,
    High,
}

impl SnrRegime {
    /// Training SNR interval in dB.
    pub fn range_db(self) -> (f64, f64) {
        match self {
            SnrRegime::Low => (0.0, 10.0),
            SnrRegime::High => (10.0, 20.0),
        }
    }

    /// Regime whose weights serve a test SNR: up to 10 dB is low, above is high.
    pub fn for_snr(snr_db: f64) -> Self {
        if snr_db <= 10.0 {
            SnrRegime::Low
        } else {
            SnrRegime::High
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            SnrRegime::Low => "low_snr",
            SnrRegime::High => "high_snr",
        }
    }
}

impl std::str::FromStr for SnrRegime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" | "low_snr" => Ok(SnrRegime::Low),
            "high" | "high_snr" => Ok(SnrRegime::High),
            other => Err(Error::arg(format!("unknown SNR regime {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Learning rate halves after every this many epochs.
    pub lr_halving_period: usize,
    pub epsilon: f64,
    pub max_iter: usize,
    pub regime: SnrRegime,
    pub beta: f64,
    /// Relative perturbation size for the Lipschitz estimate.
    pub perturb_scale: f64,
    /// Samples of each batch used for the Lipschitz estimate (0 = all).
    pub lipschitz_samples: usize,
    /// Start each training sample's inference from its previous fixed point
    /// instead of zero.
    pub warm_start: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 150,
            lr: 1e-3,
            batch_size: 128,
            lr_halving_period: 30,
            epsilon: 0.01,
            max_iter: 15,
            regime: SnrRegime::Low,
            beta: DEFAULT_BETA,
            perturb_scale: DEFAULT_PERTURB_SCALE,
            lipschitz_samples: 0,
            warm_start: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.lr_halving_period == 0 {
            return Err(Error::arg("epochs, batch size and halving period must be positive"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::arg(format!("learning rate must be finite and non-negative, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::arg(format!("beta must lie in [0, 1), got {}", self.beta)));
        }
        if !(self.perturb_scale > 0.0) {
            return Err(Error::arg("perturbation scale must be positive"));
        }
        self.fixed_point().validate()
    }

    pub fn fixed_point(&self) -> FixedPointOptions {
        FixedPointOptions::new(self.epsilon, self.max_iter)
    }

    /// Learning rate in effect during `epoch` (1-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let halvings = (epoch.max(1) - 1) / self.lr_halving_period;
        self.lr * 0.5f64.powi(halvings as i32)
    }
}

/// Stacked training pairs `(h, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub signal_dim: usize,
    pub measurement_dim: usize,
    pub h: Vec<f64>,
    pub y: Vec<f64>,
}

impl SampleSet {
    pub fn new(signal_dim: usize, measurement_dim: usize, h: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if signal_dim == 0 || measurement_dim == 0 || h.len() % signal_dim != 0 {
            return Err(Error::arg("sample set dimensions must be positive and divide the data"));
        }
        Error::check_len("sample observations", h.len() / signal_dim * measurement_dim, y.len())?;
        Ok(Self { signal_dim, measurement_dim, h, y })
    }

    pub fn len(&self) -> usize {
        self.h.len() / self.signal_dim
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    fn gather(&self, idx: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let (n, m) = (self.signal_dim, self.measurement_dim);
        let mut h = Vec::with_capacity(idx.len() * n);
        let mut y = Vec::with_capacity(idx.len() * m);
        for &i in idx {
            h.extend_from_slice(&self.h[i * n..(i + 1) * n]);
            y.extend_from_slice(&self.y[i * m..(i + 1) * m]);
        }
        (h, y)
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_nmse_db: f64,
    pub val_nmse_db: f64,
    pub lipschitz_estimate: f64,
    pub lr: f64,
    /// Kernel rescalings applied during the epoch.
    pub corrections: usize,
    /// Mean fixed point iterations per training sample.
    pub mean_iterations: f64,
    pub wall_time_s: f64,
}

/// Everything needed to continue training exactly where it stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainCheckpoint {
    pub weights: DenoiserWeights,
    pub adam: AdamState,
    pub epochs_done: usize,
    /// Last fixed point of every training sample (empty unless warm starts are on).
    pub warm: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: TrainCheckpoint,
    pub log: Vec<EpochRecord>,
    /// Largest activation tape held at any point, in bytes.
    pub peak_tape_bytes: usize,
}

fn lipschitz_rows(cfg: &TrainConfig, rows: usize) -> usize {
    if cfg.lipschitz_samples == 0 {
        rows
    } else {
        cfg.lipschitz_samples.min(rows)
    }
}

/// Estimates `L` on `inputs` and rescales kernels until `L < 1`. Returns the
/// final estimate and the number of rescalings.
fn control_lipschitz(
    net: &mut DenoiserWeights,
    inputs: &[f64],
    rows: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(f64, usize)> {
    let mut l = estimate_lipschitz(net, inputs, rows, cfg.perturb_scale, seed)?;
    let mut corrections = 0;
    while l >= 1.0 && corrections < MAX_CORRECTIONS {
        enforce_contraction(net, l, cfg.beta);
        corrections += 1;
        l = estimate_lipschitz(net, inputs, rows, cfg.perturb_scale, seed)?;
    }
    net.set_lipschitz_estimate(Some(l));
    Ok((l, corrections))
}

/// Mean NMSE of the estimator on `set`, plus the stacked estimates.
fn evaluate(
    ens: &MeasurementEnsemble,
    net: &DenoiserWeights,
    set: &SampleSet,
    cfg: &TrainConfig,
) -> Result<(f64, Vec<f64>)> {
    let n = set.signal_dim;
    let mut est = Vec::with_capacity(set.h.len());
    let mut total = 0.0;
    let idx: Vec<usize> = (0..set.len()).collect();
    for chunk in idx.chunks(cfg.batch_size) {
        let (h, y) = set.gather(chunk);
        let traces = fpn_infer_batch(ens, net, &y, None, &cfg.fixed_point())?;
        for (k, tr) in traces.iter().enumerate() {
            total += super::nmse(&tr.estimate, &h[k * n..(k + 1) * n])?;
            est.extend_from_slice(&tr.estimate);
        }
    }
    Ok((total / set.len().max(1) as f64, est))
}

/// Trains the denoiser with one-step gradients at the approximate fixed point.
///
/// Each batch runs inference without recording, applies the estimator map
/// once more with recording, backpropagates the mean NMSE through that single
/// application, takes an Adam step and then enforces `L < 1` on the batch's
/// fixed points. `on_epoch` sees each log line as soon as it is complete.
pub fn train(
    ens: &MeasurementEnsemble,
    train_set: &SampleSet,
    val_set: &SampleSet,
    cfg: &TrainConfig,
    seed: u64,
    resume: Option<TrainCheckpoint>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let (n, m) = (ens.signal_dim(), ens.measurement_dim());
    for set in [train_set, val_set] {
        if set.signal_dim != n || set.measurement_dim != m {
            return Err(Error::arg("sample dimensions do not match the measurement ensemble"));
        }
    }
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::arg("training and validation sets must be non-empty"));
    }
    let geom = ens.geometry();
    let mut ckpt = match resume {
        Some(c) => {
            let warm_len = if cfg.warm_start { train_set.h.len() } else { 0 };
            if c.weights.dim() != n || c.adam.m.len() != c.weights.num_params() || c.warm.len() != warm_len {
                return Err(Error::arg("checkpoint does not match the measurement ensemble"));
            }
            c
        }
        None => {
            let mut weights =
                Denoiser::he_uniform(geom.num_subarrays, geom.aes_per_subarray, sub_seed(seed, stream::INIT, 0))?;
            weights.set_target_beta(cfg.beta);
            // start from a contraction, measured on the first iterate of the first batch
            let rows = lipschitz_rows(cfg, cfg.batch_size.min(train_set.len()));
            let idx: Vec<usize> = (0..rows).collect();
            let (_, y) = train_set.gather(&idx);
            let mut x = vec![0.0; rows * n];
            ens.le_apply_batch(&mut x, &y, rows)?;
            control_lipschitz(&mut weights, &x, rows, cfg, sub_seed(seed, stream::PERTURB, 0))?;
            let adam = AdamState::for_network(&weights);
            let warm = if cfg.warm_start { vec![0.0; train_set.h.len()] } else { Vec::new() };
            TrainCheckpoint { weights, adam, epochs_done: 0, warm }
        }
    };

    let mut log = Vec::new();
    let mut peak_tape_bytes = 0;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let opts = cfg.fixed_point();
    for epoch in ckpt.epochs_done + 1..=cfg.epochs {
        let start = Instant::now();
        let lr = cfg.lr_at(epoch);
        order.sort_unstable();
        order.shuffle(&mut rng_from_seed(sub_seed(seed, stream::SHUFFLE, epoch as u64)));
        let mut loss_sum = 0.0;
        let mut iter_sum = 0usize;
        let mut corrections = 0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let rows = batch.len();
            let (h, y) = train_set.gather(batch);
            let net = &mut ckpt.weights;

            let init = cfg.warm_start.then(|| {
                let mut h0 = Vec::with_capacity(rows * n);
                for &i in batch {
                    h0.extend_from_slice(&ckpt.warm[i * n..(i + 1) * n]);
                }
                h0
            });
            let traces = fpn_infer_batch(ens, net, &y, init.as_deref(), &opts)?;
            let mut fixed = Vec::with_capacity(rows * n);
            for (tr, &i) in traces.iter().zip(batch) {
                iter_sum += tr.iterations_used;
                fixed.extend_from_slice(&tr.estimate);
                if cfg.warm_start {
                    ckpt.warm[i * n..(i + 1) * n].copy_from_slice(&tr.estimate);
                }
            }

            let mut x = fixed.clone();
            ens.le_apply_batch(&mut x, &y, rows)?;
            let x32: Vec<f32> = x.iter().map(|v| *v as f32).collect();
            let (out, tape) = net.forward_recorded(&x32, rows)?;
            peak_tape_bytes = peak_tape_bytes.max(tape.recorded_bytes());

            let mut upstream = vec![0f32; rows * n];
            let mut batch_loss = 0.0;
            for k in 0..rows {
                let r = k * n..(k + 1) * n;
                let truth = &h[r.clone()];
                let energy = linalg::dot(truth, truth);
                let mut err = 0.0;
                for ((u, o), t) in upstream[r.clone()].iter_mut().zip(&out[r.clone()]).zip(truth) {
                    let d = *o as f64 - t;
                    err += d * d;
                    *u = (2.0 * d / (energy * rows as f64)) as f32;
                }
                batch_loss += err / energy;
            }
            batch_loss /= rows as f64;
            if !batch_loss.is_finite() {
                return Err(Error::Numerical {
                    iteration: b + 1,
                    message: format!("non-finite loss in epoch {epoch}, batch {}", b + 1),
                });
            }
            loss_sum += batch_loss * rows as f64;

            let (grads, _) = net.backward(&tape, &upstream)?;
            drop(tape);
            ckpt.adam.step_network(net, &grads, lr)?;

            let lrows = lipschitz_rows(cfg, rows);
            let step_seed = sub_seed(seed, stream::PERTURB, (epoch * 1_000_000 + b + 1) as u64);
            let (_, c) = control_lipschitz(net, &fixed[..lrows * n], lrows, cfg, step_seed)?;
            corrections += c;
        }

        let (val_nmse, val_est) = evaluate(ens, &ckpt.weights, val_set, cfg)?;
        let lrows = lipschitz_rows(cfg, cfg.batch_size.min(val_set.len()));
        let val_l = estimate_lipschitz(
            &ckpt.weights,
            &val_est[..lrows * n],
            lrows,
            cfg.perturb_scale,
            sub_seed(seed, stream::PERTURB, epoch as u64),
        )?;
        ckpt.weights.set_lipschitz_estimate(Some(val_l));
        ckpt.epochs_done = epoch;
        let record = EpochRecord {
            epoch,
            train_nmse_db: to_db(loss_sum / train_set.len() as f64),
            val_nmse_db: to_db(val_nmse),
            lipschitz_estimate: val_l,
            lr,
            corrections,
            mean_iterations: iter_sum as f64 / train_set.len() as f64,
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        log.push(record);
    }
    Ok(TrainOutcome { checkpoint: ckpt, log, peak_tape_bytes })
}
