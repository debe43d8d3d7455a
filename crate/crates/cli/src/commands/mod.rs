//! Subcommand implementations. Each takes a [`Context`] and writes into its
//! output directory.

pub mod benchmark;
pub mod convergence;
pub mod generate;
pub mod train;
pub mod verify;

use std::path::{Path, PathBuf};

use hybrid_fpn::fpn::SnrRegime;
use hybrid_fpn::measurement::MeasurementEnsemble;
use hybrid_fpn::nn::DenoiserWeights;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::dataset::{shard_file_name, DatasetShard, Split};
use crate::error::{CliError, CliResult};

/// Resolved config, output directory and measurement ensemble.
pub struct Context {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
    pub ens: MeasurementEnsemble,
}

impl Context {
    pub fn new(cfg: ExperimentConfig, out: PathBuf) -> CliResult<Self> {
        cfg.validate()?;
        let ens = MeasurementEnsemble::build(&cfg.geometry, cfg.measurement.num_slots, cfg.measurement.seed)?;
        Ok(Self { cfg, out, ens })
    }

    pub fn data_dir(&self) -> PathBuf {
        self.out.join("data")
    }

    pub fn weights_dir(&self) -> PathBuf {
        self.out.join("weights")
    }

    pub fn shard_path(&self, split: Split, regime: Option<SnrRegime>) -> PathBuf {
        self.data_dir().join(shard_file_name(split, regime))
    }

    pub fn weights_path(&self, regime: SnrRegime) -> PathBuf {
        self.weights_dir().join(format!("{}.weights", regime.tag()))
    }

    pub fn load_shard(&self, split: Split, regime: Option<SnrRegime>) -> CliResult<DatasetShard> {
        let shard = DatasetShard::load(&self.shard_path(split, regime))?;
        shard.check_matches(&self.ens, split, regime)?;
        Ok(shard)
    }

    /// Writes the resolved config next to the outputs.
    pub fn save_config(&self) -> CliResult<()> {
        ensure_dir(&self.out)?;
        self.cfg.save(&self.out.join("config.json"))
    }
}

/// Trained networks by regime.
#[derive(Debug, Clone, Default)]
pub struct RegimeWeights {
    pub low: Option<DenoiserWeights>,
    pub high: Option<DenoiserWeights>,
}

impl RegimeWeights {
    /// Loads whichever of the two weight files exist.
    pub fn load(ctx: &Context) -> CliResult<Self> {
        let mut w = Self::default();
        for regime in [SnrRegime::Low, SnrRegime::High] {
            let path = ctx.weights_path(regime);
            if path.exists() {
                let (net, _) = DenoiserWeights::load(&path).map_err(|e| CliError::io(&path, e))?;
                if net.dim() != ctx.ens.signal_dim() {
                    return Err(CliError::Config(format!("{} does not match the configured array", path.display())));
                }
                *w.slot(regime) = Some(net);
            }
        }
        Ok(w)
    }

    pub fn slot(&mut self, regime: SnrRegime) -> &mut Option<DenoiserWeights> {
        match regime {
            SnrRegime::Low => &mut self.low,
            SnrRegime::High => &mut self.high,
        }
    }

    pub fn get(&self, regime: SnrRegime) -> Option<&DenoiserWeights> {
        match regime {
            SnrRegime::Low => self.low.as_ref(),
            SnrRegime::High => self.high.as_ref(),
        }
    }

    /// Weights serving `snr_db`.
    pub fn for_snr(&self, snr_db: f64) -> CliResult<&DenoiserWeights> {
        let regime = SnrRegime::for_snr(snr_db);
        self.get(regime).ok_or_else(|| {
            CliError::Config(format!("no {} weights for SNR {snr_db} dB; run `train --regime` first", regime.tag()))
        })
    }
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Writes a CSV and a `<file>.json` sidecar with the config digest and the
/// CSV's own hash.
pub fn write_csv<R: Serialize>(
    path: &Path,
    header: &[&str],
    rows: &[R],
    digest: &str,
    extra: serde_json::Value,
) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::io(path, e))?;
    std::fs::write(path, &bytes).map_err(|e| CliError::io(path, e))?;
    let sidecar = serde_json::json!({
        "file": path.file_name().map(|f| f.to_string_lossy().into_owned()),
        "config_digest": digest,
        "sha256": hex::encode(Sha256::digest(&bytes)),
        "rows": rows.len(),
        "details": extra,
    });
    let side = sidecar_path(path);
    let text = serde_json::to_string_pretty(&sidecar).expect("json");
    std::fs::write(&side, text + "\n").map_err(|e| CliError::io(&side, e))
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    let mut name = csv.file_name().unwrap_or_default().to_os_string();
    name.push(".json");
    csv.with_file_name(name)
}

/// Fixed-precision decimal so CSV bytes do not depend on float formatting
/// of the last few bits.
pub fn fixed(v: f64, digits: usize) -> String {
    let s = format!("{v:.digits$}");
    if s.starts_with('-') && s[1..].bytes().all(|b| b == b'0' || b == b'.') {
        s[1..].to_string()
    } else {
        s
    }
}
