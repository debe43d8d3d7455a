//! Dataset shards: a JSON header line followed by `f32` records of
//! `(h, y, snr_db)`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use hybrid_fpn::channel::{synthesize_channel, ArrayGeometry};
use hybrid_fpn::fpn::{SampleSet, SnrRegime};
use hybrid_fpn::io::{read_container, write_container};
use hybrid_fpn::measurement::MeasurementEnsemble;
use hybrid_fpn::rng::{derive_seed, rng_from_seed, stream, sub_seed};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

const FORMAT: &str = "hybrid-fpn/dataset";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn code(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
        }
    }
}

/// Which SNR interval the per-sample SNRs were drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrPolicy {
    /// `None` for test shards, which span both regimes.
    pub regime: Option<SnrRegime>,
    pub range_db: [f64; 2],
}

impl SnrPolicy {
    pub fn for_regime(regime: SnrRegime) -> Self {
        let (lo, hi) = regime.range_db();
        Self { regime: Some(regime), range_db: [lo, hi] }
    }

    /// Test shards cover the union of both training ranges.
    pub fn full() -> Self {
        Self { regime: None, range_db: [SnrRegime::Low.range_db().0, SnrRegime::High.range_db().1] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShardHeader {
    pub format: String,
    pub version: u32,
    pub split: Split,
    pub snr_policy: SnrPolicy,
    pub geometry: ArrayGeometry,
    pub num_slots: usize,
    pub ensemble_seed: u64,
    /// Per-record seeds derive from this one.
    pub seed: u64,
    pub count: usize,
    pub signal_dim: usize,
    pub measurement_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetShard {
    pub header: ShardHeader,
    /// `count × signal_dim`
    pub h: Vec<f32>,
    /// `count × measurement_dim`
    pub y: Vec<f32>,
    pub snr_db: Vec<f32>,
}

/// Seed of one shard, derived from the dataset master seed.
pub fn shard_seed(master: u64, split: Split, policy: &SnrPolicy) -> u64 {
    let regime = match policy.regime {
        None => 0,
        Some(SnrRegime::Low) => 1,
        Some(SnrRegime::High) => 2,
    };
    derive_seed(derive_seed(master, split.code()), regime)
}

/// File name used under `<out>/data`.
pub fn shard_file_name(split: Split, regime: Option<SnrRegime>) -> String {
    match regime {
        Some(r) => format!("{}_{}.shard", split.name(), r.tag()),
        None => format!("{}.shard", split.name()),
    }
}

impl DatasetShard {
    /// Draws `count` records. Record `i` only depends on `(seed, i)`.
    pub fn generate(
        cfg: &ExperimentConfig,
        ens: &MeasurementEnsemble,
        split: Split,
        policy: SnrPolicy,
        count: usize,
        seed: u64,
    ) -> CliResult<Self> {
        let (n, m) = (ens.signal_dim(), ens.measurement_dim());
        let [lo, hi] = policy.range_db;
        let mut shard = Self {
            header: ShardHeader {
                format: FORMAT.into(),
                version: VERSION,
                split,
                snr_policy: policy,
                geometry: cfg.geometry.clone(),
                num_slots: ens.num_slots(),
                ensemble_seed: ens.seed(),
                seed,
                count,
                signal_dim: n,
                measurement_dim: m,
            },
            h: Vec::with_capacity(count * n),
            y: Vec::with_capacity(count * m),
            snr_db: Vec::with_capacity(count),
        };
        for i in 0..count as u64 {
            let chan =
                synthesize_channel(&cfg.geometry, &cfg.material, &cfg.sampling, sub_seed(seed, stream::CHANNEL, i))?;
            let h: Vec<f32> = chan.real_angular().iter().map(|v| *v as f32).collect();
            let snr = (lo + (hi - lo) * rng_from_seed(sub_seed(seed, stream::SNR, i)).random::<f64>()) as f32;
            let y = observe(ens, &h, snr, sub_seed(seed, stream::NOISE, i))?;
            shard.h.extend_from_slice(&h);
            shard.y.extend_from_slice(&y);
            shard.snr_db.push(snr);
        }
        Ok(shard)
    }

    pub fn len(&self) -> usize {
        self.header.count
    }

    pub fn is_empty(&self) -> bool {
        self.header.count == 0
    }

    pub fn h_row(&self, i: usize) -> &[f32] {
        let n = self.header.signal_dim;
        &self.h[i * n..(i + 1) * n]
    }

    pub fn y_row(&self, i: usize) -> &[f32] {
        let m = self.header.measurement_dim;
        &self.y[i * m..(i + 1) * m]
    }

    pub fn noise_seed(&self, i: usize) -> u64 {
        sub_seed(self.header.seed, stream::NOISE, i as u64)
    }

    /// Largest `|y_stored − y_regenerated|` over the shard.
    pub fn regeneration_error(&self, ens: &MeasurementEnsemble) -> CliResult<f64> {
        let mut worst = 0f64;
        for i in 0..self.len() {
            let y = observe(ens, self.h_row(i), self.snr_db[i], self.noise_seed(i))?;
            for (a, b) in y.iter().zip(self.y_row(i)) {
                worst = worst.max((*a as f64 - *b as f64).abs());
            }
        }
        Ok(worst)
    }

    /// Errors unless the shard was drawn for `ens` and the given split/regime.
    pub fn check_matches(&self, ens: &MeasurementEnsemble, split: Split, regime: Option<SnrRegime>) -> CliResult<()> {
        let hd = &self.header;
        if hd.split != split || hd.snr_policy.regime != regime {
            return Err(CliError::Config(format!(
                "shard holds split {} / regime {:?}, expected {} / {:?}",
                hd.split.name(),
                hd.snr_policy.regime,
                split.name(),
                regime
            )));
        }
        if hd.signal_dim != ens.signal_dim() || hd.num_slots != ens.num_slots() || hd.ensemble_seed != ens.seed() {
            return Err(CliError::Config("shard was generated for a different measurement ensemble".into()));
        }
        Ok(())
    }

    pub fn sample_set(&self) -> CliResult<SampleSet> {
        let widen = |v: &[f32]| v.iter().map(|x| *x as f64).collect();
        Ok(SampleSet::new(self.header.signal_dim, self.header.measurement_dim, widen(&self.h), widen(&self.y))?)
    }

    pub fn write_to(&self, w: impl Write) -> CliResult<()> {
        let (n, m) = (self.header.signal_dim, self.header.measurement_dim);
        let mut payload = Vec::with_capacity(self.len() * (n + m + 1));
        for i in 0..self.len() {
            payload.extend_from_slice(self.h_row(i));
            payload.extend_from_slice(self.y_row(i));
            payload.push(self.snr_db[i]);
        }
        write_container(w, &self.header, &payload)?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        self.write_to(BufWriter::new(file)).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let file = File::open(path).map_err(|e| CliError::io(path, e))?;
        let (header, payload): (ShardHeader, Vec<f32>) = read_container(file).map_err(|e| CliError::io(path, e))?;
        if header.format != FORMAT || header.version != VERSION {
            return Err(CliError::io(path, format!("not a dataset shard ({} v{})", header.format, header.version)));
        }
        let (n, m) = (header.signal_dim, header.measurement_dim);
        let stride = n + m + 1;
        if payload.len() != header.count * stride {
            return Err(CliError::io(
                path,
                format!("header promises {} records but payload holds {} values", header.count, payload.len()),
            ));
        }
        let mut shard = Self {
            h: Vec::with_capacity(header.count * n),
            y: Vec::with_capacity(header.count * m),
            snr_db: Vec::with_capacity(header.count),
            header,
        };
        for rec in payload.chunks_exact(stride) {
            shard.h.extend_from_slice(&rec[..n]);
            shard.y.extend_from_slice(&rec[n..n + m]);
            shard.snr_db.push(rec[n + m]);
        }
        Ok(shard)
    }
}

fn observe(ens: &MeasurementEnsemble, h: &[f32], snr_db: f32, noise_seed: u64) -> CliResult<Vec<f32>> {
    let h: Vec<f64> = h.iter().map(|v| *v as f64).collect();
    let rx = ens.observe_real(&h, snr_db as f64, noise_seed)?;
    Ok(rx.y.iter().map(|v| *v as f32).collect())
}
