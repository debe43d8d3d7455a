use std::path::{Path, PathBuf};

use hybrid_fpn::channel::{ArrayGeometry, MaterialModel, SamplingConfig};
use hybrid_fpn::fpn::{FixedPointOptions, SnrRegime, TrainConfig};
use hybrid_fpn::solvers::{FistaOptions, OampOptions, OmpOptions};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Estimators compared by the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Ls,
    Omp,
    Fista,
    Oamp,
    FpnOamp,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Ls, Method::Omp, Method::Fista, Method::Oamp, Method::FpnOamp];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ls => "ls",
            Method::Omp => "omp",
            Method::Fista => "fista",
            Method::Oamp => "oamp",
            Method::FpnOamp => "fpn-oamp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementBlock {
    /// Pilot slots `Q`.
    pub num_slots: usize,
    /// Seed of the one-bit combiners.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetBlock {
    pub train_count: usize,
    pub val_count: usize,
    pub test_count: usize,
    /// Master seed; each split and regime derives its own shard seed.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmpBlock {
    pub sparsity: usize,
    pub residual_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FistaBlock {
    /// `λ = lambda_rel · ‖Mᵀy‖∞` per observation.
    pub lambda_rel: f64,
    pub max_iter: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OampBlock {
    pub kappa: f64,
    pub max_iter: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FpnBlock {
    pub epsilon: f64,
    pub max_iter: usize,
    /// After training, kernels are shrunk until this fraction of the
    /// validation set converges within `max_iter` (0 disables).
    #[serde(default)]
    pub min_converged_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    pub omp: OmpBlock,
    pub fista: FistaBlock,
    pub oamp: OampBlock,
    pub fpn: FpnBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub snr_db: Vec<f64>,
    pub methods: Vec<Method>,
    /// Test samples evaluated per SNR point.
    pub samples: usize,
    /// Seed for the noise of re-observed test channels.
    pub seed: u64,
    /// SNR of the per-iteration NMSE curves.
    pub per_iteration_snr_db: f64,
    /// SNRs of the fixed point gap curves.
    pub gap_snr_db: Vec<f64>,
    /// Iterations shown in the convergence curves.
    pub iterations: usize,
    /// Pairs drawn by the contraction check.
    pub contraction_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub geometry: ArrayGeometry,
    pub material: MaterialModel,
    pub sampling: SamplingConfig,
    pub measurement: MeasurementBlock,
    pub dataset: DatasetBlock,
    pub solvers: SolverBlock,
    pub train: TrainConfig,
    pub train_seed: u64,
    pub sweep: SweepBlock,
    pub output_dir: PathBuf,
}

/// Named starting points for a config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    /// 4 subarrays of 8×8 elements, 32 slots; minutes on one CPU core.
    Desk,
    /// Full-size array of the reference scenario; hours of training.
    Table1,
}

impl ExperimentConfig {
    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Desk => Self::desk(),
            Preset::Table1 => Self::table1(),
        }
    }

    pub fn desk() -> Self {
        Self {
            name: "desk".into(),
            geometry: ArrayGeometry { num_subarrays: 4, aes_per_subarray: 64, ..ArrayGeometry::table1() },
            material: MaterialModel::table1(),
            sampling: SamplingConfig::default(),
            measurement: MeasurementBlock { num_slots: 32, seed: 1 },
            dataset: DatasetBlock { train_count: 8000, val_count: 500, test_count: 500, seed: 2 },
            solvers: SolverBlock {
                omp: OmpBlock { sparsity: 40, residual_tol: 1e-3 },
                fista: FistaBlock { lambda_rel: 0.05, max_iter: 200, tol: 1e-4 },
                oamp: OampBlock { kappa: 3.0, max_iter: 30, tol: 1e-4 },
                fpn: FpnBlock { epsilon: 0.01, max_iter: 15, min_converged_fraction: 0.95 },
            },
            train: TrainConfig {
                epochs: 14,
                lr: 3e-3,
                batch_size: 16,
                lr_halving_period: 5,
                lipschitz_samples: 16,
                warm_start: true,
                ..TrainConfig::default()
            },
            train_seed: 3,
            sweep: SweepBlock {
                snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
                methods: Method::ALL.to_vec(),
                samples: 500,
                seed: 4,
                per_iteration_snr_db: 10.0,
                gap_snr_db: vec![0.0, 5.0, 10.0],
                iterations: 15,
                contraction_pairs: 1000,
            },
            output_dir: PathBuf::from("runs/desk"),
        }
    }

    pub fn table1() -> Self {
        let mut c = Self::desk();
        c.name = "table1".into();
        c.geometry = ArrayGeometry::table1();
        c.measurement.num_slots = 128;
        c.dataset = DatasetBlock { train_count: 80000, val_count: 5000, test_count: 5000, seed: 2 };
        c.solvers.omp.sparsity = 160;
        c.train = TrainConfig::default();
        c.sweep.samples = 5000;
        c.output_dir = PathBuf::from("runs/table1");
        c
    }

    pub fn validate(&self) -> CliResult<()> {
        self.geometry.validate().map_err(CliError::config)?;
        self.material.validate().map_err(CliError::config)?;
        self.sampling.validate().map_err(CliError::config)?;
        self.train.validate().map_err(CliError::config)?;
        self.fpn_options().validate().map_err(CliError::config)?;
        if !(0.0..=1.0).contains(&self.solvers.fpn.min_converged_fraction) {
            return Err(CliError::Config("solvers.fpn.min_converged_fraction must lie in [0, 1]".into()));
        }
        if self.measurement.num_slots == 0 {
            return Err(CliError::Config("measurement.num_slots must be positive".into()));
        }
        if self.sweep.iterations == 0 || self.sweep.methods.is_empty() {
            return Err(CliError::Config("sweep needs methods and at least one iteration".into()));
        }
        if self.solvers.fista.lambda_rel <= 0.0 || self.solvers.omp.sparsity == 0 {
            return Err(CliError::Config("solver hyperparameters must be positive".into()));
        }
        if self.sweep.snr_db.iter().chain(&self.sweep.gap_snr_db).any(|s| !s.is_finite()) {
            return Err(CliError::Config("SNR values must be finite".into()));
        }
        Ok(())
    }

    /// Reads a JSON config; unknown fields are rejected.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg: Self =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
    }

    /// SHA-256 of the compact JSON form; every output row carries it.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Digest of the parts that determine a trained network: geometry,
    /// channel model, measurements, training data, training settings and
    /// the inference settings the final calibration targets.
    pub fn training_digest(&self, regime: SnrRegime) -> String {
        let key = serde_json::json!({
            "geometry": self.geometry,
            "material": self.material,
            "sampling": self.sampling,
            "measurement": self.measurement,
            "dataset": self.dataset,
            "train": TrainConfig { regime, ..self.train.clone() },
            "train_seed": self.train_seed,
            "fpn": self.solvers.fpn,
        });
        hex::encode(Sha256::digest(serde_json::to_vec(&key).expect("json")))
    }

    /// Like [`training_digest`](Self::training_digest) but blind to the
    /// epoch count, so a run can be extended with `--resume`.
    pub fn resume_digest(&self, regime: SnrRegime) -> String {
        let mut c = self.clone();
        c.train.epochs = 0;
        c.training_digest(regime)
    }

    pub fn omp_options(&self) -> OmpOptions {
        OmpOptions {
            sparsity: self.solvers.omp.sparsity,
            residual_tol: self.solvers.omp.residual_tol,
            record_iterates: false,
        }
    }

    /// FISTA options with `λ` scaled to the observation.
    pub fn fista_options(&self, correlation_peak: f64) -> FistaOptions {
        FistaOptions {
            lambda: (self.solvers.fista.lambda_rel * correlation_peak).max(f64::MIN_POSITIVE),
            max_iter: self.solvers.fista.max_iter,
            tol: self.solvers.fista.tol,
            restart: true,
            record_iterates: false,
        }
    }

    pub fn oamp_options(&self) -> OampOptions {
        OampOptions {
            kappa: self.solvers.oamp.kappa,
            max_iter: self.solvers.oamp.max_iter,
            tol: self.solvers.oamp.tol,
            record_iterates: false,
        }
    }

    pub fn fpn_options(&self) -> FixedPointOptions {
        FixedPointOptions::new(self.solvers.fpn.epsilon, self.solvers.fpn.max_iter)
    }
}
