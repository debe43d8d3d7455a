//! End-to-end runs of the subcommands on a tiny array.

use std::path::Path;

use hybrid_fpn::channel::ArrayGeometry;
use hybrid_fpn::fpn::SnrRegime;
use hybrid_fpn::nn::DenoiserWeights;
use hybrid_fpn_cli::commands::generate::GenerateRequest;
use hybrid_fpn_cli::commands::train::TrainRequest;
use hybrid_fpn_cli::commands::{benchmark, convergence, generate, train, verify};
use hybrid_fpn_cli::dataset::{DatasetShard, Split};
use hybrid_fpn_cli::{CliError, Context, ExperimentConfig};

fn tiny(out: &Path) -> Context {
    let mut c = ExperimentConfig::desk();
    c.name = "tiny".into();
    c.geometry = ArrayGeometry { num_subarrays: 1, aes_per_subarray: 16, ..ArrayGeometry::table1() };
    c.measurement.num_slots = 8;
    c.dataset.train_count = 48;
    c.dataset.val_count = 16;
    c.dataset.test_count = 16;
    c.solvers.omp.sparsity = 6;
    c.train.epochs = 2;
    c.train.batch_size = 16;
    c.sweep.samples = 16;
    c.sweep.iterations = 6;
    c.sweep.contraction_pairs = 50;
    c.output_dir = out.to_path_buf();
    Context::new(c, out.to_path_buf()).unwrap()
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn train_regime(ctx: &Context, regime: SnrRegime, resume: bool) -> train::TrainSummary {
    train::run(ctx, &TrainRequest { regime, resume, train_shard: None, val_shard: None }).unwrap()
}

#[test]
fn shards_are_reproducible_and_regenerable() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ca, cb) = (tiny(a.path()), tiny(b.path()));
    let pa = generate::run(&ca, &GenerateRequest::default()).unwrap();
    let pb = generate::run(&cb, &GenerateRequest::default()).unwrap();
    assert_eq!(pa.len(), 5);
    for (x, y) in pa.iter().zip(&pb) {
        assert_eq!(read(x), read(y), "{}", x.display());
        let shard = DatasetShard::load(x).unwrap();
        assert!(shard.regeneration_error(&ca.ens).unwrap() <= 1e-6);
    }
    let test = DatasetShard::load(&ca.shard_path(Split::Test, None)).unwrap();
    assert_eq!(test.len(), 16);
    assert!(test.snr_db.iter().all(|s| (0.0..=20.0).contains(s)));
    let low = DatasetShard::load(&ca.shard_path(Split::Train, Some(SnrRegime::Low))).unwrap();
    assert!(low.snr_db.iter().all(|s| (0.0..=10.0).contains(s)));

    let mut other = ca.cfg.clone();
    other.dataset.seed += 1;
    let c = tempfile::tempdir().unwrap();
    let cc = Context::new(other, c.path().to_path_buf()).unwrap();
    let req = GenerateRequest { split: Some(Split::Test), ..Default::default() };
    let pc = generate::run(&cc, &req).unwrap();
    assert_ne!(read(&pc[0]), read(&ca.shard_path(Split::Test, None)));
}

#[test]
fn empty_shard_keeps_its_header() {
    let dir = tempfile::tempdir().unwrap();
    let ctx = tiny(dir.path());
    let req = GenerateRequest { split: Some(Split::Val), regime: Some(SnrRegime::High), count: Some(0) };
    let paths = generate::run(&ctx, &req).unwrap();
    let shard = DatasetShard::load(&paths[0]).unwrap();
    assert!(shard.is_empty());
    assert_eq!(shard.header.signal_dim, 32);
    assert_eq!(shard.header.measurement_dim, 16);
    assert_eq!(shard.header.snr_policy.regime, Some(SnrRegime::High));
}

#[test]
fn training_log_and_resume() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ca = tiny(a.path());
    generate::run(&ca, &GenerateRequest { regime: Some(SnrRegime::Low), ..Default::default() }).unwrap();
    let full = train_regime(&ca, SnrRegime::Low, false);
    assert_eq!(full.log.len(), 2);
    assert!(full.peak_tape_bytes > 0);

    // one epoch, then continue to two
    let mut short = ca.cfg.clone();
    short.train.epochs = 1;
    let cb = Context::new(short, b.path().to_path_buf()).unwrap();
    generate::run(&cb, &GenerateRequest { regime: Some(SnrRegime::Low), ..Default::default() }).unwrap();
    train_regime(&cb, SnrRegime::Low, false);
    let cb = Context::new(ca.cfg.clone(), b.path().to_path_buf()).unwrap();
    let resumed = train_regime(&cb, SnrRegime::Low, true);
    assert_eq!(resumed.log.len(), 2);

    let log_a = read(&train::log_path(&ca, SnrRegime::Low));
    let log_b = read(&train::log_path(&cb, SnrRegime::Low));
    assert_eq!(log_a, log_b);
    let text = String::from_utf8(log_a).unwrap();
    assert_eq!(text.lines().next(), Some("epoch,train_nmse_db,val_nmse_db,lipschitz_estimate,lr"));
    assert_eq!(text.lines().count(), 3);
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 5);
        assert!(cols[3].parse::<f64>().unwrap() < 1.0);
        assert_eq!(cols[4], ca.cfg.train.lr.to_string());
    }
    assert_eq!(read(&ca.weights_path(SnrRegime::Low)), read(&cb.weights_path(SnrRegime::Low)));

    // the deployed weights carry the final calibration, training resumes from the raw state
    let cal = full.calibration.expect("calibrated at the last epoch");
    assert_eq!(resumed.calibration, Some(cal));
    assert!(cal.kernel_scale <= 1.0 && cal.kernel_scale >= 0.8);
    let (_, meta) = DenoiserWeights::load(&ca.weights_path(SnrRegime::Low)).unwrap();
    assert_eq!(meta["kernel_scale"].as_f64(), Some(cal.kernel_scale));
    assert_eq!(meta["epochs_done"].as_u64(), Some(2));
}

#[test]
fn regime_mismatch_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let ctx = tiny(dir.path());
    generate::run(&ctx, &GenerateRequest::default()).unwrap();
    let req = TrainRequest {
        regime: SnrRegime::High,
        resume: false,
        train_shard: Some(ctx.shard_path(Split::Train, Some(SnrRegime::Low))),
        val_shard: None,
    };
    let err = train::run(&ctx, &req).unwrap_err();
    assert!(matches!(err, CliError::Config(_)), "{err}");
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn benchmark_and_convergence_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let ctx = tiny(dir.path());
    generate::run(&ctx, &GenerateRequest::default()).unwrap();

    // fpn-oamp needs weights for every swept regime
    let err = benchmark::run(&ctx, false).unwrap_err();
    assert!(matches!(err, CliError::Config(_)), "{err}");

    train_regime(&ctx, SnrRegime::Low, false);
    train_regime(&ctx, SnrRegime::High, false);
    let records = benchmark::run(&ctx, true).unwrap();
    assert_eq!(records.len(), 25);
    assert!(records.iter().all(|r| r.nmse_db.is_finite() && r.config_digest == ctx.cfg.digest()));
    let csv_path = dir.path().join("nmse_vs_snr.csv");
    let first = read(&csv_path);
    let text = String::from_utf8(first.clone()).unwrap();
    assert_eq!(text.lines().next(), Some("snr_db,method,nmse_db"));
    assert_eq!(text.lines().count(), 26);
    assert!(text.contains("\n10.00,fpn-oamp,"));
    let side: serde_json::Value = serde_json::from_slice(&read(&dir.path().join("nmse_vs_snr.csv.json"))).unwrap();
    assert_eq!(side["config_digest"], ctx.cfg.digest());
    assert!(dir.path().join("nmse_vs_snr.svg").exists());
    benchmark::run(&ctx, false).unwrap();
    assert_eq!(read(&csv_path), first);

    let report = convergence::run(&ctx, true).unwrap();
    assert_eq!(report.per_iteration.len(), 3);
    assert_eq!(report.gaps.len(), 3);
    let per_it = String::from_utf8(read(&dir.path().join("per_iteration.csv"))).unwrap();
    assert_eq!(per_it.lines().next(), Some("t,method,nmse_db"));
    assert_eq!(per_it.lines().count(), 1 + 3 * 6);
    let gap = String::from_utf8(read(&dir.path().join("gap.csv"))).unwrap();
    assert_eq!(gap.lines().next(), Some("t,snr_db,log10_normalized_gap"));
    assert_eq!(gap.lines().count(), 1 + 3 * 6);
    let before = (per_it, gap);
    convergence::run(&ctx, false).unwrap();
    let after = (
        String::from_utf8(read(&dir.path().join("per_iteration.csv"))).unwrap(),
        String::from_utf8(read(&dir.path().join("gap.csv"))).unwrap(),
    );
    assert_eq!(before, after);

    let checks = verify::run(&ctx, 0).unwrap();
    assert!(checks.iter().any(|c| c.name == "contraction low_snr"));
    // two epochs on 48 samples give no contraction guarantee; everything else must hold
    for c in checks.iter().filter(|c| !c.name.starts_with("contraction")) {
        assert!(c.passed, "{}", c.line());
    }
}
