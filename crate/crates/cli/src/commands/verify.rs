use hybrid_fpn::fpn::SnrRegime;

use super::benchmark::observe_test;
use super::{Context, RegimeWeights};
use crate::checks::{self, Check};
use crate::dataset::{DatasetShard, Split};
use crate::error::CliResult;

const EQUIVALENCE_INSTANCES: usize = 100;
const OMP_INSTANCES: usize = 20;

/// Runs every check that applies to what exists under the output directory.
/// Checks needing shards or weights are skipped when those are missing.
pub fn run(ctx: &Context, seed: u64) -> CliResult<Vec<Check>> {
    let mut out = Vec::new();
    let (rel, secs) = checks::trace_identity(&ctx.ens);
    out.push(Check::new("trace identity", rel < 1e-6, format!("|tr(I - WM)|/tr(I) = {rel:.2e} in {secs:.3}s")));
    let (off, norm_dev, secs) = checks::projector_spectrum(&ctx.ens);
    out.push(Check::new(
        "projector spectrum",
        off < 1e-8 && norm_dev < 1e-6,
        format!("eigenvalue offset {off:.2e}, | ||I - eta P|| - 1 | = {norm_dev:.2e} in {secs:.2}s"),
    ));
    let d = checks::rayleigh_table1();
    out.push(Check::new("rayleigh distance", (d - 20.0).abs() <= 0.4, format!("{d:.4} m")));
    let gap = checks::real_complex_gap(ctx, EQUIVALENCE_INSTANCES, seed)?;
    out.push(Check::new("real/complex model", gap < 1e-10, format!("max relative difference {gap:.2e}")));
    let worst = checks::omp_sparse_recovery(&ctx.ens, 3, OMP_INSTANCES, seed)?;
    out.push(Check::new("omp 3-sparse recovery", worst < -120.0, format!("worst NMSE {worst:.1} dB")));

    for split in [Split::Train, Split::Val, Split::Test] {
        let regimes: Vec<Option<SnrRegime>> = match split {
            Split::Test => vec![None],
            _ => vec![Some(SnrRegime::Low), Some(SnrRegime::High)],
        };
        for regime in regimes {
            let path = ctx.shard_path(split, regime);
            if !path.exists() {
                continue;
            }
            let shard = DatasetShard::load(&path)?;
            let err = shard.regeneration_error(&ctx.ens)?;
            let name = format!("shard {}", path.file_name().unwrap_or_default().to_string_lossy());
            out.push(Check::new(name, err <= 1e-6, format!("{} records, max |y - y_regen| = {err:.2e}", shard.len())));
        }
    }

    let test_path = ctx.shard_path(Split::Test, None);
    let weights = RegimeWeights::load(ctx)?;
    if test_path.exists() {
        let shard = ctx.load_shard(Split::Test, None)?;
        for regime in [SnrRegime::Low, SnrRegime::High] {
            let Some(net) = weights.get(regime) else { continue };
            let (lo, hi) = regime.range_db();
            let batch = observe_test(ctx, &shard, 0.5 * (lo + hi), ctx.cfg.sweep.samples, ctx.cfg.sweep.seed)?;
            let (lip, ratio) = checks::trained_contraction(
                ctx,
                net,
                &batch,
                ctx.cfg.train.batch_size,
                ctx.cfg.sweep.contraction_pairs,
                seed,
            )?;
            out.push(Check::new(
                format!("contraction {}", regime.tag()),
                lip < 1.0 && ratio < 1.0,
                format!("Lipschitz estimate {lip:.3}, max pair ratio {ratio:.3}"),
            ));
        }
    }
    Ok(out)
}
