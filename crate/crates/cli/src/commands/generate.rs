use hybrid_fpn::fpn::SnrRegime;

use super::{ensure_dir, Context};
use crate::dataset::{shard_seed, DatasetShard, SnrPolicy, Split};
use crate::error::CliResult;

/// Shards to write. `None` fields mean "all".
#[derive(Debug, Clone, Copy, Default)]
pub struct GenerateRequest {
    pub split: Option<Split>,
    pub regime: Option<SnrRegime>,
    /// Overrides the configured count of the split.
    pub count: Option<usize>,
}

/// Writes the requested shards under `<out>/data` and returns their paths.
/// Train and validation shards exist per regime; the test shard spans both.
pub fn run(ctx: &Context, req: &GenerateRequest) -> CliResult<Vec<std::path::PathBuf>> {
    ctx.save_config()?;
    ensure_dir(&ctx.data_dir())?;
    let ds = &ctx.cfg.dataset;
    let regimes: Vec<SnrRegime> = match req.regime {
        Some(r) => vec![r],
        None => vec![SnrRegime::Low, SnrRegime::High],
    };
    let splits = match req.split {
        Some(s) => vec![s],
        None => vec![Split::Train, Split::Val, Split::Test],
    };
    let mut written = Vec::new();
    for split in splits {
        let policies: Vec<SnrPolicy> = match split {
            Split::Test => vec![SnrPolicy::full()],
            _ => regimes.iter().map(|r| SnrPolicy::for_regime(*r)).collect(),
        };
        let default_count = match split {
            Split::Train => ds.train_count,
            Split::Val => ds.val_count,
            Split::Test => ds.test_count,
        };
        for policy in policies {
            let count = req.count.unwrap_or(default_count);
            let seed = shard_seed(ds.seed, split, &policy);
            let shard = DatasetShard::generate(&ctx.cfg, &ctx.ens, split, policy, count, seed)?;
            let path = ctx.shard_path(split, policy.regime);
            shard.save(&path)?;
            eprintln!("wrote {} ({count} records)", path.display());
            written.push(path);
        }
    }
    Ok(written)
}
