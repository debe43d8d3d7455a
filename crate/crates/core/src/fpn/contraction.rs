use rand::Rng as _;
use rand_distr::StandardNormal;

use super::iterate::{FixedPointTrace, FpnMap};
use crate::measurement::MeasurementEnsemble;
use crate::nn::VectorMap;
use crate::rng::rng_from_seed;
use crate::{linalg, Error, Result};

/// Pairs closer than this are skipped by the contraction check.
pub const COINCIDENT_PAIR: f64 = 1e-12;

/// Pair of points at which the estimator map is compared, with the index of
/// the observation it is evaluated under.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePair {
    pub sample: usize,
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

/// Ratios `‖f(h₁;y) − f(h₂;y)‖ / ‖h₁ − h₂‖` for every non-coincident pair.
/// `y` holds the stacked observations indexed by [`SamplePair::sample`].
pub fn contraction_ratios<N: VectorMap + ?Sized>(
    ens: &MeasurementEnsemble,
    nle: &N,
    pairs: &[SamplePair],
    y: &[f64],
) -> Result<Vec<f64>> {
    let map = FpnMap::new(ens, nle)?;
    let (n, m) = (ens.signal_dim(), ens.measurement_dim());
    let kept: Vec<&SamplePair> =
        pairs.iter().filter(|p| linalg::dist(&p.first, &p.second) >= COINCIDENT_PAIR).collect();
    let mut h1 = Vec::with_capacity(kept.len() * n);
    let mut h2 = Vec::with_capacity(kept.len() * n);
    let mut ys = Vec::with_capacity(kept.len() * m);
    for p in &kept {
        Error::check_len("pair point", n, p.first.len())?;
        Error::check_len("pair point", n, p.second.len())?;
        let yi = y
            .get(p.sample * m..(p.sample + 1) * m)
            .ok_or_else(|| Error::arg(format!("pair refers to missing observation {}", p.sample)))?;
        h1.extend_from_slice(&p.first);
        h2.extend_from_slice(&p.second);
        ys.extend_from_slice(yi);
    }
    let f1 = map.apply_batch(&h1, &ys, kept.len())?;
    let f2 = map.apply_batch(&h2, &ys, kept.len())?;
    Ok((0..kept.len())
        .map(|k| {
            let r = k * n..(k + 1) * n;
            linalg::dist(&f1[r.clone()], &f2[r.clone()]) / linalg::dist(&h1[r.clone()], &h2[r])
        })
        .collect())
}

/// Largest ratio from [`contraction_ratios`] (0 if every pair was skipped).
pub fn contraction_check<N: VectorMap + ?Sized>(
    ens: &MeasurementEnsemble,
    nle: &N,
    pairs: &[SamplePair],
    y: &[f64],
) -> Result<f64> {
    Ok(contraction_ratios(ens, nle, pairs, y)?.into_iter().fold(0.0, f64::max))
}

/// Draws pairs from the region visited by inference: each point is a random
/// convex combination of two recorded iterates of the same run, plus Gaussian
/// jitter of relative size `jitter` (per entry, scaled by the iterate norm).
pub fn sample_pairs(traces: &[FixedPointTrace], count: usize, jitter: f64, seed: u64) -> Result<Vec<SamplePair>> {
    let pools: Vec<&Vec<Vec<f64>>> = traces
        .iter()
        .map(|t| t.iterates.as_ref().ok_or_else(|| Error::arg("pair sampling needs recorded iterates")))
        .collect::<Result<_>>()?;
    if pools.is_empty() {
        return Err(Error::arg("pair sampling needs at least one trace"));
    }
    let mut rng = rng_from_seed(seed);
    let point = |pool: &Vec<Vec<f64>>, rng: &mut crate::rng::Rng| {
        let a = &pool[rng.random_range(0..pool.len())];
        let b = &pool[rng.random_range(0..pool.len())];
        let w: f64 = rng.random();
        let mix: Vec<f64> = a.iter().zip(b).map(|(a, b)| w * a + (1.0 - w) * b).collect();
        let scale = jitter * linalg::norm(&mix).max(1.0) / (mix.len() as f64).sqrt();
        mix.into_iter().map(|v| v + scale * rng.sample::<f64, _>(StandardNormal)).collect::<Vec<f64>>()
    };
    Ok((0..count)
        .map(|_| {
            let sample = rng.random_range(0..pools.len());
            let first = point(pools[sample], &mut rng);
            let second = point(pools[sample], &mut rng);
            SamplePair { sample, first, second }
        })
        .collect())
}
