use serde::{Deserialize, Serialize};

use crate::measurement::MeasurementEnsemble;
use crate::nn::VectorMap;
use crate::{linalg, Error, Result};

/// Outcome of one fixed point iteration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointTrace {
    /// Returned estimate `ĥ`.
    pub estimate: Vec<f64>,
    /// `h⁽⁰⁾, h⁽¹⁾, …` when requested.
    pub iterates: Option<Vec<Vec<f64>>>,
    /// `‖h⁽ᵗ⁾ − f(h⁽ᵗ⁾)‖₂` for each application.
    pub gap_history: Vec<f64>,
    pub converged: bool,
    /// Number of applications of the map.
    pub iterations_used: usize,
    pub epsilon: f64,
}

/// Stopping rule shared by every fixed point run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointOptions {
    pub epsilon: f64,
    pub max_iter: usize,
    pub record_iterates: bool,
}

impl FixedPointOptions {
    pub fn new(epsilon: f64, max_iter: usize) -> Self {
        Self { epsilon, max_iter, record_iterates: false }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::arg(format!("tolerance must be positive and finite, got {}", self.epsilon)));
        }
        if self.max_iter == 0 {
            return Err(Error::arg("at least one iteration is required"));
        }
        Ok(())
    }
}

/// Picard iteration `h ← f(h)` on a batch of independent problems.
///
/// `map(h, active)` receives the stacked current iterates of the problems
/// listed in `active` and returns `f` applied to each. Every problem runs
/// until its own gap `‖h − f(h)‖` drops to `epsilon`, then leaves the batch;
/// the returned estimate is the last application `f(h)`. A problem that
/// never converges returns the application with the smallest gap.
pub fn fixed_point_batch<F>(
    mut map: F,
    init: &[f64],
    dim: usize,
    opts: &FixedPointOptions,
) -> Result<Vec<FixedPointTrace>>
where
    F: FnMut(&[f64], &[usize]) -> Result<Vec<f64>>,
{
    opts.validate()?;
    if dim == 0 || init.len() % dim != 0 {
        return Err(Error::arg("initial iterates must be whole vectors"));
    }
    let rows = init.len() / dim;
    let mut traces: Vec<FixedPointTrace> = (0..rows)
        .map(|i| FixedPointTrace {
            estimate: init[i * dim..(i + 1) * dim].to_vec(),
            iterates: opts.record_iterates.then(|| vec![init[i * dim..(i + 1) * dim].to_vec()]),
            gap_history: Vec::new(),
            converged: false,
            iterations_used: 0,
            epsilon: opts.epsilon,
        })
        .collect();
    let mut best = vec![f64::INFINITY; rows];
    let mut active: Vec<usize> = (0..rows).collect();
    let mut current = init.to_vec();
    for t in 0..opts.max_iter {
        if active.is_empty() {
            break;
        }
        let next = map(&current, &active)?;
        Error::check_len("fixed point map output", current.len(), next.len())?;
        let mut still = Vec::with_capacity(active.len());
        let mut carried = Vec::with_capacity(next.len());
        for (k, &i) in active.iter().enumerate() {
            let h = &current[k * dim..(k + 1) * dim];
            let f = &next[k * dim..(k + 1) * dim];
            let gap = linalg::dist(h, f);
            if !gap.is_finite() {
                return Err(Error::Numerical {
                    iteration: t + 1,
                    message: format!("non-finite iterate for problem {i}"),
                });
            }
            let tr = &mut traces[i];
            tr.gap_history.push(gap);
            tr.iterations_used = t + 1;
            if let Some(it) = tr.iterates.as_mut() {
                it.push(f.to_vec());
            }
            if gap <= best[i] {
                best[i] = gap;
                tr.estimate.copy_from_slice(f);
            }
            if gap <= opts.epsilon {
                tr.converged = true;
            } else {
                still.push(i);
                carried.extend_from_slice(f);
            }
        }
        active = still;
        current = carried;
    }
    Ok(traces)
}

/// Single-problem version of [`fixed_point_batch`].
pub fn fixed_point<F>(mut map: F, init: &[f64], opts: &FixedPointOptions) -> Result<FixedPointTrace>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut out = fixed_point_batch(|h, _| map(h), init, init.len(), opts)?;
    Ok(out.pop().expect("one problem"))
}

/// The estimator map `f(h; y) = R(h + W(y − M h))` for a batch of observations.
pub struct FpnMap<'a, N: ?Sized> {
    ens: &'a MeasurementEnsemble,
    nle: &'a N,
}

impl<'a, N: VectorMap + ?Sized> FpnMap<'a, N> {
    pub fn new(ens: &'a MeasurementEnsemble, nle: &'a N) -> Result<Self> {
        Error::check_len("denoiser dimension", ens.signal_dim(), nle.dim())?;
        Ok(Self { ens, nle })
    }

    /// Applies the map to `rows` stacked iterates with matching observations.
    pub fn apply_batch(&self, h: &[f64], y: &[f64], rows: usize) -> Result<Vec<f64>> {
        let mut x = h.to_vec();
        self.ens.le_apply_batch(&mut x, y, rows)?;
        self.nle.apply_batch(&x, rows)
    }

    pub fn apply(&self, h: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.apply_batch(h, y, 1)
    }
}

fn gather(src: &[f64], dim: usize, rows: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows.len() * dim);
    for &i in rows {
        out.extend_from_slice(&src[i * dim..(i + 1) * dim]);
    }
    out
}

/// Runs the estimator from `h⁽⁰⁾ = 0` (or `init`) on `rows` stacked observations.
pub fn fpn_infer_batch<N: VectorMap + ?Sized>(
    ens: &MeasurementEnsemble,
    nle: &N,
    y: &[f64],
    init: Option<&[f64]>,
    opts: &FixedPointOptions,
) -> Result<Vec<FixedPointTrace>> {
    let map = FpnMap::new(ens, nle)?;
    let (n, m) = (ens.signal_dim(), ens.measurement_dim());
    if y.len() % m != 0 {
        return Err(Error::arg("observations must be whole vectors"));
    }
    let rows = y.len() / m;
    let zeros;
    let init = match init {
        Some(h0) => {
            Error::check_len("initial iterates", rows * n, h0.len())?;
            h0
        }
        None => {
            zeros = vec![0.0; rows * n];
            &zeros
        }
    };
    fixed_point_batch(|h, active| map.apply_batch(h, &gather(y, m, active), active.len()), init, n, opts)
}

/// Runs the estimator from `h⁽⁰⁾ = 0` for a single observation.
pub fn fpn_infer<N: VectorMap + ?Sized>(
    ens: &MeasurementEnsemble,
    nle: &N,
    y: &[f64],
    opts: &FixedPointOptions,
) -> Result<FixedPointTrace> {
    Error::check_len("observation", ens.measurement_dim(), y.len())?;
    Ok(fpn_infer_batch(ens, nle, y, None, opts)?.pop().expect("one problem"))
}
