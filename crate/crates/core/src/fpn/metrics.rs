use crate::{linalg, Error, Result};

/// Normalized squared error `‖h − ĥ‖² / ‖h‖²`.
pub fn nmse(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    Error::check_len("nmse estimate", truth.len(), estimate.len())?;
    let energy = linalg::dot(truth, truth);
    if !(energy > 0.0) {
        return Err(Error::arg("NMSE reference has zero energy"));
    }
    Ok(linalg::dist(estimate, truth).powi(2) / energy)
}

/// [`nmse`] in decibels.
pub fn nmse_db(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    nmse(estimate, truth).map(to_db)
}

/// Mean of the per-sample NMSE over row-major batches of length `dim`.
pub fn batch_nmse(estimates: &[f64], truths: &[f64], dim: usize) -> Result<f64> {
    Error::check_len("batch nmse", truths.len(), estimates.len())?;
    if dim == 0 || truths.is_empty() || truths.len() % dim != 0 {
        return Err(Error::arg("batch NMSE needs a non-empty whole number of samples"));
    }
    let mut total = 0.0;
    for (e, t) in estimates.chunks_exact(dim).zip(truths.chunks_exact(dim)) {
        total += nmse(e, t)?;
    }
    Ok(total / (truths.len() / dim) as f64)
}

pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}
