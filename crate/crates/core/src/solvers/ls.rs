use super::SolverReport;
use crate::linalg::{matvec, norm};
use crate::measurement::MeasurementEnsemble;
use crate::{Error, Result};

/// Minimum-norm least squares `ĥ = M† y`.
pub fn solve_ls(ens: &MeasurementEnsemble, y: &[f64]) -> Result<SolverReport> {
    Error::check_len("measurements", ens.measurement_dim(), y.len())?;
    let estimate = matvec(ens.pinv(), y);
    let residual: Vec<f64> = ens.apply(&estimate)?.iter().zip(y).map(|(a, b)| b - a).collect();
    Ok(SolverReport { estimate, iterates: None, residual_history: vec![norm(&residual)], iterations_used: 1 })
}
