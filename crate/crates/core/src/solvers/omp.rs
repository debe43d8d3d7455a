use super::SolverReport;
use crate::linalg::{dot, matvec_t, norm};
use crate::measurement::MeasurementEnsemble;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OmpOptions {
    /// Maximum number of atoms.
    pub sparsity: usize,
    /// Stop once `‖r‖ ≤ residual_tol · ‖y‖`.
    pub residual_tol: f64,
    #[serde(default)]
    pub record_iterates: bool,
}

impl Default for OmpOptions {
    fn default() -> Self {
        Self { sparsity: 64, residual_tol: 1e-3, record_iterates: false }
    }
}

/// Orthogonal matching pursuit over the columns of `M`, with a least-squares
/// refit on the selected support after every pick.
pub fn solve_omp(ens: &MeasurementEnsemble, y: &[f64], opts: &OmpOptions) -> Result<SolverReport> {
    Error::check_len("measurements", ens.measurement_dim(), y.len())?;
    let m = ens.operator();
    if opts.sparsity == 0 || opts.sparsity > m.nrows() {
        return Err(Error::arg(format!("sparsity must lie in 1..={}, got {}", m.nrows(), opts.sparsity)));
    }
    let col_norms: Vec<f64> = m.column_iter().map(|c| c.norm()).collect();
    let y_norm = norm(y);
    let mut report = SolverReport {
        estimate: vec![0.0; m.ncols()],
        iterates: opts.record_iterates.then(Vec::new),
        ..Default::default()
    };
    if y_norm == 0.0 {
        return Ok(report);
    }

    // Incremental QR of the selected columns: basis holds orthonormal q_k,
    // r_cols[k] the k-th column of the upper-triangular factor.
    let mut support: Vec<usize> = Vec::with_capacity(opts.sparsity);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(opts.sparsity);
    let mut r_cols: Vec<Vec<f64>> = Vec::with_capacity(opts.sparsity);
    let mut qty: Vec<f64> = Vec::with_capacity(opts.sparsity);
    let mut residual = y.to_vec();
    while support.len() < opts.sparsity && norm(&residual) > opts.residual_tol * y_norm {
        let corr = matvec_t(m, &residual);
        let pick = (0..m.ncols()).filter(|j| col_norms[*j] > 0.0 && !support.contains(j)).max_by(|&a, &b| {
            let ca = corr[a].abs() / col_norms[a];
            let cb = corr[b].abs() / col_norms[b];
            ca.total_cmp(&cb)
        });
        let Some(pick) = pick else { break };

        let atom: Vec<f64> = m.column(pick).iter().copied().collect();
        let mut q = atom.clone();
        let mut r = vec![0.0; basis.len() + 1];
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for (k, b) in basis.iter().enumerate() {
                let c = dot(b, &q);
                r[k] += c;
                q.iter_mut().zip(b).for_each(|(v, bv)| *v -= c * bv);
            }
        }
        let len = norm(&q);
        if len <= 1e-12 * col_norms[pick] {
            // atom already in the span; nothing new to fit
            break;
        }
        q.iter_mut().for_each(|v| *v /= len);
        r[basis.len()] = len;
        qty.push(dot(&q, y));
        basis.push(q);
        r_cols.push(r);
        support.push(pick);

        residual = y.to_vec();
        for (b, c) in basis.iter().zip(&qty) {
            residual.iter_mut().zip(b).for_each(|(v, bv)| *v -= c * bv);
        }
        // back substitution R x = Qᵀ y
        let k = support.len();
        let mut coef = vec![0.0; k];
        for i in (0..k).rev() {
            let tail: f64 = (i + 1..k).map(|j| r_cols[j][i] * coef[j]).sum();
            coef[i] = (qty[i] - tail) / r_cols[i][i];
        }

        report.estimate.iter_mut().for_each(|v| *v = 0.0);
        for (c, &j) in coef.iter().zip(&support) {
            report.estimate[j] = *c;
        }
        report.residual_history.push(norm(&residual));
        if let Some(it) = report.iterates.as_mut() {
            it.push(report.estimate.clone());
        }
    }
    report.iterations_used = support.len();
    Ok(report)
}
