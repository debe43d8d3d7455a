use super::SolverReport;
use crate::linalg::{matvec, matvec_t, norm};
use crate::measurement::MeasurementEnsemble;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FistaOptions {
    /// ℓ₁ weight (absolute).
    pub lambda: f64,
    pub max_iter: usize,
    /// Stop once `‖h_{k+1} − h_k‖ / ‖h_k‖ < tol`.
    pub tol: f64,
    /// Function-value restart of the momentum sequence.
    pub restart: bool,
    pub record_iterates: bool,
}

impl Default for FistaOptions {
    fn default() -> Self {
        Self { lambda: 1e-2, max_iter: 200, tol: 1e-4, restart: true, record_iterates: false }
    }
}

/// Proximal map of `t‖·‖₁`.
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// `½‖y − M h‖² + λ‖h‖₁`
pub fn fista_objective(ens: &MeasurementEnsemble, y: &[f64], h: &[f64], lambda: f64) -> f64 {
    let r: f64 = matvec(ens.operator(), h).iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    0.5 * r + lambda * h.iter().map(|v| v.abs()).sum::<f64>()
}

/// FISTA with step `1/‖M‖₂²`.
///
/// `residual_history` records `‖y − M h_k‖`. With `restart` on, a step that
/// raises the objective is replaced by a plain proximal-gradient step from
/// the previous iterate and the momentum is reset, which keeps the objective
/// monotone.
pub fn solve_fista(ens: &MeasurementEnsemble, y: &[f64], opts: &FistaOptions) -> Result<SolverReport> {
    Error::check_len("measurements", ens.measurement_dim(), y.len())?;
    if !(opts.lambda > 0.0) {
        return Err(Error::arg(format!("lambda must be positive, got {}", opts.lambda)));
    }
    let step = 1.0 / ens.op_norm_sq();
    let m = ens.operator();
    let prox_grad = |z: &[f64]| -> Vec<f64> {
        let resid: Vec<f64> = matvec(m, z).iter().zip(y).map(|(a, b)| a - b).collect();
        let grad = matvec_t(m, &resid);
        z.iter().zip(grad).map(|(v, g)| soft_threshold(v - step * g, step * opts.lambda)).collect()
    };
    let residual_norm =
        |h: &[f64]| -> f64 { matvec(m, h).iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() };

    let n = ens.signal_dim();
    let mut x = vec![0.0; n];
    let mut z = x.clone();
    let mut t = 1.0f64;
    let mut f_prev = fista_objective(ens, y, &x, opts.lambda);
    let mut report = SolverReport { iterates: opts.record_iterates.then(Vec::new), ..Default::default() };
    for k in 0..opts.max_iter {
        let mut next = prox_grad(&z);
        let mut f_next = fista_objective(ens, y, &next, opts.lambda);
        if opts.restart && f_next > f_prev {
            next = prox_grad(&x);
            f_next = fista_objective(ens, y, &next, opts.lambda);
            t = 1.0;
        }
        if !f_next.is_finite() {
            return Err(Error::Numerical { iteration: k + 1, message: "FISTA objective is not finite".into() });
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        let mut change = 0.0;
        for i in 0..n {
            let d = next[i] - x[i];
            change += d * d;
            z[i] = next[i] + beta * d;
        }
        let prev_norm = norm(&x);
        x = next;
        t = t_next;
        f_prev = f_next;
        report.iterations_used = k + 1;
        report.residual_history.push(residual_norm(&x));
        if let Some(it) = report.iterates.as_mut() {
            it.push(x.clone());
        }
        let rel = if prev_norm > 0.0 {
            change.sqrt() / prev_norm
        } else if change == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        if rel < opts.tol {
            break;
        }
    }
    report.estimate = x;
    Ok(report)
}
