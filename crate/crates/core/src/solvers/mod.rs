//! Classical baselines for `y = M h + n`.

mod fista;
mod ls;
mod oamp;
mod omp;

pub use fista::{fista_objective, soft_threshold, solve_fista, FistaOptions};
pub use ls::solve_ls;
pub use oamp::{solve_oamp, OampOptions};
pub use omp::{solve_omp, OmpOptions};

/// Output shared by all baselines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverReport {
    pub estimate: Vec<f64>,
    /// Per-iteration estimates, when requested.
    pub iterates: Option<Vec<Vec<f64>>>,
    /// `‖y − M ĥ_t‖₂` after each iteration (a single entry for direct methods).
    pub residual_history: Vec<f64>,
    pub iterations_used: usize,
}
