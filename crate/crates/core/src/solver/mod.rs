//! Conic optimization: an interior-point SOCP solver, a splitting
//! fallback and branch-and-bound over binary variables.

mod admm;
mod bnb;
pub mod cones;
pub mod conic;
mod ipm;
pub mod ldl;
mod scaling;
pub mod sparse;

pub use bnb::{branch_and_bound, branching_rule, canonical_relaxed_bits, BnbResult, BnbStatus};
pub use conic::{to_conic, Column, ConicProblem};
pub use ipm::{ConicSolution, ConicStatus};

use crate::error::Result;
use crate::model::MixedIntegerConicProgram;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SolverMode {
    #[default]
    Ipm,
    Splitting,
}

impl std::str::FromStr for SolverMode {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ipm" => Ok(SolverMode::Ipm),
            "splitting" => Ok(SolverMode::Splitting),
            other => Err(crate::error::Error::Validation(format!("unknown solver mode {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverSettings<T> {
    /// Relative optimality gap at which branch-and-bound stops.
    pub rel_gap: T,
    /// Feasibility and gap tolerance of each conic solve.
    pub socp_tol: T,
    /// Interior-point iteration limit (splitting uses a multiple of it).
    pub max_iter: usize,
    pub node_limit: usize,
    pub threads: usize,
    pub mode: SolverMode,
}

impl<T: Real> Default for SolverSettings<T> {
    fn default() -> Self {
        SolverSettings {
            rel_gap: T::lit(1e-6),
            socp_tol: T::lit(1e-8),
            max_iter: 100,
            node_limit: 100_000,
            threads: 1,
            mode: SolverMode::Ipm,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SocpStatus {
    Optimal,
    /// Met a reduced tolerance only.
    Inaccurate,
    Infeasible,
    Unbounded,
    IterationLimit,
    NumericalError,
}

impl SocpStatus {
    pub fn has_solution(self) -> bool {
        matches!(self, SocpStatus::Optimal | SocpStatus::Inaccurate)
    }
}

/// Farkas certificate of primal infeasibility over the conic rows:
/// `y ∈ K*`, `Aᵀy = 0`, `bᵀy = −1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Certificate<T> {
    pub y: Vec<T>,
    pub row_labels: Vec<String>,
    /// `‖Aᵀy‖∞ / (−bᵀy)`; small values mean a convincing certificate.
    pub quality: T,
}

impl<T: Real> Certificate<T> {
    /// Labels of the rows with the largest certificate weights.
    pub fn support(&self, count: usize) -> Vec<(String, T)> {
        let mut idx: Vec<usize> = (0..self.y.len()).filter(|&i| self.y[i] != T::zero()).collect();
        idx.sort_by(|&a, &b| self.y[b].abs().partial_cmp(&self.y[a].abs()).unwrap_or(std::cmp::Ordering::Equal));
        idx.into_iter().take(count).map(|i| (self.row_labels[i].clone(), self.y[i])).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SocpResult<T> {
    pub status: SocpStatus,
    /// Values of every program variable (empty without a solution).
    pub x: Vec<T>,
    pub objective: T,
    pub iterations: usize,
    pub primal_residual: T,
    pub dual_residual: T,
    pub gap: T,
    pub certificate: Option<Certificate<T>>,
}

/// Solves the continuous relaxation of `program` with its own bounds.
pub fn solve_socp<T: Real>(program: &MixedIntegerConicProgram<T>, settings: &SolverSettings<T>) -> Result<SocpResult<T>> {
    solve_socp_with_bounds(program, &program.bounds(), settings)
}

/// Solves the continuous relaxation with `bounds` replacing the program's.
pub fn solve_socp_with_bounds<T: Real>(
    program: &MixedIntegerConicProgram<T>,
    bounds: &[(Option<T>, Option<T>)],
    settings: &SolverSettings<T>,
) -> Result<SocpResult<T>> {
    program.validate()?;
    let prob = to_conic(program, bounds, true);
    let sol = solve_conic(&prob, settings)?;
    Ok(finish(&prob, sol))
}

/// Solves a conic problem with the configured method.
pub fn solve_conic<T: Real>(prob: &ConicProblem<T>, settings: &SolverSettings<T>) -> Result<ConicSolution<T>> {
    match settings.mode {
        SolverMode::Ipm => ipm::solve_conic(
            prob,
            &ipm::IpmSettings { tol: settings.socp_tol, max_iter: settings.max_iter, equilibrate_iters: 15 },
        ),
        SolverMode::Splitting => admm::solve_conic(
            prob,
            &admm::AdmmSettings { tol: settings.socp_tol.max(T::lit(1e-7)), max_iter: settings.max_iter * 200 },
        ),
    }
}

fn finish<T: Real>(prob: &ConicProblem<T>, sol: ConicSolution<T>) -> SocpResult<T> {
    let status = match sol.status {
        ConicStatus::Optimal => SocpStatus::Optimal,
        ConicStatus::Inaccurate => SocpStatus::Inaccurate,
        ConicStatus::PrimalInfeasible => SocpStatus::Infeasible,
        ConicStatus::DualInfeasible => SocpStatus::Unbounded,
        ConicStatus::IterationLimit => SocpStatus::IterationLimit,
        ConicStatus::NumericalError => SocpStatus::NumericalError,
    };
    let certificate = (status == SocpStatus::Infeasible).then(|| Certificate {
        quality: prob.certificate_quality(&sol.z).unwrap_or(T::infinity()),
        y: sol.z.clone(),
        row_labels: prob.row_labels.clone(),
    });
    let x = if status.has_solution() { prob.expand(&sol.x) } else { Vec::new() };
    SocpResult {
        status,
        x,
        objective: if status.has_solution() { sol.objective } else { T::nan() },
        iterations: sol.iterations,
        primal_residual: sol.primal_residual,
        dual_residual: sol.dual_residual,
        gap: sol.gap,
        certificate,
    }
}
