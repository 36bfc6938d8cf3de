use super::{extract_solution, OpfModel, OpfSolution, OpfStatus};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::solver::{branch_and_bound, BnbResult, BnbStatus, SolverSettings};

/// Result of [`solve_opf`]: the decoded solution (absent when infeasible)
/// and the search statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct SolveOutcome<T> {
    pub status: OpfStatus,
    pub solution: Option<OpfSolution<T>>,
    pub search: BnbResult<T>,
}

/// Runs branch-and-bound on the model and decodes the incumbent.
///
/// Infeasibility is a regular outcome; a search that ends without any
/// incumbent for other reasons is reported as [`Error::Solver`].
pub fn solve_opf<T: Real>(model: &OpfModel<T>, settings: &SolverSettings<T>) -> Result<SolveOutcome<T>> {
    let search = branch_and_bound(&model.program, settings)?;
    let status = match search.status {
        BnbStatus::Infeasible => {
            return Ok(SolveOutcome { status: OpfStatus::Infeasible, solution: None, search });
        }
        BnbStatus::SolverFailure => {
            return Err(Error::Solver(format!(
                "{} of {} relaxations failed and no incumbent was found",
                search.failed_relaxations, search.relaxations
            )))
        }
        BnbStatus::NodeLimit if search.x.is_empty() => {
            return Err(Error::Solver(format!("node limit reached after {} nodes without an incumbent", search.nodes)))
        }
        BnbStatus::NodeLimit => OpfStatus::GapLimit,
        BnbStatus::Optimal => OpfStatus::Optimal,
    };
    let solution = extract_solution(model, &search.x, status, search.gap.max(T::zero()))?;
    Ok(SolveOutcome { status, solution: Some(solution), search })
}
