//! Exhaustive search over the tap grid with the sweep oracle.

use rayon::prelude::*;
use serde::Serialize;

use super::{solve_powerflow_with_dispatch, Dispatch, PowerFlowSettings, TapAssignment};
use crate::error::{Error, Result};
use crate::network::NetworkCase;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnumerationSettings<T> {
    /// Refuse grids with more points than this.
    pub cap: u128,
    pub powerflow: PowerFlowSettings<T>,
    /// Slack allowed on squared-voltage bounds when classifying a point.
    pub voltage_tol: T,
    pub parallel: bool,
}

impl<T: Real> Default for EnumerationSettings<T> {
    fn default() -> Self {
        EnumerationSettings {
            cap: 1_000_000,
            powerflow: PowerFlowSettings::default(),
            voltage_tol: T::lit(1e-9),
            parallel: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GridStatus {
    Feasible,
    VoltageViolation,
    NonConverged,
    Collapse,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridPoint<T> {
    pub taps: TapAssignment,
    pub status: GridStatus,
    /// Oracle losses in kW when the sweep converged.
    pub losses_kw: Option<T>,
    pub voltage_violation: Option<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnumerationResult<T> {
    pub best: TapAssignment,
    pub best_losses_kw: T,
    /// Every grid point in lexicographic order, first transformer most
    /// significant.
    pub table: Vec<GridPoint<T>>,
}

impl<T: Real> EnumerationResult<T> {
    pub fn count(&self, status: GridStatus) -> usize {
        self.table.iter().filter(|p| p.status == status).count()
    }

    pub fn feasible(&self) -> impl Iterator<Item = &GridPoint<T>> {
        self.table.iter().filter(|p| p.status == GridStatus::Feasible)
    }
}

/// Number of points on the tap grid, `Π (K_i + 1)`.
pub fn grid_size<T: Real>(case: &NetworkCase<T>) -> u128 {
    case.transformers()
        .iter()
        .map(|&k| case.branches()[k].tap.as_ref().unwrap().k_taps as u128 + 1)
        .product()
}

/// Decodes a lexicographic grid index into tap positions.
pub fn grid_point(radices: &[u32], mut index: u128) -> TapAssignment {
    let mut taps = vec![0; radices.len()];
    for (slot, &k) in taps.iter_mut().zip(radices).rev() {
        let base = k as u128 + 1;
        *slot = (index % base) as u32;
        index /= base;
    }
    TapAssignment(taps)
}

/// Evaluates every tap assignment with the oracle and returns the one with
/// the least losses among voltage-feasible points. Ties go to the
/// lexicographically smallest assignment.
pub fn enumerate_taps<T: Real>(
    case: &NetworkCase<T>,
    settings: &EnumerationSettings<T>,
) -> Result<EnumerationResult<T>> {
    let size = grid_size(case);
    if size > settings.cap {
        return Err(Error::EnumerationCap { size, cap: settings.cap });
    }
    let pu = case.to_per_unit()?;
    let dispatch = Dispatch::default_for(&pu);
    let radices: Vec<u32> = pu
        .transformers()
        .iter()
        .map(|&k| pu.branches()[k].tap.as_ref().unwrap().k_taps)
        .collect();

    let evaluate = |index: u128| -> Result<GridPoint<T>> {
        let taps = grid_point(&radices, index);
        match solve_powerflow_with_dispatch(&pu, &taps, &dispatch, &settings.powerflow) {
            Ok(sol) => {
                let viol = sol.voltage_violation(&pu);
                let status = if viol <= settings.voltage_tol {
                    GridStatus::Feasible
                } else {
                    GridStatus::VoltageViolation
                };
                Ok(GridPoint { taps, status, losses_kw: Some(sol.losses_kw), voltage_violation: Some(viol) })
            }
            Err(Error::NonConvergence { .. }) => {
                Ok(GridPoint { taps, status: GridStatus::NonConverged, losses_kw: None, voltage_violation: None })
            }
            Err(Error::VoltageCollapse { .. }) => {
                Ok(GridPoint { taps, status: GridStatus::Collapse, losses_kw: None, voltage_violation: None })
            }
            Err(e) => Err(e),
        }
    };
    let size = size as usize;
    let table: Vec<GridPoint<T>> = if settings.parallel {
        (0..size).into_par_iter().map(|i| evaluate(i as u128)).collect::<Result<_>>()?
    } else {
        (0..size).map(|i| evaluate(i as u128)).collect::<Result<_>>()?
    };

    let mut best: Option<usize> = None;
    for (i, p) in table.iter().enumerate() {
        if p.status != GridStatus::Feasible {
            continue;
        }
        if best.map_or(true, |b| p.losses_kw.unwrap() < table[b].losses_kw.unwrap()) {
            best = Some(i);
        }
    }
    let nonconv = table.iter().filter(|p| p.status == GridStatus::NonConverged).count();
    if nonconv > 0 {
        log::warn!("{nonconv} tap assignments did not converge in the sweep");
    }
    let best = best.ok_or(Error::NoFeasibleAssignment)?;
    Ok(EnumerationResult {
        best: table[best].taps.clone(),
        best_losses_kw: table[best].losses_kw.unwrap(),
        table,
    })
}
