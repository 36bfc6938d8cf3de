//! Backward/forward sweep power flow on the branch flow equations.
//!
//! For a fixed tap assignment the radial equations
//!
//! ```text
//!   P_ij − r·L_ij + p_j = Σ_k P_jk        Q_ij − x·L_ij + q_j = Σ_k Q_jk
//!   U_i − U_jt = 2(r·P_ij + x·Q_ij) − (r² + x²)·L_ij
//!   L_ij·U_i = P_ij² + Q_ij²               U_jt = t²·U_j
//! ```
//!
//! are solved by fixed-point iteration from a flat start: the backward
//! sweep accumulates sending-end flows from the leaves, the forward sweep
//! propagates squared voltages from the slack bus. Lines have `t = 1`.

mod enumerate;

pub use enumerate::{enumerate_taps, grid_point, grid_size, EnumerationResult, EnumerationSettings, GridPoint, GridStatus};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::NetworkCase;
use crate::scalar::Real;

/// Integer tap position per transformer, in case transformer order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TapAssignment(pub Vec<u32>);

impl TapAssignment {
    pub fn check<T: Real>(&self, case: &NetworkCase<T>) -> Result<()> {
        let transformers = case.transformers();
        if self.0.len() != transformers.len() {
            return Err(Error::TapRange(format!(
                "{} tap positions given for {} transformers",
                self.0.len(),
                transformers.len()
            )));
        }
        for (pos, (&t, &k)) in self.0.iter().zip(&transformers).enumerate() {
            let tc = case.branches()[k].tap.as_ref().unwrap();
            if t > tc.k_taps {
                return Err(Error::TapRange(format!(
                    "transformer {pos} ({}) tap {t} exceeds K = {}",
                    case.branch_label(k),
                    tc.k_taps
                )));
            }
        }
        Ok(())
    }

    /// Per-branch turns ratio (1 for lines).
    pub fn branch_ratios<T: Real>(&self, case: &NetworkCase<T>) -> Result<Vec<T>> {
        self.check(case)?;
        let mut ratios = vec![T::one(); case.branches().len()];
        for (&t, &k) in self.0.iter().zip(&case.transformers()) {
            ratios[k] = T::from_ratio(&case.branches()[k].tap.as_ref().unwrap().ratio(t)?);
        }
        Ok(ratios)
    }
}

impl std::fmt::Display for TapAssignment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(u32::to_string).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerFlowSettings<T> {
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Real> Default for PowerFlowSettings<T> {
    fn default() -> Self {
        PowerFlowSettings { tol: T::lit(1e-10), max_iter: 100 }
    }
}

/// Generator outputs (p.u.) for the oracle. Generators at the slack bus
/// are ignored: the slack balances the network.
#[derive(Clone, Debug, PartialEq)]
pub struct Dispatch<T> {
    pub p: Vec<T>,
    pub q: Vec<T>,
}

impl<T: Real> Dispatch<T> {
    /// Fixed-output generators at their value; others at `p_max` with `q`
    /// clamped to zero.
    pub fn default_for(case_pu: &NetworkCase<T>) -> Self {
        let (mut p, mut q) = (Vec::new(), Vec::new());
        for g in case_pu.generators() {
            p.push(g.p_max);
            q.push(T::zero().max(g.q_min).min(g.q_max));
        }
        Dispatch { p, q }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PowerFlowSolution<T> {
    /// Squared voltage magnitude per bus (p.u.²).
    pub u: Vec<T>,
    /// Squared current magnitude per branch (p.u.²).
    pub l: Vec<T>,
    pub p_flow: Vec<T>,
    pub q_flow: Vec<T>,
    /// Per-branch turns ratio used (1 for lines).
    pub ratios: Vec<T>,
    pub losses_kw: T,
    pub converged: bool,
    pub iterations: usize,
    /// Largest mismatch of the branch flow equations (p.u.).
    pub residual: T,
}

impl<T: Real> PowerFlowSolution<T> {
    pub fn voltages(&self) -> Vec<T> {
        self.u.iter().map(|u| u.sqrt()).collect()
    }

    /// Worst squared-voltage bound violation (≤ 0 when every bus is inside).
    pub fn voltage_violation(&self, case: &NetworkCase<T>) -> T {
        let mut worst = T::neg_infinity();
        for (b, &u) in case.buses().iter().zip(&self.u) {
            worst = worst.max(b.v_min * b.v_min - u).max(u - b.v_max * b.v_max);
        }
        worst
    }
}

/// Solves the radial power flow with the default generator dispatch.
pub fn solve_powerflow<T: Real>(
    case: &NetworkCase<T>,
    taps: &TapAssignment,
    settings: &PowerFlowSettings<T>,
) -> Result<PowerFlowSolution<T>> {
    let pu = case.to_per_unit()?;
    let dispatch = Dispatch::default_for(&pu);
    solve_powerflow_with_dispatch(&pu, taps, &dispatch, settings)
}

pub fn solve_powerflow_with_dispatch<T: Real>(
    case: &NetworkCase<T>,
    taps: &TapAssignment,
    dispatch: &Dispatch<T>,
    settings: &PowerFlowSettings<T>,
) -> Result<PowerFlowSolution<T>> {
    let pu = case.to_per_unit()?;
    let ratios = taps.branch_ratios(&pu)?;
    if dispatch.p.len() != pu.generators().len() || dispatch.q.len() != pu.generators().len() {
        return Err(Error::Validation("dispatch length does not match generators".into()));
    }
    let (p_net, q_net) = net_injections(&pu, dispatch);
    let topo = pu.topology();
    let nb = pu.buses().len();
    let nl = pu.branches().len();
    let u_slack = pu.buses()[topo.root].v_set * pu.buses()[topo.root].v_set;

    let mut u = vec![u_slack; nb];
    let mut l = vec![T::zero(); nl];
    let mut p = vec![T::zero(); nl];
    let mut q = vec![T::zero(); nl];

    let mut iterations = 0;
    let mut converged = false;
    let mut change = T::infinity();
    while iterations < settings.max_iter {
        iterations += 1;
        // backward sweep
        let mut l_change = T::zero();
        for j in topo.leaves_to_root() {
            let Some(k) = topo.parent_branch[j] else { continue };
            let br = &pu.branches()[k];
            let (mut pk, mut qk) = (-p_net[j], -q_net[j]);
            for &c in &topo.children[j] {
                pk += p[c];
                qk += q[c];
            }
            p[k] = pk + br.r * l[k];
            q[k] = qk + br.x * l[k];
            let l_new = (p[k] * p[k] + q[k] * q[k]) / u[br.from];
            l_change = l_change.max((l_new - l[k]).abs());
            l[k] = l_new;
        }
        // forward sweep
        let mut u_change = T::zero();
        for &j in &topo.order {
            let Some(k) = topo.parent_branch[j] else { continue };
            let br = &pu.branches()[k];
            let z2 = br.r * br.r + br.x * br.x;
            let ujt = u[br.from] - T::lit(2.0) * (br.r * p[k] + br.x * q[k]) + z2 * l[k];
            if !(ujt > T::zero()) {
                return Err(Error::VoltageCollapse { bus: pu.buses()[j].id });
            }
            let u_new = ujt / (ratios[k] * ratios[k]);
            u_change = u_change.max((u_new - u[j]).abs());
            u[j] = u_new;
        }
        change = u_change.max(l_change);
        if change <= settings.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence { iterations, residual: change.as_f64() });
    }

    let losses: T = pu.branches().iter().zip(&l).map(|(br, &lk)| br.r * lk).sum();
    let mut sol = PowerFlowSolution {
        u,
        l,
        p_flow: p,
        q_flow: q,
        ratios,
        losses_kw: losses * pu.s_base_kw(),
        converged,
        iterations,
        residual: T::zero(),
    };
    sol.residual = branch_flow_residual(&pu, dispatch, &sol);
    Ok(sol)
}

/// Net injection (generation − load) per bus in p.u.; zero at the slack.
pub fn net_injections<T: Real>(case_pu: &NetworkCase<T>, dispatch: &Dispatch<T>) -> (Vec<T>, Vec<T>) {
    let mut p: Vec<T> = case_pu.buses().iter().map(|b| -b.p_load).collect();
    let mut q: Vec<T> = case_pu.buses().iter().map(|b| -b.q_load).collect();
    for (g, gen) in case_pu.generators().iter().enumerate() {
        p[gen.bus] += dispatch.p[g];
        q[gen.bus] += dispatch.q[g];
    }
    let root = case_pu.slack();
    p[root] = T::zero();
    q[root] = T::zero();
    (p, q)
}

/// Largest mismatch of balance, voltage-drop and current equations.
pub fn branch_flow_residual<T: Real>(
    case_pu: &NetworkCase<T>,
    dispatch: &Dispatch<T>,
    sol: &PowerFlowSolution<T>,
) -> T {
    let (p_net, q_net) = net_injections(case_pu, dispatch);
    let topo = case_pu.topology();
    let mut worst = T::zero();
    for (k, br) in case_pu.branches().iter().enumerate() {
        let j = br.to;
        let (mut pd, mut qd) = (T::zero(), T::zero());
        for &c in &topo.children[j] {
            pd += sol.p_flow[c];
            qd += sol.q_flow[c];
        }
        let bal_p = sol.p_flow[k] - br.r * sol.l[k] + p_net[j] - pd;
        let bal_q = sol.q_flow[k] - br.x * sol.l[k] + q_net[j] - qd;
        let z2 = br.r * br.r + br.x * br.x;
        let t2 = sol.ratios[k] * sol.ratios[k];
        let drop = sol.u[br.from] - t2 * sol.u[j]
            - (T::lit(2.0) * (br.r * sol.p_flow[k] + br.x * sol.q_flow[k]) - z2 * sol.l[k]);
        let current = sol.l[k] * sol.u[br.from]
            - (sol.p_flow[k] * sol.p_flow[k] + sol.q_flow[k] * sol.q_flow[k]);
        worst = worst.max(bal_p.abs()).max(bal_q.abs()).max(drop.abs()).max(current.abs());
    }
    worst
}
