//! Radial distribution network model.
//!
//! A [`NetworkCase`] is immutable once constructed: [`NetworkCase::new`]
//! validates cross references, checks radiality and re-orients every
//! branch so that `from` is the parent and `to` is the child.

mod case_file;
mod per_unit;
mod topology;

pub use case_file::{load_case, parse_case, CaseFile};
pub use topology::{validate_radial, Topology};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{Exact, Field, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Load,
}

/// Bus data. Loads are kW/kvar in physical units, p.u. after conversion.
#[derive(Clone, Debug, PartialEq)]
pub struct Bus<T> {
    pub id: u32,
    pub kind: BusKind,
    pub p_load: T,
    pub q_load: T,
    pub v_min: T,
    pub v_max: T,
    /// Voltage magnitude setpoint, only meaningful at the slack bus.
    pub v_set: T,
}

/// Discrete on-load tap changer. Ratios are exact decimals.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TapChanger {
    pub t_min: Exact,
    pub t_max: Exact,
    pub k_taps: u32,
}

impl TapChanger {
    pub fn new(t_min: Exact, t_max: Exact, k_taps: u32) -> Result<Self> {
        let tc = TapChanger { t_min, t_max, k_taps };
        tc.check()?;
        Ok(tc)
    }

    fn check(&self) -> Result<()> {
        if self.t_min <= Exact::from_integer(0) || self.t_min >= self.t_max {
            return Err(Error::Validation(format!(
                "tap changer needs 0 < t_min < t_max, got [{}, {}]",
                self.t_min, self.t_max
            )));
        }
        if self.k_taps == 0 {
            return Err(Error::Validation("tap changer needs k_taps >= 1".into()));
        }
        Ok(())
    }

    /// Ratio change per tap, `(t_max - t_min) / K`.
    pub fn delta_t(&self) -> Exact {
        (self.t_max - self.t_min) / Exact::from_integer(self.k_taps as i64)
    }

    /// Turns ratio at tap position `tap`.
    pub fn ratio(&self, tap: u32) -> Result<Exact> {
        if tap > self.k_taps {
            return Err(Error::TapRange(format!("tap {tap} exceeds K = {}", self.k_taps)));
        }
        Ok(self.t_min + self.delta_t() * Exact::from_integer(tap as i64))
    }

    /// Same ratio range re-discretized with step `dt`; `dt` must divide the range.
    pub fn with_step(&self, dt: Exact) -> Result<Self> {
        if dt <= Exact::from_integer(0) {
            return Err(Error::Validation(format!("tap step must be positive, got {dt}")));
        }
        let k = (self.t_max - self.t_min) / dt;
        if !k.is_integer() {
            return Err(Error::Validation(format!(
                "step {dt} does not divide ratio range [{}, {}]",
                self.t_min, self.t_max
            )));
        }
        let k_taps = u32::try_from(k.to_integer())
            .map_err(|_| Error::Validation(format!("tap count {k} out of range")))?;
        TapChanger::new(self.t_min, self.t_max, k_taps)
    }

    pub fn with_taps(&self, k_taps: u32) -> Result<Self> {
        TapChanger::new(self.t_min, self.t_max, k_taps)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchKind {
    Line,
    Transformer,
}

/// Branch between two buses, stored by bus index.
#[derive(Clone, Debug, PartialEq)]
pub struct Branch<T> {
    pub from: usize,
    pub to: usize,
    pub r: T,
    pub x: T,
    pub i_max: Option<T>,
    pub tap: Option<TapChanger>,
}

impl<T> Branch<T> {
    pub fn kind(&self) -> BranchKind {
        if self.tap.is_some() {
            BranchKind::Transformer
        } else {
            BranchKind::Line
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generator<T> {
    pub bus: usize,
    pub p_min: T,
    pub p_max: T,
    pub q_min: T,
    pub q_max: T,
}

impl<T: Field> Generator<T> {
    pub fn is_fixed(&self) -> bool {
        self.p_min == self.p_max && self.q_min == self.q_max
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Units {
    /// kW, kvar, ohm, A.
    Physical,
    PerUnit,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Base<T> {
    pub mva: T,
    pub kv: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkCase<T> {
    name: String,
    base: Base<T>,
    units: Units,
    buses: Vec<Bus<T>>,
    branches: Vec<Branch<T>>,
    generators: Vec<Generator<T>>,
    topology: Topology,
}

impl<T: Real> NetworkCase<T> {
    /// Validates and orients a case. `branches` may list either orientation.
    pub fn new(
        name: impl Into<String>,
        base: Base<T>,
        units: Units,
        buses: Vec<Bus<T>>,
        mut branches: Vec<Branch<T>>,
        generators: Vec<Generator<T>>,
    ) -> Result<Self> {
        if !(base.mva > T::zero() && base.kv > T::zero()) {
            return Err(Error::InvalidBase { mva: base.mva.as_f64(), kv: base.kv.as_f64() });
        }
        validate_elements(&buses, &branches, &generators)?;
        let topology = topology::build(&buses, &branches)?;
        for (k, br) in branches.iter_mut().enumerate() {
            if topology.parent_branch[br.to] != Some(k) {
                std::mem::swap(&mut br.from, &mut br.to);
            }
            debug_assert_eq!(topology.parent_branch[br.to], Some(k));
        }
        Ok(NetworkCase { name: name.into(), base, units, buses, branches, generators, topology })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn base(&self) -> Base<T> {
        self.base
    }

    pub fn units(&self) -> Units {
        self.units
    }

    pub fn buses(&self) -> &[Bus<T>] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch<T>] {
        &self.branches
    }

    pub fn generators(&self) -> &[Generator<T>] {
        &self.generators
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn slack(&self) -> usize {
        self.topology.root
    }

    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    /// Index of the branch joining buses `a` and `b` (by id), either orientation.
    pub fn branch_between(&self, a: u32, b: u32) -> Option<usize> {
        let (ia, ib) = (self.bus_index(a)?, self.bus_index(b)?);
        self.branches
            .iter()
            .position(|br| (br.from == ia && br.to == ib) || (br.from == ib && br.to == ia))
    }

    /// Branch indices of the transformer set, in branch order. Tap
    /// assignments are indexed by position in this list.
    pub fn transformers(&self) -> Vec<usize> {
        self.branches
            .iter()
            .enumerate()
            .filter(|(_, br)| br.tap.is_some())
            .map(|(k, _)| k)
            .collect()
    }

    pub fn tap_changer(&self, transformer: usize) -> &TapChanger {
        let k = self.transformers()[transformer];
        self.branches[k].tap.as_ref().unwrap()
    }

    /// Label like `"3-23"` using bus ids, parent first.
    pub fn branch_label(&self, k: usize) -> String {
        let br = &self.branches[k];
        format!("{}-{}", self.buses[br.from].id, self.buses[br.to].id)
    }

    /// Copy with every tap changer re-discretized to step `dt`.
    pub fn with_uniform_step(&self, dt: Exact) -> Result<Self> {
        self.map_taps(|tc| tc.with_step(dt))
    }

    /// Copy with every tap changer set to `k_taps` positions.
    pub fn with_uniform_taps(&self, k_taps: u32) -> Result<Self> {
        self.map_taps(|tc| tc.with_taps(k_taps))
    }

    fn map_taps(&self, f: impl Fn(&TapChanger) -> Result<TapChanger>) -> Result<Self> {
        let mut out = self.clone();
        for br in &mut out.branches {
            if let Some(tc) = &br.tap {
                br.tap = Some(f(tc)?);
            }
        }
        Ok(out)
    }

    /// Copy with replaced generator list (same validation rules).
    pub fn with_generators(&self, generators: Vec<Generator<T>>) -> Result<Self> {
        validate_elements(&self.buses, &self.branches, &generators)?;
        let mut out = self.clone();
        out.generators = generators;
        Ok(out)
    }

    /// Copy with voltage bounds replaced on every non-slack bus.
    pub fn with_voltage_bounds(&self, v_min: T, v_max: T) -> Result<Self> {
        let mut out = self.clone();
        for bus in out.buses.iter_mut().filter(|b| b.kind == BusKind::Load) {
            bus.v_min = v_min;
            bus.v_max = v_max;
        }
        validate_elements(&out.buses, &out.branches, &out.generators)?;
        Ok(out)
    }

    /// Copy with every load scaled by `factor`.
    pub fn with_load_scale(&self, factor: T) -> Self {
        let mut out = self.clone();
        for bus in &mut out.buses {
            bus.p_load *= factor;
            bus.q_load *= factor;
        }
        out
    }
}

fn validate_elements<T: Real>(
    buses: &[Bus<T>],
    branches: &[Branch<T>],
    generators: &[Generator<T>],
) -> Result<()> {
    if buses.is_empty() {
        return Err(Error::Validation("case has no buses".into()));
    }
    let mut ids: Vec<u32> = buses.iter().map(|b| b.id).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Validation(format!("duplicate bus id {}", w[0])));
    }
    for b in buses {
        let finite = [b.p_load, b.q_load, b.v_min, b.v_max, b.v_set].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Validation(format!("bus {} has non-finite data", b.id)));
        }
        if !(b.v_min > T::zero() && b.v_min < b.v_max) {
            return Err(Error::Validation(format!(
                "bus {} needs 0 < v_min < v_max, got [{}, {}]",
                b.id, b.v_min, b.v_max
            )));
        }
        if b.v_set <= T::zero() {
            return Err(Error::Validation(format!("bus {} has non-positive setpoint", b.id)));
        }
    }
    let n = buses.len();
    let mut seen = std::collections::HashSet::new();
    for br in branches {
        if br.from >= n || br.to >= n {
            return Err(Error::Validation("branch references an unknown bus".into()));
        }
        let (a, b) = (buses[br.from].id, buses[br.to].id);
        if br.from == br.to {
            return Err(Error::Validation(format!("branch {a}-{b} is a self loop")));
        }
        if !seen.insert((a.min(b), a.max(b))) {
            return Err(Error::Validation(format!("duplicate branch {a}-{b}")));
        }
        if !(br.r.is_finite() && br.x.is_finite()) || br.r < T::zero() || br.x < T::zero() {
            return Err(Error::Validation(format!("branch {a}-{b} needs finite r, x >= 0")));
        }
        if br.tap.is_none() && br.r == T::zero() && br.x == T::zero() {
            return Err(Error::Validation(format!("line {a}-{b} has zero impedance")));
        }
        if let Some(i) = br.i_max {
            if !(i > T::zero() && i.is_finite()) {
                return Err(Error::Validation(format!("branch {a}-{b} has invalid current limit")));
            }
        }
        if let Some(tc) = &br.tap {
            tc.check()?;
        }
    }
    for g in generators {
        if g.bus >= n {
            return Err(Error::Validation("generator references an unknown bus".into()));
        }
        if !(g.p_min <= g.p_max && g.q_min <= g.q_max) {
            return Err(Error::Validation(format!(
                "generator at bus {} has inverted limits",
                buses[g.bus].id
            )));
        }
    }
    Ok(())
}
