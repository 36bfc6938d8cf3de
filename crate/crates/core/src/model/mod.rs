//! Solver-independent mixed-integer conic program.
//!
//! Linear rows are `Σ a·x = rhs` or `Σ a·x ≤ rhs`; cones are rotated
//! second-order cones `l·u ≥ Σ rest²` with `l, u ≥ 0`. Every variable may
//! carry bounds and a binary mark.

mod dump;

pub use dump::dump_program;

use crate::error::{Error, Result};
use crate::scalar::{Field, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

/// Network element a variable belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Element {
    Bus(usize),
    Branch(usize),
    Generator(usize),
    /// Position in the case transformer list.
    Transformer(usize),
    None,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variable<T> {
    pub name: String,
    pub lb: Option<T>,
    pub ub: Option<T>,
    pub binary: bool,
    pub element: Element,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearRow<T> {
    pub terms: Vec<(VarId, T)>,
    pub rhs: T,
    pub label: String,
}

impl<T: Field> LinearRow<T> {
    /// Left-hand side value at `x`.
    pub fn lhs(&self, x: &[T]) -> T {
        self.terms
            .iter()
            .fold(T::zero(), |acc, (v, a)| acc + a.clone() * x[v.0].clone())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RotatedCone {
    pub l: VarId,
    pub u: VarId,
    pub rest: Vec<VarId>,
    pub label: String,
}

/// Binary-expanded integer: `value = Σ 2^n · bits[n]`, `0 ≤ value ≤ k_taps`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TapGroup {
    pub transformer: usize,
    pub bits: Vec<VarId>,
    pub k_taps: u32,
}

impl TapGroup {
    /// Standard binary representation of `tap`, least significant bit first.
    pub fn canonical_bits(&self, tap: u32) -> Vec<u8> {
        (0..self.bits.len()).map(|n| ((tap >> n) & 1) as u8).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct MixedIntegerConicProgram<T> {
    variables: Vec<Variable<T>>,
    objective: Vec<(VarId, T)>,
    eq_rows: Vec<LinearRow<T>>,
    ineq_rows: Vec<LinearRow<T>>,
    cones: Vec<RotatedCone>,
    tap_groups: Vec<TapGroup>,
}

impl<T: Field> MixedIntegerConicProgram<T> {
    pub fn new() -> Self {
        MixedIntegerConicProgram {
            variables: Vec::new(),
            objective: Vec::new(),
            eq_rows: Vec::new(),
            ineq_rows: Vec::new(),
            cones: Vec::new(),
            tap_groups: Vec::new(),
        }
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        lb: Option<T>,
        ub: Option<T>,
        element: Element,
    ) -> VarId {
        self.variables.push(Variable { name: name.into(), lb, ub, binary: false, element });
        VarId(self.variables.len() - 1)
    }

    pub fn add_binary(&mut self, name: impl Into<String>, element: Element) -> VarId {
        self.variables.push(Variable {
            name: name.into(),
            lb: Some(T::zero()),
            ub: Some(T::one()),
            binary: true,
            element,
        });
        VarId(self.variables.len() - 1)
    }

    pub fn add_eq(&mut self, terms: Vec<(VarId, T)>, rhs: T, label: impl Into<String>) -> usize {
        self.eq_rows.push(LinearRow { terms, rhs, label: label.into() });
        self.eq_rows.len() - 1
    }

    pub fn add_le(&mut self, terms: Vec<(VarId, T)>, rhs: T, label: impl Into<String>) -> usize {
        self.ineq_rows.push(LinearRow { terms, rhs, label: label.into() });
        self.ineq_rows.len() - 1
    }

    pub fn add_rotated_cone(
        &mut self,
        l: VarId,
        u: VarId,
        rest: Vec<VarId>,
        label: impl Into<String>,
    ) -> usize {
        self.cones.push(RotatedCone { l, u, rest, label: label.into() });
        self.cones.len() - 1
    }

    pub fn add_objective(&mut self, var: VarId, coef: T) {
        self.objective.push((var, coef));
    }

    pub fn add_tap_group(&mut self, group: TapGroup) {
        self.tap_groups.push(group);
    }

    pub fn variables(&self) -> &[Variable<T>] {
        &self.variables
    }

    pub fn var(&self, id: VarId) -> &Variable<T> {
        &self.variables[id.0]
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn objective(&self) -> &[(VarId, T)] {
        &self.objective
    }

    pub fn eq_rows(&self) -> &[LinearRow<T>] {
        &self.eq_rows
    }

    pub fn ineq_rows(&self) -> &[LinearRow<T>] {
        &self.ineq_rows
    }

    pub fn cones(&self) -> &[RotatedCone] {
        &self.cones
    }

    pub fn tap_groups(&self) -> &[TapGroup] {
        &self.tap_groups
    }

    pub fn binaries(&self) -> Vec<VarId> {
        (0..self.variables.len()).filter(|&k| self.variables[k].binary).map(VarId).collect()
    }

    pub fn num_binaries(&self) -> usize {
        self.variables.iter().filter(|v| v.binary).count()
    }

    /// Binaries whose bounds do not fix them.
    pub fn free_binaries(&self) -> Vec<VarId> {
        self.binaries()
            .into_iter()
            .filter(|v| {
                let var = self.var(*v);
                var.lb != var.ub
            })
            .collect()
    }

    pub fn bounds(&self) -> Vec<(Option<T>, Option<T>)> {
        self.variables.iter().map(|v| (v.lb.clone(), v.ub.clone())).collect()
    }

    pub fn set_bounds(&mut self, id: VarId, lb: Option<T>, ub: Option<T>) {
        let v = &mut self.variables[id.0];
        v.lb = lb;
        v.ub = ub;
    }

    pub fn fix(&mut self, id: VarId, value: T) {
        self.set_bounds(id, Some(value.clone()), Some(value));
    }

    pub fn find_var(&self, name: &str) -> Option<VarId> {
        self.variables.iter().position(|v| v.name == name).map(VarId)
    }

    pub fn objective_value(&self, x: &[T]) -> T {
        self.objective
            .iter()
            .fold(T::zero(), |acc, (v, c)| acc + c.clone() * x[v.0].clone())
    }

    /// Checks that every referenced variable exists and that binaries are
    /// boxed within `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        let n = self.variables.len();
        let check = |v: VarId, what: &str| {
            if v.0 >= n {
                Err(Error::Model(format!("{what} references missing variable {}", v.0)))
            } else {
                Ok(())
            }
        };
        for (v, _) in &self.objective {
            check(*v, "objective")?;
        }
        for row in self.eq_rows.iter().chain(&self.ineq_rows) {
            for (v, _) in &row.terms {
                check(*v, &row.label)?;
            }
        }
        for cone in &self.cones {
            for v in [cone.l, cone.u].iter().chain(&cone.rest) {
                check(*v, &cone.label)?;
            }
        }
        for group in &self.tap_groups {
            for v in &group.bits {
                check(*v, "tap group")?;
                if !self.var(*v).binary {
                    return Err(Error::Model(format!("tap bit {} is not binary", self.var(*v).name)));
                }
            }
        }
        for var in &self.variables {
            if var.binary {
                let (zero, one) = (T::zero(), T::one());
                let ok = matches!((&var.lb, &var.ub), (Some(l), Some(u)) if *l >= zero && *u <= one);
                if !ok {
                    return Err(Error::Model(format!("binary {} is not boxed in [0, 1]", var.name)));
                }
            }
        }
        Ok(())
    }
}

impl<T: Real> MixedIntegerConicProgram<T> {
    /// Worst violation of rows, cones and bounds at `x` (absolute).
    pub fn max_violation(&self, x: &[T]) -> T {
        let mut worst = T::zero();
        for row in &self.eq_rows {
            worst = worst.max((row.lhs(x) - row.rhs).abs());
        }
        for row in &self.ineq_rows {
            worst = worst.max(row.lhs(x) - row.rhs);
        }
        for cone in &self.cones {
            let (l, u) = (x[cone.l.0], x[cone.u.0]);
            let rest: T = cone.rest.iter().map(|v| x[v.0] * x[v.0]).sum();
            worst = worst.max(rest - l * u).max(-l).max(-u);
        }
        for (k, var) in self.variables.iter().enumerate() {
            if let Some(lb) = var.lb {
                worst = worst.max(lb - x[k]);
            }
            if let Some(ub) = var.ub {
                worst = worst.max(x[k] - ub);
            }
        }
        worst
    }
}
