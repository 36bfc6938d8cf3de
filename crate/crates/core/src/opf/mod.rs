//! Assembly of the tap-optimizing OPF on the branch flow model.
//!
//! Variables per bus: squared voltage `U`. Per branch: sending-end flows
//! `P`, `Q` and squared current `L`. Per dispatchable generator: `pg`,
//! `qg`. Transformers add the tap encoding of [`crate::linearization`].
//!
//! ```text
//!   min  Σ r·L
//!   P_ij − r·L_ij + pg_j − p_j = Σ_k P_jk        (same for Q with x)
//!   U_i − U_j(t) = 2(r·P_ij + x·Q_ij) − (r² + x²)·L_ij
//!   L_ij·U_i ≥ P_ij² + Q_ij²
//! ```
//!
//! where `U_j(t)` is `U_j` for a line and the encoded `U_jt` for a
//! transformer. The slack bus has a fixed voltage and no balance rows.

mod solve;

pub use solve::{solve_opf, SolveOutcome};

use crate::error::{Error, Result};
use crate::linearization::{
    encode_tap, encode_tap_approximate, ApproxVariant, EncodingKind, LinearizationConfig, TapEncoding,
};
use crate::model::{Element, MixedIntegerConicProgram, VarId};
use crate::network::NetworkCase;
use crate::powerflow::{PowerFlowSolution, TapAssignment};
use crate::scalar::Real;

/// How `U_jt` is tied to the tap position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TapModel {
    /// `U_jt = t²·U_j` through binary expansion and big-M products.
    #[default]
    Exact,
    /// The first-order baseline `U_jt ≈ t_min²·U_j + c·Δt·T·U_j`.
    Approximate(ApproxVariant),
}

#[derive(Clone, Debug, PartialEq)]
pub struct OpfConfig<T> {
    pub linearization: LinearizationConfig<T>,
    pub tap_model: TapModel,
    /// Squared-current cap (p.u.²) for branches without a rating.
    pub default_current_cap: T,
}

impl<T: Real> Default for OpfConfig<T> {
    fn default() -> Self {
        OpfConfig {
            linearization: LinearizationConfig::default(),
            tap_model: TapModel::Exact,
            default_current_cap: T::lit(10.0),
        }
    }
}

/// Where each network quantity lives in the program.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout<T> {
    pub u: Vec<VarId>,
    pub p: Vec<VarId>,
    pub q: Vec<VarId>,
    pub l: Vec<VarId>,
    /// `(pg, qg)` per generator; `None` for generators at the slack bus.
    pub gen: Vec<Option<(VarId, VarId)>>,
    /// One per transformer, in case transformer order.
    pub encodings: Vec<TapEncoding<T>>,
    /// Equality row of each branch's voltage drop.
    pub drop_rows: Vec<usize>,
    /// `(P row, Q row)` per non-slack bus, `None` at the slack.
    pub balance_rows: Vec<Option<(usize, usize)>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OpfModel<T> {
    pub program: MixedIntegerConicProgram<T>,
    pub layout: Layout<T>,
    /// Per-unit copy of the case the model was built from.
    pub case: NetworkCase<T>,
    pub tap_model: TapModel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OpfStatus {
    Optimal,
    Infeasible,
    /// Stopped at the node limit with an incumbent; see `bound_gap`.
    GapLimit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OpfSolution<T> {
    pub taps: TapAssignment,
    pub ratios: Vec<T>,
    /// Squared voltage per bus (p.u.²).
    pub u: Vec<T>,
    pub p: Vec<T>,
    pub q: Vec<T>,
    pub l: Vec<T>,
    pub pg: Vec<T>,
    pub qg: Vec<T>,
    /// Objective `Σ r·L` in p.u.
    pub objective: T,
    pub losses_kw: T,
    /// `L·U_i − P² − Q²` per branch; zero when the relaxation is exact.
    pub cone_gaps: Vec<T>,
    /// `|U_jt − t²·U_j|` per transformer at the decoded ratio.
    pub bigm_gaps: Vec<T>,
    pub status: OpfStatus,
    /// Relative distance between objective and best bound.
    pub bound_gap: T,
}

impl<T: Real> OpfSolution<T> {
    pub fn max_cone_gap(&self) -> T {
        self.cone_gaps.iter().fold(T::zero(), |m, g| m.max(g.abs()))
    }

    pub fn max_bigm_gap(&self) -> T {
        self.bigm_gaps.iter().fold(T::zero(), |m, g| m.max(*g))
    }
}

fn finite<T: Real>(v: T, what: &str) -> Result<T> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Model(format!("{what} must be finite, got {v}")))
    }
}

/// Builds the mixed-integer conic program for `case`.
pub fn build_opf<T: Real>(case: &NetworkCase<T>, config: &OpfConfig<T>) -> Result<OpfModel<T>> {
    let pu = case.to_per_unit()?;
    if !(config.default_current_cap > T::zero()) {
        return Err(Error::Model("default current cap must be positive".into()));
    }
    let topo = pu.topology().clone();
    let slack = topo.root;
    let buses = pu.buses();
    let branches = pu.branches();
    let mut prog = MixedIntegerConicProgram::new();

    let mut u = Vec::with_capacity(buses.len());
    for (i, b) in buses.iter().enumerate() {
        let name = format!("U[{}]", b.id);
        let id = if i == slack {
            let v = finite(b.v_set, "slack voltage")?;
            prog.add_var(name, Some(v * v), Some(v * v), Element::Bus(i))
        } else {
            let lo = finite(b.v_min, "v_min")?;
            let hi = finite(b.v_max, "v_max")?;
            prog.add_var(name, Some(lo * lo), Some(hi * hi), Element::Bus(i))
        };
        u.push(id);
    }
    let u_hi = |prog: &MixedIntegerConicProgram<T>, i: usize| prog.var(u[i]).ub.unwrap();

    let (mut p, mut q, mut l) = (Vec::new(), Vec::new(), Vec::new());
    for (k, br) in branches.iter().enumerate() {
        let label = pu.branch_label(k);
        let cap = match br.i_max {
            Some(i) => finite(i * i, "current rating")?,
            None => config.default_current_cap,
        };
        let flow = (cap * u_hi(&prog, br.from)).sqrt();
        p.push(prog.add_var(format!("P[{label}]"), Some(-flow), Some(flow), Element::Branch(k)));
        q.push(prog.add_var(format!("Q[{label}]"), Some(-flow), Some(flow), Element::Branch(k)));
        l.push(prog.add_var(format!("L[{label}]"), Some(T::zero()), Some(cap), Element::Branch(k)));
    }

    let mut gen = Vec::new();
    for (g, gd) in pu.generators().iter().enumerate() {
        if gd.bus == slack {
            gen.push(None);
            continue;
        }
        let id = buses[gd.bus].id;
        let pg = prog.add_var(format!("pg[{g}@{id}]"), Some(gd.p_min), Some(gd.p_max), Element::Generator(g));
        let qg = prog.add_var(format!("qg[{g}@{id}]"), Some(gd.q_min), Some(gd.q_max), Element::Generator(g));
        gen.push(Some((pg, qg)));
    }

    let mut balance_rows = vec![None; buses.len()];
    for j in 0..buses.len() {
        if j == slack {
            continue;
        }
        let k = topo.parent_branch[j].expect("non-slack bus has a parent branch");
        let br = &branches[k];
        let mut prow = vec![(p[k], T::one()), (l[k], -br.r)];
        let mut qrow = vec![(q[k], T::one()), (l[k], -br.x)];
        for &c in &topo.children[j] {
            prow.push((p[c], -T::one()));
            qrow.push((q[c], -T::one()));
        }
        for (g, gd) in pu.generators().iter().enumerate() {
            if gd.bus == j {
                let (pg, qg) = gen[g].unwrap();
                prow.push((pg, T::one()));
                qrow.push((qg, T::one()));
            }
        }
        let id = buses[j].id;
        let rp = prog.add_eq(prow, buses[j].p_load, format!("balP[{id}]"));
        let rq = prog.add_eq(qrow, buses[j].q_load, format!("balQ[{id}]"));
        balance_rows[j] = Some((rp, rq));
    }

    let mut encodings = Vec::new();
    let transformers = pu.transformers();
    let mut drop_rows = Vec::with_capacity(branches.len());
    for (k, br) in branches.iter().enumerate() {
        let label = pu.branch_label(k);
        let downstream = match &br.tap {
            None => u[br.to],
            Some(tap) => {
                let pos = transformers.iter().position(|&t| t == k).unwrap();
                let enc = match config.tap_model {
                    TapModel::Exact => encode_tap(&mut prog, pos, &label, tap, u[br.to], &config.linearization)?,
                    TapModel::Approximate(variant) => encode_tap_approximate(
                        &mut prog,
                        pos,
                        &label,
                        tap,
                        u[br.to],
                        &config.linearization,
                        variant,
                    )?,
                };
                let ujt = enc.ujt_var;
                encodings.push(enc);
                ujt
            }
        };
        let z2 = br.r * br.r + br.x * br.x;
        let two = T::lit(2.0);
        let row = vec![
            (u[br.from], T::one()),
            (downstream, -T::one()),
            (p[k], -two * br.r),
            (q[k], -two * br.x),
            (l[k], z2),
        ];
        drop_rows.push(prog.add_eq(row, T::zero(), format!("drop[{label}]")));
    }

    for (k, br) in branches.iter().enumerate() {
        prog.add_rotated_cone(l[k], u[br.from], vec![p[k], q[k]], format!("cur[{}]", pu.branch_label(k)));
        if br.r != T::zero() {
            prog.add_objective(l[k], br.r);
        }
    }

    prog.validate()?;
    Ok(OpfModel {
        program: prog,
        layout: Layout { u, p, q, l, gen, encodings, drop_rows, balance_rows },
        case: pu,
        tap_model: config.tap_model,
    })
}

impl<T: Real> OpfModel<T> {
    /// Copy of the model with every tap fixed to `taps` (canonical bits).
    pub fn fix_taps(&self, taps: &TapAssignment) -> Result<OpfModel<T>> {
        let mut out = self.clone();
        fix_taps(&mut out, taps)?;
        Ok(out)
    }

    /// Decodes a program point into network quantities.
    pub fn extract(&self, x: &[T], status: OpfStatus, bound_gap: T) -> Result<OpfSolution<T>> {
        extract_solution(self, x, status, bound_gap)
    }

    /// Program point built from an oracle power flow at `taps`, with the
    /// encoding auxiliaries set to their exact products.
    pub fn embed_powerflow(&self, pf: &PowerFlowSolution<T>, taps: &TapAssignment) -> Result<Vec<T>> {
        embed_powerflow(self, pf, taps)
    }
}

/// Fixes every tap bit to the canonical pattern of `taps`, leaving no free
/// binaries.
pub fn fix_taps<T: Real>(model: &mut OpfModel<T>, taps: &TapAssignment) -> Result<()> {
    taps.check(&model.case)?;
    for (enc, &t) in model.layout.encodings.iter().zip(&taps.0) {
        for (&b, bit) in enc.bit_vars.iter().zip(enc.canonical_bits(t)) {
            model.program.fix(b, T::from_int(bit as i64));
        }
    }
    Ok(())
}

const INTEGRALITY_TOL: f64 = 1e-6;

pub fn extract_solution<T: Real>(
    model: &OpfModel<T>,
    x: &[T],
    status: OpfStatus,
    bound_gap: T,
) -> Result<OpfSolution<T>> {
    if x.len() != model.program.num_vars() {
        return Err(Error::Model(format!(
            "point has {} entries, program has {} variables",
            x.len(),
            model.program.num_vars()
        )));
    }
    let lay = &model.layout;
    let case = &model.case;
    let get = |v: VarId| x[v.0];

    let mut taps = Vec::new();
    let mut tap_ratio = Vec::new();
    for enc in &lay.encodings {
        let mut bits = Vec::with_capacity(enc.bit_vars.len());
        for &b in &enc.bit_vars {
            let v = get(b);
            let rounded = v.round();
            if (v - rounded).abs() > T::lit(INTEGRALITY_TOL) || !(rounded == T::zero() || rounded == T::one()) {
                return Err(Error::Integrality { name: model.program.var(b).name.clone(), value: v.as_f64() });
            }
            bits.push(if rounded == T::one() { 1u8 } else { 0 });
        }
        let (tap, t) = enc.decode(&bits)?;
        taps.push(tap);
        tap_ratio.push(t);
    }

    let mut ratios = vec![T::one(); case.branches().len()];
    let transformers = case.transformers();
    for (&k, &t) in transformers.iter().zip(&tap_ratio) {
        ratios[k] = t;
    }

    let u: Vec<T> = lay.u.iter().map(|&v| get(v)).collect();
    let p: Vec<T> = lay.p.iter().map(|&v| get(v)).collect();
    let q: Vec<T> = lay.q.iter().map(|&v| get(v)).collect();
    let l: Vec<T> = lay.l.iter().map(|&v| get(v)).collect();
    let (mut pg, mut qg) = (Vec::new(), Vec::new());
    for vars in &lay.gen {
        match vars {
            Some((a, b)) => {
                pg.push(get(*a));
                qg.push(get(*b));
            }
            None => {
                pg.push(T::zero());
                qg.push(T::zero());
            }
        }
    }

    let cone_gaps = case
        .branches()
        .iter()
        .enumerate()
        .map(|(k, br)| l[k] * u[br.from] - p[k] * p[k] - q[k] * q[k])
        .collect();
    let bigm_gaps = lay
        .encodings
        .iter()
        .zip(&tap_ratio)
        .map(|(enc, &t)| (get(enc.ujt_var) - t * t * get(enc.u_var)).abs())
        .collect();
    let objective = model.program.objective_value(x);

    Ok(OpfSolution {
        taps: TapAssignment(taps),
        ratios,
        u,
        p,
        q,
        l,
        pg,
        qg,
        objective,
        losses_kw: objective * case.s_base_kw(),
        cone_gaps,
        bigm_gaps,
        status,
        bound_gap,
    })
}

pub fn embed_powerflow<T: Real>(
    model: &OpfModel<T>,
    pf: &PowerFlowSolution<T>,
    taps: &TapAssignment,
) -> Result<Vec<T>> {
    taps.check(&model.case)?;
    let lay = &model.layout;
    let mut x = vec![T::zero(); model.program.num_vars()];
    for (i, &v) in lay.u.iter().enumerate() {
        x[v.0] = pf.u[i];
    }
    for k in 0..lay.p.len() {
        x[lay.p[k].0] = pf.p_flow[k];
        x[lay.q[k].0] = pf.q_flow[k];
        x[lay.l[k].0] = pf.l[k];
    }
    let dispatch = crate::powerflow::Dispatch::default_for(&model.case);
    for (g, vars) in lay.gen.iter().enumerate() {
        if let Some((pg, qg)) = vars {
            x[pg.0] = dispatch.p[g];
            x[qg.0] = dispatch.q[g];
        }
    }
    for (enc, &tap) in lay.encodings.iter().zip(&taps.0) {
        let uj = x[enc.u_var.0];
        let bits = enc.canonical_bits(tap);
        let t = T::from_ratio(&enc.tap.ratio(tap)?);
        let mval = t * uj;
        for (n, &b) in bits.iter().enumerate() {
            let lam = T::from_int(b as i64);
            x[enc.bit_vars[n].0] = lam;
            x[enc.x_vars[n].0] = lam * uj;
            if let Some(&y) = enc.y_vars.get(n) {
                x[y.0] = lam * mval;
            }
        }
        if let Some(m) = enc.m_var {
            x[m.0] = mval;
        }
        x[enc.ujt_var.0] = match enc.kind {
            EncodingKind::Exact => t * t * uj,
            EncodingKind::Approximate(variant) => {
                crate::linearization::approximate_ujt(&enc.tap, tap, uj, variant)
            }
        };
    }
    Ok(x)
}
