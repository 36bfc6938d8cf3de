use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};
use tapflow::linearization::{audit, ApproxVariant};
use tapflow::model::dump_program;
use tapflow::network::load_case;
use tapflow::opf::{build_opf, solve_opf, OpfConfig, OpfStatus, TapModel};
use tapflow::powerflow::{enumerate_taps, solve_powerflow, GridStatus, PowerFlowSolution, TapAssignment};
use tapflow::scenario::{diagnose, standard_battery, run_scenarios, TapGrid};
use tapflow::{Case, Error, Model, Result, Solution};

use crate::config::Resolved;
use crate::table::Table;

/// Process exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    Infeasible = 1,
    Input = 2,
    Solver = 3,
}

pub fn exit_for(e: &Error) -> Exit {
    match e {
        Error::Infeasible | Error::NoFeasibleAssignment => Exit::Infeasible,
        Error::Solver(_) | Error::NonConvergence { .. } | Error::VoltageCollapse { .. } | Error::Integrality { .. } => {
            Exit::Solver
        }
        _ => Exit::Input,
    }
}

/// Where a report goes: a table or JSON on stdout, plus both forms under
/// `out` when given.
pub struct Sink {
    pub json: bool,
    pub out: Option<PathBuf>,
}

impl Sink {
    fn emit(&self, stem: &str, doc: &Value, table: &str) -> Result<()> {
        let text = serde_json::to_string_pretty(doc)? + "\n";
        if self.json {
            print!("{text}");
        } else {
            print!("{table}");
        }
        if let Some(dir) = &self.out {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join(format!("{stem}.json")), &text)?;
            std::fs::write(dir.join(format!("{stem}.txt")), table)?;
        }
        Ok(())
    }
}

/// How the tap grid of the case is overridden.
#[derive(Clone, Debug, Default)]
pub struct GridChoice {
    pub dt: Option<String>,
    pub k: Option<u32>,
}

impl GridChoice {
    fn grid(&self) -> Result<TapGrid> {
        match (&self.dt, self.k) {
            (Some(dt), _) => TapGrid::step(dt),
            (None, Some(k)) => Ok(TapGrid::Taps(k)),
            (None, None) => Ok(TapGrid::Native),
        }
    }

    fn load(&self, path: &Path) -> Result<Case> {
        let case = load_case::<f64>(path)?;
        self.grid()?.apply(&case)
    }
}

#[derive(Clone, Debug, Default)]
pub struct ModelChoice {
    pub approx: Option<ApproxVariant>,
    pub fixed: Option<Vec<u32>>,
}

impl ModelChoice {
    fn label(&self) -> &'static str {
        match (self.approx, &self.fixed) {
            (_, Some(_)) => "fixed",
            (Some(ApproxVariant::FirstOrder), None) => "approximate",
            (Some(ApproxVariant::Literal), None) => "approximate-literal",
            (None, None) => "exact",
        }
    }

    fn build(&self, case: &Case, cfg: &Resolved) -> Result<Model> {
        let tap_model = self.approx.map_or(TapModel::Exact, TapModel::Approximate);
        let config = OpfConfig { linearization: cfg.linearization.clone(), tap_model, ..OpfConfig::default() };
        let model = build_opf(case, &config)?;
        match &self.fixed {
            Some(taps) => model.fix_taps(&TapAssignment(taps.clone())),
            None => Ok(model),
        }
    }
}

fn transformer_ratios(case: &Case, per_branch: &[f64]) -> Vec<f64> {
    case.transformers().iter().map(|&k| per_branch[k]).collect()
}

fn grid_json(case: &Case) -> Value {
    let k: Vec<u32> = (0..case.transformers().len()).map(|i| case.tap_changer(i).k_taps).collect();
    let dt: Vec<String> = (0..k.len()).map(|i| case.tap_changer(i).delta_t().to_string()).collect();
    json!({ "k_taps": k, "delta_t": dt })
}

fn bus_rows(case: &Case, u: &[f64]) -> Vec<Value> {
    case.buses()
        .iter()
        .zip(u)
        .map(|(b, &u)| json!({ "id": b.id, "v": u.max(0.0).sqrt(), "u": u, "v_min": b.v_min, "v_max": b.v_max }))
        .collect()
}

fn branch_rows(case: &Case, ratios: &[f64], p: &[f64], q: &[f64], l: &[f64]) -> Vec<Value> {
    let s = case.s_base_kw();
    (0..case.branches().len())
        .map(|k| {
            json!({
                "branch": case.branch_label(k),
                "kind": case.branches()[k].kind(),
                "ratio": ratios[k],
                "p_kw": p[k] * s,
                "q_kvar": q[k] * s,
                "l_pu": l[k],
            })
        })
        .collect()
}

fn network_tables(case: &Case, u: &[f64], ratios: &[f64], p: &[f64], q: &[f64], l: &[f64]) -> String {
    let mut buses = Table::new(&["bus", "v (p.u.)", "v_min", "v_max"]);
    for (b, &u) in case.buses().iter().zip(u) {
        let v = u.max(0.0).sqrt();
        let mark = if v < b.v_min - 1e-9 || v > b.v_max + 1e-9 { " !" } else { "" };
        buses.push(vec![b.id.to_string(), format!("{v:.6}{mark}"), format!("{}", b.v_min), format!("{}", b.v_max)]);
    }
    let s = case.s_base_kw();
    let mut branches = Table::new(&["branch", "ratio", "P (kW)", "Q (kvar)", "L (p.u.)"]);
    for k in 0..case.branches().len() {
        branches.push(vec![
            case.branch_label(k),
            format!("{:.4}", ratios[k]),
            format!("{:.3}", p[k] * s),
            format!("{:.3}", q[k] * s),
            format!("{:.6e}", l[k]),
        ]);
    }
    format!("{}\n{}", buses.render(), branches.render())
}

fn powerflow_json(case: &Case, taps: &TapAssignment, pf: &PowerFlowSolution<f64>) -> Value {
    json!({
        "taps": taps.0,
        "ratios": transformer_ratios(case, &pf.ratios),
        "losses_kw": pf.losses_kw,
        "converged": pf.converged,
        "iterations": pf.iterations,
        "residual": pf.residual,
        "buses": bus_rows(case, &pf.u),
        "branches": branch_rows(case, &pf.ratios, &pf.p_flow, &pf.q_flow, &pf.l),
    })
}

pub fn run(case_path: &Path, grid: &GridChoice, choice: &ModelChoice, cfg: &Resolved, sink: &Sink, timing: bool) -> Result<Exit> {
    let case = grid.load(case_path)?;
    let model = choice.build(&case, cfg)?;
    let binaries = model.program.free_binaries().len();
    let start = Instant::now();
    let out = solve_opf(&model, &cfg.solver)?;
    let elapsed = start.elapsed().as_secs_f64();
    let mut doc = json!({
        "case": case.name(),
        "grid": grid_json(&case),
        "mode": choice.label(),
        "status": out.status,
        "binaries": binaries,
        "nodes": out.search.nodes,
        "relaxations": out.search.relaxations,
        "root_bound_kw": out.search.root_bound * case.s_base_kw(),
    });
    if timing {
        doc["wall_time_s"] = json!(elapsed);
    }
    let Some(sol) = out.solution else {
        let support = out.search.certificate.as_ref().map(|c| c.support(8)).unwrap_or_default();
        doc["certificate"] = json!(support.iter().map(|(row, y)| json!({ "row": row, "y": y })).collect::<Vec<_>>());
        let mut text = format!("{}: infeasible ({} nodes)\n", case.name(), out.search.nodes);
        if support.is_empty() {
            text.push_str("every branch-and-bound node was infeasible\n");
        } else {
            text.push_str("infeasibility certificate, largest row weights:\n");
            for (row, y) in &support {
                text.push_str(&format!("  {row:<24} {y:+.6e}\n"));
            }
        }
        sink.emit("solution", &doc, &text)?;
        return Ok(Exit::Infeasible);
    };
    let diag = diagnose(&sol, &case);
    let flags = threshold_flags(&sol, &diag, choice, cfg);
    doc["taps"] = json!(sol.taps.0);
    doc["ratios"] = json!(transformer_ratios(&case, &sol.ratios));
    doc["losses_kw"] = json!(sol.losses_kw);
    doc["bound_gap"] = json!(sol.bound_gap);
    doc["buses"] = json!(bus_rows(&case, &sol.u));
    doc["branches"] = json!(branch_rows(&case, &sol.ratios, &sol.p, &sol.q, &sol.l));
    doc["generation_kw"] = json!(generation(&case, &sol));
    doc["cone_gaps"] = json!(sol.cone_gaps);
    doc["bigm_gaps"] = json!(sol.bigm_gaps);
    doc["diagnostics"] = serde_json::to_value(&diag)?;
    doc["flags"] = json!(flags);

    let mut text = String::new();
    let status = match sol.status {
        OpfStatus::GapLimit => format!("gap-limit (bound gap {:.3e})", sol.bound_gap),
        _ => "optimal".to_string(),
    };
    text.push_str(&format!("{} [{}]: {status}\n", case.name(), choice.label()));
    let ratios: Vec<String> = transformer_ratios(&case, &sol.ratios).iter().map(|t| format!("{t:.4}")).collect();
    text.push_str(&format!("taps {}  ratios {}\n", sol.taps, ratios.join(",")));
    text.push_str(&format!("losses {:.6} kW", sol.losses_kw));
    if let Some(o) = diag.oracle_losses_kw {
        text.push_str(&format!(", oracle {o:.6} kW"));
    }
    text.push('\n');
    text.push_str(&format!(
        "binaries {binaries}  nodes {}  max cone gap {:.2e}  max big-M gap {:.2e}",
        out.search.nodes, diag.max_cone_gap, diag.max_bigm_gap
    ));
    if timing {
        text.push_str(&format!("  time {elapsed:.2} s"));
    }
    text.push_str("\n\n");
    text.push_str(&network_tables(&case, &sol.u, &sol.ratios, &sol.p, &sol.q, &sol.l));
    for f in &flags {
        text.push_str(&format!("! {f}\n"));
    }
    sink.emit("solution", &doc, &text)?;
    Ok(Exit::Success)
}

fn generation(case: &Case, sol: &Solution) -> Vec<Value> {
    let s = case.s_base_kw();
    case.generators()
        .iter()
        .enumerate()
        .map(|(g, gen)| json!({ "bus": case.buses()[gen.bus].id, "p_kw": sol.pg[g] * s, "q_kvar": sol.qg[g] * s }))
        .collect()
}

fn threshold_flags(sol: &Solution, diag: &tapflow::scenario::Diagnostics, choice: &ModelChoice, cfg: &Resolved) -> Vec<String> {
    let t = &cfg.thresholds;
    let mut flags = Vec::new();
    if diag.max_cone_gap > t.cone_gap {
        flags.push(format!("cone gap {:.3e} exceeds {:.1e}", diag.max_cone_gap, t.cone_gap));
    }
    if choice.approx.is_none() {
        if diag.max_bigm_gap > t.bigm_gap {
            flags.push(format!("big-M gap {:.3e} exceeds {:.1e}", diag.max_bigm_gap, t.bigm_gap));
        }
        if let Some(d) = diag.loss_rel_diff.filter(|d| d.abs() > t.oracle_rel) {
            flags.push(format!("oracle loss mismatch {d:.3e}"));
        }
    }
    if let Some(e) = &diag.oracle_error {
        flags.push(format!("oracle: {e}"));
    }
    if sol.status == OpfStatus::GapLimit {
        flags.push("node limit reached before the gap closed".into());
    }
    flags
}

pub fn pf(case_path: &Path, grid: &GridChoice, taps: &[u32], cfg: &Resolved, sink: &Sink) -> Result<Exit> {
    let case = grid.load(case_path)?;
    let taps = TapAssignment(taps.to_vec());
    let pf = solve_powerflow(&case, &taps, &cfg.powerflow)?;
    let pu = case.to_per_unit()?;
    let violation = pf.voltage_violation(&pu);
    let mut doc = powerflow_json(&case, &taps, &pf);
    doc["case"] = json!(case.name());
    doc["voltage_violation"] = json!(violation.max(0.0));
    let mut text = format!(
        "{}: taps {taps}  losses {:.6} kW  ({} sweeps, residual {:.2e})\n\n",
        case.name(),
        pf.losses_kw,
        pf.iterations,
        pf.residual
    );
    text.push_str(&network_tables(&case, &pf.u, &pf.ratios, &pf.p_flow, &pf.q_flow, &pf.l));
    let inside = violation <= 1e-9;
    if !inside {
        text.push_str(&format!("! voltage bounds violated by {violation:.3e} p.u.^2\n"));
    }
    sink.emit("powerflow", &doc, &text)?;
    Ok(if inside { Exit::Success } else { Exit::Infeasible })
}

pub fn enumerate(case_path: &Path, grid: &GridChoice, cfg: &Resolved, sink: &Sink, all: bool) -> Result<Exit> {
    let case = grid.load(case_path)?;
    let res = enumerate_taps(&case, &cfg.enumeration)?;
    let pf = solve_powerflow(&case, &res.best, &cfg.powerflow)?;
    let counts = json!({
        "feasible": res.count(GridStatus::Feasible),
        "voltage_violation": res.count(GridStatus::VoltageViolation),
        "non_converged": res.count(GridStatus::NonConverged),
        "collapse": res.count(GridStatus::Collapse),
    });
    let points: Vec<Value> = res
        .table
        .iter()
        .map(|p| json!({ "taps": p.taps.0, "status": p.status, "losses_kw": p.losses_kw, "voltage_violation": p.voltage_violation }))
        .collect();
    let doc = json!({
        "case": case.name(),
        "grid": grid_json(&case),
        "points": res.table.len(),
        "counts": counts,
        "best": powerflow_json(&case, &res.best, &pf),
        "table": points,
    });

    let mut text = format!(
        "{}: {} grid points, {} feasible, {} violate voltage bounds, {} not converged, {} collapsed\n",
        case.name(),
        res.table.len(),
        counts["feasible"],
        counts["voltage_violation"],
        counts["non_converged"],
        counts["collapse"]
    );
    text.push_str(&format!("minimizer {}  losses {:.6} kW\n\n", res.best, res.best_losses_kw));
    let mut ranked: Vec<_> = res.feasible().collect();
    ranked.sort_by(|a, b| a.losses_kw.partial_cmp(&b.losses_kw).unwrap().then_with(|| a.taps.cmp(&b.taps)));
    let shown = if all { res.table.iter().collect() } else { ranked.into_iter().take(10).collect::<Vec<_>>() };
    let mut t = Table::new(&["taps", "status", "losses (kW)"]);
    for p in shown {
        let status = serde_json::to_value(p.status)?.as_str().unwrap_or_default().to_string();
        t.push(vec![p.taps.to_string(), status, p.losses_kw.map_or("-".into(), |l| format!("{l:.6}"))]);
    }
    text.push_str(&t.render());
    text.push('\n');
    text.push_str(&network_tables(&case, &pf.u, &pf.ratios, &pf.p_flow, &pf.q_flow, &pf.l));
    sink.emit("enumeration", &doc, &text)?;
    Ok(Exit::Success)
}

/// Resolves `"a-b"` (bus ids, either order) to a transformer label.
fn transformer_label(case: &Case, id: &str) -> Result<String> {
    let bad = || Error::Validation(format!("branch {id:?} should be written as <bus>-<bus>"));
    let (a, b) = id.split_once('-').ok_or_else(bad)?;
    let (a, b) = (a.trim().parse::<u32>().map_err(|_| bad())?, b.trim().parse::<u32>().map_err(|_| bad())?);
    let k = case
        .branch_between(a, b)
        .ok_or_else(|| Error::Validation(format!("no branch joins buses {a} and {b}")))?;
    if case.branches()[k].tap.is_none() {
        return Err(Error::Validation(format!("branch {} is a line, not a transformer", case.branch_label(k))));
    }
    Ok(case.branch_label(k))
}

pub fn lin_audit(case_path: &Path, grid: &GridChoice, choice: &ModelChoice, branch: &str, cfg: &Resolved) -> Result<Exit> {
    let case = grid.load(case_path)?;
    let label = transformer_label(&case, branch)?;
    let model = choice.build(&case, cfg)?;
    let enc = model
        .layout
        .encodings
        .iter()
        .find(|e| e.label == label)
        .ok_or_else(|| Error::Model(format!("transformer {label} has no encoding")))?;
    print!("{}", audit(&model.program, enc));
    Ok(Exit::Success)
}

pub fn dump_model(case_path: &Path, grid: &GridChoice, choice: &ModelChoice, cfg: &Resolved, out: Option<&Path>) -> Result<Exit> {
    let case = grid.load(case_path)?;
    let text = dump_program(&choice.build(&case, cfg)?.program);
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(Exit::Success)
}

pub fn scenarios(case_path: &Path, only: &[String], cfg: &Resolved, sink: &Sink, timing: bool) -> Result<Exit> {
    let mut specs = standard_battery(case_path, &cfg.solver)?;
    if !only.is_empty() {
        if let Some(missing) = only.iter().find(|n| !specs.iter().any(|s| &s.name == *n)) {
            return Err(Error::Validation(format!("unknown scenario {missing:?}")));
        }
        specs.retain(|s| only.contains(&s.name));
    }
    for s in &mut specs {
        s.linearization = cfg.linearization.clone();
        s.out_dir = sink.out.clone();
    }
    let report = run_scenarios(&specs, &cfg.thresholds);
    let doc: Value = serde_json::from_str(&report.to_json(timing))?;
    sink.emit("report", &doc, &report.to_table(timing))?;
    let status = |s: &str| report.rows.iter().any(|r| r.status == s);
    Ok(if status("error") {
        Exit::Input
    } else if status("solver-failure") || report.any_flagged() {
        Exit::Solver
    } else {
        Exit::Success
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn case(name: &str) -> PathBuf {
        PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../cases")).join(name)
    }

    #[test]
    fn exit_codes_follow_error_class() {
        assert_eq!(exit_for(&Error::Infeasible), Exit::Infeasible);
        assert_eq!(exit_for(&Error::NoFeasibleAssignment), Exit::Infeasible);
        assert_eq!(exit_for(&Error::Solver("x".into())), Exit::Solver);
        assert_eq!(exit_for(&Error::NonConvergence { iterations: 1, residual: 1.0 }), Exit::Solver);
        assert_eq!(exit_for(&Error::Parse("x".into())), Exit::Input);
        assert_eq!(exit_for(&Error::TapRange("x".into())), Exit::Input);
    }

    #[test]
    fn transformer_labels_accept_either_orientation() {
        let c = load_case::<f64>(case("xfmr_k5.json")).unwrap();
        let k = c.transformers()[0];
        let label = c.branch_label(k);
        let (a, b) = label.split_once('-').unwrap();
        assert_eq!(transformer_label(&c, &format!("{b}-{a}")).unwrap(), label);
        assert!(transformer_label(&c, "1").is_err());
        assert!(transformer_label(&c, "1-999").is_err());
    }

    #[test]
    fn lines_are_not_audited() {
        let c = load_case::<f64>(case("two_bus.json")).unwrap();
        let label = c.branch_label(0);
        assert!(matches!(transformer_label(&c, &label), Err(Error::Validation(_))));
    }

    #[test]
    fn grid_choice_prefers_the_step() {
        let g = GridChoice { dt: Some("0.05".into()), k: Some(7) };
        assert_eq!(g.load(&case("xfmr_k5.json")).unwrap().tap_changer(0).k_taps, 4);
        let g = GridChoice { dt: None, k: Some(7) };
        assert_eq!(g.load(&case("xfmr_k5.json")).unwrap().tap_changer(0).k_taps, 7);
    }
}
