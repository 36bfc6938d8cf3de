//! Scenario batteries, diagnostics and run reports.
//!
//! A scenario names a case file, a tap grid, a model mode and solver
//! settings. [`run_scenarios`] executes a list of them in order, records
//! failures as rows instead of aborting, and pairs exact and approximate
//! rows on the same grid into ratio comparisons.

mod report;

pub use report::{Comparison, Environment, RunReport, ScenarioRow, Thresholds};

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::linearization::{ApproxVariant, LinearizationConfig};
use crate::network::{load_case, NetworkCase};
use crate::opf::{build_opf, solve_opf, OpfConfig, OpfSolution, OpfStatus, TapModel};
use crate::powerflow::{enumerate_taps, solve_powerflow, EnumerationSettings, PowerFlowSettings, TapAssignment};
use crate::scalar::{parse_decimal, Exact, Real};
use crate::solver::SolverSettings;

/// Tap discretization applied to every transformer of the case.
#[derive(Clone, Debug, PartialEq)]
pub enum TapGrid {
    /// Keep the tap changers as written in the case file.
    Native,
    /// Uniform ratio step; must divide `t_max − t_min`.
    Step(Exact),
    /// Uniform number of steps `K`.
    Taps(u32),
}

impl TapGrid {
    /// Parses a decimal step such as `"0.005"`.
    pub fn step(text: &str) -> Result<Self> {
        Ok(TapGrid::Step(parse_decimal(text)?))
    }

    pub fn apply(&self, case: &NetworkCase<f64>) -> Result<NetworkCase<f64>> {
        match self {
            TapGrid::Native => Ok(case.clone()),
            TapGrid::Step(dt) => case.with_uniform_step(*dt),
            TapGrid::Taps(k) => case.with_uniform_taps(*k),
        }
    }

    pub fn label(&self) -> String {
        match self {
            TapGrid::Native => "native".into(),
            TapGrid::Step(dt) => format!("dt={dt}"),
            TapGrid::Taps(k) => format!("K={k}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ScenarioMode {
    Exact,
    Approximate(ApproxVariant),
    Fixed(TapAssignment),
    /// Taps fixed to the decoded result of an earlier scenario in the list.
    FixedFrom(String),
    Enumerate,
}

impl ScenarioMode {
    pub fn label(&self) -> String {
        match self {
            ScenarioMode::Exact => "exact".into(),
            ScenarioMode::Approximate(ApproxVariant::FirstOrder) => "approximate".into(),
            ScenarioMode::Approximate(ApproxVariant::Literal) => "approximate-literal".into(),
            ScenarioMode::Fixed(t) => format!("fixed{t}"),
            ScenarioMode::FixedFrom(name) => format!("fixed<{name}>"),
            ScenarioMode::Enumerate => "enumerate".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    pub case: PathBuf,
    pub grid: TapGrid,
    pub mode: ScenarioMode,
    pub settings: SolverSettings<f64>,
    pub linearization: LinearizationConfig<f64>,
    /// Directory for the per-scenario solution document, if any.
    pub out_dir: Option<PathBuf>,
}

impl ScenarioSpec {
    pub fn new(name: impl Into<String>, case: impl Into<PathBuf>, grid: TapGrid, mode: ScenarioMode) -> Self {
        ScenarioSpec {
            name: name.into(),
            case: case.into(),
            grid,
            mode,
            settings: SolverSettings::default(),
            linearization: LinearizationConfig::default(),
            out_dir: None,
        }
    }

    pub fn with_settings(mut self, settings: SolverSettings<f64>) -> Self {
        self.settings = settings;
        self
    }
}

/// The tap-grid study: exact runs at Δt = 0.02, 0.01, 0.005, 0.002,
/// 0.001 and 0.0005, a fixed-ratio run at the Δt = 0.005 result, and the
/// approximate model at Δt = 0.005 for the ratio comparison.
pub fn standard_battery(case: &Path, settings: &SolverSettings<f64>) -> Result<Vec<ScenarioSpec>> {
    let mut specs = Vec::new();
    let steps = ["0.02", "0.01", "0.005", "0.002", "0.001"];
    for (i, dt) in steps.iter().enumerate() {
        specs.push(ScenarioSpec::new(format!("s{}", i + 1), case, TapGrid::step(dt)?, ScenarioMode::Exact));
    }
    specs.push(ScenarioSpec::new("s6-fixed", case, TapGrid::step("0.005")?, ScenarioMode::FixedFrom("s3".into())));
    specs.push(ScenarioSpec::new("s6-fine", case, TapGrid::step("0.0005")?, ScenarioMode::Exact));
    specs.push(ScenarioSpec::new(
        "approx",
        case,
        TapGrid::step("0.005")?,
        ScenarioMode::Approximate(ApproxVariant::FirstOrder),
    ));
    Ok(specs.into_iter().map(|s| s.with_settings(settings.clone())).collect())
}

/// Checks of one solution against the oracle and its own constraints.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct Diagnostics {
    pub max_cone_gap: f64,
    pub max_bigm_gap: f64,
    pub oracle_losses_kw: Option<f64>,
    /// `(oracle − model) / model` losses.
    pub loss_rel_diff: Option<f64>,
    pub oracle_error: Option<String>,
    /// Smallest distance (p.u. voltage) of any bus to its bounds in the
    /// model solution; negative when a bound is violated.
    pub min_voltage_slack: f64,
    /// Same for the oracle voltages at the decoded taps.
    pub oracle_min_voltage_slack: Option<f64>,
}

fn min_slack<T: Real>(case_pu: &NetworkCase<T>, u: &[T]) -> f64 {
    case_pu
        .buses()
        .iter()
        .zip(u)
        .map(|(b, &u)| {
            let v = u.max(T::zero()).sqrt();
            (v - b.v_min).min(b.v_max - v).as_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Re-simulates the decoded taps with the sweep oracle and reports the
/// relaxation and linearization gaps.
pub fn diagnose<T: Real>(solution: &OpfSolution<T>, case: &NetworkCase<T>) -> Diagnostics {
    let pu = case.to_per_unit();
    let min_voltage_slack = pu.as_ref().map(|pu| min_slack(pu, &solution.u)).unwrap_or(f64::NAN);
    let (mut oracle_losses_kw, mut loss_rel_diff, mut oracle_error, mut oracle_slack) = (None, None, None, None);
    match solve_powerflow(case, &solution.taps, &PowerFlowSettings::default()) {
        Ok(pf) => {
            let o = pf.losses_kw.as_f64();
            let m = solution.losses_kw.as_f64();
            oracle_losses_kw = Some(o);
            loss_rel_diff = Some(if m != 0.0 { (o - m) / m.abs() } else { o - m });
            oracle_slack = pu.as_ref().ok().map(|pu| min_slack(pu, &pf.u));
        }
        Err(e) => oracle_error = Some(e.to_string()),
    }
    Diagnostics {
        max_cone_gap: solution.max_cone_gap().as_f64(),
        max_bigm_gap: solution.max_bigm_gap().as_f64(),
        oracle_losses_kw,
        loss_rel_diff,
        oracle_error,
        min_voltage_slack,
        oracle_min_voltage_slack: oracle_slack,
    }
}

/// Per-scenario result before it is flattened into a report row.
struct Outcome {
    status: String,
    solution: Option<OpfSolution<f64>>,
    taps: Option<TapAssignment>,
    losses_kw: Option<f64>,
    binaries: usize,
    nodes: usize,
    bound_gap: Option<f64>,
}

fn run_one(spec: &ScenarioSpec, case: &NetworkCase<f64>, done: &HashMap<String, TapAssignment>) -> Result<Outcome> {
    let tap_model = match spec.mode {
        ScenarioMode::Approximate(v) => TapModel::Approximate(v),
        _ => TapModel::Exact,
    };
    if spec.mode == ScenarioMode::Enumerate {
        let settings = EnumerationSettings { parallel: spec.settings.threads > 1, ..EnumerationSettings::default() };
        let res = enumerate_taps(case, &settings)?;
        return Ok(Outcome {
            status: "optimal".into(),
            solution: None,
            taps: Some(res.best.clone()),
            losses_kw: Some(res.best_losses_kw),
            binaries: 0,
            nodes: res.table.len(),
            bound_gap: Some(0.0),
        });
    }
    let config = OpfConfig { linearization: spec.linearization.clone(), tap_model, ..OpfConfig::default() };
    let mut model = build_opf(case, &config)?;
    match &spec.mode {
        ScenarioMode::Fixed(taps) => model = model.fix_taps(taps)?,
        ScenarioMode::FixedFrom(name) => {
            let taps = done
                .get(name)
                .ok_or_else(|| Error::Validation(format!("scenario {name} has no decoded taps to fix")))?;
            model = model.fix_taps(taps)?;
        }
        _ => {}
    }
    let binaries = model.program.free_binaries().len();
    let out = solve_opf(&model, &spec.settings)?;
    let status = match out.status {
        OpfStatus::Optimal => "optimal",
        OpfStatus::Infeasible => "infeasible",
        OpfStatus::GapLimit => "gap-limit",
    };
    Ok(Outcome {
        status: status.into(),
        taps: out.solution.as_ref().map(|s| s.taps.clone()),
        losses_kw: out.solution.as_ref().map(|s| s.losses_kw),
        bound_gap: out.solution.as_ref().map(|s| s.bound_gap),
        solution: out.solution,
        binaries,
        nodes: out.search.nodes,
    })
}

/// Runs every scenario in order. Errors become rows with an error message.
pub fn run_scenarios(specs: &[ScenarioSpec], thresholds: &Thresholds) -> RunReport {
    let mut cases: HashMap<PathBuf, std::result::Result<NetworkCase<f64>, String>> = HashMap::new();
    let mut done: HashMap<String, TapAssignment> = HashMap::new();
    let mut rows = Vec::new();
    for spec in specs {
        let base = cases
            .entry(spec.case.clone())
            .or_insert_with(|| load_case::<f64>(&spec.case).map_err(|e| e.to_string()))
            .clone();
        let mut row = ScenarioRow::empty(spec);
        let case = match base.map_err(Error::Io).and_then(|c| spec.grid.apply(&c)) {
            Ok(c) => c,
            Err(e) => {
                row.status = "error".into();
                row.error = Some(e.to_string());
                row.apply_thresholds(thresholds, &spec.mode);
                rows.push(row);
                continue;
            }
        };
        row.fill_grid(&case);
        let start = Instant::now();
        let outcome = run_one(spec, &case, &done);
        row.wall_time_s = start.elapsed().as_secs_f64();
        match outcome {
            Ok(o) => {
                row.status = o.status;
                row.binaries = o.binaries;
                row.nodes = o.nodes;
                row.losses_kw = o.losses_kw;
                row.bound_gap = o.bound_gap;
                if let Some(t) = &o.taps {
                    row.taps = Some(t.0.clone());
                    row.ratios = t.branch_ratios(&case).map(|r| transformer_ratios(&case, &r)).unwrap_or_default();
                    done.insert(spec.name.clone(), t.clone());
                }
                match &o.solution {
                    Some(sol) => {
                        let d = diagnose(sol, &case);
                        row.max_cone_gap = Some(d.max_cone_gap);
                        row.max_bigm_gap = Some(d.max_bigm_gap);
                        row.oracle_losses_kw = d.oracle_losses_kw;
                        row.loss_rel_diff = d.loss_rel_diff;
                        if let Some(e) = &d.oracle_error {
                            row.flags.push(format!("oracle: {e}"));
                        }
                        if let Some(dir) = &spec.out_dir {
                            if let Err(e) = write_solution(dir, &spec.name, sol, &d) {
                                row.flags.push(format!("output: {e}"));
                            }
                        }
                    }
                    None if spec.mode == ScenarioMode::Enumerate => {
                        row.oracle_losses_kw = o.losses_kw;
                        row.loss_rel_diff = Some(0.0);
                    }
                    None => {}
                }
            }
            Err(e) => {
                row.status = match e {
                    Error::Solver(_) => "solver-failure".into(),
                    _ => "error".into(),
                };
                row.error = Some(e.to_string());
            }
        }
        row.apply_thresholds(thresholds, &spec.mode);
        rows.push(row);
    }
    let comparisons = report::pair_rows(specs, &rows);
    let threads = specs.first().map_or(1, |s| s.settings.threads);
    RunReport { environment: Environment::current(threads), thresholds: *thresholds, rows, comparisons }
}

fn transformer_ratios(case: &NetworkCase<f64>, branch_ratios: &[f64]) -> Vec<f64> {
    case.transformers().iter().map(|&k| branch_ratios[k]).collect()
}

fn write_solution(dir: &Path, name: &str, sol: &OpfSolution<f64>, d: &Diagnostics) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let doc = serde_json::json!({
        "scenario": name,
        "taps": sol.taps.0,
        "ratios": sol.ratios,
        "u": sol.u,
        "p": sol.p,
        "q": sol.q,
        "l": sol.l,
        "losses_kw": sol.losses_kw,
        "cone_gaps": sol.cone_gaps,
        "bigm_gaps": sol.bigm_gaps,
        "status": sol.status,
        "bound_gap": sol.bound_gap,
        "diagnostics": d,
    });
    std::fs::write(dir.join(format!("{name}.solution.json")), serde_json::to_string_pretty(&doc)? + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests;
