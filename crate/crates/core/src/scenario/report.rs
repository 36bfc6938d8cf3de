use std::fmt::Write;

use serde::Serialize;

use super::{ScenarioMode, ScenarioSpec};
use crate::network::NetworkCase;

/// Diagnostic limits above which a row is flagged.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Thresholds {
    /// p.u.²
    pub cone_gap: f64,
    /// p.u.²; applies to rows solved with the exact tap model.
    pub bigm_gap: f64,
    /// Relative oracle loss mismatch; applies to exact and fixed rows.
    pub oracle_rel: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { cone_gap: 1e-5, bigm_gap: 1e-6, oracle_rel: 1e-3 }
    }
}

/// Build information recorded with each report. Contains nothing that
/// changes between identical runs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Environment {
    pub version: String,
    pub os: String,
    pub arch: String,
    pub threads: usize,
}

impl Environment {
    pub fn current(threads: usize) -> Self {
        Environment {
            version: env!("CARGO_PKG_VERSION").into(),
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            threads,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioRow {
    pub name: String,
    pub case: String,
    pub grid: String,
    pub mode: String,
    /// `K` per transformer.
    pub k_taps: Vec<u32>,
    /// Exact ratio step per transformer.
    pub delta_t: Vec<String>,
    pub status: String,
    pub taps: Option<Vec<u32>>,
    /// Decoded ratio per transformer.
    pub ratios: Vec<f64>,
    pub losses_kw: Option<f64>,
    pub oracle_losses_kw: Option<f64>,
    pub loss_rel_diff: Option<f64>,
    /// Excludes case parsing. Dropped from deterministic output.
    pub wall_time_s: f64,
    /// Free binaries in the solved program.
    pub binaries: usize,
    /// Branch-and-bound nodes, or grid points for enumeration.
    pub nodes: usize,
    pub max_cone_gap: Option<f64>,
    pub max_bigm_gap: Option<f64>,
    pub bound_gap: Option<f64>,
    pub flagged: bool,
    pub flags: Vec<String>,
    pub error: Option<String>,
}

impl ScenarioRow {
    pub(super) fn empty(spec: &ScenarioSpec) -> Self {
        ScenarioRow {
            name: spec.name.clone(),
            case: spec.case.display().to_string(),
            grid: spec.grid.label(),
            mode: spec.mode.label(),
            k_taps: Vec::new(),
            delta_t: Vec::new(),
            status: String::new(),
            taps: None,
            ratios: Vec::new(),
            losses_kw: None,
            oracle_losses_kw: None,
            loss_rel_diff: None,
            wall_time_s: 0.0,
            binaries: 0,
            nodes: 0,
            max_cone_gap: None,
            max_bigm_gap: None,
            bound_gap: None,
            flagged: false,
            flags: Vec::new(),
            error: None,
        }
    }

    pub(super) fn fill_grid(&mut self, case: &NetworkCase<f64>) {
        for k in case.transformers() {
            let tc = case.branches()[k].tap.as_ref().unwrap();
            self.k_taps.push(tc.k_taps);
            self.delta_t.push(tc.delta_t().to_string());
        }
    }

    pub(super) fn apply_thresholds(&mut self, t: &Thresholds, mode: &ScenarioMode) {
        let exact_model = !matches!(mode, ScenarioMode::Approximate(_));
        if self.status == "gap-limit" {
            self.flags.push(format!("stopped at node limit, bound gap {:.3e}", self.bound_gap.unwrap_or(f64::NAN)));
        }
        if let Some(g) = self.max_cone_gap {
            if g > t.cone_gap {
                self.flags.push(format!("cone gap {g:.3e} > {:.1e}", t.cone_gap));
            }
        }
        if let (true, Some(g)) = (exact_model, self.max_bigm_gap) {
            if g > t.bigm_gap {
                self.flags.push(format!("big-M gap {g:.3e} > {:.1e}", t.bigm_gap));
            }
        }
        if let (true, Some(d)) = (exact_model, self.loss_rel_diff) {
            if d.abs() > t.oracle_rel {
                self.flags.push(format!("oracle loss mismatch {d:.3e}"));
            }
        }
        self.flagged = !self.flags.is_empty() || self.error.is_some();
    }
}

/// Exact and approximate rows solved on the same case and grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Comparison {
    pub grid: String,
    pub exact: String,
    pub approximate: String,
    pub exact_ratios: Vec<f64>,
    pub approximate_ratios: Vec<f64>,
    pub exact_losses_kw: f64,
    /// Objective reported by the approximate model itself.
    pub approximate_model_losses_kw: f64,
    /// Oracle losses at the approximate model's taps.
    pub approximate_oracle_losses_kw: Option<f64>,
    /// Oracle losses at the approximate taps are no lower than the exact
    /// optimum (within the exact row's gap).
    pub exact_not_worse: Option<bool>,
}

pub(super) fn pair_rows(specs: &[ScenarioSpec], rows: &[ScenarioRow]) -> Vec<Comparison> {
    let mut out = Vec::new();
    for (spec, row) in specs.iter().zip(rows) {
        if !matches!(spec.mode, ScenarioMode::Approximate(_)) || row.losses_kw.is_none() {
            continue;
        }
        let exact = specs.iter().zip(rows).find(|(s, r)| {
            s.mode == ScenarioMode::Exact && s.case == spec.case && s.grid == spec.grid && r.losses_kw.is_some()
        });
        let Some((xs, xr)) = exact else { continue };
        let exact_losses = xr.losses_kw.unwrap();
        let slack = xs.settings.rel_gap * exact_losses.abs();
        out.push(Comparison {
            grid: row.grid.clone(),
            exact: xr.name.clone(),
            approximate: row.name.clone(),
            exact_ratios: xr.ratios.clone(),
            approximate_ratios: row.ratios.clone(),
            exact_losses_kw: exact_losses,
            approximate_model_losses_kw: row.losses_kw.unwrap(),
            approximate_oracle_losses_kw: row.oracle_losses_kw,
            exact_not_worse: row.oracle_losses_kw.map(|o| o >= exact_losses - slack),
        });
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub environment: Environment,
    pub thresholds: Thresholds,
    pub rows: Vec<ScenarioRow>,
    pub comparisons: Vec<Comparison>,
}

fn opt(v: Option<f64>, f: impl Fn(f64) -> String) -> String {
    v.map_or_else(|| "-".to_string(), f)
}

impl RunReport {
    pub fn row(&self, name: &str) -> Option<&ScenarioRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn any_flagged(&self) -> bool {
        self.rows.iter().any(|r| r.flagged)
    }

    /// Structured report. Without timing, identical runs give identical
    /// bytes.
    pub fn to_json(&self, include_timing: bool) -> String {
        let mut value = serde_json::to_value(self).expect("report is serializable");
        if !include_timing {
            for row in value["rows"].as_array_mut().into_iter().flatten() {
                row.as_object_mut().unwrap().remove("wall_time_s");
            }
        }
        serde_json::to_string_pretty(&value).expect("report is serializable") + "\n"
    }

    /// Aligned text rendering of the rows and comparisons.
    pub fn to_table(&self, include_timing: bool) -> String {
        let mut header = vec!["scenario", "mode", "K", "losses kW", "oracle kW"];
        if include_timing {
            header.push("time s");
        }
        header.extend(["binaries", "nodes", "cone gap", "big-M gap", "ratios", "status"]);
        let mut cells: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
        for r in &self.rows {
            let k = r.k_taps.iter().map(u32::to_string).collect::<Vec<_>>().join("/");
            let ratios = r.ratios.iter().map(|t| format!("{t:.4}")).collect::<Vec<_>>().join(" ");
            let mut status = r.status.clone();
            if r.flagged {
                status.push_str(" !");
            }
            let mut line = vec![
                r.name.clone(),
                r.mode.clone(),
                k,
                opt(r.losses_kw, |v| format!("{v:.4}")),
                opt(r.oracle_losses_kw, |v| format!("{v:.4}")),
            ];
            if include_timing {
                line.push(format!("{:.2}", r.wall_time_s));
            }
            line.extend([
                r.binaries.to_string(),
                r.nodes.to_string(),
                opt(r.max_cone_gap, |v| format!("{v:.1e}")),
                opt(r.max_bigm_gap, |v| format!("{v:.1e}")),
                ratios,
                status,
            ]);
            cells.push(line);
        }
        let widths: Vec<usize> =
            (0..cells[0].len()).map(|c| cells.iter().map(|row| row[c].chars().count()).max().unwrap()).collect();
        let mut out = String::new();
        for row in &cells {
            let line: Vec<String> = row.iter().zip(&widths).map(|(s, &w)| format!("{s:<w$}")).collect();
            writeln!(out, "{}", line.join("  ").trim_end()).unwrap();
        }
        for r in self.rows.iter().filter(|r| r.flagged) {
            let why = r.error.iter().chain(&r.flags).cloned().collect::<Vec<_>>().join("; ");
            writeln!(out, "! {}: {why}", r.name).unwrap();
        }
        for c in &self.comparisons {
            let fmt = |v: &[f64]| v.iter().map(|t| format!("{t:.4}")).collect::<Vec<_>>().join(" ");
            writeln!(out).unwrap();
            writeln!(out, "ratio comparison at {}", c.grid).unwrap();
            writeln!(out, "  {:<12} {}  {:.4} kW", c.exact, fmt(&c.exact_ratios), c.exact_losses_kw).unwrap();
            writeln!(
                out,
                "  {:<12} {}  {:.4} kW model, {} kW oracle",
                c.approximate,
                fmt(&c.approximate_ratios),
                c.approximate_model_losses_kw,
                opt(c.approximate_oracle_losses_kw, |v| format!("{v:.4}"))
            )
            .unwrap();
        }
        out
    }
}
