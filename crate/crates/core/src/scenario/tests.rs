use super::*;
use crate::powerflow::{solve_powerflow, PowerFlowSettings};

fn case_path(name: &str) -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../cases")).join(name)
}

#[test]
fn battery_lists_grids_fixed_fine_and_approximate() {
    let specs = standard_battery(&case_path("case33.json"), &SolverSettings::default()).unwrap();
    let names: Vec<&str> = specs.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(names, ["s1", "s2", "s3", "s4", "s5", "s6-fixed", "s6-fine", "approx"]);
    assert_eq!(specs[5].mode, ScenarioMode::FixedFrom("s3".into()));
    assert_eq!(specs[6].grid, TapGrid::Step(Exact::new(1, 2000)));
}

#[test]
fn grid_step_must_divide_the_range() {
    let case = load_case::<f64>(case_path("xfmr_k5.json")).unwrap();
    assert_eq!(TapGrid::step("0.05").unwrap().apply(&case).unwrap().tap_changer(0).k_taps, 4);
    assert!(TapGrid::step("0.03").unwrap().apply(&case).is_err());
}

#[test]
fn exact_fixed_and_enumerate_rows_agree() {
    let p = case_path("xfmr_k5.json");
    let specs = vec![
        ScenarioSpec::new("opt", &p, TapGrid::Native, ScenarioMode::Exact),
        ScenarioSpec::new("fix", &p, TapGrid::Native, ScenarioMode::FixedFrom("opt".into())),
        ScenarioSpec::new("brute", &p, TapGrid::Native, ScenarioMode::Enumerate),
    ];
    let report = run_scenarios(&specs, &Thresholds::default());
    let (opt, fix, brute) = (report.row("opt").unwrap(), report.row("fix").unwrap(), report.row("brute").unwrap());
    assert!(!report.any_flagged(), "{}", report.to_table(false));
    assert_eq!(opt.binaries, 3);
    assert_eq!(fix.binaries, 0);
    assert_eq!(opt.taps, fix.taps);
    assert_eq!(opt.taps, brute.taps);
    let (a, b) = (opt.losses_kw.unwrap(), brute.losses_kw.unwrap());
    assert!((a - b).abs() <= 1e-3 * b);
    assert_eq!(brute.nodes, 6);
}

#[test]
fn failures_become_rows_and_the_run_continues() {
    let specs = vec![
        ScenarioSpec::new("missing", case_path("nope.json"), TapGrid::Native, ScenarioMode::Exact),
        ScenarioSpec::new("orphan", case_path("xfmr_k5.json"), TapGrid::Native, ScenarioMode::FixedFrom("x".into())),
        ScenarioSpec::new("box", case_path("tight_box.json"), TapGrid::Native, ScenarioMode::Exact),
        ScenarioSpec::new("ok", case_path("two_bus.json"), TapGrid::Native, ScenarioMode::Exact),
    ];
    let report = run_scenarios(&specs, &Thresholds::default());
    assert_eq!(report.rows.len(), 4);
    assert_eq!(report.rows[0].status, "error");
    assert!(report.rows[0].flagged);
    assert_eq!(report.rows[1].status, "error");
    assert_eq!(report.rows[2].status, "infeasible");
    assert_eq!(report.rows[3].status, "optimal");
    assert!(!report.rows[3].flagged);
}

#[test]
fn deterministic_json_is_byte_identical() {
    let p = case_path("xfmr_k5.json");
    let specs = vec![
        ScenarioSpec::new("exact", &p, TapGrid::Native, ScenarioMode::Exact),
        ScenarioSpec::new("approx", &p, TapGrid::Native, ScenarioMode::Approximate(ApproxVariant::FirstOrder)),
    ];
    let a = run_scenarios(&specs, &Thresholds::default());
    let b = run_scenarios(&specs, &Thresholds::default());
    assert_eq!(a.to_json(false), b.to_json(false));
    assert_eq!(a.to_table(false), b.to_table(false));
    assert!(!a.to_json(false).contains("wall_time_s"));
    assert!(a.to_json(true).contains("wall_time_s"));
    assert_eq!(a.comparisons.len(), 1);
    assert_eq!(a.comparisons[0].exact_not_worse, Some(true));
}

#[test]
fn diagnostics_at_unit_ratio_equal_plain_power_flow() {
    let case = load_case::<f64>(case_path("case33.json"))
        .unwrap()
        .with_generators(vec![])
        .unwrap()
        .with_voltage_bounds(0.9, 1.1)
        .unwrap();
    let taps = TapAssignment(vec![10; 4]);
    let model = build_opf(&case, &OpfConfig::default()).unwrap().fix_taps(&taps).unwrap();
    let sol = solve_opf(&model, &SolverSettings::default()).unwrap().solution.unwrap();
    assert!(sol.ratios.iter().all(|&t| t == 1.0));
    let d = diagnose(&sol, &case);
    let pf = solve_powerflow(&case, &taps, &PowerFlowSettings::default()).unwrap();
    assert_eq!(d.oracle_losses_kw, Some(pf.losses_kw));
    assert!(d.loss_rel_diff.unwrap().abs() < 1e-6);
    assert!(d.max_bigm_gap < 1e-9);
    assert!(d.max_cone_gap < 1e-6);
    assert!((d.min_voltage_slack - d.oracle_min_voltage_slack.unwrap()).abs() < 1e-6);
}
