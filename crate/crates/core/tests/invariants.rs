//! Properties of the OPF model checked against the sweep oracle on random
//! radial feeders.

use proptest::prelude::*;
use tapflow::network::{parse_case, Base, Branch, Bus, BusKind, CaseFile, NetworkCase, TapChanger, Units};
use tapflow::opf::{build_opf, solve_opf, OpfConfig, OpfStatus};
use tapflow::powerflow::{
    branch_flow_residual, net_injections, solve_powerflow, Dispatch, PowerFlowSettings, PowerFlowSolution, TapAssignment,
};
use tapflow::scalar::Exact;
use tapflow::{Case, Settings, Solution};

#[derive(Clone, Debug)]
struct FeederSpec {
    parents: Vec<usize>,
    impedance: Vec<(f64, f64)>,
    loads: Vec<(f64, f64)>,
    taps: Vec<Option<u32>>,
}

fn feeder_spec() -> impl Strategy<Value = FeederSpec> {
    (3usize..8).prop_flat_map(|n| {
        let parents = (1..n).map(|i| 0..i).collect::<Vec<_>>();
        let impedance = proptest::collection::vec((0.2f64..2.5, 0.1f64..2.0), n - 1);
        let loads = proptest::collection::vec((0.0f64..350.0, 0.0f64..200.0), n - 1);
        let taps = proptest::collection::vec(proptest::option::weighted(0.4, 1u32..=6), n - 1);
        (parents, impedance, loads, taps).prop_map(|(parents, impedance, loads, mut taps)| {
            taps[0] = taps[0].or(Some(4));
            FeederSpec { parents, impedance, loads, taps }
        })
    })
}

fn build(spec: &FeederSpec) -> Case {
    let bus = |id: u32, kind, p, q| Bus { id, kind, p_load: p, q_load: q, v_min: 0.85, v_max: 1.15, v_set: 1.0 };
    let mut buses = vec![bus(1, BusKind::Slack, 0.0, 0.0)];
    let mut branches = Vec::new();
    for (i, &parent) in spec.parents.iter().enumerate() {
        let (p, q) = spec.loads[i];
        buses.push(bus(i as u32 + 2, BusKind::Load, p, q));
        let tap = spec.taps[i].map(|k| TapChanger::new(Exact::new(95, 100), Exact::new(105, 100), k).unwrap());
        let (r, x) = spec.impedance[i];
        branches.push(Branch { from: parent, to: i + 1, r, x, i_max: None, tap });
    }
    NetworkCase::new("random", Base { mva: 1.0, kv: 12.66 }, Units::Physical, buses, branches, vec![]).unwrap()
}

fn taps_from(case: &Case, picks: &[f64]) -> TapAssignment {
    TapAssignment(
        (0..case.transformers().len())
            .map(|i| {
                let k = case.tap_changer(i).k_taps;
                ((picks[i % picks.len()] * (k as f64 + 1.0)) as u32).min(k)
            })
            .collect(),
    )
}

/// The picked assignment when the oracle places every voltage strictly
/// inside its bounds.
fn interior_taps(case: &Case, picks: &[f64]) -> Option<TapAssignment> {
    let taps = taps_from(case, picks);
    let pf = solve_powerflow(case, &taps, &PowerFlowSettings::default()).ok()?;
    (pf.voltage_violation(&case.to_per_unit().unwrap()) <= -1e-6).then_some(taps)
}

fn solve_fixed(case: &Case, taps: &TapAssignment) -> Solution {
    let model = build_opf(case, &OpfConfig::default()).unwrap().fix_taps(taps).unwrap();
    let out = solve_opf(&model, &Settings::default()).unwrap();
    assert_eq!(out.status, OpfStatus::Optimal);
    out.solution.unwrap()
}

fn as_powerflow(sol: &Solution) -> PowerFlowSolution<f64> {
    PowerFlowSolution {
        u: sol.u.clone(),
        l: sol.l.clone(),
        p_flow: sol.p.clone(),
        q_flow: sol.q.clone(),
        ratios: sol.ratios.clone(),
        losses_kw: sol.losses_kw,
        converged: true,
        iterations: 0,
        residual: 0.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(32) })]

    /// The fixed-tap optimum satisfies the nonlinear branch flow equations,
    /// with the current relation holding as an equality.
    #[test]
    fn fixed_tap_optimum_solves_the_branch_flow_equations(spec in feeder_spec(), picks in proptest::collection::vec(0.0f64..1.0, 1..4)) {
        let case = build(&spec);
        let taps = interior_taps(&case, &picks);
        prop_assume!(taps.is_some());
        let sol = solve_fixed(&case, &taps.unwrap());
        let pu = case.to_per_unit().unwrap();
        let residual = branch_flow_residual(&pu, &Dispatch::default_for(&pu), &as_powerflow(&sol));
        prop_assert!(residual <= 1e-5, "residual {residual:e}");
        prop_assert!(sol.max_cone_gap() <= 1e-5);
    }

    /// Generation minus load, counting the slack injection, equals Σ r·L.
    #[test]
    fn injections_balance_the_losses(spec in feeder_spec(), picks in proptest::collection::vec(0.0f64..1.0, 1..4)) {
        let case = build(&spec);
        let taps = interior_taps(&case, &picks);
        prop_assume!(taps.is_some());
        let sol = solve_fixed(&case, &taps.unwrap());
        let pu = case.to_per_unit().unwrap();
        let (p_net, _) = net_injections(&pu, &Dispatch::default_for(&pu));
        let slack = pu.slack();
        let slack_injection: f64 = pu.branches().iter().enumerate().filter(|(_, b)| b.from == slack).map(|(k, _)| sol.p[k]).sum();
        let injected = slack_injection + p_net.iter().sum::<f64>();
        let losses: f64 = pu.branches().iter().zip(&sol.l).map(|(b, l)| b.r * l).sum();
        prop_assert!((injected - losses).abs() <= 1e-7, "{injected} vs {losses}");
        prop_assert!((losses * case.s_base_kw() - sol.losses_kw).abs() <= 1e-9 * sol.losses_kw.max(1.0));
    }

    /// The fixed-tap SOCP and the oracle agree, and no voltage-feasible tap
    /// assignment beats the mixed-integer optimum.
    #[test]
    fn optimum_is_a_lower_bound_on_oracle_losses(spec in feeder_spec(), picks in proptest::collection::vec(0.0f64..1.0, 1..4)) {
        let case = build(&spec);
        let out = solve_opf(&build_opf(&case, &OpfConfig::default()).unwrap(), &Settings::default()).unwrap();
        prop_assert_eq!(out.status, OpfStatus::Optimal);
        let best = out.solution.unwrap().losses_kw;
        if let Some(taps) = interior_taps(&case, &picks) {
            let pf = solve_powerflow(&case, &taps, &PowerFlowSettings::default()).unwrap();
            prop_assert!(pf.losses_kw >= best - 1e-6 * best.max(1.0), "{} < {best}", pf.losses_kw);
            let fixed = solve_fixed(&case, &taps);
            prop_assert!((fixed.losses_kw - pf.losses_kw).abs() <= 1e-3 * pf.losses_kw.max(1e-9));
        }
    }
}

#[test]
fn single_precision_oracle_tracks_double() {
    let spec = FeederSpec {
        parents: vec![0, 1, 1],
        impedance: vec![(0.5, 0.4), (1.2, 0.8), (0.9, 0.7)],
        loads: vec![(200.0, 80.0), (150.0, 60.0), (300.0, 120.0)],
        taps: vec![Some(4), None, None],
    };
    let case = build(&spec);
    let taps = TapAssignment(vec![2]);
    let d = solve_powerflow(&case, &taps, &PowerFlowSettings::default()).unwrap();
    let text = serde_json::to_string(&CaseFile::from_case(&case).unwrap()).unwrap();
    let single = parse_case::<f32>(&text, "single").unwrap();
    let s = solve_powerflow(&single, &taps, &PowerFlowSettings { tol: 1e-6f32, max_iter: 100 }).unwrap();
    assert!(((s.losses_kw as f64) - d.losses_kw).abs() <= 1e-3 * d.losses_kw);
}
