use std::path::PathBuf;

use tapflow::network::{load_case, parse_case, BranchKind, CaseFile};
use tapflow::powerflow::{solve_powerflow, PowerFlowSettings, TapAssignment};

fn root() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../.."))
}

#[test]
fn every_shipped_case_loads_and_round_trips() {
    let mut seen = 0;
    for entry in std::fs::read_dir(root().join("cases")).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let case = load_case::<f64>(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let text = serde_json::to_string(&CaseFile::from_case(&case).unwrap()).unwrap();
        let again = parse_case::<f64>(&text, "copy").unwrap();
        assert_eq!(again.buses(), case.buses());
        assert_eq!(again.branches(), case.branches());
        seen += 1;
    }
    assert!(seen >= 5);
}

#[test]
fn case33_has_four_tap_changers_and_three_fixed_units() {
    let case = load_case::<f64>(root().join("cases/case33.json")).unwrap();
    assert_eq!(case.buses().len(), 33);
    assert_eq!(case.branches().len(), 32);
    let labels: Vec<String> = case.transformers().iter().map(|&k| case.branch_label(k)).collect();
    assert_eq!(labels, ["1-2", "2-19", "3-23", "6-26"]);
    assert!(case.generators().iter().all(|g| g.is_fixed()));
    assert_eq!(case.generators().len(), 3);
    for i in 0..4 {
        assert_eq!(case.tap_changer(i).k_taps, 20);
    }
}

#[test]
fn readme_example_is_a_valid_case() {
    let readme = std::fs::read_to_string(root().join("README.md")).unwrap();
    let start = readme.find("```json\n").expect("README has a JSON example") + "```json\n".len();
    let len = readme[start..].find("```").unwrap();
    let case = parse_case::<f64>(&readme[start..start + len], "example").unwrap();
    assert_eq!(case.branches()[0].kind(), BranchKind::Transformer);
    assert!(case.generators()[0].is_fixed());
    let pf = solve_powerflow(&case, &TapAssignment(vec![10]), &PowerFlowSettings::default()).unwrap();
    assert!(pf.converged);
}
