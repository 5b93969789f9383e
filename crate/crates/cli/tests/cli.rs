use std::path::Path;
use std::process::{Command, Output};

fn tokengov(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tokengov")).args(args).output().expect("binary runs")
}

fn run_into(scenario: &str, dir: &Path) -> Output {
    tokengov(&["run", scenario, "--out", dir.to_str().unwrap()])
}

#[test]
fn run_writes_all_three_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_into("case_study_happy", dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for file in ["ledger.ndjson", "report.json", "incidents.csv"] {
        assert!(dir.path().join(file).exists(), "{file} missing");
    }
    let csv = std::fs::read_to_string(dir.path().join("incidents.csv")).unwrap();
    assert_eq!(csv, "tick,classification,subject,actions\n");
    let report = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    let report: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(report["requests"][0]["issue_price"], 4655);
    assert!(report["expectations"].as_array().unwrap().iter().all(|e| e["passed"] == true));
}

#[test]
fn verify_accepts_a_fresh_export_and_rejects_an_edited_one() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_into("wash_trading", dir.path()).status.success());
    let ledger = dir.path().join("ledger.ndjson");
    assert_eq!(tokengov(&["verify", ledger.to_str().unwrap()]).status.code(), Some(0));

    let text = std::fs::read_to_string(&ledger).unwrap();
    let tampered = dir.path().join("tampered.ndjson");
    std::fs::write(&tampered, text.replacen("\"amount\":5000", "\"amount\":5001", 1)).unwrap();
    let out = tokengov(&["verify", tampered.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("chain broken"));
}

#[test]
fn wash_trading_csv_lists_the_actions() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_into("wash_trading", dir.path()).status.success());
    let mut rows = csv::Reader::from_path(dir.path().join("incidents.csv")).unwrap();
    let rows: Vec<_> = rows.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][1], "MarketManipulation");
    assert_eq!(&rows[0][2], "token:OFFICE_X");
    assert!(rows[0][3].starts_with("FreezeToken(OFFICE_X);BlacklistAddress(eve)"));
}

#[test]
fn same_seed_gives_identical_reports() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        assert!(tokengov(&["run", "market_noise", "--seed", "99", "--out", dir.path().to_str().unwrap()]).status.success());
    }
    for file in ["ledger.ndjson", "report.json"] {
        let x = std::fs::read(a.path().join(file)).unwrap();
        let y = std::fs::read(b.path().join(file)).unwrap();
        assert_eq!(x, y, "{file} differs");
    }
}

#[test]
fn scenario_file_path_and_failed_expectation() {
    let dir = tempfile::tempdir().unwrap();
    let yaml = r#"
name: wrong_guess
agents: []
oracles:
  registry: [{ asset_id: bldg, legal_owner: alice }]
expectations:
  - { type: incident_count, count: 3 }
"#;
    let path = dir.path().join("s.yaml");
    std::fs::write(&path, yaml).unwrap();
    let out = run_into(path.to_str().unwrap(), &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn unparseable_scenario_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.yaml");
    std::fs::write(&path, "name: x\nagents: []\nbogus_field: 1\n").unwrap();
    assert_eq!(run_into(path.to_str().unwrap(), &dir.path().join("out")).status.code(), Some(2));
    assert_eq!(run_into("no_such_scenario", &dir.path().join("out")).status.code(), Some(2));
}

#[test]
fn list_scenarios_names_every_bundled_one() {
    let out = tokengov(&["list-scenarios"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for name in ["case_study_happy", "wash_trading", "agent_replacement", "market_noise"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name} not listed");
    }
}
