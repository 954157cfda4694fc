use std::path::PathBuf;
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn coremarket(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coremarket"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn four_node() -> String {
    scenario("fig3.market").display().to_string()
}

fn pair_exchange() -> String {
    scenario("appendixF.market").display().to_string()
}

#[test]
fn clear_prints_budgets() {
    let o = coremarket(&["clear", &four_node()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let budget = text.lines().find(|l| l.starts_with("budget")).expect("budget row");
    let cells: Vec<&str> = budget.split_whitespace().skip(1).collect();
    assert_eq!(cells, ["48.3", "2.8", "0.0", "-34.8"]);
}

#[test]
fn clear_json_vcg_payments() {
    let o = coremarket(&["clear", &pair_exchange(), "--mechanisms", "vcg", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let p: Vec<f64> = v["mechanisms"][0]["payments"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    assert!((p[0] - 3.0).abs() < 1e-9 && (p[1] + 1.0).abs() < 1e-9, "{p:?}");
}

#[test]
fn clear_csv_has_operator_rows() {
    let o = coremarket(&["clear", &pair_exchange(), "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("mechanism,bidder,quantity,bid_cost,payment,utility\n"));
    assert_eq!(text.lines().filter(|l| l.contains(",operator,")).count(), 4);
}

#[test]
fn output_is_deterministic() {
    let a = coremarket(&["clear", &four_node(), "--format", "json"]);
    let b = coremarket(&["clear", &four_node(), "--format", "json"]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn empty_file_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.market");
    std::fs::write(&path, "").unwrap();
    let o = coremarket(&["clear", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_file_is_input_error() {
    let o = coremarket(&["clear", "/nonexistent/market.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_mechanism_is_input_error() {
    let o = coremarket(&["clear", &four_node(), "--mechanisms", "vickrey"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn infeasible_market_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("short.market");
    std::fs::write(
        &path,
        r#"
[meta]
kind = "one_sided"

[[bidders]]
id = "G1"
[bidders.curve]
type = "quadratic"
a = 1.0
b = 0.0
lower = 0.0
upper = 5.0

[[constraints]]
name = "demand"
sense = "eq"
rhs = 10.0
terms = { G1 = 1.0 }
"#,
    )
    .unwrap();
    let o = coremarket(&["clear", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn explicit_lmp_on_discrete_bids_exits_four() {
    let reserve = scenario("reserve.market").display().to_string();
    let all = coremarket(&["clear", &reserve]);
    assert_eq!(all.status.code(), Some(0));
    assert!(stdout(&all).contains("lmp: skipped"));
    let lmp = coremarket(&["clear", &reserve, "--mechanisms", "lmp"]);
    assert_eq!(lmp.status.code(), Some(4));
}

#[test]
fn analyze_all_passes() {
    let o = coremarket(&["analyze", &four_node(), "--format", "json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let checks = v["checks"].as_array().unwrap();
    assert!(!checks.is_empty());
    for c in checks {
        let status = c["status"].as_str().unwrap();
        assert!(status == "pass" || status == "skipped", "{c}");
    }
}

#[test]
fn inapplicable_explicit_check_exits_five() {
    let o = coremarket(&["analyze", &four_node(), "--checks", "replication"]);
    assert_eq!(o.status.code(), Some(5));
    assert!(stdout(&o).contains("error"));
}

#[test]
fn supermodularity_witness_reported() {
    let o = coremarket(&["analyze", &pair_exchange(), "--checks", "supermodularity"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("not supermodular"), "{}", stdout(&o));
}

#[test]
fn report_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let o = coremarket(&["report", &four_node(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let mut r = csv::Reader::from_path(out.join("payments.csv")).unwrap();
    assert_eq!(r.headers().unwrap().len(), 5);
    assert_eq!(r.records().count(), 4);

    let mut r = csv::Reader::from_path(out.join("utilities.csv")).unwrap();
    let last = r.records().last().unwrap().unwrap();
    assert_eq!(&last[0], "operator");

    let r = csv::Reader::from_path(out.join("core_section.csv")).unwrap();
    assert!(r.into_records().count() > 0);

    let mut r = csv::Reader::from_path(out.join("generation.csv")).unwrap();
    assert!(r.headers().unwrap().iter().any(|h| h.starts_with("u_")));
    assert!(r.records().count() >= 1);
}

#[test]
fn report_core_section_two_bidders() {
    let dir = tempfile::tempdir().unwrap();
    let o = coremarket(&["report", &pair_exchange(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let mut r = csv::Reader::from_path(dir.path().join("core_section.csv")).unwrap();
    let mut pts: Vec<(f64, f64)> = r
        .records()
        .map(|rec| {
            let rec = rec.unwrap();
            (rec[3].parse().unwrap(), rec[4].parse().unwrap())
        })
        .collect();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let expect = [(0.0, 0.0), (0.0, 2.0), (2.0, 0.0)];
    assert_eq!(pts.len(), 3);
    for (p, q) in pts.iter().zip(expect) {
        assert!((p.0 - q.0).abs() < 1e-9 && (p.1 - q.1).abs() < 1e-9, "{pts:?}");
    }
}

#[test]
fn report_without_mechanisms_writes_headers_only() {
    let dir = tempfile::tempdir().unwrap();
    let o = coremarket(&["report", &four_node(), "--mechanisms", "", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["payments.csv", "utilities.csv", "core_section.csv", "generation.csv"] {
        let text = std::fs::read_to_string(dir.path().join(f)).unwrap();
        assert_eq!(text.lines().count(), 1, "{f}: {text}");
    }
}
