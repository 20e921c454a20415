use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use qdm::results::ResultsDocument;

fn qdm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qdm")).current_dir(dir).args(args).env_remove("QDM_THREADS").output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = qdm(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fail(dir: &Path, args: &[&str]) -> String {
    let out = qdm(dir, args);
    assert!(!out.status.success(), "{args:?} should fail");
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "diagnostic should be one line: {err}");
    err
}

/// 4x5 lattice with simulated data.
fn setup(dir: &Path) {
    ok(dir, &["lattice", "--rows", "4", "--cols", "5", "--drop", "", "-o", "g.txt", "--geojson", "g.geojson"]);
    ok(dir, &["simulate", "--graph", "g.txt", "--m1", "1", "--m2", "1", "--c", "0.7", "--tau", "1", "--d", "1", "--alpha1", "0.2", "--alpha2", "0.8", "--seed", "42", "-o", "data.csv"]);
}

fn fit(dir: &Path, extra: &[&str], out: &str) {
    let mut args = vec!["fit", "--graph", "g.txt", "--data", "data.csv", "--strategy", "eb", "--no-bym", "-o", out];
    args.extend_from_slice(extra);
    ok(dir, &args);
}

#[test]
fn fit_compare_summarize_map_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    assert!(fs::read_to_string(d.join("data.csv")).unwrap().starts_with("region,y1,E1,y2,E2\n"));
    let truth: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("data.truth.json")).unwrap()).unwrap();
    assert_eq!(truth["regions"].as_array().unwrap().len(), 20);

    fit(d, &["--model", "joint"], "joint.json");
    fit(d, &["--model", "separate", "--disease", "1", "--alpha", "0.2"], "s1.json");
    fit(d, &["--model", "separate", "--disease", "2", "--alpha", "0.8"], "s2.json");

    let doc = ResultsDocument::read(&d.join("joint.json")).unwrap();
    assert_eq!(doc.result.regions.len(), 2);
    assert_eq!(doc.result.regions[0].len(), 20);
    let ids: Vec<&str> = doc.result.regions[0].iter().map(|r| r.region.as_str()).collect();
    assert_eq!(ids[..3], ["1", "2", "3"]);
    assert_eq!(doc.result.hyper("c").unwrap().summary.sd, None);

    let table = ok(d, &["compare", "s1.json", "s2.json", "joint.json"]);
    let labels: Vec<&str> = table.lines().skip(1).take(4).map(|l| l.split("  ").next().unwrap()).collect();
    assert_eq!(labels, ["Separate 1", "Separate 2", "Sum of Separates", "Joint quantile"]);
    assert!(table.contains("Preferred by DIC: ") && table.contains("Preferred by WAIC: "));

    let single = ok(d, &["compare", "s1.json"]);
    assert_eq!(single.lines().count(), 4);
    assert!(single.contains("Preferred by DIC: Separate 1"));

    let summary = ok(d, &["summarize", "joint.json"]);
    assert!(summary.contains("0.025quant") && summary.contains("\nc "));
    assert!(summary.contains("c 95% interval"));
    let s2 = ok(d, &["summarize", "s2.json"]);
    assert!(s2.contains("\nm2 ") && !s2.contains("\nm1 "));

    ok(d, &["map", "--results", "joint.json", "--geojson", "g.geojson", "--field", "relative_risk", "-o", "rr.svg"]);
    let svg = fs::read_to_string(d.join("rr.svg")).unwrap();
    assert!(svg.starts_with("<svg ") && svg.trim_end().ends_with("</svg>"));
    assert_eq!(svg.matches("</title></path>").count(), 20);
    assert_eq!(svg.matches("<title>").count(), 20);
}

#[test]
fn outputs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    let first = fs::read(d.join("data.csv")).unwrap();
    fit(d, &["--model", "joint"], "a.json");
    ok(d, &["simulate", "--graph", "g.txt", "--seed", "42", "-o", "data.csv"]);
    assert_eq!(fs::read(d.join("data.csv")).unwrap(), first);
    fit(d, &["--model", "joint"], "b.json");
    assert_eq!(fs::read(d.join("a.json")).unwrap(), fs::read(d.join("b.json")).unwrap());
    ok(d, &["map", "--results", "a.json", "--geojson", "g.geojson", "-o", "a.svg"]);
    ok(d, &["map", "--results", "b.json", "--geojson", "g.geojson", "-o", "b.svg"]);
    assert_eq!(fs::read(d.join("a.svg")).unwrap(), fs::read(d.join("b.svg")).unwrap());
}

#[test]
fn usage_errors_are_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let err = fail(dir.path(), &["simulate", "--seed", "1", "-o", "x.csv"]);
    assert!(err.contains("--graph"), "{err}");
    assert!(!dir.path().join("x.csv").exists());
}

#[test]
fn failures_leave_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    let text = fs::read_to_string(d.join("data.csv")).unwrap();
    let truncated: String = text.lines().take(10).map(|l| format!("{l}\n")).collect();
    fs::write(d.join("short.csv"), truncated).unwrap();
    let err = fail(d, &["fit", "--graph", "g.txt", "--data", "short.csv", "--strategy", "eb", "-o", "out.json"]);
    assert!(err.contains("missing from the data"), "{err}");
    assert!(!d.join("out.json").exists());
    let names: Vec<String> = fs::read_dir(d).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    assert!(names.iter().all(|n| !n.contains("partial")), "{names:?}");

    let err = fail(d, &["simulate", "--graph", "g.txt", "--alpha1", "1.5", "-o", "bad.csv"]);
    assert!(err.starts_with("error: "), "{err}");
    assert!(!d.join("bad.csv").exists() && !d.join("bad.truth.json").exists());
}

#[test]
fn compare_warns_on_different_data() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    fit(d, &["--model", "separate", "--disease", "1"], "s1.json");
    ok(d, &["simulate", "--graph", "g.txt", "--seed", "7", "-o", "data.csv"]);
    fit(d, &["--model", "separate", "--disease", "2"], "s2.json");
    let out = qdm(d, &["compare", "s1.json", "s2.json"]);
    assert!(out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("warning: data hashes differ"), "{err}");
}

#[test]
fn map_lists_unmatched_ids() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    fit(d, &["--model", "separate", "--disease", "1"], "s1.json");
    ok(d, &["lattice", "--rows", "4", "--cols", "6", "--drop", "", "-o", "g2.txt", "--geojson", "wide.geojson"]);
    let err = fail(d, &["map", "--results", "s1.json", "--geojson", "wide.geojson", "-o", "m.svg"]);
    assert!(err.contains("GeoJSON ids without values: 21, 22, 23, 24"), "{err}");
    assert!(!d.join("m.svg").exists());
    ok(d, &["map", "--results", "s1.json", "--geojson", "wide.geojson", "--allow-missing", "-o", "m.svg"]);
    let svg = fs::read_to_string(d.join("m.svg")).unwrap();
    assert_eq!(svg.matches("fill=\"url(#missing)\"><title>").count(), 4);
    assert!(svg.contains(">missing</text>"));
}

#[test]
fn scenario_config_and_independent_flag() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["lattice", "--rows", "3", "--cols", "3", "--drop", "", "-o", "g.txt"]);
    fs::write(d.join("s.txt"), "# scenario\nm1 = 0.5\nseed = 3\n").unwrap();
    ok(d, &["simulate", "--graph", "g.txt", "--config", "s.txt", "--c", "0", "--independent", "-o", "y.csv"]);
    let truth: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("y.truth.json")).unwrap()).unwrap();
    assert_eq!(truth["scenario"]["m1"], 0.5);
    assert_eq!(truth["scenario"]["seed"], 3);
    assert_eq!(truth["scenario"]["correlated"], false);
    assert_ne!(truth["field1"], truth["field2"]);
}

#[test]
fn study_is_independent_of_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["lattice", "--rows", "3", "--cols", "4", "--drop", "", "-o", "g.txt"]);
    let base = ["study", "--graph", "g.txt", "--replications", "3", "--strategy", "eb", "--separate-strategy", "eb"];
    let mut one = base.to_vec();
    one.extend(["--threads", "1", "-o", "one.json"]);
    ok(d, &one);
    let mut env = base.to_vec();
    env.extend(["-o", "env.json"]);
    let out = Command::new(env!("CARGO_BIN_EXE_qdm")).current_dir(d).args(&env).env("QDM_THREADS", "3").output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8(out.stdout).unwrap().contains("joint preferred"));
    assert_eq!(fs::read(d.join("one.json")).unwrap(), fs::read(d.join("env.json")).unwrap());
}
