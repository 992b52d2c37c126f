use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_covid-rd");

fn covid_rd(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("COVID_RD_THREADS").output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Compares against a stored file; set UPDATE_GOLDEN=1 to rewrite it.
fn assert_golden(name: &str, actual: &str) {
    let path = golden_dir().join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::create_dir_all(golden_dir()).unwrap();
        fs::write(&path, actual).unwrap();
        return;
    }
    let expected = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "output differs from {}", path.display());
}

#[test]
fn help_text_is_stable() {
    for sub in ["", "simulate", "order-check", "stability-check", "compare", "presets"] {
        let args: Vec<&str> = [sub, "--help"].into_iter().filter(|s| !s.is_empty()).collect();
        let out = covid_rd(&args);
        assert_eq!(out.status.code(), Some(0), "{sub}");
        let name = if sub.is_empty() { "help-main.txt".to_string() } else { format!("help-{sub}.txt") };
        assert_golden(&name, &String::from_utf8(out.stdout).unwrap());
    }
}

#[test]
fn presets_lists_every_preset() {
    let out = covid_rd(&["presets"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in covid_rd::preset_names() {
        assert!(text.contains(name), "{name} missing from\n{text}");
    }
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(covid_rd(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(covid_rd(&["simulate"]).status.code(), Some(1));
    assert_eq!(covid_rd(&["simulate", "--scenario", "/definitely/not/here.json"]).status.code(), Some(1));
    assert_eq!(covid_rd(&["order-check", "--axis", "spatial", "--levels", "2"]).status.code(), Some(1));
}

#[test]
fn invalid_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let o = covid_rd(&["simulate", "--scenario", "preset:nanjing-ode", "--dt", "-1", "--out", path_str(&out_dir)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dt"), "{}", stderr(&o));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{").unwrap();
    assert_eq!(covid_rd(&["simulate", "--scenario", path_str(&bad)]).status.code(), Some(2));

    let o = covid_rd(&["simulate", "--scenario", "preset:no-such-preset"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nanjing-ode"));

    // Strict guards refuse a step far beyond the diffusion limit.
    let o = covid_rd(&[
        "simulate",
        "--scenario",
        "preset:contractive-1d",
        "--dt",
        "0.01",
        "--strict-guards",
        "--out",
        path_str(&out_dir),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn bad_thread_count_is_a_usage_error() {
    let o = Command::new(BIN).args(["presets"]).env("COVID_RD_THREADS", "zero").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("COVID_RD_THREADS"));
}

#[test]
fn simulate_writes_csvs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = covid_rd(&["simulate", "--scenario", "preset:corridor-1d", "--T", "5", "--gnuplot", "--out", path_str(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));

    let nodes = fs::read_to_string(out.join("nodes.csv")).unwrap();
    let header = nodes.lines().next().unwrap();
    assert_eq!(header, "time,node_x,region,S,Q,E,A,I,D,R,cum_death_i,cum_death_d");
    // 6 daily snapshots of 61 nodes.
    assert_eq!(nodes.lines().count(), 1 + 6 * 61);

    let regions = fs::read_to_string(out.join("regions.csv")).unwrap();
    assert!(regions.contains("Yangzhou"));
    assert!(out.join("plot.gp").exists());

    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["steps"], 100);
    assert_eq!(manifest["snapshots"], 6);
    assert_eq!(manifest["horizon"], 5.0);
    assert!(manifest["ledger"]["max_relative_drift"].as_f64().unwrap() < 1e-12);
    assert!(manifest["alpha"]["alpha"].is_number());
}

#[test]
fn scenario_file_round_trips_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("sir.json");
    fs::write(&file, covid_rd::preset("sir-demo").unwrap().to_json().unwrap()).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(covid_rd(&["simulate", "--scenario", path_str(&file), "--out", path_str(&a)]).status.success());
    assert!(covid_rd(&["simulate", "--scenario", "preset:sir-demo", "--out", path_str(&b)]).status.success());
    assert_eq!(fs::read(a.join("nodes.csv")).unwrap(), fs::read(b.join("nodes.csv")).unwrap());
}

#[test]
fn stability_check_exit_codes() {
    let ok = covid_rd(&["stability-check", "--scenario", "preset:contractive-1d"]);
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));
    let report: serde_json::Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(report["monotone"], true);

    let bad = covid_rd(&["stability-check", "--scenario", "preset:contractive-1d", "--dt-factor", "4"]);
    assert_eq!(bad.status.code(), Some(3));
    let report: serde_json::Value = serde_json::from_slice(&bad.stdout).unwrap();
    assert!(report["first_violation"].is_u64());
}

#[test]
fn order_check_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("order.json");
    let o = covid_rd(&["order-check", "--axis", "spatial", "--levels", "3", "--out", path_str(&file)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&file).unwrap()).unwrap();
    let orders = report["orders_l2"].as_array().unwrap();
    assert_eq!(orders.len(), 2);
    for p in orders {
        assert!((p.as_f64().unwrap() - 2.0).abs() < 0.2);
    }
}

#[test]
fn compare_reports_region_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let obs = dir.path().join("obs.csv");
    fs::write(&obs, "day,region,confirmed_hospitalized\n0,NJ,0\n10,NJ,3\n20,NJ,5\n90,NJ,1\n").unwrap();
    let o = covid_rd(&[
        "compare",
        "--scenario",
        "preset:corridor-1d",
        "--observed",
        path_str(&obs),
        "--region",
        "NJ=Nanjing",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let fit = &m["regions"][0];
    assert_eq!(fit["simulated_region"], "Nanjing");
    assert_eq!(fit["points"], 3);
    assert_eq!(fit["points_outside_horizon"], 1);

    let o = covid_rd(&["compare", "--scenario", "preset:corridor-1d", "--observed", path_str(&obs)]);
    assert_eq!(o.status.code(), Some(2), "unmapped region should be rejected");
}
