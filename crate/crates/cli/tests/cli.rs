use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(name)
}

fn gridrisk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridrisk")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn dispatch_prints_table() {
    let case = data("toy6.m");
    let o = gridrisk(&["dispatch", "--case", case.to_str().unwrap(), "--level", "90"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.starts_with("load_factor 0.9\n"));
    assert!(text.contains("[security]"));
}

#[test]
fn cascade_prints_tier_log() {
    let case = data("toy6.m");
    let o = gridrisk(&["cascade", "--case", case.to_str().unwrap(), "--branches", "6,7"]);
    assert!(o.status.success());
    let first = stdout(&o).lines().next().unwrap().to_string();
    assert!(first.starts_with(r#"{"tier":0,"tripped":[6,7]"#), "{first}");
    assert!(String::from_utf8_lossy(&o.stderr).contains("blackout_mw 60"));
}

#[test]
fn mc_matches_across_workers() {
    let case = data("toy6.m");
    let run = |w: &str| {
        stdout(&gridrisk(&["mc", "--case", case.to_str().unwrap(), "--iterations", "5000", "--seed", "4", "--workers", w]))
    };
    let one = run("1");
    assert_eq!(one, run("3"));
    assert_eq!(one.lines().count(), 5);
}

#[test]
fn oracle_reports_csv() {
    let case = data("toy6.m");
    let o = gridrisk(&["oracle", "--case", case.to_str().unwrap(), "--max-k", "8", "--bins", "0,0.5,1"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 3);
}

#[test]
fn sweep_writes_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let case = data("toy6.m");
    let o = gridrisk(&[
        "sweep",
        "--case",
        case.to_str().unwrap(),
        "--levels",
        "70:90:10",
        "--policy",
        "proportional",
        "--anchor",
        "100",
        "--iterations",
        "2000",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["risk.csv", "dispatch_summary.csv", "manifest.json", "plot_bins.csv", "plot_total.csv", "timing.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains(r#""anchor_level": 100"#));
    assert!(!manifest.contains("workers"));
}

#[test]
fn sweep_from_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    let json = format!(
        r#"{{"case_path": {:?}, "load_levels": [80], "dispatch_policy": {{"kind": "scdcopf"}},
            "n_iterations": 100, "master_seed": 3, "bins": [0, 0.5, 1]}}"#,
        data("toy6.m")
    );
    fs::write(&cfg, json).unwrap();
    let out = tmp.path().join("o");
    let o = gridrisk(&["sweep", "--config", cfg.to_str().unwrap(), "--case", "ignored", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(out.join("risk.csv")).unwrap().lines().count(), 3);
}

#[test]
fn exit_codes() {
    let case = data("toy6.m");
    let c = case.to_str().unwrap();
    assert_eq!(gridrisk(&["dispatch", "--case", c, "--level", "0"]).status.code(), Some(2));
    assert_eq!(gridrisk(&["mc", "--case", c, "--bins", "0.1,1"]).status.code(), Some(2));
    assert_eq!(gridrisk(&["sweep", "--case", c, "--levels", "90", "--policy", "proportional", "--anchor", "80", "--out", "/nonexistent/x"]).status.code(), Some(2));
    assert_eq!(gridrisk(&["cascade", "--case", c, "--branches", "99"]).status.code(), Some(1));
    assert_eq!(gridrisk(&["dispatch"]).status.code(), Some(2));
}
