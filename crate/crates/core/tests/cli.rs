use std::path::Path;
use std::process::{Command, Output};

use gridbroker::sim::{read_log, replay, ExperimentReport};

fn gridbroker(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridbroker"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_lists_every_flag() {
    let o = gridbroker(&["--help"]);
    assert!(o.status.success());
    for flag in [
        "--plan",
        "--scenario",
        "--policy",
        "--seed",
        "--out",
        "--compare",
        "--event-interval",
    ] {
        assert!(stdout(&o).contains(flag), "{flag}");
    }
}

#[test]
fn single_run_writes_report_log_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = gridbroker(&["--policy", "adaptive", "--seed", "0", "--out", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("100 done, 0 failed"), "{}", stdout(&o));
    let report: ExperimentReport =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("adaptive.json")).unwrap())
            .unwrap();
    let log = std::fs::read(dir.path().join("adaptive.log")).unwrap();
    assert_eq!(replay(&read_log(log.as_slice()).unwrap()).unwrap(), report);
    let manifest = std::fs::read_to_string(dir.path().join("jobs.jsonl")).unwrap();
    assert_eq!(manifest.lines().count(), 100);
    let leftovers: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| !["adaptive.json", "adaptive.log", "jobs.jsonl"].contains(&n.as_str()))
        .collect();
    assert!(leftovers.is_empty(), "{leftovers:?}");
}

#[test]
fn reruns_write_identical_files() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = gridbroker(&[
            "--policy",
            "compute-only",
            "--seed",
            "7",
            "--out",
            d.path().to_str().unwrap(),
        ]);
        assert!(o.status.success());
    }
    for f in ["compute-only.json", "compute-only.log", "jobs.jsonl"] {
        let read = |d: &Path| std::fs::read(d.join(f)).unwrap();
        assert_eq!(read(a.path()), read(b.path()), "{f}");
    }
}

#[test]
fn compare_prints_table_and_writes_series() {
    let dir = tempfile::tempdir().unwrap();
    let o = gridbroker(&[
        "--compare",
        "--scenario",
        "belle-adelaide-down",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    for p in ["adaptive", "compute-only", "data-local"] {
        assert!(text.lines().any(|l| l.starts_with(p)), "{text}");
        assert!(dir.path().join(format!("{p}.json")).exists());
        assert!(dir.path().join(format!("{p}.log")).exists());
    }
    let csv = std::fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(
        csv.lines()
            .any(|l| l.starts_with("data-local,") && l.contains(",80,20,")),
        "{csv}"
    );
    let servers = std::fs::read_to_string(dir.path().join("server_jobs.csv")).unwrap();
    assert_eq!(servers.lines().count(), 1 + 3 * 5);
    let bw = std::fs::read_to_string(dir.path().join("bandwidth.csv")).unwrap();
    assert!(bw.starts_with("policy,time,from,to,mbps\n") && bw.lines().count() > 3);
}

#[test]
fn failed_jobs_are_an_outcome_not_an_error() {
    let o = gridbroker(&[
        "--policy",
        "data-local",
        "--scenario",
        "belle-adelaide-down",
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("80 done, 20 failed"), "{}", stdout(&o));
}

#[test]
fn event_interval_override_is_applied() {
    let base = gridbroker(&["--policy", "compute-only"]);
    let slow = gridbroker(&["--policy", "compute-only", "--event-interval", "120"]);
    assert!(base.status.success() && slow.status.success());
    assert_ne!(stdout(&base), stdout(&slow));
    let bad = gridbroker(&["--event-interval", "0"]);
    assert!(!bad.status.success());
}

#[test]
fn bad_inputs_exit_nonzero_with_a_diagnostic() {
    let o = gridbroker(&["--policy", "round-robin"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("round-robin"));

    let o = gridbroker(&["--scenario", "/nonexistent/scenario.toml"]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error:"), "{}", stderr(&o));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(
        &path,
        r#"
name = "bad"
[[servers]]
id = "s"
cpus = 1
max_jobs = 1
[[catalog]]
lfn = "lfn:/d/a"
size_bytes = 1
replicas = [{ host = "ghost", path = "/a" }]
"#,
    )
    .unwrap();
    let o = gridbroker(&["--scenario", path.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("catalog[0]"), "{}", stderr(&o));

    let plan = dir.path().join("bad.plan");
    std::fs::write(&plan, "task main\n  copy only-one\nendtask\n").unwrap();
    let o = gridbroker(&["--plan", plan.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn minimal_scenario_loads_with_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let scen = dir.path().join("one.toml");
    std::fs::write(
        &scen,
        r#"
name = "one"
[[servers]]
id = "s"
cpus = 1
max_jobs = 1
"#,
    )
    .unwrap();
    let plan = dir.path().join("one.plan");
    std::fs::write(
        &plan,
        "parameter N Range 1 3 1;\ntask main\n  execute sim $N\nendtask\n",
    )
    .unwrap();
    let o = gridbroker(&[
        "--scenario",
        scen.to_str().unwrap(),
        "--plan",
        plan.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(
        stdout(&o).contains("3 done, 0 failed, total 360.0s"),
        "{}",
        stdout(&o)
    );
}
