use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ests_core::ran_model::CellRole;
use ests_core::Topology;

fn ests(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ests"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s1_scenario() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/s1_scenario.json")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_topology_shape() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("topo.json");
    let o = ests(&[
        "gen-topology",
        "--sites",
        "13",
        "--sectors",
        "41",
        "--bands",
        "5",
        "--out",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let topo = Topology::load(&out).unwrap();
    let cells = topo.cells();
    assert_eq!(cells.iter().filter(|c| c.role == CellRole::Coverage).count(), 41);
    assert!(cells.iter().filter(|c| c.role == CellRole::Capacity).count() >= 41);
    assert_eq!(topo.sectors().len(), 41);
    assert!(topo.sectors().iter().all(|s| (1..=4).contains(&s.capacity.len())));
}

#[test]
fn gen_trace_length() {
    let dir = tempfile::tempdir().unwrap();
    let topo = dir.path().join("topo.json");
    let cfg = dir.path().join("diurnal.json");
    let trace = dir.path().join("trace.csv");
    assert!(ests(&[
        "gen-topology",
        "--sites",
        "1",
        "--sectors",
        "3",
        "--bands",
        "3",
        "--out",
        path(&topo)
    ])
    .status
    .success());
    std::fs::write(
        &cfg,
        r#"{"days": 2, "peak_utilization": 0.7, "trough_utilization": 0.2, "peak_hour": 20}"#,
    )
    .unwrap();
    let o = ests(&[
        "gen-trace",
        path(&cfg),
        "--out",
        path(&trace),
        "--topology",
        path(&topo),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&trace).unwrap();
    let cells = Topology::load(&topo).unwrap().cells().len();
    assert_eq!(text.lines().next(), Some("site,sector,band,timestamp,prb_util"));
    assert_eq!(text.lines().count(), 1 + cells * 2 * 96);
}

#[test]
fn run_is_reproducible_and_replayable() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = ests(&[
            "run",
            path(&s1_scenario()),
            "--mode",
            "ccc",
            "--seed",
            "3",
            "--out",
            path(out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let metrics = std::fs::read_to_string(a.join("metrics.json")).unwrap();
    assert_eq!(metrics, std::fs::read_to_string(b.join("metrics.json")).unwrap());
    assert_eq!(
        std::fs::read(a.join("events.jsonl")).unwrap(),
        std::fs::read(b.join("events.jsonl")).unwrap()
    );
    let audit = std::fs::read_to_string(a.join("audit.jsonl")).unwrap();
    assert_eq!(audit.lines().count(), 10);

    let replayed = dir.path().join("replayed.json");
    let o = ests(&["replay", path(&a.join("events.jsonl")), "--out", path(&replayed)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(replayed).unwrap(), metrics);
}

#[test]
fn report_formats() {
    let dir = tempfile::tempdir().unwrap();
    assert!(ests(&["run", path(&s1_scenario()), "--out", path(dir.path())])
        .status
        .success());
    let metrics = dir.path().join("metrics.json");

    let o = ests(&["report", path(&metrics)]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("10 of 10 succeeded"));

    let o = ests(&["report", path(&metrics), "--csv"]);
    let csv = String::from_utf8(o.stdout).unwrap();
    assert!(csv.starts_with("metric,value"));
    assert!(csv.lines().any(|l| l == "handovers_succeeded,10"));

    let o = ests(&["report", path(&metrics), "--plot-data"]);
    let plot = String::from_utf8(o.stdout).unwrap();
    assert_eq!(
        plot.lines().next(),
        Some("timestamp,sector,load,predicted,awake_capacity_count")
    );
}

#[test]
fn exit_codes() {
    assert_eq!(ests(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(ests(&["run"]).status.code(), Some(2));
    assert_eq!(ests(&["run", "x.json", "--mode", "c"]).status.code(), Some(2));
    assert_eq!(
        ests(&["report", "m.json", "--csv", "--plot-data"]).status.code(),
        Some(2)
    );

    let o = ests(&["run", "/nonexistent/scenario.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));

    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("bad.jsonl");
    std::fs::write(&log, "{\"type\":\"nonsense\"}\n").unwrap();
    assert_eq!(ests(&["replay", path(&log)]).status.code(), Some(1));
}
