use std::process::Command;

const SCENARIO: &str = "\
ops_per_replica=200
rate=100
inject point=NET_MSG_RECEIVED mode=timed delay_ms=1000 replicas=0
";

fn hpaxos() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hpaxos"))
}

#[test]
fn replay_prints_the_event_log() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("corrupt.conf");
    std::fs::write(&sc, SCENARIO).unwrap();
    let out = hpaxos()
        .args(["replay", "--scenario"])
        .arg(&sc)
        .args(["--seed", "3", "--trace"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let log = String::from_utf8(out.stdout).unwrap();
    assert!(log.lines().count() > 1000);
    assert!(log.lines().any(|l| l.contains(" DETECT INTEGRITY ")));
    assert!(log.lines().last().unwrap().contains(" END "));
    let summary = String::from_utf8(out.stderr).unwrap();
    assert!(summary.starts_with("outcome DETECTED seed 3"), "{summary}");

    let again = hpaxos()
        .args(["replay", "--scenario"])
        .arg(&sc)
        .args(["--seed", "3", "--trace"])
        .output()
        .unwrap();
    assert!(String::from_utf8(again.stdout).unwrap() == log);
}

#[test]
fn run_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("corrupt.conf");
    std::fs::write(&sc, SCENARIO).unwrap();
    let out_dir = dir.path().join("out");
    let out = hpaxos()
        .args(["run", "--scenario"])
        .arg(&sc)
        .args(["--runs", "2", "--seed", "7", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(out_dir.join("table.tsv")).unwrap();
    assert_eq!(table.lines().nth(1), Some("corrupt\t2\t2\t2\t0\t100%"));
    let runs = std::fs::read_to_string(out_dir.join("runs.tsv")).unwrap();
    assert_eq!(runs.lines().count(), 3);
    assert!(out_dir.join("run-0001").join("events.log").exists());
    assert_eq!(
        std::fs::read_to_string(out_dir.join("run-0000").join("outcome.txt")).unwrap(),
        "DETECTED\n"
    );
}

#[test]
fn bad_scenario_fails() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("bad.conf");
    std::fs::write(&sc, "window=0\n").unwrap();
    let out = hpaxos().args(["replay", "--scenario"]).arg(&sc).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("out of range"));
}
