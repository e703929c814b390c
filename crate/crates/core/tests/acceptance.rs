//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs in release-like mode through the workspace test profile.

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::time::Instant;

use hardened_paxos::fault::{parse_config, Scenario};
use hardened_paxos::hardening::hash64;
use hardened_paxos::harness::report::{runs_text, table_text};
use hardened_paxos::harness::{run_experiment, run_scenario, ExperimentTable, Outcome, RunOptions, RunResult};
use hardened_paxos::sim::SimOptions;
use hardened_paxos::validation::{most_common_checksum, quorum, quorum_check, StateChecksum, ValidationWindow};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BASE_SEED: u64 = 1000;

fn scenario(name: &str) -> Scenario {
    let text = match name {
        "stress" => include_str!("../../../scenarios/stress.conf"),
        "message_corruption" => include_str!("../../../scenarios/message_corruption.conf"),
        "storage_log_read" => include_str!("../../../scenarios/storage_log_read.conf"),
        "checkpoint_read" => include_str!("../../../scenarios/checkpoint_read.conf"),
        "app_add_element" => include_str!("../../../scenarios/app_add_element.conf"),
        "app_add_replace" => include_str!("../../../scenarios/app_add_replace.conf"),
        "learner_one_replica" => include_str!("../../../scenarios/learner_one_replica.conf"),
        "learner_commit_quorum_all" => include_str!("../../../scenarios/learner_commit_quorum_all.conf"),
        "acceptor_promise_history_all" => {
            include_str!("../../../scenarios/acceptor_promise_history_all.conf")
        }
        "coordinator_promise_values_all" => {
            include_str!("../../../scenarios/coordinator_promise_values_all.conf")
        }
        other => panic!("unknown scenario {other}"),
    };
    parse_config(text).unwrap_or_else(|e| panic!("{name}: {e}"))
}

struct Suite {
    name: &'static str,
    runs: usize,
    table: ExperimentTable,
    results: Vec<RunResult>,
}

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, id: u32, title: &str, ok: bool, detail: String) {
        if !ok {
            self.failed += 1;
        }
        println!("{} C{id} {title}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
}

fn experiment(name: &'static str, runs: usize) -> Suite {
    let sc = scenario(name);
    let (table, results) = run_experiment(name, &sc, runs, BASE_SEED, &RunOptions::default());
    Suite {
        name,
        runs,
        table,
        results,
    }
}

fn count(rs: &[RunResult], o: Outcome) -> usize {
    rs.iter().filter(|r| r.outcome == o).count()
}

fn digests_equal(r: &RunResult) -> bool {
    let d: BTreeSet<u64> = r.final_digests.values().copied().collect();
    d.len() == 1
}

fn abort_kinds(r: &RunResult) -> BTreeSet<String> {
    r.analysis
        .aborted
        .values()
        .map(|s| s.split_whitespace().next().unwrap_or("").to_string())
        .collect()
}

fn c1(rep: &mut Report) -> Suite {
    let t0 = Instant::now();
    let s = experiment("stress", 100);
    let secs = t0.elapsed().as_secs_f64();
    let ok = count(&s.results, Outcome::Ok);
    let all_five = s
        .results
        .iter()
        .filter(|r| r.final_digests.len() == 5 && digests_equal(r))
        .count();
    let injections: u64 = s.results.iter().map(|r| r.fault_injections).sum();
    rep.line(
        1,
        "fault-free agreement",
        ok == 100 && all_five == 100 && injections == 0 && secs < 120.0,
        format!("{ok}/100 OK, {all_five}/100 with five equal digests, {injections} injections, {secs:.1}s"),
    );
    s
}

fn c2(rep: &mut Report) -> Suite {
    let s = experiment("message_corruption", 50);
    let detected = s.results.iter().filter(|r| r.fault_detections >= 1).count();
    let single = s.results.iter().filter(|r| r.fault_injections == 1).count();
    rep.line(
        2,
        "message corruption",
        detected == 50 && single == 50 && s.table.errors == 0,
        format!("{detected}/50 detected, {single}/50 single injection, row `{}`", s.table.row()),
    );
    s
}

fn c3(rep: &mut Report) -> Vec<Suite> {
    let suites = vec![experiment("storage_log_read", 50), experiment("checkpoint_read", 50)];
    let mut ok = true;
    let mut parts = Vec::new();
    for s in &suites {
        let good = s
            .results
            .iter()
            .filter(|r| {
                r.outcome == Outcome::Detected
                    && r.fault_injections == 1
                    && r.aborted_replicas == r.injected_replicas
                    && r.aborted_replicas.len() == 1
                    && r.final_digests.len() == 4
                    && digests_equal(r)
            })
            .count();
        ok &= good == s.runs;
        parts.push(format!("{} {good}/{}", s.name, s.runs));
    }
    rep.line(
        3,
        "storage/checkpoint corruption",
        ok,
        format!("{} (detected, injected replica aborted, survivors equal)", parts.join(", ")),
    );
    suites
}

fn c4(rep: &mut Report) -> Vec<Suite> {
    let suites = vec![experiment("app_add_element", 50), experiment("app_add_replace", 50)];
    let mut ok = true;
    let mut parts = Vec::new();
    for s in &suites {
        let good = s
            .results
            .iter()
            .filter(|r| {
                r.outcome == Outcome::Detected
                    && r.fault_injections == 1
                    && abort_kinds(r).iter().any(|k| k == "SEMANTIC")
            })
            .count();
        ok &= good == s.runs && s.table.errors == 0;
        parts.push(format!("{} {good}/{} errors {}", s.name, s.runs, s.table.errors));
    }
    rep.line(4, "application fault", ok, parts.join(", "));
    suites
}

/// ERROR runs with fewer than `q` replicas diverging in one window.
fn unexplained_errors(s: &Suite, q: usize) -> Vec<u64> {
    s.results
        .iter()
        .filter(|r| r.outcome == Outcome::Error && r.analysis.max_diverged_in_window < q)
        .map(|r| r.seed)
        .collect()
}

fn c5(rep: &mut Report) -> Suite {
    let s = experiment("learner_one_replica", 50);
    let q = quorum(5);
    let single: Vec<&RunResult> = s
        .results
        .iter()
        .filter(|r| r.analysis.divergence_window.len() == 1)
        .collect();
    let single_detected = single.iter().filter(|r| r.outcome == Outcome::Detected).count();
    let bad_errors = unexplained_errors(&s, q);
    let rate = s.table.rate();
    rep.line(
        5,
        "single-replica learner deviation",
        single_detected == single.len() && bad_errors.is_empty() && rate >= 90.0,
        format!(
            "{single_detected}/{} single-divergence runs detected, unexplained errors {bad_errors:?}, row `{}`",
            single.len(),
            s.table.row()
        ),
    );
    s
}

fn c6(rep: &mut Report) -> Vec<Suite> {
    let q = quorum(5);
    let suites = vec![
        experiment("learner_commit_quorum_all", 50),
        experiment("acceptor_promise_history_all", 50),
        experiment("coordinator_promise_values_all", 50),
    ];
    let runs: usize = suites.iter().map(|s| s.table.runs).sum();
    let errors: usize = suites.iter().map(|s| s.table.errors).sum();
    let rate = (runs - errors) as f64 / runs as f64 * 100.0;
    let bad: Vec<u64> = suites.iter().flat_map(|s| unexplained_errors(s, q)).collect();
    let rows: Vec<String> = suites.iter().map(|s| format!("`{}`", s.table.row())).collect();
    rep.line(
        6,
        "all-replica protocol deviations",
        rate >= 90.0 && bad.is_empty(),
        format!("aggregate {rate:.1}%, unexplained errors {bad:?}, rows {}", rows.join(" ")),
    );
    suites
}

fn c7(rep: &mut Report) -> Vec<RunResult> {
    let mut all = Vec::new();
    let mut failures = Vec::new();
    let mut cases = 0;
    // One operation per slot at a light load, so every replica votes at
    // every transition count it passes through.
    for w in [1u64, 10, 100] {
        for i in 0..10u64 {
            let t = 37 + 53 * i;
            let sc = Scenario {
                loss_prob: 0.0,
                window: w,
                ops_per_replica: 200,
                rate: 5.0,
                batch: 1,
                ..Scenario::default()
            };
            let victim = ((i + w) % 5) as u32;
            let opts = RunOptions {
                sim: SimOptions {
                    corrupt: Some((victim, t)),
                    ..SimOptions::default()
                },
                ..RunOptions::default()
            };
            let seed = BASE_SEED + w * 10 + i;
            let r = run_scenario(&sc, seed, cases, &opts).expect("no artifacts requested").result;
            cases += 1;
            let bound = (t / w + 2) * w;
            let applied = r.applied_counts.get(&victim).copied().unwrap_or(u64::MAX);
            let aborted_alone = r.aborted_replicas.iter().eq([victim].iter());
            if !(aborted_alone && applied < bound && r.outcome == Outcome::Detected) {
                failures.push(format!(
                    "W={w} t={t} r={victim}: aborted {:?} applied {applied} bound {bound} {}",
                    r.aborted_replicas,
                    r.outcome.as_str()
                ));
            }
            all.push(r);
        }
    }
    rep.line(
        7,
        "divergence latency",
        failures.is_empty(),
        if failures.is_empty() {
            format!("{cases}/{cases} corrupted replicas aborted before (t/W+2)W (batch 1, 5 ops/s per replica)")
        } else {
            failures.join("; ")
        },
    );
    all
}

/// Modal checksums by brute-force frequency count.
fn modal_oracle(received: &BTreeMap<u32, StateChecksum>) -> Vec<StateChecksum> {
    let hashes: Vec<u64> = received.values().map(|c| c.hash).collect();
    let mut best: Option<(u64, usize)> = None;
    for &h in &hashes {
        let c = hashes.iter().filter(|&&x| x == h).count();
        best = match best {
            Some((bh, bc)) if bc > c || (bc == c && bh <= h) => Some((bh, bc)),
            _ => Some((h, c)),
        };
    }
    match best {
        None => vec![],
        Some((h, _)) => received.values().filter(|c| c.hash == h).copied().collect(),
    }
}

/// Textbook FNV-1a 64.
fn fnv1a_reference(data: &[u8]) -> u64 {
    data.iter().fold(14695981039346656037u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(1099511628211)
    })
}

/// Enumerates all `q`-subsets of the window: the check must fire iff some
/// subset agrees unanimously on a foreign hash that nobody outside it holds.
fn quorum_oracle(received: &BTreeMap<u32, StateChecksum>, local: u64, q: usize) -> bool {
    let ids: Vec<u32> = received.keys().copied().collect();
    let k = ids.len();
    for mask in 0u32..(1 << k) {
        if mask.count_ones() as usize != q {
            continue;
        }
        let members: Vec<u32> = (0..k).filter(|i| mask & (1 << i) != 0).map(|i| ids[i]).collect();
        let h = received[&members[0]].hash;
        if h == local || members.iter().any(|m| received[m].hash != h) {
            continue;
        }
        let outside = (0..k)
            .filter(|i| mask & (1 << i) == 0)
            .any(|i| received[&ids[i]].hash == h);
        if !outside {
            return true;
        }
    }
    false
}

/// Every assignment of {absent, hashes...} to `n` replicas.
fn assignments(n: usize, hashes: &[u64]) -> Vec<BTreeMap<u32, StateChecksum>> {
    let base = hashes.len() + 1;
    (0..base.pow(n as u32))
        .map(|mut code| {
            let mut m = BTreeMap::new();
            for r in 0..n as u32 {
                let d = code % base;
                code /= base;
                if d > 0 {
                    m.insert(r, StateChecksum::new(101, hashes[d - 1]));
                }
            }
            m
        })
        .collect()
}

fn window_of(received: BTreeMap<u32, StateChecksum>) -> ValidationWindow {
    ValidationWindow {
        generation_count: 101,
        received,
    }
}

fn c8(rep: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(BASE_SEED);
    let mut mismatches = Vec::new();

    let exhaustive = assignments(5, &[0xaaaa, 0x5555]);
    let mut mcc_cases = 0;
    for a in &exhaustive {
        mcc_cases += 1;
        if most_common_checksum(&window_of(a.clone())) != modal_oracle(a) {
            mismatches.push(format!("most_common_checksum {a:?}"));
        }
    }
    for _ in 0..200 {
        let n = rng.gen_range(1..=7u32);
        let pool: Vec<u64> = (0..rng.gen_range(1..=4)).map(|_| rng.gen()).collect();
        let mut a = BTreeMap::new();
        for r in 0..n {
            if rng.gen_bool(0.8) {
                a.insert(r, StateChecksum::new(101, pool[rng.gen_range(0..pool.len())]));
            }
        }
        mcc_cases += 1;
        if most_common_checksum(&window_of(a.clone())) != modal_oracle(&a) {
            mismatches.push(format!("most_common_checksum {a:?}"));
        }
    }

    for _ in 0..1000 {
        let len = rng.gen_range(0..256);
        let data: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
        if hash64(&data) != fnv1a_reference(&data) {
            mismatches.push(format!("hash64 {data:?}"));
        }
    }

    let mut qc_cases = 0;
    for n in [3usize, 5] {
        let q = quorum(n);
        for a in assignments(n, &[0xaaaa, 0x5555]) {
            for local in [0xaaaa, 0x5555] {
                qc_cases += 1;
                let got = quorum_check(&window_of(a.clone()), StateChecksum::new(101, local), q).is_err();
                if got != quorum_oracle(&a, local, q) {
                    mismatches.push(format!("quorum_check n={n} local={local:x} {a:?}"));
                }
            }
        }
    }
    rep.line(
        8,
        "oracle equivalences",
        mismatches.is_empty(),
        format!(
            "most_common_checksum {mcc_cases} windows, hash64 1000 inputs, quorum_check {qc_cases} cases, mismatches {:?}",
            mismatches.iter().take(3).collect::<Vec<_>>()
        ),
    );
}

fn c9(rep: &mut Report, suites: &[&Suite]) {
    let mut diffs = Vec::new();
    let mut logs = 0;
    for s in suites {
        let sc = scenario(s.name);
        let k = s.runs.min(5);
        let (table, again) = run_experiment(s.name, &sc, k, BASE_SEED, &RunOptions::default());
        let first = &s.results[..k];
        let a = runs_text(&[(s.name.to_string(), first.to_vec())]);
        let b = runs_text(&[(s.name.to_string(), again.clone())]);
        let first_table = ExperimentTable::from_runs(s.name, first);
        if a != b
            || table_text(&[first_table]) != table_text(&[table])
            || first.iter().zip(&again).any(|(x, y)| x.log_digest != y.log_digest || x.log_lines != y.log_lines)
        {
            diffs.push(format!("{} tables", s.name));
        }
        let opts = RunOptions {
            keep_log: true,
            ..RunOptions::default()
        };
        let x = run_scenario(&sc, BASE_SEED, 0, &opts).expect("in-memory run");
        let y = run_scenario(&sc, BASE_SEED, 0, &opts).expect("in-memory run");
        logs += 1;
        if x.log.is_none() || x.log != y.log || x.final_reports != y.final_reports {
            diffs.push(format!("{} log", s.name));
        }
    }
    rep.line(
        9,
        "determinism",
        diffs.is_empty(),
        format!("{} suites re-run, {logs} full logs compared byte-for-byte, differences {diffs:?}", suites.len()),
    );
}

fn c10(rep: &mut Report, all: &[&RunResult]) {
    let with_abort: Vec<&&RunResult> = all.iter().filter(|r| !r.aborted_replicas.is_empty()).collect();
    let leaking: Vec<u64> = with_abort
        .iter()
        .filter(|r| r.analysis.total_sends_after_abort() != 0 || r.analysis.aborted.len() != r.aborted_replicas.len())
        .map(|r| r.seed)
        .collect();
    rep.line(
        10,
        "no propagation after abort",
        leaking.is_empty() && !with_abort.is_empty(),
        format!("{} runs with aborts, {} with sends after ABORT {leaking:?}", with_abort.len(), leaking.len()),
    );
}

fn main() -> ExitCode {
    let t0 = Instant::now();
    let mut rep = Report { failed: 0 };
    let s1 = c1(&mut rep);
    let s2 = c2(&mut rep);
    let s3 = c3(&mut rep);
    let s4 = c4(&mut rep);
    let s5 = c5(&mut rep);
    let s6 = c6(&mut rep);
    let r7 = c7(&mut rep);
    c8(&mut rep);

    let mut suites: Vec<&Suite> = vec![&s2];
    suites.extend(&s3);
    suites.extend(&s4);
    suites.push(&s5);
    suites.extend(&s6);
    let mut with_stress = suites.clone();
    with_stress.insert(0, &s1);
    c9(&mut rep, &with_stress);

    let all: Vec<&RunResult> = with_stress
        .iter()
        .flat_map(|s| s.results.iter())
        .chain(r7.iter())
        .collect();
    c10(&mut rep, &all);

    println!(
        "acceptance: {} of 10 criteria passed in {:.1}s",
        10 - rep.failed,
        t0.elapsed().as_secs_f64()
    );
    if rep.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
