use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hardened_paxos::fault::{parse_config, Scenario};
use hardened_paxos::harness::{
    report::table_text, run_experiment, run_scenario, write_experiment_outputs, RunOptions,
};

#[derive(Parser)]
#[command(name = "hpaxos", about = "Hardened Paxos fault-injection harness")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a batch of seeded simulations and write table.tsv / runs.tsv.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 1)]
        runs: usize,
        /// Base seed; run i uses seed + i. Defaults to the scenario's seed or 0.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run one seed and print its outcome, optionally with the full event log.
    Replay {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trace: bool,
    },
}

fn load(path: &Path) -> Result<Scenario, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn test_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hpaxos: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.cmd {
        Cmd::Run {
            scenario,
            runs,
            seed,
            out,
        } => {
            let sc = load(&scenario)?;
            let base = seed.or(sc.seed).unwrap_or(0);
            let name = test_name(&scenario);
            let opts = RunOptions {
                out_dir: Some(out.clone()),
                ..RunOptions::default()
            };
            let (table, results) = run_experiment(&name, &sc, runs, base, &opts);
            write_experiment_outputs(&out, std::slice::from_ref(&table), &[(name, results.clone())])
                .map_err(|e| format!("{}: {e}", out.display()))?;
            for r in &results {
                println!("run {:4} seed {:<20} {}", r.run_index, r.seed, r.outcome.as_str());
            }
            print!("{}", table_text(&[table]));
            Ok(())
        }
        Cmd::Replay {
            scenario,
            seed,
            trace,
        } => {
            let sc = load(&scenario)?;
            let seed = seed.or(sc.seed).unwrap_or(0);
            let opts = RunOptions {
                keep_log: trace,
                ..RunOptions::default()
            };
            let a = run_scenario(&sc, seed, 0, &opts).map_err(|e| e.to_string())?;
            if let Some(log) = &a.log {
                print!("{log}");
            }
            let r = &a.result;
            let summary = format!(
                "outcome {} seed {} injections {} detections {} aborted {:?} diverged {:?} max-per-window {} log {:016x}",
                r.outcome.as_str(),
                r.seed,
                r.fault_injections,
                r.fault_detections,
                r.aborted_replicas,
                r.analysis.divergence_window,
                r.analysis.max_diverged_in_window,
                r.log_digest
            );
            if trace {
                eprintln!("{summary}");
            } else {
                println!("{summary}");
            }
            Ok(())
        }
    }
}
