use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use orchestra_core::batch::run_many;
use orchestra_core::metrics::{series_csv, RunReport};
use orchestra_core::scenario::Scenario;
use orchestra_core::sim::{run_scenario_with, RunOptions};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "orchestra-sim", version, about = "Discrete-event simulator of container orchestration on elastic clusters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write report.json, pending.csv and workers.csv.
    Run {
        scenario: PathBuf,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "ORCHESTRA_SIM_OUT", default_value = "out")]
        out: PathBuf,
        /// Also write trace.jsonl.
        #[arg(long)]
        trace: bool,
    },
    /// Run several scenarios and rank them.
    Compare {
        #[arg(required = true, num_args = 2..)]
        scenarios: Vec<PathBuf>,
        #[arg(long, env = "ORCHESTRA_SIM_OUT", default_value = "out")]
        out: PathBuf,
    },
    /// Parse and check a scenario without running it.
    Validate { scenario: PathBuf },
}

fn load(path: &Path) -> Result<Scenario> {
    let scenario = Scenario::load(path).with_context(|| format!("invalid scenario {}", path.display()))?;
    // Trace-backed workloads are only read here.
    scenario.pods().with_context(|| format!("invalid workload in {}", path.display()))?;
    Ok(scenario)
}

fn write_outputs(dir: &Path, report: &RunReport, trace: Option<&str>) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    fs::write(dir.join("report.json"), report.to_json_pretty() + "\n")?;
    fs::write(dir.join("pending.csv"), series_csv(&report.pending_series))?;
    fs::write(dir.join("workers.csv"), series_csv(&report.worker_series))?;
    if let Some(t) = trace {
        fs::write(dir.join("trace.jsonl"), t)?;
    }
    Ok(())
}

fn headline(r: &RunReport) -> String {
    let tput = r
        .throughput_pods_per_min
        .map_or("n/a".to_string(), |v| format!("{v:.2}"));
    format!(
        "{}: delay {:.2} min, duration {:.2} min, throughput {} pods/min, cost {}",
        r.scenario, r.avg_scheduling_delay_min, r.total_scheduling_duration_min, tput, r.cost
    )
}

fn run(path: &Path, seed: Option<u64>, out: &Path, trace: bool) -> Result<()> {
    let mut scenario = load(path)?;
    if let Some(s) = seed {
        scenario.seed = s;
    }
    let outcome = run_scenario_with(&scenario, RunOptions { trace, audit: false })
        .with_context(|| format!("run of {} failed", path.display()))?;
    let trace_text = trace.then(|| outcome.record.trace_jsonl());
    write_outputs(out, &outcome.report, trace_text.as_deref())?;
    for w in &outcome.report.warnings {
        eprintln!("warning: {w}");
    }
    println!("{}", headline(&outcome.report));
    println!("wrote {}", out.display());
    Ok(())
}

#[derive(Serialize)]
struct Row {
    scenario: String,
    file: String,
    avg_scheduling_delay_min: f64,
    total_scheduling_duration_min: f64,
    throughput_pods_per_min: Option<f64>,
    cost_micro_usd: i64,
    cost: String,
    rank_delay: usize,
    rank_duration: usize,
    rank_throughput: usize,
    rank_cost: usize,
}

/// 1-based competition ranks: equal keys share a rank.
fn ranks<K: PartialOrd + Copy>(keys: &[K]) -> Vec<usize> {
    keys.iter()
        .map(|k| 1 + keys.iter().filter(|o| *o < k).count())
        .collect()
}

fn compare(paths: &[PathBuf], out: &Path) -> Result<()> {
    let scenarios = paths.iter().map(|p| load(p)).collect::<Result<Vec<_>>>()?;
    let mut reports = Vec::with_capacity(scenarios.len());
    for (outcome, path) in run_many(&scenarios, RunOptions::default()).into_iter().zip(paths) {
        reports.push(outcome.with_context(|| format!("run of {} failed", path.display()))?.report);
    }

    let delay = ranks(&reports.iter().map(|r| r.avg_scheduling_delay_min).collect::<Vec<_>>());
    let duration = ranks(&reports.iter().map(|r| r.total_scheduling_duration_min).collect::<Vec<_>>());
    let throughput = ranks(
        &reports
            .iter()
            .map(|r| -r.throughput_pods_per_min.unwrap_or(f64::INFINITY))
            .collect::<Vec<_>>(),
    );
    let cost = ranks(&reports.iter().map(|r| r.cost_micro_usd).collect::<Vec<_>>());

    let rows: Vec<Row> = reports
        .iter()
        .zip(paths)
        .enumerate()
        .map(|(i, (r, p))| Row {
            scenario: r.scenario.clone(),
            file: p.display().to_string(),
            avg_scheduling_delay_min: r.avg_scheduling_delay_min,
            total_scheduling_duration_min: r.total_scheduling_duration_min,
            throughput_pods_per_min: r.throughput_pods_per_min,
            cost_micro_usd: r.cost_micro_usd,
            cost: r.cost.clone(),
            rank_delay: delay[i],
            rank_duration: duration[i],
            rank_throughput: throughput[i],
            rank_cost: cost[i],
        })
        .collect();

    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    fs::write(out.join("comparison.json"), serde_json::to_string_pretty(&rows)? + "\n")?;
    let mut w = csv::Writer::from_path(out.join("comparison.csv"))?;
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush()?;
    for (i, r) in reports.iter().enumerate() {
        write_outputs(&out.join(format!("{i:02}-{}", r.scenario)), r, None)?;
    }

    println!(
        "{:<16} {:>10} {:>13} {:>11} {:>8}",
        "scenario", "delay_min", "duration_min", "pods/min", "cost"
    );
    for row in &rows {
        let tput = row.throughput_pods_per_min.map_or("n/a".into(), |v| format!("{v:.2}"));
        println!(
            "{:<16} {:>10.2} {:>13.2} {:>11} {:>8}",
            row.scenario, row.avg_scheduling_delay_min, row.total_scheduling_duration_min, tput, row.cost
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn validate(path: &Path) -> Result<()> {
    let scenario = load(path)?;
    let pods = scenario.pods()?.len();
    println!("{}: ok ({} pods, {} templates)", scenario.name, pods, scenario.templates.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { scenario, seed, out, trace } => run(scenario, *seed, out, *trace),
        Command::Compare { scenarios, out } => {
            if scenarios.len() < 2 {
                Err(anyhow::anyhow!("compare needs at least two scenarios"))
            } else {
                compare(scenarios, out)
            }
        }
        Command::Validate { scenario } => validate(scenario),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_share_ties() {
        assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3, 1, 3, 2]);
    }

    #[test]
    fn rejects_bad_invocations() {
        assert!(Cli::try_parse_from(["orchestra-sim", "compare", "a.json"]).is_err());
        assert!(Cli::try_parse_from(["orchestra-sim", "run"]).is_err());
        assert!(Cli::try_parse_from(["orchestra-sim", "run", "a.json", "--seed", "-1"]).is_err());
    }
}
