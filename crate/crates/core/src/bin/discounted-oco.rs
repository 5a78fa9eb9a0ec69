use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use discounted_oco::harness::{
    read_ledgers, replay, run_experiment, verify_bounds, write_report, write_verdicts, ExperimentConfig, ExperimentReport,
    VerdictRow,
};

#[derive(Parser)]
#[command(name = "discounted-oco", version, about = "Discounted online learning benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write ledgers, summaries and verdicts.
    Run(RunArgs),
    /// Re-check bounds on stored ledgers.
    Verify(VerifyArgs),
    /// Re-derive predictions from stored gradients and compare bitwise.
    Replay(ReplayArgs),
    /// Run an experiment and report per-step timings only.
    Bench(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Supplies the comparator grid and stability windows.
    #[arg(long)]
    config: PathBuf,
    /// Output directory of a previous run.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct ReplayArgs {
    /// Output directory of a previous run.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    quiet: bool,
}

fn load(args: &RunArgs) -> anyhow::Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(trials) = args.trials {
        config.trials = trials;
    }
    config.validate()?;
    Ok(config)
}

fn print_summary(report: &ExperimentReport) {
    println!(
        "{:<20} {:>10} {:>10} {:>10} {:>14} {:>10}",
        "learner", "coverage", "width", "lce", "step_ns", "failures"
    );
    let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
    for row in &report.summary {
        println!(
            "{:<20} {:>10} {:>10} {:>10} {:>14} {:>10}",
            row.learner,
            fmt(row.avg_coverage_mean),
            fmt(row.avg_width_mean),
            fmt(row.lce_mean),
            format!("{:.0}±{:.0}", row.step_ns_mean, row.step_ns_std),
            format!("{}/{}", row.verdict_failures, row.verdicts),
        );
    }
}

fn run(args: RunArgs) -> anyhow::Result<bool> {
    let config = load(&args)?;
    let report = run_experiment(&config)?;
    let out = args.out.clone().or_else(|| config.outputs.dir.clone());
    if let Some(dir) = &out {
        write_report(&report, dir).with_context(|| format!("writing report to {}", dir.display()))?;
    }
    if !args.quiet {
        print_summary(&report);
        for v in report.verdicts().filter(|v| !v.pass) {
            println!("FAIL {} trial {} {} u={} tau={:?}: {} > {}", v.learner, v.trial, v.check, v.u, v.tau, v.measured, v.bound);
        }
    }
    Ok(report.all_pass())
}

fn bench(args: RunArgs) -> anyhow::Result<bool> {
    let config = load(&args)?;
    let report = run_experiment(&config)?;
    println!("{:<20} {:>8} {:>14} {:>14}", "learner", "trials", "step_ns_mean", "step_ns_std");
    for row in &report.summary {
        println!("{:<20} {:>8} {:>14.1} {:>14.1}", row.learner, row.trials, row.step_ns_mean, row.step_ns_std);
    }
    Ok(true)
}

fn verify(args: VerifyArgs) -> anyhow::Result<bool> {
    let config = ExperimentConfig::load(&args.config)?;
    let ledgers = read_ledgers(&args.out.join("ledgers"))?;
    if ledgers.is_empty() {
        bail!("no ledgers under {}", args.out.join("ledgers").display());
    }
    let mut rows = Vec::new();
    for ledger in &ledgers {
        for v in verify_bounds(ledger, &config.comparator_grid, &config.stability_windows)? {
            rows.push(VerdictRow::from(&v));
        }
    }
    write_verdicts(&args.out.join("verdicts.csv"), &rows)?;
    let failures = rows.iter().filter(|r| !r.pass).count();
    if !args.quiet {
        println!("{} verdicts over {} ledgers, {failures} failures", rows.len(), ledgers.len());
    }
    Ok(failures == 0)
}

fn replay_all(args: ReplayArgs) -> anyhow::Result<bool> {
    let ledgers = read_ledgers(&args.out.join("ledgers"))?;
    let mut ok = true;
    for ledger in &ledgers {
        let report = replay(ledger)?;
        if !report.mismatches.is_empty() {
            ok = false;
        }
        if !args.quiet || !report.mismatches.is_empty() {
            println!(
                "{} trial {}: {} rounds, {} mismatches",
                ledger.meta.algorithm,
                ledger.meta.trial,
                report.rounds,
                report.mismatches.len()
            );
        }
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(args),
        Command::Verify(args) => verify(args),
        Command::Replay(args) => replay_all(args),
        Command::Bench(args) => bench(args),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
