use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use gridbroker::experiment::{compare_policies, run_experiment};
use gridbroker::scenario::{load_plan, load_scenario};
use gridbroker::scheduler::Policy;

/// Schedule a parameter-sweep plan on a simulated data grid.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    /// Plan file, or a built-in plan name.
    #[arg(long, default_value = "belle-analysis")]
    plan: String,
    /// Scenario TOML file, or a built-in scenario name.
    #[arg(long, default_value = "belle-default")]
    scenario: String,
    #[arg(long, default_value = "adaptive", value_parser = parse_policy)]
    policy: Policy,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for reports, bookkeeper logs and CSV series.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run all three policies and print a comparison table.
    #[arg(long)]
    compare: bool,
    /// Override the scenario's scheduling interval in seconds.
    #[arg(long)]
    event_interval: Option<f64>,
}

fn parse_policy(s: &str) -> Result<Policy, String> {
    s.parse()
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(args: Args) -> Result<()> {
    let mut scenario = load_scenario(&args.scenario)?;
    if let Some(i) = args.event_interval {
        anyhow::ensure!(
            i.is_finite() && i > 0.0,
            "--event-interval must be positive"
        );
        scenario.event_interval = i;
    }
    let plan = load_plan(&args.plan)?;
    let out = args.out.as_deref();
    if args.compare {
        let (table, _) =
            compare_policies(&scenario, &plan, args.seed, out).context("comparison run failed")?;
        print!("{}", table.render());
    } else {
        let output = run_experiment(&scenario, &plan, args.policy, args.seed, out)
            .context("experiment run failed")?;
        let r = &output.report;
        println!(
            "{} on {}: {} done, {} failed, total {:.1}s, {:.1} MB transferred",
            r.policy,
            r.scenario,
            r.done,
            r.failed,
            r.total_time,
            r.bytes_transferred as f64 / 1e6
        );
        for (server, c) in &r.servers {
            println!("  {server:<20} done {:>3}  failed {:>3}", c.done, c.failed);
        }
    }
    if let Some(dir) = out {
        println!("wrote results to {}", dir.display());
    }
    Ok(())
}
