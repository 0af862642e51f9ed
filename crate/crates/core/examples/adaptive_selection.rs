//! Runs one scheduling event by hand on the default testbed and prints, for
//! the first job of each data host, every candidate pair and the choice each
//! policy makes.

use gridbroker::experiment::prepare_jobs;
use gridbroker::scenario::{load_plan, load_scenario};
use gridbroker::scheduler::{candidate_pairs, run_scheduling_event, select, BrokerState, Policy};

fn main() -> anyhow::Result<()> {
    let scenario = load_scenario("belle-default")?;
    let jobs = prepare_jobs(&scenario, &load_plan("belle-analysis")?)?;
    let state = BrokerState::new(scenario.grid(0), jobs.jobs, Default::default());

    for idx in [0, 20, 40, 60, 80] {
        let job = &state.jobs[idx];
        println!("{} ({})", job.id, job.required_lfn.as_ref().unwrap());
        for pair in &candidate_pairs(job, &state).pairs {
            println!(
                "  {:<18} <- {:<18} {:.1}s",
                pair.server.to_string(),
                pair.data_host
                    .as_ref()
                    .map_or("-".into(), |h| h.to_string()),
                pair.estimated_completion
            );
        }
        for p in Policy::ALL {
            let choice = select(p, job, &state);
            println!(
                "  {:<13} {}",
                p.name(),
                choice
                    .chosen()
                    .map_or("none".into(), |c| c.server.to_string())
            );
        }
    }

    let mut state = state;
    let outcome = run_scheduling_event(&mut state, Policy::Adaptive, 0.0)?;
    println!(
        "\nfirst adaptive event placed {} jobs:",
        outcome.assignments.len()
    );
    for a in &outcome.assignments {
        println!(
            "  {} -> {} (done by {:.0}s)",
            a.job, a.server, a.predicted_completion
        );
    }
    Ok(())
}
