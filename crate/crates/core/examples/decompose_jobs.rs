//! Resolves the analysis plan against the default testbed catalog and
//! expands it into jobs, printing the first few and the manifest line
//! format.

use gridbroker::experiment::prepare_jobs;
use gridbroker::scenario::{load_plan, load_scenario};

fn main() -> anyhow::Result<()> {
    let scenario = load_scenario("belle-default")?;
    let plan = load_plan("belle-analysis")?;
    let jobs = prepare_jobs(&scenario, &plan)?;
    println!("{} jobs", jobs.len());
    for job in jobs.jobs.iter().take(3) {
        println!("\n{} reads {}", job.id, job.required_lfn.as_ref().unwrap());
        for c in job.task.nodestart.iter().take(2).chain(&job.task.main) {
            println!("  {c}");
        }
    }
    let manifest = jobs.manifest_string();
    println!(
        "\nfirst manifest record:\n{}",
        manifest.lines().next().unwrap()
    );
    Ok(())
}
