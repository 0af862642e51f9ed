//! Takes the Adelaide gatekeeper down at t=0 (its data service stays up) and
//! compares where the Adelaide-hosted jobs end up under each policy.

use std::collections::BTreeMap;

use gridbroker::experiment::{prepare_jobs, simulate};
use gridbroker::scenario::{load_plan, load_scenario};
use gridbroker::scheduler::Policy;

fn main() -> anyhow::Result<()> {
    let scenario = load_scenario("belle-adelaide-down")?;
    let plan = load_plan("belle-analysis")?;
    for f in &scenario.failures {
        println!(
            "script: t={} {:?} {} {:?}",
            f.time, f.action, f.resource, f.component
        );
    }
    let catalog = scenario.catalog();
    let on_adelaide: Vec<usize> = prepare_jobs(&scenario, &plan)?
        .jobs
        .iter()
        .filter(|j| {
            let entry = catalog
                .lookup_replicas(j.required_lfn.as_ref().unwrap())
                .unwrap();
            entry.hosts().any(|h| h.as_str() == "adelaide")
        })
        .map(|j| j.id.index())
        .collect();

    for policy in Policy::ALL {
        let report = simulate(&scenario, &plan, policy, 0)?.report;
        let mut placed: BTreeMap<String, usize> = BTreeMap::new();
        for &i in &on_adelaide {
            let at = report.jobs[i]
                .server
                .as_ref()
                .map_or("never placed".into(), |s| s.to_string());
            *placed.entry(at).or_default() += 1;
        }
        println!(
            "\n{policy}: {} done, {} failed, {:.1}s",
            report.done, report.failed, report.total_time
        );
        println!("  Adelaide-hosted jobs ran on: {placed:?}");
    }
    Ok(())
}
