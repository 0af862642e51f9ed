//! Walks the default testbed's bandwidth trace, showing each data host's
//! servers in bandwidth order and the completion-time estimate for one
//! Adelaide file on every server.

use gridbroker::ids::{DataHostId, ServerId};
use gridbroker::scenario::load_scenario;

fn main() -> anyhow::Result<()> {
    let scenario = load_scenario("belle-default")?;
    let mut grid = scenario.grid(0);
    let adelaide = DataHostId::new("adelaide");
    for t in [0.0, 600.0, 1200.0] {
        grid.update_measurements(t);
        println!("t = {t}s");
        for host in grid.hosts.values() {
            let ranked: Vec<String> = host
                .sorted_compute_cache
                .iter()
                .map(|s| {
                    let bw = grid.available_bandwidth(&host.id, s).unwrap();
                    if bw.is_infinite() {
                        format!("{s}(local)")
                    } else {
                        format!("{s}({bw:.2})")
                    }
                })
                .collect();
            println!("  {:<18} {}", host.id.to_string(), ranked.join(" "));
        }
    }

    let file = grid
        .files
        .values()
        .find(|f| f.hosts.contains(&adelaide))
        .unwrap()
        .clone();
    println!(
        "\nestimates for {} ({} MB) read from adelaide:",
        file.lfn,
        file.size / 1_000_000
    );
    for id in grid.servers.keys().cloned().collect::<Vec<ServerId>>() {
        let ect = grid.estimated_completion_time(&id, Some(&file), Some(&adelaide))?;
        println!(
            "  {:<18} {}",
            id.to_string(),
            ect.map_or("infeasible".into(), |t| format!("{t:.1}s"))
        );
    }

    let server = grid.server_mut(&ServerId::new("sydney"))?;
    for seconds in [150.0, 90.0, 110.0] {
        server.rate.observe(seconds)?;
        println!(
            "sydney observed {seconds}s, estimate now {:.1}s",
            server.rate.estimate()
        );
    }
    Ok(())
}
