//! Runs all three policies on a testbed and prints the comparison table.
//! With an output directory, the CSV series are written there too.
//!
//!     cargo run --example compare_policies -- [scenario] [seed] [out-dir]

use std::path::PathBuf;

use gridbroker::experiment::compare_policies;
use gridbroker::scenario::{load_plan, load_scenario};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let scenario = load_scenario(&args.next().unwrap_or_else(|| "belle-default".into()))?;
    let seed: u64 = args.next().map_or(Ok(0), |s| s.parse())?;
    let out: Option<PathBuf> = args.next().map(PathBuf::from);
    let plan = load_plan("belle-analysis")?;

    let (table, _) = compare_policies(&scenario, &plan, seed, out.as_deref())?;
    println!("{} (seed {seed})\n", scenario.name);
    print!("{}", table.render());
    print!("\n{}", table.comparison_csv());
    if let Some(dir) = out {
        println!("\nseries written to {}", dir.display());
    }
    Ok(())
}
