//! Parses a plan file (the built-in analysis plan by default), prints the
//! declarations it found, then shows the diagnostics for a broken plan.
//!
//!     cargo run --example parse_plan -- [path/to/file.plan]

use gridbroker::plan::{parse_plan, validate_plan};
use gridbroker::scenario::builtin_plan_text;

fn main() -> anyhow::Result<()> {
    let text = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(path)?,
        None => builtin_plan_text("belle-analysis").unwrap().to_owned(),
    };
    match parse_plan(&text) {
        Ok(plan) => {
            for p in &plan.parameters {
                println!(
                    "parameter {} ({}) on line {}",
                    p.name,
                    p.kind.keyword(),
                    p.line.get()
                );
            }
            for t in &plan.tasks {
                println!("task {} with {} commands", t.name, t.commands.len());
                for c in &t.commands {
                    println!("  {c}");
                }
            }
            assert!(validate_plan(&plan).is_empty());
            println!("\ncanonical form:\n{plan}");
        }
        Err(diags) => {
            for d in diags {
                println!("{d}");
            }
        }
    }

    println!("a plan with mistakes:");
    let broken = "parameter X Set 1 2 2;\ntask main\n  copy $Y out\nendtask\n";
    for d in parse_plan(broken).unwrap_err() {
        println!("  {d}");
    }
    Ok(())
}
