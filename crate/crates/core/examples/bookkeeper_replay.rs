//! Runs one policy, writes the bookkeeper log to a temporary file, reads it
//! back and rebuilds the report from the log alone.

use std::collections::BTreeMap;
use std::io::BufReader;

use gridbroker::experiment::simulate;
use gridbroker::scenario::{load_plan, load_scenario};
use gridbroker::scheduler::Policy;
use gridbroker::sim::{read_log, replay, LogRecord};

fn main() -> anyhow::Result<()> {
    let scenario = load_scenario("belle-adelaide-down")?;
    let out = simulate(
        &scenario,
        &load_plan("belle-analysis")?,
        Policy::Adaptive,
        0,
    )?;

    let mut file = tempfile::tempfile()?;
    out.log.write_to(&mut file)?;
    std::io::Seek::rewind(&mut file)?;
    let records = read_log(BufReader::new(file))?;

    let mut kinds: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &records {
        let k = match r {
            LogRecord::Header { .. } => "header",
            LogRecord::Status { .. } => "status",
            LogRecord::Transfer { .. } => "transfer",
            LogRecord::Execution { .. } => "execution",
            LogRecord::Decision { .. } => "decision",
            LogRecord::Measurement { .. } => "measurement",
            LogRecord::Resource { .. } => "resource",
        };
        *kinds.entry(k).or_default() += 1;
    }
    println!("{} records: {kinds:?}", records.len());

    let rebuilt = replay(&records)?;
    println!(
        "replayed report equals live report: {}",
        rebuilt == out.report
    );
    println!(
        "{} done, {} failed, {:.1}s, {} MB moved",
        rebuilt.done,
        rebuilt.failed,
        rebuilt.total_time,
        rebuilt.bytes_transferred / 1_000_000
    );
    Ok(())
}
