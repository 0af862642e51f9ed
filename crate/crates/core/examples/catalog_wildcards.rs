//! Registers a small replica catalog and resolves wildcard patterns against
//! it.

use gridbroker::catalog::{Catalog, LogicalFileName, Replica};
use gridbroker::ids::DataHostId;

fn main() -> anyhow::Result<()> {
    let hosts = ["melbourne", "adelaide", "anu"];
    let mut catalog = Catalog::new(hosts.map(DataHostId::new));
    for i in 1..=12 {
        let lfn =
            LogicalFileName::parse(&format!("lfn:/users/analyst/fsimddks/fsimdata{i:03}.mdst"))?;
        let host = hosts[i % hosts.len()];
        catalog.register(
            lfn,
            30_000_000,
            vec![Replica::new(host, format!("/belle/{i:03}.mdst"))],
        )?;
    }
    // a second replica of the first file
    let first = LogicalFileName::parse("lfn:/users/analyst/fsimddks/fsimdata001.mdst")?;
    catalog.register(
        first.clone(),
        30_000_000,
        vec![Replica::new("anu", "/mirror/001.mdst")],
    )?;

    for pattern in [
        "lfn:/users/analyst/fsimddks/fsimdata*.mdst",
        "lfn:/users/*/fsimddks/fsimdata00?.mdst",
        "lfn:/users/analyst/fsimddks/fsimdata01?.mdst",
        "lfn:/users/analyst/*.mdst",
    ] {
        let hits = catalog.resolve_wildcard(pattern)?;
        println!("{pattern}: {} match(es)", hits.len());
    }

    let entry = catalog.lookup_replicas(&first)?;
    println!("\n{} ({} bytes) is stored on:", entry.lfn, entry.size);
    for r in &entry.replicas {
        println!("  {} at {}", r.host, r.path);
    }
    println!(
        "\n{} entries under lfn:/users/analyst",
        catalog.list_directory("lfn:/users/analyst").len()
    );
    Ok(())
}
