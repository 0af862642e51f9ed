//! Running scenarios end to end and comparing policies.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::decompose::{decompose, resolve_dynamic_parameters, DecomposeError, JobSet};
use crate::ids::ServerId;
use crate::plan::PlanFile;
use crate::scenario::Scenario;
use crate::scheduler::Policy;
use crate::sim::{ExperimentReport, ServerCounts, SimError, SimOutput, Simulation};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Decompose(#[from] DecomposeError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Resolves the plan against the scenario's catalog and decomposes it.
pub fn prepare_jobs(scenario: &Scenario, plan: &PlanFile) -> Result<JobSet, DecomposeError> {
    let resolved = resolve_dynamic_parameters(plan, &scenario.catalog())?;
    decompose(&resolved)
}

/// Runs one policy in memory.
pub fn simulate(
    scenario: &Scenario,
    plan: &PlanFile,
    policy: Policy,
    seed: u64,
) -> Result<SimOutput, ExperimentError> {
    let jobs = prepare_jobs(scenario, plan)?;
    let sim = Simulation::new(
        scenario.name.clone(),
        scenario.grid(seed),
        jobs.jobs,
        scenario.sim_config(policy, seed),
        scenario.failures.clone(),
    )?;
    Ok(sim.run()?)
}

/// Runs one policy and, when `out` is given, writes `<policy>.json`,
/// `<policy>.log` and `jobs.jsonl` there.
pub fn run_experiment(
    scenario: &Scenario,
    plan: &PlanFile,
    policy: Policy,
    seed: u64,
    out: Option<&Path>,
) -> Result<SimOutput, ExperimentError> {
    let output = simulate(scenario, plan, policy, seed)?;
    if let Some(dir) = out {
        write_run(dir, scenario, plan, &output)?;
    }
    Ok(output)
}

fn write_run(
    dir: &Path,
    scenario: &Scenario,
    plan: &PlanFile,
    output: &SimOutput,
) -> Result<(), ExperimentError> {
    let policy = output.report.policy;
    let mut report = output.report.to_json();
    report.push('\n');
    write_atomic(&dir.join(format!("{policy}.json")), report.as_bytes())?;
    write_atomic(
        &dir.join(format!("{policy}.log")),
        output.log.to_jsonl().as_bytes(),
    )?;
    let manifest = prepare_jobs(scenario, plan)?.manifest_string();
    write_atomic(&dir.join("jobs.jsonl"), manifest.as_bytes())
}

/// Writes through a temporary file in the same directory and renames it
/// into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), ExperimentError> {
    let io_err = |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io_err)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(contents).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub policy: Policy,
    pub total_time: f64,
    pub done: usize,
    pub failed: usize,
    pub bytes_transferred: u64,
    pub servers: BTreeMap<ServerId, ServerCounts>,
}

impl From<&ExperimentReport> for ComparisonRow {
    fn from(r: &ExperimentReport) -> Self {
        Self {
            policy: r.policy,
            total_time: r.total_time,
            done: r.done,
            failed: r.failed,
            bytes_transferred: r.bytes_transferred,
            servers: r.servers.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn from_reports<'a>(reports: impl IntoIterator<Item = &'a ExperimentReport>) -> Self {
        Self {
            rows: reports.into_iter().map(ComparisonRow::from).collect(),
        }
    }

    pub fn row(&self, policy: Policy) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.policy == policy)
    }

    /// Aligned text table with one done/failed column per server.
    pub fn render(&self) -> String {
        let servers: Vec<&ServerId> = self
            .rows
            .iter()
            .flat_map(|r| r.servers.keys())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut header = vec![
            "policy".to_string(),
            "total_s".into(),
            "done".into(),
            "failed".into(),
            "MB_moved".into(),
        ];
        header.extend(servers.iter().map(|s| s.to_string()));
        let mut lines = vec![header];
        for r in &self.rows {
            let mut cells = vec![
                r.policy.to_string(),
                format!("{:.1}", r.total_time),
                r.done.to_string(),
                r.failed.to_string(),
                format!("{:.1}", r.bytes_transferred as f64 / 1e6),
            ];
            for s in &servers {
                let c = r.servers.get(*s).copied().unwrap_or_default();
                cells.push(format!("{}/{}", c.done, c.failed));
            }
            lines.push(cells);
        }
        let widths: Vec<usize> = (0..lines[0].len())
            .map(|i| lines.iter().map(|l| l[i].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for l in &lines {
            let cells: Vec<String> = l
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, w))| {
                    if i == 0 {
                        format!("{c:<w$}")
                    } else {
                        format!("{c:>w$}")
                    }
                })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }

    pub fn comparison_csv(&self) -> String {
        let mut s = String::from("policy,total_time,done,failed,bytes_transferred\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.policy, r.total_time, r.done, r.failed, r.bytes_transferred
            );
        }
        s
    }

    pub fn server_jobs_csv(&self) -> String {
        let mut s = String::from("policy,server,done,failed\n");
        for r in &self.rows {
            for (id, c) in &r.servers {
                let _ = writeln!(s, "{},{},{},{}", r.policy, id, c.done, c.failed);
            }
        }
        s
    }
}

/// Bandwidth samples of every run as `policy,time,from,to,mbps` rows.
pub fn bandwidth_csv(reports: &[&ExperimentReport]) -> String {
    let mut s = String::from("policy,time,from,to,mbps\n");
    for r in reports {
        for b in &r.bandwidth {
            let _ = writeln!(s, "{},{},{},{},{}", r.policy, b.time, b.from, b.to, b.mbps);
        }
    }
    s
}

/// Runs all three policies with the same seed, concurrently. With `out`,
/// each run's files plus `comparison.csv`, `server_jobs.csv` and
/// `bandwidth.csv` are written there.
pub fn compare_policies(
    scenario: &Scenario,
    plan: &PlanFile,
    seed: u64,
    out: Option<&Path>,
) -> Result<(ComparisonTable, Vec<SimOutput>), ExperimentError> {
    let results: Vec<Result<SimOutput, ExperimentError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = Policy::ALL
            .into_iter()
            .map(|p| scope.spawn(move || simulate(scenario, plan, p, seed)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    });
    let outputs = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let table = ComparisonTable::from_reports(outputs.iter().map(|o| &o.report));
    if let Some(dir) = out {
        for o in &outputs {
            write_run(dir, scenario, plan, o)?;
        }
        write_atomic(
            &dir.join("comparison.csv"),
            table.comparison_csv().as_bytes(),
        )?;
        write_atomic(
            &dir.join("server_jobs.csv"),
            table.server_jobs_csv().as_bytes(),
        )?;
        let reports: Vec<&ExperimentReport> = outputs.iter().map(|o| &o.report).collect();
        write_atomic(
            &dir.join("bandwidth.csv"),
            bandwidth_csv(&reports).as_bytes(),
        )?;
    }
    Ok((table, outputs))
}
