//! Scenario files: the testbed, its replica catalog, bandwidth trace and
//! failure script, in TOML. See `docs/scenario-format.md`.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, LogicalFileName, Replica};
use crate::grid::{
    BandwidthTrace, ComputeServer, DataFile, DataHost, GridModel, RateEstimator, TraceStep,
};
use crate::ids::ServerId;
use crate::plan::{parse_plan, Diagnostic, PlanFile};
use crate::scheduler::{Policy, SchedulerConfig};
use crate::sim::{Component, FailureEntry, SimConfig};

const BELLE_DEFAULT: &str = include_str!("../data/belle-default.toml");
const BELLE_ADELAIDE_DOWN: &str = include_str!("../data/belle-adelaide-down.toml");
const BELLE_PLAN: &str = include_str!("../data/belle-analysis.plan");

/// Scenarios shipped with the crate, by name.
pub const BUILTIN_SCENARIOS: [(&str, &str); 2] = [
    ("belle-default", BELLE_DEFAULT),
    ("belle-adelaide-down", BELLE_ADELAIDE_DOWN),
];

/// Plans shipped with the crate, by name.
pub const BUILTIN_PLANS: [(&str, &str); 1] = [("belle-analysis", BELLE_PLAN)];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error("plan errors:\n  {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n  "))]
    Plan(Vec<Diagnostic>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSpec {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Initial per-job service estimate at speed factor 1.
    #[serde(default = "default_work")]
    pub prior_seconds: f64,
}

impl Default for EstimatorSpec {
    fn default() -> Self {
        Self {
            alpha: default_alpha(),
            prior_seconds: default_work(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerSpec {
    pub id: String,
    pub cpus: u32,
    #[serde(default = "one")]
    pub speed: f64,
    pub max_jobs: u32,
    #[serde(default = "default_middleware")]
    pub middleware: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataHostSpec {
    pub id: String,
    #[serde(default)]
    pub co_located_compute: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    #[serde(default = "yes")]
    pub symmetric: bool,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub trace: Vec<TraceStep>,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            symmetric: true,
            noise: 0.0,
            trace: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogSpec {
    pub lfn: String,
    pub size_bytes: u64,
    pub replicas: Vec<Replica>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Member receiving job output; output return is free when unset.
    #[serde(default)]
    pub broker_host: Option<String>,
    #[serde(default = "default_interval")]
    pub event_interval: f64,
    #[serde(default = "default_work")]
    pub job_work_seconds: f64,
    #[serde(default)]
    pub stage_in_seconds: f64,
    #[serde(default = "default_output_bytes")]
    pub output_bytes: u64,
    #[serde(default)]
    pub streaming_overlap: f64,
    #[serde(default = "default_attempts")]
    pub max_attempts: Option<u32>,
    #[serde(default = "default_confirmations")]
    pub data_local_failure_events: u32,
    #[serde(default)]
    pub infeasible_event_limit: Option<u32>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub estimator: EstimatorSpec,
    pub servers: Vec<ServerSpec>,
    #[serde(default)]
    pub data_hosts: Vec<DataHostSpec>,
    #[serde(default)]
    pub network: NetworkSpec,
    #[serde(default)]
    pub catalog: Vec<CatalogSpec>,
    #[serde(default)]
    pub failures: Vec<FailureEntry>,
}

fn default_alpha() -> f64 {
    0.3
}
fn default_work() -> f64 {
    120.0
}
fn default_interval() -> f64 {
    30.0
}
fn default_output_bytes() -> u64 {
    968_000
}
fn default_attempts() -> Option<u32> {
    Some(5)
}
fn default_confirmations() -> u32 {
    3
}
fn default_horizon() -> f64 {
    1.0e7
}
fn default_middleware() -> String {
    "globus".into()
}
fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}

impl Scenario {
    /// Parses and validates TOML text.
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text)?;
        let problems = s.validate();
        if problems.is_empty() {
            Ok(s)
        } else {
            Err(ScenarioError::Invalid(problems))
        }
    }

    pub fn builtin(name: &str) -> Option<Self> {
        BUILTIN_SCENARIOS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| Self::from_toml_str(text).expect("shipped scenario is valid"))
    }

    /// Field-path diagnostics for every problem found.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let mut err = |path: String, msg: &str| errs.push(format!("{path}: {msg}"));
        let finite_pos = |v: f64| v.is_finite() && v > 0.0;

        if !finite_pos(self.event_interval) {
            err("event_interval".into(), "must be positive");
        }
        if !finite_pos(self.job_work_seconds) {
            err("job_work_seconds".into(), "must be positive");
        }
        if !(self.stage_in_seconds.is_finite() && self.stage_in_seconds >= 0.0) {
            err("stage_in_seconds".into(), "must be non-negative");
        }
        if !finite_pos(self.horizon) {
            err("horizon".into(), "must be positive");
        }
        if !(0.0..=1.0).contains(&self.streaming_overlap) {
            err("streaming_overlap".into(), "must be in [0, 1]");
        }
        if self.max_attempts == Some(0) {
            err("max_attempts".into(), "must be at least 1");
        }
        if self.data_local_failure_events == 0 {
            err("data_local_failure_events".into(), "must be at least 1");
        }
        if !(self.estimator.alpha > 0.0 && self.estimator.alpha <= 1.0) {
            err("estimator.alpha".into(), "must be in (0, 1]");
        }
        if !finite_pos(self.estimator.prior_seconds) {
            err("estimator.prior_seconds".into(), "must be positive");
        }

        if self.servers.is_empty() {
            err("servers".into(), "at least one compute server is required");
        }
        let mut server_ids = BTreeSet::new();
        for (i, s) in self.servers.iter().enumerate() {
            if !server_ids.insert(s.id.as_str()) {
                err(format!("servers[{i}].id"), "duplicate server id");
            }
            if s.cpus == 0 {
                err(format!("servers[{i}].cpus"), "must be at least 1");
            }
            if s.max_jobs == 0 {
                err(format!("servers[{i}].max_jobs"), "must be at least 1");
            }
            if !finite_pos(s.speed) {
                err(format!("servers[{i}].speed"), "must be positive");
            }
        }
        let mut host_ids = BTreeSet::new();
        for (i, h) in self.data_hosts.iter().enumerate() {
            if !host_ids.insert(h.id.as_str()) {
                err(format!("data_hosts[{i}].id"), "duplicate data host id");
            }
            if let Some(c) = &h.co_located_compute {
                if !server_ids.contains(c.as_str()) {
                    err(
                        format!("data_hosts[{i}].co_located_compute"),
                        "unknown server",
                    );
                }
            }
        }
        let member = |m: &str| server_ids.contains(m) || host_ids.contains(m);

        if let Some(b) = &self.broker_host {
            if !member(b) {
                err("broker_host".into(), "not a declared server or data host");
            }
            for (i, s) in self.servers.iter().enumerate() {
                let linked = self.network.trace.iter().flat_map(|t| &t.links).any(|l| {
                    (l.from == s.id && l.to == *b)
                        || (self.network.symmetric && l.to == s.id && l.from == *b)
                });
                if s.id != *b && !linked {
                    err(
                        format!("servers[{i}]"),
                        "no network link to broker_host for returning output",
                    );
                }
            }
        }
        if !(self.network.noise >= 0.0 && self.network.noise < 1.0) {
            err("network.noise".into(), "must be in [0, 1)");
        }
        for (i, step) in self.network.trace.iter().enumerate() {
            if !(step.from_time.is_finite() && step.from_time >= 0.0) {
                err(
                    format!("network.trace[{i}].from_time"),
                    "must be non-negative",
                );
            }
            for (j, l) in step.links.iter().enumerate() {
                let p = format!("network.trace[{i}].links[{j}]");
                if !member(&l.from) {
                    err(format!("{p}.from"), "unknown member");
                }
                if !member(&l.to) {
                    err(format!("{p}.to"), "unknown member");
                }
                if !(l.mbps.is_finite() && l.mbps >= 0.0) {
                    err(format!("{p}.mbps"), "must be non-negative");
                }
            }
        }

        let mut seen = BTreeSet::new();
        for (i, c) in self.catalog.iter().enumerate() {
            match LogicalFileName::parse(&c.lfn) {
                Ok(lfn) => {
                    if !seen.insert(lfn) {
                        err(format!("catalog[{i}].lfn"), "duplicate entry");
                    }
                }
                Err(e) => err(format!("catalog[{i}].lfn"), &e.to_string()),
            }
            if c.size_bytes == 0 {
                err(format!("catalog[{i}].size_bytes"), "must be positive");
            }
            if c.replicas.is_empty() {
                err(
                    format!("catalog[{i}].replicas"),
                    "at least one replica is required",
                );
            }
            for (j, r) in c.replicas.iter().enumerate() {
                if !host_ids.contains(r.host.as_str()) {
                    err(
                        format!("catalog[{i}].replicas[{j}].host"),
                        "undeclared data host",
                    );
                }
            }
        }

        for (i, f) in self.failures.iter().enumerate() {
            let known = match f.component {
                Component::Compute => server_ids.contains(f.resource.as_str()),
                Component::Data => host_ids.contains(f.resource.as_str()),
            };
            if !known {
                err(format!("failures[{i}].resource"), "undeclared resource");
            }
            if !(f.time.is_finite() && f.time >= 0.0 && f.time <= self.horizon) {
                err(
                    format!("failures[{i}].time"),
                    "outside the simulation horizon",
                );
            }
        }
        errs
    }

    pub fn catalog(&self) -> Catalog {
        let mut cat = Catalog::new(self.data_hosts.iter().map(|h| h.id.as_str().into()));
        for c in &self.catalog {
            let lfn = LogicalFileName::parse(&c.lfn).expect("validated");
            cat.register(lfn, c.size_bytes, c.replicas.clone())
                .expect("validated");
        }
        cat
    }

    pub fn grid(&self, seed: u64) -> GridModel {
        let estimator = RateEstimator::new(self.estimator.alpha, self.estimator.prior_seconds)
            .expect("validated");
        let servers = self.servers.iter().map(|s| {
            let mut cs = ComputeServer::new(
                s.id.as_str(),
                s.cpus,
                s.speed,
                s.max_jobs,
                estimator.clone(),
            );
            cs.middleware_tag = s.middleware.clone();
            cs
        });
        let hosts = self.data_hosts.iter().map(|h| {
            DataHost::new(
                h.id.as_str(),
                h.co_located_compute.as_deref().map(ServerId::from),
            )
        });
        let catalog = self.catalog();
        let files: Vec<DataFile> = catalog.entries().map(DataFile::from).collect();
        let trace = BandwidthTrace {
            steps: self.network.trace.clone(),
            symmetric: self.network.symmetric,
            noise: self.network.noise,
        };
        let mut grid = GridModel::new(servers, hosts, files, trace, seed);
        grid.broker_member = self.broker_host.clone();
        grid
    }

    pub fn sim_config(&self, policy: Policy, seed: u64) -> SimConfig {
        SimConfig {
            policy,
            seed,
            event_interval: self.event_interval,
            job_work_seconds: self.job_work_seconds,
            stage_in_seconds: self.stage_in_seconds,
            output_bytes: self.output_bytes,
            streaming_overlap: self.streaming_overlap,
            max_attempts: self.max_attempts,
            horizon: self.horizon,
            scheduler: SchedulerConfig {
                data_local_failure_events: self.data_local_failure_events,
                infeasible_event_limit: self.infeasible_event_limit,
            },
        }
    }
}

/// A built-in scenario name or a path to a TOML file.
pub fn load_scenario(name_or_path: &str) -> Result<Scenario, ScenarioError> {
    if let Some(s) = Scenario::builtin(name_or_path) {
        return Ok(s);
    }
    let text = read(Path::new(name_or_path))?;
    Scenario::from_toml_str(&text)
}

/// A built-in plan name or a path to a plan file.
pub fn load_plan(name_or_path: &str) -> Result<PlanFile, ScenarioError> {
    let text = match BUILTIN_PLANS.iter().find(|(n, _)| *n == name_or_path) {
        Some((_, t)) => t.to_string(),
        None => read(Path::new(name_or_path))?,
    };
    parse_plan(&text).map_err(ScenarioError::Plan)
}

pub fn builtin_plan_text(name: &str) -> Option<&'static str> {
    BUILTIN_PLANS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
}

fn read(path: &Path) -> Result<String, ScenarioError> {
    fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })
}
