//! Expansion of a plan into jobs: dynamic parameters are resolved against
//! the catalog, then one job is created per combination of parameter values.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, CatalogError, LogicalFileName};
use crate::ids::{DataHostId, JobId, ServerId};
use crate::plan::{Command, ParameterKind, PlanFile, JOBNAME_VAR, MAIN_TASK, NODESTART_TASK};

#[derive(Debug, Error, PartialEq)]
pub enum DecomposeError {
    #[error("gridfile parameter `{name}` matches no catalog entries (pattern `{pattern}`)")]
    EmptyGridfile { name: String, pattern: String },
    #[error("parameter `{name}`: {source}")]
    Catalog {
        name: String,
        #[source]
        source: CatalogError,
    },
    #[error("plans with more than one gridfile parameter are not supported ({0:?})")]
    MultipleGridfiles(Vec<String>),
    #[error("parameter `{0}` has an empty domain")]
    EmptyDomain(String),
}

#[derive(Debug, Error, PartialEq)]
#[error("{job}: illegal status change {from:?} -> {to:?}")]
pub struct TransitionError {
    pub job: JobId,
    pub from: JobStatus,
    pub to: JobStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Unassigned,
    Queued,
    Executing,
    Done,
    Failed,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Done | JobStatus::Failed)
    }

    pub fn can_become(self, to: JobStatus) -> bool {
        use JobStatus::*;
        matches!(
            (self, to),
            (Unassigned, Queued)
                | (Queued, Executing)
                | (Executing, Done)
                | (Executing, Failed)
                | (Failed, Unassigned)
                | (Queued, Unassigned)
                // the scheduler declares a never-placeable job failed
                | (Unassigned, Failed)
        )
    }
}

/// Concrete domain of one parameter after resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterDomain {
    pub name: String,
    pub values: Vec<String>,
    pub dynamic: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedPlan {
    pub plan: PlanFile,
    pub domains: Vec<ParameterDomain>,
}

/// Job command lists with every parameter reference substituted.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResolvedTask {
    pub nodestart: Vec<Command>,
    pub main: Vec<Command>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub id: JobId,
    pub bindings: BTreeMap<String, String>,
    pub task: ResolvedTask,
    pub required_lfn: Option<LogicalFileName>,
    pub status: JobStatus,
    pub assigned_server: Option<ServerId>,
    pub chosen_data_host: Option<DataHostId>,
    pub attempt_count: u32,
}

impl Job {
    pub fn transition(&mut self, to: JobStatus) -> Result<(), TransitionError> {
        if !self.status.can_become(to) {
            return Err(TransitionError {
                job: self.id,
                from: self.status,
                to,
            });
        }
        self.status = to;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct JobSet {
    pub jobs: Vec<Job>,
}

impl JobSet {
    pub fn len(&self) -> usize {
        self.jobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jobs.is_empty()
    }

    /// Writes one JSON record per job.
    pub fn write_manifest(&self, out: &mut impl Write) -> std::io::Result<()> {
        for job in &self.jobs {
            let rec = ManifestRecord::from(job);
            serde_json::to_writer(&mut *out, &rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn manifest_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_manifest(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("manifest is UTF-8")
    }
}

/// Line of the job manifest export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: JobId,
    pub bindings: BTreeMap<String, String>,
    pub required_lfn: Option<LogicalFileName>,
    pub nodestart: Vec<String>,
    pub main: Vec<String>,
}

impl From<&Job> for ManifestRecord {
    fn from(job: &Job) -> Self {
        let render = |cmds: &[Command]| cmds.iter().map(ToString::to_string).collect();
        Self {
            id: job.id,
            bindings: job.bindings.clone(),
            required_lfn: job.required_lfn.clone(),
            nodestart: render(&job.task.nodestart),
            main: render(&job.task.main),
        }
    }
}

/// Makes every parameter domain concrete; gridfile patterns become the
/// sorted list of matching catalog names.
pub fn resolve_dynamic_parameters(
    plan: &PlanFile,
    catalog: &Catalog,
) -> Result<ResolvedPlan, DecomposeError> {
    let mut domains = Vec::with_capacity(plan.parameters.len());
    for p in &plan.parameters {
        let (values, dynamic) = match &p.kind {
            ParameterKind::Single(v) => (vec![v.clone()], false),
            ParameterKind::Set(vs) => (vs.clone(), false),
            ParameterKind::Range { lo, hi, step } => (expand_range(*lo, *hi, *step), false),
            ParameterKind::Gridfile(pattern) => {
                let lfns = catalog.resolve_wildcard(pattern).map_err(|source| {
                    DecomposeError::Catalog {
                        name: p.name.clone(),
                        source,
                    }
                })?;
                if lfns.is_empty() {
                    return Err(DecomposeError::EmptyGridfile {
                        name: p.name.clone(),
                        pattern: pattern.clone(),
                    });
                }
                (lfns.into_iter().map(String::from).collect(), true)
            }
        };
        domains.push(ParameterDomain {
            name: p.name.clone(),
            values,
            dynamic,
        });
    }
    Ok(ResolvedPlan {
        plan: plan.clone(),
        domains,
    })
}

fn decimals(x: f64) -> usize {
    let s = x.to_string();
    s.find('.').map(|i| s.len() - i - 1).unwrap_or(0)
}

/// `lo, lo + step, ...` up to and including `hi`.
pub fn expand_range(lo: f64, hi: f64, step: f64) -> Vec<String> {
    if step.is_nan() || step <= 0.0 || lo > hi {
        return Vec::new();
    }
    let prec = decimals(lo).max(decimals(step));
    let eps = step * 1e-9;
    let mut out = Vec::new();
    let mut i = 0u64;
    loop {
        let v = lo + i as f64 * step;
        if v > hi + eps {
            break;
        }
        out.push(format!("{v:.prec$}"));
        i += 1;
    }
    out
}

/// One job per element of the Cartesian product of parameter domains, in
/// lexicographic order of (parameter order, domain order).
pub fn decompose(resolved: &ResolvedPlan) -> Result<JobSet, DecomposeError> {
    let gridfiles: Vec<&ParameterDomain> = resolved.domains.iter().filter(|d| d.dynamic).collect();
    if gridfiles.len() > 1 {
        return Err(DecomposeError::MultipleGridfiles(
            gridfiles.iter().map(|d| d.name.clone()).collect(),
        ));
    }
    if let Some(d) = resolved.domains.iter().find(|d| d.values.is_empty()) {
        return Err(DecomposeError::EmptyDomain(d.name.clone()));
    }
    let task = |name| {
        resolved
            .plan
            .task(name)
            .map(|t| t.commands.clone())
            .unwrap_or_default()
    };
    let (nodestart, main) = (task(NODESTART_TASK), task(MAIN_TASK));

    let total: usize = resolved.domains.iter().map(|d| d.values.len()).product();
    let mut jobs = Vec::with_capacity(total);
    let mut odometer = vec![0usize; resolved.domains.len()];
    for ordinal in 0..total {
        let id = JobId::from_index(ordinal);
        let mut bindings = BTreeMap::new();
        let mut required_lfn = None;
        for (d, &i) in resolved.domains.iter().zip(&odometer) {
            let value = d.values[i].clone();
            if d.dynamic {
                required_lfn = LogicalFileName::parse(&value).ok();
            }
            bindings.insert(d.name.clone(), value);
        }
        let jobname = id.to_string();
        let lookup = |name: &str| -> Option<&str> {
            if name == JOBNAME_VAR {
                Some(jobname.as_str())
            } else {
                bindings.get(name).map(String::as_str)
            }
        };
        let subst = |cmds: &[Command]| -> Vec<Command> {
            cmds.iter()
                .map(|c| c.map_exprs(|e| e.substitute(lookup)))
                .collect()
        };
        let task = ResolvedTask {
            nodestart: subst(&nodestart),
            main: subst(&main),
        };
        jobs.push(Job {
            id,
            bindings,
            task,
            required_lfn,
            status: JobStatus::Unassigned,
            assigned_server: None,
            chosen_data_host: None,
            attempt_count: 0,
        });
        for pos in (0..odometer.len()).rev() {
            odometer[pos] += 1;
            if odometer[pos] < resolved.domains[pos].values.len() {
                break;
            }
            odometer[pos] = 0;
        }
    }
    Ok(JobSet { jobs })
}
