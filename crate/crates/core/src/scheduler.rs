//! Scheduling-event loop with three placement policies.
//!
//! Each event refreshes the scheduler's view of the grid, returns queued but
//! undispatched jobs to the Unassigned-Jobs-List where resource availability
//! changed, and then places jobs from the head of that list until it is
//! exhausted or every available server has reached its job limit. Jobs
//! placed earlier in an event count against their server's queue for the
//! jobs placed after them.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::decompose::{Job, JobStatus, TransitionError};
use crate::grid::{
    cmp_time, estimated_completion_time, ComputeStatus, DataFile, DataServiceStatus, GridModel,
};
use crate::ids::{DataHostId, JobId, ServerId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    /// Run jobs only where their data lives.
    DataLocal,
    /// Pick the server with the most available compute, ignoring data location.
    ComputeOnly,
    /// Pick the (data host, server) pair with the earliest expected completion.
    Adaptive,
}

impl Policy {
    pub const ALL: [Policy; 3] = [Policy::DataLocal, Policy::ComputeOnly, Policy::Adaptive];

    pub fn name(self) -> &'static str {
        match self {
            Policy::DataLocal => "data-local",
            Policy::ComputeOnly => "compute-only",
            Policy::Adaptive => "adaptive",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Policy::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown policy `{s}` (data-local, compute-only, adaptive)"))
    }
}

/// Ordered queue of jobs waiting for placement.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UnassignedJobsList {
    queue: VecDeque<JobId>,
}

impl UnassignedJobsList {
    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn contains(&self, id: JobId) -> bool {
        self.queue.contains(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = JobId> + '_ {
        self.queue.iter().copied()
    }

    pub fn push_back(&mut self, id: JobId) {
        if !self.contains(id) {
            self.queue.push_back(id);
        }
    }

    /// Puts `ids` at the head of the list, keeping their given order.
    pub fn push_front_all(&mut self, ids: &[JobId]) {
        for &id in ids.iter().rev() {
            if !self.contains(id) {
                self.queue.push_front(id);
            }
        }
    }

    pub fn remove(&mut self, id: JobId) -> bool {
        match self.queue.iter().position(|j| *j == id) {
            Some(pos) => {
                self.queue.remove(pos);
                true
            }
            None => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePair {
    /// `None` for jobs without input data.
    pub data_host: Option<DataHostId>,
    pub server: ServerId,
    pub estimated_completion: f64,
}

/// Feasible (data host, server) pairs for one job, with expected times.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePairList {
    pub job: JobId,
    pub pairs: Vec<CandidatePair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub job: JobId,
    pub server: ServerId,
    pub data_host: Option<DataHostId>,
    pub decision_time: f64,
    pub predicted_completion: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Selection {
    Chosen(CandidatePair),
    /// Some placement would be feasible, but every such server is full.
    Saturated,
    /// No placement is possible even with free capacity.
    Infeasible,
}

impl Selection {
    pub fn chosen(&self) -> Option<&CandidatePair> {
        match self {
            Selection::Chosen(p) => Some(p),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    /// Scheduling events at which a data-local job must be found unplaceable
    /// before it is declared failed.
    pub data_local_failure_events: u32,
    /// Same bound for the other policies; `None` retries indefinitely.
    pub infeasible_event_limit: Option<u32>,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            data_local_failure_events: 3,
            infeasible_event_limit: None,
        }
    }
}

impl SchedulerConfig {
    fn failure_threshold(&self, policy: Policy) -> Option<u32> {
        match policy {
            Policy::DataLocal => Some(self.data_local_failure_events.max(1)),
            _ => self.infeasible_event_limit,
        }
    }
}

/// Servers and data hosts whose availability changed since the previous
/// scheduling event.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AvailabilityDelta {
    pub servers: BTreeSet<ServerId>,
    pub hosts: BTreeSet<DataHostId>,
}

impl AvailabilityDelta {
    pub fn is_empty(&self) -> bool {
        self.servers.is_empty() && self.hosts.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
struct AvailabilityView {
    server_status: BTreeMap<ServerId, ComputeStatus>,
    free_slots: BTreeMap<ServerId, usize>,
    host_status: BTreeMap<DataHostId, DataServiceStatus>,
    host_cache: BTreeMap<DataHostId, Vec<ServerId>>,
}

impl AvailabilityView {
    fn capture(grid: &GridModel) -> Self {
        Self {
            server_status: grid
                .servers
                .iter()
                .map(|(k, s)| (k.clone(), s.status))
                .collect(),
            free_slots: grid
                .servers
                .iter()
                .map(|(k, s)| (k.clone(), s.free_slots()))
                .collect(),
            host_status: grid
                .hosts
                .iter()
                .map(|(k, h)| (k.clone(), h.data_service))
                .collect(),
            host_cache: grid
                .hosts
                .iter()
                .map(|(k, h)| (k.clone(), h.sorted_compute_cache.clone()))
                .collect(),
        }
    }
}

/// Everything the scheduler reads and mutates.
#[derive(Debug, Clone)]
pub struct BrokerState {
    pub grid: GridModel,
    pub jobs: Vec<Job>,
    pub unassigned: UnassignedJobsList,
    pub config: SchedulerConfig,
    last_view: Option<AvailabilityView>,
    infeasible_events: BTreeMap<JobId, u32>,
}

/// Result of one scheduling event.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventOutcome {
    pub reclaimed: Vec<JobId>,
    pub assignments: Vec<Assignment>,
    /// Jobs declared failed because no placement can exist.
    pub declared_failed: Vec<JobId>,
}

impl BrokerState {
    /// Jobs must be freshly decomposed (all unassigned, in job-id order).
    pub fn new(grid: GridModel, jobs: Vec<Job>, config: SchedulerConfig) -> Self {
        let mut unassigned = UnassignedJobsList::default();
        for j in &jobs {
            if j.status == JobStatus::Unassigned {
                unassigned.push_back(j.id);
            }
        }
        Self {
            grid,
            jobs,
            unassigned,
            config,
            last_view: None,
            infeasible_events: BTreeMap::new(),
        }
    }

    pub fn job(&self, id: JobId) -> &Job {
        &self.jobs[id.index()]
    }

    pub fn job_mut(&mut self, id: JobId) -> &mut Job {
        &mut self.jobs[id.index()]
    }

    pub fn input_file(&self, job: &Job) -> Option<&DataFile> {
        job.required_lfn
            .as_ref()
            .and_then(|l| self.grid.files.get(l))
    }

    pub fn count(&self, status: JobStatus) -> usize {
        self.jobs.iter().filter(|j| j.status == status).count()
    }

    /// Status counts in the order unassigned, queued, executing, done, failed.
    pub fn status_counts(&self) -> [usize; 5] {
        let mut c = [0; 5];
        for j in &self.jobs {
            c[j.status as usize] += 1;
        }
        c
    }

    pub fn all_terminal(&self) -> bool {
        self.jobs.iter().all(|j| j.status.is_terminal())
    }

    /// Moves a job to the unassigned list tail-first or head-first.
    pub(crate) fn requeue(&mut self, id: JobId, front: bool) -> Result<(), TransitionError> {
        let job = self.job_mut(id);
        job.transition(JobStatus::Unassigned)?;
        job.assigned_server = None;
        job.chosen_data_host = None;
        if front {
            self.unassigned.push_front_all(&[id]);
        } else {
            self.unassigned.push_back(id);
        }
        Ok(())
    }

    /// Declares an unassigned job failed and drops it from the list.
    pub fn declare_failed(&mut self, id: JobId) -> Result<(), TransitionError> {
        self.job_mut(id).transition(JobStatus::Failed)?;
        self.unassigned.remove(id);
        self.infeasible_events.remove(&id);
        Ok(())
    }

    fn any_capacity(&self) -> bool {
        self.grid.servers.values().any(|s| s.has_capacity())
    }
}

fn pair_order(a: &CandidatePair, b: &CandidatePair) -> Ordering {
    cmp_time(a.estimated_completion, b.estimated_completion)
        .then_with(|| a.server.cmp(&b.server))
        .then_with(|| a.data_host.cmp(&b.data_host))
}

/// Replica hosts of the job's input whose data service is up; `[None]` for
/// jobs without input.
fn source_hosts(state: &BrokerState, job: &Job) -> Option<Vec<Option<DataHostId>>> {
    match &job.required_lfn {
        None => Some(vec![None]),
        Some(lfn) => {
            let file = state.grid.files.get(lfn)?;
            Some(
                file.hosts
                    .iter()
                    .filter(|h| state.grid.hosts.get(*h).is_some_and(|h| h.is_serving()))
                    .cloned()
                    .map(Some)
                    .collect(),
            )
        }
    }
}

fn pair_bandwidth(state: &BrokerState, host: &Option<DataHostId>, server: &ServerId) -> f64 {
    match host {
        None => f64::INFINITY,
        Some(h) => state.grid.available_bandwidth(h, server).unwrap_or(0.0),
    }
}

/// The Data-ComputeResource-List: every (data host, server) pair that can
/// take the job now, with its expected completion time.
pub fn candidate_pairs(job: &Job, state: &BrokerState) -> CandidatePairList {
    let size = state.input_file(job).map_or(0, |f| f.size);
    let mut pairs = Vec::new();
    for host in source_hosts(state, job).unwrap_or_default() {
        for server in state.grid.servers.values().filter(|s| s.has_capacity()) {
            let bw = pair_bandwidth(state, &host, &server.id);
            if let Some(t) = estimated_completion_time(server, size, bw) {
                pairs.push(CandidatePair {
                    data_host: host.clone(),
                    server: server.id.clone(),
                    estimated_completion: t,
                });
            }
        }
    }
    pairs.sort_by(pair_order);
    CandidatePairList { job: job.id, pairs }
}

/// Earliest expected completion over all feasible (data host, server)
/// pairs; ties go to the smaller (server id, data host id).
pub fn select_pair_adaptive(job: &Job, state: &BrokerState) -> Selection {
    let list = candidate_pairs(job, state);
    if let Some(best) = list.pairs.into_iter().next() {
        return Selection::Chosen(best);
    }
    let size = state.input_file(job).map_or(0, |f| f.size);
    let feasible_if_free = source_hosts(state, job)
        .unwrap_or_default()
        .iter()
        .any(|h| {
            state.grid.servers.values().any(|s| {
                estimated_completion_time(s, size, pair_bandwidth(state, h, &s.id)).is_some()
            })
        });
    if feasible_if_free {
        Selection::Saturated
    } else {
        Selection::Infeasible
    }
}

/// Server with the least `queue_wait + service_time`, ignoring transfer
/// cost. Data is read from the replica with the highest bandwidth to that
/// server.
pub fn select_server_compute_only(job: &Job, state: &BrokerState) -> Selection {
    let hosts = source_hosts(state, job).unwrap_or_default();
    let size = state.input_file(job).map_or(0, |f| f.size);
    let mut best: Option<(f64, CandidatePair)> = None;
    let mut feasible_if_free = false;
    for server in state.grid.servers.values().filter(|s| s.is_available()) {
        let source = hosts
            .iter()
            .map(|h| (pair_bandwidth(state, h, &server.id), h))
            .filter(|(bw, _)| *bw > 0.0)
            .min_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        let Some((bw, host)) = source else {
            continue;
        };
        feasible_if_free = true;
        if !server.has_capacity() {
            continue;
        }
        let cost = server.queue_wait() + server.service_time();
        let better = match &best {
            None => true,
            Some((c, p)) => cmp_time(cost, *c)
                .then_with(|| server.id.cmp(&p.server))
                .is_lt(),
        };
        if better {
            let ect = estimated_completion_time(server, size, bw).unwrap_or(f64::INFINITY);
            best = Some((
                cost,
                CandidatePair {
                    data_host: host.clone(),
                    server: server.id.clone(),
                    estimated_completion: ect,
                },
            ));
        }
    }
    match best {
        Some((_, p)) => Selection::Chosen(p),
        None if feasible_if_free => Selection::Saturated,
        None => Selection::Infeasible,
    }
}

/// Only servers co-located with a replica are candidates; the earliest
/// expected completion among them wins.
pub fn select_pair_data_local(job: &Job, state: &BrokerState) -> Selection {
    let hosts = source_hosts(state, job).unwrap_or_default();
    let mut local: Vec<(Option<DataHostId>, &crate::grid::ComputeServer)> = Vec::new();
    for h in &hosts {
        match h {
            None => local.extend(state.grid.servers.values().map(|s| (None, s))),
            Some(id) => {
                let co = state
                    .grid
                    .hosts
                    .get(id)
                    .and_then(|h| h.co_located_compute.as_ref());
                if let Some(s) = co.and_then(|c| state.grid.servers.get(c)) {
                    local.push((Some(id.clone()), s));
                }
            }
        }
    }
    local.retain(|(_, s)| s.is_available());
    if local.is_empty() {
        return Selection::Infeasible;
    }
    let size = state.input_file(job).map_or(0, |f| f.size);
    local
        .into_iter()
        .filter(|(_, s)| s.has_capacity())
        .filter_map(|(h, s)| {
            estimated_completion_time(s, size, f64::INFINITY).map(|t| CandidatePair {
                data_host: h,
                server: s.id.clone(),
                estimated_completion: t,
            })
        })
        .min_by(pair_order)
        .map(Selection::Chosen)
        .unwrap_or(Selection::Saturated)
}

pub fn select(policy: Policy, job: &Job, state: &BrokerState) -> Selection {
    match policy {
        Policy::DataLocal => select_pair_data_local(job, state),
        Policy::ComputeOnly => select_server_compute_only(job, state),
        Policy::Adaptive => select_pair_adaptive(job, state),
    }
}

/// Changes since the previous event: server status flips, free-slot counts
/// that moved, data-service flips and reordered bandwidth rankings. A server
/// coming back makes every server's queue eligible for rebalancing.
pub fn detect_variation(state: &BrokerState) -> AvailabilityDelta {
    let Some(prev) = &state.last_view else {
        return AvailabilityDelta::default();
    };
    let now = AvailabilityView::capture(&state.grid);
    let mut delta = AvailabilityDelta::default();
    let mut recovered = false;
    for (id, status) in &now.server_status {
        if prev.server_status.get(id) != Some(status) {
            recovered |= *status == ComputeStatus::Available;
            delta.servers.insert(id.clone());
        }
        if prev.free_slots.get(id) != now.free_slots.get(id) {
            delta.servers.insert(id.clone());
        }
    }
    if recovered {
        delta.servers.extend(now.server_status.keys().cloned());
    }
    for (id, status) in &now.host_status {
        if prev.host_status.get(id) != Some(status)
            || prev.host_cache.get(id) != now.host_cache.get(id)
        {
            delta.hosts.insert(id.clone());
        }
    }
    delta
}

/// Returns queued, not yet dispatched jobs touched by `delta` to the head of
/// the Unassigned-Jobs-List in job order. Executing jobs are left alone.
pub fn reclaim_undispatched(
    state: &mut BrokerState,
    delta: &AvailabilityDelta,
) -> Result<Vec<JobId>, TransitionError> {
    if delta.is_empty() {
        return Ok(Vec::new());
    }
    let mut reclaimed = Vec::new();
    for server in state.grid.servers.values_mut() {
        let whole = delta.servers.contains(&server.id);
        let jobs = &state.jobs;
        let (take, keep): (VecDeque<JobId>, VecDeque<JobId>) =
            server.queued.iter().partition(|id| {
                whole
                    || jobs[id.index()]
                        .chosen_data_host
                        .as_ref()
                        .is_some_and(|h| delta.hosts.contains(h))
            });
        server.queued = keep;
        reclaimed.extend(take);
    }
    reclaimed.sort();
    for &id in &reclaimed {
        let job = state.job_mut(id);
        job.transition(JobStatus::Unassigned)?;
        job.assigned_server = None;
        job.chosen_data_host = None;
    }
    state.unassigned.push_front_all(&reclaimed);
    Ok(reclaimed)
}

/// Walks the Unassigned-Jobs-List head-first and places what it can.
pub fn assign_unassigned(
    state: &mut BrokerState,
    policy: Policy,
    time: f64,
) -> Result<EventOutcome, TransitionError> {
    let mut outcome = EventOutcome::default();
    let order: Vec<JobId> = state.unassigned.iter().collect();
    let threshold = state.config.failure_threshold(policy);
    for id in order {
        if !state.any_capacity() {
            break;
        }
        match select(policy, state.job(id), state) {
            Selection::Chosen(pair) => {
                let job = state.job_mut(id);
                job.transition(JobStatus::Queued)?;
                job.assigned_server = Some(pair.server.clone());
                job.chosen_data_host = pair.data_host.clone();
                state.unassigned.remove(id);
                state.infeasible_events.remove(&id);
                if let Some(s) = state.grid.servers.get_mut(&pair.server) {
                    s.queued.push_back(id);
                }
                outcome.assignments.push(Assignment {
                    job: id,
                    server: pair.server,
                    data_host: pair.data_host,
                    decision_time: time,
                    predicted_completion: time + pair.estimated_completion,
                });
            }
            Selection::Saturated => {}
            Selection::Infeasible => {
                let seen = state.infeasible_events.entry(id).or_insert(0);
                *seen += 1;
                if threshold.is_some_and(|limit| *seen >= limit) {
                    state.declare_failed(id)?;
                    outcome.declared_failed.push(id);
                }
            }
        }
    }
    Ok(outcome)
}

/// One full scheduling event: detect variation, reclaim, place.
pub fn run_scheduling_event(
    state: &mut BrokerState,
    policy: Policy,
    time: f64,
) -> Result<EventOutcome, TransitionError> {
    let delta = detect_variation(state);
    let reclaimed = reclaim_undispatched(state, &delta)?;
    let mut outcome = assign_unassigned(state, policy, time)?;
    outcome.reclaimed = reclaimed;
    state.last_view = Some(AvailabilityView::capture(&state.grid));
    Ok(outcome)
}
