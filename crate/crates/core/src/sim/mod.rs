//! Deterministic discrete-event simulation of the testbed.
//!
//! A single event loop drives the scheduler, dispatch, data transfer,
//! execution, measurement rounds and scripted failures. Dispatch moves a job
//! from its server's queue onto a free CPU; the job then pays stage-in,
//! an input transfer (bandwidth sampled once at transfer start), its true
//! execution time and an output return transfer.

pub mod bookkeeper;
pub mod report;

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decompose::{Job, JobStatus, TransitionError};
use crate::grid::{transfer_seconds, ComputeStatus, DataServiceStatus, GridModel};
use crate::ids::{JobId, ServerId};
use crate::scheduler::{run_scheduling_event, BrokerState, EventOutcome, Policy, SchedulerConfig};

pub use bookkeeper::{read_log, replay, Bookkeeper, LogRecord, ReplayError};
pub use report::{BandwidthSample, ExperimentReport, JobRecord, ServerCounts};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Compute,
    Data,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Fail,
    Recover,
}

/// One scripted change of a resource's state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureEntry {
    pub time: f64,
    pub resource: String,
    pub component: Component,
    pub action: Action,
}

/// Event kinds in tie-break order: at equal times, earlier variants run
/// first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    ResourceFailure,
    ResourceRecovery,
    MeasurementRound,
    TransferComplete,
    ExecutionComplete,
    DispatchComplete,
    SchedulingTick,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Payload {
    None,
    /// `attempt` lets the engine drop events of superseded attempts.
    Job {
        job: JobId,
        attempt: u32,
    },
    Script(usize),
    Tick {
        periodic: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEvent {
    pub time: f64,
    pub kind: EventKind,
    pub payload: Payload,
}

#[derive(Debug, Clone)]
struct Pending {
    event: SimEvent,
    seq: u64,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        self.event
            .time
            .total_cmp(&other.event.time)
            .then(self.event.kind.cmp(&other.event.kind))
            .then(self.event.payload.cmp(&other.event.payload))
            .then(self.seq.cmp(&other.seq))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub policy: Policy,
    /// Seeds the measurement noise; the only stochastic input.
    pub seed: u64,
    /// Seconds between periodic scheduling events and measurement rounds.
    pub event_interval: f64,
    /// True work per job in seconds on a server with speed factor 1.
    pub job_work_seconds: f64,
    /// Constant per-dispatch overhead for the `nodestart` stage-in.
    pub stage_in_seconds: f64,
    /// Bytes returned to the broker site after execution.
    pub output_bytes: u64,
    /// Fraction in [0, 1] of the shorter of input transfer and execution
    /// that overlaps the other (streamed input). 0 runs them back to back.
    pub streaming_overlap: f64,
    /// Dispatch attempts per job before it is left failed; `None` retries
    /// without bound.
    pub max_attempts: Option<u32>,
    /// Simulated time after which the run is aborted.
    pub horizon: f64,
    pub scheduler: SchedulerConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            policy: Policy::Adaptive,
            seed: 0,
            event_interval: 30.0,
            job_work_seconds: 120.0,
            stage_in_seconds: 0.0,
            output_bytes: 968_000,
            streaming_overlap: 0.0,
            max_attempts: Some(5),
            horizon: 1.0e7,
            scheduler: SchedulerConfig::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Transition(#[from] TransitionError),
    #[error("failure script names unknown {component:?} resource `{resource}`")]
    UnknownResource {
        resource: String,
        component: Component,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("simulation passed the {0}s horizon with unfinished jobs")]
    Horizon(f64),
}

/// What one call to [`Simulation::step`] processed.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub event: SimEvent,
    pub outcome: Option<EventOutcome>,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub report: ExperimentReport,
    pub log: Bookkeeper,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    scenario: String,
    state: BrokerState,
    config: SimConfig,
    failures: Vec<FailureEntry>,
    scripts_done: usize,
    queue: BinaryHeap<Reverse<Pending>>,
    seq: u64,
    now: f64,
    immediate_tick: Option<f64>,
    records: Vec<JobRecord>,
    book: Bookkeeper,
    samples: Vec<BandwidthSample>,
    finished: bool,
}

impl Simulation {
    pub fn new(
        scenario: impl Into<String>,
        mut grid: GridModel,
        jobs: Vec<Job>,
        config: SimConfig,
        mut failures: Vec<FailureEntry>,
    ) -> Result<Self, SimError> {
        check_config(&config)?;
        for f in &failures {
            let known = match f.component {
                Component::Compute => grid
                    .servers
                    .contains_key(&ServerId::from(f.resource.as_str())),
                Component::Data => grid.hosts.keys().any(|h| h.as_str() == f.resource),
            };
            if !known {
                return Err(SimError::UnknownResource {
                    resource: f.resource.clone(),
                    component: f.component,
                });
            }
            if !(f.time.is_finite() && f.time >= 0.0 && f.time <= config.horizon) {
                return Err(SimError::Config(format!(
                    "failure time {} outside [0, {}]",
                    f.time, config.horizon
                )));
            }
        }
        failures.sort_by(|a, b| a.time.total_cmp(&b.time));
        grid.reseed_noise(config.seed);

        let scenario = scenario.into();
        let records = jobs.iter().map(|j| JobRecord::new(j.id)).collect();
        let mut book = Bookkeeper::default();
        book.append(LogRecord::Header {
            scenario: scenario.clone(),
            policy: config.policy,
            seed: config.seed,
            jobs: jobs.len(),
            servers: grid.servers.keys().cloned().collect(),
        });
        let finished = jobs.iter().all(|j| j.status.is_terminal());
        let state = BrokerState::new(grid, jobs, config.scheduler.clone());
        let mut sim = Self {
            scenario,
            state,
            config,
            failures,
            scripts_done: 0,
            queue: BinaryHeap::new(),
            seq: 0,
            now: 0.0,
            immediate_tick: None,
            records,
            book,
            samples: Vec::new(),
            finished,
        };
        if !sim.finished {
            sim.log_measurements();
            for (i, f) in sim.failures.clone().iter().enumerate() {
                let kind = match f.action {
                    Action::Fail => EventKind::ResourceFailure,
                    Action::Recover => EventKind::ResourceRecovery,
                };
                sim.push(f.time, kind, Payload::Script(i));
            }
            sim.push(
                0.0,
                EventKind::SchedulingTick,
                Payload::Tick { periodic: true },
            );
            let interval = sim.config.event_interval;
            sim.push(interval, EventKind::MeasurementRound, Payload::None);
        }
        Ok(sim)
    }

    pub fn state(&self) -> &BrokerState {
        &self.state
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn records(&self) -> &[JobRecord] {
        &self.records
    }

    pub fn bookkeeper(&self) -> &Bookkeeper {
        &self.book
    }

    pub fn peek_event(&self) -> Option<SimEvent> {
        self.queue.peek().map(|p| p.0.event)
    }

    pub fn report(&self) -> ExperimentReport {
        ExperimentReport::assemble(
            self.scenario.clone(),
            self.config.policy,
            self.config.seed,
            self.state.grid.servers.keys().cloned(),
            self.records.clone(),
            self.samples.clone(),
        )
    }

    pub fn run(mut self) -> Result<SimOutput, SimError> {
        while self.step()?.is_some() {}
        Ok(SimOutput {
            report: self.report(),
            log: self.book,
        })
    }

    /// Processes the next event; `None` once the run is over.
    pub fn step(&mut self) -> Result<Option<StepInfo>, SimError> {
        if self.finished {
            return Ok(None);
        }
        let Some(Reverse(Pending { event, .. })) = self.queue.pop() else {
            self.finished = true;
            return Ok(None);
        };
        if event.time > self.config.horizon {
            return Err(SimError::Horizon(self.config.horizon));
        }
        self.now = event.time;
        let mut outcome = None;
        match (event.kind, event.payload) {
            (EventKind::SchedulingTick, Payload::Tick { periodic }) => {
                outcome = Some(self.on_tick(periodic)?);
            }
            (EventKind::MeasurementRound, _) => self.on_measurement(),
            (EventKind::DispatchComplete, Payload::Job { job, attempt }) => {
                if self.is_current(job, attempt) {
                    self.on_dispatch_complete(job)?;
                }
            }
            (EventKind::TransferComplete, Payload::Job { job, attempt }) => {
                if self.is_current(job, attempt) {
                    self.on_transfer_complete(job)?;
                }
            }
            (EventKind::ExecutionComplete, Payload::Job { job, attempt }) => {
                if self.is_current(job, attempt) {
                    self.on_execution_complete(job)?;
                }
            }
            (EventKind::ResourceFailure | EventKind::ResourceRecovery, Payload::Script(i)) => {
                self.scripts_done += 1;
                self.on_script(i)?;
            }
            _ => {}
        }
        if self.state.all_terminal() {
            self.finished = true;
        }
        Ok(Some(StepInfo { event, outcome }))
    }

    fn push(&mut self, time: f64, kind: EventKind, payload: Payload) {
        self.seq += 1;
        self.queue.push(Reverse(Pending {
            event: SimEvent {
                time,
                kind,
                payload,
            },
            seq: self.seq,
        }));
    }

    fn request_tick(&mut self) {
        if self.immediate_tick != Some(self.now) {
            self.immediate_tick = Some(self.now);
            self.push(
                self.now,
                EventKind::SchedulingTick,
                Payload::Tick { periodic: false },
            );
        }
    }

    fn is_current(&self, job: JobId, attempt: u32) -> bool {
        let j = self.state.job(job);
        j.status == JobStatus::Executing && j.attempt_count == attempt
    }

    fn set_status(&mut self, id: JobId, status: JobStatus) -> Result<(), SimError> {
        self.state.job_mut(id).transition(status)?;
        self.note_status(id, status);
        Ok(())
    }

    /// Records a status the job has already taken.
    fn note_status(&mut self, id: JobId, status: JobStatus) {
        let job = self.state.job(id);
        let (server, data_host) = match status {
            JobStatus::Queued | JobStatus::Executing => {
                (job.assigned_server.clone(), job.chosen_data_host.clone())
            }
            _ => (None, None),
        };
        let record = &mut self.records[id.index()];
        if status == JobStatus::Executing {
            if let Some(s) = &server {
                record.begin_attempt(s.clone(), data_host.clone());
            }
        }
        record.push_status(self.now, status);
        self.book.append(LogRecord::Status {
            time: self.now,
            job: id,
            status,
            server,
            data_host,
        });
    }

    fn log_measurements(&mut self) {
        let snap = self.state.grid.snapshot();
        let rows: Vec<BandwidthSample> = snap
            .bandwidth
            .iter()
            .map(|((from, to), mbps)| BandwidthSample {
                time: self.now,
                from: from.clone(),
                to: to.clone(),
                mbps: *mbps,
            })
            .collect();
        for r in rows {
            self.book.append(LogRecord::Measurement {
                time: r.time,
                from: r.from.clone(),
                to: r.to.clone(),
                mbps: r.mbps,
            });
            self.samples.push(r);
        }
    }

    fn on_tick(&mut self, periodic: bool) -> Result<EventOutcome, SimError> {
        if !periodic && self.immediate_tick == Some(self.now) {
            self.immediate_tick = None;
        }
        let outcome = run_scheduling_event(&mut self.state, self.config.policy, self.now)?;
        for &id in &outcome.reclaimed {
            self.note_status(id, JobStatus::Unassigned);
        }
        for a in &outcome.assignments {
            self.book.append(LogRecord::Decision {
                time: self.now,
                job: a.job,
                server: a.server.clone(),
                data_host: a.data_host.clone(),
                predicted_completion: a.predicted_completion,
            });
            self.note_status(a.job, JobStatus::Queued);
        }
        for &id in &outcome.declared_failed {
            self.note_status(id, JobStatus::Failed);
        }
        let servers: Vec<ServerId> = self.state.grid.servers.keys().cloned().collect();
        for s in &servers {
            self.dispatch_ready(s)?;
        }
        if outcome.assignments.is_empty() && self.is_stalled() {
            let stranded: Vec<JobId> = self.state.unassigned.iter().collect();
            for id in stranded {
                self.state.declare_failed(id)?;
                self.note_status(id, JobStatus::Failed);
            }
        }
        if periodic && !self.state.all_terminal() {
            let next = self.now + self.config.event_interval;
            self.push(
                next,
                EventKind::SchedulingTick,
                Payload::Tick { periodic: true },
            );
        }
        Ok(outcome)
    }

    /// Nothing is queued or running and nothing scheduled can change the
    /// grid, so unassigned jobs can never be placed.
    fn is_stalled(&self) -> bool {
        !self.state.unassigned.is_empty()
            && self
                .state
                .jobs
                .iter()
                .all(|j| !matches!(j.status, JobStatus::Queued | JobStatus::Executing))
            && self.scripts_done == self.failures.len()
            && !self.state.grid.trace.has_step_after(self.now)
    }

    fn on_measurement(&mut self) {
        self.state.grid.update_measurements(self.now);
        self.log_measurements();
        if !self.state.all_terminal() {
            let next = self.now + self.config.event_interval;
            self.push(next, EventKind::MeasurementRound, Payload::None);
        }
    }

    /// Moves queued jobs onto idle CPUs in FIFO order.
    fn dispatch_ready(&mut self, server: &ServerId) -> Result<(), SimError> {
        loop {
            let Some(s) = self.state.grid.servers.get_mut(server) else {
                return Ok(());
            };
            if !s.is_available() || s.idle_cpus() == 0 {
                return Ok(());
            }
            let Some(id) = s.queued.pop_front() else {
                return Ok(());
            };
            s.executing.insert(id);
            self.state.job_mut(id).attempt_count += 1;
            self.set_status(id, JobStatus::Executing)?;
            let attempt = self.state.job(id).attempt_count;
            let at = self.now + self.config.stage_in_seconds;
            self.push(
                at,
                EventKind::DispatchComplete,
                Payload::Job { job: id, attempt },
            );
        }
    }

    fn on_dispatch_complete(&mut self, id: JobId) -> Result<(), SimError> {
        let job = self.state.job(id);
        let server = job
            .assigned_server
            .clone()
            .expect("executing job has a server");
        let (bytes, mbps) = match (self.state.input_file(job), &job.chosen_data_host) {
            (Some(file), Some(host)) => {
                let serving = self
                    .state
                    .grid
                    .hosts
                    .get(host)
                    .is_some_and(|h| h.is_serving());
                let bw = if serving {
                    self.state
                        .grid
                        .available_bandwidth(host, &server)
                        .unwrap_or(0.0)
                } else {
                    0.0
                };
                (if bw.is_infinite() { 0 } else { file.size }, bw)
            }
            _ => (0, f64::INFINITY),
        };
        let Some(seconds) = transfer_seconds(bytes, mbps) else {
            return self.attempt_failed(id);
        };
        let record = &mut self.records[id.index()];
        record.transfer_bytes = bytes;
        record.transfer_seconds = seconds;
        self.book.append(LogRecord::Transfer {
            time: self.now,
            job: id,
            server,
            data_host: self.state.job(id).chosen_data_host.clone(),
            bytes,
            seconds,
        });
        let attempt = self.state.job(id).attempt_count;
        self.push(
            self.now + seconds,
            EventKind::TransferComplete,
            Payload::Job { job: id, attempt },
        );
        Ok(())
    }

    fn on_transfer_complete(&mut self, id: JobId) -> Result<(), SimError> {
        let server = self
            .state
            .job(id)
            .assigned_server
            .clone()
            .expect("executing job has a server");
        let speed = self.state.grid.servers[&server].speed_factor;
        let exec = self.config.job_work_seconds / speed;
        let out_bw = self.state.grid.output_bandwidth(&server);
        let Some(output) = transfer_seconds(self.config.output_bytes, out_bw) else {
            return self.attempt_failed(id);
        };
        let record = &mut self.records[id.index()];
        record.execution_seconds = exec;
        record.output_seconds = output;
        let overlap = self.config.streaming_overlap * record.transfer_seconds.min(exec);
        self.book.append(LogRecord::Execution {
            time: self.now,
            job: id,
            server,
            seconds: exec,
            output_seconds: output,
        });
        let attempt = self.state.job(id).attempt_count;
        self.push(
            self.now + exec - overlap + output,
            EventKind::ExecutionComplete,
            Payload::Job { job: id, attempt },
        );
        Ok(())
    }

    fn on_execution_complete(&mut self, id: JobId) -> Result<(), SimError> {
        let server = self
            .state
            .job(id)
            .assigned_server
            .clone()
            .expect("executing job has a server");
        let exec = self.records[id.index()].execution_seconds;
        let s = self
            .state
            .grid
            .servers
            .get_mut(&server)
            .expect("known server");
        s.executing.remove(&id);
        s.history.push((id, exec));
        let work = exec * s.speed_factor;
        s.rate
            .observe(work)
            .map_err(|e| SimError::Config(e.to_string()))?;
        self.set_status(id, JobStatus::Done)?;
        self.dispatch_ready(&server)?;
        self.request_tick();
        Ok(())
    }

    /// Fails the current attempt and requeues the job if attempts remain.
    fn attempt_failed(&mut self, id: JobId) -> Result<(), SimError> {
        let server = self.state.job(id).assigned_server.clone();
        if let Some(s) = server
            .as_ref()
            .and_then(|s| self.state.grid.servers.get_mut(s))
        {
            s.executing.remove(&id);
            s.failed_jobs += 1;
        }
        self.set_status(id, JobStatus::Failed)?;
        let attempts = self.state.job(id).attempt_count;
        if self.config.max_attempts.is_none_or(|m| attempts < m) {
            self.state.requeue(id, false)?;
            self.note_status(id, JobStatus::Unassigned);
        }
        if let Some(s) = server {
            self.dispatch_ready(&s)?;
        }
        self.request_tick();
        Ok(())
    }

    fn on_script(&mut self, i: usize) -> Result<(), SimError> {
        let entry = self.failures[i].clone();
        self.book.append(LogRecord::Resource {
            time: self.now,
            resource: entry.resource.clone(),
            component: entry.component,
            action: entry.action,
        });
        match entry.component {
            Component::Compute => {
                let id = ServerId::from(entry.resource.as_str());
                let server = self.state.grid.servers.get_mut(&id).expect("validated");
                match entry.action {
                    Action::Fail => {
                        server.status = ComputeStatus::ComputeFailed;
                        let executing: Vec<JobId> = server.executing.iter().copied().collect();
                        let queued: Vec<JobId> = server.queued.drain(..).collect();
                        for job in executing {
                            self.attempt_failed(job)?;
                        }
                        for &job in &queued {
                            self.state.requeue(job, false)?;
                            self.note_status(job, JobStatus::Unassigned);
                        }
                        // requeue appends; move the block to the head in order
                        for &job in &queued {
                            self.state.unassigned.remove(job);
                        }
                        self.state.unassigned.push_front_all(&queued);
                    }
                    Action::Recover => server.status = ComputeStatus::Available,
                }
            }
            Component::Data => {
                let host = self
                    .state
                    .grid
                    .hosts
                    .values_mut()
                    .find(|h| h.id.as_str() == entry.resource)
                    .expect("validated");
                host.data_service = match entry.action {
                    Action::Fail => DataServiceStatus::Failed,
                    Action::Recover => DataServiceStatus::Available,
                };
            }
        }
        self.request_tick();
        Ok(())
    }
}

fn check_config(c: &SimConfig) -> Result<(), SimError> {
    let positive = |name: &str, v: f64| {
        if v.is_finite() && v > 0.0 {
            Ok(())
        } else {
            Err(SimError::Config(format!(
                "{name} must be positive and finite, got {v}"
            )))
        }
    };
    positive("event_interval", c.event_interval)?;
    positive("job_work_seconds", c.job_work_seconds)?;
    positive("horizon", c.horizon)?;
    if !(c.stage_in_seconds.is_finite() && c.stage_in_seconds >= 0.0) {
        return Err(SimError::Config("stage_in_seconds must be >= 0".into()));
    }
    if !(0.0..=1.0).contains(&c.streaming_overlap) {
        return Err(SimError::Config(
            "streaming_overlap must be in [0, 1]".into(),
        ));
    }
    if c.max_attempts == Some(0) {
        return Err(SimError::Config("max_attempts must be at least 1".into()));
    }
    Ok(())
}
