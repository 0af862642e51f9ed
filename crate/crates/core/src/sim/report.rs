use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::decompose::JobStatus;
use crate::ids::{DataHostId, JobId, ServerId};
use crate::scheduler::Policy;

/// Per-job outcome. Transfer and execution values describe the final
/// dispatch attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub job: JobId,
    pub history: Vec<(f64, JobStatus)>,
    /// Server and data host of the last dispatch, if any.
    pub server: Option<ServerId>,
    pub data_host: Option<DataHostId>,
    /// Input bytes moved across the network; 0 for co-located reads.
    pub transfer_bytes: u64,
    pub transfer_seconds: f64,
    pub execution_seconds: f64,
    pub output_seconds: f64,
    /// Time from the start of the experiment to the job's terminal state.
    pub total_seconds: f64,
}

impl JobRecord {
    pub fn new(job: JobId) -> Self {
        Self {
            job,
            history: vec![(0.0, JobStatus::Unassigned)],
            server: None,
            data_host: None,
            transfer_bytes: 0,
            transfer_seconds: 0.0,
            execution_seconds: 0.0,
            output_seconds: 0.0,
            total_seconds: 0.0,
        }
    }

    pub fn status(&self) -> JobStatus {
        self.history.last().map_or(JobStatus::Unassigned, |h| h.1)
    }

    /// Appends a status change; terminal states fix `total_seconds`.
    pub fn push_status(&mut self, time: f64, status: JobStatus) {
        self.history.push((time, status));
        if status.is_terminal() {
            self.total_seconds = time;
        }
    }

    /// Starts a new dispatch attempt on `server` reading from `host`.
    pub fn begin_attempt(&mut self, server: ServerId, host: Option<DataHostId>) {
        self.server = Some(server);
        self.data_host = host;
        self.transfer_bytes = 0;
        self.transfer_seconds = 0.0;
        self.execution_seconds = 0.0;
        self.output_seconds = 0.0;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerCounts {
    pub done: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSample {
    pub time: f64,
    pub from: String,
    pub to: String,
    pub mbps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub scenario: String,
    pub policy: Policy,
    pub seed: u64,
    /// Latest terminal time over all jobs.
    pub total_time: f64,
    pub done: usize,
    pub failed: usize,
    pub servers: BTreeMap<ServerId, ServerCounts>,
    /// Failed jobs that were never dispatched anywhere.
    pub unplaced_failed: usize,
    pub bytes_transferred: u64,
    pub jobs: Vec<JobRecord>,
    pub bandwidth: Vec<BandwidthSample>,
}

impl ExperimentReport {
    /// Builds the aggregates from per-job records.
    pub fn assemble(
        scenario: String,
        policy: Policy,
        seed: u64,
        server_ids: impl IntoIterator<Item = ServerId>,
        jobs: Vec<JobRecord>,
        bandwidth: Vec<BandwidthSample>,
    ) -> Self {
        let mut servers: BTreeMap<ServerId, ServerCounts> = server_ids
            .into_iter()
            .map(|s| (s, ServerCounts::default()))
            .collect();
        let (mut done, mut failed, mut unplaced_failed) = (0, 0, 0);
        for r in &jobs {
            let counts = r
                .server
                .as_ref()
                .map(|s| servers.entry(s.clone()).or_default());
            match r.status() {
                JobStatus::Done => {
                    done += 1;
                    if let Some(c) = counts {
                        c.done += 1;
                    }
                }
                JobStatus::Failed => {
                    failed += 1;
                    match counts {
                        Some(c) => c.failed += 1,
                        None => unplaced_failed += 1,
                    }
                }
                _ => {}
            }
        }
        Self {
            scenario,
            policy,
            seed,
            total_time: jobs.iter().map(|r| r.total_seconds).fold(0.0, f64::max),
            done,
            failed,
            servers,
            unplaced_failed,
            bytes_transferred: jobs.iter().map(|r| r.transfer_bytes).sum(),
            jobs,
            bandwidth,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
