//! Append-only record of job and resource state, one JSON object per line.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::report::{BandwidthSample, ExperimentReport, JobRecord};
use super::{Action, Component};
use crate::decompose::JobStatus;
use crate::ids::{DataHostId, JobId, ServerId};
use crate::scheduler::Policy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Header {
        scenario: String,
        policy: Policy,
        seed: u64,
        jobs: usize,
        servers: Vec<ServerId>,
    },
    Status {
        time: f64,
        job: JobId,
        status: JobStatus,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        server: Option<ServerId>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        data_host: Option<DataHostId>,
    },
    /// Input stage-in at dispatch.
    Transfer {
        time: f64,
        job: JobId,
        server: ServerId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        data_host: Option<DataHostId>,
        bytes: u64,
        seconds: f64,
    },
    Execution {
        time: f64,
        job: JobId,
        server: ServerId,
        seconds: f64,
        output_seconds: f64,
    },
    Decision {
        time: f64,
        job: JobId,
        server: ServerId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        data_host: Option<DataHostId>,
        predicted_completion: f64,
    },
    Measurement {
        time: f64,
        from: String,
        to: String,
        mbps: f64,
    },
    Resource {
        time: f64,
        resource: String,
        component: Component,
        action: Action,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Bookkeeper {
    records: Vec<LogRecord>,
}

impl Bookkeeper {
    pub fn append(&mut self, record: LogRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_to(&self, out: &mut impl Write) -> io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut *out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("json is utf-8")
    }
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("log line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("log does not start with a header record")]
    MissingHeader,
    #[error("log line {line}: job {job} outside the declared job count")]
    UnknownJob { line: usize, job: JobId },
}

pub fn read_log(input: impl BufRead) -> Result<Vec<LogRecord>, ReplayError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|source| ReplayError::Parse {
                line: i + 1,
                source,
            })?,
        );
    }
    Ok(out)
}

/// Rebuilds the experiment report from log records alone.
pub fn replay(records: &[LogRecord]) -> Result<ExperimentReport, ReplayError> {
    let Some(LogRecord::Header {
        scenario,
        policy,
        seed,
        jobs,
        servers,
    }) = records.first()
    else {
        return Err(ReplayError::MissingHeader);
    };
    let mut job_records: Vec<JobRecord> = (0..*jobs)
        .map(|i| JobRecord::new(JobId::from_index(i)))
        .collect();
    let mut samples = Vec::new();
    for (i, rec) in records.iter().enumerate().skip(1) {
        let line = i + 1;
        match rec {
            LogRecord::Header { .. } => {}
            LogRecord::Status {
                time,
                job,
                status,
                server,
                data_host,
            } => {
                let r = job_at(&mut job_records, job, line)?;
                if *status == JobStatus::Executing {
                    if let Some(s) = server {
                        r.begin_attempt(s.clone(), data_host.clone());
                    }
                }
                r.push_status(*time, *status);
            }
            LogRecord::Transfer {
                job,
                bytes,
                seconds,
                ..
            } => {
                let r = job_at(&mut job_records, job, line)?;
                r.transfer_bytes = *bytes;
                r.transfer_seconds = *seconds;
            }
            LogRecord::Execution {
                job,
                seconds,
                output_seconds,
                ..
            } => {
                let r = job_at(&mut job_records, job, line)?;
                r.execution_seconds = *seconds;
                r.output_seconds = *output_seconds;
            }
            LogRecord::Measurement {
                time,
                from,
                to,
                mbps,
            } => samples.push(BandwidthSample {
                time: *time,
                from: from.clone(),
                to: to.clone(),
                mbps: *mbps,
            }),
            LogRecord::Decision { .. } | LogRecord::Resource { .. } => {}
        }
    }
    Ok(ExperimentReport::assemble(
        scenario.clone(),
        *policy,
        *seed,
        servers.iter().cloned(),
        job_records,
        samples,
    ))
}

fn job_at<'a>(
    records: &'a mut [JobRecord],
    job: &JobId,
    line: usize,
) -> Result<&'a mut JobRecord, ReplayError> {
    records
        .get_mut(job.index())
        .ok_or(ReplayError::UnknownJob { line, job: *job })
}
