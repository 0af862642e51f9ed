//! Testbed model: compute servers, data hosts, data files, the measured
//! network and per-server job-consumption-rate estimation.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{LogicalFileName, ReplicaEntry};
use crate::ids::{DataHostId, JobId, ServerId};

/// Bytes per megabyte for bandwidth conversions (bandwidth is in MB/s).
pub const BYTES_PER_MB: f64 = 1_000_000.0;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("unknown compute server `{0}`")]
    UnknownServer(ServerId),
    #[error("unknown data host `{0}`")]
    UnknownHost(DataHostId),
    #[error("observed duration must be positive, got {0}")]
    NonPositiveDuration(f64),
    #[error("smoothing weight must lie in (0, 1], got {0}")]
    BadAlpha(f64),
    #[error("prior must be positive, got {0}")]
    BadPrior(f64),
}

/// Exponentially weighted moving average of per-job service seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimator {
    alpha: f64,
    prior: f64,
    estimate: f64,
    observations: u32,
}

impl RateEstimator {
    pub fn new(alpha: f64, prior: f64) -> Result<Self, GridError> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(GridError::BadAlpha(alpha));
        }
        if !(prior > 0.0 && prior.is_finite()) {
            return Err(GridError::BadPrior(prior));
        }
        Ok(Self {
            alpha,
            prior,
            estimate: prior,
            observations: 0,
        })
    }

    pub fn observe(&mut self, duration: f64) -> Result<(), GridError> {
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(GridError::NonPositiveDuration(duration));
        }
        self.estimate = self.alpha * duration + (1.0 - self.alpha) * self.estimate;
        self.observations += 1;
        Ok(())
    }

    /// Expected seconds per job at unit speed.
    pub fn estimate(&self) -> f64 {
        self.estimate
    }

    pub fn prior(&self) -> f64 {
        self.prior
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn observations(&self) -> u32 {
        self.observations
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComputeStatus {
    Available,
    ComputeFailed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataServiceStatus {
    Available,
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComputeServer {
    pub id: ServerId,
    pub cpu_count: u32,
    /// Service-time divisor relative to the reference machine.
    pub speed_factor: f64,
    pub max_job_limit: u32,
    pub middleware_tag: String,
    pub status: ComputeStatus,
    /// Assigned jobs waiting for a CPU slot, in dispatch order.
    pub queued: VecDeque<JobId>,
    pub executing: BTreeSet<JobId>,
    /// `(job, execution seconds)` for every completed job.
    pub history: Vec<(JobId, f64)>,
    pub failed_jobs: u32,
    pub rate: RateEstimator,
}

impl ComputeServer {
    pub fn new(
        id: impl Into<String>,
        cpu_count: u32,
        speed_factor: f64,
        max_job_limit: u32,
        rate: RateEstimator,
    ) -> Self {
        Self {
            id: ServerId(id.into()),
            cpu_count: cpu_count.max(1),
            speed_factor,
            max_job_limit: max_job_limit.max(1),
            middleware_tag: String::new(),
            status: ComputeStatus::Available,
            queued: VecDeque::new(),
            executing: BTreeSet::new(),
            history: Vec::new(),
            failed_jobs: 0,
            rate,
        }
    }

    pub fn is_available(&self) -> bool {
        self.status == ComputeStatus::Available
    }

    /// Jobs committed to this server: queued plus executing.
    pub fn busy_count(&self) -> usize {
        self.queued.len() + self.executing.len()
    }

    pub fn free_slots(&self) -> usize {
        (self.max_job_limit as usize).saturating_sub(self.busy_count())
    }

    pub fn has_capacity(&self) -> bool {
        self.is_available() && self.free_slots() > 0
    }

    pub fn idle_cpus(&self) -> usize {
        (self.cpu_count as usize).saturating_sub(self.executing.len())
    }

    /// Predicted seconds to execute one job here.
    pub fn service_time(&self) -> f64 {
        self.rate.estimate() / self.speed_factor
    }

    /// Predicted wait before a newly assigned job gets a CPU: jobs ahead are
    /// served FIFO over `cpu_count` parallel slots at the current estimate.
    pub fn queue_wait(&self) -> f64 {
        (self.busy_count() / self.cpu_count as usize) as f64 * self.service_time()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataHost {
    pub id: DataHostId,
    pub co_located_compute: Option<ServerId>,
    pub data_service: DataServiceStatus,
    /// Compute servers by descending bandwidth from this host, ties by id.
    pub sorted_compute_cache: Vec<ServerId>,
}

impl DataHost {
    pub fn new(id: impl Into<String>, co_located_compute: Option<ServerId>) -> Self {
        Self {
            id: DataHostId(id.into()),
            co_located_compute,
            data_service: DataServiceStatus::Available,
            sorted_compute_cache: Vec::new(),
        }
    }

    pub fn is_serving(&self) -> bool {
        self.data_service == DataServiceStatus::Available
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataFile {
    pub lfn: LogicalFileName,
    pub size: u64,
    pub hosts: Vec<DataHostId>,
}

impl From<&ReplicaEntry> for DataFile {
    fn from(e: &ReplicaEntry) -> Self {
        Self {
            lfn: e.lfn.clone(),
            size: e.size,
            hosts: e.hosts().cloned().collect(),
        }
    }
}

/// Directed link between two testbed members (data host or server ids).
pub type Link = (String, String);

/// Bandwidth (MB/s) and latency (ms) between testbed members at one time.
/// Co-located pairs are not stored; lookups return infinite bandwidth.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NetworkSnapshot {
    pub time: f64,
    pub bandwidth: BTreeMap<Link, f64>,
    pub latency: BTreeMap<Link, f64>,
}

impl NetworkSnapshot {
    pub fn bandwidth(&self, from: &str, to: &str) -> f64 {
        self.bandwidth
            .get(&(from.to_owned(), to.to_owned()))
            .copied()
            .unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub from: String,
    pub to: String,
    /// MB/s; zero declares the link down.
    pub mbps: f64,
    #[serde(default)]
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub from_time: f64,
    pub links: Vec<LinkSpec>,
}

/// Piecewise-constant bandwidth trace, optionally perturbed by seeded
/// multiplicative noise at each measurement round.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BandwidthTrace {
    pub steps: Vec<TraceStep>,
    #[serde(default)]
    pub symmetric: bool,
    /// Relative noise amplitude in [0, 1); each measured link is scaled by a
    /// uniform factor in `[1 - a, 1 + a]`.
    #[serde(default)]
    pub noise: f64,
}

impl BandwidthTrace {
    pub fn constant(links: Vec<LinkSpec>, symmetric: bool) -> Self {
        Self {
            steps: vec![TraceStep {
                from_time: 0.0,
                links,
            }],
            symmetric,
            noise: 0.0,
        }
    }

    fn step_at(&self, time: f64) -> Option<&TraceStep> {
        self.steps
            .iter()
            .filter(|s| s.from_time <= time)
            .max_by(|a, b| a.from_time.total_cmp(&b.from_time))
    }

    /// Noise-free matrix in effect at `time`.
    pub fn matrix_at(&self, time: f64) -> NetworkSnapshot {
        let mut snap = NetworkSnapshot {
            time,
            ..Default::default()
        };
        if let Some(step) = self.step_at(time) {
            for l in &step.links {
                let fwd = (l.from.clone(), l.to.clone());
                if self.symmetric {
                    let rev = (l.to.clone(), l.from.clone());
                    snap.bandwidth.entry(rev.clone()).or_insert(l.mbps);
                    snap.latency.entry(rev).or_insert(l.latency_ms);
                }
                snap.bandwidth.insert(fwd.clone(), l.mbps);
                snap.latency.insert(fwd, l.latency_ms);
            }
        }
        snap
    }

    /// Times after `time` at which the trace changes.
    pub fn has_step_after(&self, time: f64) -> bool {
        self.steps.iter().any(|s| s.from_time > time)
    }
}

#[derive(Debug, Clone)]
pub struct GridModel {
    pub servers: BTreeMap<ServerId, ComputeServer>,
    pub hosts: BTreeMap<DataHostId, DataHost>,
    pub files: BTreeMap<LogicalFileName, DataFile>,
    pub trace: BandwidthTrace,
    /// Member that receives job output (the broker's site), if modeled.
    pub broker_member: Option<String>,
    snapshot: NetworkSnapshot,
    noise_rng: ChaCha8Rng,
}

impl GridModel {
    pub fn new(
        servers: impl IntoIterator<Item = ComputeServer>,
        hosts: impl IntoIterator<Item = DataHost>,
        files: impl IntoIterator<Item = DataFile>,
        trace: BandwidthTrace,
        noise_seed: u64,
    ) -> Self {
        let mut model = Self {
            servers: servers.into_iter().map(|s| (s.id.clone(), s)).collect(),
            hosts: hosts.into_iter().map(|h| (h.id.clone(), h)).collect(),
            files: files.into_iter().map(|f| (f.lfn.clone(), f)).collect(),
            trace,
            broker_member: None,
            snapshot: NetworkSnapshot::default(),
            noise_rng: ChaCha8Rng::seed_from_u64(noise_seed),
        };
        model.update_measurements(0.0);
        model
    }

    /// Restarts the noise stream from `seed` and retakes the t=0 measurement.
    pub fn reseed_noise(&mut self, seed: u64) {
        self.noise_rng = ChaCha8Rng::seed_from_u64(seed);
        self.update_measurements(0.0);
    }

    pub fn snapshot(&self) -> &NetworkSnapshot {
        &self.snapshot
    }

    pub fn server(&self, id: &ServerId) -> Result<&ComputeServer, GridError> {
        self.servers
            .get(id)
            .ok_or_else(|| GridError::UnknownServer(id.clone()))
    }

    pub fn server_mut(&mut self, id: &ServerId) -> Result<&mut ComputeServer, GridError> {
        self.servers
            .get_mut(id)
            .ok_or_else(|| GridError::UnknownServer(id.clone()))
    }

    pub fn host(&self, id: &DataHostId) -> Result<&DataHost, GridError> {
        self.hosts
            .get(id)
            .ok_or_else(|| GridError::UnknownHost(id.clone()))
    }

    pub fn host_mut(&mut self, id: &DataHostId) -> Result<&mut DataHost, GridError> {
        self.hosts
            .get_mut(id)
            .ok_or_else(|| GridError::UnknownHost(id.clone()))
    }

    /// MB/s from `host` to `server` under the current snapshot; infinite
    /// for a co-located pair.
    pub fn available_bandwidth(
        &self,
        host: &DataHostId,
        server: &ServerId,
    ) -> Result<f64, GridError> {
        let h = self.host(host)?;
        self.server(server)?;
        Ok(bandwidth_in(&self.snapshot, h, server))
    }

    /// MB/s for returning output from `server` to the broker site.
    pub fn output_bandwidth(&self, server: &ServerId) -> f64 {
        match &self.broker_member {
            None => f64::INFINITY,
            Some(b) if b == server.as_str() => f64::INFINITY,
            Some(b) => self.snapshot.bandwidth(server.as_str(), b),
        }
    }

    /// Takes a measurement round at `time`: the snapshot is rebuilt from the
    /// trace (plus noise) and every data host's sorted server list is
    /// refreshed.
    pub fn update_measurements(&mut self, time: f64) -> &NetworkSnapshot {
        let mut snap = self.trace.matrix_at(time);
        let amp = self.trace.noise;
        if amp > 0.0 {
            for bw in snap.bandwidth.values_mut() {
                let u: f64 = self.noise_rng.random_range(-1.0..=1.0);
                *bw *= 1.0 + amp * u;
            }
        }
        self.snapshot = snap;
        self.rebuild_caches();
        &self.snapshot
    }

    pub fn rebuild_caches(&mut self) {
        let ids: Vec<ServerId> = self.servers.keys().cloned().collect();
        for host in self.hosts.values_mut() {
            let mut ranked: Vec<(f64, ServerId)> = ids
                .iter()
                .map(|s| (bandwidth_in(&self.snapshot, host, s), s.clone()))
                .collect();
            ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
            host.sorted_compute_cache = ranked.into_iter().map(|(_, s)| s).collect();
        }
    }

    /// Expected completion time of a job reading `file` from `host` on
    /// `server`; `Ok(None)` when the pair is infeasible.
    pub fn estimated_completion_time(
        &self,
        server: &ServerId,
        file: Option<&DataFile>,
        host: Option<&DataHostId>,
    ) -> Result<Option<f64>, GridError> {
        let s = self.server(server)?;
        let (size, bw) = match (file, host) {
            (Some(f), Some(h)) => (f.size, self.available_bandwidth(h, server)?),
            _ => (0, f64::INFINITY),
        };
        Ok(estimated_completion_time(s, size, bw))
    }
}

fn bandwidth_in(snapshot: &NetworkSnapshot, host: &DataHost, server: &ServerId) -> f64 {
    if host.co_located_compute.as_ref() == Some(server) {
        f64::INFINITY
    } else {
        snapshot.bandwidth(host.id.as_str(), server.as_str())
    }
}

/// Seconds to move `size` bytes over a `mbps` link; `None` when the link is
/// down and there is something to move.
pub fn transfer_seconds(size: u64, mbps: f64) -> Option<f64> {
    if size == 0 || mbps == f64::INFINITY {
        Some(0.0)
    } else if mbps > 0.0 {
        Some(size as f64 / BYTES_PER_MB / mbps)
    } else {
        None
    }
}

/// `queue_wait + transfer + service` for one more job on `server`.
pub fn estimated_completion_time(server: &ComputeServer, size: u64, mbps: f64) -> Option<f64> {
    if !server.is_available() {
        return None;
    }
    let transfer = transfer_seconds(size, mbps)?;
    Some(server.queue_wait() + transfer + server.service_time())
}

/// Total order on estimated times used for every tie-break.
pub fn cmp_time(a: f64, b: f64) -> Ordering {
    a.total_cmp(&b)
}
