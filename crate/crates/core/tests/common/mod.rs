//! Shared generators and brute-force oracles for the integration tests.
#![allow(dead_code)]

use gridbroker::catalog::Replica;
use gridbroker::decompose::{Job, JobStatus};
use gridbroker::grid::{ComputeStatus, DataServiceStatus, LinkSpec, TraceStep};
use gridbroker::ids::{DataHostId, ServerId};
use gridbroker::plan::{parse_plan, PlanFile};
use gridbroker::scenario::{
    CatalogSpec, DataHostSpec, EstimatorSpec, NetworkSpec, Scenario, ServerSpec,
};
use gridbroker::scheduler::{BrokerState, Policy};
use gridbroker::sim::{Action, Component, FailureEntry};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SWEEP_PLAN: &str =
    "parameter F Gridfile lfn:/data/*;\ntask main\n  execute analyse $F $jobname\nendtask\n";

pub fn sweep_plan() -> PlanFile {
    parse_plan(SWEEP_PLAN).unwrap()
}

/// Random testbed with at most 6 servers, 6 data hosts and 30 files.
pub fn random_scenario(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_servers = rng.random_range(1..=6);
    let n_hosts = rng.random_range(1..=6);
    let servers: Vec<ServerSpec> = (0..n_servers)
        .map(|i| ServerSpec {
            id: format!("s{i}"),
            cpus: rng.random_range(1..=4),
            speed: [0.5, 1.0, 1.0, 1.5, 2.0][rng.random_range(0..5)],
            max_jobs: rng.random_range(1..=5),
            middleware: "globus".into(),
        })
        .collect();
    let data_hosts: Vec<DataHostSpec> = (0..n_hosts)
        .map(|i| DataHostSpec {
            id: format!("h{i}"),
            co_located_compute: (i < n_servers && rng.random_bool(0.6)).then(|| format!("s{i}")),
        })
        .collect();
    let mut links = Vec::new();
    for h in &data_hosts {
        for s in &servers {
            if rng.random_bool(0.85) {
                // a few links are declared down
                let mbps = if rng.random_bool(0.1) {
                    0.0
                } else {
                    rng.random_range(0.2..10.0)
                };
                links.push(LinkSpec {
                    from: h.id.clone(),
                    to: s.id.clone(),
                    mbps,
                    latency_ms: 5.0,
                });
            }
        }
    }
    for s in servers.iter().skip(1) {
        links.push(LinkSpec {
            from: s.id.clone(),
            to: "s0".into(),
            mbps: rng.random_range(1.0..10.0),
            latency_ms: 5.0,
        });
    }
    let mut trace = vec![TraceStep {
        from_time: 0.0,
        links: links.clone(),
    }];
    if rng.random_bool(0.5) {
        for l in &mut links {
            l.mbps *= rng.random_range(0.5..1.5);
        }
        trace.push(TraceStep {
            from_time: rng.random_range(50.0..400.0),
            links,
        });
    }
    let n_files = rng.random_range(1..=30);
    let catalog = (0..n_files)
        .map(|i| {
            let k = rng.random_range(1..=n_hosts.min(3));
            let mut hosts: Vec<usize> = (0..n_hosts).collect();
            for j in 0..k {
                let pick = rng.random_range(j..n_hosts);
                hosts.swap(j, pick);
            }
            CatalogSpec {
                lfn: format!("lfn:/data/f{i:02}.dat"),
                size_bytes: rng.random_range(1..=50) * 1_000_000,
                replicas: hosts[..k]
                    .iter()
                    .map(|h| Replica::new(format!("h{h}"), format!("/store/f{i:02}.dat")))
                    .collect(),
            }
        })
        .collect();
    let mut failures = Vec::new();
    if rng.random_bool(0.4) {
        let s = rng.random_range(0..n_servers);
        let at = rng.random_range(0.0..300.0);
        failures.push(FailureEntry {
            time: at,
            resource: format!("s{s}"),
            component: Component::Compute,
            action: Action::Fail,
        });
        if rng.random_bool(0.5) {
            failures.push(FailureEntry {
                time: at + rng.random_range(10.0..300.0),
                resource: format!("s{s}"),
                component: Component::Compute,
                action: Action::Recover,
            });
        }
    }
    if rng.random_bool(0.3) {
        let h = rng.random_range(0..n_hosts);
        failures.push(FailureEntry {
            time: rng.random_range(0.0..300.0),
            resource: format!("h{h}"),
            component: Component::Data,
            action: Action::Fail,
        });
    }
    let scenario = Scenario {
        name: format!("random-{seed}"),
        broker_host: Some("s0".into()),
        event_interval: [10.0, 30.0, 60.0][rng.random_range(0..3)],
        job_work_seconds: rng.random_range(20.0..200.0),
        stage_in_seconds: rng.random_range(0.0..3.0),
        output_bytes: 100_000,
        streaming_overlap: 0.0,
        max_attempts: Some(5),
        data_local_failure_events: 3,
        infeasible_event_limit: None,
        horizon: 1.0e7,
        estimator: EstimatorSpec {
            alpha: rng.random_range(0.1..=1.0),
            prior_seconds: rng.random_range(20.0..200.0),
        },
        servers,
        data_hosts,
        network: NetworkSpec {
            symmetric: false,
            noise: rng.random_range(0.0..0.3),
            trace,
        },
        catalog,
        failures,
    };
    assert!(scenario.validate().is_empty(), "{:?}", scenario.validate());
    scenario
}

/// Oracle-side view of bandwidth: co-located pairs are infinite, missing
/// links are zero.
fn oracle_bandwidth(state: &BrokerState, host: &DataHostId, server: &ServerId) -> f64 {
    let h = &state.grid.hosts[host];
    if h.co_located_compute.as_ref() == Some(server) {
        return f64::INFINITY;
    }
    state
        .grid
        .snapshot()
        .bandwidth
        .get(&(host.as_str().to_string(), server.as_str().to_string()))
        .copied()
        .unwrap_or(0.0)
}

struct ServerView {
    id: ServerId,
    service: f64,
    wait: f64,
}

/// Available servers with a free slot under the job limit.
fn open_servers(state: &BrokerState) -> Vec<ServerView> {
    state
        .grid
        .servers
        .values()
        .filter(|s| s.status == ComputeStatus::Available)
        .filter(|s| s.queued.len() + s.executing.len() < s.max_job_limit as usize)
        .map(|s| {
            let service = s.rate.estimate() / s.speed_factor;
            let rounds = ((s.queued.len() + s.executing.len()) / s.cpu_count as usize) as f64;
            ServerView {
                id: s.id.clone(),
                service,
                wait: rounds * service,
            }
        })
        .collect()
}

fn serving_hosts(state: &BrokerState, job: &Job) -> Vec<Option<DataHostId>> {
    match &job.required_lfn {
        None => vec![None],
        Some(lfn) => state.grid.files[lfn]
            .hosts
            .iter()
            .filter(|h| state.grid.hosts[*h].data_service == DataServiceStatus::Available)
            .cloned()
            .map(Some)
            .collect(),
    }
}

/// Exhaustive search over every (data host, server) pair with the policy's
/// cost and declared tie-breaks. `None` when nothing can take the job.
pub fn brute_force(
    policy: Policy,
    job: &Job,
    state: &BrokerState,
) -> Option<(ServerId, Option<DataHostId>)> {
    let size = job
        .required_lfn
        .as_ref()
        .map_or(0, |l| state.grid.files[l].size);
    let hosts = serving_hosts(state, job);
    let servers = open_servers(state);
    let bw = |h: &Option<DataHostId>, s: &ServerId| match h {
        None => f64::INFINITY,
        Some(h) => oracle_bandwidth(state, h, s),
    };
    match policy {
        Policy::Adaptive => {
            let mut all = Vec::new();
            for h in &hosts {
                for s in &servers {
                    let b = bw(h, &s.id);
                    if b <= 0.0 {
                        continue;
                    }
                    let transfer = if b.is_infinite() {
                        0.0
                    } else {
                        size as f64 / 1e6 / b
                    };
                    all.push((s.wait + transfer + s.service, s.id.clone(), h.clone()));
                }
            }
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            all.into_iter().next().map(|(_, s, h)| (s, h))
        }
        Policy::ComputeOnly => {
            let mut all = Vec::new();
            for s in &servers {
                let mut reach: Vec<(f64, Option<DataHostId>)> = hosts
                    .iter()
                    .map(|h| (bw(h, &s.id), h.clone()))
                    .filter(|(b, _)| *b > 0.0)
                    .collect();
                reach.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                if let Some((_, h)) = reach.into_iter().next() {
                    all.push((s.wait + s.service, s.id.clone(), h));
                }
            }
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            all.into_iter().next().map(|(_, s, h)| (s, h))
        }
        Policy::DataLocal => {
            let mut all = Vec::new();
            for h in &hosts {
                for s in &servers {
                    let local = match h {
                        None => true,
                        Some(h) => state.grid.hosts[h].co_located_compute.as_ref() == Some(&s.id),
                    };
                    if local {
                        all.push((s.wait + s.service, s.id.clone(), h.clone()));
                    }
                }
            }
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            all.into_iter().next().map(|(_, s, h)| (s, h))
        }
    }
}

/// Structural consistency of a broker state: the list, server queues and
/// executing sets agree with job statuses, and no server exceeds its limit.
pub fn check_state(state: &BrokerState) -> Result<(), String> {
    let listed: Vec<_> = state.unassigned.iter().collect();
    let mut sorted = listed.clone();
    sorted.sort();
    sorted.dedup();
    if sorted.len() != listed.len() {
        return Err("duplicate job in the unassigned list".into());
    }
    let unassigned: Vec<_> = state
        .jobs
        .iter()
        .filter(|j| j.status == JobStatus::Unassigned)
        .map(|j| j.id)
        .collect();
    if sorted != unassigned {
        return Err(format!("list {sorted:?} != unassigned jobs {unassigned:?}"));
    }
    let counts = state.status_counts();
    if counts.iter().sum::<usize>() != state.jobs.len() {
        return Err("status counts do not sum to the job total".into());
    }
    for s in state.grid.servers.values() {
        if s.queued.len() + s.executing.len() > s.max_job_limit as usize {
            return Err(format!("{} over its job limit", s.id));
        }
        if s.executing.len() > s.cpu_count as usize {
            return Err(format!("{} runs more jobs than cpus", s.id));
        }
        for id in &s.queued {
            let j = &state.jobs[id.index()];
            if j.status != JobStatus::Queued || j.assigned_server.as_ref() != Some(&s.id) {
                return Err(format!("{id} queued on {} but is {:?}", s.id, j.status));
            }
        }
        for id in &s.executing {
            let j = &state.jobs[id.index()];
            if j.status != JobStatus::Executing || j.assigned_server.as_ref() != Some(&s.id) {
                return Err(format!("{id} executing on {} but is {:?}", s.id, j.status));
            }
        }
    }
    let placed: usize = state
        .grid
        .servers
        .values()
        .map(|s| s.queued.len() + s.executing.len())
        .sum();
    if placed != counts[1] + counts[2] {
        return Err("server queues disagree with queued/executing counts".into());
    }
    Ok(())
}

/// Re-enacts one scheduling event from the state just before it, choosing
/// every placement with [`brute_force`], and compares the result with the
/// assignments the engine made. Returns the number of selections checked.
pub fn check_tick_against_oracle(
    before: &BrokerState,
    policy: Policy,
    outcome: &gridbroker::scheduler::EventOutcome,
) -> Result<usize, String> {
    use gridbroker::scheduler::{detect_variation, reclaim_undispatched};
    let mut st = before.clone();
    let delta = detect_variation(&st);
    reclaim_undispatched(&mut st, &delta).map_err(|e| e.to_string())?;
    let order: Vec<_> = st.unassigned.iter().collect();
    let mut expected = Vec::new();
    let mut checked = 0;
    for id in order {
        if open_servers(&st).is_empty() {
            break;
        }
        checked += 1;
        if let Some((server, host)) = brute_force(policy, st.job(id), &st) {
            let job = st.job_mut(id);
            job.status = JobStatus::Queued;
            job.assigned_server = Some(server.clone());
            job.chosen_data_host = host.clone();
            st.grid
                .servers
                .get_mut(&server)
                .unwrap()
                .queued
                .push_back(id);
            expected.push((id, server, host));
        }
    }
    let actual: Vec<_> = outcome
        .assignments
        .iter()
        .map(|a| (a.job, a.server.clone(), a.data_host.clone()))
        .collect();
    if actual != expected {
        return Err(format!("engine {actual:?}\noracle {expected:?}"));
    }
    Ok(checked)
}

/// Steps a simulation to the end, checking the oracle at every scheduling
/// event and the state invariants after every event.
pub fn run_checked(
    mut sim: gridbroker::sim::Simulation,
) -> Result<(usize, gridbroker::sim::Simulation), String> {
    let policy = sim.config().policy;
    let mut checked = 0;
    loop {
        let before = sim.state().clone();
        let Some(info) = sim.step().map_err(|e| e.to_string())? else {
            break;
        };
        if let Some(outcome) = &info.outcome {
            checked += check_tick_against_oracle(&before, policy, outcome)
                .map_err(|e| format!("t={} {e}", info.event.time))?;
        }
        check_state(sim.state()).map_err(|e| format!("t={} {e}", info.event.time))?;
    }
    Ok((checked, sim))
}

pub fn simulation(scenario: &Scenario, policy: Policy, seed: u64) -> gridbroker::sim::Simulation {
    let jobs = gridbroker::experiment::prepare_jobs(scenario, &sweep_plan()).unwrap();
    gridbroker::sim::Simulation::new(
        scenario.name.clone(),
        scenario.grid(seed),
        jobs.jobs,
        scenario.sim_config(policy, seed),
        scenario.failures.clone(),
    )
    .unwrap()
}

/// Plan text as it appears in the analysis experiment.
pub const ANALYSIS_PLAN: &str = include_str!("../../data/belle-analysis.plan");

/// Hand-built AST the analysis plan must parse to.
pub fn analysis_plan_ast() -> PlanFile {
    use gridbroker::plan::{Command, CommandKind, Expr, ParameterDecl, ParameterKind, TaskDecl};
    let copy = |s: &str, d: &str| {
        Command::new(CommandKind::Copy {
            src: Expr::new(s),
            dst: Expr::new(d),
        })
    };
    PlanFile {
        parameters: vec![ParameterDecl::new(
            "INFILE",
            ParameterKind::Gridfile("lfn:/users/winton/fsimddks/fsimdata*.mdst".into()),
        )],
        tasks: vec![
            TaskDecl::new(
                "nodestart",
                vec![
                    copy("ddk_ana.so", "node:ddks_ana.so"),
                    copy("libanalyser.so", "node:libanalyser.so"),
                    copy("libbase_analyser.so", "node:libbase_analyser.so"),
                    copy("libreconstructor.so", "node:libreconstructor.so"),
                    copy("libtools.so", "node:libtools.so"),
                    copy("event.conf", "node:event.conf"),
                    copy("recon.conf", "node:recon.conf"),
                    copy("particle.conf", "node:particle.conf"),
                ],
            ),
            TaskDecl::new(
                "main",
                vec![
                    Command::new(CommandKind::Execute {
                        on_node: true,
                        program: Expr::new("./runme.ddksana"),
                        args: vec![Expr::new("$INFILE"), Expr::new("$jobname")],
                    }),
                    copy("node:runme.log", "runme.log.$jobname"),
                    copy("node:ddks-$jobname.hbook", "ddk-$jobname.hbook"),
                ],
            ),
        ],
    }
}

/// Malformed plans, each paired with the line that must carry an error.
pub const MALFORMED_PLANS: [(&str, usize); 20] = [
    ("parameter X Set 1 2 2;\ntask main\nendtask\n", 1),
    ("task main\nendtask\nparameter X Range 5 1 1;\n", 3),
    ("parameter X Range 0 10 0;\ntask main\nendtask\n", 1),
    (
        "parameter X Gridfile /users/a*.dat;\ntask main\nendtask\n",
        1,
    ),
    ("parameter X Single 1\ntask main\nendtask\n", 1),
    ("parameter X Float 1;\ntask main\nendtask\n", 1),
    (
        "parameter X Single 1;\nparameter X Single 2;\ntask main\nendtask\n",
        2,
    ),
    ("task main\n  copy a\nendtask\n", 2),
    ("task main\n  execute\nendtask\n", 2),
    ("task main\n  mcopy node:run.log out/\nendtask\n", 2),
    ("task main\n  copy $MISSING b\nendtask\n", 2),
    ("task main\n  copy a b\n", 1),
    ("task nodestart\n  copy a node:a\nendtask\n", 1),
    ("task main\nendtask\ntask main\nendtask\n", 3),
    ("task setup\nendtask\ntask main\nendtask\n", 1),
    ("frobnicate x\ntask main\nendtask\n", 1),
    ("task main\nendtask\nendtask\n", 3),
    ("task main\n  parameter X Single 1;\nendtask\n", 2),
    ("parameter 9X Single 1;\ntask main\nendtask\n", 1),
    ("# empty set\nparameter X Set;\ntask main\nendtask\n", 2),
];

/// Runs one simulation and checks, after every event: status conservation,
/// capacity limits, non-decreasing time. At the end: report aggregates,
/// transfer byte accounting, byte-identical reruns and log replay.
pub fn check_properties(scenario: &Scenario, policy: Policy, seed: u64) -> Result<(), String> {
    use gridbroker::sim::replay;
    let mut sim = simulation(scenario, policy, seed);
    let total = sim.state().jobs.len();
    let mut last = 0.0;
    while let Some(info) = sim.step().map_err(|e| e.to_string())? {
        let t = info.event.time;
        if t < last {
            return Err(format!("time went back from {last} to {t}"));
        }
        last = t;
        check_state(sim.state()).map_err(|e| format!("t={t} {e}"))?;
        if sim.state().status_counts().iter().sum::<usize>() != total {
            return Err(format!("t={t} job count not conserved"));
        }
    }
    if !sim.state().all_terminal() {
        return Err("run ended with non-terminal jobs".into());
    }
    let report = sim.report();
    let log = sim.bookkeeper().to_jsonl();

    if report.done + report.failed != total {
        return Err("done + failed != jobs".into());
    }
    let bytes: u64 = report.jobs.iter().map(|r| r.transfer_bytes).sum();
    if bytes != report.bytes_transferred {
        return Err("bytes_transferred is not the sum over jobs".into());
    }
    let per_server: usize = report.servers.values().map(|c| c.done + c.failed).sum();
    if per_server + report.unplaced_failed != total {
        return Err("per-server counts do not cover every job".into());
    }
    let latest = report
        .jobs
        .iter()
        .map(|r| r.total_seconds)
        .fold(0.0, f64::max);
    if report.total_time != latest {
        return Err("total_time is not the latest terminal time".into());
    }
    for r in &report.jobs {
        if r.history.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(format!("{} history goes back in time", r.job));
        }
        if let (Some(s), Some(h)) = (&r.server, &r.data_host) {
            let co_located = sim.state().grid.hosts[h].co_located_compute.as_ref() == Some(s);
            let job = sim.state().job(r.job);
            let size = sim.state().input_file(job).map_or(0, |f| f.size);
            if co_located && r.transfer_bytes != 0 {
                return Err(format!("{} moved bytes on a co-located read", r.job));
            }
            if !co_located && r.status() == JobStatus::Done && r.transfer_bytes != size {
                return Err(format!(
                    "{} remote read moved {} of {size}",
                    r.job, r.transfer_bytes
                ));
            }
        }
    }

    let again = simulation(scenario, policy, seed)
        .run()
        .map_err(|e| e.to_string())?;
    if again.report.to_json() != report.to_json() || again.log.to_jsonl() != log {
        return Err("rerun is not byte-identical".into());
    }
    let replayed = replay(sim.bookkeeper().records()).map_err(|e| e.to_string())?;
    if replayed != report {
        return Err("replayed report differs from the live report".into());
    }
    let parsed = gridbroker::sim::read_log(log.as_bytes()).map_err(|e| e.to_string())?;
    if replay(&parsed).map_err(|e| e.to_string())? != report {
        return Err("report replayed from log text differs".into());
    }
    Ok(())
}
