//! Simulated asynchronous evaluation with `N` workers.
//!
//! Queries are evaluated when issued; the simulated runtime only decides when
//! each result is handed back to the policy. The first `N` proposals come from
//! fresh slots (`o = 0`); afterwards every completion is fed to the policy
//! and immediately produces one replacement query.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Ops;
use crate::gp::{expected_improvement, GpSampleFunction};
use crate::objective::Objective;
use crate::policy::{LstmPolicy, LstmShape, PolicySession};
use crate::trajectory::{Clock, ParallelInfo, Record, Trajectory};
use crate::training::{assemble_loss, LossKind, Rollout, RolloutSpec, TrainConfig, TrainError, Trained};

/// Runtimes drawn from `Uniform(1 − η, 1 + η)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuntimeJitter {
    pub eta: f64,
}

impl RuntimeJitter {
    pub fn new(eta: f64) -> Result<Self, String> {
        if (0.0..1.0).contains(&eta) {
            Ok(RuntimeJitter { eta })
        } else {
            Err(format!("runtime jitter {eta} must lie in [0, 1)"))
        }
    }

    pub fn none() -> Self {
        RuntimeJitter { eta: 0.0 }
    }

    pub fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        1.0 + self.eta * (2.0 * u - 1.0)
    }
}

/// A simulated completion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub finish: f64,
    pub issue: usize,
    pub worker: usize,
}

impl Eq for Event {}

impl Ord for Event {
    // Reversed so the max-heap pops the earliest finish, ties by issue index.
    fn cmp(&self, other: &Self) -> Ordering {
        other.finish.total_cmp(&self.finish).then_with(|| other.issue.cmp(&self.issue))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Event queue over `N` workers.
#[derive(Debug, Clone)]
pub struct WorkerPool {
    now: f64,
    queue: BinaryHeap<Event>,
    // Idle workers, lowest id last so `pop` hands out the lowest.
    idle: Vec<usize>,
}

impl WorkerPool {
    pub fn new(workers: usize) -> Self {
        WorkerPool { now: 0.0, queue: BinaryHeap::new(), idle: (0..workers).rev().collect() }
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn outstanding(&self) -> usize {
        self.queue.len()
    }

    pub fn has_idle(&self) -> bool {
        !self.idle.is_empty()
    }

    /// Starts a job at the current time; returns the worker that took it.
    pub fn issue(&mut self, issue: usize, runtime: f64) -> Option<usize> {
        let worker = self.idle.pop()?;
        self.queue.push(Event { finish: self.now + runtime, issue, worker });
        Some(worker)
    }

    /// Advances the clock to the next completion.
    pub fn complete_next(&mut self) -> Option<Event> {
        let ev = self.queue.pop()?;
        self.now = ev.finish;
        self.idle.push(ev.worker);
        self.idle.sort_unstable_by(|a, b| b.cmp(a));
        Some(ev)
    }
}

/// Runs the policy against `objective` with `workers` simulated workers.
/// Records are in issue order.
pub fn run_parallel(
    policy: &LstmPolicy,
    objective: &mut dyn Objective,
    workers: usize,
    budget: usize,
    jitter: RuntimeJitter,
    seed: u64,
    clock: Clock,
) -> Result<Trajectory, crate::Error> {
    if workers == 0 || workers > budget {
        return Err(crate::Error::Invalid(format!("need 1 <= workers ({workers}) <= budget ({budget})")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut session = PolicySession::new(policy, objective.space().clone(), objective.observation_scale())?;
    let mut pool = WorkerPool::new(workers);
    let mut issued = Issued { records: Vec::with_capacity(budget), tickets: Vec::with_capacity(budget) };

    while issued.records.len() < workers {
        issued.issue(&mut session, &mut pool, objective, jitter, &mut rng, clock)?;
    }
    let mut completed = 0;
    while let Some(ev) = pool.complete_next() {
        let info = issued.records[ev.issue].parallel.as_mut().expect("parallel record");
        info.complete_idx = completed;
        info.sim_time = ev.finish;
        completed += 1;
        session.tell(issued.tickets[ev.issue], issued.records[ev.issue].y)?;
        if issued.records.len() < budget {
            issued.issue(&mut session, &mut pool, objective, jitter, &mut rng, clock)?;
        }
    }
    let mut traj = Trajectory::new(policy.dim());
    for r in issued.records {
        traj.push(r);
    }
    Ok(traj)
}

struct Issued {
    records: Vec<Record>,
    tickets: Vec<u64>,
}

impl Issued {
    fn issue(
        &mut self,
        session: &mut PolicySession<&LstmPolicy>,
        pool: &mut WorkerPool,
        objective: &mut dyn Objective,
        jitter: RuntimeJitter,
        rng: &mut ChaCha8Rng,
        clock: Clock,
    ) -> Result<(), crate::Error> {
        let sw = clock.stopwatch();
        let p = session.ask()?;
        let wall_ns = sw.ns();
        let idx = self.records.len();
        let worker = pool.issue(idx, jitter.draw(rng)).expect("an idle worker exists whenever a query is issued");
        let y = objective
            .evaluate(&p.point)
            .map_err(|source| crate::Error::Objective { step: idx + 1, worker: Some(worker), source })?;
        self.tickets.push(p.ticket);
        self.records.push(Record {
            x: p.point,
            y,
            wall_ns,
            parallel: Some(ParallelInfo {
                worker,
                issue_idx: idx,
                complete_idx: usize::MAX,
                sim_time: f64::NAN,
                fresh: p.fresh,
            }),
        });
        Ok(())
    }
}

/// Taped counterpart of [`run_parallel`] on a fresh GP sample: the loss is
/// assembled over all queries in issue order.
pub fn rollout_parallel<O: Ops>(
    ops: &mut O,
    shape: LstmShape,
    params: &[O::V],
    spec: &RolloutSpec,
    function_seed: u64,
    runtime_seed: u64,
) -> Result<Rollout<O::V>, TrainError> {
    let (n, horizon) = (spec.workers, spec.horizon);
    if n == 0 || n > horizon {
        return Err(TrainError::Config(format!("need 1 <= workers ({n}) <= horizon ({horizon})")));
    }
    let mut f = GpSampleFunction::<O::V>::new(spec.kernel, shape.dim, function_seed)?
        .with_detached_history(spec.detach_history);
    let mut rng = ChaCha8Rng::seed_from_u64(runtime_seed);
    let mut pool = WorkerPool::new(n);
    let mut state = shape.initial_state(ops)?;
    let zero = ops.constant(0.0)?;
    let dummy_x = vec![zero; shape.dim];
    let mut units: Vec<Vec<O::V>> = Vec::with_capacity(horizon);
    let mut values = Vec::with_capacity(horizon);
    let mut eis = Vec::new();
    let mut best = zero;

    let mut feed: Option<usize> = None;
    loop {
        if units.len() < horizon && pool.has_idle() {
            let (x_prev, y_prev, o) = match feed.take() {
                Some(j) => (units[j].clone(), values[j], true),
                None => (dummy_x.clone(), zero, false),
            };
            let (next, u) = shape.step(ops, params, &state, &x_prev, y_prev, o)?;
            state = next;
            let sampled = f.sample_next(ops, &u)?;
            if spec.loss == LossKind::Ei {
                eis.push(expected_improvement(ops, &sampled.posterior, best)?);
                best = if values.is_empty() { sampled.value } else { ops.min(best, sampled.value)? };
            }
            let idx = units.len();
            units.push(u);
            values.push(sampled.value);
            pool.issue(idx, spec.jitter.draw(&mut rng));
            continue;
        }
        match pool.complete_next() {
            Some(ev) => feed = Some(ev.issue),
            None => break,
        }
    }
    let loss = assemble_loss(ops, spec.loss, &values, &eis)?;
    let queries = units.iter().map(|u| u.iter().map(|v| ops.value(*v)).collect()).collect();
    Ok(Rollout { loss, values, queries })
}

/// Meta-training with parallel-evaluation rollouts.
pub fn train_parallel(
    config: &TrainConfig,
    workers: usize,
    jitter: RuntimeJitter,
    policy: LstmPolicy,
    checkpoint_dir: Option<&std::path::Path>,
) -> Result<Trained, TrainError> {
    let cfg = TrainConfig { workers, jitter: jitter.eta, ..config.clone() };
    crate::training::train(&cfg, policy, checkpoint_dir)
}
