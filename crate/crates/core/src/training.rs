//! Meta-training by backpropagation through unrolled rollouts on GP samples.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AdError, Ops, Plain, Tape};
use crate::checkpoint::Checkpoint;
use crate::gp::{expected_improvement, GpError, GpSampleFunction, Kernel};
use crate::parallel::{rollout_parallel, RuntimeJitter};
use crate::policy::{LstmPolicy, LstmShape, PolicyError, SearchSpace};
use crate::seeds::{derive, stream};
use crate::trajectory::Clock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Value at the last query.
    Final,
    /// Sum of all queried values.
    Sum,
    /// Negated sum of expected improvements at each query.
    Ei,
    /// Sum of observed improvements over the running best, clipped at zero.
    Oi,
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossKind::Final => "final",
            LossKind::Sum => "sum",
            LossKind::Ei => "ei",
            LossKind::Oi => "oi",
        })
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Ad(#[from] AdError),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("training diverged at outer step {step}; last good checkpoint: {}", last_checkpoint.as_ref().map_or("none".into(), |p| p.display().to_string()))]
    Diverged { step: usize, last_checkpoint: Option<PathBuf> },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Checkpoint(#[from] crate::checkpoint::CheckpointError),
}

/// Combines per-step values (and, for [`LossKind::Ei`], per-step expected
/// improvements) into the episode loss.
pub fn assemble_loss<O: Ops>(ops: &mut O, kind: LossKind, values: &[O::V], eis: &[O::V]) -> Result<O::V, AdError> {
    if values.is_empty() {
        return Err(AdError::LengthMismatch(0, 1));
    }
    match kind {
        LossKind::Final => Ok(values[values.len() - 1]),
        LossKind::Sum => ops.sum(values),
        LossKind::Ei => {
            if eis.len() != values.len() {
                return Err(AdError::LengthMismatch(eis.len(), values.len()));
            }
            let s = ops.sum(eis)?;
            ops.neg(s)
        }
        LossKind::Oi => {
            // The first query has no running best and contributes zero.
            let zero = ops.constant(0.0)?;
            let mut best = values[0];
            let mut terms = Vec::with_capacity(values.len());
            for &y in &values[1..] {
                let gap = ops.sub(y, best)?;
                terms.push(ops.min(gap, zero)?);
                best = ops.min(best, y)?;
            }
            if terms.is_empty() {
                Ok(zero)
            } else {
                ops.sum(&terms)
            }
        }
    }
}

/// Everything that defines one training episode apart from the parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutSpec {
    pub kernel: Kernel,
    pub horizon: usize,
    pub loss: LossKind,
    pub detach_history: bool,
    pub workers: usize,
    pub jitter: RuntimeJitter,
}

impl RolloutSpec {
    pub fn sequential(kernel: Kernel, horizon: usize, loss: LossKind) -> Self {
        RolloutSpec { kernel, horizon, loss, detach_history: true, workers: 1, jitter: RuntimeJitter::none() }
    }
}

/// Loss and per-step values of one unrolled episode, in issue order.
#[derive(Debug, Clone)]
pub struct Rollout<V> {
    pub loss: V,
    pub values: Vec<V>,
    pub queries: Vec<Vec<f64>>,
}

/// Unrolls the policy sequentially on a fresh GP sample seeded by
/// `function_seed`.
pub fn rollout_loss<O: Ops>(
    ops: &mut O,
    shape: LstmShape,
    params: &[O::V],
    spec: &RolloutSpec,
    function_seed: u64,
) -> Result<Rollout<O::V>, TrainError> {
    if spec.horizon == 0 {
        return Err(TrainError::Config("horizon must be at least 1".into()));
    }
    let mut f = GpSampleFunction::<O::V>::new(spec.kernel, shape.dim, function_seed)?
        .with_detached_history(spec.detach_history);
    let mut state = shape.initial_state(ops)?;
    let zero = ops.constant(0.0)?;
    let mut x_prev = vec![zero; shape.dim];
    let mut y_prev = zero;
    let mut values = Vec::with_capacity(spec.horizon);
    let mut eis = Vec::new();
    let mut queries = Vec::with_capacity(spec.horizon);
    let mut best = zero;
    for t in 0..spec.horizon {
        let (next, u) = shape.step(ops, params, &state, &x_prev, y_prev, t > 0)?;
        state = next;
        let sampled = f.sample_next(ops, &u)?;
        if spec.loss == LossKind::Ei {
            eis.push(expected_improvement(ops, &sampled.posterior, best)?);
            best = if t == 0 { sampled.value } else { ops.min(best, sampled.value)? };
        }
        queries.push(u.iter().map(|v| ops.value(*v)).collect());
        values.push(sampled.value);
        x_prev = u;
        y_prev = sampled.value;
    }
    let loss = assemble_loss(ops, spec.loss, &values, &eis)?;
    Ok(Rollout { loss, values, queries })
}

fn rollout_any<O: Ops>(
    ops: &mut O,
    shape: LstmShape,
    params: &[O::V],
    spec: &RolloutSpec,
    function_seed: u64,
    runtime_seed: u64,
) -> Result<Rollout<O::V>, TrainError> {
    if spec.workers <= 1 && spec.jitter.eta == 0.0 {
        rollout_loss(ops, shape, params, spec, function_seed)
    } else {
        rollout_parallel(ops, shape, params, spec, function_seed, runtime_seed)
    }
}

/// Loss value and gradient over the parameters for one episode.
pub fn rollout_gradient(
    policy: &LstmPolicy,
    spec: &RolloutSpec,
    function_seed: u64,
    runtime_seed: u64,
) -> Result<(f64, Vec<f64>), TrainError> {
    let mut tape = Tape::with_capacity(1 << 16, 1 << 20);
    let params = policy.params().iter().map(|&p| tape.input(p)).collect::<Result<Vec<_>, _>>()?;
    let r = rollout_any(&mut tape, policy.shape(), &params, spec, function_seed, runtime_seed)?;
    let g = tape.backward(r.loss)?;
    Ok((r.loss.value(), params.iter().map(|p| g.wrt(*p)).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }
}

/// Bias-corrected Adam update in place.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64], cfg: &AdamConfig) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(state.m.len(), grads.len());
    state.t += 1;
    let b1t = 1.0 - cfg.beta1.powi(state.t as i32);
    let b2t = 1.0 - cfg.beta2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let mhat = state.m[i] / b1t;
        let vhat = state.v[i] / b2t;
        params[i] -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage {
    pub horizon: usize,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub dim: usize,
    pub hidden: usize,
    pub kernel: Kernel,
    pub loss: LossKind,
    pub batch: usize,
    pub schedule: Vec<Stage>,
    pub adam: AdamConfig,
    pub seed: u64,
    pub clip_norm: f64,
    pub detach_history: bool,
    pub workers: usize,
    pub jitter: f64,
    /// Write a checkpoint every this many outer steps (0 disables).
    pub checkpoint_every: usize,
    pub clock: Clock,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 1,
            hidden: 32,
            kernel: Kernel::default(),
            loss: LossKind::Oi,
            batch: 32,
            schedule: vec![
                Stage { horizon: 10, steps: 300 },
                Stage { horizon: 20, steps: 300 },
                Stage { horizon: 30, steps: 400 },
            ],
            adam: AdamConfig::default(),
            seed: 0,
            clip_norm: 5.0,
            detach_history: true,
            workers: 1,
            jitter: 0.0,
            checkpoint_every: 0,
            clock: Clock::Wall,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.dim == 0 || self.hidden == 0 {
            return bad("dim and hidden must be positive".into());
        }
        if self.batch == 0 {
            return bad("batch must be at least 1".into());
        }
        self.kernel.validate()?;
        for (i, s) in self.schedule.iter().enumerate() {
            if s.horizon == 0 {
                return bad(format!("stage {i} has horizon 0"));
            }
            if i > 0 && s.horizon < self.schedule[i - 1].horizon {
                return bad(format!("stage {i} horizon {} decreases", s.horizon));
            }
            if self.workers > s.horizon {
                return bad(format!("stage {i} horizon {} is below the worker count {}", s.horizon, self.workers));
            }
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        RuntimeJitter::new(self.jitter).map_err(TrainError::Config)?;
        if !(self.clip_norm > 0.0) {
            return bad("clip_norm must be positive".into());
        }
        let a = &self.adam;
        if !(a.lr > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return bad(format!("invalid Adam hyperparameters {a:?}"));
        }
        Ok(())
    }

    pub fn total_steps(&self) -> usize {
        self.schedule.iter().map(|s| s.steps).sum()
    }

    pub fn rollout_spec(&self, horizon: usize) -> RolloutSpec {
        RolloutSpec {
            kernel: self.kernel,
            horizon,
            loss: self.loss,
            detach_history: self.detach_history,
            workers: self.workers,
            jitter: RuntimeJitter { eta: self.jitter },
        }
    }

    pub fn initial_policy(&self) -> Result<LstmPolicy, PolicyError> {
        LstmPolicy::new(self.dim, self.hidden, derive(self.seed, stream::POLICY_INIT, 0))
    }
}

/// One row of the training curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub outer_step: usize,
    pub horizon: usize,
    pub mean_loss: f64,
    pub grad_norm: f64,
    pub wall_ms: u64,
}

pub fn write_history_csv<W: std::io::Write>(rows: &[HistoryRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["outer_step", "horizon", "mean_loss", "grad_norm", "wall_ms"])?;
    for r in rows {
        w.write_record([
            r.outer_step.to_string(),
            r.horizon.to_string(),
            r.mean_loss.to_string(),
            r.grad_norm.to_string(),
            r.wall_ms.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub policy: LstmPolicy,
    pub history: Vec<HistoryRow>,
}

/// Meta-trains `policy` under `config`. Checkpoints go to `checkpoint_dir`
/// when both it and `config.checkpoint_every` are set.
pub fn train(config: &TrainConfig, policy: LstmPolicy, checkpoint_dir: Option<&Path>) -> Result<Trained, TrainError> {
    train_with(config, policy, checkpoint_dir, |_| {})
}

/// [`train`] with a callback after every outer step.
pub fn train_with(
    config: &TrainConfig,
    mut policy: LstmPolicy,
    checkpoint_dir: Option<&Path>,
    mut on_step: impl FnMut(&HistoryRow),
) -> Result<Trained, TrainError> {
    config.validate()?;
    if policy.dim() != config.dim || policy.hidden() != config.hidden {
        return Err(TrainError::Config(format!(
            "policy shape ({}, {}) differs from config ({}, {})",
            policy.dim(),
            policy.hidden(),
            config.dim,
            config.hidden
        )));
    }
    let n = policy.params().len();
    let mut adam = AdamState::new(n);
    let mut history = Vec::with_capacity(config.total_steps());
    let mut last_checkpoint = None;
    let mut outer = 0usize;
    let b = config.batch;
    for stage in &config.schedule {
        let spec = config.rollout_spec(stage.horizon);
        for _ in 0..stage.steps {
            let sw = config.clock.stopwatch();
            let results: Vec<Result<(f64, Vec<f64>), TrainError>> = (0..b)
                .into_par_iter()
                .map(|i| {
                    let idx = (outer * b + i) as u64;
                    rollout_gradient(
                        &policy,
                        &spec,
                        derive(config.seed, stream::TRAIN_FUNCTION, idx),
                        derive(config.seed, stream::TRAIN_RUNTIME, idx),
                    )
                })
                .collect();
            let mut grad = vec![0.0; n];
            let mut loss_sum = 0.0;
            for r in results {
                let (loss, g) = match r {
                    Ok(v) => v,
                    Err(TrainError::Ad(_)) => {
                        return Err(TrainError::Diverged { step: outer, last_checkpoint });
                    }
                    Err(e) => return Err(e),
                };
                loss_sum += loss;
                for (a, gi) in grad.iter_mut().zip(&g) {
                    *a += gi;
                }
            }
            let inv = 1.0 / b as f64;
            grad.iter_mut().for_each(|g| *g *= inv);
            let mean_loss = loss_sum * inv;
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if !mean_loss.is_finite() || !norm.is_finite() {
                return Err(TrainError::Diverged { step: outer, last_checkpoint });
            }
            if norm > config.clip_norm {
                let s = config.clip_norm / norm;
                grad.iter_mut().for_each(|g| *g *= s);
            }
            adam_step(&mut adam, policy.params_mut(), &grad, &config.adam);
            if policy.params().iter().any(|p| !p.is_finite()) {
                return Err(TrainError::Diverged { step: outer, last_checkpoint });
            }
            outer += 1;
            let row = HistoryRow {
                outer_step: outer,
                horizon: stage.horizon,
                mean_loss,
                grad_norm: norm,
                wall_ms: sw.ns() / 1_000_000,
            };
            on_step(&row);
            history.push(row);
            if let Some(dir) = checkpoint_dir {
                if config.checkpoint_every > 0 && outer % config.checkpoint_every == 0 {
                    let path = dir.join(format!("checkpoint_{outer:06}.toml"));
                    Checkpoint::from_training(&policy, config).save(&path)?;
                    last_checkpoint = Some(path);
                }
            }
        }
    }
    Ok(Trained { policy, history })
}

/// Mean untaped loss over `n` held-out GP samples.
pub fn validation_loss(policy: &LstmPolicy, spec: &RolloutSpec, n: usize, seed: u64) -> Result<f64, TrainError> {
    let losses: Vec<Result<f64, TrainError>> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let r = rollout_any(
                &mut Plain,
                policy.shape(),
                policy.params(),
                spec,
                derive(seed, stream::VALIDATION_FUNCTION, i),
                derive(seed, stream::RUNTIME, i),
            )?;
            Ok(r.loss)
        })
        .collect();
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / n as f64)
}

/// Search space the policy was trained on.
pub fn training_space(config: &TrainConfig) -> SearchSpace {
    SearchSpace::unit(config.dim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::expected_improvement_value;

    #[test]
    fn loss_assembly_examples() {
        let sum = assemble_loss(&mut Plain, LossKind::Sum, &[1.0, 2.0], &[]).unwrap();
        assert_eq!(sum, 3.0);
        assert_eq!(assemble_loss(&mut Plain, LossKind::Final, &[1.0, 2.0], &[]).unwrap(), 2.0);
        assert_eq!(assemble_loss(&mut Plain, LossKind::Oi, &[1.0, 2.0, 3.0, 1.5], &[]).unwrap(), 0.0);
        assert_eq!(assemble_loss(&mut Plain, LossKind::Oi, &[1.0, 0.5, 2.0, 0.25], &[]).unwrap(), -0.75);
        assert_eq!(assemble_loss(&mut Plain, LossKind::Oi, &[4.0], &[]).unwrap(), 0.0);
        assert_eq!(assemble_loss(&mut Plain, LossKind::Ei, &[0.0, 0.0], &[0.25, 0.5]).unwrap(), -0.75);
        assert!(assemble_loss(&mut Plain, LossKind::Ei, &[0.0], &[]).is_err());
    }

    #[test]
    fn first_ei_term_is_prior_density() {
        let ei = expected_improvement_value(0.0, 1.0, 0.0);
        assert!((-ei + 0.398_942_3).abs() < 1e-7);
        let kernel = Kernel::new(0.3, 1.0, 0.0).unwrap();
        let policy = LstmPolicy::new(1, 4, 2).unwrap();
        let spec = RolloutSpec::sequential(kernel, 1, LossKind::Ei);
        let r = rollout_loss(&mut Plain, policy.shape(), policy.params(), &spec, 5).unwrap();
        assert!((r.loss + 0.398_942_3).abs() < 1e-7);
    }

    proptest::proptest! {
        #[test]
        fn loss_ordering_sanity(ys in proptest::collection::vec(-5.0f64..5.0, 1..40)) {
            let oi = assemble_loss(&mut Plain, LossKind::Oi, &ys, &[]).unwrap();
            let sum = assemble_loss(&mut Plain, LossKind::Sum, &ys, &[]).unwrap();
            let min = ys.iter().copied().fold(f64::INFINITY, f64::min);
            proptest::prop_assert!(oi <= 0.0);
            proptest::prop_assert!(sum >= ys.len() as f64 * min - 1e-9);
            // Observed improvements telescope to best − first.
            proptest::prop_assert!((oi - (min - ys[0])).abs() < 1e-9);
        }
    }

    #[test]
    fn sum_minus_floor_is_cumulative_regret() {
        // f(x) = (x − 0.3)², minimum 0 at 0.3.
        let xs = [0.9, 0.1, 0.35, 0.3, 0.6];
        let ys: Vec<f64> = xs.iter().map(|x| (x - 0.3f64).powi(2)).collect();
        let regret: f64 = ys.iter().map(|y| y - 0.0).sum();
        let sum = assemble_loss(&mut Plain, LossKind::Sum, &ys, &[]).unwrap();
        assert!((sum - ys.len() as f64 * 0.0 - regret).abs() < 1e-15);
    }

    #[test]
    fn adam_identities() {
        let cfg = AdamConfig::default();
        let mut s = AdamState::new(3);
        let mut p = vec![1.0, -2.0, 0.5];
        adam_step(&mut s, &mut p, &[0.0; 3], &cfg);
        assert_eq!(p, vec![1.0, -2.0, 0.5]);

        let mut s = AdamState::new(3);
        let mut p = vec![0.0; 3];
        adam_step(&mut s, &mut p, &[3.0, -0.01, 1e3], &cfg);
        for (pi, sign) in p.iter().zip([-1.0, 1.0, -1.0]) {
            assert!((pi - sign * cfg.lr).abs() < 1e-8, "{pi}");
        }
        assert_eq!(s.t, 1);
        assert!(s.v.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn adam_descends_a_parabola() {
        let cfg = AdamConfig { lr: 0.1, ..Default::default() };
        let mut s = AdamState::new(1);
        let mut w = vec![1.0];
        let mut prev = 1.0f64;
        for _ in 0..10 {
            let g = [2.0 * w[0]];
            adam_step(&mut s, &mut w, &g, &cfg);
            assert!(w[0].abs() < prev);
            prev = w[0].abs();
        }
    }

    fn fd_check(spec: &RolloutSpec, seed: u64) {
        // Large weights spread the queries out, keeping the GP well conditioned.
        let mut policy = LstmPolicy::new(1, 4, 31).unwrap();
        policy.params_mut().iter_mut().for_each(|p| *p *= 20.0);
        let (_, grad) = rollout_gradient(&policy, spec, seed, seed + 1).unwrap();
        let r = rollout_any(&mut Plain, policy.shape(), policy.params(), spec, seed, seed + 1).unwrap();
        assert!(r.queries.windows(2).all(|w| (w[0][0] - w[1][0]).abs() > 0.04), "{:?}", r.queries);
        let loss_at = |p: &LstmPolicy| {
            rollout_any(&mut Plain, p.shape(), p.params(), spec, seed, seed + 1).unwrap().loss
        };
        let mut checked = 0;
        for i in 0..policy.params().len() {
            // Richardson-extrapolated central difference.
            let central = |h: f64| {
                let mut up = policy.clone();
                up.params_mut()[i] += h;
                let mut dn = policy.clone();
                dn.params_mut()[i] -= h;
                (loss_at(&up) - loss_at(&dn)) / (2.0 * h)
            };
            let fd = (4.0 * central(5e-4) - central(1e-3)) / 3.0;
            let scale = fd.abs().max(grad[i].abs());
            if scale < 1e-6 {
                continue;
            }
            assert!((grad[i] - fd).abs() / scale <= 1e-4, "{:?} param {i}: {} vs {fd}", spec.loss, grad[i]);
            checked += 1;
        }
        assert!(checked > 30, "only {checked} parameters checked");
    }

    #[test]
    fn rollout_gradient_matches_finite_differences() {
        let kernel = Kernel::default();
        for loss in [LossKind::Sum, LossKind::Final, LossKind::Ei, LossKind::Oi] {
            let spec = RolloutSpec { detach_history: false, ..RolloutSpec::sequential(kernel, 3, loss) };
            fd_check(&spec, 3);
        }
    }

    #[test]
    fn zero_steps_leave_policy_unchanged() {
        let cfg = TrainConfig { hidden: 4, schedule: vec![Stage { horizon: 5, steps: 0 }], ..Default::default() };
        let p = cfg.initial_policy().unwrap();
        let out = train(&cfg, p.clone(), None).unwrap();
        assert_eq!(out.policy, p);
        assert!(out.history.is_empty());
    }

    #[test]
    fn training_is_reproducible() {
        let cfg = TrainConfig {
            hidden: 4,
            batch: 4,
            schedule: vec![Stage { horizon: 4, steps: 3 }, Stage { horizon: 6, steps: 2 }],
            clock: Clock::Off,
            ..Default::default()
        };
        let a = train(&cfg, cfg.initial_policy().unwrap(), None).unwrap();
        let b = train(&cfg, cfg.initial_policy().unwrap(), None).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.policy, b.policy);
        assert_eq!(a.history.len(), 5);
        assert_eq!(a.history[4].horizon, 6);
    }

    #[test]
    fn config_validation() {
        let ok = TrainConfig::default();
        ok.validate().unwrap();
        let dec = TrainConfig {
            schedule: vec![Stage { horizon: 20, steps: 1 }, Stage { horizon: 10, steps: 1 }],
            ..Default::default()
        };
        assert!(dec.validate().is_err());
        assert!(TrainConfig { batch: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { jitter: 1.0, ..Default::default() }.validate().is_err());
    }
}
