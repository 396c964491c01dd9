//! LSTM query policy and its search space.
//!
//! The policy lives on the unit cube. At every step it reads the previous raw
//! unit-cube query, the previous (rescaled) observation and a flag `o` that is
//! 1 when that pair is a real observation and 0 for a fresh slot with dummy
//! zeros, and emits the next query through a sigmoid. [`SearchSpace`] maps the
//! unit point to native coordinates and rounds integer dimensions.

use std::collections::{BTreeMap, VecDeque};
use std::ops::Deref;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AdError, Ops, Plain};
use crate::objective::{Objective, ObservationScale};
use crate::trajectory::{Clock, Record, Trajectory};

/// Unit-cube outputs are clamped this far inside the boundary.
const UNIT_MARGIN: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("non-finite value in LSTM {gate}: {source}")]
    NonFinite { gate: &'static str, source: AdError },
    #[error("parameter {0} is not finite")]
    NonFiniteParam(usize),
    #[error("invalid search space: {0}")]
    Space(String),
    #[error("parameter vector has {got} entries, expected {expected} for dim {dim}, hidden {hidden}")]
    ParamCount { dim: usize, hidden: usize, expected: usize, got: usize },
    #[error("input dimension {got} does not match policy dimension {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("unknown ticket {0}")]
    UnknownTicket(u64),
    #[error("observation {0} is not finite")]
    NonFiniteObservation(f64),
}

/// Axis-aligned box with optional integer dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub integer: Vec<bool>,
}

impl SearchSpace {
    pub fn unit(dim: usize) -> Self {
        SearchSpace { lower: vec![0.0; dim], upper: vec![1.0; dim], integer: vec![false; dim] }
    }

    pub fn new(lower: Vec<f64>, upper: Vec<f64>, integer: Vec<bool>) -> Result<Self, PolicyError> {
        let s = SearchSpace { lower, upper, integer };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let d = self.lower.len();
        if d == 0 {
            return Err(PolicyError::Space("dimension must be at least 1".into()));
        }
        if self.upper.len() != d || self.integer.len() != d {
            return Err(PolicyError::Space(format!(
                "bounds and integer mask lengths differ ({}, {}, {})",
                d,
                self.upper.len(),
                self.integer.len()
            )));
        }
        for i in 0..d {
            let (lo, hi) = (self.lower[i], self.upper[i]);
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(PolicyError::Space(format!("dimension {i}: need finite lower < upper, got [{lo}, {hi}]")));
            }
            if self.integer[i] && lo.ceil() > hi.floor() {
                return Err(PolicyError::Space(format!("dimension {i}: no integer in [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Affine image of a unit-cube point, integer dimensions rounded.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        let x: Vec<f64> =
            u.iter().enumerate().map(|(i, &ui)| self.lower[i] + (self.upper[i] - self.lower[i]) * ui).collect();
        self.round(&x)
    }

    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter().enumerate().map(|(i, &xi)| (xi - self.lower[i]) / (self.upper[i] - self.lower[i])).collect()
    }

    /// Rounds integer dimensions to the nearest admissible integer.
    pub fn round(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, &xi)| {
                if self.integer[i] {
                    xi.round().clamp(self.lower[i].ceil(), self.upper[i].floor())
                } else {
                    xi
                }
            })
            .collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().enumerate().all(|(i, &xi)| {
                xi >= self.lower[i] && xi <= self.upper[i] && (!self.integer[i] || xi.fract() == 0.0)
            })
    }
}

/// Recurrent state `(h, c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState<V> {
    pub h: Vec<V>,
    pub c: Vec<V>,
}

pub type PolicyState = LstmState<f64>;

/// Sizes of an LSTM policy; owns the parameter layout.
///
/// Gate block: `4H × (d + H + 3)` row-major over the input
/// `[x_prev (d), y_prev, o_prev, h (H), 1]`, rows ordered input, forget, cell,
/// output. Output block: `d × (H + 1)` over `[h, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmShape {
    pub dim: usize,
    pub hidden: usize,
}

impl LstmShape {
    pub fn input_width(&self) -> usize {
        self.dim + self.hidden + 3
    }

    pub fn gate_len(&self) -> usize {
        4 * self.hidden * self.input_width()
    }

    pub fn output_len(&self) -> usize {
        self.dim * (self.hidden + 1)
    }

    pub fn param_count(&self) -> usize {
        self.gate_len() + self.output_len()
    }

    /// Index of the bias entry of gate row `row`.
    pub fn gate_bias(&self, row: usize) -> usize {
        row * self.input_width() + self.input_width() - 1
    }

    pub fn initial_state<O: Ops>(&self, ops: &mut O) -> Result<LstmState<O::V>, AdError> {
        let z = ops.constant(0.0)?;
        Ok(LstmState { h: vec![z; self.hidden], c: vec![z; self.hidden] })
    }

    /// One LSTM update followed by the unit-cube query head.
    pub fn step<O: Ops>(
        &self,
        ops: &mut O,
        params: &[O::V],
        state: &LstmState<O::V>,
        x_prev: &[O::V],
        y_prev: O::V,
        o_prev: bool,
    ) -> Result<(LstmState<O::V>, Vec<O::V>), PolicyError> {
        let (d, h) = (self.dim, self.hidden);
        if params.len() != self.param_count() {
            return Err(PolicyError::ParamCount { dim: d, hidden: h, expected: self.param_count(), got: params.len() });
        }
        if x_prev.len() != d {
            return Err(PolicyError::Dimension { expected: d, got: x_prev.len() });
        }
        let fail = |gate: &'static str| move |source: AdError| PolicyError::NonFinite { gate, source };

        let w = self.input_width();
        let mut input = Vec::with_capacity(w);
        input.extend_from_slice(x_prev);
        input.push(y_prev);
        input.push(ops.constant(if o_prev { 1.0 } else { 0.0 }).map_err(fail("input"))?);
        input.extend_from_slice(&state.h);
        input.push(ops.constant(1.0).map_err(fail("input"))?);

        let gate = |ops: &mut O, block: usize, j: usize, name: &'static str| {
            let r = block * h + j;
            ops.dot(&params[r * w..(r + 1) * w], &input).map_err(fail(name))
        };
        let mut new_h = Vec::with_capacity(h);
        let mut new_c = Vec::with_capacity(h);
        for j in 0..h {
            let i_pre = gate(ops, 0, j, "input gate")?;
            let f_pre = gate(ops, 1, j, "forget gate")?;
            let g_pre = gate(ops, 2, j, "cell candidate")?;
            let o_pre = gate(ops, 3, j, "output gate")?;
            let i = ops.sigmoid(i_pre).map_err(fail("input gate"))?;
            let f = ops.sigmoid(f_pre).map_err(fail("forget gate"))?;
            let g = ops.tanh(g_pre).map_err(fail("cell candidate"))?;
            let o = ops.sigmoid(o_pre).map_err(fail("output gate"))?;
            let fc = ops.mul(f, state.c[j]).map_err(fail("cell state"))?;
            let ig = ops.mul(i, g).map_err(fail("cell state"))?;
            let c = ops.add(fc, ig).map_err(fail("cell state"))?;
            let tc = ops.tanh(c).map_err(fail("hidden state"))?;
            new_h.push(ops.mul(o, tc).map_err(fail("hidden state"))?);
            new_c.push(c);
        }

        let out = &params[self.gate_len()..];
        let one = ops.constant(1.0).map_err(fail("query head"))?;
        let mut head_in = new_h.clone();
        head_in.push(one);
        let lo = ops.constant(UNIT_MARGIN).map_err(fail("query head"))?;
        let hi = ops.constant(1.0 - UNIT_MARGIN).map_err(fail("query head"))?;
        let mut u = Vec::with_capacity(d);
        for k in 0..d {
            let pre = ops.dot(&out[k * (h + 1)..(k + 1) * (h + 1)], &head_in).map_err(fail("query head"))?;
            let s = ops.sigmoid(pre).map_err(fail("query head"))?;
            let s = ops.max(s, lo).map_err(fail("query head"))?;
            u.push(ops.min(s, hi).map_err(fail("query head"))?);
        }
        Ok((LstmState { h: new_h, c: new_c }, u))
    }
}

/// Trained or freshly initialised LSTM query policy.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmPolicy {
    shape: LstmShape,
    params: Vec<f64>,
}

impl LstmPolicy {
    /// Uniform(−0.05, 0.05) weights with forget-gate biases shifted by +1.
    pub fn new(dim: usize, hidden: usize, seed: u64) -> Result<Self, PolicyError> {
        let shape = LstmShape { dim, hidden };
        Self::check_shape(shape)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params: Vec<f64> = (0..shape.param_count()).map(|_| rng.gen_range(-0.05..0.05)).collect();
        for j in 0..hidden {
            params[shape.gate_bias(hidden + j)] += 1.0;
        }
        Ok(LstmPolicy { shape, params })
    }

    pub fn zeros(dim: usize, hidden: usize) -> Result<Self, PolicyError> {
        let shape = LstmShape { dim, hidden };
        Self::check_shape(shape)?;
        Ok(LstmPolicy { shape, params: vec![0.0; shape.param_count()] })
    }

    pub fn from_params(dim: usize, hidden: usize, params: Vec<f64>) -> Result<Self, PolicyError> {
        let shape = LstmShape { dim, hidden };
        Self::check_shape(shape)?;
        if params.len() != shape.param_count() {
            return Err(PolicyError::ParamCount { dim, hidden, expected: shape.param_count(), got: params.len() });
        }
        if let Some(i) = params.iter().position(|p| !p.is_finite()) {
            return Err(PolicyError::NonFiniteParam(i));
        }
        Ok(LstmPolicy { shape, params })
    }

    fn check_shape(shape: LstmShape) -> Result<(), PolicyError> {
        if shape.dim == 0 || shape.hidden == 0 {
            return Err(PolicyError::Space(format!(
                "dimension and hidden size must be positive (got {}, {})",
                shape.dim, shape.hidden
            )));
        }
        Ok(())
    }

    pub fn shape(&self) -> LstmShape {
        self.shape
    }

    pub fn dim(&self) -> usize {
        self.shape.dim
    }

    pub fn hidden(&self) -> usize {
        self.shape.hidden
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn initial_state(&self) -> PolicyState {
        PolicyState { h: vec![0.0; self.shape.hidden], c: vec![0.0; self.shape.hidden] }
    }

    /// Untaped step on unit-cube coordinates.
    pub fn step(
        &self,
        state: &PolicyState,
        x_prev: &[f64],
        y_prev: f64,
        o_prev: bool,
    ) -> Result<(PolicyState, Vec<f64>), PolicyError> {
        self.shape.step(&mut Plain, &self.params, state, x_prev, y_prev, o_prev)
    }
}

/// Handed out by [`PolicySession::ask`].
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub ticket: u64,
    /// Point to evaluate, native coordinates, integers rounded.
    pub point: Vec<f64>,
    /// Raw unit-cube output the point came from.
    pub unit: Vec<f64>,
    /// True if produced from a fresh slot (`o = 0`).
    pub fresh: bool,
}

/// Ask/tell driver around a policy. Each `ask` advances the LSTM once,
/// consuming the oldest told observation if there is one and a dummy fresh
/// slot otherwise.
#[derive(Debug, Clone)]
pub struct PolicySession<P> {
    policy: P,
    space: SearchSpace,
    scale: ObservationScale,
    state: PolicyState,
    outstanding: BTreeMap<u64, Vec<f64>>,
    told: VecDeque<(Vec<f64>, f64)>,
    next_ticket: u64,
    fresh_steps: usize,
}

impl<P: Deref<Target = LstmPolicy>> PolicySession<P> {
    pub fn new(policy: P, space: SearchSpace, scale: ObservationScale) -> Result<Self, PolicyError> {
        space.validate()?;
        if space.dim() != policy.dim() {
            return Err(PolicyError::Dimension { expected: policy.dim(), got: space.dim() });
        }
        if !(scale.scale.is_finite() && scale.scale != 0.0 && scale.shift.is_finite()) {
            return Err(PolicyError::Space(format!("observation scale {scale:?} is degenerate")));
        }
        let state = policy.initial_state();
        Ok(PolicySession {
            policy,
            space,
            scale,
            state,
            outstanding: BTreeMap::new(),
            told: VecDeque::new(),
            next_ticket: 0,
            fresh_steps: 0,
        })
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn state(&self) -> &PolicyState {
        &self.state
    }

    pub fn outstanding(&self) -> usize {
        self.outstanding.len()
    }

    /// Observations told but not yet fed to the policy.
    pub fn pending(&self) -> usize {
        self.told.len()
    }

    /// Number of steps taken with `o = 0`.
    pub fn fresh_steps(&self) -> usize {
        self.fresh_steps
    }

    pub fn ask(&mut self) -> Result<Proposal, PolicyError> {
        let d = self.space.dim();
        let (next, unit, fresh) = match self.told.pop_front() {
            Some((u, y)) => {
                let (s, out) = self.policy.step(&self.state, &u, self.scale.apply(y), true)?;
                (s, out, false)
            }
            None => {
                let (s, out) = self.policy.step(&self.state, &vec![0.0; d], 0.0, false)?;
                self.fresh_steps += 1;
                (s, out, true)
            }
        };
        self.state = next;
        let ticket = self.next_ticket;
        self.next_ticket += 1;
        self.outstanding.insert(ticket, unit.clone());
        Ok(Proposal { ticket, point: self.space.from_unit(&unit), unit, fresh })
    }

    pub fn tell(&mut self, ticket: u64, y: f64) -> Result<(), PolicyError> {
        if !y.is_finite() {
            return Err(PolicyError::NonFiniteObservation(y));
        }
        let unit = self.outstanding.remove(&ticket).ok_or(PolicyError::UnknownTicket(ticket))?;
        self.told.push_back((unit, y));
        Ok(())
    }
}

/// Runs the policy sequentially for `budget` evaluations.
pub fn propose_eval(
    policy: &LstmPolicy,
    objective: &mut dyn Objective,
    budget: usize,
    clock: Clock,
) -> Result<Trajectory, crate::Error> {
    let space = objective.space().clone();
    let mut session = PolicySession::new(policy, space, objective.observation_scale())?;
    let mut traj = Trajectory::new(policy.dim());
    for t in 0..budget {
        let sw = clock.stopwatch();
        let p = session.ask()?;
        let wall_ns = sw.ns();
        let y = objective
            .evaluate(&p.point)
            .map_err(|source| crate::Error::Objective { step: t + 1, worker: None, source })?;
        session.tell(p.ticket, y)?;
        traj.push(Record { x: p.point, y, wall_ns, parallel: None });
    }
    Ok(traj)
}
