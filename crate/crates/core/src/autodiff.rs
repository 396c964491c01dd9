//! Reverse-mode differentiation over scalar expressions.
//!
//! A [`Tape`] is a Wengert list: every operation appends one node holding its
//! operand ids and the local partial derivative with respect to each operand.
//! [`Tape::backward`] sweeps the nodes once in reverse order and accumulates
//! adjoints. Nodes may have any number of operands, so a whole dot product is a
//! single node; this keeps LSTM unrolls compact.
//!
//! Model code is written against the [`Ops`] trait, which is implemented both
//! by the tape (values are [`Var`]s) and by [`Plain`] (values are `f64`). The
//! two implementations share the value computations in this module, so
//! recorded and plain evaluation produce bitwise identical numbers.

use std::sync::atomic::{AtomicU32, Ordering};

use thiserror::Error;

/// Kind of a recorded node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Input,
    Const,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Exp,
    Log,
    Tanh,
    Sigmoid,
    Sqrt,
    Pow,
    Erf,
    Max,
    Min,
    Detach,
    Dot,
    Sum,
    Affine,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdError {
    #[error("{op:?} produced a non-finite value")]
    NonFinite { op: OpKind },
    #[error("log of non-positive value {0}")]
    LogDomain(f64),
    #[error("sqrt of negative value {0}")]
    SqrtDomain(f64),
    #[error("division by zero")]
    DivByZero,
    #[error("pow of base {base} with exponent {exponent} is outside the real domain")]
    PowDomain { base: f64, exponent: f64 },
    #[error("variable from tape {found} used on tape {expected}")]
    ForeignVar { expected: u32, found: u32 },
    #[error("operand slices differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("{op:?} expects {expected} operands, got {got}")]
    Arity { op: OpKind, expected: usize, got: usize },
    #[error("non-finite adjoint at node {node} ({op:?})")]
    NonFiniteAdjoint { node: usize, op: OpKind },
}

/// Handle to a node on a [`Tape`], carrying the node's value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Var {
    tape: u32,
    idx: u32,
    value: f64,
}

impl Var {
    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn index(&self) -> usize {
        self.idx as usize
    }
}

static NEXT_TAPE_ID: AtomicU32 = AtomicU32::new(1);

fn fresh_id() -> u32 {
    NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed)
}

/// Append-only record of scalar operations.
#[derive(Debug)]
pub struct Tape {
    id: u32,
    ops: Vec<OpKind>,
    // Node i owns args[starts[i]..starts[i + 1]].
    starts: Vec<u32>,
    args: Vec<u32>,
    partials: Vec<f64>,
    values: Vec<f64>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::with_capacity(0, 0)
    }

    pub fn with_capacity(nodes: usize, operands: usize) -> Self {
        let mut starts = Vec::with_capacity(nodes + 1);
        starts.push(0);
        Tape {
            id: fresh_id(),
            ops: Vec::with_capacity(nodes),
            starts,
            args: Vec::with_capacity(operands),
            partials: Vec::with_capacity(operands),
            values: Vec::with_capacity(nodes),
        }
    }

    /// Drops all nodes but keeps the allocations. Vars from before the reset
    /// are rejected afterwards.
    pub fn reset(&mut self) {
        self.id = fresh_id();
        self.ops.clear();
        self.starts.truncate(1);
        self.args.clear();
        self.partials.clear();
        self.values.clear();
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Total number of operand slots across all nodes.
    pub fn operand_count(&self) -> usize {
        self.args.len()
    }

    pub fn op(&self, node: usize) -> OpKind {
        self.ops[node]
    }

    /// Operand ids and partials of a node.
    pub fn operands(&self, node: usize) -> (&[u32], &[f64]) {
        let (s, e) = (self.starts[node] as usize, self.starts[node + 1] as usize);
        (&self.args[s..e], &self.partials[s..e])
    }

    /// A differentiable leaf.
    pub fn input(&mut self, value: f64) -> Result<Var, AdError> {
        self.push(OpKind::Input, value, &[], &[])
    }

    fn check(&self, v: Var) -> Result<u32, AdError> {
        if v.tape != self.id || v.idx as usize >= self.ops.len() {
            return Err(AdError::ForeignVar { expected: self.id, found: v.tape });
        }
        Ok(v.idx)
    }

    fn push(&mut self, op: OpKind, value: f64, operands: &[Var], partials: &[f64]) -> Result<Var, AdError> {
        if !value.is_finite() {
            return Err(AdError::NonFinite { op });
        }
        for v in operands {
            let idx = self.check(*v)?;
            self.args.push(idx);
        }
        self.partials.extend_from_slice(partials);
        let idx = self.ops.len() as u32;
        self.ops.push(op);
        self.values.push(value);
        self.starts.push(self.args.len() as u32);
        Ok(Var { tape: self.id, idx, value })
    }

    /// Records a unary or binary primitive by kind.
    pub fn record(&mut self, op: OpKind, operands: &[Var]) -> Result<Var, AdError> {
        let unary = |t: &mut Tape, f: fn(&mut Tape, Var) -> Result<Var, AdError>| {
            if operands.len() != 1 {
                return Err(AdError::Arity { op, expected: 1, got: operands.len() });
            }
            f(t, operands[0])
        };
        let binary = |t: &mut Tape, f: fn(&mut Tape, Var, Var) -> Result<Var, AdError>| {
            if operands.len() != 2 {
                return Err(AdError::Arity { op, expected: 2, got: operands.len() });
            }
            f(t, operands[0], operands[1])
        };
        match op {
            OpKind::Add => binary(self, Ops::add),
            OpKind::Sub => binary(self, Ops::sub),
            OpKind::Mul => binary(self, Ops::mul),
            OpKind::Div => binary(self, Ops::div),
            OpKind::Max => binary(self, Ops::max),
            OpKind::Min => binary(self, Ops::min),
            OpKind::Neg => unary(self, Ops::neg),
            OpKind::Exp => unary(self, Ops::exp),
            OpKind::Log => unary(self, Ops::log),
            OpKind::Tanh => unary(self, Ops::tanh),
            OpKind::Sigmoid => unary(self, Ops::sigmoid),
            OpKind::Sqrt => unary(self, Ops::sqrt),
            OpKind::Erf => unary(self, Ops::erf),
            OpKind::Detach => unary(self, |t, v| Ok(Ops::detach(t, v))),
            OpKind::Dot => {
                if operands.len() % 2 != 0 {
                    return Err(AdError::LengthMismatch(operands.len() / 2, operands.len() / 2 + 1));
                }
                let (a, b) = operands.split_at(operands.len() / 2);
                Ops::dot(self, a, b)
            }
            OpKind::Sum => Ops::sum(self, operands),
            // Pow and Affine carry constant parameters and are only available
            // through their dedicated methods.
            OpKind::Pow | OpKind::Affine | OpKind::Input | OpKind::Const => {
                Err(AdError::Arity { op, expected: 0, got: operands.len() })
            }
        }
    }

    /// Reverse sweep from `root`. Nodes recorded after `root` or not reachable
    /// from it get adjoint zero.
    pub fn backward(&self, root: Var) -> Result<Gradients, AdError> {
        let r = self.check(root)? as usize;
        let mut adj = vec![0.0; r + 1];
        adj[r] = 1.0;
        for node in (0..=r).rev() {
            let a = adj[node];
            if a == 0.0 {
                continue;
            }
            let (s, e) = (self.starts[node] as usize, self.starts[node + 1] as usize);
            for k in s..e {
                adj[self.args[k] as usize] += a * self.partials[k];
            }
        }
        if let Some(node) = adj.iter().position(|a| !a.is_finite()) {
            return Err(AdError::NonFiniteAdjoint { node, op: self.ops[node] });
        }
        Ok(Gradients { tape: self.id, adjoints: adj })
    }
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    tape: u32,
    adjoints: Vec<f64>,
}

impl Gradients {
    /// Adjoint of `v`; zero for nodes the root does not depend on.
    pub fn wrt(&self, v: Var) -> f64 {
        debug_assert_eq!(v.tape, self.tape, "gradient lookup with a var from another tape");
        self.adjoints.get(v.idx as usize).copied().unwrap_or(0.0)
    }

    pub fn adjoints(&self) -> &[f64] {
        &self.adjoints
    }
}

/// Arithmetic over either recorded or plain scalars.
pub trait Ops {
    type V: Copy + std::fmt::Debug;

    fn constant(&mut self, x: f64) -> Result<Self::V, AdError>;
    fn value(&self, v: Self::V) -> f64;

    fn add(&mut self, a: Self::V, b: Self::V) -> Result<Self::V, AdError>;
    fn sub(&mut self, a: Self::V, b: Self::V) -> Result<Self::V, AdError>;
    fn mul(&mut self, a: Self::V, b: Self::V) -> Result<Self::V, AdError>;
    fn div(&mut self, a: Self::V, b: Self::V) -> Result<Self::V, AdError>;
    fn max(&mut self, a: Self::V, b: Self::V) -> Result<Self::V, AdError>;
    fn min(&mut self, a: Self::V, b: Self::V) -> Result<Self::V, AdError>;
    fn neg(&mut self, a: Self::V) -> Result<Self::V, AdError>;
    fn exp(&mut self, a: Self::V) -> Result<Self::V, AdError>;
    fn log(&mut self, a: Self::V) -> Result<Self::V, AdError>;
    fn tanh(&mut self, a: Self::V) -> Result<Self::V, AdError>;
    fn sigmoid(&mut self, a: Self::V) -> Result<Self::V, AdError>;
    fn sqrt(&mut self, a: Self::V) -> Result<Self::V, AdError>;
    fn erf(&mut self, a: Self::V) -> Result<Self::V, AdError>;
    /// `a^p` for a constant exponent.
    fn pow(&mut self, a: Self::V, p: f64) -> Result<Self::V, AdError>;
    /// Same value, no gradient flow to the operand.
    fn detach(&mut self, a: Self::V) -> Self::V;
    fn dot(&mut self, a: &[Self::V], b: &[Self::V]) -> Result<Self::V, AdError>;
    fn sum(&mut self, xs: &[Self::V]) -> Result<Self::V, AdError>;
    /// `offset + Σ coeffs[i]·xs[i]` with constant coefficients.
    fn affine(&mut self, xs: &[Self::V], coeffs: &[f64], offset: f64) -> Result<Self::V, AdError>;

    fn scale(&mut self, a: Self::V, c: f64) -> Result<Self::V, AdError> {
        self.affine(&[a], &[c], 0.0)
    }

    fn shift(&mut self, a: Self::V, c: f64) -> Result<Self::V, AdError> {
        self.affine(&[a], &[1.0], c)
    }
}

/// Shared value and partial computations.
mod prim {
    use super::{AdError, OpKind};

    pub fn unary(op: OpKind, x: f64) -> Result<(f64, f64), AdError> {
        Ok(match op {
            OpKind::Neg => (-x, -1.0),
            OpKind::Exp => {
                let v = x.exp();
                (v, v)
            }
            OpKind::Log => {
                if x <= 0.0 {
                    return Err(AdError::LogDomain(x));
                }
                (x.ln(), 1.0 / x)
            }
            OpKind::Tanh => {
                let v = x.tanh();
                (v, 1.0 - v * v)
            }
            OpKind::Sigmoid => {
                let v = sigmoid(x);
                (v, v * (1.0 - v))
            }
            OpKind::Sqrt => {
                if x < 0.0 {
                    return Err(AdError::SqrtDomain(x));
                }
                let v = x.sqrt();
                (v, 0.5 / v)
            }
            OpKind::Erf => (super::erf(x), super::erf_derivative(x)),
            _ => unreachable!("not a unary primitive: {op:?}"),
        })
    }

    pub fn binary(op: OpKind, a: f64, b: f64) -> Result<(f64, f64, f64), AdError> {
        Ok(match op {
            OpKind::Add => (a + b, 1.0, 1.0),
            OpKind::Sub => (a - b, 1.0, -1.0),
            OpKind::Mul => (a * b, b, a),
            OpKind::Div => {
                if b == 0.0 {
                    return Err(AdError::DivByZero);
                }
                let v = a / b;
                (v, 1.0 / b, -v / b)
            }
            // Ties send the gradient to the first operand.
            OpKind::Max => {
                if a >= b {
                    (a, 1.0, 0.0)
                } else {
                    (b, 0.0, 1.0)
                }
            }
            OpKind::Min => {
                if a <= b {
                    (a, 1.0, 0.0)
                } else {
                    (b, 0.0, 1.0)
                }
            }
            _ => unreachable!("not a binary primitive: {op:?}"),
        })
    }

    pub fn pow(x: f64, p: f64) -> Result<(f64, f64), AdError> {
        let bad = (x < 0.0 && p.fract() != 0.0) || (x == 0.0 && p < 1.0);
        if bad {
            return Err(AdError::PowDomain { base: x, exponent: p });
        }
        let v = x.powf(p);
        let d = if p == 1.0 { 1.0 } else { p * x.powf(p - 1.0) };
        Ok((v, d))
    }

    pub fn sigmoid(x: f64) -> f64 {
        if x >= 0.0 {
            1.0 / (1.0 + (-x).exp())
        } else {
            let e = x.exp();
            e / (1.0 + e)
        }
    }

    pub fn dot(a: &[f64], b: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (x, y) in a.iter().zip(b) {
            acc += x * y;
        }
        acc
    }

    pub fn affine(xs: impl Iterator<Item = f64>, coeffs: &[f64], offset: f64) -> f64 {
        let mut acc = offset;
        for (x, c) in xs.zip(coeffs) {
            acc += c * x;
        }
        acc
    }

    pub fn sum(xs: impl Iterator<Item = f64>) -> f64 {
        let mut acc = 0.0;
        for x in xs {
            acc += x;
        }
        acc
    }
}

pub use prim::sigmoid;

impl Ops for Tape {
    type V = Var;

    fn constant(&mut self, x: f64) -> Result<Var, AdError> {
        self.push(OpKind::Const, x, &[], &[])
    }

    fn value(&self, v: Var) -> f64 {
        v.value
    }

    fn add(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.bin(OpKind::Add, a, b)
    }
    fn sub(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.bin(OpKind::Sub, a, b)
    }
    fn mul(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.bin(OpKind::Mul, a, b)
    }
    fn div(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.bin(OpKind::Div, a, b)
    }
    fn max(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.bin(OpKind::Max, a, b)
    }
    fn min(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.bin(OpKind::Min, a, b)
    }
    fn neg(&mut self, a: Var) -> Result<Var, AdError> {
        self.un(OpKind::Neg, a)
    }
    fn exp(&mut self, a: Var) -> Result<Var, AdError> {
        self.un(OpKind::Exp, a)
    }
    fn log(&mut self, a: Var) -> Result<Var, AdError> {
        self.un(OpKind::Log, a)
    }
    fn tanh(&mut self, a: Var) -> Result<Var, AdError> {
        self.un(OpKind::Tanh, a)
    }
    fn sigmoid(&mut self, a: Var) -> Result<Var, AdError> {
        self.un(OpKind::Sigmoid, a)
    }
    fn sqrt(&mut self, a: Var) -> Result<Var, AdError> {
        self.un(OpKind::Sqrt, a)
    }
    fn erf(&mut self, a: Var) -> Result<Var, AdError> {
        self.un(OpKind::Erf, a)
    }

    fn pow(&mut self, a: Var, p: f64) -> Result<Var, AdError> {
        let (v, d) = prim::pow(a.value, p)?;
        self.push(OpKind::Pow, v, &[a], &[d])
    }

    fn detach(&mut self, a: Var) -> Var {
        // A detached node has no operands, so nothing flows back through it.
        self.push(OpKind::Detach, a.value, &[], &[]).expect("value was finite when recorded")
    }

    fn dot(&mut self, a: &[Var], b: &[Var]) -> Result<Var, AdError> {
        if a.len() != b.len() {
            return Err(AdError::LengthMismatch(a.len(), b.len()));
        }
        let mut acc = 0.0;
        for (x, y) in a.iter().zip(b) {
            acc += x.value * y.value;
        }
        if !acc.is_finite() {
            return Err(AdError::NonFinite { op: OpKind::Dot });
        }
        for v in a.iter().chain(b) {
            let idx = self.check(*v)?;
            self.args.push(idx);
        }
        self.partials.extend(b.iter().map(|v| v.value));
        self.partials.extend(a.iter().map(|v| v.value));
        Ok(self.finish(OpKind::Dot, acc))
    }

    fn sum(&mut self, xs: &[Var]) -> Result<Var, AdError> {
        let v = prim::sum(xs.iter().map(|x| x.value));
        if !v.is_finite() {
            return Err(AdError::NonFinite { op: OpKind::Sum });
        }
        for x in xs {
            let idx = self.check(*x)?;
            self.args.push(idx);
        }
        self.partials.extend(std::iter::repeat_n(1.0, xs.len()));
        Ok(self.finish(OpKind::Sum, v))
    }

    fn affine(&mut self, xs: &[Var], coeffs: &[f64], offset: f64) -> Result<Var, AdError> {
        if xs.len() != coeffs.len() {
            return Err(AdError::LengthMismatch(xs.len(), coeffs.len()));
        }
        let v = prim::affine(xs.iter().map(|x| x.value), coeffs, offset);
        if !v.is_finite() {
            return Err(AdError::NonFinite { op: OpKind::Affine });
        }
        for x in xs {
            let idx = self.check(*x)?;
            self.args.push(idx);
        }
        self.partials.extend_from_slice(coeffs);
        Ok(self.finish(OpKind::Affine, v))
    }
}

impl Tape {
    fn un(&mut self, op: OpKind, a: Var) -> Result<Var, AdError> {
        let (v, d) = prim::unary(op, a.value)?;
        self.push(op, v, &[a], &[d])
    }

    fn bin(&mut self, op: OpKind, a: Var, b: Var) -> Result<Var, AdError> {
        let (v, da, db) = prim::binary(op, a.value, b.value)?;
        self.push(op, v, &[a, b], &[da, db])
    }

    // Closes a node whose operands were pushed directly.
    fn finish(&mut self, op: OpKind, value: f64) -> Var {
        let idx = self.ops.len() as u32;
        self.ops.push(op);
        self.values.push(value);
        self.starts.push(self.args.len() as u32);
        Var { tape: self.id, idx, value }
    }
}

/// Evaluation without recording.
#[derive(Debug, Default, Clone, Copy)]
pub struct Plain;

fn finite(op: OpKind, v: f64) -> Result<f64, AdError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(AdError::NonFinite { op })
    }
}

impl Ops for Plain {
    type V = f64;

    fn constant(&mut self, x: f64) -> Result<f64, AdError> {
        finite(OpKind::Const, x)
    }
    fn value(&self, v: f64) -> f64 {
        v
    }
    fn add(&mut self, a: f64, b: f64) -> Result<f64, AdError> {
        finite(OpKind::Add, prim::binary(OpKind::Add, a, b)?.0)
    }
    fn sub(&mut self, a: f64, b: f64) -> Result<f64, AdError> {
        finite(OpKind::Sub, prim::binary(OpKind::Sub, a, b)?.0)
    }
    fn mul(&mut self, a: f64, b: f64) -> Result<f64, AdError> {
        finite(OpKind::Mul, prim::binary(OpKind::Mul, a, b)?.0)
    }
    fn div(&mut self, a: f64, b: f64) -> Result<f64, AdError> {
        finite(OpKind::Div, prim::binary(OpKind::Div, a, b)?.0)
    }
    fn max(&mut self, a: f64, b: f64) -> Result<f64, AdError> {
        finite(OpKind::Max, prim::binary(OpKind::Max, a, b)?.0)
    }
    fn min(&mut self, a: f64, b: f64) -> Result<f64, AdError> {
        finite(OpKind::Min, prim::binary(OpKind::Min, a, b)?.0)
    }
    fn neg(&mut self, a: f64) -> Result<f64, AdError> {
        finite(OpKind::Neg, -a)
    }
    fn exp(&mut self, a: f64) -> Result<f64, AdError> {
        finite(OpKind::Exp, a.exp())
    }
    fn log(&mut self, a: f64) -> Result<f64, AdError> {
        finite(OpKind::Log, prim::unary(OpKind::Log, a)?.0)
    }
    fn tanh(&mut self, a: f64) -> Result<f64, AdError> {
        finite(OpKind::Tanh, a.tanh())
    }
    fn sigmoid(&mut self, a: f64) -> Result<f64, AdError> {
        finite(OpKind::Sigmoid, prim::sigmoid(a))
    }
    fn sqrt(&mut self, a: f64) -> Result<f64, AdError> {
        finite(OpKind::Sqrt, prim::unary(OpKind::Sqrt, a)?.0)
    }
    fn erf(&mut self, a: f64) -> Result<f64, AdError> {
        finite(OpKind::Erf, erf(a))
    }
    fn pow(&mut self, a: f64, p: f64) -> Result<f64, AdError> {
        finite(OpKind::Pow, prim::pow(a, p)?.0)
    }
    fn detach(&mut self, a: f64) -> f64 {
        a
    }
    fn dot(&mut self, a: &[f64], b: &[f64]) -> Result<f64, AdError> {
        if a.len() != b.len() {
            return Err(AdError::LengthMismatch(a.len(), b.len()));
        }
        finite(OpKind::Dot, prim::dot(a, b))
    }
    fn sum(&mut self, xs: &[f64]) -> Result<f64, AdError> {
        finite(OpKind::Sum, prim::sum(xs.iter().copied()))
    }
    fn affine(&mut self, xs: &[f64], coeffs: &[f64], offset: f64) -> Result<f64, AdError> {
        if xs.len() != coeffs.len() {
            return Err(AdError::LengthMismatch(xs.len(), coeffs.len()));
        }
        finite(OpKind::Affine, prim::affine(xs.iter().copied(), coeffs, offset))
    }
}

// Abramowitz & Stegun 7.1.26: erf(x) ≈ 1 − (a1 t + … + a5 t⁵) e^{−x²},
// t = 1/(1 + p x), x ≥ 0, absolute error ≤ 1.5e-7.
const ERF_P: f64 = 0.327_591_1;
const ERF_A: [f64; 5] = [0.254_829_592, -0.284_496_736, 1.421_413_741, -1.453_152_027, 1.061_405_429];
// Largest double below one; keeps |erf| < 1 where the approximation rounds to 1.
const ERF_CAP: f64 = 1.0 - f64::EPSILON / 2.0;

/// Error function, odd extension of the A&S 7.1.26 rational approximation.
pub fn erf(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let ax = x.abs();
    let t = 1.0 / (1.0 + ERF_P * ax);
    let poly = t * (ERF_A[0] + t * (ERF_A[1] + t * (ERF_A[2] + t * (ERF_A[3] + t * ERF_A[4]))));
    let v = (1.0 - poly * (-ax * ax).exp()).min(ERF_CAP);
    v.copysign(x)
}

/// Exact derivative of [`erf`] as implemented (not of the true error
/// function), so recorded gradients agree with finite differences.
pub fn erf_derivative(x: f64) -> f64 {
    let ax = x.abs();
    let t = 1.0 / (1.0 + ERF_P * ax);
    let poly = t * (ERF_A[0] + t * (ERF_A[1] + t * (ERF_A[2] + t * (ERF_A[3] + t * ERF_A[4]))));
    let dpoly_dt = ERF_A[0] + t * (2.0 * ERF_A[1] + t * (3.0 * ERF_A[2] + t * (4.0 * ERF_A[3] + t * 5.0 * ERF_A[4])));
    let e = (-ax * ax).exp();
    // d/d|x| of 1 − P(t)e^{−x²} with dt/d|x| = −p t².
    e * (dpoly_dt * ERF_P * t * t + 2.0 * ax * poly)
}

/// Standard normal CDF via [`erf`].
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn basic_primitives() {
        let mut t = Tape::new();
        let a = t.input(2.0).unwrap();
        let b = t.input(3.0).unwrap();
        assert_eq!(t.add(a, b).unwrap().value(), 5.0);

        let z = t.input(0.0).unwrap();
        let th = t.tanh(z).unwrap();
        assert_eq!(th.value(), 0.0);
        assert_eq!(t.operands(th.index()).1, &[1.0]);
        let sg = t.sigmoid(z).unwrap();
        assert_eq!(sg.value(), 0.5);
        assert_eq!(t.operands(sg.index()).1, &[0.25]);
    }

    #[test]
    fn record_dispatches_by_kind() {
        let mut t = Tape::new();
        let a = t.input(2.0).unwrap();
        let b = t.input(3.0).unwrap();
        assert_eq!(t.record(OpKind::Mul, &[a, b]).unwrap().value(), 6.0);
        assert_eq!(t.record(OpKind::Neg, &[a]).unwrap().value(), -2.0);
        assert_eq!(t.record(OpKind::Dot, &[a, b, b, a]).unwrap().value(), 12.0);
        assert!(matches!(t.record(OpKind::Exp, &[a, b]), Err(AdError::Arity { .. })));
    }

    #[test]
    fn domain_errors_are_explicit() {
        let mut t = Tape::new();
        let neg = t.input(-1.0).unwrap();
        let zero = t.input(0.0).unwrap();
        assert_eq!(t.log(neg), Err(AdError::LogDomain(-1.0)));
        assert_eq!(t.log(zero), Err(AdError::LogDomain(0.0)));
        assert_eq!(t.sqrt(neg), Err(AdError::SqrtDomain(-1.0)));
        assert_eq!(t.div(neg, zero), Err(AdError::DivByZero));
        assert!(matches!(t.pow(neg, 0.5), Err(AdError::PowDomain { .. })));
        assert!(t.input(f64::NAN).is_err());
        let big = t.input(1000.0).unwrap();
        assert_eq!(t.exp(big), Err(AdError::NonFinite { op: OpKind::Exp }));
        let mut p = Plain;
        assert_eq!(p.log(-1.0), Err(AdError::LogDomain(-1.0)));
        assert_eq!(p.exp(1000.0), Err(AdError::NonFinite { op: OpKind::Exp }));
    }

    #[test]
    fn foreign_vars_rejected() {
        let mut t1 = Tape::new();
        let mut t2 = Tape::new();
        let a = t1.input(1.0).unwrap();
        let b = t2.input(1.0).unwrap();
        assert!(matches!(t2.add(a, b), Err(AdError::ForeignVar { .. })));
        t1.reset();
        assert!(t1.exp(a).is_err());
    }

    #[test]
    fn backward_simple() {
        let mut t = Tape::new();
        let x = t.input(3.0).unwrap();
        let y = t.mul(x, x).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.wrt(x), 6.0);
        assert_eq!(g.wrt(y), 1.0);

        let mut t = Tape::new();
        let x = t.input(0.0).unwrap();
        let y = t.exp(x).unwrap();
        assert_eq!(t.backward(y).unwrap().wrt(x), 1.0);
    }

    #[test]
    fn unreachable_nodes_get_zero() {
        let mut t = Tape::new();
        let x = t.input(1.5).unwrap();
        let w = t.input(2.0).unwrap();
        let _side = t.exp(w).unwrap();
        let y = t.sigmoid(x).unwrap();
        let later = t.mul(y, w).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.wrt(w), 0.0);
        assert_eq!(g.wrt(later), 0.0);
    }

    #[test]
    fn detach_blocks_gradient() {
        let mut t = Tape::new();
        let x = t.input(2.0).unwrap();
        let d = t.detach(x);
        let y = t.mul(d, x).unwrap();
        assert_eq!(y.value(), 4.0);
        assert_eq!(t.backward(y).unwrap().wrt(x), 2.0);

        let mut t = Tape::new();
        let x = t.input(0.7).unwrap();
        let s = t.sigmoid(x).unwrap();
        let ds = t.detach(s);
        assert_eq!(ds.value(), s.value());
        let y = t.exp(ds).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.wrt(x), 0.0);
        assert_eq!(g.wrt(s), 0.0);
    }

    #[test]
    fn backward_is_repeatable() {
        let mut t = Tape::new();
        let x = t.input(0.3).unwrap();
        let y = t.input(-1.2).unwrap();
        let a = t.mul(x, y).unwrap();
        let b = t.tanh(a).unwrap();
        let c = t.dot(&[a, b], &[x, y]).unwrap();
        assert_eq!(t.backward(c).unwrap(), t.backward(c).unwrap());
    }

    #[test]
    fn non_finite_adjoint_reported() {
        let mut t = Tape::new();
        let x = t.input(0.0).unwrap();
        let s = t.sqrt(x).unwrap();
        match t.backward(s) {
            Err(AdError::NonFiniteAdjoint { op, .. }) => assert_eq!(op, OpKind::Input),
            other => panic!("expected non-finite adjoint, got {other:?}"),
        }
    }

    #[test]
    fn erf_properties() {
        assert_eq!(erf(0.0), 0.0);
        for &x in &[0.1, 0.5, 1.0, 2.0, 3.5, 7.0, 30.0] {
            assert_eq!(erf(-x), -erf(x));
            assert!(erf(x).abs() < 1.0);
        }
        // Reference values of the true error function.
        for (x, e) in [(0.5, 0.520_499_877_813_046_5), (1.0, 0.842_700_792_949_714_9), (2.0, 0.995_322_265_018_952_7)] {
            assert!((erf(x) - e).abs() <= 1.5e-7);
        }
        // The approximation's own slope at zero is off by about 7e-6.
        assert!((erf_derivative(0.0) - 2.0 / std::f64::consts::PI.sqrt()).abs() < 1e-5);
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn erf_odd_and_bounded(x in -12.0f64..12.0) {
            prop_assert_eq!(erf(-x), -erf(x));
            prop_assert!(erf(x).abs() < 1.0);
        }
    }

    // Central-difference oracle over a random expression built from every
    // primitive. The expression is regenerated from the same op list on a
    // plain evaluator so the oracle never touches the tape.
    #[derive(Clone, Copy, Debug)]
    enum Step {
        Un(OpKind, usize),
        Bin(OpKind, usize, usize),
        Pow(usize, f64),
        Dot(usize, usize, usize, usize),
        Aff(usize, usize, f64, f64),
    }

    fn random_program(rng: &mut ChaCha8Rng, inputs: usize, len: usize) -> Vec<Step> {
        let mut prog = Vec::new();
        for i in 0..len {
            let n = inputs + i;
            let pick = |rng: &mut ChaCha8Rng| rng.gen_range(0..n);
            let s = match rng.gen_range(0..12) {
                0 => Step::Bin(OpKind::Add, pick(rng), pick(rng)),
                1 => Step::Bin(OpKind::Sub, pick(rng), pick(rng)),
                2 => Step::Bin(OpKind::Mul, pick(rng), pick(rng)),
                3 => Step::Un(OpKind::Tanh, pick(rng)),
                4 => Step::Un(OpKind::Sigmoid, pick(rng)),
                5 => Step::Un(OpKind::Erf, pick(rng)),
                6 => Step::Un(OpKind::Neg, pick(rng)),
                7 => Step::Dot(pick(rng), pick(rng), pick(rng), pick(rng)),
                8 => Step::Aff(pick(rng), pick(rng), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                // Guarded ops act on a positive transform of their operand.
                9 => Step::Un(OpKind::Exp, pick(rng)),
                10 => Step::Pow(pick(rng), rng.gen_range(1.5..2.5)),
                _ => Step::Un(OpKind::Log, pick(rng)),
            };
            prog.push(s);
        }
        prog
    }

    fn run<O: Ops>(ops: &mut O, prog: &[Step], inputs: &[O::V]) -> Result<O::V, AdError> {
        let mut vals: Vec<O::V> = inputs.to_vec();
        for s in prog {
            let v = match *s {
                Step::Un(OpKind::Exp, a) => {
                    let t = ops.tanh(vals[a])?;
                    ops.exp(t)?
                }
                Step::Un(OpKind::Log, a) => {
                    let t = ops.sigmoid(vals[a])?;
                    let t = ops.shift(t, 0.5)?;
                    ops.log(t)?
                }
                Step::Un(op, a) => match op {
                    OpKind::Tanh => ops.tanh(vals[a])?,
                    OpKind::Sigmoid => ops.sigmoid(vals[a])?,
                    OpKind::Erf => ops.erf(vals[a])?,
                    OpKind::Neg => ops.neg(vals[a])?,
                    _ => unreachable!(),
                },
                Step::Bin(op, a, b) => match op {
                    OpKind::Add => ops.add(vals[a], vals[b])?,
                    OpKind::Sub => ops.sub(vals[a], vals[b])?,
                    OpKind::Mul => {
                        let m = ops.mul(vals[a], vals[b])?;
                        ops.tanh(m)?
                    }
                    _ => unreachable!(),
                },
                Step::Pow(a, p) => {
                    let t = ops.sigmoid(vals[a])?;
                    let t = ops.shift(t, 0.2)?;
                    ops.pow(t, p)?
                }
                Step::Dot(a, b, c, d) => {
                    let d = ops.dot(&[vals[a], vals[b]], &[vals[c], vals[d]])?;
                    ops.tanh(d)?
                }
                Step::Aff(a, b, ca, cb) => ops.affine(&[vals[a], vals[b]], &[ca, cb], 0.1)?,
            };
            vals.push(v);
        }
        // Final division and sqrt on safe operands.
        let last = *vals.last().unwrap();
        let sq = ops.mul(last, last)?;
        let den = ops.shift(sq, 1.0)?;
        let r = ops.sqrt(den)?;
        let num = ops.add(last, vals[0])?;
        ops.div(num, r)
    }

    #[test]
    fn random_expressions_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        for _ in 0..50 {
            let inputs: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let prog = random_program(&mut rng, inputs.len(), 20);
            let mut tape = Tape::new();
            let vars: Vec<Var> = inputs.iter().map(|&x| tape.input(x).unwrap()).collect();
            let root = run(&mut tape, &prog, &vars).unwrap();
            let grads = tape.backward(root).unwrap();
            for (i, v) in vars.iter().enumerate() {
                let h = 1e-5;
                let mut up = inputs.clone();
                up[i] += h;
                let mut dn = inputs.clone();
                dn[i] -= h;
                let fd = (run(&mut Plain, &prog, &up).unwrap() - run(&mut Plain, &prog, &dn).unwrap()) / (2.0 * h);
                let g = grads.wrt(*v);
                if g.abs().max(fd.abs()) < 1e-3 {
                    continue;
                }
                let rel = (g - fd).abs() / g.abs().max(fd.abs());
                assert!(rel <= 1e-6, "gradient {g} vs fd {fd} (rel {rel}) for {prog:?}");
                checked += 1;
            }
        }
        assert!(checked > 50);
    }

    #[test]
    fn plain_and_tape_agree_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let inputs: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let prog = random_program(&mut rng, inputs.len(), 30);
            let mut tape = Tape::new();
            let vars: Vec<Var> = inputs.iter().map(|&x| tape.input(x).unwrap()).collect();
            let taped = run(&mut tape, &prog, &vars).unwrap().value();
            let plain = run(&mut Plain, &prog, &inputs).unwrap();
            assert_eq!(taped.to_bits(), plain.to_bits());
        }
    }
}
