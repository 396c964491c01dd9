//! Meta-trained LSTM optimizers for black-box minimisation.
//!
//! A recurrent policy is trained by backpropagation through time on functions
//! drawn from a Gaussian-process prior, then used as a derivative-free
//! optimizer. The crate also contains the baselines (random search, GP-EI),
//! benchmark objectives and an experiment harness.

pub mod autodiff;
pub mod baselines;
pub mod benchmarks;
pub mod checkpoint;
pub mod gp;
pub mod harness;
pub mod objective;
pub mod parallel;
pub mod policy;
pub mod qmc;
pub mod seeds;
pub mod training;
pub mod trajectory;

use thiserror::Error;

pub use autodiff::{AdError, Ops, Plain, Tape, Var};
pub use gp::{GpError, GpRegressor, GpSampleFunction, Kernel, Posterior};
pub use objective::{FnObjective, Objective, ObjectiveError, ObservationScale};
pub use policy::{LstmPolicy, PolicyError, PolicySession, PolicyState, Proposal, SearchSpace};
pub use checkpoint::Checkpoint;
pub use parallel::{run_parallel, RuntimeJitter};
pub use policy::propose_eval;
pub use training::{LossKind, TrainConfig};
pub use trajectory::{Clock, Record, Trajectory};

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ad(#[from] AdError),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("objective failed at step {step}{}: {source}", worker.map(|w| format!(" on worker {w}")).unwrap_or_default())]
    Objective { step: usize, worker: Option<usize>, source: ObjectiveError },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Train(#[from] training::TrainError),
    #[error(transparent)]
    Checkpoint(#[from] checkpoint::CheckpointError),
    #[error(transparent)]
    Tabular(#[from] benchmarks::TabularError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
