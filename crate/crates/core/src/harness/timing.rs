//! Per-step proposal cost, excluding objective evaluation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ObjectiveFamily, OptimizerEntry};
use crate::baselines::Optimizer;
use crate::seeds::{derive, stream};
use crate::trajectory::Clock;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TimingTable {
    pub optimizer: String,
    pub repeats: usize,
    /// Median proposal time in nanoseconds for steps `1..=len`.
    pub median_ns: Vec<u64>,
}

impl TimingTable {
    /// Median at 1-based `step`.
    pub fn at(&self, step: usize) -> u64 {
        self.median_ns[step - 1]
    }
}

fn median(xs: &mut [u64]) -> u64 {
    xs.sort_unstable();
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        xs[n / 2 - 1] / 2 + xs[n / 2] / 2 + (xs[n / 2 - 1] % 2 + xs[n / 2] % 2) / 2
    }
}

/// Runs `optimizer` `repeats` times for `horizon` steps on instances
/// `0..repeats` of `family`, sequentially, and takes per-step medians.
pub fn time_proposals(
    name: &str,
    optimizer: &dyn Optimizer,
    family: &ObjectiveFamily,
    horizon: usize,
    repeats: usize,
    seed: u64,
    clock: Clock,
) -> Result<TimingTable> {
    if repeats < 3 {
        return Err(Error::Invalid(format!("timing needs at least 3 repeats, got {repeats}")));
    }
    let mut samples = vec![Vec::with_capacity(repeats); horizon];
    for r in 0..repeats {
        let mut objective = family.instance(seed, r)?;
        let t = optimizer.optimize(objective.as_mut(), horizon, derive(seed, stream::OPTIMIZER, r as u64), clock)?;
        for (s, ns) in samples.iter_mut().zip(t.wall_ns()) {
            s.push(ns);
        }
    }
    Ok(TimingTable { optimizer: name.into(), repeats, median_ns: samples.iter_mut().map(|s| median(s)).collect() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    #[serde(default)]
    pub seed: u64,
    pub horizon: usize,
    pub repeats: usize,
    pub objective: ObjectiveFamily,
    pub optimizers: Vec<OptimizerEntry>,
    #[serde(default)]
    pub clock: Clock,
}

impl TimeConfig {
    pub fn resolve(&mut self, base: &Path) {
        self.objective.resolve(base);
        for o in &mut self.optimizers {
            o.optimizer.resolve(base);
        }
    }

    pub fn run(&self) -> Result<Vec<TimingTable>> {
        self.optimizers
            .iter()
            .map(|e| {
                let opt = e.optimizer.build(&e.name)?;
                time_proposals(&e.name, opt.as_ref(), &self.objective, self.horizon, self.repeats, self.seed, self.clock)
            })
            .collect()
    }
}

pub fn write_timing_csv(tables: &[TimingTable], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["optimizer", "step", "repeats", "median_ns"])?;
    for t in tables {
        for (i, ns) in t.median_ns.iter().enumerate() {
            w.write_record([t.optimizer.clone(), (i + 1).to_string(), t.repeats.to_string(), ns.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
