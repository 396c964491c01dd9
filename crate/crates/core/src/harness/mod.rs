//! Experiment configuration, objective families and run manifests.

pub mod check;
pub mod compare;
pub mod stats;
pub mod timing;

pub use compare::{compare, AggregateCurve, CompareConfig, CompareReport, OptimizerEntry, RunRecord};
pub use stats::PairedStats;
pub use timing::{time_proposals, TimeConfig, TimingTable};

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{AcquisitionSearch, GpEi, LearnedOptimizer, Optimizer, RandomSearch};
use crate::benchmarks::{
    AnalyticBenchmark, BenchmarkObjective, GpTestFunction, PerturbedInstance, RepellerConfig, RepellerObjective,
    TabularObjective,
};
use crate::checkpoint::Checkpoint;
use crate::gp::Kernel;
use crate::objective::Objective;
use crate::parallel::RuntimeJitter;
use crate::seeds::{derive, stream};
use crate::trajectory::Clock;
use crate::{Error, Result};

fn default_true() -> bool {
    true
}

fn default_one() -> usize {
    1
}

fn default_n_init() -> usize {
    2
}

/// A distribution over objective instances, indexed by function number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ObjectiveFamily {
    /// Frozen GP prior draws on the unit cube.
    Gp {
        dim: usize,
        #[serde(default)]
        kernel: Kernel,
        anchors: Option<usize>,
    },
    /// Randomly perturbed copies of an analytic benchmark.
    Benchmark {
        benchmark: AnalyticBenchmark,
        #[serde(default = "default_true")]
        perturbed: bool,
    },
    /// Repeller control; reward centers shift uniformly by up to
    /// `reward_jitter` per instance.
    Repeller {
        #[serde(default)]
        config: RepellerConfig,
        #[serde(default)]
        reward_jitter: f64,
    },
    /// One fixed precomputed grid.
    Tabular { path: PathBuf },
}

impl ObjectiveFamily {
    pub fn dim(&self) -> Result<usize> {
        Ok(match self {
            ObjectiveFamily::Gp { dim, .. } => *dim,
            ObjectiveFamily::Benchmark { benchmark, .. } => benchmark.dim(),
            ObjectiveFamily::Repeller { config, .. } => config.dim(),
            ObjectiveFamily::Tabular { path } => TabularObjective::load(path)?.space().dim(),
        })
    }

    pub fn id(&self) -> String {
        match self {
            ObjectiveFamily::Gp { dim, .. } => format!("gp{dim}d"),
            ObjectiveFamily::Benchmark { benchmark, .. } => benchmark.name().into(),
            ObjectiveFamily::Repeller { .. } => "repeller".into(),
            ObjectiveFamily::Tabular { path } => {
                path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "tabular".into())
            }
        }
    }

    /// Resolves relative paths against `base`.
    pub fn resolve(&mut self, base: &Path) {
        if let ObjectiveFamily::Tabular { path } = self {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }

    /// Instance number `index` under master seed `master`.
    pub fn instance(&self, master: u64, index: usize) -> Result<Box<dyn Objective + Send>> {
        let seed = derive(master, stream::TEST_FUNCTION, index as u64);
        Ok(match self {
            ObjectiveFamily::Gp { dim, kernel, anchors } => {
                let n = anchors.unwrap_or_else(|| crate::benchmarks::default_anchors(*dim));
                Box::new(GpTestFunction::with_anchors(*kernel, *dim, seed, n)?)
            }
            ObjectiveFamily::Benchmark { benchmark, perturbed } => {
                let instance = if *perturbed {
                    PerturbedInstance::random(*benchmark, &mut ChaCha8Rng::seed_from_u64(seed))
                } else {
                    PerturbedInstance::identity(*benchmark)
                };
                Box::new(BenchmarkObjective::new(instance))
            }
            ObjectiveFamily::Repeller { config, reward_jitter } => {
                let mut config = config.clone();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                if *reward_jitter > 0.0 {
                    for bump in &mut config.reward {
                        for c in &mut bump.center {
                            *c += rng.gen_range(-*reward_jitter..*reward_jitter);
                        }
                    }
                }
                Box::new(RepellerObjective::new(config).map_err(Error::Invalid)?)
            }
            ObjectiveFamily::Tabular { path } => Box::new(TabularObjective::load(path)?),
        })
    }
}

/// How to build one optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerSpec {
    Random,
    GpEi {
        #[serde(default)]
        kernel: Kernel,
        #[serde(default = "default_n_init")]
        n_init: usize,
        #[serde(default)]
        search: AcquisitionSearch,
    },
    Learned {
        checkpoint: PathBuf,
        #[serde(default = "default_one")]
        workers: usize,
        #[serde(default)]
        jitter: f64,
    },
}

impl OptimizerSpec {
    pub fn resolve(&mut self, base: &Path) {
        if let OptimizerSpec::Learned { checkpoint, .. } = self {
            if checkpoint.is_relative() {
                *checkpoint = base.join(&*checkpoint);
            }
        }
    }

    pub fn build(&self, label: &str) -> Result<Arc<dyn Optimizer>> {
        Ok(match self {
            OptimizerSpec::Random => Arc::new(RandomSearch),
            OptimizerSpec::GpEi { kernel, n_init, search } => {
                kernel.validate()?;
                Arc::new(GpEi { kernel: *kernel, n_init: *n_init, search: *search })
            }
            OptimizerSpec::Learned { checkpoint, workers, jitter } => {
                let c = Checkpoint::load(checkpoint)?;
                let mut o = LearnedOptimizer::new(label, Arc::new(c.policy));
                o.workers = (*workers).max(1);
                o.jitter = RuntimeJitter::new(*jitter).map_err(Error::Invalid)?;
                Arc::new(o)
            }
        })
    }
}

/// Reads a TOML config and returns it with the hex SHA-256 of the raw file.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<(T, String)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Invalid(format!("reading {}: {e}", path.display())))?;
    let value = toml::from_str(&text).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))?;
    Ok((value, sha256_hex(text.as_bytes())))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Provenance of one CLI run. Contains no timestamps, so identical runs
/// write identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub clock: Clock,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, config_sha256: String, seed: u64, clock: Clock) -> Self {
        Manifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_sha256,
            seed,
            clock,
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Invalid(e.to_string()))?;
        std::fs::write(dir.join("manifest.toml"), text)?;
        Ok(())
    }
}

/// Single-run configuration for the `optimize` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeConfig {
    #[serde(default)]
    pub seed: u64,
    pub horizon: usize,
    #[serde(default)]
    pub instance: usize,
    pub objective: ObjectiveFamily,
    pub optimizer: OptimizerSpec,
    #[serde(default)]
    pub clock: Clock,
}

impl OptimizeConfig {
    pub fn resolve(&mut self, base: &Path) {
        self.objective.resolve(base);
        self.optimizer.resolve(base);
    }

    pub fn run(&self) -> Result<crate::trajectory::Trajectory> {
        let opt = self.optimizer.build("optimizer")?;
        let mut objective = self.objective.instance(self.seed, self.instance)?;
        let seed = derive(self.seed, stream::OPTIMIZER, self.instance as u64);
        opt.optimize(objective.as_mut(), self.horizon, seed, self.clock)
    }
}
