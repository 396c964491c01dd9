//! Test objectives: frozen GP draws, analytic benchmarks, the repeller
//! problem and tabular grids.

pub mod analytic;
pub mod repeller;
pub mod tabular;

pub use analytic::{AnalyticBenchmark, BenchmarkObjective, PerturbedInstance};
pub use repeller::{RepellerConfig, RepellerObjective};
pub use tabular::{TabularError, TabularObjective};

use crate::gp::{FrozenGpSample, GpError, GpSampleFunction, Kernel};
use crate::objective::{Objective, ObjectiveError, ObservationScale};
use crate::policy::SearchSpace;
use crate::qmc::halton;

/// Default anchor count for freezing a GP draw in `dim` dimensions.
pub fn default_anchors(dim: usize) -> usize {
    match dim {
        1 => 32,
        2 => 400,
        _ => 1000,
    }
}

/// A GP prior draw pinned on Halton anchors, so every optimizer sees the
/// same function regardless of its query order.
#[derive(Debug, Clone)]
pub struct GpTestFunction {
    frozen: FrozenGpSample,
    space: SearchSpace,
    seed: u64,
}

impl GpTestFunction {
    pub fn new(kernel: Kernel, dim: usize, seed: u64) -> Result<Self, GpError> {
        Self::with_anchors(kernel, dim, seed, default_anchors(dim))
    }

    pub fn with_anchors(kernel: Kernel, dim: usize, seed: u64, anchors: usize) -> Result<Self, GpError> {
        let mut draw = GpSampleFunction::<f64>::new(kernel, dim, seed)?;
        for i in 0..anchors as u64 {
            draw.sample(&halton(i, dim))?;
        }
        Ok(GpTestFunction { frozen: draw.freeze()?, space: SearchSpace::unit(dim), seed })
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, GpError> {
        self.frozen.eval(x)
    }

    pub fn residual_variance(&self, x: &[f64]) -> f64 {
        self.frozen.residual_variance(x)
    }
}

impl Objective for GpTestFunction {
    fn space(&self) -> &SearchSpace {
        &self.space
    }

    fn evaluate(&mut self, x: &[f64]) -> Result<f64, ObjectiveError> {
        self.frozen.eval(x).map_err(|e| ObjectiveError(e.to_string()))
    }

    fn observation_scale(&self) -> ObservationScale {
        ObservationScale::default()
    }

    fn name(&self) -> String {
        format!("gp-{}", self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn frozen_draws_are_nearly_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for dim in [1, 2] {
            let f = GpTestFunction::new(Kernel::default(), dim, 7).unwrap();
            for _ in 0..200 {
                let x: Vec<f64> = (0..dim).map(|_| rng.gen()).collect();
                assert!(f.residual_variance(&x) < 1e-3, "dim {dim} at {x:?}");
            }
        }
    }

    #[test]
    fn frozen_draws_have_prior_scale() {
        let mut values = Vec::new();
        for seed in 0..200 {
            let f = GpTestFunction::new(Kernel::default(), 1, seed).unwrap();
            values.push(f.eval(&[0.37]).unwrap());
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        // Five standard errors for the sample mean and variance of N(0, 1).
        assert!(mean.abs() < 5.0 / n.sqrt(), "{mean}");
        assert!((var - 1.0).abs() < 5.0 * (2.0 / n).sqrt(), "{var}");
    }

    #[test]
    fn same_seed_same_function() {
        let a = GpTestFunction::new(Kernel::default(), 2, 3).unwrap();
        let b = GpTestFunction::new(Kernel::default(), 2, 3).unwrap();
        let c = GpTestFunction::new(Kernel::default(), 2, 4).unwrap();
        let x = [0.1, 0.9];
        assert_eq!(a.eval(&x).unwrap().to_bits(), b.eval(&x).unwrap().to_bits());
        assert_ne!(a.eval(&x).unwrap(), c.eval(&x).unwrap());
    }
}
