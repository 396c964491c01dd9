//! Branin, Goldstein–Price and the Hartmann family, plus randomly perturbed
//! instances on the unit cube.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::objective::{Objective, ObjectiveError, ObservationScale};
use crate::policy::SearchSpace;
use crate::qmc::halton;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnalyticBenchmark {
    Branin,
    #[serde(rename = "goldstein_price")]
    GoldsteinPrice,
    Hartmann3,
    Hartmann6,
}

const H3_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];
const H3_A: [[f64; 3]; 4] = [[3.0, 10.0, 30.0], [0.1, 10.0, 35.0], [3.0, 10.0, 30.0], [0.1, 10.0, 35.0]];
const H3_P: [[f64; 3]; 4] = [
    [0.3689, 0.1170, 0.2673],
    [0.4699, 0.4387, 0.7470],
    [0.1091, 0.8732, 0.5547],
    [0.0381, 0.5743, 0.8828],
];
const H6_A: [[f64; 6]; 4] = [
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
];
const H6_P: [[f64; 6]; 4] = [
    [0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
    [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
    [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
    [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381],
];

fn hartmann<const D: usize>(x: &[f64], a: &[[f64; D]; 4], p: &[[f64; D]; 4]) -> f64 {
    -(0..4)
        .map(|i| {
            let e: f64 = (0..D).map(|j| a[i][j] * (x[j] - p[i][j]).powi(2)).sum();
            H3_ALPHA[i] * (-e).exp()
        })
        .sum::<f64>()
}

impl AnalyticBenchmark {
    pub const ALL: [AnalyticBenchmark; 4] =
        [AnalyticBenchmark::Branin, AnalyticBenchmark::GoldsteinPrice, AnalyticBenchmark::Hartmann3, AnalyticBenchmark::Hartmann6];

    pub fn dim(self) -> usize {
        match self {
            AnalyticBenchmark::Branin | AnalyticBenchmark::GoldsteinPrice => 2,
            AnalyticBenchmark::Hartmann3 => 3,
            AnalyticBenchmark::Hartmann6 => 6,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AnalyticBenchmark::Branin => "branin",
            AnalyticBenchmark::GoldsteinPrice => "goldstein_price",
            AnalyticBenchmark::Hartmann3 => "hartmann3",
            AnalyticBenchmark::Hartmann6 => "hartmann6",
        }
    }

    /// Native box `(lower, upper)`.
    pub fn domain(self) -> (Vec<f64>, Vec<f64>) {
        match self {
            AnalyticBenchmark::Branin => (vec![-5.0, 0.0], vec![10.0, 15.0]),
            AnalyticBenchmark::GoldsteinPrice => (vec![-2.0, -2.0], vec![2.0, 2.0]),
            AnalyticBenchmark::Hartmann3 => (vec![0.0; 3], vec![1.0; 3]),
            AnalyticBenchmark::Hartmann6 => (vec![0.0; 6], vec![1.0; 6]),
        }
    }

    /// Closed form at a native point.
    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            AnalyticBenchmark::Branin => {
                let b = 5.1 / (4.0 * PI * PI);
                let c = 5.0 / PI;
                let t = 1.0 / (8.0 * PI);
                (x[1] - b * x[0] * x[0] + c * x[0] - 6.0).powi(2) + 10.0 * (1.0 - t) * x[0].cos() + 10.0
            }
            AnalyticBenchmark::GoldsteinPrice => {
                let (a, b) = (x[0], x[1]);
                let p = 1.0
                    + (a + b + 1.0).powi(2) * (19.0 - 14.0 * a + 3.0 * a * a - 14.0 * b + 6.0 * a * b + 3.0 * b * b);
                let q = 30.0
                    + (2.0 * a - 3.0 * b).powi(2)
                        * (18.0 - 32.0 * a + 12.0 * a * a + 48.0 * b - 36.0 * a * b + 27.0 * b * b);
                p * q
            }
            AnalyticBenchmark::Hartmann3 => hartmann(x, &H3_A, &H3_P),
            AnalyticBenchmark::Hartmann6 => hartmann(x, &H6_A, &H6_P),
        }
    }
}

impl std::str::FromStr for AnalyticBenchmark {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        AnalyticBenchmark::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| format!("unknown benchmark {s:?}"))
    }
}

/// A benchmark seen through a random permutation, flips, scaling and
/// translation of the unit cube.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedInstance {
    pub base: AnalyticBenchmark,
    pub translation: Vec<f64>,
    pub scale: Vec<f64>,
    pub flip: Vec<bool>,
    pub permutation: Vec<usize>,
}

impl PerturbedInstance {
    pub fn identity(base: AnalyticBenchmark) -> Self {
        let d = base.dim();
        PerturbedInstance {
            base,
            translation: vec![0.0; d],
            scale: vec![1.0; d],
            flip: vec![false; d],
            permutation: (0..d).collect(),
        }
    }

    /// Translation in (−0.1, 0.1), scale in (0.9, 1.1), fair-coin flips and a
    /// uniform permutation.
    pub fn random<R: Rng>(base: AnalyticBenchmark, rng: &mut R) -> Self {
        let d = base.dim();
        let translation = (0..d).map(|_| rng.gen_range(-0.1..0.1)).collect();
        let scale = (0..d).map(|_| rng.gen_range(0.9..1.1)).collect();
        let flip = (0..d).map(|_| rng.gen_bool(0.5)).collect();
        let mut permutation: Vec<usize> = (0..d).collect();
        permutation.shuffle(rng);
        PerturbedInstance { base, translation, scale, flip, permutation }
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    /// Native point that unit-cube input `u` maps to.
    pub fn native_point(&self, u: &[f64]) -> Vec<f64> {
        let (lo, hi) = self.base.domain();
        (0..self.dim())
            .map(|i| {
                let mut v = u[self.permutation[i]];
                if self.flip[i] {
                    v = 1.0 - v;
                }
                let w = 0.5 + self.scale[i] * (v - 0.5) + self.translation[i];
                lo[i] + (hi[i] - lo[i]) * w
            })
            .collect()
    }

    pub fn eval(&self, u: &[f64]) -> f64 {
        self.base.eval(&self.native_point(u))
    }
}

/// [`PerturbedInstance`] as an objective on the unit cube, observations
/// standardized with the mean and deviation over a fixed Halton sample.
#[derive(Debug, Clone)]
pub struct BenchmarkObjective {
    pub instance: PerturbedInstance,
    space: SearchSpace,
    scale: ObservationScale,
}

/// Halton points used to fix observation standardization.
pub const STANDARDIZATION_POINTS: u64 = 512;

impl BenchmarkObjective {
    pub fn new(instance: PerturbedInstance) -> Self {
        let d = instance.dim();
        let ys: Vec<f64> = (0..STANDARDIZATION_POINTS).map(|i| instance.eval(&halton(i, d))).collect();
        BenchmarkObjective { scale: ObservationScale::standardizing(&ys), space: SearchSpace::unit(d), instance }
    }
}

impl Objective for BenchmarkObjective {
    fn space(&self) -> &SearchSpace {
        &self.space
    }

    fn evaluate(&mut self, x: &[f64]) -> Result<f64, ObjectiveError> {
        if x.len() != self.space.dim() {
            return Err(ObjectiveError(format!("expected {} coordinates, got {}", self.space.dim(), x.len())));
        }
        Ok(self.instance.eval(x))
    }

    fn observation_scale(&self) -> ObservationScale {
        self.scale
    }

    fn name(&self) -> String {
        self.instance.base.name().into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // Independent minimizer: dense grid over the native box, then a
    // compass search from the best few grid points.
    fn grid_oracle(b: AnalyticBenchmark, per_dim: usize) -> (f64, Vec<f64>) {
        let (lo, hi) = b.domain();
        let d = b.dim();
        let total = per_dim.pow(d as u32);
        let mut best: Vec<(f64, Vec<f64>)> = Vec::new();
        for idx in 0..total {
            let mut rem = idx;
            let x: Vec<f64> = (0..d)
                .map(|i| {
                    let k = rem % per_dim;
                    rem /= per_dim;
                    lo[i] + (hi[i] - lo[i]) * k as f64 / (per_dim - 1) as f64
                })
                .collect();
            let v = b.eval(&x);
            best.push((v, x));
            if best.len() > 64 {
                best.sort_by(|a, b| a.0.total_cmp(&b.0));
                best.truncate(8);
            }
        }
        best.sort_by(|a, b| a.0.total_cmp(&b.0));
        best.truncate(8);
        let mut overall = (f64::INFINITY, vec![]);
        for (mut v, mut x) in best {
            let mut step: Vec<f64> = (0..d).map(|i| (hi[i] - lo[i]) / per_dim as f64).collect();
            while step.iter().any(|s| *s > 1e-12) {
                let mut moved = false;
                for i in 0..d {
                    for dir in [-1.0, 1.0] {
                        let mut y = x.clone();
                        y[i] = (y[i] + dir * step[i]).clamp(lo[i], hi[i]);
                        let fy = b.eval(&y);
                        if fy < v {
                            v = fy;
                            x = y;
                            moved = true;
                        }
                    }
                }
                if !moved {
                    step.iter_mut().for_each(|s| *s *= 0.5);
                }
            }
            if v < overall.0 {
                overall = (v, x);
            }
        }
        overall
    }

    #[test]
    fn branin_minimum() {
        let (v, _) = grid_oracle(AnalyticBenchmark::Branin, 200);
        assert!((v - 0.397887).abs() < 1e-5, "{v}");
        let at = PerturbedInstance::identity(AnalyticBenchmark::Branin).eval(&[(PI + 5.0) / 15.0, 2.275 / 15.0]);
        assert!((at - 0.397887).abs() < 1e-5, "{at}");
    }

    #[test]
    fn goldstein_price_minimum() {
        let (v, _) = grid_oracle(AnalyticBenchmark::GoldsteinPrice, 200);
        assert!((v - 3.0).abs() < 1e-9, "{v}");
        let at = PerturbedInstance::identity(AnalyticBenchmark::GoldsteinPrice).eval(&[0.5, 0.25]);
        assert!((at - 3.0).abs() < 1e-9, "{at}");
    }

    #[test]
    fn hartmann_minima() {
        let (v3, _) = grid_oracle(AnalyticBenchmark::Hartmann3, 40);
        assert!((v3 + 3.86278).abs() < 1e-4, "{v3}");
        let (v6, _) = grid_oracle(AnalyticBenchmark::Hartmann6, 8);
        assert!((v6 + 3.32237).abs() < 1e-4, "{v6}");
    }

    #[test]
    fn perturbation_parameters_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let p = PerturbedInstance::random(AnalyticBenchmark::Hartmann6, &mut rng);
            assert!(p.translation.iter().all(|t| *t > -0.1 && *t < 0.1));
            assert!(p.scale.iter().all(|s| *s > 0.9 && *s < 1.1));
            let mut perm = p.permutation.clone();
            perm.sort();
            assert_eq!(perm, (0..6).collect::<Vec<_>>());
        }
    }

    #[test]
    fn perturbation_is_a_reparametrization() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = PerturbedInstance::random(AnalyticBenchmark::Branin, &mut rng);
        let id = PerturbedInstance::identity(AnalyticBenchmark::Branin);
        for _ in 0..100 {
            let u: Vec<f64> = (0..2).map(|_| rng.gen()).collect();
            let x = p.native_point(&u);
            let back = id.base.eval(&x);
            assert_eq!(p.eval(&u), back);
        }
        let flip_only = PerturbedInstance { flip: vec![true, false], ..PerturbedInstance::identity(AnalyticBenchmark::Branin) };
        assert_eq!(flip_only.native_point(&[0.0, 0.0]), vec![10.0, 0.0]);
        let swap = PerturbedInstance { permutation: vec![1, 0], ..PerturbedInstance::identity(AnalyticBenchmark::Branin) };
        assert_eq!(swap.native_point(&[0.2, 0.6]), vec![-5.0 + 15.0 * 0.6, 15.0 * 0.2]);
    }

    #[test]
    fn evaluations_are_finite_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for b in AnalyticBenchmark::ALL {
            let p = PerturbedInstance::random(b, &mut rng);
            for _ in 0..250_000 {
                let u: Vec<f64> = (0..b.dim()).map(|_| rng.gen()).collect();
                let v = p.eval(&u);
                assert!(v.is_finite());
            }
            let u = vec![0.3; b.dim()];
            assert_eq!(p.eval(&u).to_bits(), p.eval(&u).to_bits());
        }
    }

    #[test]
    fn objective_scale_is_standardizing() {
        let o = BenchmarkObjective::new(PerturbedInstance::identity(AnalyticBenchmark::Branin));
        let s = o.observation_scale();
        assert!(s.scale > 1.0 && s.shift > 0.0);
        assert_eq!("hartmann6".parse::<AnalyticBenchmark>().unwrap(), AnalyticBenchmark::Hartmann6);
        assert!("rosenbrock".parse::<AnalyticBenchmark>().is_err());
    }
}
