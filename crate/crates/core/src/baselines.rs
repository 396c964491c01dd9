//! Reference optimizers behind a common interface.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gp::{expected_improvement_value, GpError, GpRegressor, Kernel};
use crate::objective::Objective;
use crate::parallel::{run_parallel, RuntimeJitter};
use crate::policy::{propose_eval, LstmPolicy, SearchSpace};
use crate::qmc::shifted_halton;
use crate::trajectory::{Clock, Record, Trajectory};
use crate::Error;

/// Anything that minimizes an [`Objective`] within a fixed budget.
pub trait Optimizer: Send + Sync {
    fn name(&self) -> String;

    fn optimize(&self, objective: &mut dyn Objective, budget: usize, seed: u64, clock: Clock) -> Result<Trajectory, Error>;
}

/// The trained policy as an optimizer.
#[derive(Debug, Clone)]
pub struct LearnedOptimizer {
    pub label: String,
    pub policy: Arc<LstmPolicy>,
    pub workers: usize,
    pub jitter: RuntimeJitter,
}

impl LearnedOptimizer {
    pub fn new(label: impl Into<String>, policy: Arc<LstmPolicy>) -> Self {
        LearnedOptimizer { label: label.into(), policy, workers: 1, jitter: RuntimeJitter::none() }
    }
}

impl Optimizer for LearnedOptimizer {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn optimize(&self, objective: &mut dyn Objective, budget: usize, seed: u64, clock: Clock) -> Result<Trajectory, Error> {
        if self.workers <= 1 {
            propose_eval(&self.policy, objective, budget, clock)
        } else {
            run_parallel(&self.policy, objective, self.workers, budget, self.jitter, seed, clock)
        }
    }
}

fn uniform_point<R: Rng>(space: &SearchSpace, rng: &mut R) -> Vec<f64> {
    (0..space.dim())
        .map(|i| {
            if space.integer[i] {
                let lo = space.lower[i].ceil() as i64;
                let hi = space.upper[i].floor() as i64;
                rng.gen_range(lo..=hi) as f64
            } else {
                space.lower[i] + (space.upper[i] - space.lower[i]) * rng.gen::<f64>()
            }
        })
        .collect()
}

/// Independent uniform queries; integer dimensions uniform on their grid.
pub fn random_search(
    objective: &mut dyn Objective,
    budget: usize,
    seed: u64,
    clock: Clock,
) -> Result<Trajectory, Error> {
    let space = objective.space().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut traj = Trajectory::new(space.dim());
    for t in 0..budget {
        let sw = clock.stopwatch();
        let x = uniform_point(&space, &mut rng);
        let wall_ns = sw.ns();
        let y = objective.evaluate(&x).map_err(|source| Error::Objective { step: t + 1, worker: None, source })?;
        traj.push(Record { x, y, wall_ns, parallel: None });
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RandomSearch;

impl Optimizer for RandomSearch {
    fn name(&self) -> String {
        "random".into()
    }

    fn optimize(&self, objective: &mut dyn Objective, budget: usize, seed: u64, clock: Clock) -> Result<Trajectory, Error> {
        random_search(objective, budget, seed, clock)
    }
}

/// Acquisition search settings for [`gp_ei_optimize`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcquisitionSearch {
    pub candidates: usize,
    pub starts: usize,
    pub sweeps: usize,
    pub line_evals: usize,
}

impl Default for AcquisitionSearch {
    fn default() -> Self {
        AcquisitionSearch { candidates: 2048, starts: 4, sweeps: 20, line_evals: 12 }
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Maximizes `f` on `[lo, hi]` by golden-section search.
fn golden_max(f: &mut impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, evals: usize) -> (f64, f64) {
    let mut a = hi - INV_PHI * (hi - lo);
    let mut b = lo + INV_PHI * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..evals.saturating_sub(2) {
        if fa >= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - INV_PHI * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + INV_PHI * (hi - lo);
            fb = f(b);
        }
    }
    if fa >= fb { (a, fa) } else { (b, fb) }
}

/// Maximizes EI over the unit cube: best of `candidates` uniform points,
/// then coordinate-wise golden-section sweeps from the top `starts`, each
/// sweep accepting only improvements and shrinking its bracket.
pub fn maximize_ei<R: Rng>(
    reg: &GpRegressor,
    dim: usize,
    best: f64,
    search: &AcquisitionSearch,
    rng: &mut R,
) -> (Vec<f64>, f64) {
    let mut buf = Vec::with_capacity(reg.len());
    let mut ei = |x: &[f64]| {
        let p = reg.predict_with_buffer(x, &mut buf);
        expected_improvement_value(p.mean, p.variance, best)
    };
    let mut scored: Vec<(f64, Vec<f64>)> = (0..search.candidates)
        .map(|_| {
            let x: Vec<f64> = (0..dim).map(|_| rng.gen()).collect();
            (ei(&x), x)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    scored.truncate(search.starts.max(1));

    let mut winner = scored[0].clone();
    for (mut val, mut x) in scored {
        let mut width = 0.25;
        for _ in 0..search.sweeps {
            for k in 0..dim {
                let lo = (x[k] - width).max(0.0);
                let hi = (x[k] + width).min(1.0);
                let mut probe = x.clone();
                let (xk, v) = golden_max(
                    &mut |c| {
                        probe[k] = c;
                        ei(&probe)
                    },
                    lo,
                    hi,
                    search.line_evals,
                );
                if v > val {
                    val = v;
                    x[k] = xk;
                }
            }
            width *= 0.7;
        }
        if val > winner.0 {
            winner = (val, x);
        }
    }
    (winner.1, winner.0)
}

/// Sequential GP-EI with fixed kernel hyperparameters. Works in unit-cube
/// coordinates on observations rescaled by the objective's
/// [`crate::objective::ObservationScale`].
pub fn gp_ei_optimize(
    objective: &mut dyn Objective,
    budget: usize,
    kernel: Kernel,
    n_init: usize,
    search: &AcquisitionSearch,
    seed: u64,
    clock: Clock,
) -> Result<Trajectory, Error> {
    if n_init == 0 || n_init > budget {
        return Err(Error::Invalid(format!("need 1 <= n_init ({n_init}) <= budget ({budget})")));
    }
    let space = objective.space().clone();
    let scale = objective.observation_scale();
    let d = space.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..d).map(|_| rng.gen()).collect();
    let mut reg = GpRegressor::new(kernel, d)?;
    let mut best = f64::INFINITY;
    let mut traj = Trajectory::new(d);
    for t in 0..budget {
        let sw = clock.stopwatch();
        let u = if t < n_init { shifted_halton(t as u64, &shift) } else { maximize_ei(&reg, d, best, search, &mut rng).0 };
        let x = space.from_unit(&u);
        let wall_ns = sw.ns();
        let y = objective.evaluate(&x).map_err(|source| Error::Objective { step: t + 1, worker: None, source })?;
        let sw = clock.stopwatch();
        let z = scale.apply(y);
        // A rounded integer point may repeat exactly; the model already has it.
        match reg.push(&space.to_unit(&x), z) {
            Ok(()) | Err(GpError::Breakdown { .. }) => {}
            Err(e) => return Err(e.into()),
        }
        best = best.min(z);
        traj.push(Record { x, y, wall_ns: wall_ns + sw.ns(), parallel: None });
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy)]
pub struct GpEi {
    pub kernel: Kernel,
    pub n_init: usize,
    pub search: AcquisitionSearch,
}

impl GpEi {
    pub fn new(kernel: Kernel) -> Self {
        GpEi { kernel, n_init: 2, search: AcquisitionSearch::default() }
    }
}

impl Optimizer for GpEi {
    fn name(&self) -> String {
        "gp_ei".into()
    }

    fn optimize(&self, objective: &mut dyn Objective, budget: usize, seed: u64, clock: Clock) -> Result<Trajectory, Error> {
        gp_ei_optimize(objective, budget, self.kernel, self.n_init, &self.search, seed, clock)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::FnObjective;

    #[test]
    fn random_search_is_reproducible_and_uniform() {
        let mut f = FnObjective::new(SearchSpace::unit(1), |x: &[f64]| x[0]);
        let a = random_search(&mut f, 1, 5, Clock::Off).unwrap();
        let b = random_search(&mut f, 1, 5, Clock::Off).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 1);

        let n = 100_000;
        let t = random_search(&mut f, n, 1, Clock::Off).unwrap();
        let xs = t.values();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 0.5).abs() <= 3.0 * (var / n as f64).sqrt());
        let m = t.min_observed();
        assert!(m.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn random_search_integer_grid_is_uniform() {
        let space = SearchSpace::new(vec![0.0], vec![3.0], vec![true]).unwrap();
        let mut f = FnObjective::new(space, |x: &[f64]| x[0]);
        let t = random_search(&mut f, 40_000, 2, Clock::Off).unwrap();
        let mut counts = [0usize; 4];
        for y in t.values() {
            assert_eq!(y.fract(), 0.0);
            counts[y as usize] += 1;
        }
        for c in counts {
            assert!((c as f64 - 10_000.0).abs() < 400.0, "{counts:?}");
        }
    }

    #[test]
    fn golden_section_finds_peak() {
        let (x, v) = golden_max(&mut |x| -(x - 0.3) * (x - 0.3), 0.0, 1.0, 40);
        assert!((x - 0.3).abs() < 1e-6);
        assert!(v <= 0.0);
    }

    #[test]
    fn acquisition_argmax_dominates_candidates() {
        let k = Kernel::default();
        let reg = GpRegressor::fit(k, 2, &[0.1, 0.2, 0.8, 0.7, 0.5, 0.5], &[0.3, -0.5, 0.1]).unwrap();
        let search = AcquisitionSearch::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut replay = rng.clone();
        let (x, v) = maximize_ei(&reg, 2, -0.5, &search, &mut rng);
        assert!(x.iter().all(|c| (0.0..=1.0).contains(c)));
        for _ in 0..search.candidates {
            let c: Vec<f64> = (0..2).map(|_| replay.gen()).collect();
            let p = reg.predict(&c);
            assert!(v >= expected_improvement_value(p.mean, p.variance, -0.5));
        }
    }

    #[test]
    fn gp_ei_stays_in_box_and_finds_bowl_minimum() {
        let space = SearchSpace::new(vec![-2.0, 0.0], vec![2.0, 10.0], vec![false, true]).unwrap();
        let mut f = FnObjective::new(space.clone(), |x: &[f64]| (x[0] - 0.5).powi(2) + (x[1] - 7.0).powi(2) / 10.0);
        let t = gp_ei_optimize(&mut f, 25, Kernel::default(), 2, &AcquisitionSearch::default(), 1, Clock::Off).unwrap();
        assert!(t.records.iter().all(|r| space.contains(&r.x)));
        assert!(t.min_observed()[24] < 0.05, "{}", t.min_observed()[24]);
    }

    #[test]
    fn gp_ei_rejects_bad_init() {
        let mut f = FnObjective::new(SearchSpace::unit(1), |x: &[f64]| x[0]);
        assert!(gp_ei_optimize(&mut f, 3, Kernel::default(), 0, &AcquisitionSearch::default(), 0, Clock::Off).is_err());
        assert!(gp_ei_optimize(&mut f, 3, Kernel::default(), 4, &AcquisitionSearch::default(), 0, Clock::Off).is_err());
    }
}
