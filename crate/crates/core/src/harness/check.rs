//! Self-checks behind the `check` command: gradients against finite
//! differences, the GP sampler against joint sampling, EI against
//! Monte Carlo, benchmark minima and the parallel protocol.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{Ops, Plain, Tape};
use crate::benchmarks::{AnalyticBenchmark, PerturbedInstance};
use crate::gp::{expected_improvement, expected_improvement_value, GpRegressor, GpSampleFunction, Kernel};
use crate::objective::FnObjective;
use crate::parallel::{run_parallel, RuntimeJitter};
use crate::policy::{propose_eval, LstmPolicy, LstmState, PolicyState, SearchSpace};
use crate::training::{rollout_loss, LossKind, RolloutSpec};
use crate::trajectory::Clock;
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    fn at_most(name: &str, measured: f64, tolerance: f64) -> Self {
        CheckResult { name: name.into(), measured, tolerance, passed: measured <= tolerance }
    }
}

fn rel_err(an: f64, fd: f64, floor: f64) -> Option<f64> {
    let scale = an.abs().max(fd.abs());
    (scale >= floor).then(|| (an - fd).abs() / scale)
}

/// Worst relative error of ∂u/∂θ for one LSTM step with a random state.
pub fn lstm_step_gradient(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = LstmPolicy::new(2, 8, seed)?;
    let state = PolicyState {
        h: (0..8).map(|_| rng.gen_range(-0.9..0.9)).collect(),
        c: (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect(),
    };
    let x = [rng.gen::<f64>(), rng.gen::<f64>()];
    let y: f64 = rng.sample(StandardNormal);
    let mut worst: f64 = 0.0;
    for k in 0..2 {
        let mut tape = Tape::new();
        let params: Vec<_> = p.params().iter().map(|&v| tape.input(v)).collect::<Result<_, _>>()?;
        let h = state.h.iter().map(|&v| tape.constant(v)).collect::<Result<_, _>>()?;
        let c = state.c.iter().map(|&v| tape.constant(v)).collect::<Result<_, _>>()?;
        let xv: Vec<_> = x.iter().map(|&v| tape.constant(v)).collect::<Result<_, _>>()?;
        let yv = tape.constant(y)?;
        let (_, u) = p.shape().step(&mut tape, &params, &LstmState { h, c }, &xv, yv, true)?;
        let g = tape.backward(u[k])?;
        for (i, v) in params.iter().enumerate() {
            let eval = |delta: f64| -> Result<f64> {
                let mut q = p.clone();
                q.params_mut()[i] += delta;
                Ok(q.step(&state, &x, y, true)?.1[k])
            };
            let central = |h: f64| -> Result<f64> { Ok((eval(h)? - eval(-h)?) / (2.0 * h)) };
            let fd = (4.0 * central(5e-5)? - central(1e-4)?) / 3.0;
            if let Some(e) = rel_err(g.wrt(*v), fd, 1e-6) {
                worst = worst.max(e);
            }
        }
    }
    Ok(worst)
}

/// Worst relative error of ∂(μ, s², EI)/∂x on a random 2d posterior.
pub fn posterior_gradient(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<f64> = (0..12).map(|_| rng.gen()).collect();
    let ys: Vec<f64> = (0..6).map(|_| rng.sample(StandardNormal)).collect();
    let reg = GpRegressor::fit(Kernel::default(), 2, &xs, &ys)?;
    let best = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let outputs = |x: &[f64]| -> Result<[f64; 3]> {
        let p = reg.predict_on(&mut Plain, x)?;
        Ok([p.mean, p.variance, expected_improvement(&mut Plain, &p, best)?])
    };
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let x0 = [rng.gen::<f64>(), rng.gen::<f64>()];
        for out in 0..3 {
            let mut t = Tape::new();
            let xv = [t.input(x0[0])?, t.input(x0[1])?];
            let p = reg.predict_on(&mut t, &xv)?;
            let b = t.constant(best)?;
            let ei = expected_improvement(&mut t, &p, b)?;
            let g = t.backward([p.mean, p.variance, ei][out])?;
            for d in 0..2 {
                let (mut up, mut dn) = (x0, x0);
                up[d] += 1e-6;
                dn[d] -= 1e-6;
                let fd = (outputs(&up)?[out] - outputs(&dn)?[out]) / 2e-6;
                if let Some(e) = rel_err(g.wrt(xv[d]), fd, 1e-6) {
                    worst = worst.max(e);
                }
            }
        }
    }
    Ok(worst)
}

/// Worst relative error of ∂L/∂θ over a T=3, H=4 rollout for every loss,
/// against Richardson-extrapolated central differences.
pub fn rollout_gradient(seed: u64) -> Result<f64> {
    let mut policy = LstmPolicy::new(1, 4, 31)?;
    policy.params_mut().iter_mut().for_each(|p| *p *= 20.0);
    let mut worst: f64 = 0.0;
    for loss in [LossKind::Final, LossKind::Sum, LossKind::Ei, LossKind::Oi] {
        let spec = RolloutSpec { detach_history: false, ..RolloutSpec::sequential(Kernel::default(), 3, loss) };
        let mut tape = Tape::new();
        let params: Vec<_> = policy.params().iter().map(|&v| tape.input(v)).collect::<Result<_, _>>()?;
        let r = rollout_loss(&mut tape, policy.shape(), &params, &spec, seed)?;
        let g = tape.backward(r.loss)?;
        let loss_at = |delta: f64, i: usize| -> Result<f64> {
            let mut q = policy.clone();
            q.params_mut()[i] += delta;
            Ok(rollout_loss(&mut Plain, q.shape(), q.params(), &spec, seed)?.loss)
        };
        for (i, v) in params.iter().enumerate() {
            let central = |h: f64| -> Result<f64> { Ok((loss_at(h, i)? - loss_at(-h, i)?) / (2.0 * h)) };
            let fd = (4.0 * central(5e-4)? - central(1e-3)?) / 3.0;
            if let Some(e) = rel_err(g.wrt(*v), fd, 1e-6) {
                worst = worst.max(e);
            }
        }
    }
    Ok(worst)
}

fn cholesky(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            l[i][j] = if i == j { (a[i][i] - s).sqrt() } else { (a[i][j] - s) / l[j][j] };
        }
    }
    l
}

/// Largest gap between incremental and joint-Cholesky samples of five
/// points driven by the same normals.
pub fn sampler_equivalence(seed: u64) -> Result<f64> {
    let k = Kernel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<[f64; 2]> = (0..5).map(|_| [rng.gen(), rng.gen()]).collect();
    let z: Vec<f64> = (0..5).map(|_| rng.sample(StandardNormal)).collect();
    let mut f = GpSampleFunction::<f64>::new(k, 2, seed)?;
    let mut inc = Vec::new();
    for (p, z) in pts.iter().zip(&z) {
        inc.push(f.sample_next_with(&mut Plain, p, *z)?.value);
    }
    let gram: Vec<Vec<f64>> = (0..5)
        .map(|i| {
            (0..5)
                .map(|j| {
                    let v = k.eval(&pts[i], &pts[j]).expect("matching dims");
                    if i == j {
                        v + k.noise_variance + crate::gp::JITTER_LADDER[0]
                    } else {
                        v
                    }
                })
                .collect()
        })
        .collect();
    let l = cholesky(&gram);
    Ok((0..5).map(|i| ((0..=i).map(|j| l[i][j] * z[j]).sum::<f64>() - inc[i]).abs()).fold(0.0, f64::max))
}

/// Worst covariance error in MC standard errors over `draws` lazy samples
/// at four fixed 1d points.
pub fn sampler_covariance(draws: usize, seed: u64) -> Result<f64> {
    let k = Kernel::default();
    let pts = [[0.1], [0.25], [0.6], [0.62]];
    let mut samples = Vec::with_capacity(draws);
    for s in 0..draws {
        let mut f = GpSampleFunction::<f64>::new(k, 1, seed.wrapping_add(s as u64))?;
        let mut d = [0.0; 4];
        for (v, p) in d.iter_mut().zip(&pts) {
            *v = f.sample(p)?;
        }
        samples.push(d);
    }
    let n = draws as f64;
    let mut worst: f64 = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            let prods: Vec<f64> = samples.iter().map(|d| d[i] * d[j]).collect();
            let mean = prods.iter().sum::<f64>() / n;
            let var = prods.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let mut truth = k.eval(&pts[i], &pts[j])?;
            if i == j {
                truth += k.noise_variance;
            }
            worst = worst.max((mean - truth).abs() / (var / n).sqrt());
        }
    }
    Ok(worst)
}

/// Worst |EI − MC| in MC standard errors over `triples` random
/// `(μ, s, best)`.
pub fn ei_monte_carlo(triples: usize, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..triples {
        let mu = rng.gen_range(-2.0..2.0);
        let s = rng.gen_range(0.05..2.0);
        // Standardized gaps beyond ±2.5 leave too few improving draws.
        let best = mu + s * rng.gen_range(-2.5..2.5);
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..samples {
            let y = mu + s * rng.sample::<f64, _>(StandardNormal);
            let v = (best - y).max(0.0);
            sum += v;
            sq += v * v;
        }
        let n = samples as f64;
        let mean = sum / n;
        let se = ((sq / n - mean * mean) * n / (n - 1.0) / n).sqrt();
        worst = worst.max((expected_improvement_value(mu, s * s, best) - mean).abs() / se);
    }
    worst
}

/// Identity-instance value at each benchmark's known minimizer minus the
/// known minimum.
pub fn benchmark_minima() -> Vec<(AnalyticBenchmark, f64, f64)> {
    let pi = std::f64::consts::PI;
    let cases = [
        (AnalyticBenchmark::Branin, vec![(pi + 5.0) / 15.0, 2.275 / 15.0], 0.397887, 1e-5),
        (AnalyticBenchmark::GoldsteinPrice, vec![0.5, 0.25], 3.0, 1e-9),
        (AnalyticBenchmark::Hartmann3, vec![0.114614, 0.555649, 0.852547], -3.86278, 1e-4),
        (AnalyticBenchmark::Hartmann6, vec![0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573], -3.32237, 1e-4),
    ];
    cases
        .into_iter()
        .map(|(b, u, min, tol)| (b, (PerturbedInstance::identity(b).eval(&u) - min).abs(), tol))
        .collect()
}

/// Whether a one-worker, jitter-free parallel run equals the sequential
/// run bit for bit.
pub fn parallel_single_worker_matches(seed: u64) -> Result<bool> {
    let policy = LstmPolicy::new(2, 8, seed)?;
    let bowl = |x: &[f64]| (x[0] - 0.3).powi(2) + (x[1] - 0.7).powi(2);
    let seq = propose_eval(&policy, &mut FnObjective::new(SearchSpace::unit(2), bowl), 15, Clock::Off)?;
    let par = run_parallel(&policy, &mut FnObjective::new(SearchSpace::unit(2), bowl), 1, 15, RuntimeJitter::none(), seed, Clock::Off)?;
    Ok(seq.records.iter().zip(&par.records).all(|(a, b)| {
        a.y.to_bits() == b.y.to_bits() && a.x.iter().zip(&b.x).all(|(p, q)| p.to_bits() == q.to_bits())
    }) && seq.len() == par.len())
}

/// Every check with its tolerance.
pub fn run_all(seed: u64) -> Result<Vec<CheckResult>> {
    let mut out = vec![
        CheckResult::at_most("lstm_step_gradient", lstm_step_gradient(seed)?, 1e-4),
        CheckResult::at_most("posterior_gradient", posterior_gradient(seed)?, 1e-4),
        CheckResult::at_most("rollout_gradient", rollout_gradient(seed)?, 1e-4),
        CheckResult::at_most("sampler_equivalence", sampler_equivalence(seed)?, 1e-8),
        CheckResult::at_most("sampler_covariance_z", sampler_covariance(20_000, seed)?, 5.0),
        CheckResult::at_most("ei_monte_carlo_z", ei_monte_carlo(20, 1_000_000, seed), 3.0),
    ];
    for (b, err, tol) in benchmark_minima() {
        out.push(CheckResult::at_most(&format!("{}_minimum", b.name()), err, tol));
    }
    let same = parallel_single_worker_matches(seed)?;
    out.push(CheckResult { name: "parallel_single_worker".into(), measured: f64::from(u8::from(!same)), tolerance: 0.0, passed: same });
    Ok(out)
}

pub fn write_check_csv(results: &[CheckResult], path: &std::path::Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["check", "measured", "tolerance", "passed"])?;
    for r in results {
        w.write_record([r.name.clone(), r.measured.to_string(), r.tolerance.to_string(), r.passed.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
