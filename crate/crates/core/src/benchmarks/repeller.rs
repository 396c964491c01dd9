//! A particle thrown through a field of repellers, scored by the discounted
//! reward collected along its path.

use serde::{Deserialize, Serialize};

use crate::objective::{Objective, ObjectiveError, ObservationScale};
use crate::policy::SearchSpace;
use crate::qmc::halton;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardBump {
    pub center: [f64; 2],
    pub width: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RepellerConfig {
    pub repellers: usize,
    pub gravity: f64,
    pub dt: f64,
    pub steps: usize,
    pub discount: f64,
    /// Distances below this are treated as this.
    pub floor: f64,
    pub start: [f64; 2],
    pub velocity: [f64; 2],
    pub reward: Vec<RewardBump>,
    /// Box for repeller locations, `[x_lo, x_hi, y_lo, y_hi]`.
    pub location_box: [f64; 4],
    pub max_strength: f64,
}

impl Default for RepellerConfig {
    fn default() -> Self {
        RepellerConfig {
            repellers: 2,
            gravity: -9.8,
            dt: 0.05,
            steps: 100,
            discount: 0.99,
            floor: 0.05,
            start: [-4.0, 0.0],
            velocity: [4.0, 9.0],
            reward: vec![
                RewardBump { center: [2.0, 6.0], width: 1.0, weight: 1.0 },
                RewardBump { center: [-2.5, 5.5], width: 0.8, weight: 0.6 },
                RewardBump { center: [4.0, 1.0], width: 1.2, weight: 0.8 },
            ],
            location_box: [-5.0, 5.0, -2.0, 8.0],
            max_strength: 30.0,
        }
    }
}

/// Particle position and velocity after each step.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub positions: Vec<[f64; 2]>,
    pub velocities: Vec<[f64; 2]>,
}

impl RepellerConfig {
    pub fn validate(&self) -> Result<(), String> {
        let ok = self.repellers > 0
            && self.dt > 0.0
            && self.steps > 0
            && (0.0..=1.0).contains(&self.discount)
            && self.floor > 0.0
            && self.max_strength >= 0.0
            && self.location_box[0] < self.location_box[1]
            && self.location_box[2] < self.location_box[3]
            && self.reward.iter().all(|b| b.width > 0.0 && b.weight.is_finite());
        if ok {
            Ok(())
        } else {
            Err(format!("invalid repeller configuration {self:?}"))
        }
    }

    pub fn dim(&self) -> usize {
        3 * self.repellers
    }

    /// Parameter box: `(x, y, strength)` per repeller.
    pub fn space(&self) -> SearchSpace {
        let b = self.location_box;
        let lower = (0..self.repellers).flat_map(|_| [b[0], b[2], 0.0]).collect();
        let upper = (0..self.repellers).flat_map(|_| [b[1], b[3], self.max_strength]).collect();
        SearchSpace::new(lower, upper, vec![false; self.dim()]).expect("validated box")
    }

    pub fn reward_at(&self, p: [f64; 2]) -> f64 {
        self.reward
            .iter()
            .map(|b| {
                let d2 = (p[0] - b.center[0]).powi(2) + (p[1] - b.center[1]).powi(2);
                b.weight * (-0.5 * d2 / (b.width * b.width)).exp()
            })
            .sum()
    }

    /// Explicit Euler: position advances with the old velocity.
    pub fn simulate(&self, params: &[f64]) -> Path {
        assert_eq!(params.len(), self.dim(), "repeller parameter count");
        let mut p = self.start;
        let mut v = self.velocity;
        let mut path = Path { positions: Vec::with_capacity(self.steps), velocities: Vec::with_capacity(self.steps) };
        for _ in 0..self.steps {
            let mut a = [0.0, self.gravity];
            for r in params.chunks_exact(3) {
                let dx = p[0] - r[0];
                let dy = p[1] - r[1];
                let dist2 = (dx * dx + dy * dy).max(self.floor * self.floor);
                a[0] += r[2] * dx / dist2;
                a[1] += r[2] * dy / dist2;
            }
            p = [p[0] + self.dt * v[0], p[1] + self.dt * v[1]];
            v = [v[0] + self.dt * a[0], v[1] + self.dt * a[1]];
            path.positions.push(p);
            path.velocities.push(v);
        }
        path
    }

    /// Negated discounted reward.
    pub fn loss(&self, params: &[f64]) -> f64 {
        let mut total = 0.0;
        let mut w = 1.0;
        for p in self.simulate(params).positions {
            total += w * self.reward_at(p);
            w *= self.discount;
        }
        -total
    }

    /// Smallest loss any parameters could reach.
    pub fn loss_lower_bound(&self) -> f64 {
        let peak: f64 = self.reward.iter().map(|b| b.weight.max(0.0)).sum();
        let discounted: f64 = (0..self.steps).map(|k| self.discount.powi(k as i32)).sum();
        -peak * discounted
    }

    /// Reflection through the vertical axis `x = 0`.
    pub fn mirrored(&self) -> Self {
        let b = self.location_box;
        RepellerConfig {
            start: [-self.start[0], self.start[1]],
            velocity: [-self.velocity[0], self.velocity[1]],
            reward: self
                .reward
                .iter()
                .map(|r| RewardBump { center: [-r.center[0], r.center[1]], ..*r })
                .collect(),
            location_box: [-b[1], -b[0], b[2], b[3]],
            ..self.clone()
        }
    }
}

/// Repeller loss as an objective over the native parameter box.
#[derive(Debug, Clone)]
pub struct RepellerObjective {
    pub config: RepellerConfig,
    space: SearchSpace,
    scale: ObservationScale,
}

impl RepellerObjective {
    pub fn new(config: RepellerConfig) -> Result<Self, String> {
        config.validate()?;
        let space = config.space();
        let ys: Vec<f64> = (0..super::analytic::STANDARDIZATION_POINTS)
            .map(|i| config.loss(&space.from_unit(&halton(i, config.dim()))))
            .collect();
        Ok(RepellerObjective { scale: ObservationScale::standardizing(&ys), space, config })
    }
}

impl Objective for RepellerObjective {
    fn space(&self) -> &SearchSpace {
        &self.space
    }

    fn evaluate(&mut self, x: &[f64]) -> Result<f64, ObjectiveError> {
        if x.len() != self.config.dim() {
            return Err(ObjectiveError(format!("expected {} parameters, got {}", self.config.dim(), x.len())));
        }
        Ok(self.config.loss(x))
    }

    fn observation_scale(&self) -> ObservationScale {
        self.scale
    }

    fn name(&self) -> String {
        "repeller".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_params(cfg: &RepellerConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let u: Vec<f64> = (0..cfg.dim()).map(|_| rng.gen()).collect();
        cfg.space().from_unit(&u)
    }

    #[test]
    fn zero_strength_is_ballistic() {
        let cfg = RepellerConfig::default();
        let path = cfg.simulate(&[1.0, 2.0, 0.0, -3.0, 4.0, 0.0]);
        let (x0, y0) = (cfg.start[0], cfg.start[1]);
        let (vx, vy) = (cfg.velocity[0], cfg.velocity[1]);
        let (dt, g) = (cfg.dt, cfg.gravity);
        for (i, p) in path.positions.iter().enumerate() {
            let k = (i + 1) as f64;
            let y = y0 + k * dt * vy + g * dt * dt * k * (k - 1.0) / 2.0;
            let x = x0 + k * dt * vx;
            assert!((p[0] - x).abs() < 1e-9 && (p[1] - y).abs() < 1e-9, "step {k}: {p:?} vs ({x}, {y})");
        }
    }

    #[test]
    fn mirror_symmetry() {
        let cfg = RepellerConfig::default();
        let m = cfg.mirrored();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let p = random_params(&cfg, &mut rng);
            let q: Vec<f64> = p.chunks(3).flat_map(|r| [-r[0], r[1], r[2]]).collect();
            let (a, b) = (cfg.loss(&p), m.loss(&q));
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn repellers_push_away() {
        let cfg = RepellerConfig { steps: 1, ..RepellerConfig::default() };
        let with = cfg.simulate(&[-4.0, -1.0, 10.0, 0.0, 0.0, 0.0]);
        let without = cfg.simulate(&[0.0; 6]);
        assert!(with.velocities[0][1] > without.velocities[0][1]);
        let on_top = cfg.simulate(&[-4.0, 0.0, 30.0, -4.0, 0.0, 30.0]);
        assert!(on_top.velocities[0].iter().all(|v| v.is_finite()));
    }

    #[test]
    fn losses_respect_bounds() {
        let cfg = RepellerConfig::default();
        let lb = cfg.loss_lower_bound();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut best = f64::INFINITY;
        for _ in 0..10_000 {
            let l = cfg.loss(&random_params(&cfg, &mut rng));
            assert!(l.is_finite() && l >= lb && l <= 0.0);
            best = best.min(l);
        }
        // A short random search never beats the 10⁴-point oracle by much.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let short = (0..30).map(|_| cfg.loss(&random_params(&cfg, &mut rng))).fold(f64::INFINITY, f64::min);
        assert!(short >= best - 0.5 * best.abs(), "{short} vs {best}");
        assert!(best < cfg.loss(&[0.0, 0.0, 0.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn loss_is_locally_stable() {
        let cfg = RepellerConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..100 {
            let p = random_params(&cfg, &mut rng);
            let base = cfg.loss(&p);
            for i in 0..6 {
                let mut q = p.clone();
                q[i] += 1e-6;
                assert!((cfg.loss(&q) - base).abs() < 1e-2, "param {i} at {p:?}");
            }
        }
    }

    #[test]
    fn objective_checks_arity_and_determinism() {
        let mut o = RepellerObjective::new(RepellerConfig::default()).unwrap();
        assert!(o.evaluate(&[0.0; 5]).is_err());
        let x = [1.0, 2.0, 3.0, -1.0, 4.0, 5.0];
        assert_eq!(o.evaluate(&x).unwrap().to_bits(), o.evaluate(&x).unwrap().to_bits());
        assert_eq!(o.space().dim(), 6);
        assert!(RepellerObjective::new(RepellerConfig { dt: 0.0, ..RepellerConfig::default() }).is_err());
    }
}
