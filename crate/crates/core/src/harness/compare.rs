//! Paired optimizer comparisons on a shared set of objective instances.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::{mean_stderr, PairedStats, Z95};
use super::{ObjectiveFamily, OptimizerSpec};
use crate::baselines::Optimizer;
use crate::seeds::{derive, stream};
use crate::trajectory::Clock;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerEntry {
    pub name: String,
    pub optimizer: OptimizerSpec,
    /// Run on the first this-many instances only.
    pub functions: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    #[serde(default)]
    pub seed: u64,
    pub functions: usize,
    pub horizon: usize,
    pub objective: ObjectiveFamily,
    pub optimizers: Vec<OptimizerEntry>,
    #[serde(default)]
    pub clock: Clock,
}

impl CompareConfig {
    pub fn resolve(&mut self, base: &Path) {
        self.objective.resolve(base);
        for o in &mut self.optimizers {
            o.optimizer.resolve(base);
        }
    }

    pub fn run(&self) -> Result<CompareReport> {
        let mut opts = Vec::with_capacity(self.optimizers.len());
        for e in &self.optimizers {
            opts.push((e.name.clone(), e.optimizer.build(&e.name)?, e.functions.unwrap_or(self.functions).min(self.functions)));
        }
        compare(&opts, &self.objective, self.horizon, self.seed, self.clock)
    }
}

/// One optimizer on one instance. A failed run has an empty curve and an
/// error message.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub optimizer: String,
    pub objective: String,
    pub function: usize,
    pub seed: u64,
    pub curve: Vec<f64>,
    pub wall_ns: Vec<u64>,
    pub error: Option<String>,
}

impl RunRecord {
    pub fn final_value(&self) -> Option<f64> {
        self.curve.last().copied()
    }
}

/// Pointwise mean min-observed curve with a 95% normal half-width.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateCurve {
    pub optimizer: String,
    pub n: usize,
    pub failures: usize,
    pub mean: Vec<f64>,
    /// `None` when fewer than two runs succeeded.
    pub half_width: Option<Vec<f64>>,
}

impl AggregateCurve {
    /// Aggregates successful runs in the order given.
    pub fn from_runs(optimizer: &str, runs: &[&RunRecord]) -> Self {
        let ok: Vec<&RunRecord> = runs.iter().copied().filter(|r| r.error.is_none()).collect();
        let failures = runs.len() - ok.len();
        let len = ok.iter().map(|r| r.curve.len()).min().unwrap_or(0);
        let mut mean = Vec::with_capacity(len);
        let mut half = Vec::with_capacity(len);
        for t in 0..len {
            let column: Vec<f64> = ok.iter().map(|r| r.curve[t]).collect();
            let (m, se) = mean_stderr(&column);
            mean.push(m);
            half.push(se.map(|s| Z95 * s));
        }
        let half_width = if ok.len() >= 2 { Some(half.into_iter().map(|h| h.unwrap_or(0.0)).collect()) } else { None };
        AggregateCurve { optimizer: optimizer.into(), n: ok.len(), failures, mean, half_width }
    }
}

/// Paired final-step comparison of two optimizers.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedComparison {
    pub a: String,
    pub b: String,
    /// `(function, a − b)` at the last step, for instances where both ran.
    pub deltas: Vec<(usize, f64)>,
    pub stats: PairedStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub horizon: usize,
    pub runs: Vec<RunRecord>,
    pub aggregates: Vec<AggregateCurve>,
    pub paired: Vec<PairedComparison>,
}

impl CompareReport {
    fn build(horizon: usize, names: &[String], runs: Vec<RunRecord>) -> Self {
        let aggregates = names
            .iter()
            .map(|n| {
                let rs: Vec<&RunRecord> = runs.iter().filter(|r| &r.optimizer == n).collect();
                AggregateCurve::from_runs(n, &rs)
            })
            .collect();
        let mut paired = Vec::new();
        for (i, a) in names.iter().enumerate() {
            for b in &names[i + 1..] {
                paired.push(paired_comparison(&runs, a, b));
            }
        }
        CompareReport { horizon, runs, aggregates, paired }
    }

    pub fn aggregate(&self, optimizer: &str) -> Option<&AggregateCurve> {
        self.aggregates.iter().find(|a| a.optimizer == optimizer)
    }

    /// Paired comparison oriented as `a − b`.
    pub fn paired(&self, a: &str, b: &str) -> Option<PairedComparison> {
        self.paired.iter().find(|p| p.a == a && p.b == b).cloned().or_else(|| {
            self.paired.iter().find(|p| p.a == b && p.b == a).map(|_| paired_comparison(&self.runs, a, b))
        })
    }

    /// Writes `aggregate.csv`, `runs.csv`, `paired.csv` and
    /// `paired_summary.csv` into `dir`.
    pub fn write_csvs(&self, dir: &Path) -> Result<Vec<String>> {
        let mut w = csv::Writer::from_path(dir.join("aggregate.csv"))?;
        w.write_record(["optimizer", "step", "n", "failures", "mean", "ci_half_width"])?;
        for a in &self.aggregates {
            if a.mean.is_empty() {
                w.write_record([a.optimizer.clone(), "0".into(), a.n.to_string(), a.failures.to_string(), String::new(), String::new()])?;
            }
            for (t, m) in a.mean.iter().enumerate() {
                let h = a.half_width.as_ref().map(|h| h[t].to_string()).unwrap_or_default();
                w.write_record([a.optimizer.clone(), (t + 1).to_string(), a.n.to_string(), a.failures.to_string(), m.to_string(), h])?;
            }
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("runs.csv"))?;
        w.write_record(["optimizer", "objective", "function", "seed", "step", "min_so_far", "wall_ns", "error"])?;
        for r in &self.runs {
            let head = [r.optimizer.clone(), r.objective.clone(), r.function.to_string(), r.seed.to_string()];
            match &r.error {
                Some(e) => {
                    w.write_record(head.iter().cloned().chain(["0".into(), String::new(), String::new(), e.clone()]))?;
                }
                None => {
                    for (t, (m, ns)) in r.curve.iter().zip(&r.wall_ns).enumerate() {
                        w.write_record(
                            head.iter().cloned().chain([(t + 1).to_string(), m.to_string(), ns.to_string(), String::new()]),
                        )?;
                    }
                }
            }
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("paired.csv"))?;
        w.write_record(["optimizer_a", "optimizer_b", "function", "delta_final"])?;
        for p in &self.paired {
            for (f, d) in &p.deltas {
                w.write_record([p.a.clone(), p.b.clone(), f.to_string(), d.to_string()])?;
            }
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("paired_summary.csv"))?;
        w.write_record(["optimizer_a", "optimizer_b", "n", "mean_a", "mean_b", "mean_delta", "stderr", "a_lower"])?;
        for p in &self.paired {
            let s = p.stats;
            w.write_record([
                p.a.clone(),
                p.b.clone(),
                s.n.to_string(),
                s.mean_a.to_string(),
                s.mean_b.to_string(),
                s.mean_diff.to_string(),
                s.stderr.to_string(),
                s.a_lower().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(["aggregate.csv", "runs.csv", "paired.csv", "paired_summary.csv"].map(String::from).to_vec())
    }
}

fn paired_comparison(runs: &[RunRecord], a: &str, b: &str) -> PairedComparison {
    let finals = |name: &str| -> BTreeMap<usize, f64> {
        runs.iter().filter(|r| r.optimizer == name).filter_map(|r| Some((r.function, r.final_value()?))).collect()
    };
    let fa = finals(a);
    let fb = finals(b);
    let mut deltas = Vec::new();
    let (mut va, mut vb) = (Vec::new(), Vec::new());
    for (f, x) in &fa {
        if let Some(y) = fb.get(f) {
            deltas.push((*f, x - y));
            va.push(*x);
            vb.push(*y);
        }
    }
    PairedComparison { a: a.into(), b: b.into(), deltas, stats: PairedStats::new(&va, &vb) }
}

/// Runs every optimizer on instances `0..n` of `family` (its own `n`), all
/// optimizers sharing instance `i` and run seed `i`.
pub fn compare(
    optimizers: &[(String, Arc<dyn Optimizer>, usize)],
    family: &ObjectiveFamily,
    horizon: usize,
    seed: u64,
    clock: Clock,
) -> Result<CompareReport> {
    if horizon == 0 {
        return Err(Error::Invalid("horizon must be positive".into()));
    }
    let names: Vec<String> = optimizers.iter().map(|o| o.0.clone()).collect();
    for (i, n) in names.iter().enumerate() {
        if names[..i].contains(n) {
            return Err(Error::Invalid(format!("duplicate optimizer name {n:?}")));
        }
    }
    let jobs: Vec<(usize, usize)> =
        optimizers.iter().enumerate().flat_map(|(o, (_, _, n))| (0..*n).map(move |f| (o, f))).collect();
    let objective_id = family.id();
    let runs: Vec<Result<RunRecord>> = jobs
        .par_iter()
        .map(|&(o, f)| {
            let (name, opt, _) = &optimizers[o];
            let mut objective = family.instance(seed, f)?;
            let run_seed = derive(seed, stream::OPTIMIZER, f as u64);
            let mut record = RunRecord {
                optimizer: name.clone(),
                objective: objective_id.clone(),
                function: f,
                seed: run_seed,
                curve: Vec::new(),
                wall_ns: Vec::new(),
                error: None,
            };
            match opt.optimize(objective.as_mut(), horizon, run_seed, clock) {
                Ok(t) if t.len() == horizon => {
                    record.curve = t.min_observed();
                    record.wall_ns = t.wall_ns();
                }
                Ok(t) => record.error = Some(format!("trajectory has {} of {horizon} steps", t.len())),
                Err(e) => record.error = Some(e.to_string()),
            }
            Ok(record)
        })
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(CompareReport::build(horizon, &names, runs))
}

/// Reads `runs.csv` back into run records.
pub fn read_runs_csv(path: &Path) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut runs: Vec<RunRecord> = Vec::new();
    let parse_err = |line: u64, what: &str| Error::Invalid(format!("{}: line {line}: bad {what}", path.display()));
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let function: usize = rec[2].parse().map_err(|_| parse_err(line, "function"))?;
        let seed: u64 = rec[3].parse().map_err(|_| parse_err(line, "seed"))?;
        let step: usize = rec[4].parse().map_err(|_| parse_err(line, "step"))?;
        let continues = runs
            .last()
            .is_some_and(|l| l.optimizer == rec[0] && l.function == function && l.error.is_none() && step == l.curve.len() + 1 && step > 1);
        if !continues {
            runs.push(RunRecord {
                optimizer: rec[0].into(),
                objective: rec[1].into(),
                function,
                seed,
                curve: Vec::new(),
                wall_ns: Vec::new(),
                error: if step == 0 { Some(rec[7].into()) } else { None },
            });
        }
        if step > 0 {
            let last = runs.last_mut().expect("pushed above");
            last.curve.push(rec[5].parse().map_err(|_| parse_err(line, "min_so_far"))?);
            last.wall_ns.push(rec[6].parse().map_err(|_| parse_err(line, "wall_ns"))?);
        }
    }
    Ok(runs)
}

/// Reads `aggregate.csv` back into curves.
pub fn read_aggregate_csv(path: &Path) -> Result<Vec<AggregateCurve>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out: Vec<AggregateCurve> = Vec::new();
    let bad = |what: &str| Error::Invalid(format!("{}: bad {what}", path.display()));
    for rec in r.records() {
        let rec = rec?;
        let step: usize = rec[1].parse().map_err(|_| bad("step"))?;
        if step <= 1 {
            out.push(AggregateCurve {
                optimizer: rec[0].into(),
                n: rec[2].parse().map_err(|_| bad("n"))?,
                failures: rec[3].parse().map_err(|_| bad("failures"))?,
                mean: Vec::new(),
                half_width: if rec[5].is_empty() { None } else { Some(Vec::new()) },
            });
        }
        if step == 0 {
            out.last_mut().expect("pushed above").half_width = None;
            continue;
        }
        let a = out.last_mut().ok_or_else(|| bad("first row"))?;
        a.mean.push(rec[4].parse().map_err(|_| bad("mean"))?);
        if let Some(h) = &mut a.half_width {
            h.push(rec[5].parse().map_err(|_| bad("ci_half_width"))?);
        }
    }
    Ok(out)
}
