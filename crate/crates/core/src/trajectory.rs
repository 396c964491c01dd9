//! One optimization episode: queries, observations and timing.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

/// Whether proposal timings are measured. `Off` records zero so outputs are
/// reproducible byte for byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Clock {
    #[default]
    Wall,
    Off,
}

impl Clock {
    pub fn stopwatch(self) -> Stopwatch {
        Stopwatch(match self {
            Clock::Wall => Some(Instant::now()),
            Clock::Off => None,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Stopwatch(Option<Instant>);

impl Stopwatch {
    pub fn ns(&self) -> u64 {
        self.0.map_or(0, |t| t.elapsed().as_nanos() as u64)
    }
}

/// Bookkeeping for asynchronous episodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParallelInfo {
    pub worker: usize,
    pub issue_idx: usize,
    pub complete_idx: usize,
    pub sim_time: f64,
    /// Proposed from a fresh slot (`o = 0`). Not written to CSV.
    pub fresh: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    /// Evaluated point in native coordinates.
    pub x: Vec<f64>,
    pub y: f64,
    /// Wall-clock nanoseconds spent producing this proposal, objective
    /// excluded.
    pub wall_ns: u64,
    pub parallel: Option<ParallelInfo>,
}

/// Records in issue order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub dim: usize,
    pub records: Vec<Record>,
}

impl Trajectory {
    pub fn new(dim: usize) -> Self {
        Trajectory { dim, records: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, record: Record) {
        debug_assert_eq!(record.x.len(), self.dim);
        self.records.push(record);
    }

    pub fn values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.y).collect()
    }

    /// `m_t = min_{i ≤ t} y_i`.
    pub fn min_observed(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.records
            .iter()
            .map(|r| {
                best = best.min(r.y);
                best
            })
            .collect()
    }

    pub fn best(&self) -> Option<&Record> {
        self.records.iter().min_by(|a, b| a.y.total_cmp(&b.y))
    }

    pub fn wall_ns(&self) -> Vec<u64> {
        self.records.iter().map(|r| r.wall_ns).collect()
    }

    pub fn is_parallel(&self) -> bool {
        self.records.first().is_some_and(|r| r.parallel.is_some())
    }

    /// Zeros timing columns so output depends only on the inputs.
    pub fn clear_wall_clock(&mut self) {
        for r in &mut self.records {
            r.wall_ns = 0;
        }
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["step".to_string()];
        h.extend((1..=self.dim).map(|i| format!("x_{i}")));
        h.extend(["y", "min_so_far", "wall_ns"].map(String::from));
        if self.is_parallel() {
            h.extend(["worker_id", "issue_idx", "complete_idx", "sim_time"].map(String::from));
        }
        h
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header())?;
        let mins = self.min_observed();
        let parallel = self.is_parallel();
        for (t, (r, m)) in self.records.iter().zip(mins).enumerate() {
            let mut row = vec![(t + 1).to_string()];
            row.extend(r.x.iter().map(|v| v.to_string()));
            row.push(r.y.to_string());
            row.push(m.to_string());
            row.push(r.wall_ns.to_string());
            if parallel {
                let p = r.parallel.expect("parallel trajectories annotate every record");
                row.push(p.worker.to_string());
                row.push(p.issue_idx.to_string());
                row.push(p.complete_idx.to_string());
                row.push(p.sim_time.to_string());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}
