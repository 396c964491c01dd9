//! Objectives precomputed on a complete factorial grid.
//!
//! The file is CSV with a header row; every column but the last is a
//! parameter and the last holds the objective value.

use std::collections::HashMap;
use std::path::Path;

use thiserror::Error;

use crate::objective::{Objective, ObjectiveError, ObservationScale};
use crate::policy::SearchSpace;

#[derive(Debug, Error)]
pub enum TabularError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("grid is incomplete: no row for {0:?}")]
    Missing(Vec<f64>),
    #[error("{0}")]
    Empty(String),
}

#[derive(Debug, Clone)]
pub struct TabularObjective {
    name: String,
    /// Sorted distinct settings per dimension.
    levels: Vec<Vec<f64>>,
    /// Values in row-major order over `levels`, first dimension slowest.
    values: Vec<f64>,
    space: SearchSpace,
    scale: ObservationScale,
}

fn malformed(line: u64, message: impl Into<String>) -> TabularError {
    TabularError::Malformed { line, message: message.into() }
}

impl TabularObjective {
    pub fn load(path: &Path) -> Result<Self, TabularError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| TabularError::Io { path: path.display().to_string(), source })?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "tabular".into());
        Self::parse(&name, &text)
    }

    pub fn parse(name: &str, text: &str) -> Result<Self, TabularError> {
        let mut reader = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(text.as_bytes());
        let width = reader.headers().map_err(|e| malformed(1, e.to_string()))?.len();
        if width < 2 {
            return Err(malformed(1, "need at least one parameter column and a value column"));
        }
        let dim = width - 1;
        let mut rows: Vec<(u64, Vec<f64>, f64)> = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| {
                malformed(e.position().map(|p| p.line()).unwrap_or(0), e.to_string())
            })?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            if record.len() != width {
                return Err(malformed(line, format!("expected {width} fields, found {}", record.len())));
            }
            let mut nums = Vec::with_capacity(width);
            for field in record.iter() {
                let v: f64 = field.parse().map_err(|_| malformed(line, format!("not a number: {field:?}")))?;
                if !v.is_finite() {
                    return Err(malformed(line, format!("non-finite value {field:?}")));
                }
                nums.push(v);
            }
            let value = nums.pop().expect("width ≥ 2");
            rows.push((line, nums, value));
        }
        if rows.is_empty() {
            return Err(TabularError::Empty("table has no rows".into()));
        }
        let mut levels: Vec<Vec<f64>> = vec![Vec::new(); dim];
        for (_, x, _) in &rows {
            for (l, v) in levels.iter_mut().zip(x) {
                l.push(*v);
            }
        }
        for l in &mut levels {
            l.sort_by(f64::total_cmp);
            l.dedup();
        }
        let total: usize = levels.iter().map(Vec::len).product();
        let mut values = vec![None; total];
        let index_of: Vec<HashMap<u64, usize>> = levels
            .iter()
            .map(|l| l.iter().enumerate().map(|(i, v)| (v.to_bits(), i)).collect())
            .collect();
        for (line, x, value) in &rows {
            let mut flat = 0;
            for (d, v) in x.iter().enumerate() {
                flat = flat * levels[d].len() + index_of[d][&v.to_bits()];
            }
            if values[flat].is_some() {
                return Err(malformed(*line, format!("duplicate setting {x:?}")));
            }
            values[flat] = Some(*value);
        }
        if let Some(flat) = values.iter().position(Option::is_none) {
            let mut rem = flat;
            let mut x = vec![0.0; dim];
            for d in (0..dim).rev() {
                x[d] = levels[d][rem % levels[d].len()];
                rem /= levels[d].len();
            }
            return Err(TabularError::Missing(x));
        }
        let values: Vec<f64> = values.into_iter().map(|v| v.expect("checked complete")).collect();
        let lower = levels.iter().map(|l| l[0]).collect();
        let upper = levels.iter().map(|l| l[l.len() - 1]).collect();
        let space = SearchSpace::new(lower, upper, vec![false; dim])
            .map_err(|e| TabularError::Empty(e.to_string()))?;
        Ok(TabularObjective { name: name.into(), scale: ObservationScale::standardizing(&values), levels, values, space })
    }

    pub fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }

    /// Nearest grid setting per dimension, ties toward the smaller one.
    pub fn snap(&self, x: &[f64]) -> Vec<usize> {
        self.levels
            .iter()
            .zip(x)
            .map(|(l, &v)| {
                let hi = l.partition_point(|&g| g < v);
                if hi == 0 {
                    0
                } else if hi == l.len() {
                    l.len() - 1
                } else if v - l[hi - 1] <= l[hi] - v {
                    hi - 1
                } else {
                    hi
                }
            })
            .collect()
    }

    pub fn lookup(&self, x: &[f64]) -> f64 {
        let idx = self.snap(x);
        let flat = idx.iter().zip(&self.levels).fold(0, |acc, (i, l)| acc * l.len() + i);
        self.values[flat]
    }
}

impl Objective for TabularObjective {
    fn space(&self) -> &SearchSpace {
        &self.space
    }

    fn evaluate(&mut self, x: &[f64]) -> Result<f64, ObjectiveError> {
        if x.len() != self.levels.len() {
            return Err(ObjectiveError(format!("expected {} coordinates, got {}", self.levels.len(), x.len())));
        }
        Ok(self.lookup(x))
    }

    fn observation_scale(&self) -> ObservationScale {
        self.scale
    }

    fn name(&self) -> String {
        self.name.clone()
    }
}
