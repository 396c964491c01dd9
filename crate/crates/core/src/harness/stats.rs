//! Mean, standard error and paired differences.

/// Critical value of the two-sided 95% normal interval.
pub const Z95: f64 = 1.96;

/// Sample mean and standard error of the mean (`None` for fewer than two
/// values).
pub fn mean_stderr(xs: &[f64]) -> (f64, Option<f64>) {
    let n = xs.len() as f64;
    let mut sum = 0.0;
    for x in xs {
        sum += x;
    }
    let mean = sum / n;
    if xs.len() < 2 {
        return (mean, None);
    }
    let mut ss = 0.0;
    for x in xs {
        ss += (x - mean) * (x - mean);
    }
    (mean, Some((ss / (n - 1.0)).sqrt() / n.sqrt()))
}

/// Summary of `a_i − b_i` over matched pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedStats {
    pub n: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    pub mean_diff: f64,
    pub stderr: f64,
}

impl PairedStats {
    pub fn new(a: &[f64], b: &[f64]) -> Self {
        assert_eq!(a.len(), b.len(), "paired samples must match");
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        let (mean_diff, se) = mean_stderr(&d);
        PairedStats { n: a.len(), mean_a: mean_stderr(a).0, mean_b: mean_stderr(b).0, mean_diff, stderr: se.unwrap_or(f64::NAN) }
    }

    /// Difference over its standard error.
    pub fn z(&self) -> f64 {
        self.mean_diff / self.stderr
    }

    /// `a` is lower than `b` by more than 1.96 paired standard errors.
    pub fn a_lower(&self) -> bool {
        self.mean_diff < 0.0 && self.mean_diff.abs() > Z95 * self.stderr
    }
}
