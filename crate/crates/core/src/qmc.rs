//! Halton low-discrepancy points.

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

pub const MAX_DIM: usize = PRIMES.len();

/// Radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while index > 0 {
        r += f * (index % base) as f64;
        index /= base;
        f *= inv;
    }
    r
}

/// Point `index` of the Halton sequence (index 0 is skipped, so the first
/// point is not the origin).
pub fn halton(index: u64, dim: usize) -> Vec<f64> {
    assert!(dim <= MAX_DIM, "Halton sequence supports up to {MAX_DIM} dimensions");
    PRIMES[..dim].iter().map(|&b| radical_inverse(index + 1, b)).collect()
}

/// Halton point with a Cranley–Patterson rotation by `shift` (mod 1).
pub fn shifted_halton(index: u64, shift: &[f64]) -> Vec<f64> {
    halton(index, shift.len()).into_iter().zip(shift).map(|(h, s)| (h + s).fract()).collect()
}
