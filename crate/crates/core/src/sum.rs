//! Deterministic summation.
//!
//! All accumulations that feed reports go through pairwise tree summation over
//! slices in a fixed order. The result depends only on the slice contents, never
//! on thread scheduling, and the tree shape keeps rounding error at O(log n)
//! instead of O(n) for naive left-to-right sums.

use num_complex::Complex64;

const PAIRWISE_BASE: usize = 8;

/// Pairwise tree sum of a real slice.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= PAIRWISE_BASE {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        s
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Pairwise tree sum of a complex slice.
pub fn pairwise_sum_complex(xs: &[Complex64]) -> Complex64 {
    if xs.len() <= PAIRWISE_BASE {
        let mut s = Complex64::new(0.0, 0.0);
        for &x in xs {
            s += x;
        }
        s
    } else {
        let mid = xs.len() / 2;
        pairwise_sum_complex(&xs[..mid]) + pairwise_sum_complex(&xs[mid..])
    }
}
