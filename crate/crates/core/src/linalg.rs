//! Small dense-vector helpers shared by the simulator.
//!
//! Iterates are plain `Vec<f64>` of low dimension; everything here is written
//! so that the floating-point operation order is fixed and reproducible.

/// Pairwise (cascade) summation in index-ascending order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        len => {
            let mid = len / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Component-wise mean of a set of equal-length vectors using [`pairwise_sum`]
/// per coordinate.
pub fn mean_of(vectors: &[Vec<f64>]) -> Vec<f64> {
    let count = vectors.len();
    assert!(count > 0, "mean of an empty set");
    let dim = vectors[0].len();
    let mut column = vec![0.0; count];
    (0..dim)
        .map(|c| {
            for (slot, v) in column.iter_mut().zip(vectors) {
                *slot = v[c];
            }
            pairwise_sum(&column) / count as f64
        })
        .collect()
}

/// Mean and standard error of the mean. A single observation has zero
/// standard error.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = pairwise_sum(xs) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let centered: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&centered) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}
