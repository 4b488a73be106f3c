use super::data::{Dataset, Sample};
use super::loss::{empirical_risk_unchecked, project_in_place, LossKind, LossSpec};
use super::ProblemError;
use crate::linalg::{dist, norm, pairwise_sum};
use nalgebra::{DMatrix, DVector};

const LS_TOL: f64 = 1e-10;
const STATIONARITY_TOL: f64 = 1e-8;
const MAX_ITERS: usize = 1_000_000;

fn design(samples: &[Sample]) -> (DMatrix<f64>, DVector<f64>) {
    let n = samples.len();
    let d = samples[0].features.len();
    let x = DMatrix::from_fn(n, d, |i, j| samples[i].features[j]);
    let y = DVector::from_iterator(n, samples.iter().map(|s| s.label));
    (x, y)
}

fn full_gradient(loss: &LossSpec, w: &[f64], samples: &[Sample]) -> Vec<f64> {
    let d = w.len();
    let mut per = vec![vec![0.0; d]; samples.len()];
    for (g, z) in per.iter_mut().zip(samples) {
        loss.grad_into(w, z, g);
    }
    let mut col = vec![0.0; samples.len()];
    (0..d)
        .map(|c| {
            for (slot, g) in col.iter_mut().zip(&per) {
                *slot = g[c];
            }
            pairwise_sum(&col) / samples.len() as f64
        })
        .collect()
}

/// Projected gradient descent with fixed step `1/beta`. Stops once the
/// gradient-mapping norm drops below `tol`.
fn projected_gd(
    loss: &LossSpec,
    samples: &[Sample],
    start: Vec<f64>,
    beta: f64,
    tol: f64,
) -> Result<Vec<f64>, ProblemError> {
    let mut w = start;
    project_in_place(&mut w, loss.radius);
    if beta <= 0.0 {
        return Ok(w);
    }
    let step = 1.0 / beta;
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_ITERS {
        let g = full_gradient(loss, &w, samples);
        let mut next: Vec<f64> = w.iter().zip(&g).map(|(a, b)| a - step * b).collect();
        project_in_place(&mut next, loss.radius);
        residual = dist(&w, &next) / step;
        w = next;
        if residual <= tol {
            return Ok(w);
        }
    }
    Err(ProblemError::Convergence {
        residual,
        iterations: MAX_ITERS,
    })
}

fn largest_singular_sq(x: &DMatrix<f64>) -> f64 {
    let s = x.clone().svd(false, false).singular_values;
    s.iter().fold(0.0f64, |a, &b| a.max(b)).powi(2)
}

/// Projected subgradient method for the hinge loss with a dual certificate.
///
/// The ball-constrained problem has dual `max_{α∈[0,1]^N} mean(α) − R‖Gα‖`
/// with `Gα = (1/N)Σ α_i y_i x_i`; the step-weighted average of the active
/// indicators is dual feasible, so `P(best) − D(ᾱ)` bounds the suboptimality.
fn hinge_subgradient(loss: &LossSpec, samples: &[Sample], d: usize) -> Result<Vec<f64>, ProblemError> {
    let n = samples.len();
    let r = loss.radius;
    let lip = samples.iter().map(|s| norm(&s.features)).fold(0.0, f64::max);
    let mut w = vec![0.0; d];
    let mut best = w.clone();
    let mut best_value = empirical_risk_unchecked(loss, &w, samples);
    let mut alpha_sum = vec![0.0; n];
    let mut weight_sum = 0.0;
    let mut gap = f64::INFINITY;
    if best_value == 0.0 || lip == 0.0 {
        return Ok(best);
    }
    for k in 1..=MAX_ITERS {
        let step = r / (lip * (k as f64).sqrt());
        let mut g = vec![0.0; d];
        for (i, z) in samples.iter().enumerate() {
            let margin = z.label * crate::linalg::dot(&w, &z.features);
            if margin < 1.0 {
                alpha_sum[i] += step;
                for (gc, x) in g.iter_mut().zip(&z.features) {
                    *gc -= z.label * x / n as f64;
                }
            }
        }
        weight_sum += step;
        for (wc, gc) in w.iter_mut().zip(&g) {
            *wc -= step * gc;
        }
        project_in_place(&mut w, r);
        let value = empirical_risk_unchecked(loss, &w, samples);
        if value < best_value {
            best_value = value;
            best.clone_from(&w);
        }
        if best_value == 0.0 {
            return Ok(best);
        }
        if k % 256 == 0 {
            let mut ga = vec![0.0; d];
            let mut mean_alpha = 0.0;
            for (a, z) in alpha_sum.iter().zip(samples) {
                let alpha = a / weight_sum;
                mean_alpha += alpha / n as f64;
                for (gc, x) in ga.iter_mut().zip(&z.features) {
                    *gc += alpha * z.label * x / n as f64;
                }
            }
            let dual = mean_alpha - r * norm(&ga);
            gap = best_value - dual;
            if gap <= STATIONARITY_TOL {
                return Ok(best);
            }
        }
    }
    Err(ProblemError::Convergence {
        residual: gap,
        iterations: MAX_ITERS,
    })
}

/// Reference empirical risk minimizer `w_S*` over the loss's ball.
///
/// Least squares starts from the SVD least-squares solution and refines by
/// projected gradient descent if that solution leaves the ball (tolerance
/// 1e-10). Logistic runs projected gradient descent to a gradient-mapping
/// norm of 1e-8. Hinge runs projected subgradient until the duality gap is
/// below 1e-8 or a zero-risk point is found.
pub fn erm_reference(loss: &LossSpec, data: &Dataset<Sample>) -> Result<Vec<f64>, ProblemError> {
    let samples = data.all();
    let d = samples[0].features.len();
    match loss.kind {
        LossKind::Zero => Ok(vec![0.0; d]),
        LossKind::LeastSquares => {
            let (x, y) = design(samples);
            let svd = x.clone().svd(true, true);
            let sol = svd
                .solve(&y, 1e-12)
                .map_err(|e| ProblemError::Unsupported(format!("least-squares solve failed: {e}")))?;
            let w: Vec<f64> = sol.iter().copied().collect();
            if norm(&w) <= loss.radius {
                return Ok(w);
            }
            let beta = largest_singular_sq(&x) / samples.len() as f64;
            projected_gd(loss, samples, w, beta, LS_TOL)
        }
        LossKind::Logistic => {
            let (x, _) = design(samples);
            let beta = largest_singular_sq(&x) / (4.0 * samples.len() as f64);
            projected_gd(loss, samples, vec![0.0; d], beta, STATIONARITY_TOL)
        }
        LossKind::Hinge => hinge_subgradient(loss, samples, d),
    }
}
