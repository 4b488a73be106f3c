//! Finite-state, time-homogeneous Markov chains that drive which local sample
//! each worker reads at every iteration.
//!
//! Only reversible (symmetric) families are constructed. For those the mixing
//! envelope `‖Π* − H^t‖_∞ ≤ n^{3/2} λ(H)^t` holds for every `t ≥ 0` with
//! `K_H = 0`, where `λ(H) = (max{|λ₂|, |λ_n|} + 1) / 2`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

/// Absolute tolerance used for stochasticity and symmetry checks.
pub const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error("invalid chain parameter: {0}")]
    Parameter(String),
    #[error("chain validation failed: {0}")]
    Validation(String),
    #[error("domain error: {0}")]
    Domain(String),
}

/// Chain family tag with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ChainKind {
    /// Every row is the uniform distribution.
    Uniform,
    /// Random walk on an n-cycle that stays put with probability `hold`.
    LazyCycle { hold: f64 },
    /// Two states that swap with probability `flip`.
    TwoState { flip: f64 },
}

/// Row-stochastic transition matrix `H`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    entries: DMatrix<f64>,
}

impl TransitionMatrix {
    /// Wraps a square matrix after checking entries lie in `[0, 1]` and every
    /// row sums to one.
    pub fn new(entries: DMatrix<f64>) -> Result<Self, ChainError> {
        let n = entries.nrows();
        if n == 0 || entries.ncols() != n {
            return Err(ChainError::Validation(format!(
                "transition matrix must be square and non-empty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        for i in 0..n {
            let mut sum = 0.0;
            for j in 0..n {
                let p = entries[(i, j)];
                if !(-STOCHASTIC_TOL..=1.0 + STOCHASTIC_TOL).contains(&p) || !p.is_finite() {
                    return Err(ChainError::Validation(format!(
                        "entry ({i},{j}) = {p} outside [0,1]"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(ChainError::Validation(format!(
                    "row {i} sums to {sum}, not 1"
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.n();
        (0..n).all(|i| {
            (0..i).all(|j| (self.entries[(i, j)] - self.entries[(j, i)]).abs() <= STOCHASTIC_TOL)
        })
    }

    /// Row-major rendering with full round-trip precision.
    pub fn to_csv(&self) -> String {
        matrix_to_csv(&self.entries)
    }
}

pub(crate) fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:?}", m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Builds one of the reversible chain families on `n` states.
pub fn build_chain(kind: ChainKind, n: usize) -> Result<TransitionMatrix, ChainError> {
    if n == 0 {
        return Err(ChainError::Parameter("state count n must be positive".into()));
    }
    let mut h = DMatrix::<f64>::zeros(n, n);
    match kind {
        ChainKind::Uniform => h.fill(1.0 / n as f64),
        ChainKind::LazyCycle { hold } => {
            if !(hold > 0.0 && hold < 1.0) {
                return Err(ChainError::Parameter(format!(
                    "lazy-cycle hold probability must lie in (0,1), got {hold}"
                )));
            }
            let step = (1.0 - hold) / 2.0;
            for i in 0..n {
                h[(i, i)] += hold;
                h[(i, (i + 1) % n)] += step;
                h[(i, (i + n - 1) % n)] += step;
            }
        }
        ChainKind::TwoState { flip } => {
            if n != 2 {
                return Err(ChainError::Parameter(format!(
                    "two-state chain needs n = 2, got {n}"
                )));
            }
            if !(flip > 0.0 && flip <= 0.5) {
                return Err(ChainError::Parameter(format!(
                    "two-state flip probability must lie in (0, 1/2], got {flip}"
                )));
            }
            h[(0, 0)] = 1.0 - flip;
            h[(0, 1)] = flip;
            h[(1, 0)] = flip;
            h[(1, 1)] = 1.0 - flip;
        }
    }
    TransitionMatrix::new(h)
}

/// Spectral and structural summary of a validated chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainSpectralReport {
    pub n: usize,
    pub lambda2: f64,
    pub lambda_n: f64,
    pub lambda_h: f64,
    pub stationary: Vec<f64>,
    pub irreducible: bool,
    pub aperiodic: bool,
    pub reversible: bool,
    /// `Some(0)` for reversible chains; `None` when the analytic envelope is
    /// unavailable.
    pub k_h: Option<usize>,
    /// `Some(n^{3/2})` for reversible chains.
    pub c_h: Option<f64>,
    pub note: Option<String>,
}

/// Eigenvalues of the symmetrized matrix `(A + Aᵀ)/2`, sorted descending.
/// Equal values keep their solver order, which is deterministic.
pub(crate) fn sorted_symmetric_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let sym = (a + a.transpose()) * 0.5;
    let mut eig: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(|x, y| y.partial_cmp(x).expect("finite eigenvalues"));
    eig
}

fn support_reachable(h: &DMatrix<f64>, from: usize, transpose: bool) -> Vec<Option<usize>> {
    let n = h.nrows();
    let mut level = vec![None; n];
    level[from] = Some(0);
    let mut queue = VecDeque::from([from]);
    while let Some(u) = queue.pop_front() {
        let lu = level[u].expect("queued nodes have a level");
        for v in 0..n {
            let w = if transpose { h[(v, u)] } else { h[(u, v)] };
            if w > 0.0 && level[v].is_none() {
                level[v] = Some(lu + 1);
                queue.push_back(v);
            }
        }
    }
    level
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Period of an irreducible chain: gcd over support edges `u → v` of
/// `level(u) + 1 − level(v)` for BFS levels from state 0.
fn period(h: &DMatrix<f64>, levels: &[Option<usize>]) -> usize {
    let n = h.nrows();
    let mut g = 0usize;
    for u in 0..n {
        for v in 0..n {
            if h[(u, v)] > 0.0 {
                let lu = levels[u].expect("irreducible") as i64;
                let lv = levels[v].expect("irreducible") as i64;
                g = gcd(g, (lu + 1 - lv).unsigned_abs() as usize);
            }
        }
    }
    g
}

fn stationary_distribution(h: &DMatrix<f64>) -> Result<Vec<f64>, ChainError> {
    let n = h.nrows();
    // π (H − I) = 0 with Σπ = 1: solve (Hᵀ − I) πᵀ = 0 with the last equation
    // replaced by the normalization.
    let mut a = h.transpose() - DMatrix::<f64>::identity(n, n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .ok_or_else(|| ChainError::Validation("stationary distribution is not unique".into()))?;
    Ok(pi.iter().copied().collect())
}

/// Checks irreducibility and aperiodicity and computes the spectral report.
pub fn validate_chain(h: &TransitionMatrix) -> Result<ChainSpectralReport, ChainError> {
    let n = h.n();
    let m = h.entries();
    let forward = support_reachable(m, 0, false);
    let backward = support_reachable(m, 0, true);
    let irreducible = forward.iter().all(Option::is_some) && backward.iter().all(Option::is_some);
    if !irreducible {
        return Err(ChainError::Validation("not irreducible".into()));
    }
    let aperiodic = period(m, &forward) == 1;
    if !aperiodic {
        return Err(ChainError::Validation("not aperiodic".into()));
    }
    let reversible = h.is_symmetric();
    let eig = sorted_symmetric_eigenvalues(m);
    // A single state has no non-principal eigenvalue; treat both as zero.
    let (lambda2, lambda_n) = if n == 1 { (0.0, 0.0) } else { (eig[1], eig[n - 1]) };
    let lambda_h = (lambda2.abs().max(lambda_n.abs()) + 1.0) / 2.0;
    let stationary = stationary_distribution(m)?;
    let (k_h, c_h, note) = if reversible {
        (Some(0), Some((n as f64).powf(1.5)), None)
    } else {
        (
            None,
            None,
            Some("non-reversible: analytic envelopes unavailable".to_string()),
        )
    };
    Ok(ChainSpectralReport {
        n,
        lambda2,
        lambda_n,
        lambda_h,
        stationary,
        irreducible,
        aperiodic,
        reversible,
        k_h,
        c_h,
        note,
    })
}

/// Draws one state from row `from`.
pub fn step<R: Rng + ?Sized>(h: &TransitionMatrix, from: usize, rng: &mut R) -> usize {
    let n = h.n();
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = from;
    for j in 0..n {
        let p = h.get(from, j);
        if p > 0.0 {
            last_positive = j;
            acc += p;
            if u < acc {
                return j;
            }
        }
    }
    last_positive
}

/// Samples `steps` successive states starting from `start` (which is not
/// itself part of the returned path).
pub fn sample_path<R: Rng + ?Sized>(
    h: &TransitionMatrix,
    start: usize,
    steps: usize,
    rng: &mut R,
) -> Vec<usize> {
    assert!(start < h.n(), "start state {start} out of range");
    let mut path = Vec::with_capacity(steps);
    let mut state = start;
    for _ in 0..steps {
        state = step(h, state, rng);
        path.push(state);
    }
    path
}

fn max_row_abs_sum(a: &DMatrix<f64>) -> f64 {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `‖Π* − H^t‖_∞` for `t = 0..=t_max`, using repeated multiplication.
pub fn mixing_gaps(h: &TransitionMatrix, stationary: &[f64], t_max: usize) -> Vec<f64> {
    let n = h.n();
    let pi_star = DMatrix::from_fn(n, n, |_, j| stationary[j]);
    let mut power = DMatrix::<f64>::identity(n, n);
    let mut out = Vec::with_capacity(t_max + 1);
    out.push(max_row_abs_sum(&(&pi_star - &power)));
    for _ in 0..t_max {
        power = &power * h.entries();
        out.push(max_row_abs_sum(&(&pi_star - &power)));
    }
    out
}

/// `‖Π* − H^t‖_∞` for a single `t`.
pub fn mixing_gap(h: &TransitionMatrix, t: usize) -> Result<f64, ChainError> {
    let report = validate_chain(h)?;
    Ok(*mixing_gaps(h, &report.stationary, t)
        .last()
        .expect("at least t = 0 is present"))
}

/// `n^{3/2} λ(H)^t`.
pub fn mixing_envelope(n: usize, lambda_h: f64, t: usize) -> Result<f64, ChainError> {
    if !(0.5..1.0).contains(&lambda_h) {
        return Err(ChainError::Domain(format!(
            "lambda_H must lie in [1/2, 1), got {lambda_h}"
        )));
    }
    Ok((n as f64).powf(1.5) * lambda_h.powi(t as i32))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use approx::assert_abs_diff_eq;

    #[test]
    fn uniform_chain_has_quarter_entries() {
        let h = build_chain(ChainKind::Uniform, 4).unwrap();
        assert!(h.entries().iter().all(|&p| p == 0.25));
    }

    #[test]
    fn two_state_entries() {
        let h = build_chain(ChainKind::TwoState { flip: 0.3 }, 2).unwrap();
        assert_eq!(h.get(0, 0), 0.7);
        assert_eq!(h.get(0, 1), 0.3);
        assert_eq!(h.get(1, 0), 0.3);
        assert_eq!(h.get(1, 1), 0.7);
    }

    #[test]
    fn lazy_cycle_rows_and_symmetry_by_direct_summation() {
        let h = build_chain(ChainKind::LazyCycle { hold: 0.5 }, 5).unwrap();
        for i in 0..5 {
            let mut s = 0.0;
            for j in 0..5 {
                s += h.get(i, j);
                assert_eq!(h.get(i, j), h.get(j, i));
            }
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
            assert_eq!(h.get(i, i), 0.5);
            assert_eq!(h.get(i, (i + 1) % 5), 0.25);
            assert_eq!(h.get(i, (i + 4) % 5), 0.25);
            assert_eq!(h.get(i, (i + 2) % 5), 0.0);
        }
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(matches!(
            build_chain(ChainKind::Uniform, 0),
            Err(ChainError::Parameter(_))
        ));
        assert!(build_chain(ChainKind::TwoState { flip: 0.0 }, 2).is_err());
        assert!(build_chain(ChainKind::TwoState { flip: 0.6 }, 2).is_err());
        assert!(build_chain(ChainKind::TwoState { flip: 1.0 }, 2).is_err());
        assert!(build_chain(ChainKind::LazyCycle { hold: 1.0 }, 3).is_err());
        assert!(build_chain(ChainKind::LazyCycle { hold: 0.0 }, 3).is_err());
    }

    #[test]
    fn identity_is_not_irreducible() {
        let h = TransitionMatrix::new(DMatrix::identity(2, 2)).unwrap();
        let err = validate_chain(&h).unwrap_err();
        assert!(err.to_string().contains("not irreducible"));
    }

    #[test]
    fn deterministic_cycle_is_periodic() {
        let h = TransitionMatrix::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        let err = validate_chain(&h).unwrap_err();
        assert!(err.to_string().contains("not aperiodic"));
    }

    #[test]
    fn uniform_report() {
        let r = validate_chain(&build_chain(ChainKind::Uniform, 4).unwrap()).unwrap();
        assert_abs_diff_eq!(r.lambda2, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.lambda_n, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.lambda_h, 0.5, epsilon = 1e-12);
        for p in &r.stationary {
            assert_abs_diff_eq!(*p, 0.25, epsilon = 1e-12);
        }
        assert!(r.reversible);
        assert_eq!(r.k_h, Some(0));
        assert_abs_diff_eq!(r.c_h.unwrap(), 8.0, epsilon = 1e-12);
    }

    #[test]
    fn two_state_report_matches_closed_form_eigenvalues() {
        // Eigenvalues of [[1-p, p], [p, 1-p]] are 1 and 1 - 2p.
        let p = 0.3;
        let r = validate_chain(&build_chain(ChainKind::TwoState { flip: p }, 2).unwrap()).unwrap();
        assert_abs_diff_eq!(r.lambda2, 1.0 - 2.0 * p, epsilon = 1e-12);
        assert_abs_diff_eq!(r.lambda_h, 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(r.stationary[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r.stationary[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn non_reversible_chain_reports_no_envelope() {
        // Irreducible, aperiodic, doubly stochastic but not symmetric.
        let h = TransitionMatrix::new(DMatrix::from_row_slice(
            3,
            3,
            &[0.5, 0.5, 0.0, 0.0, 0.5, 0.5, 0.5, 0.0, 0.5],
        ))
        .unwrap();
        let r = validate_chain(&h).unwrap();
        assert!(!r.reversible);
        assert_eq!(r.k_h, None);
        assert_eq!(r.c_h, None);
        assert!(r.note.unwrap().contains("non-reversible"));
    }

    #[test]
    fn zero_length_path_is_empty() {
        let h = build_chain(ChainKind::TwoState { flip: 0.5 }, 2).unwrap();
        let mut rng = seed::rng(1);
        assert!(sample_path(&h, 0, 0, &mut rng).is_empty());
    }

    #[test]
    fn uniform_path_frequencies_approach_stationary() {
        let h = build_chain(ChainKind::Uniform, 4).unwrap();
        let mut rng = seed::rng(11);
        let path = sample_path(&h, 2, 100_000, &mut rng);
        let mut counts = [0usize; 4];
        for s in path {
            counts[s] += 1;
        }
        for c in counts {
            assert!((c as f64 / 1e5 - 0.25).abs() < 0.01);
        }
    }

    #[test]
    fn path_is_reproducible() {
        let h = build_chain(ChainKind::LazyCycle { hold: 0.5 }, 5).unwrap();
        let a = sample_path(&h, 0, 3, &mut seed::rng(99));
        let b = sample_path(&h, 0, 3, &mut seed::rng(99));
        assert_eq!(a.len(), 3);
        assert_eq!(a, b);
        // Each move is to self or a neighbour.
        let mut prev = 0usize;
        for s in a {
            let d = (s + 5 - prev) % 5;
            assert!(d == 0 || d == 1 || d == 4);
            prev = s;
        }
    }

    #[test]
    fn mixing_gap_examples() {
        let u = build_chain(ChainKind::Uniform, 4).unwrap();
        assert_abs_diff_eq!(mixing_gap(&u, 1).unwrap(), 0.0, epsilon = 1e-15);
        let two = build_chain(ChainKind::TwoState { flip: 0.3 }, 2).unwrap();
        assert_abs_diff_eq!(mixing_gap(&two, 0).unwrap(), 1.0, epsilon = 1e-15);
        // Closed form: H^t = Π* + 0.4^t (I − Π*), so the gap is 0.4^t.
        let g5 = mixing_gap(&two, 5).unwrap();
        assert_abs_diff_eq!(g5, 0.4f64.powi(5), epsilon = 1e-14);
        let env = mixing_envelope(2, 0.7, 5).unwrap();
        assert_abs_diff_eq!(env, 2f64.powf(1.5) * 0.7f64.powi(5), epsilon = 1e-15);
        assert!((env - 0.475).abs() < 1e-3);
        assert!(g5 <= env);
    }

    #[test]
    fn envelope_examples_and_domain() {
        assert_eq!(mixing_envelope(4, 0.5, 0).unwrap(), 8.0);
        assert_abs_diff_eq!(
            mixing_envelope(4, 0.7, 10).unwrap(),
            8.0 * 0.7f64.powi(10),
            epsilon = 1e-15
        );
        assert!((mixing_envelope(4, 0.7, 10).unwrap() - 0.22598).abs() < 1e-5);
        assert_eq!(mixing_envelope(1, 0.5, 3).unwrap(), 0.125);
        assert!(matches!(mixing_envelope(4, 0.4, 1), Err(ChainError::Domain(_))));
        assert!(matches!(mixing_envelope(4, 1.0, 1), Err(ChainError::Domain(_))));
    }

    #[test]
    fn single_state_chain() {
        let h = build_chain(ChainKind::Uniform, 1).unwrap();
        let r = validate_chain(&h).unwrap();
        assert_eq!(r.lambda_h, 0.5);
        assert_eq!(r.stationary, vec![1.0]);
    }
}
