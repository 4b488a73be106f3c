//! Gossip (mixing) matrices for standard communication topologies.
//!
//! A gossip matrix `P` is symmetric, entry-wise in `[0,1]` and doubly
//! stochastic. Its consensus rate is `λ = max{|λ₂(P)|, |λ_m(P)|}` and the
//! spectral gap is `γ = 1 − λ`.

use crate::chain::{matrix_to_csv, sorted_symmetric_eigenvalues};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const GOSSIP_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("cannot build topology: {0}")]
    Construction(String),
    #[error("gossip validation failed: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "topology", rename_all = "kebab-case")]
pub enum Topology {
    Complete,
    Ring,
    /// `rows × (m / rows)` lattice without wrap-around.
    Grid { rows: usize },
    Star,
}

impl Topology {
    pub fn name(&self) -> String {
        match self {
            Topology::Complete => "complete".into(),
            Topology::Ring => "ring".into(),
            Topology::Grid { rows } => format!("grid{rows}"),
            Topology::Star => "star".into(),
        }
    }
}

/// Validated gossip matrix with its consensus rate and spectral gap.
#[derive(Debug, Clone, PartialEq)]
pub struct GossipMatrix {
    entries: DMatrix<f64>,
    lambda: f64,
    gamma: f64,
}

impl GossipMatrix {
    pub fn m(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn get(&self, i: usize, l: usize) -> f64 {
        self.entries[(i, l)]
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn to_csv(&self) -> String {
        matrix_to_csv(&self.entries)
    }
}

fn metropolis(adjacency: &[Vec<usize>]) -> DMatrix<f64> {
    let m = adjacency.len();
    let mut p = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        let di = adjacency[i].len();
        for &j in &adjacency[i] {
            let dj = adjacency[j].len();
            p[(i, j)] = 1.0 / (1.0 + di.max(dj) as f64);
        }
        let off: f64 = adjacency[i].iter().map(|&j| p[(i, j)]).sum();
        p[(i, i)] = 1.0 - off;
    }
    p
}

fn grid_adjacency(rows: usize, cols: usize) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let k = r * cols + c;
            if r + 1 < rows {
                adj[k].push(k + cols);
                adj[k + cols].push(k);
            }
            if c + 1 < cols {
                adj[k].push(k + 1);
                adj[k + 1].push(k);
            }
        }
    }
    for list in &mut adj {
        list.sort_unstable();
    }
    adj
}

fn star_adjacency(m: usize) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); m];
    for leaf in 1..m {
        adj[0].push(leaf);
        adj[leaf].push(0);
    }
    adj
}

/// Builds the gossip matrix for `topology` on `m` workers.
///
/// Complete uses uniform averaging, ring uses weight 1/3 on self and each
/// neighbour, grid and star use Metropolis–Hastings weights
/// `1 / (1 + max(d_i, d_j))` with the diagonal absorbing the remainder.
pub fn build_gossip(topology: Topology, m: usize) -> Result<GossipMatrix, TopologyError> {
    if m == 0 {
        return Err(TopologyError::Construction("worker count m must be positive".into()));
    }
    if m == 1 {
        return Ok(GossipMatrix {
            entries: DMatrix::from_element(1, 1, 1.0),
            lambda: 0.0,
            gamma: 1.0,
        });
    }
    let entries = match topology {
        Topology::Complete => DMatrix::from_element(m, m, 1.0 / m as f64),
        Topology::Ring => {
            if m < 3 {
                return Err(TopologyError::Construction(format!(
                    "ring needs m >= 3, got {m}"
                )));
            }
            let third = 1.0 / 3.0;
            let mut p = DMatrix::<f64>::zeros(m, m);
            for i in 0..m {
                p[(i, i)] = third;
                p[(i, (i + 1) % m)] = third;
                p[(i, (i + m - 1) % m)] = third;
            }
            p
        }
        Topology::Grid { rows } => {
            if rows == 0 || !m.is_multiple_of(rows) {
                return Err(TopologyError::Construction(format!(
                    "grid with {rows} rows does not factor m = {m}"
                )));
            }
            metropolis(&grid_adjacency(rows, m / rows))
        }
        Topology::Star => metropolis(&star_adjacency(m)),
    };
    validate_gossip(entries).map_err(|e| match e {
        TopologyError::Validation(msg) => {
            TopologyError::Construction(format!("{} on m = {m}: {msg}", topology.name()))
        }
        other => other,
    })
}

/// Checks symmetry, entry range and double stochasticity, then computes
/// `λ` from the full eigenvalue list.
pub fn validate_gossip(entries: DMatrix<f64>) -> Result<GossipMatrix, TopologyError> {
    let m = entries.nrows();
    if m == 0 || entries.ncols() != m {
        return Err(TopologyError::Validation(format!(
            "gossip matrix must be square and non-empty, got {}x{}",
            entries.nrows(),
            entries.ncols()
        )));
    }
    for i in 0..m {
        for j in 0..m {
            let p = entries[(i, j)];
            if !p.is_finite() || !(-GOSSIP_TOL..=1.0 + GOSSIP_TOL).contains(&p) {
                return Err(TopologyError::Validation(format!(
                    "entry ({i},{j}) = {p} outside [0,1]"
                )));
            }
            if (p - entries[(j, i)]).abs() > GOSSIP_TOL {
                return Err(TopologyError::Validation(format!(
                    "not symmetric at ({i},{j})"
                )));
            }
        }
        let row: f64 = entries.row(i).iter().sum();
        let col: f64 = entries.column(i).iter().sum();
        if (row - 1.0).abs() > GOSSIP_TOL {
            return Err(TopologyError::Validation(format!("row {i} sums to {row}")));
        }
        if (col - 1.0).abs() > GOSSIP_TOL {
            return Err(TopologyError::Validation(format!("column {i} sums to {col}")));
        }
    }
    let lambda = if m == 1 {
        0.0
    } else {
        let eig = sorted_symmetric_eigenvalues(&entries);
        eig[1].abs().max(eig[m - 1].abs())
    };
    let gamma = 1.0 - lambda;
    if gamma <= GOSSIP_TOL {
        return Err(TopologyError::Validation(
            "gap is zero: disconnected mixing".into(),
        ));
    }
    Ok(GossipMatrix {
        entries,
        lambda,
        gamma,
    })
}

/// One row of the spectral-gap order table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapRow {
    pub m: usize,
    pub gamma: f64,
    /// `γ·1` for complete/star, `γ·m` for grid, `γ·m²` for ring.
    pub scaled: f64,
}

/// Largest divisor of `m` not exceeding `√m`.
pub fn near_square_rows(m: usize) -> usize {
    (1..=m)
        .take_while(|r| r * r <= m)
        .filter(|r| m.is_multiple_of(*r))
        .last()
        .unwrap_or(1)
}

/// Spectral gaps over a list of sizes, normalized by the expected order in
/// `m`. For grids the row count is chosen as the near-square factorization;
/// the `rows` field of a supplied `Grid` tag is ignored.
pub fn spectral_gap_order_check(
    topology: Topology,
    m_list: &[usize],
) -> Result<Vec<GapRow>, TopologyError> {
    m_list
        .iter()
        .map(|&m| {
            let (topo, scale) = match topology {
                Topology::Complete | Topology::Star => (topology, 1.0),
                Topology::Grid { .. } => (
                    Topology::Grid {
                        rows: near_square_rows(m),
                    },
                    m as f64,
                ),
                Topology::Ring => (topology, (m * m) as f64),
            };
            let p = build_gossip(topo, m)?;
            Ok(GapRow {
                m,
                gamma: p.gamma(),
                scaled: p.gamma() * scale,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn complete_is_averaging() {
        let p = build_gossip(Topology::Complete, 4).unwrap();
        assert!(p.entries().iter().all(|&x| x == 0.25));
        assert_abs_diff_eq!(p.lambda(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.gamma(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ring_four_matches_circulant_formula() {
        let p = build_gossip(Topology::Ring, 4).unwrap();
        let third = 1.0 / 3.0;
        assert_eq!(p.get(0, 0), third);
        assert_eq!(p.get(0, 1), third);
        assert_eq!(p.get(0, 2), 0.0);
        assert_eq!(p.get(0, 3), third);
        // Circulant eigenvalues (1 + 2cos(2πk/m))/3: k=1 gives 1/3, k=2 gives -1/3.
        assert_abs_diff_eq!(p.lambda(), 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.gamma(), 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn ring_eight_lambda() {
        let p = build_gossip(Topology::Ring, 8).unwrap();
        let expected = (1.0 + 2.0 * (2.0 * PI / 8.0).cos()) / 3.0;
        assert_abs_diff_eq!(p.lambda(), expected, epsilon = 1e-12);
        assert!((p.lambda() - 0.80474).abs() < 1e-5);
        let again = validate_gossip(p.entries().clone()).unwrap();
        assert_eq!(again.lambda(), p.lambda());
    }

    #[test]
    fn single_worker_any_topology() {
        for t in [
            Topology::Complete,
            Topology::Ring,
            Topology::Star,
            Topology::Grid { rows: 1 },
        ] {
            let p = build_gossip(t, 1).unwrap();
            assert_eq!(p.entries()[(0, 0)], 1.0);
            assert_eq!(p.lambda(), 0.0);
            assert_eq!(p.gamma(), 1.0);
        }
    }

    #[test]
    fn impossible_combinations() {
        assert!(build_gossip(Topology::Ring, 2).is_err());
        assert!(build_gossip(Topology::Grid { rows: 3 }, 8).is_err());
        assert!(build_gossip(Topology::Grid { rows: 0 }, 8).is_err());
        assert!(build_gossip(Topology::Complete, 0).is_err());
    }

    #[test]
    fn validate_examples() {
        let p = validate_gossip(DMatrix::from_element(2, 2, 0.5)).unwrap();
        assert_abs_diff_eq!(p.lambda(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.gamma(), 1.0, epsilon = 1e-12);
        let err = validate_gossip(DMatrix::identity(2, 2)).unwrap_err();
        assert!(err.to_string().contains("gap is zero: disconnected mixing"));
        let asym = DMatrix::from_row_slice(2, 2, &[0.6, 0.4, 0.3, 0.7]);
        assert!(validate_gossip(asym).unwrap_err().to_string().contains("symmetric"));
        let neg = DMatrix::from_row_slice(2, 2, &[1.5, -0.5, -0.5, 1.5]);
        assert!(validate_gossip(neg).is_err());
    }

    #[test]
    fn star_metropolis_weights() {
        let p = build_gossip(Topology::Star, 4).unwrap();
        assert_abs_diff_eq!(p.get(0, 1), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(p.get(1, 1), 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(p.get(0, 0), 0.25, epsilon = 1e-15);
        // Leaf-difference vectors are eigenvectors with eigenvalue 1 - 1/m.
        assert_abs_diff_eq!(p.lambda(), 0.75, epsilon = 1e-12);
    }

    #[test]
    fn order_check_tables() {
        let c = spectral_gap_order_check(Topology::Complete, &[4, 8, 16]).unwrap();
        for row in c {
            assert_abs_diff_eq!(row.gamma, 1.0, epsilon = 1e-12);
        }
        let r = spectral_gap_order_check(Topology::Ring, &[8, 16, 32]).unwrap();
        let lo = r.iter().map(|x| x.scaled).fold(f64::INFINITY, f64::min);
        let hi = r.iter().map(|x| x.scaled).fold(0.0, f64::max);
        assert!(hi / lo <= 3.0);
        let grid = build_gossip(Topology::Grid { rows: 4 }, 16).unwrap();
        let ring = build_gossip(Topology::Ring, 16).unwrap();
        assert!(grid.gamma() > ring.gamma());
    }

    #[test]
    fn near_square() {
        assert_eq!(near_square_rows(16), 4);
        assert_eq!(near_square_rows(8), 2);
        assert_eq!(near_square_rows(9), 3);
        assert_eq!(near_square_rows(7), 1);
    }
}
