use dmclab_core::chain::{
    build_chain, mixing_envelope, mixing_gap, mixing_gaps, sample_path, validate_chain, ChainKind,
};
use dmclab_core::seed;
use dmclab_core::topology::{build_gossip, validate_gossip, Topology};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;

fn topologies(m: usize) -> Vec<Topology> {
    let mut out = vec![Topology::Complete, Topology::Ring, Topology::Star];
    let rows = (1..=m).rev().find(|r| m.is_multiple_of(*r) && r * r <= m).unwrap_or(1);
    out.push(Topology::Grid { rows });
    out
}

#[test]
fn lambda_is_relabeling_invariant() {
    let mut rng = seed::rng(3);
    for m in [4, 8, 9, 16] {
        for topo in topologies(m) {
            let p = build_gossip(topo, m).unwrap();
            for _ in 0..5 {
                let mut perm: Vec<usize> = (0..m).collect();
                perm.shuffle(&mut rng);
                let q = DMatrix::from_fn(m, m, |i, j| p.get(perm[i], perm[j]));
                let relabeled = validate_gossip(q).unwrap();
                assert!((relabeled.lambda() - p.lambda()).abs() < 1e-10, "{topo:?} m={m}");
            }
        }
    }
}

#[test]
fn powers_converge_at_rate_lambda() {
    for m in [4, 8, 9, 16] {
        for topo in topologies(m) {
            let p = build_gossip(topo, m).unwrap();
            let avg = DMatrix::from_element(m, m, 1.0 / m as f64);
            let mut pk = DMatrix::identity(m, m);
            for k in 1..=100 {
                pk = &pk * p.entries();
                let gap = (&pk - &avg).abs().max();
                assert!(gap <= p.lambda().powi(k) + 1e-12, "{topo:?} m={m} k={k}");
            }
        }
    }
}

fn chains() -> Vec<ChainKind> {
    vec![
        ChainKind::Uniform,
        ChainKind::LazyCycle { hold: 0.5 },
        ChainKind::LazyCycle { hold: 0.9 },
        ChainKind::LazyCycle { hold: 0.34 },
    ]
}

#[test]
fn mixing_envelope_and_monotone_gap() {
    for n in [1, 2, 3, 5, 8, 16, 32] {
        for kind in chains() {
            let h = build_chain(kind, n).unwrap();
            let report = validate_chain(&h).unwrap();
            let gaps = mixing_gaps(&h, &report.stationary, 200);
            for (t, g) in gaps.iter().enumerate() {
                let env = mixing_envelope(n, report.lambda_h, t).unwrap();
                assert!(*g <= env + 1e-12, "{kind:?} n={n} t={t}");
                if t > 0 {
                    assert!(*g <= gaps[t - 1] + 1e-12, "{kind:?} n={n} t={t}");
                }
            }
            assert!((mixing_gap(&h, 7).unwrap() - gaps[7]).abs() < 1e-15);
        }
    }
    for flip in [0.1, 0.3, 0.5] {
        let h = build_chain(ChainKind::TwoState { flip }, 2).unwrap();
        let report = validate_chain(&h).unwrap();
        for t in 0..=200 {
            let env = mixing_envelope(2, report.lambda_h, t).unwrap();
            assert!(mixing_gap(&h, t).unwrap() <= env + 1e-12);
        }
    }
}

#[test]
fn long_path_visits_states_uniformly() {
    let h = build_chain(ChainKind::LazyCycle { hold: 0.5 }, 8).unwrap();
    let mut rng = seed::rng(5);
    let steps = 200_000;
    let path = sample_path(&h, 0, steps, &mut rng);
    let mut counts = [0usize; 8];
    for j in path {
        counts[j] += 1;
    }
    let expected = steps as f64 / 8.0;
    let chi2: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    // Correlated draws inflate the statistic; allow generous slack over the
    // 7-dof 99.9% quantile.
    assert!(chi2 < 10.0 * 24.32, "chi2 = {chi2}");
}

#[test]
fn built_chains_always_validate() {
    for n in 1..=20 {
        for hold in [0.01, 0.1, 0.5, 0.99] {
            validate_chain(&build_chain(ChainKind::LazyCycle { hold }, n).unwrap()).unwrap();
        }
        validate_chain(&build_chain(ChainKind::Uniform, n).unwrap()).unwrap();
    }
}
