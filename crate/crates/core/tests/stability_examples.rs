use dmclab_core::chain::{build_chain, ChainKind};
use dmclab_core::engine::{sample_paths, OutputKind, RunConfig, StepsizeSchedule, UpdateOrder};
use dmclab_core::linalg::mean_stderr;
use dmclab_core::problems::{
    draw_dataset, Dataset, Distribution, DistributionSpec, LossKind, LossSpec, MinimaxKind,
    MinimaxLossSpec, ProblemError, SaddleDistribution, SaddleSample, SaddleSpec, Sample,
};
use dmclab_core::stability::{
    estimate_excess_decomposition, estimate_generalization_gap, estimate_primal_risk,
    estimate_weak_pd_gap, pair_distances_sgd, pair_distances_sgda, DecompositionDiagnostics,
    GapOptions, SgdProblem, SgdaProblem, StabilityError,
};
use dmclab_core::topology::{build_gossip, Topology};

fn config(topo: Topology, m: usize, n: usize, eta: f64, horizon: usize) -> RunConfig {
    RunConfig::new(
        build_gossip(topo, m).unwrap(),
        build_chain(ChainKind::Uniform, n).unwrap(),
        StepsizeSchedule::Constant { eta },
        horizon,
        UpdateOrder::Ctg,
        8,
    )
}

fn scalar(x: f64, y: f64) -> Sample {
    Sample {
        features: vec![x],
        label: y,
    }
}

#[test]
fn single_step_enumeration() {
    let eta = 0.1;
    let cfg = config(Topology::Complete, 1, 2, eta, 1);
    let loss = LossSpec {
        kind: LossKind::LeastSquares,
        lipschitz: 100.0,
        beta: Some(1.0),
        radius: 100.0,
    };
    let s = Dataset::from_samples(1, 2, "hand", vec![scalar(0.5, 1.0), scalar(-0.8, 0.3)]).unwrap();
    let t = Dataset::from_samples(1, 2, "hand", vec![scalar(0.9, -0.4), scalar(0.2, 0.7)]).unwrap();
    // At w⁰ = 0 the gradient is −y·x.
    let g = |z: &Sample| -z.label * z.features[0];
    let pairs = [(0, 0), (0, 1)];
    let expected: f64 = (0..2)
        .map(|k| 0.5 * 0.5 * eta * (g(s.get(0, k)) - g(t.get(0, k))).abs())
        .sum();

    let mut enumerated = 0.0;
    for j in 0..2 {
        let d = pair_distances_sgd(&cfg, &loss, &s, &t, &[vec![j]], &pairs, OutputKind::Final).unwrap();
        assert_eq!(d[1 - j], 0.0);
        enumerated += 0.5 * (d[0] + d[1]) / 2.0;
    }
    assert!((enumerated - expected).abs() < 1e-15);

    let draws: Vec<f64> = (0..4000)
        .map(|r| {
            let paths = sample_paths(&cfg.chain, 1, 1, r, false);
            let d = pair_distances_sgd(&cfg, &loss, &s, &t, &paths, &pairs, OutputKind::Final).unwrap();
            (d[0] + d[1]) / 2.0
        })
        .collect();
    let (mean, se) = mean_stderr(&draws);
    assert!((mean - expected).abs() <= 4.0 * se, "{mean} vs {expected} (se {se})");
}

fn ls_problem(m: usize, n: usize, d: usize, noise: f64) -> SgdProblem {
    let spec = DistributionSpec::LinearRegression {
        feature_bound: 1.0,
        noise,
        planted_norm: 0.7,
    };
    let distribution = Distribution::new(spec, d, 12).unwrap();
    SgdProblem {
        loss: LossSpec::certify(LossKind::LeastSquares, &distribution, 1.0).unwrap(),
        distribution,
        m,
        n,
    }
}

fn options(replications: usize) -> GapOptions {
    GapOptions {
        replications,
        output: OutputKind::Averaged,
        population_draws: 0,
    }
}

#[test]
fn decomposition_identity_and_diagnostics() {
    let p = ls_problem(2, 4, 1, 0.2);
    let cfg = config(Topology::Complete, 2, 4, 0.2, 30);
    let dec = estimate_excess_decomposition(&cfg, &p, &options(20), Default::default()).unwrap();
    assert!(dec.identity_residual <= 1e-12);
    let sum = dec.gen.value + dec.opt.value + dec.test.value;
    assert!((sum - dec.excess.value).abs() <= 1e-12);
    assert!(dec.test_nonpositive);

    let forced = DecompositionDiagnostics {
        force_erm_output: true,
    };
    let dec = estimate_excess_decomposition(&cfg, &p, &options(5), forced).unwrap();
    assert_eq!(dec.opt.value, 0.0);
}

#[test]
fn zero_loss_has_no_gaps() {
    let mut p = ls_problem(2, 4, 2, 0.1);
    p.loss = LossSpec::zero(1.0);
    let cfg = config(Topology::Complete, 2, 4, 0.2, 10);
    let dec = estimate_excess_decomposition(&cfg, &p, &options(4), Default::default()).unwrap();
    for e in [dec.gen, dec.opt, dec.test, dec.excess] {
        assert_eq!(e.value, 0.0);
    }
    assert_eq!(estimate_generalization_gap(&cfg, &p, &options(4)).unwrap().value, 0.0);
}

#[test]
fn larger_samples_shrink_the_gap_band() {
    let cfg8 = config(Topology::Complete, 1, 8, 0.1, 20);
    let cfg512 = config(Topology::Complete, 1, 512, 0.1, 20);
    let g8 = estimate_generalization_gap(&cfg8, &ls_problem(1, 8, 2, 0.3), &options(40)).unwrap();
    let g512 = estimate_generalization_gap(&cfg512, &ls_problem(1, 512, 2, 0.3), &options(40)).unwrap();
    assert!(g512.value.abs() <= 3.0 * g512.stderr + 1e-12 || g512.value.abs() < g8.value.abs());
    assert!(g512.stderr < g8.stderr);
}

fn saddle(noise: f64, mean_scale: f64, kind: MinimaxKind, rho: f64) -> SgdaProblem {
    let spec = SaddleSpec {
        dim_w: 2,
        dim_v: 3,
        mean_scale,
        noise,
    };
    let distribution = SaddleDistribution::new(spec, 6).unwrap();
    SgdaProblem {
        loss: MinimaxLossSpec::certify(kind, rho, &distribution, 1.0, 0.8).unwrap(),
        distribution,
        m: 4,
        n: 3,
    }
}

#[test]
fn zero_saddle_has_no_gaps() {
    let p = saddle(0.0, 0.0, MinimaxKind::Scsc, 0.5);
    let cfg = config(Topology::Ring, 4, 3, 0.05, 10);
    let wpd = estimate_weak_pd_gap(&cfg, &p, 3, OutputKind::Averaged).unwrap();
    assert_eq!(wpd.weak_pd_population.value, 0.0);
    assert_eq!(wpd.weak_pd_gen.value, 0.0);
    let pr = estimate_primal_risk(&cfg, &p, 3, OutputKind::Averaged).unwrap();
    assert_eq!(pr.primal_gen.value, 0.0);
    assert!(pr.excess_primal.value.abs() < 1e-10);
}

#[test]
fn noiseless_coefficients_give_zero_generalization() {
    let p = saddle(0.0, 0.6, MinimaxKind::Scsc, 0.5);
    let cfg = config(Topology::Ring, 4, 3, 0.05, 10);
    let wpd = estimate_weak_pd_gap(&cfg, &p, 3, OutputKind::Averaged).unwrap();
    assert!(wpd.weak_pd_gen.value.abs() < 1e-14);
    let pr = estimate_primal_risk(&cfg, &p, 3, OutputKind::Averaged).unwrap();
    assert!(pr.primal_gen.value.abs() < 1e-14);
}

#[test]
fn primal_risk_needs_strong_concavity() {
    let p = saddle(0.1, 0.6, MinimaxKind::Bilinear, 0.0);
    let cfg = config(Topology::Ring, 4, 3, 0.05, 10);
    assert!(matches!(
        estimate_primal_risk(&cfg, &p, 2, OutputKind::Averaged),
        Err(StabilityError::Problem(ProblemError::Unsupported(_)))
    ));
}

fn swap_sample(z: &SaddleSample, dw: usize, dv: usize) -> SaddleSample {
    let mut a = vec![0.0; dw * dv];
    for i in 0..dw {
        for j in 0..dv {
            a[j * dw + i] = -z.a[i * dv + j];
        }
    }
    SaddleSample {
        a,
        b: z.c.clone(),
        c: z.b.clone(),
    }
}

fn swap_data(d: &Dataset<SaddleSample>) -> Dataset<SaddleSample> {
    let samples = d.all().iter().map(|z| swap_sample(z, 2, 3)).collect();
    Dataset::from_samples(d.m(), d.n(), "saddle-swapped", samples).unwrap()
}

#[test]
fn swapping_blocks_preserves_stability() {
    let p = saddle(0.3, 0.6, MinimaxKind::Scsc, 0.5);
    let cfg = config(Topology::Ring, 4, 3, 0.02, 15);
    let swapped_loss = MinimaxLossSpec {
        radius_w: p.loss.radius_v,
        radius_v: p.loss.radius_w,
        ..p.loss
    };
    let pairs: Vec<(usize, usize)> = (0..4).flat_map(|r| (0..3).map(move |k| (r, k))).collect();
    for rep in 0..5u64 {
        let s = draw_dataset(&p.distribution, 4, 3, 100 + rep).unwrap();
        let t = draw_dataset(&p.distribution, 4, 3, 200 + rep).unwrap();
        let paths = sample_paths(&cfg.chain, 4, 15, rep, false);
        let a = pair_distances_sgda(&cfg, &p.loss, &s, &t, &paths, &pairs, OutputKind::Averaged).unwrap();
        let b = pair_distances_sgda(
            &cfg,
            &swapped_loss,
            &swap_data(&s),
            &swap_data(&t),
            &paths,
            &pairs,
            OutputKind::Averaged,
        )
        .unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x.0 + x.1 - y.0 - y.1).abs() < 1e-12);
            assert!((x.0 - y.1).abs() < 1e-12);
        }
    }
}
