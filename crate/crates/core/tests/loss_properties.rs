use dmclab_core::linalg::{dist, dot, norm};
use dmclab_core::problems::{
    project, Distribution, DistributionSpec, LossKind, LossSpec, MinimaxKind, MinimaxLossSpec,
    SaddleDistribution, SaddleSpec, SampleSource,
};
use dmclab_core::seed;
use proptest::prelude::*;
use rand::Rng;

fn random_in_ball(rng: &mut seed::Rng, d: usize, radius: f64) -> Vec<f64> {
    let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let u: f64 = rng.random();
    let nx = norm(&x).max(1e-300);
    x.iter().map(|v| v / nx * radius * u).collect()
}

fn linear(noise: f64) -> DistributionSpec {
    DistributionSpec::LinearRegression {
        feature_bound: 1.5,
        noise,
        planted_norm: 0.8,
    }
}

fn labels() -> DistributionSpec {
    DistributionSpec::LogisticLabels {
        feature_bound: 2.0,
        planted_norm: 1.0,
        label_flip: 0.1,
    }
}

fn losses() -> Vec<(LossSpec, Distribution)> {
    let lr = Distribution::new(linear(0.3), 3, 1).unwrap();
    let lg = Distribution::new(labels(), 3, 2).unwrap();
    vec![
        (LossSpec::certify(LossKind::LeastSquares, &lr, 2.0).unwrap(), lr),
        (LossSpec::certify(LossKind::Logistic, &lg, 2.0).unwrap(), lg.clone()),
        (LossSpec::certify(LossKind::Hinge, &lg, 2.0).unwrap(), lg),
    ]
}

#[test]
fn certified_lipschitz_holds() {
    let mut rng = seed::rng(10);
    for (loss, dist_) in losses() {
        for _ in 0..10_000 {
            let w = random_in_ball(&mut rng, 3, loss.radius);
            let z = dist_.draw(&mut rng);
            let g = loss.grad(&w, &z).unwrap();
            assert!(norm(&g) <= loss.lipschitz + 1e-9, "{:?}", loss.kind);
        }
    }
}

#[test]
fn certified_smoothness_holds() {
    let mut rng = seed::rng(11);
    for (loss, dist_) in losses().into_iter().filter(|(l, _)| l.is_smooth()) {
        let beta = loss.beta.unwrap();
        for _ in 0..10_000 {
            let w = random_in_ball(&mut rng, 3, loss.radius);
            let w2 = random_in_ball(&mut rng, 3, loss.radius);
            let z = dist_.draw(&mut rng);
            let gap = dist(&loss.grad(&w, &z).unwrap(), &loss.grad(&w2, &z).unwrap());
            assert!(gap <= beta * dist(&w, &w2) + 1e-9);
        }
    }
}

#[test]
fn projected_gradient_map_is_nonexpansive() {
    let mut rng = seed::rng(12);
    for inst in 0..1000 {
        let d = 1 + inst % 4;
        let spec = if inst % 2 == 0 { linear(0.2) } else { labels() };
        let kind = if inst % 2 == 0 { LossKind::LeastSquares } else { LossKind::Logistic };
        let dist_ = Distribution::new(spec, d, inst as u64).unwrap();
        let loss = LossSpec::certify(kind, &dist_, 1.5).unwrap();
        let eta = rng.random_range(0.0..=1.0) * 2.0 / loss.beta.unwrap();
        let z = dist_.draw(&mut rng);
        let w = random_in_ball(&mut rng, d, loss.radius);
        let w2 = random_in_ball(&mut rng, d, loss.radius);
        let step = |x: &[f64]| {
            let g = loss.grad(x, &z).unwrap();
            let y: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - eta * b).collect();
            project(&y, loss.radius)
        };
        assert!(dist(&step(&w), &step(&w2)) <= dist(&w, &w2) + 1e-10);
    }
}

#[test]
fn scsc_monotonicity() {
    let spec = SaddleSpec {
        dim_w: 3,
        dim_v: 2,
        mean_scale: 1.0,
        noise: 0.5,
    };
    let dist_ = SaddleDistribution::new(spec, 3).unwrap();
    let rho = 0.7;
    let loss = MinimaxLossSpec::certify(MinimaxKind::Scsc, rho, &dist_, 1.0, 1.0).unwrap();
    let mut rng = seed::rng(13);
    for _ in 0..1000 {
        let z = dist_.draw(&mut rng);
        let (w, v) = (random_in_ball(&mut rng, 3, 1.0), random_in_ball(&mut rng, 2, 1.0));
        let (w2, v2) = (random_in_ball(&mut rng, 3, 1.0), random_in_ball(&mut rng, 2, 1.0));
        let (gw, gv) = loss.grad_minimax(&w, &v, &z).unwrap();
        let (gw2, gv2) = loss.grad_minimax(&w2, &v2, &z).unwrap();
        let dw: Vec<f64> = w.iter().zip(&w2).map(|(a, b)| a - b).collect();
        let dv: Vec<f64> = v.iter().zip(&v2).map(|(a, b)| a - b).collect();
        let ggw: Vec<f64> = gw.iter().zip(&gw2).map(|(a, b)| a - b).collect();
        let ggv: Vec<f64> = gv.iter().zip(&gv2).map(|(a, b)| a - b).collect();
        let inner = dot(&ggw, &dw) - dot(&ggv, &dv);
        let sq = dot(&dw, &dw) + dot(&dv, &dv);
        assert!(inner >= rho * sq - 1e-10);
    }
}

#[test]
fn saddle_certificates_hold() {
    let spec = SaddleSpec {
        dim_w: 2,
        dim_v: 3,
        mean_scale: 0.8,
        noise: 0.3,
    };
    let dist_ = SaddleDistribution::new(spec, 4).unwrap();
    let loss = MinimaxLossSpec::certify(MinimaxKind::Scsc, 0.5, &dist_, 1.2, 0.9).unwrap();
    let mut rng = seed::rng(14);
    for _ in 0..10_000 {
        let z = dist_.draw(&mut rng);
        let (w, v) = (random_in_ball(&mut rng, 2, 1.2), random_in_ball(&mut rng, 3, 0.9));
        let (w2, v2) = (random_in_ball(&mut rng, 2, 1.2), random_in_ball(&mut rng, 3, 0.9));
        let (gw, gv) = loss.grad_minimax(&w, &v, &z).unwrap();
        let (gw2, gv2) = loss.grad_minimax(&w2, &v2, &z).unwrap();
        assert!((dot(&gw, &gw) + dot(&gv, &gv)).sqrt() <= loss.lipschitz + 1e-9);
        let num = (dist(&gw, &gw2).powi(2) + dist(&gv, &gv2).powi(2)).sqrt();
        let den = (dist(&w, &w2).powi(2) + dist(&v, &v2).powi(2)).sqrt();
        assert!(num <= loss.beta * den + 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn projection_is_nonexpansive(
        x in prop::collection::vec(-5.0f64..5.0, 3),
        y in prop::collection::vec(-5.0f64..5.0, 3),
        r in 0.1f64..3.0,
    ) {
        let (px, py) = (project(&x, r), project(&y, r));
        prop_assert!(norm(&px) <= r * (1.0 + 1e-12));
        prop_assert!(dist(&px, &py) <= dist(&x, &y) + 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences(
        w in prop::collection::vec(-0.5f64..0.5, 3),
        s in 0u64..1000,
        k in 0usize..2,
    ) {
        let (loss, dist_) = losses().swap_remove(k);
        let mut rng = seed::rng(s);
        let z = dist_.draw(&mut rng);
        let g = loss.grad(&w, &z).unwrap();
        let h = 1e-6;
        for c in 0..3 {
            let mut up = w.clone();
            let mut dn = w.clone();
            up[c] += h;
            dn[c] -= h;
            let fd = (loss.value(&up, &z).unwrap() - loss.value(&dn, &z).unwrap()) / (2.0 * h);
            prop_assert!((fd - g[c]).abs() <= 1e-6 * (1.0 + g[c].abs()));
        }
    }
}
