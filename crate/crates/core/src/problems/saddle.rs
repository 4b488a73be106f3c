use super::data::SampleSource;
use super::{check_ball, ProblemError};
use crate::linalg::{dot, norm, pairwise_sum};
use crate::seed::{self, Rng};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

/// One draw of the random bilinear coefficients. `a` is `dim_w × dim_v`,
/// row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleSample {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl SaddleSample {
    pub fn zeros(dim_w: usize, dim_v: usize) -> Self {
        Self {
            a: vec![0.0; dim_w * dim_v],
            b: vec![0.0; dim_w],
            c: vec![0.0; dim_v],
        }
    }

    fn dim_v(&self) -> usize {
        self.c.len()
    }

    /// `A v`
    fn a_times(&self, v: &[f64]) -> Vec<f64> {
        let dv = self.dim_v();
        self.a.chunks(dv).map(|row| dot(row, v)).collect()
    }

    /// `Aᵀ w`
    fn at_times(&self, w: &[f64]) -> Vec<f64> {
        let dv = self.dim_v();
        let mut out = vec![0.0; dv];
        for (row, wi) in self.a.chunks(dv).zip(w) {
            for (o, aij) in out.iter_mut().zip(row) {
                *o += aij * wi;
            }
        }
        out
    }
}

/// Coefficient distribution: means drawn once, then per-entry uniform noise
/// of half-width `noise` around them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddleSpec {
    pub dim_w: usize,
    pub dim_v: usize,
    /// Mean entries are uniform on `[-mean_scale, mean_scale]`.
    pub mean_scale: f64,
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleDistribution {
    pub spec: SaddleSpec,
    pub mean: SaddleSample,
}

fn symmetric_uniform(rng: &mut Rng, half_width: f64) -> f64 {
    let u: f64 = rng.random();
    half_width * (2.0 * u - 1.0)
}

impl SaddleDistribution {
    pub fn new(spec: SaddleSpec, plant_seed: u64) -> Result<Self, ProblemError> {
        if spec.dim_w == 0 || spec.dim_v == 0 {
            return Err(ProblemError::Parameter("saddle dimensions must be positive".into()));
        }
        if !(spec.mean_scale >= 0.0 && spec.noise >= 0.0) {
            return Err(ProblemError::Parameter(
                "mean_scale and noise must be nonnegative".into(),
            ));
        }
        let mut rng = seed::rng(plant_seed);
        let mut draw = |len: usize| -> Vec<f64> {
            (0..len)
                .map(|_| symmetric_uniform(&mut rng, spec.mean_scale))
                .collect()
        };
        let a = draw(spec.dim_w * spec.dim_v);
        let b = draw(spec.dim_w);
        let c = draw(spec.dim_v);
        Ok(Self {
            spec,
            mean: SaddleSample { a, b, c },
        })
    }

    pub fn with_mean(spec: SaddleSpec, mean: SaddleSample) -> Result<Self, ProblemError> {
        if mean.a.len() != spec.dim_w * spec.dim_v
            || mean.b.len() != spec.dim_w
            || mean.c.len() != spec.dim_v
        {
            return Err(ProblemError::Parameter("mean sample has wrong shape".into()));
        }
        Ok(Self { spec, mean })
    }

    /// Almost-sure bounds on `‖A‖₂`, `‖b‖`, `‖c‖` (Frobenius for `A`).
    pub fn coefficient_bounds(&self) -> (f64, f64, f64) {
        let s = self.spec.noise;
        let (dw, dv) = (self.spec.dim_w as f64, self.spec.dim_v as f64);
        (
            norm(&self.mean.a) + s * (dw * dv).sqrt(),
            norm(&self.mean.b) + s * dw.sqrt(),
            norm(&self.mean.c) + s * dv.sqrt(),
        )
    }
}

impl SampleSource for SaddleDistribution {
    type Item = SaddleSample;

    fn draw(&self, rng: &mut Rng) -> SaddleSample {
        let s = self.spec.noise;
        let mut jitter = |xs: &[f64]| -> Vec<f64> {
            xs.iter().map(|x| x + symmetric_uniform(rng, s)).collect()
        };
        SaddleSample {
            a: jitter(&self.mean.a),
            b: jitter(&self.mean.b),
            c: jitter(&self.mean.c),
        }
    }

    fn tag(&self) -> String {
        "saddle".into()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MinimaxKind {
    Bilinear,
    Scsc,
}

/// `f(w,v;z) = wᵀAv + bᵀw − cᵀv + (ρ/2)(‖w‖² − ‖v‖²)` on `W × V`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimaxLossSpec {
    pub kind: MinimaxKind,
    pub rho: f64,
    pub lipschitz: f64,
    pub beta: f64,
    pub radius_w: f64,
    pub radius_v: f64,
}

impl MinimaxLossSpec {
    /// The joint gradient map has Jacobian `[[ρI, A], [Aᵀ, −ρI]]` whose
    /// spectral norm is `√(ρ² + ‖A‖₂²)`; `L` bounds both partial gradients on
    /// the product of balls.
    pub fn certify(
        kind: MinimaxKind,
        rho: f64,
        dist: &SaddleDistribution,
        radius_w: f64,
        radius_v: f64,
    ) -> Result<Self, ProblemError> {
        match kind {
            MinimaxKind::Bilinear if rho != 0.0 => {
                return Err(ProblemError::Parameter("bilinear saddle has rho = 0".into()))
            }
            MinimaxKind::Scsc if !(rho > 0.0) => {
                return Err(ProblemError::Parameter("scsc saddle needs rho > 0".into()))
            }
            _ => {}
        }
        if !(radius_w > 0.0 && radius_v > 0.0) {
            return Err(ProblemError::Parameter("radii must be positive".into()));
        }
        let (a, b, c) = dist.coefficient_bounds();
        let gw = a * radius_v + b + rho * radius_w;
        let gv = a * radius_w + c + rho * radius_v;
        Ok(Self {
            kind,
            rho,
            lipschitz: (gw * gw + gv * gv).sqrt(),
            beta: (rho * rho + a * a).sqrt(),
            radius_w,
            radius_v,
        })
    }

    pub fn value(&self, w: &[f64], v: &[f64], z: &SaddleSample) -> Result<f64, ProblemError> {
        check_ball(w, self.radius_w, "w")?;
        check_ball(v, self.radius_v, "v")?;
        Ok(self.value_unchecked(w, v, z))
    }

    pub(crate) fn value_unchecked(&self, w: &[f64], v: &[f64], z: &SaddleSample) -> f64 {
        dot(w, &z.a_times(v)) + dot(&z.b, w) - dot(&z.c, v)
            + 0.5 * self.rho * (dot(w, w) - dot(v, v))
    }

    pub fn grad_minimax(
        &self,
        w: &[f64],
        v: &[f64],
        z: &SaddleSample,
    ) -> Result<(Vec<f64>, Vec<f64>), ProblemError> {
        check_ball(w, self.radius_w, "w")?;
        check_ball(v, self.radius_v, "v")?;
        Ok(self.grad_unchecked(w, v, z))
    }

    pub(crate) fn grad_unchecked(
        &self,
        w: &[f64],
        v: &[f64],
        z: &SaddleSample,
    ) -> (Vec<f64>, Vec<f64>) {
        let gw = z
            .a_times(v)
            .iter()
            .zip(&z.b)
            .zip(w)
            .map(|((av, b), wi)| av + b + self.rho * wi)
            .collect();
        let gv = z
            .at_times(w)
            .iter()
            .zip(&z.c)
            .zip(v)
            .map(|((aw, c), vi)| aw - c - self.rho * vi)
            .collect();
        (gw, gv)
    }
}

/// Entry-wise mean of coefficient samples; since the loss is affine in the
/// coefficients, risks equal the loss at the mean sample.
pub fn mean_sample(samples: &[SaddleSample]) -> SaddleSample {
    assert!(!samples.is_empty(), "mean of no samples");
    let count = samples.len() as f64;
    let mut col = vec![0.0; samples.len()];
    let mut avg = |get: &dyn Fn(&SaddleSample) -> &Vec<f64>| -> Vec<f64> {
        let len = get(&samples[0]).len();
        (0..len)
            .map(|j| {
                for (slot, s) in col.iter_mut().zip(samples) {
                    *slot = get(s)[j];
                }
                pairwise_sum(&col) / count
            })
            .collect()
    };
    let a = avg(&|s| &s.a);
    let b = avg(&|s| &s.b);
    let c = avg(&|s| &s.c);
    SaddleSample { a, b, c }
}

/// `sup_{‖u‖ ≤ R} ⟨g, u⟩ − (ρ/2)‖u‖²` as a function of `‖g‖`.
pub fn inner_sup(g_norm: f64, rho: f64, radius: f64) -> f64 {
    if rho == 0.0 {
        return radius * g_norm;
    }
    let r = (g_norm / rho).min(radius);
    g_norm * r - 0.5 * rho * r * r
}

/// `sup_v f̄(w, v) − inf_w f̄(w, v)` at the output pair, where `f̄` is the
/// loss evaluated at the mean coefficient sample.
pub fn weak_pd_gap(loss: &MinimaxLossSpec, mean: &SaddleSample, w: &[f64], v: &[f64]) -> f64 {
    let sup_v = primal_value(loss, mean, w);
    let gw: Vec<f64> = mean
        .a_times(v)
        .iter()
        .zip(&mean.b)
        .map(|(x, y)| x + y)
        .collect();
    let inf_w = -dot(&mean.c, v) - 0.5 * loss.rho * dot(v, v) - inner_sup(norm(&gw), loss.rho, loss.radius_w);
    sup_v - inf_w
}

fn dual_residual(mean: &SaddleSample, w: &[f64]) -> Vec<f64> {
    mean.at_times(w)
        .iter()
        .zip(&mean.c)
        .map(|(x, y)| x - y)
        .collect()
}

/// Primal objective `F(w) = sup_{v ∈ V} f̄(w, v)`.
pub fn primal_value(loss: &MinimaxLossSpec, mean: &SaddleSample, w: &[f64]) -> f64 {
    let g = dual_residual(mean, w);
    dot(&mean.b, w) + 0.5 * loss.rho * dot(w, w) + inner_sup(norm(&g), loss.rho, loss.radius_v)
}

/// `min_{w ∈ W} F(w)` and its minimizer, by projected gradient descent on
/// the `(ρ + ‖A‖²/ρ)`-smooth, `ρ`-strongly convex primal objective.
pub fn primal_minimum(loss: &MinimaxLossSpec, mean: &SaddleSample) -> Result<(Vec<f64>, f64), ProblemError> {
    if !(loss.rho > 0.0) {
        return Err(ProblemError::Unsupported(
            "primal risk needs a strongly concave dual (rho > 0)".into(),
        ));
    }
    let dw = mean.b.len();
    let a_norm = norm(&mean.a);
    let smooth = loss.rho + a_norm * a_norm / loss.rho;
    let step = 1.0 / smooth;
    let mut w = vec![0.0; dw];
    let mut residual = f64::INFINITY;
    const MAX_ITERS: usize = 1_000_000;
    for _ in 0..MAX_ITERS {
        let g = dual_residual(mean, &w);
        let gn = norm(&g);
        let vstar: Vec<f64> = if gn == 0.0 {
            vec![0.0; g.len()]
        } else {
            let r = (gn / loss.rho).min(loss.radius_v);
            g.iter().map(|x| x * r / gn).collect()
        };
        let grad: Vec<f64> = mean
            .a_times(&vstar)
            .iter()
            .zip(&mean.b)
            .zip(&w)
            .map(|((av, b), wi)| av + b + loss.rho * wi)
            .collect();
        let mut next: Vec<f64> = w.iter().zip(&grad).map(|(a, g)| a - step * g).collect();
        super::loss::project_in_place(&mut next, loss.radius_w);
        residual = crate::linalg::dist(&w, &next) / step;
        w = next;
        if residual <= 1e-10 {
            let value = primal_value(loss, mean, &w);
            return Ok((w, value));
        }
    }
    Err(ProblemError::Convergence {
        residual,
        iterations: MAX_ITERS,
    })
}
