use super::data::{Dataset, Distribution, DistributionSpec, Sample, SampleSource};
use super::{check_ball, ProblemError};
use crate::linalg::{dist, dot, mean_stderr, norm, pairwise_sum};
use crate::seed;
use serde::{Deserialize, Serialize};

pub const DEFAULT_POPULATION_DRAWS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// `½(⟨w,x⟩ − y)²`
    LeastSquares,
    /// `ln(1 + exp(−y⟨w,x⟩))`
    Logistic,
    /// `max(0, 1 − y⟨w,x⟩)`
    Hinge,
    /// `f ≡ 0`, a degenerate control.
    Zero,
}

/// Loss family with constants certified on the ball of radius `radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    pub lipschitz: f64,
    pub beta: Option<f64>,
    pub radius: f64,
}

fn softplus(s: f64) -> f64 {
    if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

impl LossSpec {
    /// Certifies `L` and `β` analytically from the distribution's feature and
    /// label bounds and the ball radius.
    pub fn certify(kind: LossKind, dist: &Distribution, radius: f64) -> Result<Self, ProblemError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(ProblemError::Parameter(format!(
                "radius must be positive, got {radius}"
            )));
        }
        let b = dist.feature_bound();
        let (lipschitz, beta) = match kind {
            LossKind::LeastSquares => {
                if !matches!(dist.spec, DistributionSpec::LinearRegression { .. }) {
                    return Err(ProblemError::Unsupported(
                        "least squares needs a linear-regression distribution".into(),
                    ));
                }
                (b * (b * radius + dist.label_bound()), Some(b * b))
            }
            LossKind::Logistic | LossKind::Hinge => {
                if !matches!(dist.spec, DistributionSpec::LogisticLabels { .. }) {
                    return Err(ProblemError::Unsupported(
                        "margin losses need a logistic-labels distribution".into(),
                    ));
                }
                let beta = (kind == LossKind::Logistic).then_some(b * b / 4.0);
                (b, beta)
            }
            LossKind::Zero => (0.0, Some(0.0)),
        };
        Ok(Self {
            kind,
            lipschitz,
            beta,
            radius,
        })
    }

    pub fn zero(radius: f64) -> Self {
        Self {
            kind: LossKind::Zero,
            lipschitz: 0.0,
            beta: Some(0.0),
            radius,
        }
    }

    pub fn is_smooth(&self) -> bool {
        self.beta.is_some()
    }

    pub fn value(&self, w: &[f64], z: &Sample) -> Result<f64, ProblemError> {
        check_ball(w, self.radius, "w")?;
        Ok(self.value_unchecked(w, z))
    }

    pub fn grad(&self, w: &[f64], z: &Sample) -> Result<Vec<f64>, ProblemError> {
        check_ball(w, self.radius, "w")?;
        let mut g = vec![0.0; w.len()];
        self.grad_into(w, z, &mut g);
        Ok(g)
    }

    pub(crate) fn value_unchecked(&self, w: &[f64], z: &Sample) -> f64 {
        let s = dot(w, &z.features);
        match self.kind {
            LossKind::LeastSquares => 0.5 * (s - z.label) * (s - z.label),
            LossKind::Logistic => softplus(-z.label * s),
            LossKind::Hinge => (1.0 - z.label * s).max(0.0),
            LossKind::Zero => 0.0,
        }
    }

    /// Writes the (sub)gradient into `out`. At the hinge kink the zero
    /// subgradient is returned.
    pub(crate) fn grad_into(&self, w: &[f64], z: &Sample, out: &mut [f64]) {
        let s = dot(w, &z.features);
        let coef = match self.kind {
            LossKind::LeastSquares => s - z.label,
            LossKind::Logistic => -z.label * sigmoid(-z.label * s),
            LossKind::Hinge => {
                if z.label * s < 1.0 {
                    -z.label
                } else {
                    0.0
                }
            }
            LossKind::Zero => 0.0,
        };
        for (o, x) in out.iter_mut().zip(&z.features) {
            *o = coef * x;
        }
    }
}

/// Euclidean projection onto the centered ball of radius `radius`.
pub fn project(x: &[f64], radius: f64) -> Vec<f64> {
    let mut out = x.to_vec();
    project_in_place(&mut out, radius);
    out
}

pub(crate) fn project_in_place(x: &mut [f64], radius: f64) {
    let nx = norm(x);
    if nx > radius {
        let scale = radius / nx;
        for v in x.iter_mut() {
            *v *= scale;
        }
    }
}

/// Average loss over all `m·n` samples.
pub fn empirical_risk(loss: &LossSpec, w: &[f64], data: &Dataset<Sample>) -> Result<f64, ProblemError> {
    check_ball(w, loss.radius, "w")?;
    Ok(empirical_risk_unchecked(loss, w, data.all()))
}

pub(crate) fn empirical_risk_unchecked(loss: &LossSpec, w: &[f64], samples: &[Sample]) -> f64 {
    let values: Vec<f64> = samples.iter().map(|z| loss.value_unchecked(w, z)).collect();
    pairwise_sum(&values) / samples.len() as f64
}

/// Population risk estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PopulationRisk {
    pub value: f64,
    pub stderr: f64,
    /// Monte Carlo draws used; 0 when the value is closed-form.
    pub draws: usize,
}

/// Exact risk for least squares and the zero loss; otherwise a Monte Carlo
/// mean over `draws` fresh samples with its standard error.
///
/// For `x` uniform on the radius-`B` ball in `R^d`, `E[xxᵀ] = B²/(d+2)·I`, and
/// noise uniform on `[-σ, σ]` has variance `σ²/3`, so least squares has
/// `R(w) = B²‖w − w°‖²/(2(d+2)) + σ²/6`.
pub fn population_risk(
    loss: &LossSpec,
    w: &[f64],
    distribution: &Distribution,
    draws: usize,
    seed: u64,
) -> Result<PopulationRisk, ProblemError> {
    check_ball(w, loss.radius, "w")?;
    match (loss.kind, distribution.spec) {
        (LossKind::Zero, _) => Ok(PopulationRisk {
            value: 0.0,
            stderr: 0.0,
            draws: 0,
        }),
        (
            LossKind::LeastSquares,
            DistributionSpec::LinearRegression {
                feature_bound,
                noise,
                ..
            },
        ) => {
            let d = distribution.dim as f64;
            let e = dist(w, &distribution.planted);
            Ok(PopulationRisk {
                value: feature_bound * feature_bound * e * e / (2.0 * (d + 2.0))
                    + noise * noise / 6.0,
                stderr: 0.0,
                draws: 0,
            })
        }
        _ => {
            if draws < 2 {
                return Err(ProblemError::Parameter(
                    "Monte Carlo population risk needs at least 2 draws".into(),
                ));
            }
            let mut rng = seed::rng(seed::derive(seed, "population", 0));
            let values: Vec<f64> = (0..draws)
                .map(|_| loss.value_unchecked(w, &distribution.draw(&mut rng)))
                .collect();
            let (value, stderr) = mean_stderr(&values);
            Ok(PopulationRisk {
                value,
                stderr,
                draws,
            })
        }
    }
}
