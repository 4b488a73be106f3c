use super::ProblemError;
use crate::linalg::{dot, norm};
use crate::seed::{self, Rng};
use rand::Rng as _;
use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: f64,
}

/// Anything that can draw i.i.d. samples.
pub trait SampleSource {
    type Item: Clone + Send + Sync;
    fn draw(&self, rng: &mut Rng) -> Self::Item;
    fn tag(&self) -> String;
}

/// Generating distribution family for supervised samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DistributionSpec {
    /// `y = ⟨x, w°⟩ + ξ`, `x` uniform on the ball of radius `feature_bound`,
    /// `ξ` uniform on `[-noise, noise]`.
    LinearRegression {
        feature_bound: f64,
        noise: f64,
        planted_norm: f64,
    },
    /// `y = sign⟨x, w°⟩` (ties to +1), flipped with probability `label_flip`.
    LogisticLabels {
        feature_bound: f64,
        planted_norm: f64,
        #[serde(default)]
        label_flip: f64,
    },
}

impl DistributionSpec {
    pub fn feature_bound(&self) -> f64 {
        match *self {
            DistributionSpec::LinearRegression { feature_bound, .. }
            | DistributionSpec::LogisticLabels { feature_bound, .. } => feature_bound,
        }
    }

    fn check(&self) -> Result<(), ProblemError> {
        let bad = |msg: String| Err(ProblemError::Parameter(msg));
        match *self {
            DistributionSpec::LinearRegression {
                feature_bound,
                noise,
                planted_norm,
            } => {
                if !(feature_bound > 0.0 && feature_bound.is_finite()) {
                    return bad(format!("feature_bound must be positive, got {feature_bound}"));
                }
                if !(noise >= 0.0 && noise.is_finite()) {
                    return bad(format!("noise must be nonnegative, got {noise}"));
                }
                if !(planted_norm >= 0.0 && planted_norm.is_finite()) {
                    return bad(format!("planted_norm must be nonnegative, got {planted_norm}"));
                }
            }
            DistributionSpec::LogisticLabels {
                feature_bound,
                planted_norm,
                label_flip,
            } => {
                if !(feature_bound > 0.0 && feature_bound.is_finite()) {
                    return bad(format!("feature_bound must be positive, got {feature_bound}"));
                }
                if !(planted_norm > 0.0 && planted_norm.is_finite()) {
                    return bad(format!("planted_norm must be positive, got {planted_norm}"));
                }
                if !(0.0..=0.5).contains(&label_flip) {
                    return bad(format!("label_flip must lie in [0, 0.5], got {label_flip}"));
                }
            }
        }
        Ok(())
    }
}

/// A concrete distribution: family, dimension and planted parameter `w°`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub spec: DistributionSpec,
    pub dim: usize,
    pub planted: Vec<f64>,
}

pub(crate) fn uniform_in_ball(rng: &mut Rng, dim: usize, radius: f64) -> Vec<f64> {
    let g: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let gn = norm(&g);
    let u: f64 = rng.random();
    let r = radius * u.powf(1.0 / dim as f64);
    if gn == 0.0 {
        return vec![0.0; dim];
    }
    g.iter().map(|x| x * r / gn).collect()
}

fn unit_direction(rng: &mut Rng, dim: usize) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let gn = norm(&g);
        if gn > 0.0 {
            return g.iter().map(|x| x / gn).collect();
        }
    }
}

impl Distribution {
    /// Plants `w°` as a random direction of the declared norm.
    pub fn new(spec: DistributionSpec, dim: usize, plant_seed: u64) -> Result<Self, ProblemError> {
        if dim == 0 {
            return Err(ProblemError::Parameter("dimension d must be positive".into()));
        }
        spec.check()?;
        let planted_norm = match spec {
            DistributionSpec::LinearRegression { planted_norm, .. }
            | DistributionSpec::LogisticLabels { planted_norm, .. } => planted_norm,
        };
        let mut rng = seed::rng(plant_seed);
        let planted = unit_direction(&mut rng, dim)
            .into_iter()
            .map(|x| x * planted_norm)
            .collect();
        Ok(Self { spec, dim, planted })
    }

    /// Uses an explicit planted parameter.
    pub fn with_planted(spec: DistributionSpec, planted: Vec<f64>) -> Result<Self, ProblemError> {
        if planted.is_empty() {
            return Err(ProblemError::Parameter("dimension d must be positive".into()));
        }
        spec.check()?;
        Ok(Self {
            spec,
            dim: planted.len(),
            planted,
        })
    }

    pub fn feature_bound(&self) -> f64 {
        self.spec.feature_bound()
    }

    /// Almost-sure bound on `|y|`.
    pub fn label_bound(&self) -> f64 {
        match self.spec {
            DistributionSpec::LinearRegression {
                feature_bound,
                noise,
                ..
            } => feature_bound * norm(&self.planted) + noise,
            DistributionSpec::LogisticLabels { .. } => 1.0,
        }
    }
}

impl SampleSource for Distribution {
    type Item = Sample;

    fn draw(&self, rng: &mut Rng) -> Sample {
        let features = uniform_in_ball(rng, self.dim, self.feature_bound());
        let score = dot(&features, &self.planted);
        let label = match self.spec {
            DistributionSpec::LinearRegression { noise, .. } => {
                let u: f64 = rng.random();
                score + noise * (2.0 * u - 1.0)
            }
            DistributionSpec::LogisticLabels { label_flip, .. } => {
                let y = if score >= 0.0 { 1.0 } else { -1.0 };
                let u: f64 = rng.random();
                if u < label_flip {
                    -y
                } else {
                    y
                }
            }
        };
        Sample { features, label }
    }

    fn tag(&self) -> String {
        match self.spec {
            DistributionSpec::LinearRegression { .. } => "linear-regression".into(),
            DistributionSpec::LogisticLabels { .. } => "logistic-labels".into(),
        }
    }
}

/// `m` workers holding `n` samples each, stored worker-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<Z> {
    m: usize,
    n: usize,
    tag: String,
    samples: Vec<Z>,
}

impl<Z: Clone> Dataset<Z> {
    pub fn from_samples(m: usize, n: usize, tag: &str, samples: Vec<Z>) -> Result<Self, ProblemError> {
        if m == 0 || n == 0 {
            return Err(ProblemError::Parameter(format!(
                "dataset needs m, n >= 1, got m={m}, n={n}"
            )));
        }
        if samples.len() != m * n {
            return Err(ProblemError::Parameter(format!(
                "expected {} samples, got {}",
                m * n,
                samples.len()
            )));
        }
        Ok(Self {
            m,
            n,
            tag: tag.to_string(),
            samples,
        })
    }

    /// Copy with sample `(r, k)` replaced by `z`.
    pub fn with_replaced(&self, r: usize, k: usize, z: Z) -> Self {
        let mut out = self.clone();
        out.samples[r * self.n + k] = z;
        out
    }
}

impl<Z> Dataset<Z> {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn get(&self, r: usize, k: usize) -> &Z {
        &self.samples[r * self.n + k]
    }

    pub fn worker(&self, r: usize) -> &[Z] {
        &self.samples[r * self.n..(r + 1) * self.n]
    }

    pub fn all(&self) -> &[Z] {
        &self.samples
    }
}

impl Dataset<Sample> {
    /// One row per sample: `worker,index,x0,…,label`.
    pub fn to_csv(&self) -> String {
        let d = self.samples.first().map_or(0, |s| s.features.len());
        let mut out = String::from("worker,index");
        for c in 0..d {
            out.push_str(&format!(",x{c}"));
        }
        out.push_str(",label\n");
        for r in 0..self.m {
            for k in 0..self.n {
                let s = self.get(r, k);
                out.push_str(&format!("{r},{k}"));
                for x in &s.features {
                    out.push_str(&format!(",{x:?}"));
                }
                out.push_str(&format!(",{:?}\n", s.label));
            }
        }
        out
    }
}

/// Draws `m·n` i.i.d. samples from `source`, reproducibly from `seed`.
pub fn draw_dataset<S: SampleSource>(
    source: &S,
    m: usize,
    n: usize,
    seed: u64,
) -> Result<Dataset<S::Item>, ProblemError> {
    if m == 0 || n == 0 {
        return Err(ProblemError::Parameter(format!(
            "dataset needs m, n >= 1, got m={m}, n={n}"
        )));
    }
    let mut rng = seed::rng(seed::derive(seed, "samples", 0));
    let samples = (0..m * n).map(|_| source.draw(&mut rng)).collect();
    Dataset::from_samples(m, n, &source.tag(), samples)
}

/// Plants a distribution and draws a dataset from it, both from `seed`.
pub fn synth_dataset(
    spec: DistributionSpec,
    m: usize,
    n: usize,
    d: usize,
    seed: u64,
) -> Result<(Distribution, Dataset<Sample>), ProblemError> {
    let dist = Distribution::new(spec, d, seed::derive(seed, "plant", 0))?;
    let data = draw_dataset(&dist, m, n, seed)?;
    Ok((dist, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lr(noise: f64) -> DistributionSpec {
        DistributionSpec::LinearRegression {
            feature_bound: 1.0,
            noise,
            planted_norm: 1.0,
        }
    }

    #[test]
    fn reproducible_single_sample() {
        let (_, a) = synth_dataset(lr(0.1), 1, 1, 1, 42).unwrap();
        let (_, b) = synth_dataset(lr(0.1), 1, 1, 1, 42).unwrap();
        assert_eq!(a.all().len(), 1);
        assert_eq!(a.get(0, 0).features[0].to_bits(), b.get(0, 0).features[0].to_bits());
        assert_eq!(a.get(0, 0).label.to_bits(), b.get(0, 0).label.to_bits());
    }

    #[test]
    fn noiseless_plant_is_exact() {
        let (dist, data) = synth_dataset(lr(0.0), 3, 7, 4, 9).unwrap();
        for s in data.all() {
            assert_eq!(s.label, dot(&s.features, &dist.planted));
            assert!(norm(&s.features) <= 1.0);
        }
    }

    #[test]
    fn logistic_label_balance() {
        let spec = DistributionSpec::LogisticLabels {
            feature_bound: 1.0,
            planted_norm: 1.0,
            label_flip: 0.0,
        };
        for seed in 0..100 {
            let (_, data) = synth_dataset(spec, 4, 25, 5, seed).unwrap();
            let pos = data.all().iter().filter(|s| s.label > 0.0).count() as f64 / 100.0;
            assert!((0.2..=0.8).contains(&pos), "seed {seed}: balance {pos}");
        }
    }

    #[test]
    fn zero_sizes_rejected() {
        assert!(synth_dataset(lr(0.0), 0, 1, 1, 0).is_err());
        assert!(synth_dataset(lr(0.0), 1, 0, 1, 0).is_err());
        assert!(synth_dataset(lr(0.0), 1, 1, 0, 0).is_err());
    }

    #[test]
    fn csv_has_one_row_per_sample() {
        let (_, data) = synth_dataset(lr(0.0), 2, 3, 2, 1).unwrap();
        let csv = data.to_csv();
        assert_eq!(csv.lines().count(), 7);
        assert!(csv.starts_with("worker,index,x0,x1,label\n"));
    }
}
