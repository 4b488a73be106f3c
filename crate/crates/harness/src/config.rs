//! Experiment configuration: a TOML document resolved into runnable core
//! objects, with sweep expansion and content fingerprints.

use crate::error::{config_err, HarnessError, Result};
use dmclab_core::bounds::{BoundInputs, IndexConvention, Variant};
use dmclab_core::chain::{build_chain, validate_chain, ChainKind, ChainSpectralReport};
use dmclab_core::engine::{
    check_sgd_stepsizes, check_sgda_stepsizes, OutputKind, RunConfig, StepsizeSchedule,
    UpdateOrder,
};
use dmclab_core::problems::{
    Distribution, DistributionSpec, LossKind, LossSpec, MinimaxKind, MinimaxLossSpec,
    SaddleDistribution, SaddleSpec,
};
use dmclab_core::seed;
use dmclab_core::stability::{PerturbationPlan, SgdProblem, SgdaProblem};
use dmclab_core::topology::{build_gossip, Topology};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

pub const DEFAULT_BUDGET: u64 = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub name: String,
    pub master_seed: u64,
    /// Cap on trajectory runs per sweep.
    #[serde(default = "default_budget")]
    pub budget: u64,
    pub dataset: DatasetSection,
    pub loss: LossSection,
    pub topology: Topology,
    pub chain: ChainKind,
    pub schedule: StepsizeSchedule,
    pub run: RunSection,
    #[serde(default)]
    pub stability_plan: PlanSection,
    #[serde(default)]
    pub bounds: BoundsSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default, skip_serializing_if = "SweepAxes::is_empty")]
    pub sweep: SweepAxes,
}

fn schema_version() -> u32 {
    crate::SCHEMA_VERSION
}

fn default_budget() -> u64 {
    DEFAULT_BUDGET
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub m: usize,
    pub n: usize,
    pub distribution: DataSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DataSpec {
    LinearRegression {
        dim: usize,
        feature_bound: f64,
        noise: f64,
        planted_norm: f64,
    },
    LogisticLabels {
        dim: usize,
        feature_bound: f64,
        planted_norm: f64,
        #[serde(default)]
        label_flip: f64,
    },
    Saddle {
        dim_w: usize,
        dim_v: usize,
        mean_scale: f64,
        noise: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossName {
    LeastSquares,
    Logistic,
    Hinge,
    Zero,
    Bilinear,
    Scsc,
}

impl LossName {
    pub fn as_str(&self) -> &'static str {
        match self {
            LossName::LeastSquares => "least-squares",
            LossName::Logistic => "logistic",
            LossName::Hinge => "hinge",
            LossName::Zero => "zero",
            LossName::Bilinear => "bilinear",
            LossName::Scsc => "scsc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSection {
    pub kind: LossName,
    /// Radius of the primal ball `W`.
    pub radius: f64,
    /// Radius of the dual ball `V` (saddle losses).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius_v: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    /// Coupled perturbation estimate paired with the stability bound.
    Stability,
    /// Consensus error against its per-step bound.
    Consensus,
    /// Chain mixing gap against the `n^{3/2} λ(H)^t` envelope.
    Mixing,
    /// One trajectory; reports the final empirical risk.
    Trajectory,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Stability => "stability",
            Task::Consensus => "consensus",
            Task::Mixing => "mixing",
            Task::Trajectory => "trajectory",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub horizon: usize,
    pub order: UpdateOrder,
    pub output: OutputKind,
    pub task: Task,
    #[serde(default)]
    pub shared_path: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSection {
    pub replications: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsample: Option<usize>,
    #[serde(default)]
    pub alias_replacement: bool,
}

impl Default for PlanSection {
    fn default() -> Self {
        Self {
            replications: 20,
            subsample: None,
            alias_replacement: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    pub convention: IndexConvention,
    pub variant: Variant,
}

impl Default for BoundsSection {
    fn default() -> Self {
        Self {
            convention: IndexConvention::Main,
            variant: Variant::Main,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub format: Format,
    /// Dump the per-pair distance matrix next to stability reports.
    #[serde(default)]
    pub per_pair: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            format: Format::Csv,
            per_pair: false,
        }
    }
}

/// Lists to cross. Empty lists leave the base value in place.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub topology: Vec<Topology>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub order: Vec<UpdateOrder>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub m: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub n: Vec<usize>,
    /// Chain family parameter: `hold` for lazy cycles, `flip` for two-state.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hold: Vec<f64>,
    /// Constant stepsize.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub horizon: Vec<usize>,
}

impl SweepAxes {
    pub fn is_empty(&self) -> bool {
        self.topology.is_empty()
            && self.order.is_empty()
            && self.m.is_empty()
            && self.n.is_empty()
            && self.hold.is_empty()
            && self.eta.is_empty()
            && self.horizon.is_empty()
    }

    pub fn cell_count(&self) -> usize {
        [
            self.topology.len(),
            self.order.len(),
            self.m.len(),
            self.n.len(),
            self.hold.len(),
            self.eta.len(),
            self.horizon.len(),
        ]
        .iter()
        .map(|&k| k.max(1))
        .product()
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        if cfg.schema_version != crate::SCHEMA_VERSION {
            return Err(HarnessError::Config(format!(
                "schema_version {} is not supported (expected {})",
                cfg.schema_version,
                crate::SCHEMA_VERSION
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// Single-line JSON with sorted keys.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes to JSON");
        serde_json::to_string(&value).expect("JSON value serializes")
    }

    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn fingerprint(&self) -> String {
        Sha256::digest(self.canonical_json().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn is_saddle(&self) -> bool {
        matches!(self.dataset.distribution, DataSpec::Saddle { .. })
    }

    /// Trajectory runs one cell costs.
    pub fn runs_per_cell(&self) -> u64 {
        match self.run.task {
            Task::Stability => {
                let mn = (self.dataset.m * self.dataset.n) as u64;
                let pairs = self.stability_plan.subsample.map_or(mn, |k| (k as u64).min(mn));
                self.stability_plan.replications as u64 * (pairs + 1)
            }
            Task::Consensus | Task::Trajectory => 1,
            Task::Mixing => 0,
        }
    }

    /// Sweep cells in row order; each has an empty sweep section.
    pub fn expand(&self) -> Result<Vec<ExperimentConfig>> {
        let axes = &self.sweep;
        if !axes.eta.is_empty() && !self.schedule.is_constant() {
            return Err(HarnessError::Config(
                "an eta sweep needs a constant schedule".into(),
            ));
        }
        if !axes.hold.is_empty() && matches!(self.chain, ChainKind::Uniform) {
            return Err(HarnessError::Config(
                "a hold sweep needs a lazy-cycle or two-state chain".into(),
            ));
        }
        let or_base = |v: &Vec<usize>, base: usize| if v.is_empty() { vec![base] } else { v.clone() };
        let topologies = if axes.topology.is_empty() { vec![self.topology] } else { axes.topology.clone() };
        let orders = if axes.order.is_empty() { vec![self.run.order] } else { axes.order.clone() };
        let ms = or_base(&axes.m, self.dataset.m);
        let ns = or_base(&axes.n, self.dataset.n);
        let holds: Vec<Option<f64>> = if axes.hold.is_empty() {
            vec![None]
        } else {
            axes.hold.iter().copied().map(Some).collect()
        };
        let etas: Vec<Option<f64>> = if axes.eta.is_empty() {
            vec![None]
        } else {
            axes.eta.iter().copied().map(Some).collect()
        };
        let horizons = or_base(&axes.horizon, self.run.horizon);

        let mut base = self.clone();
        base.sweep = SweepAxes::default();
        let mut cells = Vec::with_capacity(axes.cell_count());
        for &topology in &topologies {
            for &order in &orders {
                for &m in &ms {
                    for &n in &ns {
                        for &hold in &holds {
                            for &eta in &etas {
                                for &horizon in &horizons {
                                    let mut c = base.clone();
                                    c.topology = topology;
                                    c.run.order = order;
                                    c.dataset.m = m;
                                    c.dataset.n = n;
                                    c.run.horizon = horizon;
                                    if let Some(h) = hold {
                                        c.chain = match c.chain {
                                            ChainKind::LazyCycle { .. } => ChainKind::LazyCycle { hold: h },
                                            ChainKind::TwoState { .. } => ChainKind::TwoState { flip: h },
                                            ChainKind::Uniform => unreachable!("rejected above"),
                                        };
                                    }
                                    if let Some(e) = eta {
                                        c.schedule = StepsizeSchedule::Constant { eta: e };
                                    }
                                    cells.push(c);
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(cells)
    }

    /// Rejects the sweep if it would exceed the run budget.
    pub fn check_budget(&self, cells: &[ExperimentConfig]) -> Result<u64> {
        let runs: u64 = cells.iter().map(|c| c.runs_per_cell()).sum();
        if runs > self.budget {
            return Err(HarnessError::Budget {
                runs,
                cap: self.budget,
            });
        }
        Ok(runs)
    }
}

#[derive(Debug, Clone)]
pub enum Problem {
    Sgd(SgdProblem),
    Sgda(SgdaProblem),
}

/// A cell resolved into core objects.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub run: RunConfig,
    pub problem: Problem,
    pub chain_report: ChainSpectralReport,
}

impl Prepared {
    pub fn lipschitz(&self) -> f64 {
        match &self.problem {
            Problem::Sgd(p) => p.loss.lipschitz,
            Problem::Sgda(p) => p.loss.lipschitz,
        }
    }

    pub fn smooth(&self) -> bool {
        match &self.problem {
            Problem::Sgd(p) => p.loss.is_smooth(),
            Problem::Sgda(_) => true,
        }
    }

    /// Bound inputs for this cell: `λ` from the gossip matrix, constants from
    /// the certified loss, chain constants from the spectral report.
    pub fn bound_inputs(&self) -> Result<BoundInputs> {
        let etas = self.run.schedule.etas(self.run.horizon).map_err(config_err)?;
        let (m, n) = (self.run.gossip.m(), self.run.chain.n());
        let mut inputs = BoundInputs::new(etas, self.run.gossip.lambda(), self.lipschitz(), m, n);
        match &self.problem {
            Problem::Sgd(p) => {
                if let Some(b) = p.loss.beta {
                    inputs = inputs.with_beta(b);
                }
            }
            Problem::Sgda(p) => {
                inputs = inputs.with_beta(p.loss.beta);
                if p.loss.rho > 0.0 {
                    inputs = inputs.with_rho(p.loss.rho);
                }
            }
        }
        inputs.lambda_h = self.chain_report.lambda_h;
        if let (Some(k), Some(c)) = (self.chain_report.k_h, self.chain_report.c_h) {
            inputs.k_h = k;
            inputs.c_h = c;
        }
        Ok(inputs)
    }

    pub fn plan(cfg: &ExperimentConfig) -> PerturbationPlan {
        PerturbationPlan {
            pairs: None,
            subsample: cfg.stability_plan.subsample,
            replications: cfg.stability_plan.replications,
            alias_replacement: cfg.stability_plan.alias_replacement,
        }
    }
}

fn sgd_loss_kind(name: LossName) -> Option<LossKind> {
    match name {
        LossName::LeastSquares => Some(LossKind::LeastSquares),
        LossName::Logistic => Some(LossKind::Logistic),
        LossName::Hinge => Some(LossKind::Hinge),
        LossName::Zero => Some(LossKind::Zero),
        LossName::Bilinear | LossName::Scsc => None,
    }
}

/// Validates a single cell and builds its core objects.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    if !cfg.sweep.is_empty() {
        return Err(HarnessError::Config("prepare expects an expanded cell".into()));
    }
    let (m, n, horizon) = (cfg.dataset.m, cfg.dataset.n, cfg.run.horizon);
    if m == 0 || n == 0 {
        return Err(HarnessError::Config(format!("m and n must be positive, got m={m}, n={n}")));
    }
    if horizon == 0 && cfg.run.task != Task::Mixing {
        return Err(HarnessError::Config("horizon must be positive".into()));
    }
    if cfg.run.task == Task::Stability {
        if cfg.stability_plan.replications == 0 {
            return Err(HarnessError::Config("stability_plan.replications must be positive".into()));
        }
        if cfg.stability_plan.subsample == Some(0) {
            return Err(HarnessError::Config("stability_plan.subsample must be positive".into()));
        }
    }
    let gossip = build_gossip(cfg.topology, m).map_err(config_err)?;
    let chain = build_chain(cfg.chain, n).map_err(config_err)?;
    let chain_report = validate_chain(&chain).map_err(config_err)?;
    let etas = cfg.schedule.etas(horizon).map_err(config_err)?;
    let plant_seed = seed::derive(cfg.master_seed, "plant", 0);

    let problem = match (cfg.dataset.distribution, sgd_loss_kind(cfg.loss.kind)) {
        (DataSpec::Saddle { dim_w, dim_v, mean_scale, noise }, None) => {
            let spec = SaddleSpec {
                dim_w,
                dim_v,
                mean_scale,
                noise,
            };
            let distribution = SaddleDistribution::new(spec, plant_seed).map_err(config_err)?;
            let kind = if cfg.loss.kind == LossName::Scsc {
                MinimaxKind::Scsc
            } else {
                MinimaxKind::Bilinear
            };
            let radius_v = cfg.loss.radius_v.unwrap_or(cfg.loss.radius);
            let rho = cfg.loss.rho.unwrap_or(0.0);
            let loss = MinimaxLossSpec::certify(kind, rho, &distribution, cfg.loss.radius, radius_v)
                .map_err(config_err)?;
            check_sgda_stepsizes(&etas, loss.beta).map_err(config_err)?;
            Problem::Sgda(SgdaProblem {
                loss,
                distribution,
                m,
                n,
            })
        }
        (DataSpec::Saddle { .. }, Some(_)) | (_, None) => {
            return Err(HarnessError::Config(format!(
                "loss `{}` does not match the `{}` dataset",
                cfg.loss.kind.as_str(),
                if cfg.is_saddle() { "saddle" } else { "supervised" }
            )));
        }
        (supervised, Some(kind)) => {
            let (spec, dim) = match supervised {
                DataSpec::LinearRegression {
                    dim,
                    feature_bound,
                    noise,
                    planted_norm,
                } => (
                    DistributionSpec::LinearRegression {
                        feature_bound,
                        noise,
                        planted_norm,
                    },
                    dim,
                ),
                DataSpec::LogisticLabels {
                    dim,
                    feature_bound,
                    planted_norm,
                    label_flip,
                } => (
                    DistributionSpec::LogisticLabels {
                        feature_bound,
                        planted_norm,
                        label_flip,
                    },
                    dim,
                ),
                DataSpec::Saddle { .. } => unreachable!("matched above"),
            };
            let distribution = Distribution::new(spec, dim, plant_seed).map_err(config_err)?;
            let loss = if kind == LossKind::Zero {
                LossSpec::zero(cfg.loss.radius)
            } else {
                LossSpec::certify(kind, &distribution, cfg.loss.radius).map_err(config_err)?
            };
            check_sgd_stepsizes(&etas, loss.beta).map_err(config_err)?;
            Problem::Sgd(SgdProblem {
                loss,
                distribution,
                m,
                n,
            })
        }
    };

    let mut run = RunConfig::new(gossip, chain, cfg.schedule.clone(), horizon, cfg.run.order, cfg.master_seed);
    run.shared_path = cfg.run.shared_path;
    Ok(Prepared {
        run,
        problem,
        chain_report,
    })
}

/// Expands, validates every cell and checks the budget before anything runs.
pub fn resolve(cfg: &ExperimentConfig) -> Result<Vec<(ExperimentConfig, Prepared)>> {
    let cells = cfg.expand()?;
    cfg.check_budget(&cells)?;
    cells
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let p = prepare(&c).map_err(|e| match e {
                HarnessError::Config(msg) => HarnessError::Config(format!("cell {i}: {msg}")),
                other => other,
            })?;
            Ok((c, p))
        })
        .collect()
}
