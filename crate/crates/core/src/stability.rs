//! Empirical on-average argument stability and risk-gap estimates.
//!
//! For every replication a dataset `S`, an independent copy `S̃` and the
//! workers' index paths are drawn from the replication seed. `A(S)` runs once;
//! each perturbed run `A(S_rk)` (sample `k` at worker `r` swapped for its
//! counterpart in `S̃`) reuses exactly the same index paths and start point.

use crate::engine::{
    run_dmcsgd_on_paths, run_dmcsgda_on_paths, sample_paths, EngineError, OutputKind, RecordFlags,
    RunConfig, TrajectoryRecord,
};
use crate::linalg::{dist, mean_stderr};
use crate::problems::{
    draw_dataset, empirical_risk_unchecked, erm_reference, mean_sample, population_risk,
    primal_minimum, primal_value, project, weak_pd_gap, Dataset, Distribution, DistributionSpec,
    LossKind, LossSpec, MinimaxLossSpec, ProblemError, SaddleDistribution, SaddleSample, Sample,
};
use crate::seed;
use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fresh-sample count used to approximate the population minimizer when no
/// closed form exists.
pub const REFERENCE_SAMPLES: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilityError {
    #[error("invalid estimation parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("coupling violated: {0}")]
    Coupling(String),
}

/// Supervised problem: loss plus data distribution and sizes.
#[derive(Debug, Clone)]
pub struct SgdProblem {
    pub loss: LossSpec,
    pub distribution: Distribution,
    pub m: usize,
    pub n: usize,
}

#[derive(Debug, Clone)]
pub struct SgdaProblem {
    pub loss: MinimaxLossSpec,
    pub distribution: SaddleDistribution,
    pub m: usize,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationPlan {
    /// Explicit pairs; all `m·n` pairs when absent.
    pub pairs: Option<Vec<(usize, usize)>>,
    /// Evaluate only this many pairs per replication, drawn without
    /// replacement from the replication seed.
    pub subsample: Option<usize>,
    pub replications: usize,
    /// Diagnostic: use `S̃ = S`.
    pub alias_replacement: bool,
}

impl PerturbationPlan {
    pub fn all_pairs(replications: usize) -> Self {
        Self {
            pairs: None,
            subsample: None,
            replications,
            alias_replacement: false,
        }
    }

    fn candidate_pairs(&self, m: usize, n: usize) -> Result<Vec<(usize, usize)>, StabilityError> {
        let pairs = match &self.pairs {
            Some(p) => p.clone(),
            None => (0..m).flat_map(|r| (0..n).map(move |k| (r, k))).collect(),
        };
        if pairs.is_empty() {
            return Err(StabilityError::Parameter("no perturbation pairs".into()));
        }
        if let Some(&(r, k)) = pairs.iter().find(|(r, k)| *r >= m || *k >= n) {
            return Err(StabilityError::Parameter(format!(
                "pair ({r},{k}) outside [0,{m})x[0,{n})"
            )));
        }
        Ok(pairs)
    }

    fn pairs_for(&self, all: &[(usize, usize)], rep_seed: u64) -> Vec<(usize, usize)> {
        match self.subsample {
            Some(k) if k < all.len() => {
                let mut rng = seed::rng(seed::derive(rep_seed, "pairs", 0));
                let mut idx = sample_indices(&mut rng, all.len(), k).into_vec();
                idx.sort_unstable();
                idx.into_iter().map(|i| all[i]).collect()
            }
            _ => all.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub output: OutputKind,
    /// `(1/mn) ΣΣ E‖A(S) − A(S_rk)‖` (primal block).
    pub epsilon_hat: f64,
    pub stderr: f64,
    /// Sum over both blocks, SGDA only.
    pub sgda_epsilon_hat: Option<f64>,
    pub sgda_stderr: Option<f64>,
    /// Mean distance per `(r, k)`; `None` where never evaluated.
    pub per_pair: Vec<Vec<Option<f64>>>,
    pub replications: usize,
    pub per_replication: Vec<f64>,
    pub bound_value: Option<f64>,
    /// `estimate ≤ bound`
    pub dominated: Option<bool>,
    /// `estimate − 2·stderr ≤ bound`
    pub conservative: Option<bool>,
}

impl StabilityReport {
    /// The estimate compared against bounds: the block sum for SGDA.
    pub fn estimate(&self) -> (f64, f64) {
        match (self.sgda_epsilon_hat, self.sgda_stderr) {
            (Some(e), Some(s)) => (e, s),
            _ => (self.epsilon_hat, self.stderr),
        }
    }

    pub fn attach_bound(&mut self, bound: f64) {
        let (e, s) = self.estimate();
        self.bound_value = Some(bound);
        self.dominated = Some(e <= bound);
        self.conservative = Some(e - 2.0 * s <= bound);
    }

    /// Per-pair means as CSV `worker,index,mean_distance`.
    pub fn per_pair_csv(&self) -> String {
        let mut out = String::from("worker,index,mean_distance\n");
        for (r, row) in self.per_pair.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                match v {
                    Some(x) => out.push_str(&format!("{r},{k},{x:?}\n")),
                    None => out.push_str(&format!("{r},{k},\n")),
                }
            }
        }
        out
    }
}

fn replication_seed(master: u64, rep: usize) -> u64 {
    seed::derive(master, "replication", rep as u64)
}

fn lean_config(config: &RunConfig, seed: u64) -> RunConfig {
    let mut c = config.clone();
    c.seed = seed;
    c.record = RecordFlags {
        per_node: false,
        consensus: false,
        grad_norm: false,
        paths: true,
    };
    c
}

fn verify_coupling(base: &TrajectoryRecord, other: &TrajectoryRecord) -> Result<(), StabilityError> {
    if base.paths != other.paths {
        return Err(StabilityError::Coupling(
            "perturbed run consumed a different index sequence".into(),
        ));
    }
    Ok(())
}

/// `‖A(S) − A(S_rk)‖` for each pair, all runs sharing `paths`.
pub fn pair_distances_sgd(
    config: &RunConfig,
    loss: &LossSpec,
    s: &Dataset<Sample>,
    s_tilde: &Dataset<Sample>,
    paths: &[Vec<usize>],
    pairs: &[(usize, usize)],
    output: OutputKind,
) -> Result<Vec<f64>, StabilityError> {
    let base = run_dmcsgd_on_paths(config, loss, s, paths.to_vec())?;
    pairs
        .par_iter()
        .map(|&(r, k)| {
            let replacement = s_tilde.get(r, k);
            if replacement == s.get(r, k) {
                return Ok(0.0);
            }
            let perturbed = s.with_replaced(r, k, replacement.clone());
            let rec = run_dmcsgd_on_paths(config, loss, &perturbed, paths.to_vec())?;
            verify_coupling(&base, &rec)?;
            Ok(dist(base.output_w(output), rec.output_w(output)))
        })
        .collect()
}

/// Per-pair `(‖Δw‖, ‖Δv‖)` for DMc-SGDA.
pub fn pair_distances_sgda(
    config: &RunConfig,
    loss: &MinimaxLossSpec,
    s: &Dataset<SaddleSample>,
    s_tilde: &Dataset<SaddleSample>,
    paths: &[Vec<usize>],
    pairs: &[(usize, usize)],
    output: OutputKind,
) -> Result<Vec<(f64, f64)>, StabilityError> {
    let base = run_dmcsgda_on_paths(config, loss, s, paths.to_vec())?;
    let base_v = base.output_v(output).expect("saddle record has a dual block");
    pairs
        .par_iter()
        .map(|&(r, k)| {
            let replacement = s_tilde.get(r, k);
            if replacement == s.get(r, k) {
                return Ok((0.0, 0.0));
            }
            let perturbed = s.with_replaced(r, k, replacement.clone());
            let rec = run_dmcsgda_on_paths(config, loss, &perturbed, paths.to_vec())?;
            verify_coupling(&base, &rec)?;
            let v = rec.output_v(output).expect("saddle record has a dual block");
            Ok((dist(base.output_w(output), rec.output_w(output)), dist(base_v, v)))
        })
        .collect()
}

struct Accumulator {
    sums: Vec<Vec<f64>>,
    counts: Vec<Vec<usize>>,
}

impl Accumulator {
    fn new(m: usize, n: usize) -> Self {
        Self {
            sums: vec![vec![0.0; n]; m],
            counts: vec![vec![0; n]; m],
        }
    }

    fn add(&mut self, pairs: &[(usize, usize)], values: &[f64]) {
        for (&(r, k), v) in pairs.iter().zip(values) {
            self.sums[r][k] += v;
            self.counts[r][k] += 1;
        }
    }

    fn means(&self) -> Vec<Vec<Option<f64>>> {
        self.sums
            .iter()
            .zip(&self.counts)
            .map(|(s, c)| {
                s.iter()
                    .zip(c)
                    .map(|(x, k)| (*k > 0).then(|| x / *k as f64))
                    .collect()
            })
            .collect()
    }
}

fn check_plan(plan: &PerturbationPlan) -> Result<(), StabilityError> {
    if plan.replications == 0 {
        return Err(StabilityError::Parameter("replications must be positive".into()));
    }
    if plan.subsample == Some(0) {
        return Err(StabilityError::Parameter("subsample must be positive".into()));
    }
    Ok(())
}

fn draw_pair<S: crate::problems::SampleSource>(
    source: &S,
    m: usize,
    n: usize,
    rep_seed: u64,
    alias: bool,
) -> Result<(Dataset<S::Item>, Dataset<S::Item>), ProblemError> {
    let s = draw_dataset(source, m, n, seed::derive(rep_seed, "S", 0))?;
    let s_tilde = if alias {
        s.clone()
    } else {
        draw_dataset(source, m, n, seed::derive(rep_seed, "S-tilde", 0))?
    };
    Ok((s, s_tilde))
}

fn pair_mean(values: &[f64]) -> f64 {
    crate::linalg::pairwise_sum(values) / values.len() as f64
}

/// Estimates on-average argument stability of DMc-SGD.
pub fn estimate_stability(
    config: &RunConfig,
    problem: &SgdProblem,
    plan: &PerturbationPlan,
    output: OutputKind,
) -> Result<StabilityReport, StabilityError> {
    check_plan(plan)?;
    let (m, n) = (problem.m, problem.n);
    let all = plan.candidate_pairs(m, n)?;
    let mut acc = Accumulator::new(m, n);
    let mut per_rep = Vec::with_capacity(plan.replications);
    for rep in 0..plan.replications {
        let rep_seed = replication_seed(config.seed, rep);
        let (s, s_tilde) = draw_pair(&problem.distribution, m, n, rep_seed, plan.alias_replacement)?;
        let cfg = lean_config(config, rep_seed);
        let paths = sample_paths(&cfg.chain, m, cfg.horizon, rep_seed, cfg.shared_path);
        let pairs = plan.pairs_for(&all, rep_seed);
        let d = pair_distances_sgd(&cfg, &problem.loss, &s, &s_tilde, &paths, &pairs, output)?;
        acc.add(&pairs, &d);
        per_rep.push(pair_mean(&d));
    }
    let (epsilon_hat, stderr) = mean_stderr(&per_rep);
    Ok(StabilityReport {
        output,
        epsilon_hat,
        stderr,
        sgda_epsilon_hat: None,
        sgda_stderr: None,
        per_pair: acc.means(),
        replications: plan.replications,
        per_replication: per_rep,
        bound_value: None,
        dominated: None,
        conservative: None,
    })
}

/// Estimates on-average argument stability of DMc-SGDA; the block-sum
/// estimate is reported in `sgda_epsilon_hat`.
pub fn estimate_stability_sgda(
    config: &RunConfig,
    problem: &SgdaProblem,
    plan: &PerturbationPlan,
    output: OutputKind,
) -> Result<StabilityReport, StabilityError> {
    check_plan(plan)?;
    let (m, n) = (problem.m, problem.n);
    let all = plan.candidate_pairs(m, n)?;
    let mut acc = Accumulator::new(m, n);
    let mut per_rep_w = Vec::with_capacity(plan.replications);
    let mut per_rep_sum = Vec::with_capacity(plan.replications);
    for rep in 0..plan.replications {
        let rep_seed = replication_seed(config.seed, rep);
        let (s, s_tilde) = draw_pair(&problem.distribution, m, n, rep_seed, plan.alias_replacement)?;
        let cfg = lean_config(config, rep_seed);
        let paths = sample_paths(&cfg.chain, m, cfg.horizon, rep_seed, cfg.shared_path);
        let pairs = plan.pairs_for(&all, rep_seed);
        let d = pair_distances_sgda(&cfg, &problem.loss, &s, &s_tilde, &paths, &pairs, output)?;
        let dw: Vec<f64> = d.iter().map(|x| x.0).collect();
        let both: Vec<f64> = d.iter().map(|x| x.0 + x.1).collect();
        acc.add(&pairs, &both);
        per_rep_w.push(pair_mean(&dw));
        per_rep_sum.push(pair_mean(&both));
    }
    let (epsilon_hat, stderr) = mean_stderr(&per_rep_w);
    let (sum_hat, sum_se) = mean_stderr(&per_rep_sum);
    Ok(StabilityReport {
        output,
        epsilon_hat,
        stderr,
        sgda_epsilon_hat: Some(sum_hat),
        sgda_stderr: Some(sum_se),
        per_pair: acc.means(),
        replications: plan.replications,
        per_replication: per_rep_sum,
        bound_value: None,
        dominated: None,
        conservative: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    fn from(xs: &[f64]) -> Self {
        let (value, stderr) = mean_stderr(xs);
        Self { value, stderr }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapOptions {
    pub replications: usize,
    pub output: OutputKind,
    /// Monte Carlo draws when the population risk has no closed form.
    pub population_draws: usize,
}

fn population(
    loss: &LossSpec,
    w: &[f64],
    dist: &Distribution,
    draws: usize,
    seed: u64,
) -> Result<f64, ProblemError> {
    Ok(population_risk(loss, w, dist, draws, seed)?.value)
}

/// `E[R(A(S)) − R_S(A(S))]` over fresh datasets and seeds.
pub fn estimate_generalization_gap(
    config: &RunConfig,
    problem: &SgdProblem,
    options: &GapOptions,
) -> Result<Estimate, StabilityError> {
    if options.replications == 0 {
        return Err(StabilityError::Parameter("replications must be positive".into()));
    }
    let gaps: Result<Vec<f64>, StabilityError> = (0..options.replications)
        .into_par_iter()
        .map(|rep| {
            let rep_seed = seed::derive(config.seed, "generalization", rep as u64);
            let s = draw_dataset(&problem.distribution, problem.m, problem.n, rep_seed)?;
            let cfg = lean_config(config, rep_seed);
            let rec = crate::engine::run_dmcsgd(&cfg, &problem.loss, &s)?;
            let w = rec.output_w(options.output);
            let pop = population(&problem.loss, w, &problem.distribution, options.population_draws, rep_seed)?;
            Ok(pop - empirical_risk_unchecked(&problem.loss, w, s.all()))
        })
        .collect();
    Ok(Estimate::from(&gaps?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExcessDecomposition {
    /// `R(A(S)) − R_S(A(S))`
    pub gen: Estimate,
    /// `R_S(A(S)) − R_S(w_S*)`
    pub opt: Estimate,
    /// `R_S(w_S*) − R(w*)`
    pub test: Estimate,
    /// `R(A(S)) − R(w*)`
    pub excess: Estimate,
    /// `test − 2·stderr ≤ 0`
    pub test_nonpositive: bool,
    /// Largest per-replication `|gen + opt + test − excess|`.
    pub identity_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct DecompositionDiagnostics {
    /// Replace `A(S)` by `w_S*`.
    pub force_erm_output: bool,
}

/// Population minimizer over the ball: the projected plant for least squares
/// (the population risk is isotropic around `w°`), otherwise the empirical
/// minimizer of a large fresh sample.
fn population_minimizer(problem: &SgdProblem, seed_value: u64) -> Result<Vec<f64>, ProblemError> {
    match (problem.loss.kind, problem.distribution.spec) {
        (LossKind::LeastSquares, DistributionSpec::LinearRegression { .. }) => {
            Ok(project(&problem.distribution.planted, problem.loss.radius))
        }
        (LossKind::Zero, _) => Ok(vec![0.0; problem.distribution.dim]),
        _ => {
            let big = draw_dataset(&problem.distribution, 1, REFERENCE_SAMPLES, seed_value)?;
            erm_reference(&problem.loss, &big)
        }
    }
}

/// Splits the excess risk into generalization, optimization and test terms.
pub fn estimate_excess_decomposition(
    config: &RunConfig,
    problem: &SgdProblem,
    options: &GapOptions,
    diagnostics: DecompositionDiagnostics,
) -> Result<ExcessDecomposition, StabilityError> {
    if options.replications == 0 {
        return Err(StabilityError::Parameter("replications must be positive".into()));
    }
    let w_star = population_minimizer(problem, seed::derive(config.seed, "population-minimizer", 0))?;
    let draws = options.population_draws;
    let rows: Result<Vec<[f64; 4]>, StabilityError> = (0..options.replications)
        .into_par_iter()
        .map(|rep| {
            let rep_seed = seed::derive(config.seed, "decomposition", rep as u64);
            let loss = &problem.loss;
            let dist_ = &problem.distribution;
            let s = draw_dataset(dist_, problem.m, problem.n, rep_seed)?;
            let w_erm = erm_reference(loss, &s)?;
            let w_out = if diagnostics.force_erm_output {
                w_erm.clone()
            } else {
                let cfg = lean_config(config, rep_seed);
                crate::engine::run_dmcsgd(&cfg, loss, &s)?.output_w(options.output).to_vec()
            };
            let pop_seed = seed::derive(rep_seed, "population", 0);
            let r_out = population(loss, &w_out, dist_, draws, pop_seed)?;
            let r_star = population(loss, &w_star, dist_, draws, pop_seed)?;
            let rs_out = empirical_risk_unchecked(loss, &w_out, s.all());
            let rs_erm = empirical_risk_unchecked(loss, &w_erm, s.all());
            Ok([r_out - rs_out, rs_out - rs_erm, rs_erm - r_star, r_out - r_star])
        })
        .collect();
    let rows = rows?;
    let col = |i: usize| -> Vec<f64> { rows.iter().map(|r| r[i]).collect() };
    let identity_residual = rows
        .iter()
        .map(|r| (r[0] + r[1] + r[2] - r[3]).abs())
        .fold(0.0, f64::max);
    let test = Estimate::from(&col(2));
    Ok(ExcessDecomposition {
        gen: Estimate::from(&col(0)),
        opt: Estimate::from(&col(1)),
        test,
        excess: Estimate::from(&col(3)),
        test_nonpositive: test.value - 2.0 * test.stderr <= 0.0,
        identity_residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeakPdEstimate {
    pub weak_pd_population: Estimate,
    pub weak_pd_empirical: Estimate,
    pub weak_pd_gen: Estimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrimalEstimate {
    /// `F(w̄) − F_S(w̄)`
    pub primal_gen: Estimate,
    /// `F(w̄) − min_w F(w)`
    pub excess_primal: Estimate,
}

fn sgda_outputs(
    config: &RunConfig,
    problem: &SgdaProblem,
    output: OutputKind,
    rep_seed: u64,
) -> Result<(Dataset<SaddleSample>, Vec<f64>, Vec<f64>), StabilityError> {
    let s = draw_dataset(&problem.distribution, problem.m, problem.n, rep_seed)?;
    let cfg = lean_config(config, rep_seed);
    let rec = crate::engine::run_dmcsgda(&cfg, &problem.loss, &s)?;
    let w = rec.output_w(output).to_vec();
    let v = rec.output_v(output).expect("saddle record has a dual block").to_vec();
    Ok((s, w, v))
}

/// Weak primal-dual risk on the population and on `S`, with exact inner
/// optimization over the balls.
pub fn estimate_weak_pd_gap(
    config: &RunConfig,
    problem: &SgdaProblem,
    replications: usize,
    output: OutputKind,
) -> Result<WeakPdEstimate, StabilityError> {
    if replications == 0 {
        return Err(StabilityError::Parameter("replications must be positive".into()));
    }
    let rows: Result<Vec<[f64; 3]>, StabilityError> = (0..replications)
        .into_par_iter()
        .map(|rep| {
            let rep_seed = seed::derive(config.seed, "weak-pd", rep as u64);
            let (s, w, v) = sgda_outputs(config, problem, output, rep_seed)?;
            let pop = weak_pd_gap(&problem.loss, &problem.distribution.mean, &w, &v);
            let emp = weak_pd_gap(&problem.loss, &mean_sample(s.all()), &w, &v);
            Ok([pop, emp, pop - emp])
        })
        .collect();
    let rows = rows?;
    let col = |i: usize| -> Vec<f64> { rows.iter().map(|r| r[i]).collect() };
    Ok(WeakPdEstimate {
        weak_pd_population: Estimate::from(&col(0)),
        weak_pd_empirical: Estimate::from(&col(1)),
        weak_pd_gen: Estimate::from(&col(2)),
    })
}

/// Primal generalization gap and excess primal risk; needs `ρ > 0`.
pub fn estimate_primal_risk(
    config: &RunConfig,
    problem: &SgdaProblem,
    replications: usize,
    output: OutputKind,
) -> Result<PrimalEstimate, StabilityError> {
    if replications == 0 {
        return Err(StabilityError::Parameter("replications must be positive".into()));
    }
    let (_, f_min) = primal_minimum(&problem.loss, &problem.distribution.mean)?;
    let rows: Result<Vec<[f64; 2]>, StabilityError> = (0..replications)
        .into_par_iter()
        .map(|rep| {
            let rep_seed = seed::derive(config.seed, "primal", rep as u64);
            let (s, w, _) = sgda_outputs(config, problem, output, rep_seed)?;
            let f_pop = primal_value(&problem.loss, &problem.distribution.mean, &w);
            let f_emp = primal_value(&problem.loss, &mean_sample(s.all()), &w);
            Ok([f_pop - f_emp, f_pop - f_min])
        })
        .collect();
    let rows = rows?;
    Ok(PrimalEstimate {
        primal_gen: Estimate::from(&rows.iter().map(|r| r[0]).collect::<Vec<_>>()),
        excess_primal: Estimate::from(&rows.iter().map(|r| r[1]).collect::<Vec<_>>()),
    })
}
