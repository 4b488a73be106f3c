//! Decentralized Markov-chain SGD and SGDA trajectories.
//!
//! Each worker `i` walks its own copy of the shared chain `H` over its local
//! samples; at step `t` it reads sample `j_t(i)`. Two update orders exist:
//!
//! * consensus-then-gradient (CtG):
//!   `w_t(i) = P_W(Σ_l P_il w_{t−1}(l) − η_t ∇f(w_{t−1}(i); z_{j_t(i)}))`
//! * gradient-then-consensus (GtC):
//!   `w_t(i) = P_W(Σ_l P_il [w_{t−1}(l) − η_t ∇f(w_{t−1}(l); z_{j_t(l)})])`
//!
//! The recorded output is the network average `w̄_t` and its step-weighted
//! mean `Σ η_t w̄_t / Σ η_t`.

use crate::chain::{sample_path, TransitionMatrix};
use crate::linalg::{dist, dot, mean_of, pairwise_sum};
use crate::problems::{Dataset, LossSpec, MinimaxLossSpec, SaddleSample, Sample};
use crate::seed;
use crate::topology::GossipMatrix;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const STEP_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("not recorded: {0}")]
    Unavailable(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StepsizeSchedule {
    Constant { eta: f64 },
    /// `η_t = 1/(t+1)`
    Decreasing,
    Explicit { values: Vec<f64> },
}

impl StepsizeSchedule {
    /// `η_t` for `t = 1..=horizon`.
    pub fn etas(&self, horizon: usize) -> Result<Vec<f64>, EngineError> {
        let etas: Vec<f64> = match self {
            StepsizeSchedule::Constant { eta } => vec![*eta; horizon],
            StepsizeSchedule::Decreasing => (1..=horizon).map(|t| 1.0 / (t as f64 + 1.0)).collect(),
            StepsizeSchedule::Explicit { values } => {
                if values.len() < horizon {
                    return Err(EngineError::Config(format!(
                        "explicit schedule has {} values but T = {horizon}",
                        values.len()
                    )));
                }
                values[..horizon].to_vec()
            }
        };
        if let Some(bad) = etas.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
            return Err(EngineError::Config(format!("stepsize {bad} is not a nonnegative number")));
        }
        Ok(etas)
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, StepsizeSchedule::Constant { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateOrder {
    Ctg,
    Gtc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputKind {
    /// `w̄_T`
    Final,
    /// `Σ η_t w̄_t / Σ η_t`
    Averaged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordFlags {
    pub per_node: bool,
    pub consensus: bool,
    pub grad_norm: bool,
    pub paths: bool,
}

impl Default for RecordFlags {
    fn default() -> Self {
        Self {
            per_node: false,
            consensus: true,
            grad_norm: false,
            paths: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub gossip: GossipMatrix,
    pub chain: TransitionMatrix,
    pub schedule: StepsizeSchedule,
    pub horizon: usize,
    pub order: UpdateOrder,
    /// Defaults to the origin.
    pub init_w: Option<Vec<f64>>,
    pub init_v: Option<Vec<f64>>,
    pub seed: u64,
    pub record: RecordFlags,
    /// Diagnostic: every worker follows worker 0's index path.
    pub shared_path: bool,
}

impl RunConfig {
    pub fn new(
        gossip: GossipMatrix,
        chain: TransitionMatrix,
        schedule: StepsizeSchedule,
        horizon: usize,
        order: UpdateOrder,
        seed: u64,
    ) -> Self {
        Self {
            gossip,
            chain,
            schedule,
            horizon,
            order,
            init_w: None,
            init_v: None,
            seed,
            record: RecordFlags::default(),
            shared_path: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub order: UpdateOrder,
    pub etas: Vec<f64>,
    /// Network average for `t = 0..=T`.
    pub w_bar: Vec<Vec<f64>>,
    pub v_bar: Option<Vec<Vec<f64>>>,
    pub averaged_w: Vec<f64>,
    pub averaged_v: Option<Vec<f64>>,
    /// `[Σ_i ‖w̄_t − w_t(i)‖²]^{1/2}` for `t = 0..=T` (primal block).
    pub consensus: Option<Vec<f64>>,
    /// `paths[i][t−1] = j_t(i)`.
    pub paths: Option<Vec<Vec<usize>>>,
    /// `‖∇R_S(w̄_t)‖²` for `t = 0..=T`.
    pub grad_norm_sq: Option<Vec<f64>>,
    /// Running minimum of `grad_norm_sq`.
    pub grad_norm_min: Option<Vec<f64>>,
    /// `nodes[t][i] = w_t(i)`.
    pub nodes: Option<Vec<Vec<Vec<f64>>>>,
    pub nodes_v: Option<Vec<Vec<Vec<f64>>>>,
}

impl TrajectoryRecord {
    pub fn horizon(&self) -> usize {
        self.etas.len()
    }

    pub fn final_w(&self) -> &[f64] {
        &self.w_bar[self.horizon()]
    }

    pub fn final_v(&self) -> Option<&[f64]> {
        self.v_bar.as_ref().map(|v| v[self.horizon()].as_slice())
    }

    pub fn output_w(&self, kind: OutputKind) -> &[f64] {
        match kind {
            OutputKind::Final => self.final_w(),
            OutputKind::Averaged => &self.averaged_w,
        }
    }

    pub fn output_v(&self, kind: OutputKind) -> Option<&[f64]> {
        match kind {
            OutputKind::Final => self.final_v(),
            OutputKind::Averaged => self.averaged_v.as_deref(),
        }
    }

    /// Columns `t,eta_t,consensus_error[,grad_norm_sq],w_bar_0,…`.
    pub fn to_csv(&self) -> String {
        let d = self.w_bar[0].len();
        let mut out = String::from("t,eta_t,consensus_error");
        if self.grad_norm_sq.is_some() {
            out.push_str(",grad_norm_sq");
        }
        for c in 0..d {
            out.push_str(&format!(",w_bar_{c}"));
        }
        out.push('\n');
        for t in 0..=self.horizon() {
            let eta = if t == 0 { 0.0 } else { self.etas[t - 1] };
            let ce = self.consensus.as_ref().map_or(f64::NAN, |c| c[t]);
            out.push_str(&format!("{t},{eta:?},{ce:?}"));
            if let Some(g) = &self.grad_norm_sq {
                out.push_str(&format!(",{:?}", g[t]));
            }
            for x in &self.w_bar[t] {
                out.push_str(&format!(",{x:?}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Consensus error at step `t`, from the recorded series or the per-node
/// states.
pub fn consensus_error(record: &TrajectoryRecord, t: usize) -> Result<f64, EngineError> {
    if t > record.horizon() {
        return Err(EngineError::Config(format!(
            "t = {t} beyond horizon {}",
            record.horizon()
        )));
    }
    if let Some(c) = &record.consensus {
        return Ok(c[t]);
    }
    if let Some(nodes) = &record.nodes {
        return Ok(dispersion(&nodes[t], &record.w_bar[t]));
    }
    Err(EngineError::Unavailable(
        "consensus error needs consensus or per-node recording".into(),
    ))
}

fn dispersion(nodes: &[Vec<f64>], avg: &[f64]) -> f64 {
    let sq: Vec<f64> = nodes
        .iter()
        .map(|w| {
            let e = dist(w, avg);
            e * e
        })
        .collect();
    pairwise_sum(&sq).sqrt()
}

/// Index paths for all workers: worker `i` starts uniformly at random and
/// moves `horizon` steps, using its own stream derived from `seed`.
pub fn sample_paths(
    chain: &TransitionMatrix,
    m: usize,
    horizon: usize,
    seed: u64,
    shared: bool,
) -> Vec<Vec<usize>> {
    let one = |i: usize| {
        let mut rng = seed::rng(seed::derive(seed, "chain", i as u64));
        let start = rng.random_range(0..chain.n());
        sample_path(chain, start, horizon, &mut rng)
    };
    if shared {
        let p = one(0);
        vec![p; m]
    } else {
        (0..m).map(one).collect()
    }
}

fn check_point(x: &[f64], dim: usize, radius: f64, what: &str) -> Result<(), EngineError> {
    if x.len() != dim {
        return Err(EngineError::Config(format!(
            "{what} has dimension {} but the data has {dim}",
            x.len()
        )));
    }
    if crate::linalg::norm(x) > radius * (1.0 + STEP_TOL) {
        return Err(EngineError::Config(format!("{what} lies outside the projection ball")));
    }
    Ok(())
}

fn check_shapes<Z>(config: &RunConfig, data: &Dataset<Z>) -> Result<(), EngineError> {
    if config.gossip.m() != data.m() {
        return Err(EngineError::Config(format!(
            "gossip matrix is {}x{} but the dataset has m = {}",
            config.gossip.m(),
            config.gossip.m(),
            data.m()
        )));
    }
    if config.chain.n() != data.n() {
        return Err(EngineError::Config(format!(
            "chain has {} states but each worker holds n = {} samples",
            config.chain.n(),
            data.n()
        )));
    }
    Ok(())
}

fn check_paths(paths: &[Vec<usize>], m: usize, n: usize, horizon: usize) -> Result<(), EngineError> {
    if paths.len() != m || paths.iter().any(|p| p.len() < horizon || p.iter().any(|&j| j >= n)) {
        return Err(EngineError::Config("index paths do not match m, n, T".into()));
    }
    Ok(())
}

/// Smooth runs require `η_t ≤ 2/β`.
pub fn check_sgd_stepsizes(etas: &[f64], beta: Option<f64>) -> Result<(), EngineError> {
    if let Some(b) = beta.filter(|b| *b > 0.0) {
        let cap = 2.0 / b;
        if let Some((t, e)) = etas.iter().enumerate().find(|(_, e)| **e > cap * (1.0 + STEP_TOL)) {
            return Err(EngineError::Config(format!(
                "stepsize eta_{} = {e} exceeds 2/beta = {cap}",
                t + 1
            )));
        }
    }
    Ok(())
}

/// Smooth SGDA requires `Σ η_t ≤ 1/(2β)`.
pub fn check_sgda_stepsizes(etas: &[f64], beta: f64) -> Result<(), EngineError> {
    if beta > 0.0 {
        let total = pairwise_sum(etas);
        let cap = 1.0 / (2.0 * beta);
        if total > cap * (1.0 + STEP_TOL) {
            return Err(EngineError::Config(format!(
                "stepsize sum {total} exceeds 1/(2 beta) = {cap}"
            )));
        }
    }
    Ok(())
}

/// One gossip round on `states`, row `i` of `P` applied in index order.
fn mix(p: &GossipMatrix, states: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = states.len();
    let dim = states[0].len();
    (0..m)
        .map(|i| {
            (0..dim)
                .map(|c| {
                    let mut acc = 0.0;
                    for (l, s) in states.iter().enumerate() {
                        acc += p.get(i, l) * s[c];
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

/// Applies one update of either order to a block. `sign` is −1 for descent
/// and +1 for ascent.
fn block_update(
    order: UpdateOrder,
    p: &GossipMatrix,
    states: &[Vec<f64>],
    grads: &[Vec<f64>],
    eta: f64,
    sign: f64,
    radius: f64,
) -> Vec<Vec<f64>> {
    let step = sign * eta;
    let mut next = match order {
        UpdateOrder::Ctg => {
            let mut mixed = mix(p, states);
            for (x, g) in mixed.iter_mut().zip(grads) {
                for (xc, gc) in x.iter_mut().zip(g) {
                    *xc += step * gc;
                }
            }
            mixed
        }
        UpdateOrder::Gtc => {
            let local: Vec<Vec<f64>> = states
                .iter()
                .zip(grads)
                .map(|(x, g)| x.iter().zip(g).map(|(a, b)| a + step * b).collect())
                .collect();
            mix(p, &local)
        }
    };
    for x in &mut next {
        crate::problems::project_in_place(x, radius);
    }
    next
}

struct Recorder {
    flags: RecordFlags,
    w_bar: Vec<Vec<f64>>,
    v_bar: Vec<Vec<f64>>,
    consensus: Vec<f64>,
    nodes: Vec<Vec<Vec<f64>>>,
    nodes_v: Vec<Vec<Vec<f64>>>,
    acc_w: Vec<f64>,
    acc_v: Vec<f64>,
}

impl Recorder {
    fn new(flags: RecordFlags, dw: usize, dv: usize) -> Self {
        Self {
            flags,
            w_bar: Vec::new(),
            v_bar: Vec::new(),
            consensus: Vec::new(),
            nodes: Vec::new(),
            nodes_v: Vec::new(),
            acc_w: vec![0.0; dw],
            acc_v: vec![0.0; dv],
        }
    }

    fn push(&mut self, eta: f64, w: &[Vec<f64>], v: Option<&[Vec<f64>]>) {
        let wb = mean_of(w);
        crate::linalg::axpy(eta, &wb, &mut self.acc_w);
        if self.flags.consensus {
            self.consensus.push(dispersion(w, &wb));
        }
        if self.flags.per_node {
            self.nodes.push(w.to_vec());
        }
        self.w_bar.push(wb);
        if let Some(v) = v {
            let vb = mean_of(v);
            crate::linalg::axpy(eta, &vb, &mut self.acc_v);
            if self.flags.per_node {
                self.nodes_v.push(v.to_vec());
            }
            self.v_bar.push(vb);
        }
    }

    fn finish(
        self,
        order: UpdateOrder,
        etas: Vec<f64>,
        paths: Vec<Vec<usize>>,
        grad_norm_sq: Option<Vec<f64>>,
        saddle: bool,
    ) -> TrajectoryRecord {
        let total = pairwise_sum(&etas);
        let average = |acc: &[f64], first: &[f64]| -> Vec<f64> {
            if total > 0.0 {
                acc.iter().map(|x| x / total).collect()
            } else {
                first.to_vec()
            }
        };
        let averaged_w = average(&self.acc_w, &self.w_bar[0]);
        let averaged_v = saddle.then(|| average(&self.acc_v, &self.v_bar[0]));
        let grad_norm_min = grad_norm_sq.as_ref().map(|g| {
            let mut best = f64::INFINITY;
            g.iter()
                .map(|x| {
                    best = best.min(*x);
                    best
                })
                .collect()
        });
        TrajectoryRecord {
            order,
            etas,
            w_bar: self.w_bar,
            v_bar: saddle.then_some(self.v_bar),
            averaged_w,
            averaged_v,
            consensus: self.flags.consensus.then_some(self.consensus),
            paths: self.flags.paths.then_some(paths),
            grad_norm_sq,
            grad_norm_min,
            nodes: self.flags.per_node.then_some(self.nodes),
            nodes_v: (saddle && self.flags.per_node).then_some(self.nodes_v),
        }
    }
}

fn full_gradient_sq(loss: &LossSpec, w: &[f64], samples: &[Sample]) -> f64 {
    let d = w.len();
    let mut per = vec![vec![0.0; d]; samples.len()];
    for (g, z) in per.iter_mut().zip(samples) {
        loss.grad_into(w, z, g);
    }
    let g = mean_of(&per);
    dot(&g, &g)
}

/// Runs DMc-SGD with paths drawn from `config.seed`.
pub fn run_dmcsgd(
    config: &RunConfig,
    loss: &LossSpec,
    data: &Dataset<Sample>,
) -> Result<TrajectoryRecord, EngineError> {
    check_shapes(config, data)?;
    let paths = sample_paths(
        &config.chain,
        data.m(),
        config.horizon,
        config.seed,
        config.shared_path,
    );
    run_dmcsgd_on_paths(config, loss, data, paths)
}

/// Runs DMc-SGD on externally supplied index paths (used for coupling).
pub fn run_dmcsgd_on_paths(
    config: &RunConfig,
    loss: &LossSpec,
    data: &Dataset<Sample>,
    paths: Vec<Vec<usize>>,
) -> Result<TrajectoryRecord, EngineError> {
    check_shapes(config, data)?;
    let (m, n, horizon) = (data.m(), data.n(), config.horizon);
    check_paths(&paths, m, n, horizon)?;
    let dim = data.get(0, 0).features.len();
    let etas = config.schedule.etas(horizon)?;
    check_sgd_stepsizes(&etas, loss.beta)?;
    let init = config.init_w.clone().unwrap_or_else(|| vec![0.0; dim]);
    check_point(&init, dim, loss.radius, "initial w")?;

    let mut w = vec![init; m];
    let mut rec = Recorder::new(config.record, dim, 0);
    rec.push(0.0, &w, None);
    let mut gnorm = config
        .record
        .grad_norm
        .then(|| vec![full_gradient_sq(loss, &rec.w_bar[0], data.all())]);
    let mut grads = vec![vec![0.0; dim]; m];
    for t in 1..=horizon {
        let eta = etas[t - 1];
        for (i, g) in grads.iter_mut().enumerate() {
            loss.grad_into(&w[i], data.get(i, paths[i][t - 1]), g);
        }
        w = block_update(config.order, &config.gossip, &w, &grads, eta, -1.0, loss.radius);
        rec.push(eta, &w, None);
        if let Some(g) = gnorm.as_mut() {
            g.push(full_gradient_sq(loss, &rec.w_bar[t], data.all()));
        }
    }
    Ok(rec.finish(config.order, etas, paths, gnorm, false))
}

/// Runs DMc-SGDA with paths drawn from `config.seed`.
pub fn run_dmcsgda(
    config: &RunConfig,
    loss: &MinimaxLossSpec,
    data: &Dataset<SaddleSample>,
) -> Result<TrajectoryRecord, EngineError> {
    check_shapes(config, data)?;
    let paths = sample_paths(
        &config.chain,
        data.m(),
        config.horizon,
        config.seed,
        config.shared_path,
    );
    run_dmcsgda_on_paths(config, loss, data, paths)
}

/// Runs DMc-SGDA on externally supplied index paths. Both blocks read the
/// same sample at each step.
pub fn run_dmcsgda_on_paths(
    config: &RunConfig,
    loss: &MinimaxLossSpec,
    data: &Dataset<SaddleSample>,
    paths: Vec<Vec<usize>>,
) -> Result<TrajectoryRecord, EngineError> {
    check_shapes(config, data)?;
    let (m, n, horizon) = (data.m(), data.n(), config.horizon);
    check_paths(&paths, m, n, horizon)?;
    let z0 = data.get(0, 0);
    let (dw, dv) = (z0.b.len(), z0.c.len());
    let etas = config.schedule.etas(horizon)?;
    check_sgda_stepsizes(&etas, loss.beta)?;
    let init_w = config.init_w.clone().unwrap_or_else(|| vec![0.0; dw]);
    let init_v = config.init_v.clone().unwrap_or_else(|| vec![0.0; dv]);
    check_point(&init_w, dw, loss.radius_w, "initial w")?;
    check_point(&init_v, dv, loss.radius_v, "initial v")?;

    let mut w = vec![init_w; m];
    let mut v = vec![init_v; m];
    let mut rec = Recorder::new(config.record, dw, dv);
    rec.push(0.0, &w, Some(&v));
    for t in 1..=horizon {
        let eta = etas[t - 1];
        let (gw, gv): (Vec<_>, Vec<_>) = (0..m)
            .map(|i| loss.grad_unchecked(&w[i], &v[i], data.get(i, paths[i][t - 1])))
            .unzip();
        let next_w = block_update(config.order, &config.gossip, &w, &gw, eta, -1.0, loss.radius_w);
        let next_v = block_update(config.order, &config.gossip, &v, &gv, eta, 1.0, loss.radius_v);
        w = next_w;
        v = next_v;
        rec.push(eta, &w, Some(&v));
    }
    Ok(rec.finish(config.order, etas, paths, None, true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{build_chain, ChainKind};
    use crate::problems::{synth_dataset, DistributionSpec, LossKind, MinimaxKind};
    use crate::topology::{build_gossip, Topology};

    fn ls_setup(m: usize, n: usize) -> (LossSpec, Dataset<Sample>) {
        let spec = DistributionSpec::LinearRegression {
            feature_bound: 1.0,
            noise: 0.1,
            planted_norm: 0.5,
        };
        let (dist, data) = synth_dataset(spec, m, n, 3, 17).unwrap();
        (LossSpec::certify(LossKind::LeastSquares, &dist, 1.0).unwrap(), data)
    }

    fn config(topo: Topology, m: usize, n: usize, eta: f64, horizon: usize, order: UpdateOrder) -> RunConfig {
        RunConfig::new(
            build_gossip(topo, m).unwrap(),
            build_chain(ChainKind::LazyCycle { hold: 0.5 }, n).unwrap(),
            StepsizeSchedule::Constant { eta },
            horizon,
            order,
            99,
        )
    }

    #[test]
    fn zero_steps_keep_init() {
        let (loss, data) = ls_setup(4, 5);
        let mut cfg = config(Topology::Ring, 4, 5, 0.0, 20, UpdateOrder::Ctg);
        cfg.init_w = Some(vec![0.1, 0.2, -0.3]);
        let rec = run_dmcsgd(&cfg, &loss, &data).unwrap();
        for wb in &rec.w_bar {
            assert_eq!(wb, &vec![0.1, 0.2, -0.3]);
        }
        assert!(rec.consensus.unwrap().iter().all(|c| *c == 0.0));
        assert_eq!(rec.averaged_w, vec![0.1, 0.2, -0.3]);
    }

    #[test]
    fn shared_path_on_complete_graph_keeps_nodes_equal() {
        let (loss, data) = ls_setup(4, 5);
        // Same local data on every worker so identical indices give identical gradients.
        let same: Vec<Sample> = (0..4).flat_map(|_| data.worker(0).to_vec()).collect();
        let data = Dataset::from_samples(4, 5, "copy", same).unwrap();
        let mut cfg = config(Topology::Complete, 4, 5, 0.1, 30, UpdateOrder::Ctg);
        cfg.shared_path = true;
        cfg.record.per_node = true;
        let rec = run_dmcsgd(&cfg, &loss, &data).unwrap();
        for nodes in rec.nodes.as_ref().unwrap() {
            for x in nodes {
                assert_eq!(x, &nodes[0]);
            }
        }
        assert!(rec.consensus.unwrap().iter().all(|c| *c == 0.0));
    }

    #[test]
    fn runs_are_bitwise_reproducible() {
        let (loss, data) = ls_setup(4, 5);
        let cfg = config(Topology::Ring, 4, 5, 0.05, 50, UpdateOrder::Gtc);
        assert_eq!(run_dmcsgd(&cfg, &loss, &data).unwrap(), run_dmcsgd(&cfg, &loss, &data).unwrap());
    }

    #[test]
    fn oversized_step_is_rejected() {
        let (loss, data) = ls_setup(4, 5);
        let cfg = config(Topology::Ring, 4, 5, 2.5, 5, UpdateOrder::Ctg);
        assert!(matches!(run_dmcsgd(&cfg, &loss, &data), Err(EngineError::Config(_))));
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let (loss, data) = ls_setup(4, 5);
        let cfg = config(Topology::Ring, 5, 5, 0.1, 5, UpdateOrder::Ctg);
        assert!(run_dmcsgd(&cfg, &loss, &data).is_err());
    }

    #[test]
    fn consensus_unavailable_without_recording() {
        let (loss, data) = ls_setup(4, 5);
        let mut cfg = config(Topology::Ring, 4, 5, 0.1, 5, UpdateOrder::Ctg);
        cfg.record.consensus = false;
        let rec = run_dmcsgd(&cfg, &loss, &data).unwrap();
        assert!(matches!(consensus_error(&rec, 2), Err(EngineError::Unavailable(_))));
    }

    #[test]
    fn bilinear_hand_iteration() {
        // f = w·v in one dimension, m = 1, radius-1 balls.
        let loss = MinimaxLossSpec {
            kind: MinimaxKind::Bilinear,
            rho: 0.0,
            lipschitz: 2f64.sqrt(),
            beta: 1.0,
            radius_w: 1.0,
            radius_v: 1.0,
        };
        let z = SaddleSample {
            a: vec![1.0],
            b: vec![0.0],
            c: vec![0.0],
        };
        let data = Dataset::from_samples(1, 1, "hand", vec![z]).unwrap();
        let mut cfg = RunConfig::new(
            build_gossip(Topology::Complete, 1).unwrap(),
            build_chain(ChainKind::Uniform, 1).unwrap(),
            StepsizeSchedule::Constant { eta: 0.1 },
            5,
            UpdateOrder::Ctg,
            0,
        );
        cfg.init_w = Some(vec![0.9]);
        cfg.init_v = Some(vec![-0.5]);
        let rec = run_dmcsgda(&cfg, &loss, &data).unwrap();
        let (mut w, mut v) = (0.9f64, -0.5f64);
        let clip = |x: f64| x.clamp(-1.0, 1.0);
        for t in 1..=5 {
            let (nw, nv) = (clip(w - 0.1 * v), clip(v + 0.1 * w));
            w = nw;
            v = nv;
            assert_eq!(rec.w_bar[t][0], w);
            assert_eq!(rec.v_bar.as_ref().unwrap()[t][0], v);
        }
    }
}
