//! Cell execution, bound pairing and sweep output.

use crate::config::{prepare, resolve, ExperimentConfig, Format, Prepared, Problem, Task};
use crate::error::{run_err, HarnessError, Result};
use dmclab_core::bounds::{
    consensus_bounds, corollary_bound, gtc_stability_bound, sgda_stability_bound,
    stability_bound_sgd, ScheduleKind,
};
use dmclab_core::chain::{mixing_envelope, mixing_gaps};
use dmclab_core::engine::{
    consensus_error, run_dmcsgd, run_dmcsgda, StepsizeSchedule, TrajectoryRecord, UpdateOrder,
};
use dmclab_core::problems::{
    draw_dataset, empirical_risk, mean_sample, weak_pd_gap, Dataset, Sample, SaddleSample,
};
use dmclab_core::seed;
use dmclab_core::stability::{estimate_stability, estimate_stability_sgda, StabilityReport};
use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Slack for per-step envelope comparisons.
pub const ENVELOPE_TOL: f64 = 1e-9;

pub const ROW_HEADER: &[&str] = &[
    "index",
    "fingerprint",
    "task",
    "loss",
    "topology",
    "chain",
    "order",
    "output",
    "m",
    "n",
    "horizon",
    "schedule",
    "eta",
    "lambda",
    "lambda_h",
    "metric",
    "estimate",
    "stderr",
    "bound_name",
    "bound",
    "dominated",
    "conservative",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub index: usize,
    pub fingerprint: String,
    pub task: String,
    pub loss: String,
    pub topology: String,
    pub chain: String,
    pub order: String,
    pub output: String,
    pub m: usize,
    pub n: usize,
    pub horizon: usize,
    pub schedule: String,
    pub eta: Option<f64>,
    pub lambda: f64,
    pub lambda_h: f64,
    pub metric: String,
    pub estimate: f64,
    pub stderr: Option<f64>,
    pub bound_name: Option<String>,
    pub bound: Option<f64>,
    pub dominated: Option<bool>,
    pub conservative: Option<bool>,
}

/// Full-precision decimal rendering.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x}")
    }
}

fn opt<T>(x: Option<T>, f: impl Fn(T) -> String) -> String {
    x.map(f).unwrap_or_default()
}

impl ReportRow {
    pub fn to_record(&self) -> Vec<String> {
        vec![
            self.index.to_string(),
            self.fingerprint.clone(),
            self.task.clone(),
            self.loss.clone(),
            self.topology.clone(),
            self.chain.clone(),
            self.order.clone(),
            self.output.clone(),
            self.m.to_string(),
            self.n.to_string(),
            self.horizon.to_string(),
            self.schedule.clone(),
            opt(self.eta, fmt_f64),
            fmt_f64(self.lambda),
            fmt_f64(self.lambda_h),
            self.metric.clone(),
            fmt_f64(self.estimate),
            opt(self.stderr, fmt_f64),
            self.bound_name.clone().unwrap_or_default(),
            opt(self.bound, fmt_f64),
            opt(self.dominated, |b| b.to_string()),
            opt(self.conservative, |b| b.to_string()),
        ]
    }
}

fn schedule_label(s: &StepsizeSchedule) -> (String, Option<f64>) {
    match s {
        StepsizeSchedule::Constant { eta } => ("constant".into(), Some(*eta)),
        StepsizeSchedule::Decreasing => ("decreasing".into(), None),
        StepsizeSchedule::Explicit { .. } => ("explicit".into(), None),
    }
}

fn chain_label(cfg: &ExperimentConfig) -> String {
    use dmclab_core::chain::ChainKind;
    match cfg.chain {
        ChainKind::Uniform => "uniform".into(),
        ChainKind::LazyCycle { hold } => format!("lazy-cycle:{}", fmt_f64(hold)),
        ChainKind::TwoState { flip } => format!("two-state:{}", fmt_f64(flip)),
    }
}

fn order_label(o: UpdateOrder) -> &'static str {
    match o {
        UpdateOrder::Ctg => "ctg",
        UpdateOrder::Gtc => "gtc",
    }
}

fn base_row(index: usize, cfg: &ExperimentConfig, p: &Prepared) -> ReportRow {
    let (schedule, eta) = schedule_label(&cfg.schedule);
    ReportRow {
        index,
        fingerprint: cfg.fingerprint(),
        task: cfg.run.task.as_str().into(),
        loss: cfg.loss.kind.as_str().into(),
        topology: cfg.topology.name(),
        chain: chain_label(cfg),
        order: order_label(cfg.run.order).into(),
        output: match cfg.run.output {
            dmclab_core::engine::OutputKind::Final => "final".into(),
            dmclab_core::engine::OutputKind::Averaged => "averaged".into(),
        },
        m: cfg.dataset.m,
        n: cfg.dataset.n,
        horizon: cfg.run.horizon,
        schedule,
        eta,
        lambda: p.run.gossip.lambda(),
        lambda_h: p.chain_report.lambda_h,
        metric: String::new(),
        estimate: f64::NAN,
        stderr: None,
        bound_name: None,
        bound: None,
        dominated: None,
        conservative: None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedBound {
    pub name: String,
    pub value: f64,
}

/// The stability bound matching the cell's algorithm, loss and schedule.
pub fn paired_bound(cfg: &ExperimentConfig, p: &Prepared) -> Result<PairedBound> {
    let inputs = p.bound_inputs()?;
    let (name, value) = match (&p.problem, cfg.run.order) {
        (Problem::Sgda(_), _) => ("sgda-smooth", sgda_stability_bound(&inputs, true)),
        (Problem::Sgd(_), UpdateOrder::Gtc) => ("gtc", gtc_stability_bound(&inputs)),
        (Problem::Sgd(prob), UpdateOrder::Ctg) => {
            let smooth = prob.loss.is_smooth();
            match (&cfg.schedule, smooth) {
                (StepsizeSchedule::Constant { .. }, true) => (
                    "smooth-constant",
                    corollary_bound(&inputs, true, ScheduleKind::Constant, cfg.bounds.variant),
                ),
                (StepsizeSchedule::Constant { .. }, false) => (
                    "nonsmooth-constant",
                    corollary_bound(&inputs, false, ScheduleKind::Constant, cfg.bounds.variant),
                ),
                (StepsizeSchedule::Decreasing, true) => (
                    "smooth-decreasing",
                    corollary_bound(&inputs, true, ScheduleKind::Decreasing, cfg.bounds.variant),
                ),
                (StepsizeSchedule::Decreasing, false) => (
                    "nonsmooth-decreasing",
                    corollary_bound(&inputs, false, ScheduleKind::Decreasing, cfg.bounds.variant),
                ),
                (StepsizeSchedule::Explicit { .. }, _) => (
                    "exact-sum",
                    stability_bound_sgd(&inputs, smooth, cfg.bounds.convention),
                ),
            }
        }
    };
    Ok(PairedBound {
        name: name.into(),
        value: value.map_err(run_err)?,
    })
}

/// Coupled stability estimate for one cell, with its bound attached.
pub fn stability_report(cfg: &ExperimentConfig, p: &Prepared) -> Result<(StabilityReport, PairedBound)> {
    let plan = Prepared::plan(cfg);
    let mut report = match &p.problem {
        Problem::Sgd(prob) => estimate_stability(&p.run, prob, &plan, cfg.run.output),
        Problem::Sgda(prob) => estimate_stability_sgda(&p.run, prob, &plan, cfg.run.output),
    }
    .map_err(run_err)?;
    let bound = paired_bound(cfg, p)?;
    report.attach_bound(bound.value);
    Ok((report, bound))
}

pub enum TrajectoryData {
    Sgd(Dataset<Sample>),
    Sgda(Dataset<SaddleSample>),
}

/// One run on a dataset drawn from the master seed.
pub fn single_trajectory(p: &Prepared, with_consensus: bool) -> Result<(TrajectoryRecord, TrajectoryData)> {
    let data_seed = seed::derive(p.run.seed, "data", 0);
    let mut run = p.run.clone();
    run.record.consensus = with_consensus;
    match &p.problem {
        Problem::Sgd(prob) => {
            let data = draw_dataset(&prob.distribution, prob.m, prob.n, data_seed).map_err(run_err)?;
            let rec = run_dmcsgd(&run, &prob.loss, &data).map_err(run_err)?;
            Ok((rec, TrajectoryData::Sgd(data)))
        }
        Problem::Sgda(prob) => {
            let data = draw_dataset(&prob.distribution, prob.m, prob.n, data_seed).map_err(run_err)?;
            let rec = run_dmcsgda(&run, &prob.loss, &data).map_err(run_err)?;
            Ok((rec, TrajectoryData::Sgda(data)))
        }
    }
}

/// Largest ratio of observed to permitted and whether every step is within
/// the envelope.
fn envelope_check(observed: &[f64], envelope: &[f64], tol: f64) -> (f64, bool) {
    let mut ratio: f64 = 0.0;
    let mut ok = true;
    for (o, e) in observed.iter().zip(envelope) {
        if *e > 0.0 {
            ratio = ratio.max(o / e);
        }
        ok &= *o <= e + tol;
    }
    (ratio, ok)
}

/// Stability estimate of one cell as a report row plus the full report.
pub fn stability_cell(
    index: usize,
    cfg: &ExperimentConfig,
    p: &Prepared,
) -> Result<(ReportRow, StabilityReport)> {
    let mut row = base_row(index, cfg, p);
    let (report, bound) = stability_report(cfg, p)?;
    let (est, se) = report.estimate();
    row.metric = if report.sgda_epsilon_hat.is_some() {
        "sgda_epsilon_hat".into()
    } else {
        "epsilon_hat".into()
    };
    row.estimate = est;
    row.stderr = Some(se);
    row.bound_name = Some(bound.name);
    row.bound = report.bound_value;
    row.dominated = report.dominated;
    row.conservative = report.conservative;
    Ok((row, report))
}

/// Runs one cell and produces its report row.
pub fn run_cell(index: usize, cfg: &ExperimentConfig, p: &Prepared) -> Result<ReportRow> {
    let mut row = base_row(index, cfg, p);
    match cfg.run.task {
        Task::Stability => return Ok(stability_cell(index, cfg, p)?.0),
        Task::Consensus => {
            let (rec, _) = single_trajectory(p, true)?;
            let bounds = consensus_bounds(&p.bound_inputs()?).map_err(run_err)?;
            let observed: Vec<f64> = (0..=rec.horizon())
                .map(|t| consensus_error(&rec, t))
                .collect::<std::result::Result<_, _>>()
                .map_err(run_err)?;
            let (ratio, ok) = envelope_check(&observed, &bounds, ENVELOPE_TOL);
            row.metric = "consensus_ratio".into();
            row.estimate = ratio;
            row.bound_name = Some("consensus-envelope".into());
            row.bound = Some(1.0);
            row.dominated = Some(ok);
            row.conservative = Some(ok);
        }
        Task::Mixing => {
            let n = p.run.chain.n();
            let lh = p.chain_report.lambda_h;
            let gaps = mixing_gaps(&p.run.chain, &p.chain_report.stationary, cfg.run.horizon);
            let env: Vec<f64> = (0..gaps.len())
                .map(|t| mixing_envelope(n, lh, t))
                .collect::<std::result::Result<_, _>>()
                .map_err(run_err)?;
            let (ratio, ok) = envelope_check(&gaps, &env, 1e-12);
            row.metric = "mixing_ratio".into();
            row.estimate = ratio;
            row.bound_name = Some("mixing-envelope".into());
            row.bound = Some(1.0);
            row.dominated = Some(ok);
            row.conservative = Some(ok);
        }
        Task::Trajectory => {
            let (rec, data) = single_trajectory(p, false)?;
            let w = rec.output_w(cfg.run.output);
            match (&p.problem, data) {
                (Problem::Sgd(prob), TrajectoryData::Sgd(d)) => {
                    row.metric = "empirical_risk".into();
                    row.estimate = empirical_risk(&prob.loss, w, &d).map_err(run_err)?;
                }
                (Problem::Sgda(prob), TrajectoryData::Sgda(d)) => {
                    let v = rec.output_v(cfg.run.output).expect("saddle run records v");
                    row.metric = "weak_pd_empirical".into();
                    row.estimate = weak_pd_gap(&prob.loss, &mean_sample(d.all()), w, v);
                }
                _ => unreachable!("data kind follows the problem kind"),
            }
        }
    }
    Ok(row)
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub config: ExperimentConfig,
    pub rows: Vec<ReportRow>,
    /// Wall seconds per row; kept out of the main output so reruns compare
    /// byte for byte.
    pub wall_seconds: Vec<f64>,
}

/// Validates every cell, then runs them on a pool of `jobs` threads. Rows
/// come back in sweep order regardless of scheduling.
pub fn run_sweep(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<SweepResult> {
    let cells = resolve(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(run_err)?;
    let results: Vec<Result<(ReportRow, f64)>> = pool.install(|| {
        cells
            .par_iter()
            .enumerate()
            .map(|(i, (c, p))| {
                let start = Instant::now();
                let row = run_cell(i, c, p)?;
                Ok((row, start.elapsed().as_secs_f64()))
            })
            .collect()
    });
    let mut rows = Vec::with_capacity(results.len());
    let mut wall_seconds = Vec::with_capacity(results.len());
    for r in results {
        let (row, secs) = r?;
        rows.push(row);
        wall_seconds.push(secs);
    }
    Ok(SweepResult {
        config: cfg.clone(),
        rows,
        wall_seconds,
    })
}

/// First cell of a config, validated.
pub fn first_cell(cfg: &ExperimentConfig) -> Result<(ExperimentConfig, Prepared)> {
    let cell = cfg
        .expand()?
        .into_iter()
        .next()
        .ok_or_else(|| HarnessError::Config("sweep expands to no cells".into()))?;
    let p = prepare(&cell)?;
    Ok((cell, p))
}

/// `# …` header lines embedding the resolved config.
pub fn comment_header(kind: &str, cfg: &ExperimentConfig) -> String {
    format!(
        "# dmclab {kind} schema_version={}\n# config={}\n",
        crate::SCHEMA_VERSION,
        cfg.canonical_json()
    )
}

pub fn rows_to_csv(cfg: &ExperimentConfig, rows: &[ReportRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(ROW_HEADER)?;
    for r in rows {
        w.write_record(r.to_record())?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| run_err(e.error()))?)
        .expect("CSV of UTF-8 fields is UTF-8");
    Ok(comment_header("sweep", cfg) + &body)
}

#[derive(Serialize)]
struct SweepDocument<'a> {
    schema_version: u32,
    kind: &'static str,
    fingerprint: String,
    config: &'a ExperimentConfig,
    rows: &'a [ReportRow],
}

pub fn rows_to_json(cfg: &ExperimentConfig, rows: &[ReportRow]) -> Result<String> {
    let doc = SweepDocument {
        schema_version: crate::SCHEMA_VERSION,
        kind: "sweep",
        fingerprint: cfg.fingerprint(),
        config: cfg,
        rows,
    };
    Ok(serde_json::to_string_pretty(&doc)? + "\n")
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(contents.as_bytes())?;
    Ok(())
}

/// Writes `<name>.csv|json` and the `<name>.timing.csv` sidecar; returns the
/// main output path.
pub fn write_sweep(result: &SweepResult, out_dir: &Path, format: Format) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let stem = &result.config.name;
    let (path, body) = match format {
        Format::Csv => (out_dir.join(format!("{stem}.csv")), rows_to_csv(&result.config, &result.rows)?),
        Format::Json => (out_dir.join(format!("{stem}.json")), rows_to_json(&result.config, &result.rows)?),
    };
    write_file(&path, &body)?;
    let mut timing = String::from("index,fingerprint,wall_seconds\n");
    for (r, s) in result.rows.iter().zip(&result.wall_seconds) {
        timing.push_str(&format!("{},{},{}\n", r.index, r.fingerprint, fmt_f64(*s)));
    }
    write_file(&out_dir.join(format!("{stem}.timing.csv")), &timing)?;
    Ok(path)
}
