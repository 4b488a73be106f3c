use clap::{Args, Parser, Subcommand};
use std::io::Write;
use dmclab::config::{resolve, ExperimentConfig, Format, Problem};
use dmclab::error::{HarnessError, Result};
use dmclab::presets::preset;
use dmclab::sweep::{
    comment_header, first_cell, fmt_f64, rows_to_csv, run_sweep, single_trajectory,
    stability_cell, write_sweep, TrajectoryData,
};
use dmclab::{report, SCHEMA_VERSION};
use dmclab_core::bounds::{
    consensus_bound, corollary_bound, generalization_bound_avg, gtc_stability_bound,
    optimization_bound_convex, sgda_generalization_bounds, sgda_stability_bound,
    stability_bound_sgd, BoundError, BoundInputs, IndexConvention, ScheduleKind, Variant,
};
use dmclab_core::engine::StepsizeSchedule;
use serde::Serialize;
use serde_json::json;
use std::path::{Path, PathBuf};

/// Decentralized Markov-chain SGD / SGDA stability laboratory.
#[derive(Parser)]
#[command(name = "dmclab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long, value_name = "PATH", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in preset instead of a config file.
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Overrides the config's master seed.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Worker threads for sweeps (defaults to all cores).
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct BoundFlags {
    /// Constant stepsize; omit with --decreasing for `1/(t+1)`.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    decreasing: bool,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lipschitz: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Check a config and echo the resolved parameters.
    Validate(Common),
    /// One trajectory with full dumps.
    Run(Common),
    /// Coupled stability estimate paired with its bound.
    Stability(Common),
    /// Evaluate the analytic bounds for a config or explicit constants.
    Bounds {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        flags: BoundFlags,
    },
    /// Run every cell of a config's sweep.
    Sweep(Common),
    /// Merge sweep CSVs into a summary and plot files.
    Report {
        /// Sweep CSV files.
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long, value_name = "DIR", default_value = "report")]
        out: PathBuf,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match (&common.config, &common.preset) {
        (Some(path), None) => ExperimentConfig::load(path)?,
        (None, Some(name)) => preset(name)?,
        _ => {
            return Err(HarnessError::Config(
                "exactly one of --config or --preset is required".into(),
            ))
        }
    };
    if let Some(s) = common.seed {
        cfg.master_seed = s;
    }
    Ok(cfg)
}

fn format_of(common: &Common, cfg: &ExperimentConfig) -> Format {
    common.format.unwrap_or(cfg.output.format)
}

/// A closed pipe (e.g. `| head`) ends output quietly.
fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn print_json(value: &impl Serialize) -> Result<()> {
    emit(&(serde_json::to_string_pretty(value)? + "\n"))
}

fn validate(common: &Common) -> Result<()> {
    let cfg = load(common)?;
    let cells = resolve(&cfg)?;
    let runs: u64 = cells.iter().map(|(c, _)| c.runs_per_cell()).sum();
    print_json(&json!({
        "schema_version": SCHEMA_VERSION,
        "status": "valid",
        "fingerprint": cfg.fingerprint(),
        "cells": cells.len(),
        "trajectory_runs": runs,
        "budget": cfg.budget,
        "config": cfg,
    }))
}

fn write(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body)?;
    Ok(())
}

fn run(common: &Common) -> Result<()> {
    let cfg = load(common)?;
    let (cell, p) = first_cell(&cfg)?;
    let (rec, data) = single_trajectory(&p, true)?;
    std::fs::create_dir_all(&common.out)?;
    let stem = &cell.name;
    let header = comment_header("trajectory", &cell);
    let mut written = vec![];
    let mut put = |name: String, body: String| -> Result<()> {
        let path = common.out.join(name);
        write(&path, &body)?;
        written.push(path.display().to_string());
        Ok(())
    };
    put(format!("{stem}.trajectory.csv"), header.clone() + &rec.to_csv())?;
    put(format!("{stem}.gossip.csv"), p.run.gossip.to_csv())?;
    put(format!("{stem}.chain.csv"), p.run.chain.to_csv())?;
    if let TrajectoryData::Sgd(d) = &data {
        put(format!("{stem}.data.csv"), d.to_csv())?;
    }
    let replay = json!({
        "schema_version": SCHEMA_VERSION,
        "kind": "replay",
        "fingerprint": cell.fingerprint(),
        "seed": cell.master_seed,
        "config": cell,
    });
    put(format!("{stem}.replay.json"), serde_json::to_string_pretty(&replay)? + "\n")?;
    print_json(&json!({
        "schema_version": SCHEMA_VERSION,
        "fingerprint": cell.fingerprint(),
        "horizon": rec.horizon(),
        "final_w": rec.final_w(),
        "files": written,
    }))
}

fn stability(common: &Common) -> Result<()> {
    let cfg = load(common)?;
    let (cell, p) = first_cell(&cfg)?;
    if cell.run.task != dmclab::config::Task::Stability {
        return Err(HarnessError::Config("run.task must be `stability`".into()));
    }
    let (row, report) = stability_cell(0, &cell, &p)?;
    std::fs::create_dir_all(&common.out)?;
    let stem = format!("{}.stability", cell.name);
    let path = match format_of(common, &cell) {
        Format::Json => {
            let doc = json!({
                "schema_version": SCHEMA_VERSION,
                "kind": "stability",
                "fingerprint": cell.fingerprint(),
                "config": cell,
                "bound_name": row.bound_name,
                "report": report,
            });
            let path = common.out.join(format!("{stem}.json"));
            write(&path, &(serde_json::to_string_pretty(&doc)? + "\n"))?;
            path
        }
        Format::Csv => {
            let path = common.out.join(format!("{stem}.csv"));
            write(&path, &rows_to_csv(&cell, std::slice::from_ref(&row))?)?;
            path
        }
    };
    if cell.output.per_pair {
        write(&common.out.join(format!("{stem}.pairs.csv")), &report.per_pair_csv())?;
    }
    print_json(&json!({
        "schema_version": SCHEMA_VERSION,
        "output": path.display().to_string(),
        "row": row,
    }))
}

#[derive(Serialize)]
struct BoundEntry {
    name: &'static str,
    value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
}

fn entry(name: &'static str, r: std::result::Result<f64, BoundError>) -> BoundEntry {
    match r {
        Ok(v) => BoundEntry {
            name,
            value: Some(v),
            note: None,
        },
        Err(e) => BoundEntry {
            name,
            value: None,
            note: Some(e.to_string()),
        },
    }
}

fn inputs_from_flags(f: &BoundFlags) -> Result<(BoundInputs, Option<ScheduleKind>)> {
    let need = |what: &str| HarnessError::Config(format!("--{what} is required without a config"));
    let horizon = f.horizon.ok_or_else(|| need("horizon"))?;
    let (schedule, kind) = match (f.eta, f.decreasing) {
        (Some(eta), false) => (StepsizeSchedule::Constant { eta }, ScheduleKind::Constant),
        (None, true) => (StepsizeSchedule::Decreasing, ScheduleKind::Decreasing),
        _ => {
            return Err(HarnessError::Config(
                "give exactly one of --eta or --decreasing".into(),
            ))
        }
    };
    let etas = schedule.etas(horizon).map_err(|e| HarnessError::Config(e.to_string()))?;
    let mut inputs = BoundInputs::new(
        etas,
        f.lambda.ok_or_else(|| need("lambda"))?,
        f.lipschitz.ok_or_else(|| need("lipschitz"))?,
        f.m.ok_or_else(|| need("m"))?,
        f.n.ok_or_else(|| need("n"))?,
    );
    if let Some(b) = f.beta {
        inputs = inputs.with_beta(b);
    }
    if let Some(r) = f.rho {
        inputs = inputs.with_rho(r);
    }
    Ok((inputs, Some(kind)))
}

fn bounds(common: &Common, flags: &BoundFlags) -> Result<()> {
    let from_config = common.config.is_some() || common.preset.is_some();
    let (inputs, kind, format) = if from_config {
        let cfg = load(common)?;
        let (cell, p) = first_cell(&cfg)?;
        let kind = match cell.schedule {
            StepsizeSchedule::Constant { .. } => Some(ScheduleKind::Constant),
            StepsizeSchedule::Decreasing => Some(ScheduleKind::Decreasing),
            StepsizeSchedule::Explicit { .. } => None,
        };
        let mut inputs = p.bound_inputs()?;
        if let Problem::Sgd(prob) = &p.problem {
            inputs.sup_f0 = sup_loss_at_origin(prob);
        }
        (inputs, kind, format_of(common, &cell))
    } else {
        let (inputs, kind) = inputs_from_flags(flags)?;
        (inputs, kind, common.format.unwrap_or(Format::Json))
    };
    let mut entries = vec![
        entry("stability-smooth", stability_bound_sgd(&inputs, true, IndexConvention::Main)),
        entry(
            "stability-smooth-appendix-index",
            stability_bound_sgd(&inputs, true, IndexConvention::Appendix),
        ),
        entry("stability-nonsmooth", stability_bound_sgd(&inputs, false, IndexConvention::Main)),
        entry("gtc", gtc_stability_bound(&inputs)),
        entry("consensus-at-horizon", consensus_bound(&inputs, inputs.horizon())),
    ];
    if let Some(k) = kind {
        let tag = |s: &'static str, d: &'static str| if k == ScheduleKind::Constant { s } else { d };
        entries.push(entry(
            tag("smooth-constant", "smooth-decreasing"),
            corollary_bound(&inputs, true, k, Variant::Main),
        ));
        entries.push(entry(
            tag("nonsmooth-constant", "nonsmooth-decreasing"),
            corollary_bound(&inputs, false, k, Variant::Main),
        ));
        if k == ScheduleKind::Constant {
            entries.push(entry(
                "nonsmooth-constant-appendix-variant",
                corollary_bound(&inputs, false, k, Variant::Appendix),
            ));
        }
    }
    entries.push(entry("generalization-averaged-smooth", generalization_bound_avg(&inputs, true, Variant::Main)));
    entries.push(entry("generalization-averaged-nonsmooth", generalization_bound_avg(&inputs, false, Variant::Main)));
    entries.push(entry("sgda-smooth", sgda_stability_bound(&inputs, true)));
    entries.push(entry("sgda-nonsmooth-order", sgda_stability_bound(&inputs, false)));
    let gen = sgda_generalization_bounds(&inputs, true);
    entries.push(entry("sgda-weak-pd", gen.clone().map(|g| g.weak_pd)));
    entries.push(entry(
        "sgda-primal",
        gen.and_then(|g| g.primal.ok_or_else(|| BoundError::Unsupported("needs rho > 0".into()))),
    ));
    entries.push(entry(
        "optimization-convex-smooth",
        optimization_bound_convex(&inputs, true).map(|b| b.total),
    ));

    match format {
        Format::Json => print_json(&json!({
            "schema_version": SCHEMA_VERSION,
            "kind": "bounds",
            "inputs": {
                "horizon": inputs.horizon(),
                "lambda": inputs.lambda,
                "lipschitz": inputs.lipschitz,
                "beta": inputs.beta,
                "rho": inputs.rho,
                "m": inputs.m,
                "n": inputs.n,
                "lambda_h": inputs.lambda_h,
            },
            "bounds": entries,
        })),
        Format::Csv => {
            let mut out = String::from("bound,value,note\n");
            for e in &entries {
                let note = e.note.as_deref().unwrap_or("").replace(',', ";");
                out.push_str(&format!(
                    "{},{},{}\n",
                    e.name,
                    e.value.map(fmt_f64).unwrap_or_default(),
                    note
                ));
            }
            emit(&out)?;
            Ok(())
        }
    }
}

/// `sup_Z f(0; Z)`: labels bound the squared loss at the origin; margin
/// losses equal `ln 2` or `1` there.
fn sup_loss_at_origin(p: &dmclab_core::stability::SgdProblem) -> f64 {
    use dmclab_core::problems::LossKind;
    match p.loss.kind {
        LossKind::LeastSquares => 0.5 * p.distribution.label_bound().powi(2),
        LossKind::Logistic => std::f64::consts::LN_2,
        LossKind::Hinge => 1.0,
        LossKind::Zero => 0.0,
    }
}

fn sweep(common: &Common) -> Result<()> {
    let cfg = load(common)?;
    let result = run_sweep(&cfg, common.jobs)?;
    let format = format_of(common, &cfg);
    let path = write_sweep(&result, &common.out, format)?;
    let dominated = result.rows.iter().filter(|r| r.dominated == Some(true)).count();
    let paired = result.rows.iter().filter(|r| r.dominated.is_some()).count();
    print_json(&json!({
        "schema_version": SCHEMA_VERSION,
        "output": path.display().to_string(),
        "rows": result.rows.len(),
        "paired": paired,
        "dominated": dominated,
    }))
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate(c) => validate(&c),
        Command::Run(c) => run(&c),
        Command::Stability(c) => stability(&c),
        Command::Bounds { common, flags } => bounds(&common, &flags),
        Command::Sweep(c) => sweep(&c),
        Command::Report { files, out } => {
            let summary = report::merge_reports(&files, &out)?;
            print_json(&summary)
        }
    }
}

fn main() {
    let code = match Cli::try_parse() {
        Ok(cli) => match dispatch(cli) {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("{}", e.record());
                e.exit_code()
            }
        },
        Err(e) => {
            use clap::error::ErrorKind;
            match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    0
                }
                _ => {
                    let record = json!({
                        "schema_version": SCHEMA_VERSION,
                        "error": { "kind": "usage", "message": e.to_string().trim_end() },
                    });
                    eprintln!("{record}");
                    2
                }
            }
        }
    };
    std::process::exit(code);
}
