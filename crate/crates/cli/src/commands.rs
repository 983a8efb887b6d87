//! `run`, `sweep` and `validate`.

use std::fs;
use std::path::{Path, PathBuf};

use costa_core::costa::{log_log_slope, rate_bound, run, Method, RunTrace};
use costa_core::cq::dual_bound_monitor;
use costa_core::problem::feasibility_violation;
use costa_core::schedule::CheckStatus;
use costa_core::surrogate::ProximalBuilder;
use costa_core::validation::validate_problem;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::demo::{with_demo, Demo};
use crate::output::{self, BestKkt, Summary};

/// Command outcome mapped to the process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Exit code 1.
    Run(String),
    /// Exit code 2.
    Config(String),
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Costa => "costa",
        Method::Classical => "classical",
    }
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Run(format!("cannot create {}: {e}", dir.display())))
}

/// One row of `aggregate.csv`.
#[derive(Debug, Clone, Serialize)]
pub struct CellRow {
    pub method: String,
    pub iterations: usize,
    pub seed: u64,
    pub status: String,
    pub delta_t: Option<f64>,
    pub final_feasibility: Option<f64>,
    pub max_feasibility: f64,
    pub best_kkt_t: Option<usize>,
    pub best_stationarity: Option<f64>,
    pub final_objective: Option<f64>,
    pub train_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub energy: Option<f64>,
}

/// Runs one `(method, T, seed)` cell and writes its files into `dir`.
fn run_cell<P: Demo>(
    problem: &P,
    cfg: &ExperimentConfig,
    x1: &[f64],
    method: Method,
    iterations: usize,
    seed: u64,
    dir: &Path,
) -> Result<CellRow, Failure> {
    create_dir(dir)?;
    let mut rc = cfg.run_config(x1.to_vec(), iterations, seed);
    rc.record_iterates = cfg.emit.dual_bound;
    let (trace, failure): (RunTrace, Option<String>) = match run(problem, &rc, method, &ProximalBuilder) {
        Ok(t) => (t, None),
        Err(f) => {
            let msg = f.to_string();
            (f.partial, Some(msg))
        }
    };

    let out = |r: Result<(), String>| r.map_err(Failure::Run);
    if cfg.emit.trace || failure.is_some() {
        out(output::write_trace(dir, &trace))?;
    }
    if cfg.emit.plot_data {
        out(output::write_objective_plot(dir, &trace))?;
        if let (Some(first), Some(last)) = (problem.waypoints(x1), problem.waypoints(&trace.final_x)) {
            out(output::write_waypoints(dir, &first, &last))?;
        }
    }

    let delta_t = if trace.records.is_empty() { None } else { trace.average_progress().ok() };
    let best = trace.best_kkt().map(|(t, r)| BestKkt { t, report: r.clone() });
    let (rate_certificate, rate_certificate_note) = match rate_bound(&problem.meta(), &cfg.schedule, iterations) {
        Ok(c) => (Some(c), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let final_feasibility = match trace.records.last() {
        Some(r) => Some(r.feasibility),
        None => feasibility_violation(problem, &trace.final_x).ok(),
    };
    let dual_bound = if cfg.emit.dual_bound && failure.is_none() {
        match dual_bound_monitor(problem, &trace, cfg.emit.dual_bound_omega, cfg.emit.dual_bound_stride) {
            Ok(r) => Some(r),
            Err(e) => {
                eprintln!("warning: dual-bound monitor unavailable: {e}");
                None
            }
        }
    } else {
        None
    };
    let extras = problem.extras(&trace.final_x, cfg);
    let summary = Summary {
        problem: serde_json::to_value(cfg.problem).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
        method: method_name(method).into(),
        seed,
        iterations,
        completed_iterations: trace.records.len(),
        delta_t,
        best_kkt: best.clone(),
        rate_certificate,
        rate_certificate_note,
        final_feasibility,
        max_feasibility: trace.max_feasibility(),
        initial_objective: trace.initial_objective,
        final_objective: trace.records.last().and_then(|r| r.objective_est),
        oracle_calls: trace.records.last().map_or(0, |r| r.oracle_calls),
        final_x: trace.final_x.clone(),
        dual_bound,
        problem_specific: extras.clone(),
        failure: failure.clone(),
    };
    if cfg.emit.summary || failure.is_some() {
        out(output::write_json(&dir.join(output::SUMMARY_FILE), &summary))?;
    }
    if let Some(msg) = &failure {
        out(output::write_failure_marker(dir, msg))?;
    }

    let accuracy = problem.accuracy(&trace.final_x);
    Ok(CellRow {
        method: method_name(method).into(),
        iterations,
        seed,
        status: if failure.is_some() { "failed".into() } else { "ok".into() },
        delta_t,
        final_feasibility,
        max_feasibility: summary.max_feasibility,
        best_kkt_t: best.as_ref().map(|b| b.t),
        best_stationarity: best.as_ref().map(|b| b.report.stationarity),
        final_objective: summary.final_objective,
        train_accuracy: accuracy.map(|a| a.0),
        test_accuracy: accuracy.map(|a| a.1).filter(|v| v.is_finite()),
        energy: extras.get("energy").and_then(|v| v.as_f64()),
    })
}

fn build(cfg: &ExperimentConfig) -> Result<(crate::demo::Built, Vec<f64>), Failure> {
    let (built, default_x1) = crate::demo::build(cfg).map_err(Failure::Config)?;
    let x1 = cfg.run.x1.clone().unwrap_or(default_x1);
    Ok((built, x1))
}

fn print_row(row: &CellRow) {
    let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4e}"));
    println!(
        "{} T={} seed={}: {} delta_t={} final_feasibility={} best_stationarity={}",
        row.method,
        row.iterations,
        row.seed,
        row.status,
        f(row.delta_t),
        f(row.final_feasibility),
        f(row.best_stationarity)
    );
}

pub fn run_single(cfg: &ExperimentConfig, out: &Path) -> Result<(), Failure> {
    let (built, x1) = build(cfg)?;
    create_dir(out)?;
    if cfg.emit.schema {
        output::write_schema(out).map_err(Failure::Run)?;
    }
    let row = with_demo!(&built, p => run_cell(p, cfg, &x1, cfg.method, cfg.iterations, cfg.seed, out))?;
    print_row(&row);
    if row.status != "ok" {
        return Err(Failure::Run(format!("run failed; see {}", out.join(output::FAILURE_MARKER).display())));
    }
    Ok(())
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

fn mean_of(rows: &[&CellRow], f: impl Fn(&CellRow) -> Option<f64>) -> Option<f64> {
    let v: Vec<f64> = rows.iter().filter_map(|r| f(r)).collect();
    (!v.is_empty()).then(|| mean_std(&v).0)
}

pub fn sweep(cfg: &ExperimentConfig, out: &Path, workers: Option<usize>) -> Result<(), Failure> {
    let s = cfg.sweep.as_ref().ok_or_else(|| Failure::Config("sweep needs a [sweep] section".into()))?;
    let methods = s.methods.clone().unwrap_or_else(|| vec![cfg.method]);
    let (built, x1) = build(cfg)?;
    create_dir(out)?;
    if cfg.emit.schema {
        output::write_schema(out).map_err(Failure::Run)?;
    }

    let mut cells = Vec::new();
    for &m in &methods {
        for &t in &s.iterations {
            for &seed in &s.seeds {
                cells.push((m, t, seed));
            }
        }
    }
    let workers = workers.or(s.workers).unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Failure::Run(format!("cannot start worker pool: {e}")))?;
    let rows: Vec<Result<CellRow, Failure>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(m, t, seed)| {
                let dir = out.join(format!("{}_T{t}_seed{seed}", method_name(m)));
                with_demo!(&built, p => run_cell(p, cfg, &x1, m, t, seed, &dir))
            })
            .collect()
    });
    let rows: Vec<CellRow> = rows.into_iter().collect::<Result<_, _>>()?;
    for r in &rows {
        print_row(r);
    }

    let path = out.join(output::AGGREGATE_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| Failure::Run(format!("{}: {e}", path.display())))?;
    for r in &rows {
        w.serialize(r).map_err(|e| Failure::Run(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| Failure::Run(format!("{}: {e}", path.display())))?;

    write_group_summary(out, &rows, &methods, &s.iterations)?;

    let mut slopes = serde_json::Map::new();
    for &m in &methods {
        let mut ts = Vec::new();
        let mut means = Vec::new();
        for &t in &s.iterations {
            let group: Vec<&CellRow> = rows.iter().filter(|r| r.method == method_name(m) && r.iterations == t).collect();
            if let Some(d) = mean_of(&group, |r| r.delta_t) {
                ts.push(t as f64);
                means.push(d);
            }
        }
        slopes.insert(method_name(m).into(), json!(log_log_slope(&ts, &means).ok()));
    }
    let mut wins = serde_json::Map::new();
    if methods.contains(&Method::Costa) && methods.contains(&Method::Classical) {
        for &t in &s.iterations {
            let pick = |m: &str, seed: u64| {
                rows.iter().find(|r| r.method == m && r.iterations == t && r.seed == seed).and_then(|r| r.delta_t)
            };
            let mut won = 0;
            let mut pairs = 0;
            for &seed in &s.seeds {
                if let (Some(a), Some(b)) = (pick("costa", seed), pick("classical", seed)) {
                    pairs += 1;
                    if a <= b {
                        won += 1;
                    }
                }
            }
            wins.insert(t.to_string(), json!({ "costa_wins": won, "pairs": pairs }));
        }
    }
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    output::write_json(
        &out.join(output::SWEEP_SUMMARY_FILE),
        &json!({ "cells": rows.len(), "failed_cells": failed, "slopes": slopes, "paired_wins": wins }),
    )
    .map_err(Failure::Run)?;
    if failed > 0 {
        return Err(Failure::Run(format!("{failed} of {} cells failed", rows.len())));
    }
    Ok(())
}

fn write_group_summary(out: &Path, rows: &[CellRow], methods: &[Method], iterations: &[usize]) -> Result<(), Failure> {
    #[derive(Serialize)]
    struct GroupRow {
        method: String,
        iterations: usize,
        cells: usize,
        delta_t_mean: Option<f64>,
        delta_t_std: Option<f64>,
        final_feasibility_mean: Option<f64>,
        max_feasibility: f64,
        train_accuracy_mean: Option<f64>,
        test_accuracy_mean: Option<f64>,
    }
    let path = out.join(output::AGGREGATE_SUMMARY_FILE);
    let err = |e: csv::Error| Failure::Run(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(&path).map_err(err)?;
    for &m in methods {
        for &t in iterations {
            let group: Vec<&CellRow> =
                rows.iter().filter(|r| r.method == method_name(m) && r.iterations == t && r.status == "ok").collect();
            let deltas: Vec<f64> = group.iter().filter_map(|r| r.delta_t).collect();
            let (dm, ds) = if deltas.is_empty() { (None, None) } else {
                let (a, b) = mean_std(&deltas);
                (Some(a), Some(b))
            };
            w.serialize(GroupRow {
                method: method_name(m).into(),
                iterations: t,
                cells: group.len(),
                delta_t_mean: dm,
                delta_t_std: ds,
                final_feasibility_mean: mean_of(&group, |r| r.final_feasibility),
                max_feasibility: group.iter().map(|r| r.max_feasibility).fold(0.0, f64::max),
                train_accuracy_mean: mean_of(&group, |r| r.train_accuracy),
                test_accuracy_mean: mean_of(&group, |r| r.test_accuracy),
            })
            .map_err(err)?;
        }
    }
    w.flush().map_err(|e| Failure::Run(format!("{}: {e}", path.display())))
}

/// The starting point plus `count − 1` uniform draws in the box of half-width
/// `radius` around it.
fn anchors(x1: &[f64], count: usize, radius: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![x1.to_vec()];
    for _ in 1..count.max(1) {
        out.push(x1.iter().map(|v| v + radius * rng.random_range(-1.0..=1.0)).collect());
    }
    out
}

pub fn validate(cfg: &ExperimentConfig, out: &Path) -> Result<(), Failure> {
    if cfg.validate.checks.is_empty() {
        eprintln!("warning: nothing validated (empty check list)");
        return Ok(());
    }
    let (built, x1) = build(cfg)?;
    let v = &cfg.validate;
    let points = anchors(&x1, v.anchors, v.radius, cfg.seed);
    let opts = v.options(cfg.seed);
    let report = with_demo!(&built, p => validate_problem(p, &points, cfg.run.mu, Some(&cfg.schedule), &opts))
        .map_err(|e| Failure::Run(format!("validation error: {e}")))?;
    create_dir(out)?;
    output::write_json(&out.join(output::VALIDATION_FILE), &report).map_err(Failure::Run)?;

    for o in &report.outcomes {
        let status = match o.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Skipped => "SKIP",
        };
        println!("{status} {} {} anchor={}: {}", format!("{:?}", o.check).to_lowercase(), o.label, o.anchor, o.detail);
    }
    println!(
        "{} passed, {} failed, {} skipped",
        report.count(CheckStatus::Pass),
        report.count(CheckStatus::Fail),
        report.count(CheckStatus::Skipped)
    );
    if report.passed() {
        return Ok(());
    }
    let mut names: Vec<String> = report.failures().map(|o| format!("{} ({})", o.label, format!("{:?}", o.check).to_lowercase())).collect();
    names.dedup();
    Err(Failure::Run(format!("validation failed for: {}", names.join(", "))))
}

/// `--out`, then `COSTA_OUTPUT_DIR`, then the config's `output_dir`.
pub fn output_dir(flag: Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    flag.or_else(|| std::env::var_os("COSTA_OUTPUT_DIR").filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| cfg.output_dir.clone())
}
