//! Trace, summary, plot-data and schema writers.

use std::fs;
use std::path::Path;

use costa_core::costa::{RunTrace, RateCertificate};
use costa_core::cq::{DualBoundReport, KktReport};
use serde::Serialize;
use serde_json::{json, Map, Value};

pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const OBJECTIVE_PLOT_FILE: &str = "objective_vs_calls.csv";
pub const WAYPOINT_FILE: &str = "waypoints.csv";
pub const FAILURE_MARKER: &str = "FAILED";
pub const SCHEMA_FILE: &str = "schema.json";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const AGGREGATE_SUMMARY_FILE: &str = "aggregate_summary.csv";
pub const SWEEP_SUMMARY_FILE: &str = "sweep_summary.json";
pub const VALIDATION_FILE: &str = "validation.json";

/// Shortest round-trip form, switching to exponent notation for tiny and
/// huge magnitudes.
fn num(x: f64) -> String {
    format!("{x:?}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> String {
    format!("{}: {e}", path.display())
}

pub fn write_trace(dir: &Path, trace: &RunTrace) -> Result<(), String> {
    let path = dir.join(TRACE_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
    w.write_record([
        "t",
        "eta",
        "beta",
        "delta_norm",
        "feasibility",
        "dual_norm_l1",
        "objective_est",
        "tracking_err_or_blank",
    ])
    .map_err(|e| io_err(&path, e))?;
    for r in &trace.records {
        w.write_record([
            r.t.to_string(),
            num(r.eta),
            num(r.beta),
            num(r.delta_norm),
            num(r.feasibility),
            num(r.dual_norm_l1),
            opt(r.objective_est),
            opt(r.tracking_err),
        ])
        .map_err(|e| io_err(&path, e))?;
    }
    w.flush().map_err(|e| io_err(&path, e))
}

/// Objective against oracle calls under both counting conventions: every
/// gradient evaluation counted, and one call per iteration.
pub fn write_objective_plot(dir: &Path, trace: &RunTrace) -> Result<(), String> {
    let path = dir.join(OBJECTIVE_PLOT_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
    w.write_record(["t", "gradient_evaluations", "iterations", "objective_est"]).map_err(|e| io_err(&path, e))?;
    w.write_record(["0".to_string(), "0".to_string(), "0".to_string(), opt(trace.initial_objective)])
        .map_err(|e| io_err(&path, e))?;
    for r in &trace.records {
        w.write_record([r.t.to_string(), r.oracle_calls.to_string(), r.t.to_string(), opt(r.objective_est)])
            .map_err(|e| io_err(&path, e))?;
    }
    w.flush().map_err(|e| io_err(&path, e))
}

pub fn write_waypoints(
    dir: &Path,
    initial: &[(usize, usize, [f64; 2])],
    last: &[(usize, usize, [f64; 2])],
) -> Result<(), String> {
    let path = dir.join(WAYPOINT_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
    w.write_record(["agent", "tau", "x", "y", "initial_x", "initial_y"]).map_err(|e| io_err(&path, e))?;
    for ((a, tau, p), (_, _, q)) in last.iter().zip(initial) {
        w.write_record([a.to_string(), tau.to_string(), num(p[0]), num(p[1]), num(q[0]), num(q[1])])
            .map_err(|e| io_err(&path, e))?;
    }
    w.flush().map_err(|e| io_err(&path, e))
}

#[derive(Debug, Clone, Serialize)]
pub struct BestKkt {
    pub t: usize,
    pub report: KktReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub problem: String,
    pub method: String,
    pub seed: u64,
    pub iterations: usize,
    pub completed_iterations: usize,
    pub delta_t: Option<f64>,
    pub best_kkt: Option<BestKkt>,
    pub rate_certificate: Option<RateCertificate>,
    pub rate_certificate_note: Option<String>,
    pub final_feasibility: Option<f64>,
    pub max_feasibility: f64,
    pub initial_objective: Option<f64>,
    pub final_objective: Option<f64>,
    pub oracle_calls: usize,
    pub final_x: Vec<f64>,
    pub dual_bound: Option<DualBoundReport>,
    pub problem_specific: Map<String, Value>,
    pub failure: Option<String>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), String> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn write_failure_marker(dir: &Path, message: &str) -> Result<(), String> {
    let path = dir.join(FAILURE_MARKER);
    fs::write(&path, format!("{message}\n")).map_err(|e| io_err(&path, e))
}

/// Field documentation for every file the harness writes.
pub fn schema() -> Value {
    json!({
        "trace.csv": {
            "t": "iteration index, 1-based",
            "eta": "step size eta_t",
            "beta": "momentum weight beta_t used in this iteration's tracking update",
            "delta_norm": "||xhat_t - x_t||, progress of the subproblem solution",
            "feasibility": "constraint violation max(0, g_j, h_i) of x_{t+1}",
            "dual_norm_l1": "||lambda_t||_1 + ||nu_t||_1 of the subproblem multipliers",
            "objective_est": "U(x_{t+1}) + u(x_{t+1}); exact when the problem has a closed-form expectation, otherwise a Monte-Carlo estimate with run.report_samples draws; blank when neither is available",
            "tracking_err_or_blank": "||z_{t+1} - grad U(x_t)||; exact when the expected gradient is available, otherwise estimated from run.tracking_samples held-out draws; blank when neither"
        },
        "objective_vs_calls.csv": {
            "t": "iteration index (0 = starting point)",
            "gradient_evaluations": "cumulative stochastic gradient evaluations (two per iteration for the recursive-momentum method, one for the classical baseline)",
            "iterations": "cumulative calls counting one per iteration",
            "objective_est": "as in trace.csv"
        },
        "waypoints.csv": {
            "agent": "agent index",
            "tau": "waypoint index, 0 = start",
            "x": "final waypoint, first coordinate",
            "y": "final waypoint, second coordinate",
            "initial_x": "starting-point waypoint, first coordinate",
            "initial_y": "starting-point waypoint, second coordinate"
        },
        "summary.json": {
            "problem": "problem selector",
            "method": "costa or classical",
            "seed": "rng seed",
            "iterations": "configured T",
            "completed_iterations": "iterations finished before any abort",
            "delta_t": "average progress (1/T) sum_t ||delta_t||",
            "best_kkt": "iteration t minimizing stationarity^2 - min(0, lambda'g) - min(0, nu'h) at xhat_t, with its report {stationarity, complementarity_g, complementarity_h, violation, samples, subgradient}",
            "rate_certificate": "{m_t, d, bound, inputs}; null when the problem lacks B_1, sigma, L or G",
            "rate_certificate_note": "why the certificate is missing",
            "final_feasibility": "violation at the final iterate",
            "max_feasibility": "largest violation over recorded iterates",
            "initial_objective": "objective estimate at x_1",
            "final_objective": "objective estimate at x_{T+1}",
            "oracle_calls": "total stochastic gradient evaluations",
            "final_x": "final iterate",
            "dual_bound": "dual-norm monitor report when emit.dual_bound is set",
            "problem_specific": "classification: train_accuracy, test_accuracy, nonzeros, mcp_constraint; planning: energy, straight_line_energy, energy_ratio, goal_error",
            "failure": "error message when the run aborted"
        },
        "FAILED": "present only when a run aborted; contains the error message",
        "aggregate.csv": {
            "method": "tracking rule",
            "iterations": "T",
            "seed": "rng seed",
            "status": "ok or failed",
            "delta_t": "average progress",
            "final_feasibility": "violation at the final iterate",
            "max_feasibility": "largest violation over the run",
            "best_kkt_t": "best-KKT iteration",
            "best_stationarity": "stationarity at the best-KKT iteration",
            "final_objective": "objective estimate at the final iterate",
            "train_accuracy": "classification only",
            "test_accuracy": "classification only",
            "energy": "planning only: expected energy of the final trajectory"
        },
        "aggregate_summary.csv": {
            "method": "tracking rule",
            "iterations": "T",
            "cells": "completed cells",
            "delta_t_mean": "mean of delta_t over seeds",
            "delta_t_std": "sample standard deviation of delta_t over seeds",
            "final_feasibility_mean": "mean final violation",
            "max_feasibility": "largest violation over all cells",
            "train_accuracy_mean": "classification only",
            "test_accuracy_mean": "classification only"
        },
        "sweep_summary.json": {
            "slopes": "least-squares slope of log mean delta_t against log T per method",
            "paired_wins": "for each T, number of seeds where costa's delta_t <= classical's"
        },
        "validation.json": {
            "outcomes": "one entry per (check, label, anchor) with status pass|fail|skipped and detail"
        }
    })
}

pub fn write_schema(dir: &Path) -> Result<(), String> {
    write_json(&dir.join(SCHEMA_FILE), &schema())
}
