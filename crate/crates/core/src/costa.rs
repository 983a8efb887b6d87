//! The outer iteration: gradient tracking, schedules, surrogate subproblems
//! and iterate averaging, plus the classical-tracking baseline and the
//! convergence-rate certificate.
//!
//! One iteration `t` (1-based):
//!
//! ```text
//! draw ξ_t
//! z_{t+1} = ∇f(x_t, ξ_t) + (1 − β_t)(z_t − ∇f(x_{t−1}, ξ_t))
//! η_t     = k̄ / (w + Σ_{i≤t} ‖∇f(x_i, ξ_i)‖²)^{1/3},   β_{t+1} = c η_t²
//! x̂_t     = argmin f̃(x) + u(x)  s.t.  g̃(x, x_t) ≤ 0, h(x) ≤ 0
//! x_{t+1} = (1 − η_t) x_t + η_t x̂_t
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cq::{kkt_report, KktReport};
use crate::error::{check_dim, CostaError, Result};
use crate::linalg::{dist, lerp, norm};
use crate::problem::{estimate_expected_objective, feasibility_violation, SmoothFn, SmoothnessMeta, StochasticProblem};
use crate::schedule::{averaging_update, storm_update, ScheduleParams, ScheduleState};
use crate::subsolver::{solve_warm, ConvexSubproblem, KktResiduals, SolverOptions};
use crate::surrogate::{
    build_running_surrogate, ObjectiveModel, ObjectiveSurrogateBuilder, ProximalBuilder,
};

/// Gradient-tracking rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Recursive momentum, two oracle calls per iteration.
    Costa,
    /// `z_{t+1} = (1 − ρ_t) z_t + ρ_t ∇f(x_t, ξ_t)` with
    /// `ρ_t = min(1, rho_scale / √(t+1))`, one oracle call per iteration.
    Classical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Number of iterations `T`.
    pub iterations: usize,
    pub schedule: ScheduleParams,
    /// Surrogate modulus `μ`.
    pub mu: f64,
    pub solver: SolverOptions,
    /// Feasible starting point `x_1` (`= x_0`).
    pub x1: Vec<f64>,
    pub seed: u64,
    /// Use exact `U` and `∇U` in place of sampled oracles.
    pub deterministic: bool,
    /// Monte-Carlo samples for objective estimates when `U` is not exact;
    /// 0 leaves the estimate blank.
    pub report_samples: usize,
    /// Held-out samples for estimating `e_t` when `∇U` is not exact; 0 leaves
    /// it blank.
    pub tracking_samples: usize,
    /// Evaluate the ε-KKT report at `x̂_t` every this many iterations; 0 never.
    pub kkt_every: usize,
    /// Monte-Carlo samples for `∇U` in KKT reports when it is not exact.
    pub kkt_samples: usize,
    /// Scale of the classical baseline's averaging weight.
    pub rho_scale: f64,
    /// Keep `x_t` and `x̂_t` in the trace.
    pub record_iterates: bool,
    /// Replaces `η_t` by a constant (test hook).
    pub step_override: Option<f64>,
}

impl RunConfig {
    pub fn new(x1: Vec<f64>, schedule: ScheduleParams, mu: f64, iterations: usize) -> Self {
        Self {
            iterations,
            schedule,
            mu,
            solver: SolverOptions::default(),
            x1,
            seed: 0,
            deterministic: false,
            report_samples: 0,
            tracking_samples: 0,
            kkt_every: 1,
            kkt_samples: 64,
            rho_scale: 1.0,
            record_iterates: true,
            step_override: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        self.solver.validate()?;
        if self.iterations == 0 {
            return Err(CostaError::InvalidConfig("iterations must be >= 1".into()));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(CostaError::InvalidConfig(format!("mu must be > 0, got {}", self.mu)));
        }
        if !(self.rho_scale > 0.0) {
            return Err(CostaError::InvalidConfig(format!("rho_scale must be > 0, got {}", self.rho_scale)));
        }
        if let Some(eta) = self.step_override {
            if !(0.0..=1.0).contains(&eta) {
                return Err(CostaError::InvalidConfig(format!("step override must lie in [0, 1], got {eta}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    pub eta: f64,
    /// `β_t`, the momentum used in this iteration's tracking update.
    pub beta: f64,
    /// `G_t = ‖∇f(x_t, ξ_t)‖`
    pub grad_norm: f64,
    /// `‖δ_t‖ = ‖x̂_t − x_t‖`
    pub delta_norm: f64,
    /// Feasibility violation of `x_{t+1}`.
    pub feasibility: f64,
    /// `‖λ̂_t‖₁ + ‖ν̂_t‖₁`
    pub dual_norm_l1: f64,
    pub lambda_norm_l1: f64,
    /// Estimate of `U(x_{t+1}) + u(x_{t+1})`.
    pub objective_est: Option<f64>,
    pub objective_exact: bool,
    /// `‖z_{t+1} − ∇U(x_t)‖`
    pub tracking_err: Option<f64>,
    pub tracking_err_exact: bool,
    /// `f̃(x_t) + u(x_t)`
    pub surrogate_at_anchor: f64,
    /// `f̃(x̂_t) + u(x̂_t)`
    pub surrogate_at_solution: f64,
    pub sub_iterations: usize,
    pub sub_converged: bool,
    pub sub_residuals: KktResiduals,
    /// ε-KKT report at `x̂_t` (subgradient omitted).
    pub kkt: Option<KktReport>,
    /// Cumulative stochastic first-order oracle calls.
    pub oracle_calls: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub method: Method,
    pub seed: u64,
    pub records: Vec<IterationRecord>,
    /// `x_1, …, x_{T+1}` when recorded.
    pub iterates: Vec<Vec<f64>>,
    /// `x̂_1, …, x̂_T` when recorded.
    pub solutions: Vec<Vec<f64>>,
    /// `(λ̂_t, ν̂_t)` when recorded.
    pub duals: Vec<(Vec<f64>, Vec<f64>)>,
    /// Estimate of `U(x_1) + u(x_1)`.
    pub initial_objective: Option<f64>,
    pub final_x: Vec<f64>,
}

impl RunTrace {
    /// `Δ_T`.
    pub fn average_progress(&self) -> Result<f64> {
        average_progress(self)
    }

    /// 1-based index minimizing the KKT score over iterations with a report.
    pub fn best_kkt(&self) -> Option<(usize, &KktReport)> {
        let mut best: Option<(usize, &KktReport)> = None;
        for r in &self.records {
            if let Some(k) = &r.kkt {
                if best.is_none_or(|(_, b)| k.score() < b.score()) {
                    best = Some((r.t, k));
                }
            }
        }
        best
    }

    pub fn max_feasibility(&self) -> f64 {
        self.records.iter().map(|r| r.feasibility).fold(0.0, f64::max)
    }
}

/// A run aborted by a hard error, with the iterations completed so far.
#[derive(Debug, Clone)]
pub struct RunFailure {
    pub error: CostaError,
    pub partial: RunTrace,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "run aborted after {} iterations: {}", self.partial.records.len(), self.error)
    }
}

impl std::error::Error for RunFailure {}

pub fn run_costa<P: StochasticProblem>(problem: &P, config: &RunConfig) -> std::result::Result<RunTrace, RunFailure> {
    run(problem, config, Method::Costa, &ProximalBuilder)
}

pub fn run_classical_sca<P: StochasticProblem>(
    problem: &P,
    config: &RunConfig,
) -> std::result::Result<RunTrace, RunFailure> {
    run(problem, config, Method::Classical, &ProximalBuilder)
}

pub fn run_costa_with_surrogate<P: StochasticProblem>(
    problem: &P,
    config: &RunConfig,
    builder: &dyn ObjectiveSurrogateBuilder,
) -> std::result::Result<RunTrace, RunFailure> {
    run(problem, config, Method::Costa, builder)
}

/// Runs one seed per entry of `seeds` in parallel.
pub fn run_seeds<P: StochasticProblem>(
    problem: &P,
    config: &RunConfig,
    method: Method,
    seeds: &[u64],
) -> Vec<std::result::Result<RunTrace, RunFailure>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let cfg = RunConfig { seed, ..config.clone() };
            run(problem, &cfg, method, &ProximalBuilder)
        })
        .collect()
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub fn run<P: StochasticProblem>(
    problem: &P,
    config: &RunConfig,
    method: Method,
    builder: &dyn ObjectiveSurrogateBuilder,
) -> std::result::Result<RunTrace, RunFailure> {
    let mut trace = RunTrace {
        method,
        seed: config.seed,
        records: Vec::with_capacity(config.iterations),
        iterates: Vec::new(),
        solutions: Vec::new(),
        duals: Vec::new(),
        initial_objective: None,
        final_x: config.x1.clone(),
    };
    match drive(problem, config, method, builder, &mut trace) {
        Ok(()) => Ok(trace),
        Err(error) => Err(RunFailure { error, partial: trace }),
    }
}

/// Objective oracle used by the driver: sampled, or exact in deterministic mode.
fn oracle<P: StochasticProblem>(
    problem: &P,
    deterministic: bool,
    x: &[f64],
    sample: &P::Sample,
    out: &mut [f64],
) -> Result<f64> {
    if deterministic {
        if !problem.expected_gradient(x, out) {
            return Err(CostaError::InvalidConfig("deterministic mode needs an exact expected gradient".into()));
        }
        problem
            .expected_value(x)
            .ok_or_else(|| CostaError::InvalidConfig("deterministic mode needs an exact expected value".into()))
    } else {
        problem.gradient(x, sample, out);
        let v = problem.value(x, sample);
        if !v.is_finite() || out.iter().any(|g| !g.is_finite()) {
            return Err(CostaError::Oracle("non-finite sampled value or gradient".into()));
        }
        Ok(v)
    }
}

fn objective_estimate<P: StochasticProblem>(
    problem: &P,
    x: &[f64],
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Option<f64>, bool)> {
    if let Some(u) = problem.expected_value(x) {
        return Ok((Some(u + problem.regularizer().value(x)), true));
    }
    if samples == 0 {
        return Ok((None, false));
    }
    Ok((Some(estimate_expected_objective(problem, x, samples, rng)?), false))
}

fn drive<P: StochasticProblem>(
    problem: &P,
    config: &RunConfig,
    method: Method,
    builder: &dyn ObjectiveSurrogateBuilder,
    trace: &mut RunTrace,
) -> Result<()> {
    config.validate()?;
    let n = problem.dim();
    check_dim(n, config.x1.len())?;
    let v1 = feasibility_violation(problem, &config.x1)?;
    if v1 > config.solver.tol {
        return Err(CostaError::InvalidConfig(format!("initial point is infeasible (violation {v1:e})")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut report_rng = stream(config.seed, 1);
    let mut track_rng = stream(config.seed, 2);
    let mut kkt_rng = stream(config.seed, 3);

    let mut schedule = ScheduleState::new(config.schedule)?;
    let mu = config.mu;
    let det = config.deterministic;

    let mut x_prev = config.x1.clone();
    let mut x = config.x1.clone();
    let mut g_now = vec![0.0; n];
    let mut g_prev = vec![0.0; n];
    let mut exact = vec![0.0; n];

    // ξ_1 serves both z_1 = ∇f(x_0, ξ_1) and the first iteration.
    let mut sample = problem.draw(&mut rng);
    let mut f_now = oracle(problem, det, &x, &sample, &mut g_now)?;
    let mut z = g_now.clone();
    let mut oracle_calls = 1usize;
    let mut beta = config.schedule.initial_momentum().min(1.0);

    let (obj, _) = objective_estimate(problem, &x, config.report_samples, &mut report_rng)?;
    trace.initial_objective = obj;
    if config.record_iterates {
        trace.iterates.push(x.clone());
    }

    let mut warm_x: Option<Vec<f64>> = None;
    let mut warm_duals: Option<(Vec<f64>, Vec<f64>)> = None;

    for t in 1..=config.iterations {
        if t > 1 {
            sample = problem.draw(&mut rng);
            f_now = oracle(problem, det, &x, &sample, &mut g_now)?;
            oracle_calls += 1;
        }
        let z_next = match method {
            Method::Costa => {
                if t > 1 {
                    oracle(problem, det, &x_prev, &sample, &mut g_prev)?;
                    oracle_calls += 1;
                } else {
                    g_prev.copy_from_slice(&g_now);
                }
                storm_update(&z, &g_now, &g_prev, beta)?
            }
            Method::Classical => {
                let rho = (config.rho_scale / ((t + 1) as f64).sqrt()).min(1.0);
                if t == 1 { g_now.clone() } else { averaging_update(&z, &g_now, rho)? }
            }
        };

        let grad_norm = norm(&g_now);
        schedule.accumulate(grad_norm)?;
        let eta = config.step_override.unwrap_or_else(|| schedule.step_size());
        let beta_used = beta;
        beta = schedule.momentum(eta).min(1.0);

        let (tracking_err, tracking_err_exact) = if problem.expected_gradient(&x, &mut exact) {
            (Some(dist(&z_next, &exact)), true)
        } else if config.tracking_samples > 0 {
            let m = config.tracking_samples;
            let mut acc = vec![0.0; n];
            let mut g = vec![0.0; n];
            for _ in 0..m {
                let s = problem.draw(&mut track_rng);
                problem.gradient(&x, &s, &mut g);
                for (a, gi) in acc.iter_mut().zip(&g) {
                    *a += gi / m as f64;
                }
            }
            (Some(dist(&z_next, &acc)), false)
        } else {
            (None, false)
        };

        let model: Box<dyn ObjectiveModel> = match method {
            Method::Costa => {
                let base = builder.build(&x, &g_now, f_now, mu)?;
                Box::new(build_running_surrogate(base, &g_now, &z_next)?)
            }
            Method::Classical => builder.build(&x, &z_next, f_now, mu)?,
        };
        let surrogates = problem
            .nonconvex_constraints()
            .iter()
            .map(|g| g.surrogate(&x))
            .collect::<Result<Vec<_>>>()?;
        let sub = ConvexSubproblem {
            objective: model.as_ref(),
            regularizer: problem.regularizer(),
            surrogate_constraints: surrogates.iter().map(|s| s as &dyn SmoothFn).collect(),
            convex_constraints: problem.convex_constraints().iter().map(|h| h.as_ref()).collect(),
            anchor: &x,
            modulus: mu,
        };
        let start = warm_x.as_deref().unwrap_or(&x);
        let duals = warm_duals.as_ref().map(|(l, v)| (l.as_slice(), v.as_slice()));
        let sol = solve_warm(&sub, &config.solver, Some(start), duals)?;

        let u = problem.regularizer();
        let surrogate_at_anchor = model.value(&x) + u.value(&x);
        let surrogate_at_solution = model.value(&sol.x) + u.value(&sol.x);
        let delta_norm = dist(&sol.x, &x);
        let x_next = lerp(&x, &sol.x, eta);
        let feasibility = feasibility_violation(problem, &x_next)?;

        let kkt = if config.kkt_every > 0 && (t % config.kkt_every == 0 || t == config.iterations) {
            let mut r = kkt_report(problem, &sol.x, &sol.lambda, &sol.nu, config.kkt_samples, &mut kkt_rng)?;
            r.subgradient = Vec::new();
            Some(r)
        } else {
            None
        };
        let (objective_est, objective_exact) =
            objective_estimate(problem, &x_next, config.report_samples, &mut report_rng)?;
        let lambda_norm_l1: f64 = sol.lambda.iter().map(|v| v.abs()).sum();

        trace.records.push(IterationRecord {
            t,
            eta,
            beta: beta_used,
            grad_norm,
            delta_norm,
            feasibility,
            dual_norm_l1: sol.dual_norm_l1(),
            lambda_norm_l1,
            objective_est,
            objective_exact,
            tracking_err,
            tracking_err_exact,
            surrogate_at_anchor,
            surrogate_at_solution,
            sub_iterations: sol.iterations,
            sub_converged: sol.converged,
            sub_residuals: sol.residuals,
            kkt,
            oracle_calls,
        });
        if config.record_iterates {
            trace.iterates.push(x_next.clone());
            trace.solutions.push(sol.x.clone());
            trace.duals.push((sol.lambda.clone(), sol.nu.clone()));
        }

        warm_duals = Some((sol.lambda, sol.nu));
        warm_x = Some(sol.x);
        z = z_next;
        x_prev = std::mem::replace(&mut x, x_next);
        trace.final_x.clone_from(&x);
    }
    Ok(())
}

/// `Δ_T = (1/T) Σ_t ‖δ_t‖` along the recorded path.
pub fn average_progress(trace: &RunTrace) -> Result<f64> {
    if trace.records.is_empty() {
        return Err(CostaError::InvalidInput("empty trace".into()));
    }
    Ok(trace.records.iter().map(|r| r.delta_norm).sum::<f64>() / trace.records.len() as f64)
}

/// 1-based index `t*` minimizing `stationarity² − min(0, λᵀg) − min(0, νᵀh)`;
/// ties go to the smallest `t`.
pub fn best_kkt_point(reports: &[KktReport]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, r) in reports.iter().enumerate() {
        let s = r.score();
        if best.is_none_or(|(_, b)| s < b) {
            best = Some((k + 1, s));
        }
    }
    best.map(|(t, _)| t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateInputs {
    pub initial_gap: f64,
    pub noise_std: f64,
    pub smoothness: f64,
    pub lipschitz: f64,
    pub k_bar: f64,
    pub w: f64,
    pub c: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateCertificate {
    /// `M_T = 8B_1 + σ² w^{1/3} / (L² k̄²) + (2c² k̄² / L²) log(T + 2)`
    pub m_t: f64,
    /// `d = (c − 4L² − G² / (6k̄³)) / (2L²)`
    pub d: f64,
    /// `√(M_T (w + T G²)^{1/3} / T)`
    pub bound: f64,
    pub inputs: RateInputs,
}

pub fn rate_bound(meta: &SmoothnessMeta, params: &ScheduleParams, iterations: usize) -> Result<RateCertificate> {
    params.validate()?;
    if iterations == 0 {
        return Err(CostaError::InvalidInput("T must be >= 1".into()));
    }
    let b1 = meta.initial_gap()?;
    let sigma = meta.noise_std()?;
    let l = meta.smoothness()?;
    let g = meta.lipschitz()?;
    let ScheduleParams { k_bar, w, c } = *params;
    let t = iterations as f64;
    let m_t = 8.0 * b1
        + sigma * sigma * w.cbrt() / (l * l * k_bar * k_bar)
        + 2.0 * c * c * k_bar * k_bar / (l * l) * (t + 2.0).ln();
    let d = (c - 4.0 * l * l - g * g / (6.0 * k_bar.powi(3))) / (2.0 * l * l);
    let bound = (m_t * (w + t * g * g).cbrt() / t).sqrt();
    Ok(RateCertificate {
        m_t,
        d,
        bound,
        inputs: RateInputs {
            initial_gap: b1,
            noise_std: sigma,
            smoothness: l,
            lipschitz: g,
            k_bar,
            w,
            c,
            iterations,
        },
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(CostaError::InvalidInput("need at least two paired points".into()));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(CostaError::InvalidInput("log-log fit needs positive values".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    Ok(sxy / sxx)
}
