//! Constraint-qualification and optimality diagnostics: strong MFCQ margin
//! estimation by linear programming, Slater-margin probing, the dual-variable
//! bound, and ε-KKT reports at candidate points.

use minilp::{ComparisonOp, OptimizationDirection, Problem as Lp};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::costa::RunTrace;
use crate::error::{check_dim, CostaError, Result};
use crate::linalg::norm;
use crate::problem::{feasibility_violation, SmoothFn, StochasticProblem};
use crate::surrogate::ConstraintSurrogate;

/// Strong `(ω, ρ)`-MFCQ estimate at a point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfcqParams {
    pub omega: f64,
    /// Margin under the box `‖d‖_∞ ≤ cap`; `+∞` when nothing is near-active.
    pub rho: f64,
    /// Maximizing direction, minimal in `ℓ₁` among maximizers.
    pub direction: Vec<f64>,
    /// `direction / ‖direction‖₂` (zero when `direction` is zero).
    pub unit_direction: Vec<f64>,
    /// Margin of `unit_direction`: `rho / ‖direction‖₂`.
    pub rho_unit: f64,
    /// Near-active non-convex constraints, `g_j(x) ≥ −ω`.
    pub active_g: Vec<usize>,
    /// Near-active convex constraints, `h_i(x) ≥ −ω`.
    pub active_h: Vec<usize>,
}

impl MfcqParams {
    pub fn is_unconstrained(&self) -> bool {
        self.rho.is_infinite()
    }
}

/// Solves `max ρ` s.t. `⟨∇c_k(x), d⟩ ≤ −ρ` over near-active `c_k`,
/// `‖d‖_∞ ≤ cap`, then picks the `ℓ₁`-smallest maximizing `d`.
pub fn estimate_rho<P: StochasticProblem>(problem: &P, x: &[f64], omega: f64, cap: f64) -> Result<MfcqParams> {
    check_dim(problem.dim(), x.len())?;
    if !(omega >= 0.0) || !(cap > 0.0) {
        return Err(CostaError::InvalidInput(format!("need omega >= 0 and cap > 0, got {omega}, {cap}")));
    }
    let n = x.len();
    let near = |c: &dyn SmoothFn| c.value(x) >= -omega;
    let active_g: Vec<usize> =
        problem.nonconvex_constraints().iter().enumerate().filter(|(_, c)| near(c.as_ref())).map(|(k, _)| k).collect();
    let active_h: Vec<usize> =
        problem.convex_constraints().iter().enumerate().filter(|(_, c)| near(c.as_ref())).map(|(k, _)| k).collect();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    for &j in &active_g {
        rows.push(sparse_gradient(problem.nonconvex_constraints()[j].as_ref(), x));
    }
    for &i in &active_h {
        rows.push(sparse_gradient(problem.convex_constraints()[i].as_ref(), x));
    }
    if rows.is_empty() {
        return Ok(MfcqParams {
            omega,
            rho: f64::INFINITY,
            direction: vec![0.0; n],
            unit_direction: vec![0.0; n],
            rho_unit: f64::INFINITY,
            active_g,
            active_h,
        });
    }
    let (rho, direction) = solve_margin_lp(&rows, n, cap)?;
    let len = norm(&direction);
    let (unit_direction, rho_unit) = if len > 0.0 && rho > 0.0 {
        (direction.iter().map(|v| v / len).collect(), rho / len)
    } else {
        (vec![0.0; n], 0.0)
    };
    Ok(MfcqParams { omega, rho, direction, unit_direction, rho_unit, active_g, active_h })
}

fn sparse_gradient(c: &dyn SmoothFn, x: &[f64]) -> Vec<(usize, f64)> {
    c.gradient(x).into_iter().enumerate().filter(|(_, v)| *v != 0.0).collect()
}

fn lp_error(e: minilp::Error) -> CostaError {
    CostaError::Oracle(format!("margin LP failed: {e:?}"))
}

fn solve_margin_lp(rows: &[Vec<(usize, f64)>], n: usize, cap: f64) -> Result<(f64, Vec<f64>)> {
    // phase 1: maximize ρ
    let mut lp = Lp::new(OptimizationDirection::Maximize);
    let rho = lp.add_var(1.0, (0.0, f64::INFINITY));
    let d: Vec<_> = (0..n).map(|_| lp.add_var(0.0, (-cap, cap))).collect();
    for row in rows {
        let mut expr: Vec<(minilp::Variable, f64)> = row.iter().map(|&(i, a)| (d[i], a)).collect();
        expr.push((rho, 1.0));
        lp.add_constraint(expr, ComparisonOp::Le, 0.0);
    }
    let sol = lp.solve().map_err(lp_error)?;
    let rho_star = sol[rho].max(0.0);
    let fallback: Vec<f64> = d.iter().map(|&v| sol[v]).collect();
    if rho_star == 0.0 {
        return Ok((0.0, vec![0.0; n]));
    }

    // phase 2: among directions keeping the margin, minimize ‖d‖₁ with d = p − q
    let target = rho_star * (1.0 - 1e-9);
    let mut lp = Lp::new(OptimizationDirection::Minimize);
    let p: Vec<_> = (0..n).map(|_| lp.add_var(1.0, (0.0, cap))).collect();
    let q: Vec<_> = (0..n).map(|_| lp.add_var(1.0, (0.0, cap))).collect();
    for row in rows {
        let expr: Vec<(minilp::Variable, f64)> =
            row.iter().flat_map(|&(i, a)| [(p[i], a), (q[i], -a)]).collect();
        lp.add_constraint(expr, ComparisonOp::Le, -target);
    }
    let mut direction: Vec<f64> = match lp.solve() {
        Ok(s) => (0..n).map(|i| s[p[i]] - s[q[i]]).collect(),
        Err(_) => fallback,
    };
    let margin_of = |d: &[f64]| {
        rows.iter()
            .map(|row| -row.iter().map(|&(i, a)| a * d[i]).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
            .max(0.0)
    };
    // undo the relaxation of the margin target as far as the box allows
    let attained = margin_of(&direction);
    let widest = direction.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if attained > 0.0 && widest > 0.0 {
        let scale = (rho_star / attained).min(cap / widest);
        if scale > 1.0 {
            direction.iter_mut().for_each(|v| *v *= scale);
        }
    }
    // report the margin the returned direction actually attains
    Ok((margin_of(&direction), direction))
}

/// Margins of the constraints at the probe `x_t + (ρ/L) d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlaterReport {
    pub probe: Vec<f64>,
    /// `g̃_j(probe, x_t)` for every surrogate.
    pub surrogate_margins: Vec<f64>,
    /// `h_i(probe)` for every convex constraint.
    pub convex_margins: Vec<f64>,
    /// `−ρ² / 2L`
    pub threshold: f64,
    pub passed: bool,
    /// `(ρ/L)(G + ρ/2)`, when `G` is known.
    pub omega_required: Option<f64>,
    pub omega_ok: Option<bool>,
}

/// Probes `x̃ = x_t + (ρ/L) d` with the unit direction of `mfcq` and checks
/// every surrogate and convex constraint is at most `−ρ²/2L` there.
pub fn slater_margin<P: StochasticProblem>(
    problem: &P,
    x_t: &[f64],
    surrogates: &[ConstraintSurrogate],
    mfcq: &MfcqParams,
    smoothness: Option<f64>,
    lipschitz: Option<f64>,
) -> Result<SlaterReport> {
    check_dim(problem.dim(), x_t.len())?;
    let l = smoothness.ok_or(CostaError::MetadataRequired("L"))?;
    if !mfcq.rho_unit.is_finite() {
        return Err(CostaError::InvalidInput("Slater probe needs a finite margin".into()));
    }
    let rho = mfcq.rho_unit;
    let step = rho / l;
    let probe: Vec<f64> = x_t.iter().zip(&mfcq.unit_direction).map(|(x, d)| x + step * d).collect();
    let surrogate_margins: Vec<f64> = surrogates.iter().map(|s| s.value(&probe)).collect();
    let convex_margins: Vec<f64> = problem.convex_constraints().iter().map(|h| h.value(&probe)).collect();
    let threshold = -rho * rho / (2.0 * l);
    let passed = surrogate_margins.iter().chain(&convex_margins).all(|&m| m <= threshold);
    let omega_required = lipschitz.map(|g| step * (g + 0.5 * rho));
    let omega_ok = omega_required.map(|w| mfcq.omega >= w);
    Ok(SlaterReport { probe, surrogate_margins, convex_margins, threshold, passed, omega_required, omega_ok })
}

/// `2 B_U L / ρ²`.
pub fn dual_bound(range_bound: f64, smoothness: f64, rho: f64) -> Result<f64> {
    for (name, v) in [("B_U", range_bound), ("L", smoothness), ("rho", rho)] {
        if !(v > 0.0) {
            return Err(CostaError::InvalidInput(format!("{name} must be > 0, got {v}")));
        }
    }
    Ok(2.0 * range_bound * smoothness / (rho * rho))
}

/// ε-KKT quantities at a candidate point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// `‖∇U(x̃) + ∇g(x̃)λ̃ + ∇h(x̃)ν̃ + v‖`
    pub stationarity: f64,
    /// `λ̃ᵀ g(x̃)`
    pub complementarity_g: f64,
    /// `ν̃ᵀ h(x̃)`
    pub complementarity_h: f64,
    pub violation: f64,
    /// Monte-Carlo samples behind `∇U`; 0 when it was exact.
    pub samples: usize,
    /// The minimum-norm completing element `v ∈ ∂u(x̃)`.
    pub subgradient: Vec<f64>,
}

impl KktReport {
    /// `stationarity² − min(0, λᵀg) − min(0, νᵀh)`
    pub fn score(&self) -> f64 {
        self.stationarity * self.stationarity - self.complementarity_g.min(0.0) - self.complementarity_h.min(0.0)
    }
}

/// Evaluates the ε-KKT residuals at `x` with duals `(λ, ν)`. Uses the exact
/// expected gradient when the problem provides one, otherwise averages `mc`
/// fresh sampled gradients.
pub fn kkt_report<P: StochasticProblem, R: Rng + ?Sized>(
    problem: &P,
    x: &[f64],
    lambda: &[f64],
    nu: &[f64],
    mc: usize,
    rng: &mut R,
) -> Result<KktReport> {
    let n = problem.dim();
    check_dim(n, x.len())?;
    check_dim(problem.nonconvex_constraints().len(), lambda.len())?;
    check_dim(problem.convex_constraints().len(), nu.len())?;
    if lambda.iter().chain(nu).any(|&d| !(d >= 0.0)) {
        return Err(CostaError::InvalidInput("duals must be nonnegative".into()));
    }
    let mut w = vec![0.0; n];
    let samples = if problem.expected_gradient(x, &mut w) {
        0
    } else {
        if mc == 0 {
            return Err(CostaError::InvalidInput("no exact gradient and zero Monte-Carlo samples".into()));
        }
        let mut g = vec![0.0; n];
        for _ in 0..mc {
            let s = problem.draw(rng);
            problem.gradient(x, &s, &mut g);
            for (wi, gi) in w.iter_mut().zip(&g) {
                *wi += gi / mc as f64;
            }
        }
        mc
    };
    let mut complementarity_g = 0.0;
    for (c, &l) in problem.nonconvex_constraints().iter().zip(lambda) {
        complementarity_g += l * c.value(x);
        if l != 0.0 {
            c.add_gradient(x, l, &mut w);
        }
    }
    let mut complementarity_h = 0.0;
    for (c, &v) in problem.convex_constraints().iter().zip(nu) {
        complementarity_h += v * c.value(x);
        if v != 0.0 {
            c.add_gradient(x, v, &mut w);
        }
    }
    let mut subgradient = vec![0.0; n];
    problem.regularizer().min_norm_subgradient(x, &w, &mut subgradient);
    let stationarity = w.iter().zip(&subgradient).map(|(a, b)| (a + b) * (a + b)).sum::<f64>().sqrt();
    Ok(KktReport {
        stationarity,
        complementarity_g,
        complementarity_h,
        violation: feasibility_violation(problem, x)?,
        samples,
        subgradient,
    })
}

/// Observed dual norms along a run compared with `2 B̂_U L̂ / ρ̂²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualBoundReport {
    /// Largest `|f̃ + u|` observed at `x_t` and `x̂_t`.
    pub range_estimate: f64,
    pub smoothness: f64,
    /// Smallest unit-direction margin over the probed iterates.
    pub rho_estimate: f64,
    /// `2 B̂_U L̂ / ρ̂²`; infinite when `ρ̂ = 0`.
    pub bound: f64,
    pub max_dual_norm: f64,
    /// Same comparison restricted to the non-convex constraints and `‖λ̂‖₁`.
    pub rho_estimate_g: f64,
    pub bound_g: f64,
    pub max_lambda_norm: f64,
    pub probes: usize,
    /// `Some(true)` when the bound held, `Some(false)` on an estimation
    /// failure, `None` when the bound is vacuous.
    pub holds: Option<bool>,
    pub diagnostics: String,
}

/// Re-estimates `ρ` at every `stride`-th recorded iterate and compares the
/// recorded dual norms with the resulting bound.
pub fn dual_bound_monitor<P: StochasticProblem>(
    problem: &P,
    trace: &RunTrace,
    omega: f64,
    stride: usize,
) -> Result<DualBoundReport> {
    let l = problem.meta().smoothness()?;
    if trace.records.is_empty() || trace.iterates.is_empty() {
        return Err(CostaError::InvalidInput("dual-bound monitor needs a trace with recorded iterates".into()));
    }
    let stride = stride.max(1);
    let mut rho_all = f64::INFINITY;
    let mut rho_g = f64::INFINITY;
    let mut probes = 0;
    let mut idx: Vec<usize> = (0..trace.records.len()).step_by(stride).collect();
    if idx.last() != Some(&(trace.records.len() - 1)) {
        idx.push(trace.records.len() - 1);
    }
    for &k in &idx {
        let x = &trace.iterates[k];
        let m = estimate_rho(problem, x, omega, 1.0)?;
        rho_all = rho_all.min(m.rho_unit);
        let rows: Vec<Vec<(usize, f64)>> = m
            .active_g
            .iter()
            .map(|&j| sparse_gradient(problem.nonconvex_constraints()[j].as_ref(), x))
            .collect();
        let r = if rows.is_empty() {
            f64::INFINITY
        } else {
            let (r, d) = solve_margin_lp(&rows, x.len(), 1.0)?;
            let len = norm(&d);
            if len > 0.0 { r / len } else { 0.0 }
        };
        rho_g = rho_g.min(r);
        probes += 1;
    }
    let range = trace
        .records
        .iter()
        .flat_map(|r| [r.surrogate_at_anchor.abs(), r.surrogate_at_solution.abs()])
        .fold(0.0, f64::max);
    let max_dual = trace.records.iter().map(|r| r.dual_norm_l1).fold(0.0, f64::max);
    let max_lambda = trace.records.iter().map(|r| r.lambda_norm_l1).fold(0.0, f64::max);
    let bound_of = |rho: f64| -> f64 {
        if rho.is_infinite() {
            0.0
        } else if rho <= 0.0 || range <= 0.0 {
            f64::INFINITY
        } else {
            2.0 * range * l / (rho * rho)
        }
    };
    let bound = bound_of(rho_all);
    let bound_g = bound_of(rho_g);
    let (holds, diagnostics) = if bound.is_infinite() {
        (
            None,
            format!(
                "bound vacuous: rho_hat = {rho_all:e} (opposing near-active gradients, e.g. equality pairs); \
                 non-convex part: max ||lambda||_1 = {max_lambda:e} vs {bound_g:e}"
            ),
        )
    } else if max_dual <= bound {
        (Some(true), format!("max dual norm {max_dual:e} <= bound {bound:e}"))
    } else {
        (
            Some(false),
            format!(
                "estimation failure: max dual norm {max_dual:e} > bound {bound:e} \
                 (B_U_hat = {range:e}, L_hat = {l:e}, rho_hat = {rho_all:e}; range or margin underestimated)"
            ),
        )
    };
    Ok(DualBoundReport {
        range_estimate: range,
        smoothness: l,
        rho_estimate: rho_all,
        bound,
        max_dual_norm: max_dual,
        rho_estimate_g: rho_g,
        bound_g,
        max_lambda_norm: max_lambda,
        probes,
        holds,
        diagnostics,
    })
}
