//! Convex subproblem solver.
//!
//! ```text
//! minimize    f̃(x) + u(x)
//! subject to  g̃_j(x) <= 0,  h_i(x) <= 0
//! ```
//!
//! Augmented-Lagrangian outer loop on the multipliers; the inner loop is an
//! accelerated proximal-gradient method (backtracking on a local Lipschitz
//! estimate, gradient-based restart) on
//!
//! ```text
//! S(x) = f̃(x) + 1/(2ρ) Σ_k [max(0, y_k + ρ c_k(x))² − y_k²]
//! ```
//!
//! with `u` handled through its proximal operator. The duals reported are
//! `max(0, y + ρ c(x̂))`, for which `∇S(x̂)` is exactly the gradient of the
//! Lagrangian, so the inner stopping test is the stationarity residual.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, CostaError, Result};
use crate::linalg::dist;
use crate::problem::{Regularizer, SmoothFn};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Target for all three KKT residuals.
    pub tol: f64,
    pub max_outer: usize,
    /// Inner iterations per outer iteration.
    pub max_inner: usize,
    pub initial_penalty: f64,
    pub max_penalty: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_outer: 100, max_inner: 50_000, initial_penalty: 10.0, max_penalty: 1e10 }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(CostaError::InvalidConfig(format!("subsolver tol must be > 0, got {}", self.tol)));
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(CostaError::InvalidConfig("subsolver iteration budgets must be >= 1".into()));
        }
        if !(self.initial_penalty > 0.0 && self.max_penalty >= self.initial_penalty) {
            return Err(CostaError::InvalidConfig("penalty parameters must satisfy 0 < initial <= max".into()));
        }
        Ok(())
    }
}

/// The per-iteration convex program. `surrogate_constraints` are the `g̃_j`
/// anchored at `anchor`; `convex_constraints` are the original `h_i`.
pub struct ConvexSubproblem<'a> {
    pub objective: &'a dyn SmoothFn,
    pub regularizer: &'a dyn Regularizer,
    pub surrogate_constraints: Vec<&'a dyn SmoothFn>,
    pub convex_constraints: Vec<&'a dyn SmoothFn>,
    pub anchor: &'a [f64],
    pub modulus: f64,
}

impl ConvexSubproblem<'_> {
    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    fn constraints(&self) -> impl Iterator<Item = &dyn SmoothFn> + '_ {
        self.surrogate_constraints.iter().chain(&self.convex_constraints).copied()
    }

    fn n_constraints(&self) -> usize {
        self.surrogate_constraints.len() + self.convex_constraints.len()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    /// `‖∇f̃(x̂) + v + Σ λ_j ∇g̃_j(x̂) + Σ ν_i ∇h_i(x̂)‖`
    pub stationarity: f64,
    /// `max(0, max_k c_k(x̂))`
    pub primal_violation: f64,
    /// `max_k |dual_k · c_k(x̂)|`
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal_violation).max(self.complementarity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubproblemSolution {
    pub x: Vec<f64>,
    /// Duals of the surrogate constraints.
    pub lambda: Vec<f64>,
    /// Duals of the convex constraints.
    pub nu: Vec<f64>,
    /// The element of `∂u(x̂)` selected by the proximal step.
    pub subgradient: Vec<f64>,
    pub residuals: KktResiduals,
    /// Total inner (proximal-gradient) iterations.
    pub iterations: usize,
    pub outer_iterations: usize,
    pub converged: bool,
}

impl SubproblemSolution {
    pub fn dual_norm_l1(&self) -> f64 {
        self.lambda.iter().chain(&self.nu).map(|v| v.abs()).sum()
    }
}

/// Recomputes the KKT residuals of a candidate from the oracles alone.
/// The subgradient of `u` is the minimum-norm completion of the rest of the
/// Lagrangian gradient.
pub fn kkt_residuals(sub: &ConvexSubproblem<'_>, candidate: &SubproblemSolution) -> Result<KktResiduals> {
    kkt_residuals_at(sub, &candidate.x, &candidate.lambda, &candidate.nu)
}

pub fn kkt_residuals_at(sub: &ConvexSubproblem<'_>, x: &[f64], lambda: &[f64], nu: &[f64]) -> Result<KktResiduals> {
    check_dim(sub.dim(), x.len())?;
    check_dim(sub.surrogate_constraints.len(), lambda.len())?;
    check_dim(sub.convex_constraints.len(), nu.len())?;
    let mut w = vec![0.0; x.len()];
    sub.objective.add_gradient(x, 1.0, &mut w);
    let mut viol = 0.0f64;
    let mut comp = 0.0f64;
    for (c, &d) in sub.constraints().zip(lambda.iter().chain(nu)) {
        let v = c.value(x);
        viol = viol.max(v);
        comp = comp.max((d * v).abs());
        if d != 0.0 {
            c.add_gradient(x, d, &mut w);
        }
    }
    let mut v = vec![0.0; x.len()];
    sub.regularizer.min_norm_subgradient(x, &w, &mut v);
    let stat: f64 = w.iter().zip(&v).map(|(a, b)| (a + b) * (a + b)).sum::<f64>().sqrt();
    Ok(KktResiduals { stationarity: stat, primal_violation: viol.max(0.0), complementarity: comp })
}

/// Solves `sub` to `opts.tol`, optionally warm-started at `warm`.
pub fn solve(sub: &ConvexSubproblem<'_>, opts: &SolverOptions, warm: Option<&[f64]>) -> Result<SubproblemSolution> {
    solve_warm(sub, opts, warm, None)
}

/// As [`solve`], additionally warm-starting the multipliers
/// (`(λ, ν)` from a previous, similar subproblem).
pub fn solve_warm(
    sub: &ConvexSubproblem<'_>,
    opts: &SolverOptions,
    warm: Option<&[f64]>,
    warm_duals: Option<(&[f64], &[f64])>,
) -> Result<SubproblemSolution> {
    opts.validate()?;
    let n = sub.dim();
    if !(sub.modulus > 0.0) {
        return Err(CostaError::InvalidConfig(format!("subproblem modulus must be > 0, got {}", sub.modulus)));
    }
    let mut x = match warm {
        Some(w) => {
            check_dim(n, w.len())?;
            w.to_vec()
        }
        None => sub.anchor.to_vec(),
    };
    let m = sub.n_constraints();
    let mut y = vec![0.0; m];
    if let Some((l, v)) = warm_duals {
        check_dim(sub.surrogate_constraints.len(), l.len())?;
        check_dim(sub.convex_constraints.len(), v.len())?;
        for (yk, d) in y.iter_mut().zip(l.iter().chain(v)) {
            *yk = d.max(0.0);
        }
    }

    let mut state = Inner::new(sub, n, m);
    let mut rho = opts.initial_penalty;
    let mut inner_tol = if m == 0 { 0.5 * opts.tol } else { (1e-3f64).max(0.5 * opts.tol) };
    let mut prev_infeas = f64::INFINITY;
    let mut prev_viol = f64::INFINITY;
    let mut stalled = 0usize;
    let mut total_inner = 0usize;
    let mut last = None;

    for outer in 1..=opts.max_outer {
        let (stat, its) = state.minimize(&mut x, &y, rho, inner_tol, opts.max_inner);
        total_inner += its;

        let mut viol = 0.0f64;
        let mut comp = 0.0f64;
        for (yk, &ck) in y.iter_mut().zip(&state.cvals) {
            *yk = (*yk + rho * ck).max(0.0);
            viol = viol.max(ck);
            comp = comp.max((*yk * ck).abs());
        }
        let viol = viol.max(0.0);
        let residuals = KktResiduals { stationarity: stat, primal_violation: viol, complementarity: comp };
        last = Some(residuals);

        if residuals.max() <= opts.tol {
            return Ok(state.finish(x, y, residuals, total_inner, outer, true));
        }

        let infeas = viol.max(comp);
        if infeas > 0.25 * prev_infeas {
            rho = (rho * 5.0).min(opts.max_penalty);
        }
        if rho >= opts.max_penalty && viol > opts.tol && viol > 0.99 * prev_viol {
            stalled += 1;
        } else {
            stalled = 0;
        }
        if stalled >= 5 {
            let anchor_viol = sub.constraints().map(|c| c.value(sub.anchor)).fold(0.0, f64::max);
            if anchor_viol > opts.tol {
                return Err(CostaError::InfeasibleSubproblem(format!(
                    "constraint violation stalled at {viol:e} with penalty {rho:e}; anchor violation {anchor_viol:e}"
                )));
            }
        }
        prev_infeas = infeas;
        prev_viol = viol;
        if m == 0 {
            inner_tol = 0.5 * opts.tol;
        } else {
            inner_tol = (0.1 * inner_tol).max(0.5 * opts.tol);
        }
    }

    let residuals = last.unwrap_or_default();
    Ok(state.finish(x, y, residuals, total_inner, opts.max_outer, false))
}

/// Scratch space for the inner accelerated proximal-gradient loop.
struct Inner<'s, 'a> {
    sub: &'s ConvexSubproblem<'a>,
    cvals: Vec<f64>,
    lipschitz: f64,
    subgrad: Vec<f64>,
    has_prox: bool,
}

impl<'s, 'a> Inner<'s, 'a> {
    fn new(sub: &'s ConvexSubproblem<'a>, n: usize, m: usize) -> Self {
        let mut probe = vec![0.0; n];
        let has_prox = sub.regularizer.prox(sub.anchor, 1.0, &mut probe);
        Self { sub, cvals: vec![0.0; m], lipschitz: sub.modulus, subgrad: vec![0.0; n], has_prox }
    }

    /// `∇S(x)`; also fills `cvals` with `c_k(x)`.
    fn grad(&mut self, x: &[f64], y: &[f64], rho: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        self.sub.objective.add_gradient(x, 1.0, out);
        for (k, c) in self.sub.constraints().enumerate() {
            let ck = c.value(x);
            self.cvals[k] = ck;
            let w = (y[k] + rho * ck).max(0.0);
            if w > 0.0 {
                c.add_gradient(x, w, out);
            }
        }
        if !self.has_prox && !self.sub.regularizer.is_zero() {
            let mut s = vec![0.0; x.len()];
            self.sub.regularizer.subgradient(x, &mut s);
            for (o, v) in out.iter_mut().zip(&s) {
                *o += v;
            }
        }
    }

    fn prox_step(&self, point: &[f64], grad: &[f64], step: f64, out: &mut [f64]) {
        let shifted: Vec<f64> = point.iter().zip(grad).map(|(p, g)| p - step * g).collect();
        if self.has_prox {
            self.sub.regularizer.prox(&shifted, step, out);
        } else {
            out.copy_from_slice(&shifted);
        }
    }

    /// Minimizes `S + u` from `x` until the stationarity residual is below
    /// `tol`. Returns the final residual and the iteration count; `cvals`
    /// holds the constraint values at the returned `x`.
    fn minimize(&mut self, x: &mut Vec<f64>, y: &[f64], rho: f64, tol: f64, max_iter: usize) -> (f64, usize) {
        let n = x.len();
        let mut v = x.clone();
        let mut gv = vec![0.0; n];
        let mut x_new = vec![0.0; n];
        let mut g_new = vec![0.0; n];
        let mut momentum_t = 1.0f64;
        let mut residual = f64::INFINITY;
        let mut lip = (self.lipschitz * 0.5).max(self.sub.modulus);

        for it in 1..=max_iter {
            self.grad(&v, y, rho, &mut gv);
            loop {
                let step = 1.0 / lip;
                self.prox_step(&v, &gv, step, &mut x_new);
                self.grad(&x_new, y, rho, &mut g_new);
                let dx = dist(&x_new, &v);
                let dg = dist(&g_new, &gv);
                if dx == 0.0 || dg <= lip * dx * (1.0 + 1e-10) || lip > 1e300 {
                    break;
                }
                lip = (2.0 * lip).max(dg / dx);
            }
            let step = 1.0 / lip;
            // s = (v − step ∇S(v) − x⁺)/step ∈ ∂u(x⁺)
            let mut r2 = 0.0;
            for i in 0..n {
                let s = if self.has_prox { (v[i] - step * gv[i] - x_new[i]) / step } else { 0.0 };
                self.subgrad[i] = s;
                let ri = g_new[i] + s;
                r2 += ri * ri;
            }
            residual = r2.sqrt();

            // gradient-mapping restart test: ⟨v − x⁺, x⁺ − x⟩ > 0
            let mut restart = 0.0;
            for i in 0..n {
                restart += (v[i] - x_new[i]) * (x_new[i] - x[i]);
            }
            let next_t = 0.5 * (1.0 + (1.0 + 4.0 * momentum_t * momentum_t).sqrt());
            let beta = if restart > 0.0 { 0.0 } else { (momentum_t - 1.0) / next_t };
            momentum_t = if restart > 0.0 { 1.0 } else { next_t };
            for i in 0..n {
                let xi = x_new[i];
                v[i] = xi + beta * (xi - x[i]);
                x[i] = xi;
            }
            if residual <= tol {
                self.lipschitz = lip;
                return (residual, it);
            }
            lip = (lip * 0.95).max(self.sub.modulus);
        }
        // refresh cvals at the returned point
        self.grad(&x.clone(), y, rho, &mut g_new);
        self.lipschitz = lip;
        (residual, max_iter)
    }

    fn finish(
        &self,
        x: Vec<f64>,
        y: Vec<f64>,
        residuals: KktResiduals,
        iterations: usize,
        outer_iterations: usize,
        converged: bool,
    ) -> SubproblemSolution {
        let j = self.sub.surrogate_constraints.len();
        let mut lambda = y;
        let nu = lambda.split_off(j);
        SubproblemSolution {
            x,
            lambda,
            nu,
            subgradient: self.subgrad.clone(),
            residuals,
            iterations,
            outer_iterations,
            converged,
        }
    }
}

/// Value of `f̃ + u` at `x`.
pub fn objective_value(sub: &ConvexSubproblem<'_>, x: &[f64]) -> f64 {
    sub.objective.value(x) + sub.regularizer.value(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{L1Norm, NoRegularizer};
    use crate::surrogate::SparseAffine;

    /// `Σ a_i (x_i − b_i)²`
    struct Quad {
        a: Vec<f64>,
        b: Vec<f64>,
    }

    impl SmoothFn for Quad {
        fn value(&self, x: &[f64]) -> f64 {
            x.iter().zip(&self.a).zip(&self.b).map(|((x, a), b)| a * (x - b) * (x - b)).sum()
        }
        fn add_gradient(&self, x: &[f64], scale: f64, out: &mut [f64]) {
            for i in 0..x.len() {
                out[i] += scale * 2.0 * self.a[i] * (x[i] - self.b[i]);
            }
        }
    }

    fn sub<'a>(
        obj: &'a Quad,
        reg: &'a dyn Regularizer,
        g: Vec<&'a dyn SmoothFn>,
        h: Vec<&'a dyn SmoothFn>,
        anchor: &'a [f64],
    ) -> ConvexSubproblem<'a> {
        ConvexSubproblem { objective: obj, regularizer: reg, surrogate_constraints: g, convex_constraints: h, anchor, modulus: 2.0 * obj.a.iter().cloned().fold(f64::INFINITY, f64::min) }
    }

    #[test]
    fn scalar_active_constraint() {
        let obj = Quad { a: vec![1.0], b: vec![2.0] };
        let c = SparseAffine::new(-1.0, &[(0, 1.0)], "x<=1");
        let anchor = [0.0];
        let p = sub(&obj, &NoRegularizer, vec![], vec![&c], &anchor);
        let sol = solve(&p, &SolverOptions::default(), None).unwrap();
        assert!(sol.converged);
        assert!((sol.x[0] - 1.0).abs() < 1e-7, "{:?}", sol.x);
        assert!((sol.nu[0] - 2.0).abs() < 1e-6, "{:?}", sol.nu);
        let r = kkt_residuals(&p, &sol).unwrap();
        assert!(r.max() <= 1e-7, "{r:?}");

        let r = kkt_residuals_at(&p, &[1.1], &[], &[2.0]).unwrap();
        assert!((r.stationarity - 0.2).abs() < 1e-12);
        assert!((r.primal_violation - 0.1).abs() < 1e-12);

        let r = kkt_residuals_at(&p, &[1.0], &[], &[0.0]).unwrap();
        assert_eq!(r.complementarity, 0.0);
        assert!((r.stationarity - 2.0).abs() < 1e-12);
    }

    #[test]
    fn unconstrained_l1_matches_soft_threshold() {
        let obj = Quad { a: vec![0.5, 0.5, 0.5], b: vec![3.0, 0.2, -1.5] };
        let reg = L1Norm { weight: 0.5 };
        let anchor = [0.0; 3];
        let p = sub(&obj, &reg, vec![], vec![], &anchor);
        let sol = solve(&p, &SolverOptions::default(), None).unwrap();
        let expect = [2.5, 0.0, -1.0];
        for (a, b) in sol.x.iter().zip(expect) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(kkt_residuals(&p, &sol).unwrap().max() < 1e-8);
    }

    #[test]
    fn matches_grid_search_in_two_dimensions() {
        let obj = Quad { a: vec![1.0, 3.0], b: vec![1.5, 1.0] };
        let c1 = SparseAffine::new(-1.0, &[(0, 1.0), (1, 1.0)], "sum");
        let c2 = SparseAffine::new(-0.2, &[(0, -1.0), (1, 0.5)], "mix");
        let anchor = [0.0, 0.0];
        let p = sub(&obj, &NoRegularizer, vec![&c1], vec![&c2], &anchor);
        let sol = solve(&p, &SolverOptions::default(), None).unwrap();
        let mut best = (f64::INFINITY, [0.0, 0.0]);
        let n = 1200;
        for i in 0..=n {
            for j in 0..=n {
                let x = [-1.0 + 3.0 * i as f64 / n as f64, -1.0 + 3.0 * j as f64 / n as f64];
                if c1.value(&x) <= 0.0 && c2.value(&x) <= 0.0 {
                    let v = obj.value(&x);
                    if v < best.0 {
                        best = (v, x);
                    }
                }
            }
        }
        assert!(obj.value(&sol.x) <= best.0 + 1e-9);
        assert!(dist(&sol.x, &best.1) < 5e-3);
    }

    #[test]
    fn infeasible_subproblem_is_reported() {
        let obj = Quad { a: vec![1.0], b: vec![0.0] };
        let lo = SparseAffine::new(1.0, &[(0, -1.0)], "x>=1");
        let hi = SparseAffine::new(0.0, &[(0, 1.0)], "x<=0");
        let anchor = [0.5];
        let p = sub(&obj, &NoRegularizer, vec![&lo], vec![&hi], &anchor);
        let opts = SolverOptions { max_outer: 60, max_penalty: 1e8, ..SolverOptions::default() };
        match solve(&p, &opts, None) {
            Err(CostaError::InfeasibleSubproblem(_)) => {}
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn warm_start_is_no_worse() {
        let obj = Quad { a: vec![1.0, 1.0], b: vec![2.0, 2.0] };
        let c = SparseAffine::new(-1.0, &[(0, 1.0), (1, 1.0)], "sum");
        let anchor = [0.0, 0.0];
        let p = sub(&obj, &NoRegularizer, vec![&c], vec![], &anchor);
        let cold = solve(&p, &SolverOptions::default(), None).unwrap();
        let warm = solve_warm(&p, &SolverOptions::default(), Some(&cold.x), Some((&cold.lambda, &cold.nu))).unwrap();
        assert!(warm.converged);
        assert!(warm.iterations <= cold.iterations);
    }
}
