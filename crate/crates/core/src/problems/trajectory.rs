//! Multi-agent energy-optimal trajectory planning in an uncertain current
//! field.
//!
//! Decision vector: the waypoints `x_i(τ)`, `τ = 1..T`, of every agent
//! stacked as `[x_0(1), …, x_0(T), x_1(1), …]` (each a point in the plane);
//! the starts `x_i(0)` are fixed. With `r_i(τ) = x_i(τ+1) − x_i(τ) − ϑ(x_i(τ), ξ)Δt`
//!
//! ```text
//! f(x, ξ) = Σ_i Σ_{τ<T} ‖r_i(τ)‖²
//! obstacle     (r° + r) − ‖x_i(τ) − x°‖ ≤ 0
//! separation   2r − ‖x_i(τ) − x_j(τ)‖ ≤ 0
//! speed cap    ‖x_i(τ+1) − x_i(τ) − ϑ(x_i(τ))Δt‖² − ((v_max − Δϑ^max)Δt)² ≤ 0
//! terminal     x_i(T) = x_i^g   (two affine inequalities per coordinate)
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CostaError, Result};
use crate::problem::{NoRegularizer, NonconvexConstraint, Regularizer, SmoothFn, SmoothnessMeta, StochasticProblem};
use crate::problems::currents::{
    currents, currents_jacobian, drift_deviation_bound, truncated_noise, truncated_variance, HESSIAN_BOUND_PER_OMEGA,
    JACOBIAN_BOUND_PER_OMEGA,
};
use crate::surrogate::{ConstraintSurrogate, SparseAffine, SurrogateKind};

/// Curvature constant (per unit `ω`) used by the speed-cap majorizer; any
/// value above the Hessian bound of the field works.
pub const SPEED_CAP_CURVATURE_PER_OMEGA: f64 = 7.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub starts: Vec<[f64; 2]>,
    pub goals: Vec<[f64; 2]>,
    /// Number of segments `T`; waypoints `x_i(1..=T)` are free.
    pub horizon: usize,
    pub dt: f64,
    pub obstacle: Option<Obstacle>,
    pub agent_radius: f64,
    /// Per-agent speed caps `v_i^max`.
    pub v_max: Vec<f64>,
    /// Current strength `ω`.
    pub omega: f64,
    /// Ensemble noise level `σ`.
    pub sigma: f64,
}

impl Environment {
    pub fn n_agents(&self) -> usize {
        self.starts.len()
    }

    pub fn dim(&self) -> usize {
        2 * self.n_agents() * self.horizon
    }

    /// Offset of `x_i(τ)` for `τ ≥ 1`.
    pub fn index(&self, agent: usize, tau: usize) -> usize {
        debug_assert!(tau >= 1 && tau <= self.horizon);
        2 * (agent * self.horizon + tau - 1)
    }

    /// `x_i(τ)`, including the fixed start at `τ = 0`.
    pub fn point(&self, x: &[f64], agent: usize, tau: usize) -> [f64; 2] {
        if tau == 0 {
            self.starts[agent]
        } else {
            let k = self.index(agent, tau);
            [x[k], x[k + 1]]
        }
    }

    /// `Δϑ^max`
    pub fn drift_deviation(&self) -> f64 {
        drift_deviation_bound(self.omega, self.sigma)
    }

    /// `(v_i^max − Δϑ^max) Δt`
    pub fn speed_cap(&self, agent: usize) -> f64 {
        (self.v_max[agent] - self.drift_deviation()) * self.dt
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CostaError::InvalidConfig(m));
        let n = self.n_agents();
        if n == 0 || self.horizon == 0 {
            return bad("need at least one agent and one segment".into());
        }
        if self.goals.len() != n || self.v_max.len() != n {
            return bad(format!("starts, goals and v_max must all have {n} entries"));
        }
        if !(self.dt > 0.0) || !(self.agent_radius > 0.0) || !(self.sigma >= 0.0) || !self.omega.is_finite() {
            return bad("need dt > 0, agent radius > 0, sigma >= 0".into());
        }
        for (i, &v) in self.v_max.iter().enumerate() {
            if !(v > self.drift_deviation()) {
                return bad(format!(
                    "agent {i}: v_max {v} must exceed the drift deviation bound {}",
                    self.drift_deviation()
                ));
            }
        }
        if let Some(o) = self.obstacle {
            if !(o.radius > 0.0) {
                return bad("obstacle radius must be > 0".into());
            }
            let clear = o.radius + self.agent_radius;
            for p in self.starts.iter().chain(&self.goals) {
                if dist2(*p, o.center) <= clear {
                    return bad(format!("start/goal {p:?} overlaps the obstacle"));
                }
            }
        }
        Ok(())
    }
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Waypoints evenly spaced on the segment from each start to its goal.
pub fn straight_line(env: &Environment) -> Vec<f64> {
    let mut x = vec![0.0; env.dim()];
    for i in 0..env.n_agents() {
        let (s, g) = (env.starts[i], env.goals[i]);
        for tau in 1..=env.horizon {
            let f = tau as f64 / env.horizon as f64;
            let k = env.index(i, tau);
            x[k] = s[0] + f * (g[0] - s[0]);
            x[k + 1] = s[1] + f * (g[1] - s[1]);
        }
    }
    x
}

/// `g = clearance − ‖p − c‖`
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleConstraint {
    pub idx: usize,
    pub center: [f64; 2],
    pub clearance: f64,
}

impl SmoothFn for ObstacleConstraint {
    fn value(&self, x: &[f64]) -> f64 {
        self.clearance - dist2([x[self.idx], x[self.idx + 1]], self.center)
    }

    fn add_gradient(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        let d = [x[self.idx] - self.center[0], x[self.idx + 1] - self.center[1]];
        let n = (d[0] * d[0] + d[1] * d[1]).sqrt();
        if n > 0.0 {
            out[self.idx] -= scale * d[0] / n;
            out[self.idx + 1] -= scale * d[1] / n;
        }
    }

    fn label(&self) -> String {
        format!("obstacle@{}", self.idx / 2)
    }
}

impl NonconvexConstraint for ObstacleConstraint {
    fn surrogate(&self, anchor: &[f64]) -> Result<ConstraintSurrogate> {
        let d = [anchor[self.idx] - self.center[0], anchor[self.idx + 1] - self.center[1]];
        let n = (d[0] * d[0] + d[1] * d[1]).sqrt();
        if n == 0.0 {
            return Err(CostaError::SurrogateUndefined(format!(
                "{}: anchor coincides with the obstacle center",
                self.label()
            )));
        }
        let grad = [-d[0] / n, -d[1] / n];
        let aff = SparseAffine::tangent(self.value(anchor), &[self.idx, self.idx + 1], &grad, anchor, self.label() + "~");
        Ok(ConstraintSurrogate::linear(anchor, aff))
    }
}

/// `g = min_dist − ‖p_i − p_j‖`
#[derive(Debug, Clone, PartialEq)]
pub struct SeparationConstraint {
    pub idx_a: usize,
    pub idx_b: usize,
    pub min_dist: f64,
}

impl SeparationConstraint {
    fn diff(&self, x: &[f64]) -> [f64; 2] {
        [x[self.idx_a] - x[self.idx_b], x[self.idx_a + 1] - x[self.idx_b + 1]]
    }
}

impl SmoothFn for SeparationConstraint {
    fn value(&self, x: &[f64]) -> f64 {
        let d = self.diff(x);
        self.min_dist - (d[0] * d[0] + d[1] * d[1]).sqrt()
    }

    fn add_gradient(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        let d = self.diff(x);
        let n = (d[0] * d[0] + d[1] * d[1]).sqrt();
        if n > 0.0 {
            for k in 0..2 {
                out[self.idx_a + k] -= scale * d[k] / n;
                out[self.idx_b + k] += scale * d[k] / n;
            }
        }
    }

    fn label(&self) -> String {
        format!("separation@{}-{}", self.idx_a / 2, self.idx_b / 2)
    }
}

impl NonconvexConstraint for SeparationConstraint {
    fn surrogate(&self, anchor: &[f64]) -> Result<ConstraintSurrogate> {
        let d = self.diff(anchor);
        let n = (d[0] * d[0] + d[1] * d[1]).sqrt();
        if n == 0.0 {
            return Err(CostaError::SurrogateUndefined(format!("{}: agents coincide at the anchor", self.label())));
        }
        let (u0, u1) = (d[0] / n, d[1] / n);
        let idx = [self.idx_a, self.idx_a + 1, self.idx_b, self.idx_b + 1];
        let aff = SparseAffine::tangent(self.value(anchor), &idx, &[-u0, -u1, u0, u1], anchor, self.label() + "~");
        Ok(ConstraintSurrogate::linear(anchor, aff))
    }
}

/// `g = ‖x(τ+1) − x(τ) − ϑ(x(τ))Δt‖² − cap²`; `prev = None` means `x(τ)` is
/// the fixed start.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedCap {
    pub next: usize,
    pub prev: Option<usize>,
    pub start: [f64; 2],
    pub omega: f64,
    pub dt: f64,
    pub cap: f64,
}

impl SpeedCap {
    fn prev_point(&self, x: &[f64]) -> [f64; 2] {
        match self.prev {
            Some(k) => [x[k], x[k + 1]],
            None => self.start,
        }
    }

    fn residual(&self, x: &[f64]) -> [f64; 2] {
        let p = self.prev_point(x);
        let v = currents(p, self.omega);
        [x[self.next] - p[0] - v[0] * self.dt, x[self.next + 1] - p[1] - v[1] * self.dt]
    }
}

impl SmoothFn for SpeedCap {
    fn value(&self, x: &[f64]) -> f64 {
        let r = self.residual(x);
        r[0] * r[0] + r[1] * r[1] - self.cap * self.cap
    }

    fn add_gradient(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        let r = self.residual(x);
        out[self.next] += scale * 2.0 * r[0];
        out[self.next + 1] += scale * 2.0 * r[1];
        if let Some(k) = self.prev {
            let j = currents_jacobian(self.prev_point(x), self.omega);
            for l in 0..2 {
                let jt_r = j[0][l] * r[0] + j[1][l] * r[1];
                out[k + l] -= scale * 2.0 * (r[l] + self.dt * jt_r);
            }
        }
    }

    fn label(&self) -> String {
        format!("speed@{}", self.next / 2)
    }
}

impl NonconvexConstraint for SpeedCap {
    fn surrogate(&self, anchor: &[f64]) -> Result<ConstraintSurrogate> {
        let r0 = self.residual(anchor);
        let (lin_prev, curvature) = match self.prev {
            Some(_) => {
                let j = currents_jacobian(self.prev_point(anchor), self.omega);
                let m = [
                    [-(1.0 + self.dt * j[0][0]), -self.dt * j[0][1]],
                    [-self.dt * j[1][0], -(1.0 + self.dt * j[1][1])],
                ];
                (m, 0.5 * SPEED_CAP_CURVATURE_PER_OMEGA * self.omega.abs() * self.dt)
            }
            None => ([[0.0; 2]; 2], 0.0),
        };
        let func = SpeedCapSurrogate {
            next: self.next,
            prev: self.prev,
            anchor_next: [anchor[self.next], anchor[self.next + 1]],
            anchor_prev: self.prev_point(anchor),
            r0,
            lin_prev,
            curvature,
            cap: self.cap,
            name: self.label() + "~",
        };
        Ok(ConstraintSurrogate::new(anchor, SurrogateKind::ConvexComposite, Box::new(func)))
    }
}

/// `(‖r_lin(x)‖ + κ‖x(τ) − a(τ)‖²)² − cap²` where `r_lin` is the first-order
/// expansion of the residual at the anchor `a` and `κ = MΔt/2` bounds the
/// expansion error of the current field.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedCapSurrogate {
    next: usize,
    prev: Option<usize>,
    anchor_next: [f64; 2],
    anchor_prev: [f64; 2],
    r0: [f64; 2],
    lin_prev: [[f64; 2]; 2],
    curvature: f64,
    cap: f64,
    name: String,
}

impl SpeedCapSurrogate {
    /// `(r_lin, x(τ) − a(τ))`
    fn parts(&self, x: &[f64]) -> ([f64; 2], [f64; 2]) {
        let dn = [x[self.next] - self.anchor_next[0], x[self.next + 1] - self.anchor_next[1]];
        let dp = match self.prev {
            Some(k) => [x[k] - self.anchor_prev[0], x[k + 1] - self.anchor_prev[1]],
            None => [0.0, 0.0],
        };
        let m = &self.lin_prev;
        let r = [
            self.r0[0] + dn[0] + m[0][0] * dp[0] + m[0][1] * dp[1],
            self.r0[1] + dn[1] + m[1][0] * dp[0] + m[1][1] * dp[1],
        ];
        (r, dp)
    }
}

impl SmoothFn for SpeedCapSurrogate {
    fn value(&self, x: &[f64]) -> f64 {
        let (r, dp) = self.parts(x);
        let q = self.curvature * (dp[0] * dp[0] + dp[1] * dp[1]);
        let r2 = r[0] * r[0] + r[1] * r[1];
        if q == 0.0 {
            r2 - self.cap * self.cap
        } else {
            let s = r2.sqrt() + q;
            s * s - self.cap * self.cap
        }
    }

    fn add_gradient(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        let (r, dp) = self.parts(x);
        let q = self.curvature * (dp[0] * dp[0] + dp[1] * dp[1]);
        let n = (r[0] * r[0] + r[1] * r[1]).sqrt();
        // ∇(‖r‖ + q)² = 2(‖r‖ + q)(∇‖r‖ + ∇q), with 2(‖r‖+q)·r/‖r‖ → 2r when q = 0
        let s = 2.0 * (n + q);
        let w = if n > 0.0 { [s * r[0] / n, s * r[1] / n] } else { [0.0, 0.0] };
        out[self.next] += scale * w[0];
        out[self.next + 1] += scale * w[1];
        if let Some(k) = self.prev {
            let m = &self.lin_prev;
            for l in 0..2 {
                out[k + l] += scale * (m[0][l] * w[0] + m[1][l] * w[1] + s * 2.0 * self.curvature * dp[l]);
            }
        }
    }

    fn label(&self) -> String {
        self.name.clone()
    }
}

pub struct TrajectoryProblem {
    pub env: Environment,
    nonconvex: Vec<Box<dyn NonconvexConstraint>>,
    convex: Vec<Box<dyn SmoothFn>>,
    regularizer: NoRegularizer,
    noise_variance: f64,
    meta: SmoothnessMeta,
}

pub fn build_trajectory_problem(env: Environment) -> Result<TrajectoryProblem> {
    env.validate()?;
    let mut nonconvex: Vec<Box<dyn NonconvexConstraint>> = Vec::new();
    let t_max = env.horizon;
    for i in 0..env.n_agents() {
        for tau in 1..=t_max {
            if let Some(o) = env.obstacle {
                nonconvex.push(Box::new(ObstacleConstraint {
                    idx: env.index(i, tau),
                    center: o.center,
                    clearance: o.radius + env.agent_radius,
                }));
            }
        }
    }
    for i in 0..env.n_agents() {
        for j in i + 1..env.n_agents() {
            for tau in 1..=t_max {
                nonconvex.push(Box::new(SeparationConstraint {
                    idx_a: env.index(i, tau),
                    idx_b: env.index(j, tau),
                    min_dist: 2.0 * env.agent_radius,
                }));
            }
        }
    }
    for i in 0..env.n_agents() {
        for tau in 0..t_max {
            nonconvex.push(Box::new(SpeedCap {
                next: env.index(i, tau + 1),
                prev: if tau == 0 { None } else { Some(env.index(i, tau)) },
                start: env.starts[i],
                omega: env.omega,
                dt: env.dt,
                cap: env.speed_cap(i),
            }));
        }
    }
    let mut convex: Vec<Box<dyn SmoothFn>> = Vec::new();
    for i in 0..env.n_agents() {
        let k = env.index(i, t_max);
        for c in 0..2 {
            let g = env.goals[i][c];
            convex.push(Box::new(SparseAffine::new(-g, &[(k + c, 1.0)], format!("goal{i}.{c}+"))));
            convex.push(Box::new(SparseAffine::new(g, &[(k + c, -1.0)], format!("goal{i}.{c}-"))));
        }
    }
    // rough smoothness estimate over the feasible set, for diagnostics
    let jac = JACOBIAN_BOUND_PER_OMEGA * env.omega.abs() * env.dt;
    let objective_l = 2.0 * (2.0 + jac).powi(2);
    let speed_l = 2.0 * (1.0 + jac).powi(2)
        + 2.0 * env.v_max.iter().cloned().fold(0.0, f64::max) * env.dt * HESSIAN_BOUND_PER_OMEGA * env.omega.abs() * env.dt;
    let norm_l = env.obstacle.map_or(0.0, |o| 1.0 / (o.radius + env.agent_radius)).max(1.0 / env.agent_radius);
    let meta = SmoothnessMeta {
        smoothness: Some(objective_l.max(speed_l).max(norm_l)),
        noise_std: None,
        ..Default::default()
    };
    Ok(TrajectoryProblem {
        noise_variance: truncated_variance(env.sigma),
        env,
        nonconvex,
        convex,
        regularizer: NoRegularizer,
        meta,
    })
}

impl TrajectoryProblem {
    pub fn straight_line(&self) -> Vec<f64> {
        straight_line(&self.env)
    }

    /// Largest terminal-condition error `max_i ‖x_i(T) − x_i^g‖_∞`.
    pub fn goal_error(&self, x: &[f64]) -> f64 {
        (0..self.env.n_agents())
            .map(|i| {
                let p = self.env.point(x, i, self.env.horizon);
                let g = self.env.goals[i];
                (p[0] - g[0]).abs().max((p[1] - g[1]).abs())
            })
            .fold(0.0, f64::max)
    }

    /// Energy of `x` under the noise draw `e`.
    fn energy(&self, x: &[f64], e: [f64; 2]) -> f64 {
        let env = &self.env;
        let mut total = 0.0;
        for i in 0..env.n_agents() {
            for tau in 0..env.horizon {
                let p = env.point(x, i, tau);
                let q = env.point(x, i, tau + 1);
                let v = currents(p, env.omega);
                for k in 0..2 {
                    let r = q[k] - p[k] - v[k] * (1.0 + e[k]) * env.dt;
                    total += r * r;
                }
            }
        }
        total
    }
}

impl StochasticProblem for TrajectoryProblem {
    /// The ensemble member's multiplicative noise `e`.
    type Sample = [f64; 2];

    fn dim(&self) -> usize {
        self.env.dim()
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        truncated_noise(self.env.sigma, rng)
    }

    fn value(&self, x: &[f64], e: &[f64; 2]) -> f64 {
        self.energy(x, *e)
    }

    fn gradient(&self, x: &[f64], e: &[f64; 2], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let env = &self.env;
        for i in 0..env.n_agents() {
            for tau in 0..env.horizon {
                let p = env.point(x, i, tau);
                let q = env.point(x, i, tau + 1);
                let v = currents(p, env.omega);
                let s = [(1.0 + e[0]) * env.dt, (1.0 + e[1]) * env.dt];
                let r = [q[0] - p[0] - v[0] * s[0], q[1] - p[1] - v[1] * s[1]];
                let kq = env.index(i, tau + 1);
                out[kq] += 2.0 * r[0];
                out[kq + 1] += 2.0 * r[1];
                if tau > 0 {
                    let kp = env.index(i, tau);
                    let j = currents_jacobian(p, env.omega);
                    for l in 0..2 {
                        let jt = j[0][l] * s[0] * r[0] + j[1][l] * s[1] * r[1];
                        out[kp + l] -= 2.0 * (r[l] + jt);
                    }
                }
            }
        }
    }

    /// `Σ ‖d − ϑΔt‖² + Var(e) Δt² Σ‖ϑ‖²` per segment.
    fn expected_value(&self, x: &[f64]) -> Option<f64> {
        let env = &self.env;
        let dt2v = env.dt * env.dt * self.noise_variance;
        let mut total = self.energy(x, [0.0, 0.0]);
        for i in 0..env.n_agents() {
            for tau in 0..env.horizon {
                let v = currents(env.point(x, i, tau), env.omega);
                total += dt2v * (v[0] * v[0] + v[1] * v[1]);
            }
        }
        Some(total)
    }

    fn expected_gradient(&self, x: &[f64], out: &mut [f64]) -> bool {
        self.gradient(x, &[0.0, 0.0], out);
        let env = &self.env;
        let dt2v = env.dt * env.dt * self.noise_variance;
        if dt2v == 0.0 {
            return true;
        }
        for i in 0..env.n_agents() {
            for tau in 1..env.horizon {
                let p = env.point(x, i, tau);
                let v = currents(p, env.omega);
                let j = currents_jacobian(p, env.omega);
                let kp = env.index(i, tau);
                for l in 0..2 {
                    out[kp + l] += 2.0 * dt2v * (j[0][l] * v[0] + j[1][l] * v[1]);
                }
            }
        }
        true
    }

    fn regularizer(&self) -> &dyn Regularizer {
        &self.regularizer
    }

    fn convex_constraints(&self) -> &[Box<dyn SmoothFn>] {
        &self.convex
    }

    fn nonconvex_constraints(&self) -> &[Box<dyn NonconvexConstraint>] {
        &self.nonconvex
    }

    fn meta(&self) -> SmoothnessMeta {
        self.meta
    }
}

/// Monte-Carlo energy of the straight-line trajectory over `m` ensemble draws.
pub fn straight_line_energy<R: Rng + ?Sized>(env: &Environment, m: usize, rng: &mut R) -> Result<f64> {
    let p = build_trajectory_problem(env.clone())?;
    let x = straight_line(env);
    crate::problem::estimate_expected_objective(&p, &x, m, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::{fd_gradient, validate_majorization, validate_tangent_match};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn env(obstacle: bool, agents: usize, omega: f64, sigma: f64) -> Environment {
        let starts = vec![[-2.0, 0.5], [-2.0, -0.6]];
        let goals = vec![[2.0, 0.4], [2.0, -0.5]];
        Environment {
            starts: starts[..agents].to_vec(),
            goals: goals[..agents].to_vec(),
            horizon: 8,
            dt: 1.0,
            obstacle: obstacle.then_some(Obstacle { center: [0.0, 2.0], radius: 0.7 }),
            agent_radius: 0.1,
            v_max: vec![1.0; agents],
            omega,
            sigma,
        }
    }

    #[test]
    fn zero_current_straight_line_energy() {
        let e = env(false, 1, 0.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let energy = straight_line_energy(&e, 5, &mut rng).unwrap();
        let d2 = 4.0f64 * 4.0 + 0.1 * 0.1;
        assert!((energy - d2 / 8.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_energy_is_sample_independent() {
        let e = env(true, 2, 0.8, 0.0);
        let a = straight_line_energy(&e, 1, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = straight_line_energy(&e, 50, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let p = build_trajectory_problem(env(true, 2, 0.8, 0.2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let base = p.straight_line();
        for _ in 0..10 {
            let x: Vec<f64> = base.iter().map(|v| v + rng.random_range(-0.3..0.3)).collect();
            let e = p.draw(&mut rng);
            let mut g = vec![0.0; p.dim()];
            p.gradient(&x, &e, &mut g);
            for i in 0..p.dim() {
                let h = 1e-5;
                let mut a = x.clone();
                let mut b = x.clone();
                a[i] += h;
                b[i] -= h;
                let fd = (p.value(&a, &e) - p.value(&b, &e)) / (2.0 * h);
                assert!((fd - g[i]).abs() < 1e-5, "{i}: {fd} vs {}", g[i]);
            }
            for c in p.nonconvex_constraints() {
                let fd = fd_gradient(c.as_ref(), &x, 1e-4);
                let an = c.gradient(&x);
                for i in 0..p.dim() {
                    assert!((fd[i] - an[i]).abs() < 1e-6, "{}", c.label());
                }
            }
        }
    }

    #[test]
    fn expected_energy_matches_monte_carlo() {
        let p = build_trajectory_problem(env(false, 1, 0.8, 0.3)).unwrap();
        let x: Vec<f64> = p.straight_line().iter().map(|v| v * 0.9).collect();
        let exact = p.expected_value(&x).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = 200_000;
        let (mut s, mut s2) = (0.0, 0.0);
        let mut g_mc = vec![0.0; p.dim()];
        let mut g = vec![0.0; p.dim()];
        for _ in 0..m {
            let e = p.draw(&mut rng);
            let v = p.value(&x, &e);
            s += v;
            s2 += v * v;
            p.gradient(&x, &e, &mut g);
            for i in 0..p.dim() {
                g_mc[i] += g[i] / m as f64;
            }
        }
        let mean = s / m as f64;
        let se = ((s2 / m as f64 - mean * mean) / m as f64).sqrt();
        assert!((mean - exact).abs() < 4.0 * se, "{mean} vs {exact} (se {se})");
        let mut ge = vec![0.0; p.dim()];
        assert!(p.expected_gradient(&x, &mut ge));
        for i in 0..p.dim() {
            assert!((ge[i] - g_mc[i]).abs() < 5e-3, "{i}: {} vs {}", ge[i], g_mc[i]);
        }
    }

    #[test]
    fn obstacle_surrogate_hand_values() {
        let c = ObstacleConstraint { idx: 0, center: [0.0, 0.0], clearance: 1.0 };
        let s = c.surrogate(&[2.0, 0.0]).unwrap();
        assert_eq!(c.value(&[0.0, 2.0]), -1.0);
        assert_eq!(s.value(&[0.0, 2.0]), 1.0);
        assert!(matches!(c.surrogate(&[0.0, 0.0]), Err(CostaError::SurrogateUndefined(_))));
    }

    #[test]
    fn all_surrogates_majorize_and_match_tangents() {
        let p = build_trajectory_problem(env(true, 2, 0.8, 0.1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let base = p.straight_line();
        for _ in 0..3 {
            let anchor: Vec<f64> = base.iter().map(|v| v + rng.random_range(-0.5..0.5)).collect();
            for c in p.nonconvex_constraints() {
                let s = c.surrogate(&anchor).unwrap();
                let rep = validate_majorization(
                    &s,
                    c.as_ref(),
                    || anchor.iter().map(|v| v + rng.random_range(-1.5..1.5)).collect(),
                    300,
                )
                .unwrap();
                assert!(rep.passed, "{rep:?}");
                let t = validate_tangent_match(&s, &c.gradient(&anchor), &anchor, 1e-3).unwrap();
                assert!(t.passed, "{} {t:?}", c.label());
            }
        }
    }
}
