//! Adaptive step-size / momentum schedules and the STORM tracking update.
//!
//! ```text
//! η_t     = k̄ / (w + Σ_{i≤t} G_i²)^{1/3}        η_0 = k̄ / w^{1/3}
//! β_{t+1} = c η_t²                               β_1 = c k̄² / w^{2/3}
//! z_{t+1} = ∇f(x_t, ξ_t) + (1 − β_t)(z_t − ∇f(x_{t−1}, ξ_t))
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, CostaError, Result};
use crate::problem::SmoothnessMeta;

/// Schedule constants `(k̄, w, c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub k_bar: f64,
    pub w: f64,
    pub c: f64,
}

impl ScheduleParams {
    pub fn new(k_bar: f64, w: f64, c: f64) -> Result<Self> {
        let p = Self { k_bar, w, c };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k_bar > 0.0 && self.k_bar.is_finite()) {
            return Err(CostaError::InvalidConfig(format!("k_bar must be > 0, got {}", self.k_bar)));
        }
        if !(self.w > 0.0 && self.w.is_finite()) {
            return Err(CostaError::InvalidConfig(format!("w must be > 0, got {}", self.w)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(CostaError::InvalidConfig(format!("c must be > 0, got {}", self.c)));
        }
        Ok(())
    }

    /// `η_0 = k̄ / w^{1/3}`.
    pub fn initial_step(&self) -> f64 {
        self.k_bar / self.w.cbrt()
    }

    /// `β_1 = c k̄² / w^{2/3}`.
    pub fn initial_momentum(&self) -> f64 {
        self.c * self.k_bar * self.k_bar / (self.w.cbrt() * self.w.cbrt())
    }
}

/// Running schedule bookkeeping for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleState {
    pub params: ScheduleParams,
    /// `Σ_{i=1..t} G_i²`
    pub sum_g2: f64,
    pub t: usize,
}

impl ScheduleState {
    pub fn new(params: ScheduleParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params, sum_g2: 0.0, t: 0 })
    }

    /// `η_t = k̄ / (w + Σ G_i²)^{1/3}`.
    pub fn step_size(&self) -> f64 {
        self.params.k_bar / (self.params.w + self.sum_g2).cbrt()
    }

    /// `β_{t+1} = c η_t²`.
    pub fn momentum(&self, eta: f64) -> f64 {
        self.params.c * eta * eta
    }

    /// Folds `G_t = ‖∇f(x_t, ξ_t)‖` into the running sum.
    pub fn accumulate(&mut self, g: f64) -> Result<()> {
        if !(g >= 0.0) || !g.is_finite() {
            return Err(CostaError::InvalidInput(format!("gradient norm must be finite and >= 0, got {g}")));
        }
        self.sum_g2 += g * g;
        self.t += 1;
        Ok(())
    }
}

/// Returns `z_{t+1} = ∇f(x_t, ξ_t) + (1 − β)(z_t − ∇f(x_{t−1}, ξ_t))`.
///
/// Both gradients must be evaluated with the same sample `ξ_t`.
pub fn storm_update(
    z: &[f64],
    grad_now: &[f64],
    grad_prev_same_sample: &[f64],
    beta: f64,
) -> Result<Vec<f64>> {
    check_dim(z.len(), grad_now.len())?;
    check_dim(z.len(), grad_prev_same_sample.len())?;
    if !(0.0..=1.0).contains(&beta) {
        return Err(CostaError::InvalidInput(format!("beta must lie in [0, 1], got {beta}")));
    }
    let keep = 1.0 - beta;
    Ok(grad_now
        .iter()
        .zip(z)
        .zip(grad_prev_same_sample)
        .map(|((&g, &zi), &gp)| g + keep * (zi - gp))
        .collect())
}

/// Classical exponential-averaging tracking `z_{t+1} = (1 − ρ) z_t + ρ ∇f(x_t, ξ_t)`.
pub fn averaging_update(z: &[f64], grad_now: &[f64], rho: f64) -> Result<Vec<f64>> {
    check_dim(z.len(), grad_now.len())?;
    if !(0.0..=1.0).contains(&rho) {
        return Err(CostaError::InvalidInput(format!("rho must lie in [0, 1], got {rho}")));
    }
    Ok(z.iter().zip(grad_now).map(|(&zi, &g)| (1.0 - rho) * zi + rho * g).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamCheck {
    pub name: String,
    pub status: CheckStatus,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamReport {
    pub checks: Vec<ParamCheck>,
}

impl ParamReport {
    pub fn get(&self, name: &str) -> Option<&ParamCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// No check failed. Skipped checks do not count as failures.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }
}

/// Checks the convergence-rate hypotheses on `(k̄, w, c, μ)`.
///
/// The rate theorem asks for `c ≥ 4L² + G²/(6Lk̄³)` while the tracking-error
/// corollary uses `c > 4L² + G²/(6k̄³)`; the larger of the two thresholds is
/// enforced, strictly, and both values are reported.
pub fn validate_params(meta: &SmoothnessMeta, params: &ScheduleParams, mu: f64) -> ParamReport {
    let ScheduleParams { k_bar, w, c } = *params;
    let mut checks = Vec::new();
    let mut push = |name: &str, status: CheckStatus, detail: String| {
        checks.push(ParamCheck { name: name.to_string(), status, detail })
    };
    let verdict = |ok: bool| if ok { CheckStatus::Pass } else { CheckStatus::Fail };

    let cap = w.cbrt();
    push(
        "k_bar_range",
        verdict(k_bar > 0.0 && k_bar <= cap),
        format!("0 < k_bar = {k_bar} <= w^(1/3) = {cap}"),
    );

    let c_max = (w.cbrt() * w.cbrt()) / (4.0 * k_bar * k_bar);
    push("c_upper", verdict(c <= c_max), format!("c = {c} <= w^(2/3)/(4 k_bar^2) = {c_max}"));

    let beta1 = params.initial_momentum();
    push("beta1_quarter", verdict(beta1 <= 0.25), format!("beta_1 = {beta1} <= 1/4"));

    match (meta.smoothness, meta.lipschitz) {
        (Some(l), Some(g)) => {
            let thm = 4.0 * l * l + g * g / (6.0 * l * k_bar.powi(3));
            let cor = 4.0 * l * l + g * g / (6.0 * k_bar.powi(3));
            let thr = thm.max(cor);
            push(
                "c_lower",
                verdict(c > thr),
                format!(
                    "c = {c} > max(theorem threshold {thm}, corollary threshold {cor}); \
                     the two stated thresholds differ by the factor L in G^2/(6 L k_bar^3)"
                ),
            );
        }
        _ => push("c_lower", CheckStatus::Skipped, "metadata required: L and G".into()),
    }

    match meta.smoothness {
        Some(l) => {
            let denom = 4.0 * mu - 3.0;
            if denom <= 0.0 {
                push(
                    "w_modulus",
                    CheckStatus::Fail,
                    format!("4 mu - 3 = {denom} <= 0: hypothesis infeasible for mu = {mu}"),
                );
            } else {
                let need = (2.0 * l * k_bar / denom).powi(3);
                push("w_modulus", verdict(w >= need), format!("w = {w} >= (2 L k_bar/(4 mu - 3))^3 = {need}"));
            }
        }
        None => push("w_modulus", CheckStatus::Skipped, "metadata required: L".into()),
    }

    match meta.lipschitz {
        Some(g) => push("w_lipschitz", verdict(w >= g * g), format!("w = {w} >= G^2 = {}", g * g)),
        None => push("w_lipschitz", CheckStatus::Skipped, "metadata required: G".into()),
    }

    ParamReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn state(k: f64, w: f64, c: f64, sum: f64) -> ScheduleState {
        let mut s = ScheduleState::new(ScheduleParams::new(k, w, c).unwrap()).unwrap();
        s.sum_g2 = sum;
        s
    }

    #[test]
    fn step_size_examples() {
        assert!((state(1.0, 8.0, 1.0, 0.0).step_size() - 0.5).abs() < 1e-15);
        assert!((state(1.0, 8.0, 1.0, 19.0).step_size() - 1.0 / 3.0).abs() < 1e-15);
        // 0.0051 / 9000^(1/3), 9000^(1/3) = 20.8008...
        let eta = state(0.0051, 9000.0, 6e5, 0.0).step_size();
        assert!((eta - 2.4518e-4).abs() < 1e-7, "{eta}");
    }

    #[test]
    fn step_size_rejects_bad_config() {
        assert!(ScheduleParams::new(0.0, 8.0, 1.0).is_err());
        assert!(ScheduleParams::new(1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn momentum_examples() {
        let s = state(1.0, 8.0, 1.0, 0.0);
        assert_eq!(s.momentum(0.5), 0.25);
        assert!((s.params.initial_momentum() - 0.25).abs() < 1e-15);
        assert!((s.momentum(s.params.initial_step()) - s.params.initial_momentum()).abs() < 1e-15);
        let b = state(0.0051, 9000.0, 6e5, 0.0).momentum(2.452e-4);
        assert!((b - 0.036075).abs() < 1e-4, "{b}");
    }

    #[test]
    fn accumulate_examples() {
        let mut s = state(1.0, 8.0, 1.0, 19.0);
        s.accumulate(3.0).unwrap();
        assert_eq!(s.sum_g2, 28.0);
        assert_eq!(s.t, 1);
        s.accumulate(0.0).unwrap();
        assert_eq!(s.sum_g2, 28.0);
        assert_eq!(s.t, 2);
        assert!(s.accumulate(-1.0).is_err());

        let mut s = state(1.0, 8.0, 1.0, 0.0);
        for _ in 0..50 {
            s.accumulate(1.5).unwrap();
        }
        assert!((s.sum_g2 - 50.0 * 2.25).abs() < 1e-12);
    }

    #[test]
    fn storm_examples() {
        let z = [0.3, -1.0];
        let g = [2.0, 5.0];
        assert_eq!(storm_update(&z, &g, &[7.0, 7.0], 1.0).unwrap(), g.to_vec());
        assert_eq!(storm_update(&[1.0, 1.0], &[2.0, 0.0], &[1.0, 0.0], 0.0).unwrap(), vec![2.0, 1.0]);
        // noise-free fixed point: z_t = ∇f(x_{t−1}) gives ∇f(x_t) exactly
        assert_eq!(storm_update(&[0.7, 0.1], &g, &[0.7, 0.1], 0.3).unwrap(), g.to_vec());
        assert!(storm_update(&[1.0], &g, &g, 0.5).is_err());
        assert!(storm_update(&z, &g, &g, 1.5).is_err());
    }

    #[test]
    fn validate_params_examples() {
        let meta = SmoothnessMeta::default();
        let r = validate_params(&meta, &ScheduleParams::new(1.0, 8.0, 1.0).unwrap(), 1.0);
        assert_eq!(r.get("k_bar_range").unwrap().status, CheckStatus::Pass);
        assert_eq!(r.get("c_lower").unwrap().status, CheckStatus::Skipped);

        let gisette = ScheduleParams::new(0.0051, 9000.0, 6e5).unwrap();
        let r = validate_params(&meta, &gisette, 0.05);
        assert_eq!(r.get("c_upper").unwrap().status, CheckStatus::Pass);
        let c_max = 9000f64.powf(2.0 / 3.0) / (4.0 * 0.0051f64.powi(2));
        assert!((c_max - 4.159e6).abs() < 1e3, "{c_max}");

        let meta = SmoothnessMeta { smoothness: Some(1.0), ..Default::default() };
        let r = validate_params(&meta, &ScheduleParams::new(1.0, 8.0, 1.0).unwrap(), 0.5);
        let w = r.get("w_modulus").unwrap();
        assert_eq!(w.status, CheckStatus::Fail);
        assert!(w.detail.contains("infeasible"));
    }

    #[test]
    fn validate_params_uses_stricter_threshold() {
        // L = 0.5 makes G²/(6 k̄³) the larger term.
        let meta = SmoothnessMeta { smoothness: Some(0.5), lipschitz: Some(1.0), ..Default::default() };
        let p = ScheduleParams::new(1.0, 8.0, 1.1).unwrap();
        // theorem: 1 + 1/3 = 1.333; corollary: 1 + 1/6 = 1.1667
        let r = validate_params(&meta, &p, 2.0);
        assert_eq!(r.get("c_lower").unwrap().status, CheckStatus::Fail);
        let p = ScheduleParams::new(1.0, 8.0, 1.34).unwrap();
        assert_eq!(validate_params(&meta, &p, 2.0).get("c_lower").unwrap().status, CheckStatus::Pass);
    }

    proptest! {
        #[test]
        fn eta_nonincreasing_and_beta_exact(gs in proptest::collection::vec(0.0f64..50.0, 1..60)) {
            let mut s = state(0.7, 5.0, 3.0, 0.0);
            let mut prev_eta = s.params.initial_step();
            let mut prev_sum = 0.0;
            for g in gs {
                s.accumulate(g).unwrap();
                let eta = s.step_size();
                prop_assert!(eta > 0.0);
                prop_assert!(eta <= prev_eta);
                prop_assert!(s.sum_g2 >= prev_sum);
                prop_assert_eq!(s.momentum(eta), 3.0 * eta * eta);
                prev_eta = eta;
                prev_sum = s.sum_g2;
            }
        }

        #[test]
        fn storm_beta_zero_is_sarah(
            z in proptest::collection::vec(-5.0f64..5.0, 3),
            a in proptest::collection::vec(-5.0f64..5.0, 3),
            b in proptest::collection::vec(-5.0f64..5.0, 3),
        ) {
            let out = storm_update(&z, &a, &b, 0.0).unwrap();
            for i in 0..3 {
                prop_assert!((out[i] - (z[i] + a[i] - b[i])).abs() < 1e-12);
            }
        }
    }
}
