//! Minimax concave penalty as a sparsity constraint.
//!
//! `mcp(x) = λ‖x‖₁ − Σ_k h(x_k)` with the Huber-type concave part
//!
//! ```text
//! h(x) = x² / 2θ              |x| ≤ θλ
//!        λ|x| − θλ² / 2       otherwise
//! ```
//!
//! `h` is convex and C¹, so its tangent line is a global minorant and
//! `λ‖x‖₁ − (tangent of h)` majorizes the penalty. The constraint used in
//! optimization smooths only the `ℓ₁` part, `|x| ≈ √(x² + ϱ) − √ϱ`, which
//! keeps it differentiable while the majorizer stays exact.

use serde::{Deserialize, Serialize};

use crate::error::{CostaError, Result};
use crate::problem::{NonconvexConstraint, SmoothFn};
use crate::surrogate::{ConstraintSurrogate, SurrogateKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McpParams {
    /// Penalty weight `λ`.
    pub lambda: f64,
    /// Concavity width `θ`.
    pub theta: f64,
    /// Smoothing constant `ϱ`.
    pub smoothing: f64,
    /// Constraint level `τ` in `mcp(x) ≤ τ`.
    pub level: f64,
}

impl McpParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda > 0.0 && self.theta > 0.0 && self.smoothing > 0.0 && self.level >= 0.0;
        if !ok || ![self.lambda, self.theta, self.smoothing, self.level].iter().all(|v| v.is_finite()) {
            return Err(CostaError::InvalidConfig(format!(
                "MCP needs lambda, theta, smoothing > 0 and level >= 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Concave part `h_{λ,θ}`.
pub fn huber(x: f64, lambda: f64, theta: f64) -> f64 {
    let a = x.abs();
    if a <= theta * lambda {
        x * x / (2.0 * theta)
    } else {
        lambda * a - 0.5 * theta * lambda * lambda
    }
}

pub fn huber_derivative(x: f64, lambda: f64, theta: f64) -> f64 {
    if x.abs() <= theta * lambda {
        x / theta
    } else {
        lambda * x.signum()
    }
}

/// `√(x² + ϱ) − √ϱ`
fn smooth_abs(x: f64, rho: f64) -> f64 {
    // written as x² / (√(x²+ϱ) + √ϱ) to avoid cancellation near 0
    x * x / ((x * x + rho).sqrt() + rho.sqrt())
}

fn smooth_abs_derivative(x: f64, rho: f64) -> f64 {
    x / (x * x + rho).sqrt()
}

/// The penalty, exact or with the smoothed `ℓ₁` term.
pub fn mcp_value(x: &[f64], p: &McpParams, smoothed: bool) -> f64 {
    x.iter()
        .map(|&v| {
            let l1 = if smoothed { smooth_abs(v, p.smoothing) } else { v.abs() };
            p.lambda * l1 - huber(v, p.lambda, p.theta)
        })
        .sum()
}

/// `g(x) = mcp_smoothed(x) − τ`.
#[derive(Debug, Clone, PartialEq)]
pub struct McpConstraint {
    pub params: McpParams,
}

impl McpConstraint {
    pub fn new(params: McpParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }
}

impl SmoothFn for McpConstraint {
    fn value(&self, x: &[f64]) -> f64 {
        mcp_value(x, &self.params, true) - self.params.level
    }

    fn add_gradient(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        let p = &self.params;
        for (o, &v) in out.iter_mut().zip(x) {
            *o += scale * (p.lambda * smooth_abs_derivative(v, p.smoothing) - huber_derivative(v, p.lambda, p.theta));
        }
    }

    fn label(&self) -> String {
        "mcp".into()
    }
}

impl NonconvexConstraint for McpConstraint {
    fn surrogate(&self, anchor: &[f64]) -> Result<ConstraintSurrogate> {
        Ok(mcp_surrogate(anchor, &self.params))
    }
}

/// `λ Σ s(x_k) − Σ [h(a_k) + h'(a_k)(x_k − a_k)] − τ` with `s` the smoothed
/// absolute value and `a` the anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct McpSurrogate {
    pub params: McpParams,
    pub anchor: Vec<f64>,
    anchor_h: Vec<f64>,
    slope: Vec<f64>,
}

impl SmoothFn for McpSurrogate {
    fn value(&self, x: &[f64]) -> f64 {
        let p = &self.params;
        let mut v = 0.0;
        for k in 0..x.len() {
            let lin = self.anchor_h[k] + self.slope[k] * (x[k] - self.anchor[k]);
            v += p.lambda * smooth_abs(x[k], p.smoothing) - lin;
        }
        v - p.level
    }

    fn add_gradient(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        let p = &self.params;
        for k in 0..x.len() {
            out[k] += scale * (p.lambda * smooth_abs_derivative(x[k], p.smoothing) - self.slope[k]);
        }
    }

    fn label(&self) -> String {
        "mcp~".into()
    }
}

pub fn mcp_surrogate(anchor: &[f64], p: &McpParams) -> ConstraintSurrogate {
    let anchor_h = anchor.iter().map(|&a| huber(a, p.lambda, p.theta)).collect();
    let slope = anchor.iter().map(|&a| huber_derivative(a, p.lambda, p.theta)).collect();
    let func = McpSurrogate { params: *p, anchor: anchor.to_vec(), anchor_h, slope };
    ConstraintSurrogate::new(anchor, SurrogateKind::ConvexComposite, Box::new(func))
}

/// The linear piece `h(a) + h'(a)(x − a)` for scalar inputs.
pub fn huber_tangent(x: f64, anchor: f64, p: &McpParams) -> f64 {
    huber(anchor, p.lambda, p.theta) + huber_derivative(anchor, p.lambda, p.theta) * (x - anchor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::{validate_majorization, validate_tangent_match};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const PAPER: McpParams = McpParams { lambda: 2.0, theta: 5.0, smoothing: 1e-3, level: 0.0 };

    #[test]
    fn exact_values() {
        assert_eq!(mcp_value(&[0.0, 0.0], &PAPER, false), 0.0);
        assert_eq!(mcp_value(&[0.0, 0.0], &PAPER, true), 0.0);
        assert!((mcp_value(&[1.0], &PAPER, false) - 1.9).abs() < 1e-15);
        let p = McpParams { lambda: 1.0, theta: 1.0, ..PAPER };
        assert!((mcp_value(&[3.0], &p, false) - 0.5).abs() < 1e-15);
        // flat beyond θλ: the penalty saturates at θλ²/2
        assert!((mcp_value(&[30.0], &PAPER, false) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn tangent_pieces() {
        // inner branch at a = 1: x/5 − 1/10 + … ; equals h(1) = 0.1 at x = 1
        assert!((huber_tangent(1.0, 1.0, &PAPER) - 0.1).abs() < 1e-15);
        assert!((huber_tangent(3.0, 1.0, &PAPER) - (3.0 / 5.0 - 0.1)).abs() < 1e-15);
        for x in [-4.0, 0.0, 7.0] {
            assert_eq!(huber_tangent(x, 0.0, &PAPER), 0.0);
        }
        let s = mcp_surrogate(&[0.0, 0.0], &PAPER);
        let x = [0.7, -1.2];
        let l1: f64 = x.iter().map(|v| smooth_abs(*v, PAPER.smoothing)).sum();
        assert!((s.value(&x) - PAPER.lambda * l1).abs() < 1e-15);
    }

    #[test]
    fn surrogate_majorizes_and_matches_tangent() {
        let g = McpConstraint::new(McpParams { level: 1.0, ..PAPER }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..25 {
            let anchor: Vec<f64> = (0..4).map(|_| rng.random_range(-12.0..12.0)).collect();
            let s = g.surrogate(&anchor).unwrap();
            let rep = validate_majorization(&s, &g, || (0..4).map(|_| rng.random_range(-12.0..12.0)).collect(), 400)
                .unwrap();
            assert!(rep.passed, "{rep:?}");
            let t = validate_tangent_match(&s, &g.gradient(&anchor), &anchor, 1e-3).unwrap();
            assert!(t.passed, "{t:?}");
        }
    }

    #[test]
    fn smoothing_error_is_bounded() {
        let x = [0.3, -2.0, 15.0, 0.0];
        let gap = mcp_value(&x, &PAPER, false) - mcp_value(&x, &PAPER, true);
        assert!(gap >= 0.0 && gap <= PAPER.lambda * 4.0 * PAPER.smoothing.sqrt());
    }

    proptest! {
        #[test]
        fn huber_is_c1(x in -20.0f64..20.0) {
            let h = 1e-6;
            let fd = (huber(x + h, 2.0, 5.0) - huber(x - h, 2.0, 5.0)) / (2.0 * h);
            prop_assert!((fd - huber_derivative(x, 2.0, 5.0)).abs() < 1e-6);
        }

        #[test]
        fn tangent_of_huber_is_a_minorant(x in -20.0f64..20.0, a in -20.0f64..20.0) {
            prop_assert!(huber_tangent(x, a, &PAPER) <= huber(x, 2.0, 5.0) + 1e-12);
        }
    }
}
