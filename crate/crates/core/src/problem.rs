//! Problem abstraction shared by every other module.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, CostaError, Result};

/// A differentiable scalar function of `x ∈ R^n`.
///
/// Gradients are accumulated rather than returned so that functions which
/// touch only a few coordinates (trajectory constraints, sparse affine
/// surrogates) cost proportional to their support.
pub trait SmoothFn: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;

    /// `out += scale * ∇φ(x)`.
    fn add_gradient(&self, x: &[f64], scale: f64, out: &mut [f64]);

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.add_gradient(x, 1.0, &mut g);
        g
    }

    fn label(&self) -> String {
        "fn".to_string()
    }
}

/// Convex constraint functions `h_i` are plain smooth functions.
pub use SmoothFn as ConstraintFn;

/// A smooth, possibly non-convex constraint `g_j` that knows how to build a
/// convex majorizer of itself anchored at a point.
pub trait NonconvexConstraint: SmoothFn {
    fn surrogate(&self, anchor: &[f64]) -> Result<crate::surrogate::ConstraintSurrogate>;
}

/// Convex regularizer `u`.
pub trait Regularizer: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;

    /// Writes some element of `∂u(x)` into `out`.
    fn subgradient(&self, x: &[f64], out: &mut [f64]);

    /// `out = argmin_y u(y) + ‖y - v‖² / (2 step)`. Returns `false` when no
    /// proximal oracle is available; callers then fall back to subgradients.
    fn prox(&self, _v: &[f64], _step: f64, _out: &mut [f64]) -> bool {
        false
    }

    /// The element `v ∈ ∂u(x)` minimizing `‖w + v‖`.
    fn min_norm_subgradient(&self, x: &[f64], _w: &[f64], out: &mut [f64]) {
        self.subgradient(x, out)
    }

    fn is_zero(&self) -> bool {
        false
    }
}

/// `u ≡ 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoRegularizer;

impl Regularizer for NoRegularizer {
    fn value(&self, _x: &[f64]) -> f64 {
        0.0
    }

    fn subgradient(&self, _x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }

    fn prox(&self, v: &[f64], _step: f64, out: &mut [f64]) -> bool {
        out.copy_from_slice(v);
        true
    }

    fn is_zero(&self) -> bool {
        true
    }
}

/// `u(x) = weight · ‖x‖₁`.
#[derive(Debug, Clone, Copy)]
pub struct L1Norm {
    pub weight: f64,
}

impl Regularizer for L1Norm {
    fn value(&self, x: &[f64]) -> f64 {
        self.weight * x.iter().map(|v| v.abs()).sum::<f64>()
    }

    fn subgradient(&self, x: &[f64], out: &mut [f64]) {
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = if xi == 0.0 { 0.0 } else { self.weight * xi.signum() };
        }
    }

    fn prox(&self, v: &[f64], step: f64, out: &mut [f64]) -> bool {
        let thr = self.weight * step;
        for (o, &vi) in out.iter_mut().zip(v) {
            *o = vi.signum() * (vi.abs() - thr).max(0.0);
        }
        true
    }

    fn min_norm_subgradient(&self, x: &[f64], w: &[f64], out: &mut [f64]) {
        for ((o, &xi), &wi) in out.iter_mut().zip(x).zip(w) {
            *o = if xi == 0.0 {
                (-wi).clamp(-self.weight, self.weight)
            } else {
                self.weight * xi.signum()
            };
        }
    }
}

/// `u(x) = (weight / 2) ‖x‖²`.
#[derive(Debug, Clone, Copy)]
pub struct SquaredL2 {
    pub weight: f64,
}

impl Regularizer for SquaredL2 {
    fn value(&self, x: &[f64]) -> f64 {
        0.5 * self.weight * crate::linalg::norm_sq(x)
    }

    fn subgradient(&self, x: &[f64], out: &mut [f64]) {
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = self.weight * xi;
        }
    }

    fn prox(&self, v: &[f64], step: f64, out: &mut [f64]) -> bool {
        let s = 1.0 / (1.0 + self.weight * step);
        for (o, &vi) in out.iter_mut().zip(v) {
            *o = vi * s;
        }
        true
    }
}

/// Smoothness and boundedness constants of a problem. `None` marks an
/// unknown entry; operations that need one fail with
/// [`CostaError::MetadataRequired`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessMeta {
    /// Smoothness constant `L`.
    pub smoothness: Option<f64>,
    /// Lipschitz constant `G`.
    pub lipschitz: Option<f64>,
    /// Gradient noise standard deviation `σ`.
    pub noise_std: Option<f64>,
    /// Surrogate strong-convexity modulus `μ`.
    pub modulus: Option<f64>,
    /// Surrogate range bound `B_U`.
    pub range_bound: Option<f64>,
    /// Initial optimality gap bound `B_1`.
    pub initial_gap: Option<f64>,
}

macro_rules! meta_getter {
    ($name:ident, $label:literal) => {
        pub fn $name(&self) -> Result<f64> {
            self.$name.ok_or(CostaError::MetadataRequired($label))
        }
    };
}

impl SmoothnessMeta {
    meta_getter!(smoothness, "L");
    meta_getter!(lipschitz, "G");
    meta_getter!(noise_std, "sigma");
    meta_getter!(modulus, "mu");
    meta_getter!(range_bound, "B_U");
    meta_getter!(initial_gap, "B_1");

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("L", self.smoothness),
            ("mu", self.modulus),
            ("B_U", self.range_bound),
        ];
        for (name, v) in positive {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(CostaError::InvalidInput(format!("{name} must be > 0, got {v}")));
                }
            }
        }
        let nonneg = [
            ("G", self.lipschitz),
            ("sigma", self.noise_std),
            ("B_1", self.initial_gap),
        ];
        for (name, v) in nonneg {
            if let Some(v) = v {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(CostaError::InvalidInput(format!("{name} must be >= 0, got {v}")));
                }
            }
        }
        Ok(())
    }
}

/// Stochastic program `min E[f(x, ξ)] + u(x)` s.t. `h(x) <= 0`, `g(x) <= 0`.
///
/// The sample type is opaque to the library: a data row index for the
/// classification problem, an ensemble noise draw for trajectory planning.
/// Implementations must be immutable after construction.
pub trait StochasticProblem: Send + Sync {
    type Sample: Clone + Send + Sync + std::fmt::Debug;

    fn dim(&self) -> usize;

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::Sample;

    fn value(&self, x: &[f64], sample: &Self::Sample) -> f64;

    /// Writes `∇f(x, ξ)` into `out`. Must be deterministic in `(x, ξ)`.
    fn gradient(&self, x: &[f64], sample: &Self::Sample, out: &mut [f64]);

    /// `U(x) = E[f(x, ξ)]` when it can be computed exactly.
    fn expected_value(&self, _x: &[f64]) -> Option<f64> {
        None
    }

    /// Writes `∇U(x)` into `out` and returns `true` when available.
    fn expected_gradient(&self, _x: &[f64], _out: &mut [f64]) -> bool {
        false
    }

    fn regularizer(&self) -> &dyn Regularizer;

    fn convex_constraints(&self) -> &[Box<dyn SmoothFn>];

    fn nonconvex_constraints(&self) -> &[Box<dyn NonconvexConstraint>];

    fn meta(&self) -> SmoothnessMeta;
}

/// `max(0, max_j g_j(x), max_i h_i(x))`.
pub fn feasibility_violation<P: StochasticProblem>(problem: &P, x: &[f64]) -> Result<f64> {
    check_dim(problem.dim(), x.len())?;
    let g = problem.nonconvex_constraints().iter().map(|c| c.value(x));
    let h = problem.convex_constraints().iter().map(|c| c.value(x));
    Ok(g.chain(h).fold(0.0, f64::max))
}

/// Monte-Carlo estimate of `U(x) + u(x)` from `m` fresh samples.
pub fn estimate_expected_objective<P: StochasticProblem, R: Rng + ?Sized>(
    problem: &P,
    x: &[f64],
    m: usize,
    rng: &mut R,
) -> Result<f64> {
    check_dim(problem.dim(), x.len())?;
    if m == 0 {
        return Err(CostaError::InvalidInput("sample count must be >= 1".into()));
    }
    let mut acc = 0.0;
    for _ in 0..m {
        let s = problem.draw(rng);
        let v = problem.value(x, &s);
        if !v.is_finite() {
            return Err(CostaError::Oracle(format!("non-finite objective sample {v}")));
        }
        acc += v;
    }
    Ok(acc / m as f64 + problem.regularizer().value(x))
}
