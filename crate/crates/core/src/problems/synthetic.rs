//! Small synthetic problems with closed-form expectations: a noisy separable
//! quadratic (optionally constrained), ball constraints, and a zero-mean
//! linear objective.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{CostaError, Result};
use crate::linalg::dot;
use crate::problem::{
    NoRegularizer, NonconvexConstraint, Regularizer, SmoothFn, SmoothnessMeta, StochasticProblem,
};
use crate::surrogate::{ConstraintSurrogate, SparseAffine, SurrogateKind};

/// Noise draw for [`SyntheticQuadratic`]. Both vectors are empty when the
/// corresponding noise level is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadSample {
    pub curvature: Vec<f64>,
    pub shift: Vec<f64>,
}

/// `f(x, ξ) = ½ Σ (a_i + ζ_i)(x_i − c_i)² + ⟨ε, x − c⟩` with
/// `ζ ~ N(0, s² I)`, `ε ~ N(0, σ² I)`, so `U(x) = ½ Σ a_i (x_i − c_i)²`.
pub struct SyntheticQuadratic {
    pub diag: Vec<f64>,
    pub target: Vec<f64>,
    pub curvature_noise: f64,
    pub additive_noise: f64,
    regularizer: Box<dyn Regularizer>,
    convex: Vec<Box<dyn SmoothFn>>,
    nonconvex: Vec<Box<dyn NonconvexConstraint>>,
    meta: SmoothnessMeta,
}

impl SyntheticQuadratic {
    pub fn new(diag: Vec<f64>, target: Vec<f64>) -> Result<Self> {
        if diag.len() != target.len() || diag.is_empty() {
            return Err(CostaError::InvalidInput("diag and target must be nonempty and equal length".into()));
        }
        if diag.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(CostaError::InvalidInput("diagonal entries must be positive".into()));
        }
        let l = diag.iter().cloned().fold(0.0, f64::max);
        Ok(Self {
            diag,
            target,
            curvature_noise: 0.0,
            additive_noise: 0.0,
            regularizer: Box::new(NoRegularizer),
            convex: Vec::new(),
            nonconvex: Vec::new(),
            meta: SmoothnessMeta { smoothness: Some(l), noise_std: Some(0.0), ..Default::default() },
        })
    }

    pub fn with_noise(mut self, curvature: f64, additive: f64) -> Result<Self> {
        if !(curvature >= 0.0 && additive >= 0.0) {
            return Err(CostaError::InvalidInput("noise levels must be >= 0".into()));
        }
        self.curvature_noise = curvature;
        self.additive_noise = additive;
        self.meta.noise_std = if curvature == 0.0 {
            Some(additive * (self.diag.len() as f64).sqrt())
        } else {
            None
        };
        Ok(self)
    }

    /// Adds `⟨coefs, x⟩ ≤ rhs` as a convex constraint.
    pub fn with_linear_constraint(mut self, coefs: &[f64], rhs: f64) -> Result<Self> {
        crate::error::check_dim(self.diag.len(), coefs.len())?;
        let terms: Vec<(usize, f64)> = coefs.iter().cloned().enumerate().filter(|(_, c)| *c != 0.0).collect();
        let k = self.convex.len();
        self.convex.push(Box::new(SparseAffine::new(-rhs, &terms, format!("linear{k}"))));
        Ok(self)
    }

    pub fn with_convex(mut self, c: Box<dyn SmoothFn>) -> Self {
        self.convex.push(c);
        self
    }

    pub fn with_nonconvex(mut self, c: Box<dyn NonconvexConstraint>) -> Self {
        self.nonconvex.push(c);
        self
    }

    pub fn with_regularizer(mut self, u: Box<dyn Regularizer>) -> Self {
        self.regularizer = u;
        self
    }

    /// Overrides individual metadata entries (`Some` values win).
    pub fn with_meta(mut self, meta: SmoothnessMeta) -> Self {
        let m = &mut self.meta;
        m.smoothness = meta.smoothness.or(m.smoothness);
        m.lipschitz = meta.lipschitz.or(m.lipschitz);
        m.noise_std = meta.noise_std.or(m.noise_std);
        m.modulus = meta.modulus.or(m.modulus);
        m.range_bound = meta.range_bound.or(m.range_bound);
        m.initial_gap = meta.initial_gap.or(m.initial_gap);
        self
    }

    pub fn unconstrained_minimizer(&self) -> &[f64] {
        &self.target
    }
}

impl StochasticProblem for SyntheticQuadratic {
    type Sample = QuadSample;

    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> QuadSample {
        let n = self.diag.len();
        let mut gauss = |scale: f64| -> Vec<f64> {
            if scale == 0.0 {
                Vec::new()
            } else {
                (0..n).map(|_| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)).collect()
            }
        };
        let curvature = gauss(self.curvature_noise);
        let shift = gauss(self.additive_noise);
        QuadSample { curvature, shift }
    }

    fn value(&self, x: &[f64], s: &QuadSample) -> f64 {
        let mut v = 0.0;
        for i in 0..x.len() {
            let d = x[i] - self.target[i];
            let a = self.diag[i] + s.curvature.get(i).copied().unwrap_or(0.0);
            v += 0.5 * a * d * d + s.shift.get(i).copied().unwrap_or(0.0) * d;
        }
        v
    }

    fn gradient(&self, x: &[f64], s: &QuadSample, out: &mut [f64]) {
        for i in 0..x.len() {
            let d = x[i] - self.target[i];
            let a = self.diag[i] + s.curvature.get(i).copied().unwrap_or(0.0);
            out[i] = a * d + s.shift.get(i).copied().unwrap_or(0.0);
        }
    }

    fn expected_value(&self, x: &[f64]) -> Option<f64> {
        Some(x.iter().zip(&self.target).zip(&self.diag).map(|((x, c), a)| 0.5 * a * (x - c) * (x - c)).sum())
    }

    fn expected_gradient(&self, x: &[f64], out: &mut [f64]) -> bool {
        for i in 0..x.len() {
            out[i] = self.diag[i] * (x[i] - self.target[i]);
        }
        true
    }

    fn regularizer(&self) -> &dyn Regularizer {
        self.regularizer.as_ref()
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

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BallSide {
    /// `‖x − c‖² − r² ≤ 0` (convex).
    Interior,
    /// `r² − ‖x − c‖² ≤ 0` (concave, non-convex feasible set).
    Exterior,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BallConstraint {
    pub center: Vec<f64>,
    pub radius: f64,
    pub side: BallSide,
}

impl BallConstraint {
    pub fn interior(center: Vec<f64>, radius: f64) -> Self {
        Self { center, radius, side: BallSide::Interior }
    }

    pub fn exterior(center: Vec<f64>, radius: f64) -> Self {
        Self { center, radius, side: BallSide::Exterior }
    }

    fn sq_dist(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.center).map(|(a, b)| (a - b) * (a - b)).sum()
    }
}

impl SmoothFn for BallConstraint {
    fn value(&self, x: &[f64]) -> f64 {
        let d2 = self.sq_dist(x);
        let r2 = self.radius * self.radius;
        match self.side {
            BallSide::Interior => d2 - r2,
            BallSide::Exterior => r2 - d2,
        }
    }

    fn add_gradient(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        let sign = match self.side {
            BallSide::Interior => 2.0,
            BallSide::Exterior => -2.0,
        };
        for ((o, xi), ci) in out.iter_mut().zip(x).zip(&self.center) {
            *o += scale * sign * (xi - ci);
        }
    }

    fn label(&self) -> String {
        match self.side {
            BallSide::Interior => "ball-interior".into(),
            BallSide::Exterior => "ball-exterior".into(),
        }
    }
}

impl NonconvexConstraint for BallConstraint {
    /// Interior: the constraint itself. Exterior: its tangent plane, which
    /// majorizes the concave function everywhere.
    fn surrogate(&self, anchor: &[f64]) -> Result<ConstraintSurrogate> {
        crate::error::check_dim(self.center.len(), anchor.len())?;
        match self.side {
            BallSide::Interior => {
                Ok(ConstraintSurrogate::new(anchor, SurrogateKind::ConvexComposite, Box::new(self.clone())))
            }
            BallSide::Exterior => {
                let idx: Vec<usize> = (0..anchor.len()).collect();
                let grad = self.gradient(anchor);
                let aff = SparseAffine::tangent(self.value(anchor), &idx, &grad, anchor, "ball-exterior~");
                Ok(ConstraintSurrogate::linear(anchor, aff))
            }
        }
    }
}

/// `min ‖x − target‖²` subject to `‖x‖ ≥ 1` in the plane, deterministic. The
/// optimum for `target = (a, 0)` with `0 < a < 1` is `(1, 0)`.
pub fn exterior_ball_fixture(target: [f64; 2]) -> SyntheticQuadratic {
    SyntheticQuadratic::new(vec![2.0, 2.0], target.to_vec())
        .expect("valid fixture")
        .with_nonconvex(Box::new(BallConstraint::exterior(vec![0.0, 0.0], 1.0)))
        .with_meta(SmoothnessMeta { smoothness: Some(2.0), lipschitz: Some(6.0), ..Default::default() })
}

/// The ten-dimensional stochastic benchmark: ill-conditioned diagonal
/// quadratic with multiplicative and additive gradient noise and one active
/// linear constraint `Σ x_i ≤ 1`.
pub fn stochastic_benchmark(noise: f64) -> SyntheticQuadratic {
    let n = 10;
    let diag: Vec<f64> = (0..n).map(|i| 0.5 + 2.5 * i as f64 / (n - 1) as f64).collect();
    let target: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -0.5 }).collect();
    SyntheticQuadratic::new(diag, target)
        .expect("valid benchmark")
        .with_noise(0.5 * noise, noise)
        .expect("nonnegative noise")
        .with_linear_constraint(&vec![1.0; n], 1.0)
        .expect("matching dims")
        .with_meta(SmoothnessMeta { lipschitz: Some(10.0), ..Default::default() })
}

/// `f(x, ξ) = ⟨ξ, x⟩`, `ξ ~ N(0, I)`, with an ℓ₁ regularizer.
pub struct ZeroMeanLinear {
    n: usize,
    regularizer: crate::problem::L1Norm,
}

impl ZeroMeanLinear {
    pub fn new(n: usize, l1_weight: f64) -> Self {
        Self { n, regularizer: crate::problem::L1Norm { weight: l1_weight } }
    }
}

impl StochasticProblem for ZeroMeanLinear {
    type Sample = Vec<f64>;

    fn dim(&self) -> usize {
        self.n
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.n).map(|_| StandardNormal.sample(&mut *rng)).collect::<Vec<f64>>()
    }

    fn value(&self, x: &[f64], s: &Vec<f64>) -> f64 {
        dot(x, s)
    }

    fn gradient(&self, _x: &[f64], s: &Vec<f64>, out: &mut [f64]) {
        out.copy_from_slice(s);
    }

    fn expected_value(&self, _x: &[f64]) -> Option<f64> {
        Some(0.0)
    }

    fn expected_gradient(&self, _x: &[f64], out: &mut [f64]) -> bool {
        out.iter_mut().for_each(|v| *v = 0.0);
        true
    }

    fn regularizer(&self) -> &dyn Regularizer {
        &self.regularizer
    }

    fn convex_constraints(&self) -> &[Box<dyn SmoothFn>] {
        &[]
    }

    fn nonconvex_constraints(&self) -> &[Box<dyn NonconvexConstraint>] {
        &[]
    }

    fn meta(&self) -> SmoothnessMeta {
        SmoothnessMeta { smoothness: Some(1e-12), noise_std: Some((self.n as f64).sqrt()), ..Default::default() }
    }
}
