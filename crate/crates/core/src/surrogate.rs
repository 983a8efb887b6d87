//! Objective and constraint surrogates, and mechanical checks of the
//! properties the algorithm relies on (tangent match, majorization, strong
//! convexity).

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, CostaError, Result};
use crate::linalg::{dot, norm_inf, norm_sq};
use crate::problem::{NonconvexConstraint, SmoothFn};

/// A strongly convex model of the objective anchored at a point.
pub trait ObjectiveModel: SmoothFn {
    fn anchor(&self) -> &[f64];
    /// Strong-convexity modulus.
    fn modulus(&self) -> f64;
}

/// `f̂(x) = f(x_t, ξ_t) + ⟨∇f(x_t, ξ_t), x − x_t⟩ + (μ/2)‖x − x_t‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProximalSurrogate {
    pub anchor: Vec<f64>,
    pub value_at_anchor: f64,
    pub gradient: Vec<f64>,
    pub mu: f64,
}

impl SmoothFn for ProximalSurrogate {
    fn value(&self, x: &[f64]) -> f64 {
        let mut lin = 0.0;
        let mut sq = 0.0;
        for ((&xi, &ai), &gi) in x.iter().zip(&self.anchor).zip(&self.gradient) {
            let d = xi - ai;
            lin += gi * d;
            sq += d * d;
        }
        self.value_at_anchor + lin + 0.5 * self.mu * sq
    }

    fn add_gradient(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        for (((o, &xi), &ai), &gi) in out.iter_mut().zip(x).zip(&self.anchor).zip(&self.gradient) {
            *o += scale * (gi + self.mu * (xi - ai));
        }
    }

    fn label(&self) -> String {
        "proximal".into()
    }
}

impl ObjectiveModel for ProximalSurrogate {
    fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    fn modulus(&self) -> f64 {
        self.mu
    }
}

pub fn build_proximal_surrogate(
    anchor: &[f64],
    gradient: &[f64],
    value: f64,
    mu: f64,
) -> Result<ProximalSurrogate> {
    check_dim(anchor.len(), gradient.len())?;
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(CostaError::InvalidConfig(format!("surrogate modulus must be > 0, got {mu}")));
    }
    Ok(ProximalSurrogate {
        anchor: anchor.to_vec(),
        value_at_anchor: value,
        gradient: gradient.to_vec(),
        mu,
    })
}

/// Produces objective models at each iterate. The default is
/// [`ProximalBuilder`]; custom builders should be checked with the
/// validators in this module before use.
pub trait ObjectiveSurrogateBuilder: Send + Sync {
    fn build(&self, anchor: &[f64], gradient: &[f64], value: f64, mu: f64) -> Result<Box<dyn ObjectiveModel>>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ProximalBuilder;

impl ObjectiveSurrogateBuilder for ProximalBuilder {
    fn build(&self, anchor: &[f64], gradient: &[f64], value: f64, mu: f64) -> Result<Box<dyn ObjectiveModel>> {
        Ok(Box::new(build_proximal_surrogate(anchor, gradient, value, mu)?))
    }
}

/// `f̃(x) = f̂(x) + ⟨x − x_t, z_{t+1} − ∇f(x_t, ξ_t)⟩`, so that `∇f̃(x_t) = z_{t+1}`.
pub struct RunningSurrogate {
    pub base: Box<dyn ObjectiveModel>,
    /// `q = z_{t+1} − ∇f(x_t, ξ_t)`
    pub correction: Vec<f64>,
}

impl SmoothFn for RunningSurrogate {
    fn value(&self, x: &[f64]) -> f64 {
        let a = self.base.anchor();
        let lin: f64 = x.iter().zip(a).zip(&self.correction).map(|((xi, ai), qi)| (xi - ai) * qi).sum();
        self.base.value(x) + lin
    }

    fn add_gradient(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        self.base.add_gradient(x, scale, out);
        for (o, q) in out.iter_mut().zip(&self.correction) {
            *o += scale * q;
        }
    }

    fn label(&self) -> String {
        format!("running({})", self.base.label())
    }
}

impl ObjectiveModel for RunningSurrogate {
    fn anchor(&self) -> &[f64] {
        self.base.anchor()
    }

    fn modulus(&self) -> f64 {
        self.base.modulus()
    }
}

/// Wraps `f̂` with the tracking correction. `sampled_gradient` is `∇f(x_t, ξ_t)`.
pub fn build_running_surrogate(
    base: Box<dyn ObjectiveModel>,
    sampled_gradient: &[f64],
    z_next: &[f64],
) -> Result<RunningSurrogate> {
    check_dim(base.anchor().len(), z_next.len())?;
    check_dim(sampled_gradient.len(), z_next.len())?;
    let correction = z_next.iter().zip(sampled_gradient).map(|(z, g)| z - g).collect();
    Ok(RunningSurrogate { base, correction })
}

/// One term `coef · (x[index] − origin)` of a [`SparseAffine`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTerm {
    pub index: usize,
    pub coef: f64,
    pub origin: f64,
}

/// `offset + Σ coef_k (x[i_k] − origin_k)`. Writing the affine map around an
/// origin keeps the value bit-exact at that origin.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseAffine {
    pub offset: f64,
    pub terms: Vec<AffineTerm>,
    pub name: String,
}

impl SparseAffine {
    /// `offset + Σ coef_k x[i_k]`
    pub fn new(offset: f64, coefs: &[(usize, f64)], name: impl Into<String>) -> Self {
        Self {
            offset,
            terms: coefs.iter().map(|&(index, coef)| AffineTerm { index, coef, origin: 0.0 }).collect(),
            name: name.into(),
        }
    }

    /// Tangent plane `value + ⟨grad, x − anchor⟩` restricted to `indices`.
    pub fn tangent(value: f64, indices: &[usize], grad: &[f64], anchor: &[f64], name: impl Into<String>) -> Self {
        Self {
            offset: value,
            terms: indices
                .iter()
                .zip(grad)
                .map(|(&index, &coef)| AffineTerm { index, coef, origin: anchor[index] })
                .collect(),
            name: name.into(),
        }
    }
}

impl SmoothFn for SparseAffine {
    fn value(&self, x: &[f64]) -> f64 {
        self.offset + self.terms.iter().map(|t| t.coef * (x[t.index] - t.origin)).sum::<f64>()
    }

    fn add_gradient(&self, _x: &[f64], scale: f64, out: &mut [f64]) {
        for t in &self.terms {
            out[t.index] += scale * t.coef;
        }
    }

    fn label(&self) -> String {
        self.name.clone()
    }
}

/// An affine function is its own surrogate.
impl NonconvexConstraint for SparseAffine {
    fn surrogate(&self, anchor: &[f64]) -> Result<ConstraintSurrogate> {
        Ok(ConstraintSurrogate::linear(anchor, self.clone()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurrogateKind {
    Linear,
    ConvexComposite,
}

/// Convex majorizer `g̃_j(·, x_t)` of a constraint, anchored at `x_t`.
pub struct ConstraintSurrogate {
    pub anchor: Vec<f64>,
    pub kind: SurrogateKind,
    pub func: Box<dyn SmoothFn>,
}

impl ConstraintSurrogate {
    pub fn new(anchor: &[f64], kind: SurrogateKind, func: Box<dyn SmoothFn>) -> Self {
        Self { anchor: anchor.to_vec(), kind, func }
    }

    pub fn linear(anchor: &[f64], func: SparseAffine) -> Self {
        Self::new(anchor, SurrogateKind::Linear, Box::new(func))
    }
}

impl SmoothFn for ConstraintSurrogate {
    fn value(&self, x: &[f64]) -> f64 {
        self.func.value(x)
    }

    fn add_gradient(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        self.func.add_gradient(x, scale, out)
    }

    fn label(&self) -> String {
        self.func.label()
    }
}

/// Fourth-order central difference gradient,
/// `(8(φ(x+h) − φ(x−h)) − (φ(x+2h) − φ(x−2h))) / 12h` per coordinate.
pub fn fd_gradient(f: &dyn SmoothFn, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    let eval = |i: usize, delta: f64, probe: &mut Vec<f64>| {
        probe[i] = x[i] + delta;
        let v = f.value(probe);
        probe[i] = x[i];
        v
    };
    (0..x.len())
        .map(|i| {
            let p1 = eval(i, h, &mut probe);
            let m1 = eval(i, -h, &mut probe);
            let p2 = eval(i, 2.0 * h, &mut probe);
            let m2 = eval(i, -2.0 * h, &mut probe);
            (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentReport {
    /// `‖∇φ̃(x_t) − FD(φ̃)(x_t)‖_∞`
    pub fd_deviation: f64,
    /// `‖∇φ̃(x_t) − ∇φ(x_t)‖_∞`
    pub oracle_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl TangentReport {
    pub fn max_deviation(&self) -> f64 {
        self.fd_deviation.max(self.oracle_deviation)
    }
}

/// Compares the surrogate's analytic gradient at the anchor with its own
/// finite-difference gradient and with the original oracle's gradient.
/// Passes when both deviations are within `10 h²`.
pub fn validate_tangent_match(
    surrogate: &dyn SmoothFn,
    original_gradient: &[f64],
    anchor: &[f64],
    fd_step: f64,
) -> Result<TangentReport> {
    check_dim(anchor.len(), original_gradient.len())?;
    if !(fd_step > 0.0) {
        return Err(CostaError::InvalidInput(format!("fd step must be > 0, got {fd_step}")));
    }
    let analytic = surrogate.gradient(anchor);
    let fd = fd_gradient(surrogate, anchor, fd_step);
    let dev = |a: &[f64], b: &[f64]| norm_inf(&crate::linalg::sub(a, b));
    let fd_deviation = dev(&analytic, &fd);
    let oracle_deviation = dev(&analytic, original_gradient);
    let tolerance = 10.0 * fd_step * fd_step;
    Ok(TangentReport {
        fd_deviation,
        oracle_deviation,
        tolerance,
        passed: fd_deviation <= tolerance && oracle_deviation <= tolerance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MajorizationReport {
    pub label: String,
    /// `min_k g̃(x_k, x_t) − g(x_k)` over the samples.
    pub min_gap: f64,
    /// `|g̃(x_t, x_t) − g(x_t)|`
    pub anchor_gap: f64,
    pub samples: usize,
    pub passed: bool,
}

pub const MAJORIZATION_TOL: f64 = 1e-10;
pub const ANCHOR_EQUALITY_TOL: f64 = 1e-12;

/// Samples `m` points and checks `g(x) ≤ g̃(x, x_t)` (to `−1e−10`) and
/// equality at the anchor (to `1e−12`).
pub fn validate_majorization<F: FnMut() -> Vec<f64>>(
    surrogate: &ConstraintSurrogate,
    original: &dyn SmoothFn,
    mut sampler: F,
    m: usize,
) -> Result<MajorizationReport> {
    if m == 0 {
        return Err(CostaError::InvalidInput("need at least one sample".into()));
    }
    let anchor_gap = (surrogate.value(&surrogate.anchor) - original.value(&surrogate.anchor)).abs();
    let mut min_gap = f64::INFINITY;
    for _ in 0..m {
        let x = sampler();
        check_dim(surrogate.anchor.len(), x.len())?;
        min_gap = min_gap.min(surrogate.value(&x) - original.value(&x));
    }
    Ok(MajorizationReport {
        label: original.label(),
        min_gap,
        anchor_gap,
        samples: m,
        passed: min_gap >= -MAJORIZATION_TOL && anchor_gap <= ANCHOR_EQUALITY_TOL,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    /// `min ⟨∇φ(x) − ∇φ(y), x − y⟩ − μ‖x − y‖²`
    pub min_slack: f64,
    pub pairs: usize,
    pub passed: bool,
}

/// Checks `⟨∇φ(x) − ∇φ(y), x − y⟩ ≥ μ‖x − y‖² − 1e−10` on `m` sampled pairs.
pub fn validate_strong_convexity<F: FnMut() -> (Vec<f64>, Vec<f64>)>(
    model: &dyn SmoothFn,
    mu: f64,
    mut sampler: F,
    m: usize,
) -> Result<ConvexityReport> {
    if m == 0 {
        return Err(CostaError::InvalidInput("need at least one pair".into()));
    }
    let mut min_slack = f64::INFINITY;
    for _ in 0..m {
        let (x, y) = sampler();
        check_dim(x.len(), y.len())?;
        let gx = model.gradient(&x);
        let gy = model.gradient(&y);
        let dg = crate::linalg::sub(&gx, &gy);
        let dx = crate::linalg::sub(&x, &y);
        min_slack = min_slack.min(dot(&dg, &dx) - mu * norm_sq(&dx));
    }
    Ok(ConvexityReport { min_slack, pairs: m, passed: min_slack >= -1e-10 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Perturbed<'a> {
        inner: &'a dyn SmoothFn,
        coord: usize,
        by: f64,
    }

    impl SmoothFn for Perturbed<'_> {
        fn value(&self, x: &[f64]) -> f64 {
            self.inner.value(x)
        }
        fn add_gradient(&self, x: &[f64], scale: f64, out: &mut [f64]) {
            self.inner.add_gradient(x, scale, out);
            out[self.coord] += scale * self.by;
        }
    }

    struct Shifted<'a>(&'a dyn SmoothFn, f64);

    impl SmoothFn for Shifted<'_> {
        fn value(&self, x: &[f64]) -> f64 {
            self.0.value(x) + self.1
        }
        fn add_gradient(&self, x: &[f64], scale: f64, out: &mut [f64]) {
            self.0.add_gradient(x, scale, out)
        }
    }

    /// `g(x) = x₀² + x₁`: convex, so `g̃ = g` is a valid (identity) surrogate.
    struct Bowl;

    impl SmoothFn for Bowl {
        fn value(&self, x: &[f64]) -> f64 {
            x[0] * x[0] + x[1]
        }
        fn add_gradient(&self, x: &[f64], scale: f64, out: &mut [f64]) {
            out[0] += scale * 2.0 * x[0];
            out[1] += scale;
        }
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(42)
    }

    #[test]
    fn proximal_surrogate_examples() {
        let s = build_proximal_surrogate(&[0.5, -1.0], &[1.0, 2.0], 3.0, 1.5).unwrap();
        assert_eq!(s.value(&[0.5, -1.0]), 3.0);
        assert_eq!(s.gradient(&[0.5, -1.0]), vec![1.0, 2.0]);
        let s = build_proximal_surrogate(&[0.0, 0.0], &[0.0, 0.0], 0.0, 2.0).unwrap();
        assert_eq!(s.value(&[1.0, 0.0]), 1.0);
        assert!(build_proximal_surrogate(&[0.0], &[0.0], 0.0, 0.0).is_err());
    }

    #[test]
    fn running_surrogate_examples() {
        let base = build_proximal_surrogate(&[0.0, 0.0], &[0.0, 0.0], 0.0, 2.0).unwrap();
        let r = build_running_surrogate(Box::new(base.clone()), &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(r.correction, vec![0.0, 0.0]);
        assert_eq!(r.value(&[0.3, 0.4]), base.value(&[0.3, 0.4]));

        let r = build_running_surrogate(Box::new(base), &[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_eq!(r.value(&[1.0, 0.0]), 2.0);

        let mut g = rng();
        for _ in 0..20 {
            let a: Vec<f64> = (0..4).map(|_| g.random_range(-2.0..2.0)).collect();
            let grad: Vec<f64> = (0..4).map(|_| g.random_range(-2.0..2.0)).collect();
            let z: Vec<f64> = (0..4).map(|_| g.random_range(-2.0..2.0)).collect();
            let base = build_proximal_surrogate(&a, &grad, 0.1, 0.7).unwrap();
            let r = build_running_surrogate(Box::new(base), &grad, &z).unwrap();
            let at = r.gradient(&a);
            for i in 0..4 {
                assert!((at[i] - z[i]).abs() < 1e-15);
            }
        }
        let base = build_proximal_surrogate(&[0.0], &[0.0], 0.0, 1.0).unwrap();
        assert!(build_running_surrogate(Box::new(base), &[0.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn tangent_match_examples() {
        let s = build_proximal_surrogate(&[0.3, -0.2, 1.0], &[1.0, -2.0, 0.5], 0.0, 0.9).unwrap();
        let r = validate_tangent_match(&s, &[1.0, -2.0, 0.5], &[0.3, -0.2, 1.0], 1e-3).unwrap();
        assert!(r.passed, "{r:?}");

        let bad = Perturbed { inner: &s, coord: 1, by: 0.1 };
        let r = validate_tangent_match(&bad, &[1.0, -2.0, 0.5], &[0.3, -0.2, 1.0], 1e-3).unwrap();
        assert!(!r.passed);
        assert!((r.max_deviation() - 0.1).abs() < 1e-6, "{r:?}");

        let lin = SparseAffine::tangent(0.5, &[0, 2], &[1.0, -3.0], &[0.3, -0.2, 1.0], "lin");
        let r = validate_tangent_match(&lin, &[1.0, 0.0, -3.0], &[0.3, -0.2, 1.0], 1e-3).unwrap();
        assert!(r.passed && r.max_deviation() < 1e-9, "{r:?}");
        assert!(validate_tangent_match(&lin, &[1.0, 0.0, -3.0], &[0.3, -0.2, 1.0], 0.0).is_err());
    }

    #[test]
    fn majorization_examples() {
        let anchor = [0.4, -0.3];
        let ident = ConstraintSurrogate::new(&anchor, SurrogateKind::ConvexComposite, Box::new(Bowl));
        let mut g = rng();
        let r = validate_majorization(
            &ident,
            &Bowl,
            || vec![g.random_range(-3.0..3.0), g.random_range(-3.0..3.0)],
            1000,
        )
        .unwrap();
        assert!(r.passed);
        assert_eq!(r.min_gap, 0.0);

        let lowered = ConstraintSurrogate::new(&anchor, SurrogateKind::ConvexComposite, Box::new(Shifted(&Bowl, -0.1)));
        let r = validate_majorization(
            &lowered,
            &Bowl,
            || vec![g.random_range(-3.0..3.0), g.random_range(-3.0..3.0)],
            100,
        )
        .unwrap();
        assert!(!r.passed);
        assert!((r.min_gap + 0.1).abs() < 1e-12);
    }

    #[test]
    fn strong_convexity_examples() {
        let s = build_proximal_surrogate(&[1.0, 2.0], &[0.5, 0.5], 0.0, 0.8).unwrap();
        let mut g = rng();
        let mut pair = || {
            let x: Vec<f64> = (0..2).map(|_| g.random_range(-3.0..3.0)).collect();
            let y: Vec<f64> = (0..2).map(|_| g.random_range(-3.0..3.0)).collect();
            (x, y)
        };
        let r = validate_strong_convexity(&s, 0.8, &mut pair, 500).unwrap();
        assert!(r.passed);
        assert!(r.min_slack.abs() < 1e-12);
        let r = validate_strong_convexity(&s, 1.6, &mut pair, 500).unwrap();
        assert!(!r.passed);
        let r = validate_strong_convexity(&s, 0.8, || (vec![0.5, 0.5], vec![0.5, 0.5]), 3).unwrap();
        assert!(r.passed);
        assert_eq!(r.min_slack, 0.0);
    }
}
