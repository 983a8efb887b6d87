//! Analytic ocean-current field and its ensemble perturbation.
//!
//! `ϑ(x) = ω [1 − 2x₁², −2x₁x₂]ᵀ exp(−(x₁² + x₂²))`, perturbed per ensemble
//! member as `ϑ(x) ∘ (1 + e)` with `e ~ N(0, σ² I)` truncated to `[−3σ, 3σ]`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// `sup_x ‖D²ϑ(x)‖ / ω`, taken as `√(‖H₁‖_F² + ‖H₂‖_F²)` of the component
/// Hessians; the supremum `4√3` is attained at the origin.
pub const HESSIAN_BOUND_PER_OMEGA: f64 = 6.928_203_230_275_509;

/// `sup_x ‖ϑ(x)‖ / ω` (attained at the origin).
pub const SPEED_BOUND_PER_OMEGA: f64 = 1.0;

/// `sup_x ‖Dϑ(x)‖_F / ω`, evaluated numerically on a fine grid.
pub const JACOBIAN_BOUND_PER_OMEGA: f64 = 2.12;

/// Truncation half-width of the noise in units of `σ`.
pub const TRUNCATION: f64 = 3.0;

/// `P(|Z| ≤ 3)` for a standard normal `Z`.
const MASS_WITHIN_3: f64 = 0.997_300_203_936_739_8;

pub fn currents(x: [f64; 2], omega: f64) -> [f64; 2] {
    let e = (-(x[0] * x[0] + x[1] * x[1])).exp();
    [omega * (1.0 - 2.0 * x[0] * x[0]) * e, omega * (-2.0 * x[0] * x[1]) * e]
}

/// `J[k][l] = ∂ϑ_k / ∂x_l`.
pub fn currents_jacobian(x: [f64; 2], omega: f64) -> [[f64; 2]; 2] {
    let (a, b) = (x[0], x[1]);
    let e = omega * (-(a * a + b * b)).exp();
    [
        [(-4.0 * a - 2.0 * a * (1.0 - 2.0 * a * a)) * e, -2.0 * b * (1.0 - 2.0 * a * a) * e],
        [(-2.0 * b + 4.0 * a * a * b) * e, (-2.0 * a + 4.0 * a * b * b) * e],
    ]
}

/// `ϑ(x) ∘ (1 + e)`.
pub fn perturbed_currents(x: [f64; 2], omega: f64, e: [f64; 2]) -> [f64; 2] {
    let v = currents(x, omega);
    [v[0] * (1.0 + e[0]), v[1] * (1.0 + e[1])]
}

/// One draw of `e ~ N(0, σ² I)` truncated to `[−3σ, 3σ]` (by rejection).
pub fn truncated_noise<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> [f64; 2] {
    if sigma == 0.0 {
        return [0.0, 0.0];
    }
    let mut draw = || loop {
        let z: f64 = StandardNormal.sample(&mut *rng);
        if z.abs() <= TRUNCATION {
            return sigma * z;
        }
    };
    let a = draw();
    let b = draw();
    [a, b]
}

/// Variance of the truncated noise,
/// `σ² (1 − 2·3·φ(3) / P(|Z| ≤ 3))`.
pub fn truncated_variance(sigma: f64) -> f64 {
    let phi3 = (-0.5 * TRUNCATION * TRUNCATION).exp() / (2.0 * std::f64::consts::PI).sqrt();
    sigma * sigma * (1.0 - 2.0 * TRUNCATION * phi3 / MASS_WITHIN_3)
}

/// `ϑ(x, ξ)` for a fresh ensemble member `ξ`.
pub fn ensemble_sample<R: Rng + ?Sized>(x: [f64; 2], omega: f64, sigma: f64, rng: &mut R) -> [f64; 2] {
    perturbed_currents(x, omega, truncated_noise(sigma, rng))
}

/// Support bound `Δϑ^max = 3σ · sup‖ϑ‖` of `‖ϑ(x, ξ) − E ϑ(x, ξ)‖`.
pub fn drift_deviation_bound(omega: f64, sigma: f64) -> f64 {
    TRUNCATION * sigma * SPEED_BOUND_PER_OMEGA * omega.abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn field_values() {
        assert_eq!(currents([0.0, 0.0], 0.8), [0.8, 0.0]);
        let v = currents([1.0, 0.0], 0.8);
        assert!((v[0] + 0.8 / std::f64::consts::E).abs() < 1e-15);
        assert!((v[0] + 0.2943).abs() < 1e-4 && v[1] == 0.0);
        let p = currents([0.4, 0.7], 0.8);
        let m = currents([0.4, -0.7], 0.8);
        assert_eq!(p[0], m[0]);
        assert_eq!(p[1], -m[1]);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let x = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let j = currents_jacobian(x, 0.8);
            for l in 0..2 {
                let h = 1e-6;
                let mut a = x;
                let mut b = x;
                a[l] += h;
                b[l] -= h;
                let (fa, fb) = (currents(a, 0.8), currents(b, 0.8));
                for k in 0..2 {
                    assert!(((fa[k] - fb[k]) / (2.0 * h) - j[k][l]).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn curvature_and_speed_bounds_hold_on_a_grid() {
        let h = 1e-4;
        let mut max_hess = 0.0f64;
        let mut max_speed = 0.0f64;
        let mut max_jac = 0.0f64;
        let n = 241;
        for i in 0..n {
            for k in 0..n {
                let x = [-4.0 + 8.0 * i as f64 / (n - 1) as f64, -4.0 + 8.0 * k as f64 / (n - 1) as f64];
                let v = currents(x, 1.0);
                max_speed = max_speed.max((v[0] * v[0] + v[1] * v[1]).sqrt());
                let j = currents_jacobian(x, 1.0);
                max_jac = max_jac.max(j.iter().flatten().map(|v| v * v).sum::<f64>().sqrt());
                // Hessians from differences of the analytic Jacobian
                let mut fro = 0.0;
                for l in 0..2 {
                    let mut a = x;
                    let mut b = x;
                    a[l] += h;
                    b[l] -= h;
                    let (ja, jb) = (currents_jacobian(a, 1.0), currents_jacobian(b, 1.0));
                    for kk in 0..2 {
                        for m in 0..2 {
                            let d = (ja[kk][m] - jb[kk][m]) / (2.0 * h);
                            fro += d * d;
                        }
                    }
                }
                max_hess = max_hess.max(fro.sqrt());
            }
        }
        assert!(max_hess <= HESSIAN_BOUND_PER_OMEGA + 1e-6, "{max_hess}");
        assert!(max_hess >= HESSIAN_BOUND_PER_OMEGA - 1e-3);
        assert!((max_speed - SPEED_BOUND_PER_OMEGA).abs() < 1e-12);
        assert!(max_jac <= JACOBIAN_BOUND_PER_OMEGA, "{max_jac}");
    }

    #[test]
    fn truncated_variance_matches_quadrature() {
        // Simpson integration of z² φ(z) over [−3, 3], normalized by the mass
        let n = 20_000;
        let h = 6.0 / n as f64;
        let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let (mut m0, mut m2) = (0.0, 0.0);
        for i in 0..=n {
            let z = -3.0 + i as f64 * h;
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            m0 += w * phi(z);
            m2 += w * z * z * phi(z);
        }
        m0 *= h / 3.0;
        m2 *= h / 3.0;
        assert!((m0 - MASS_WITHIN_3).abs() < 1e-12);
        assert!((truncated_variance(1.0) - m2 / m0).abs() < 1e-12);
    }

    #[test]
    fn ensemble_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = [0.3, -0.4];
        assert_eq!(ensemble_sample(x, 0.8, 0.0, &mut rng), currents(x, 0.8));
        assert_eq!(perturbed_currents(x, 0.8, [1.0, 1.0]), currents(x, 0.8).map(|v| 2.0 * v));

        let sigma = 0.3;
        let m = 100_000;
        let mean_field = currents(x, 0.8);
        let mut acc = [0.0; 2];
        for _ in 0..m {
            let e = truncated_noise(sigma, &mut rng);
            assert!(e.iter().all(|v| v.abs() <= 3.0 * sigma));
            let s = perturbed_currents(x, 0.8, e);
            acc[0] += s[0] / m as f64;
            acc[1] += s[1] / m as f64;
        }
        let var = truncated_variance(sigma);
        for k in 0..2 {
            let se = (var * mean_field[k] * mean_field[k] / m as f64).sqrt();
            assert!((acc[k] - mean_field[k]).abs() <= 3.0 * se, "{k}: {} vs {}", acc[k], mean_field[k]);
        }
        assert!((drift_deviation_bound(0.8, 0.1) - 0.24).abs() < 1e-15);
    }
}
