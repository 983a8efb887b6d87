//! Validator suite over a problem: runs the surrogate checks, the schedule
//! hypothesis checks and Slater-margin probes at a set of anchors and
//! collects one outcome per (check, constraint, anchor).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cq::{estimate_rho, slater_margin};
use crate::error::{CostaError, Result};
use crate::linalg::dist;
use crate::problem::{SmoothFn, StochasticProblem};
use crate::schedule::{validate_params, CheckStatus, ScheduleParams};
use crate::surrogate::{
    build_proximal_surrogate, validate_majorization, validate_strong_convexity, validate_tangent_match,
    ConstraintSurrogate, SurrogateKind,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    Tangent,
    Majorization,
    Convexity,
    Params,
    Slater,
}

impl Check {
    pub const ALL: [Check; 5] = [Check::Tangent, Check::Majorization, Check::Convexity, Check::Params, Check::Slater];
}

/// Deliberate defects for exercising the validators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Defect {
    /// Subtracts `1000‖x − x_t‖²` from the first constraint surrogate.
    Majorization,
    /// Tilts the first constraint surrogate's gradient without changing its value.
    Tangent,
    /// Builds the objective model with a quarter of the claimed modulus.
    Convexity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationOptions {
    pub checks: Vec<Check>,
    /// Samples per majorization / convexity check.
    pub samples: usize,
    /// Half-width of the sampling box around each anchor.
    pub radius: f64,
    pub fd_step: f64,
    /// Activity threshold for the Slater probe.
    pub omega: f64,
    pub seed: u64,
    pub defect: Option<Defect>,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            checks: Check::ALL.to_vec(),
            samples: 10_000,
            radius: 1.0,
            fd_step: 1e-3,
            omega: 0.1,
            seed: 0,
            defect: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub check: Check,
    /// Constraint or model label.
    pub label: String,
    /// Index of the anchor the check ran at.
    pub anchor: usize,
    pub status: CheckStatus,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub outcomes: Vec<Outcome>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.status != CheckStatus::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Outcome> {
        self.outcomes.iter().filter(|o| o.status == CheckStatus::Fail)
    }

    pub fn count(&self, status: CheckStatus) -> usize {
        self.outcomes.iter().filter(|o| o.status == status).count()
    }
}

/// `inner(x) − κ‖x − a‖²`
struct Undercut {
    inner: ConstraintSurrogate,
    kappa: f64,
}

impl SmoothFn for Undercut {
    fn value(&self, x: &[f64]) -> f64 {
        let d = dist(x, &self.inner.anchor);
        self.inner.value(x) - self.kappa * d * d
    }

    fn add_gradient(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        self.inner.add_gradient(x, scale, out);
        for ((o, xi), ai) in out.iter_mut().zip(x).zip(&self.inner.anchor) {
            *o -= scale * 2.0 * self.kappa * (xi - ai);
        }
    }

    fn label(&self) -> String {
        self.inner.label()
    }
}

/// Value of `inner`, gradient off by `tilt` in coordinate 0.
struct Tilted {
    inner: ConstraintSurrogate,
    tilt: f64,
}

impl SmoothFn for Tilted {
    fn value(&self, x: &[f64]) -> f64 {
        self.inner.value(x)
    }

    fn add_gradient(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        self.inner.add_gradient(x, scale, out);
        out[0] += scale * self.tilt;
    }

    fn label(&self) -> String {
        self.inner.label()
    }
}

fn inject(s: ConstraintSurrogate, defect: Defect) -> ConstraintSurrogate {
    let anchor = s.anchor.clone();
    let kind = s.kind;
    match defect {
        Defect::Majorization => ConstraintSurrogate::new(&anchor, kind, Box::new(Undercut { inner: s, kappa: 1e3 })),
        Defect::Tangent => ConstraintSurrogate::new(&anchor, kind, Box::new(Tilted { inner: s, tilt: 1e-2 })),
        Defect::Convexity => s,
    }
}

fn status(ok: bool) -> CheckStatus {
    if ok {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    }
}

/// Runs the selected checks at every anchor. `params` feeds the schedule
/// check and `mu` the objective-model convexity check.
pub fn validate_problem<P: StochasticProblem>(
    problem: &P,
    anchors: &[Vec<f64>],
    mu: f64,
    params: Option<&ScheduleParams>,
    opts: &ValidationOptions,
) -> Result<ValidationReport> {
    if !(opts.radius > 0.0) || !(opts.fd_step > 0.0) {
        return Err(CostaError::InvalidConfig("radius and fd step must be > 0".into()));
    }
    let mut report = ValidationReport::default();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let n = problem.dim();
    let wants = |c: Check| opts.checks.contains(&c);
    let meta = problem.meta();

    if wants(Check::Params) {
        match params {
            Some(p) => {
                for c in validate_params(&meta, p, mu).checks {
                    report.outcomes.push(Outcome {
                        check: Check::Params,
                        label: c.name,
                        anchor: 0,
                        status: c.status,
                        detail: c.detail,
                    });
                }
            }
            None => report.outcomes.push(Outcome {
                check: Check::Params,
                label: "schedule".into(),
                anchor: 0,
                status: CheckStatus::Skipped,
                detail: "no schedule parameters given".into(),
            }),
        }
    }

    for (ai, anchor) in anchors.iter().enumerate() {
        crate::error::check_dim(n, anchor.len())?;
        let mut surrogates = Vec::new();
        for (j, g) in problem.nonconvex_constraints().iter().enumerate() {
            let s = g.surrogate(anchor)?;
            surrogates.push(match opts.defect {
                Some(d) if j == 0 => inject(s, d),
                _ => s,
            });
        }
        let radius = opts.radius;
        let around = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            anchor.iter().map(|a| a + rng.random_range(-radius..=radius)).collect()
        };

        for (g, s) in problem.nonconvex_constraints().iter().zip(&surrogates) {
            if wants(Check::Tangent) {
                let t = validate_tangent_match(s, &g.gradient(anchor), anchor, opts.fd_step)?;
                report.outcomes.push(Outcome {
                    check: Check::Tangent,
                    label: g.label(),
                    anchor: ai,
                    status: status(t.passed),
                    detail: format!(
                        "fd deviation {:.3e}, oracle deviation {:.3e}, tolerance {:.1e}",
                        t.fd_deviation, t.oracle_deviation, t.tolerance
                    ),
                });
            }
            if wants(Check::Majorization) {
                let m = validate_majorization(s, g.as_ref(), || around(&mut rng), opts.samples)?;
                report.outcomes.push(Outcome {
                    check: Check::Majorization,
                    label: g.label(),
                    anchor: ai,
                    status: status(m.passed),
                    detail: format!("min gap {:.3e}, anchor gap {:.3e}, {} samples", m.min_gap, m.anchor_gap, m.samples),
                });
            }
            if wants(Check::Convexity) && s.kind == SurrogateKind::ConvexComposite {
                let c = validate_strong_convexity(s, 0.0, || (around(&mut rng), around(&mut rng)), opts.samples)?;
                report.outcomes.push(Outcome {
                    check: Check::Convexity,
                    label: s.label(),
                    anchor: ai,
                    status: status(c.passed),
                    detail: format!("min slack {:.3e} over {} pairs (modulus 0)", c.min_slack, c.pairs),
                });
            }
        }

        if wants(Check::Convexity) {
            let sample = problem.draw(&mut rng);
            let mut grad = vec![0.0; n];
            problem.gradient(anchor, &sample, &mut grad);
            let value = problem.value(anchor, &sample);
            let built_mu = if opts.defect == Some(Defect::Convexity) { 0.25 * mu } else { mu };
            let model = build_proximal_surrogate(anchor, &grad, value, built_mu)?;
            let c = validate_strong_convexity(&model, mu, || (around(&mut rng), around(&mut rng)), opts.samples)?;
            report.outcomes.push(Outcome {
                check: Check::Convexity,
                label: "objective-model".into(),
                anchor: ai,
                status: status(c.passed),
                detail: format!("min slack {:.3e} over {} pairs (modulus {mu})", c.min_slack, c.pairs),
            });
        }

        if wants(Check::Slater) {
            let outcome = match meta.smoothness {
                None => (CheckStatus::Skipped, "metadata required: L".to_string()),
                Some(l) => {
                    let m = estimate_rho(problem, anchor, opts.omega, 1.0)?;
                    if m.is_unconstrained() {
                        (CheckStatus::Skipped, format!("no constraint within omega = {} of activity", opts.omega))
                    } else {
                        let r = slater_margin(problem, anchor, &surrogates, &m, Some(l), meta.lipschitz)?;
                        let worst = r.surrogate_margins.iter().chain(&r.convex_margins).cloned().fold(f64::MIN, f64::max);
                        let omega_note = match r.omega_ok {
                            Some(false) => format!(
                                "; omega precondition not met ({} < {:.3e})",
                                opts.omega,
                                r.omega_required.unwrap_or(f64::NAN)
                            ),
                            _ => String::new(),
                        };
                        (
                            status(r.passed),
                            format!(
                                "rho {:.3e}, worst margin {worst:.3e} vs threshold {:.3e}{omega_note}",
                                m.rho_unit, r.threshold
                            ),
                        )
                    }
                }
            };
            report.outcomes.push(Outcome {
                check: Check::Slater,
                label: "constraints".into(),
                anchor: ai,
                status: outcome.0,
                detail: outcome.1,
            });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::synthetic::exterior_ball_fixture;

    fn opts(defect: Option<Defect>) -> ValidationOptions {
        ValidationOptions { samples: 2000, defect, ..Default::default() }
    }

    #[test]
    fn clean_fixture_passes_and_defects_are_caught() {
        let p = exterior_ball_fixture([0.2, 0.0]);
        let anchors = vec![vec![0.0, 1.0], vec![1.2, -0.4]];
        let params = ScheduleParams::new(1.0, 8.0, 1.0).unwrap();
        let clean = validate_problem(&p, &anchors, 1.0, None, &opts(None)).unwrap();
        assert!(clean.passed(), "{:?}", clean.failures().collect::<Vec<_>>());
        assert!(clean.count(CheckStatus::Pass) >= 6);

        for (defect, check) in
            [(Defect::Majorization, Check::Majorization), (Defect::Tangent, Check::Tangent), (Defect::Convexity, Check::Convexity)]
        {
            let r = validate_problem(&p, &anchors, 1.0, Some(&params), &opts(Some(defect))).unwrap();
            assert!(!r.passed());
            assert!(r.failures().any(|o| o.check == check), "{defect:?}");
        }
    }

    #[test]
    fn empty_check_list_reports_nothing() {
        let p = exterior_ball_fixture([0.2, 0.0]);
        let o = ValidationOptions { checks: Vec::new(), ..Default::default() };
        let r = validate_problem(&p, &[vec![0.0, 1.0]], 1.0, None, &o).unwrap();
        assert!(r.outcomes.is_empty() && r.passed());
    }
}
