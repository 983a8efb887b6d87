//! Problem construction from a config, plus the per-problem reporting hooks.

use std::sync::Arc;

use costa_core::problems::dataset::{load_libsvm, synthetic_classification, Dataset};
use costa_core::problems::logistic::{build_sparse_logistic, SparseLogistic};
use costa_core::problems::synthetic::{exterior_ball_fixture, stochastic_benchmark, SyntheticQuadratic};
use costa_core::problems::trajectory::{build_trajectory_problem, straight_line_energy, TrajectoryProblem};
use costa_core::StochasticProblem;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use crate::config::{ExperimentConfig, ProblemKind};

/// Reporting hooks beyond the generic trace.
pub trait Demo: StochasticProblem {
    /// Problem-specific entries for the summary at the final point.
    fn extras(&self, _x: &[f64], _cfg: &ExperimentConfig) -> Map<String, Value> {
        Map::new()
    }

    /// `(train, test)` accuracy for classification problems.
    fn accuracy(&self, _x: &[f64]) -> Option<(f64, f64)> {
        None
    }

    /// `(agent, τ, point)` rows for planners.
    fn waypoints(&self, _x: &[f64]) -> Option<Vec<(usize, usize, [f64; 2])>> {
        None
    }
}

impl Demo for SyntheticQuadratic {}

impl Demo for SparseLogistic {
    fn extras(&self, x: &[f64], _cfg: &ExperimentConfig) -> Map<String, Value> {
        let nnz = x.iter().filter(|v| v.abs() > 1e-6).count();
        let mut m = Map::new();
        m.insert("train_accuracy".into(), json!(self.train_accuracy(x)));
        m.insert("test_accuracy".into(), json!(finite_or_null(self.test_accuracy(x))));
        m.insert("nonzeros".into(), json!(nnz));
        m.insert("mcp_constraint".into(), json!(self.mcp().value(x)));
        m
    }

    fn accuracy(&self, x: &[f64]) -> Option<(f64, f64)> {
        Some((self.train_accuracy(x), self.test_accuracy(x)))
    }
}

impl Demo for TrajectoryProblem {
    fn extras(&self, x: &[f64], cfg: &ExperimentConfig) -> Map<String, Value> {
        let samples = cfg.trajectory.as_ref().map_or(1000, |t| t.energy_samples).max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let baseline = straight_line_energy(&self.env, samples, &mut rng).ok();
        let energy = self.expected_value(x);
        let mut m = Map::new();
        m.insert("energy".into(), json!(energy));
        m.insert("straight_line_energy".into(), json!(baseline));
        m.insert(
            "energy_ratio".into(),
            json!(energy.zip(baseline).map(|(e, b)| e / b)),
        );
        m.insert("goal_error".into(), json!(self.goal_error(x)));
        m
    }

    fn waypoints(&self, x: &[f64]) -> Option<Vec<(usize, usize, [f64; 2])>> {
        let env = &self.env;
        let mut rows = Vec::new();
        for i in 0..env.n_agents() {
            for tau in 0..=env.horizon {
                rows.push((i, tau, env.point(x, i, tau)));
            }
        }
        Some(rows)
    }
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

pub enum Built {
    Quadratic(SyntheticQuadratic),
    Logistic(SparseLogistic),
    Trajectory(TrajectoryProblem),
}

/// Calls `$body` with `$p` bound to the concrete problem.
macro_rules! with_demo {
    ($built:expr, $p:ident => $body:expr) => {
        match $built {
            $crate::demo::Built::Quadratic($p) => $body,
            $crate::demo::Built::Logistic($p) => $body,
            $crate::demo::Built::Trajectory($p) => $body,
        }
    };
}
pub(crate) use with_demo;

/// Builds the configured problem and its default starting point.
pub fn build(cfg: &ExperimentConfig) -> Result<(Built, Vec<f64>), String> {
    let err = |e: costa_core::CostaError| e.to_string();
    Ok(match cfg.problem {
        ProblemKind::ExteriorBall => {
            let s = cfg.exterior_ball.as_ref().ok_or("missing [exterior_ball]")?;
            (Built::Quadratic(exterior_ball_fixture(s.target)), vec![0.0, 1.0])
        }
        ProblemKind::SyntheticQuadratic => {
            let s = cfg.synthetic_quadratic.as_ref().ok_or("missing [synthetic_quadratic]")?;
            if !(s.noise >= 0.0) {
                return Err("synthetic_quadratic noise must be >= 0".into());
            }
            let p = stochastic_benchmark(s.noise);
            let n = p.dim();
            (Built::Quadratic(p), vec![0.0; n])
        }
        ProblemKind::SparseLogistic => {
            let s = cfg.sparse_logistic.as_ref().ok_or("missing [sparse_logistic]")?;
            let mut data: Dataset = match (&s.libsvm, &s.synthetic) {
                (Some(path), _) => {
                    let d = load_libsvm(path, s.label_rule, s.n_features).map_err(err)?;
                    match &s.test_libsvm {
                        Some(t) => {
                            let test = load_libsvm(t, s.label_rule, Some(d.n_features)).map_err(err)?;
                            d.with_test_set(test).map_err(err)?
                        }
                        None => d.split(s.test_fraction, s.split_seed).map_err(err)?,
                    }
                }
                (None, Some(syn)) => {
                    let (d, _) = synthetic_classification(&syn.spec(), syn.seed).map_err(err)?;
                    d.split(s.test_fraction, s.split_seed).map_err(err)?
                }
                (None, None) => return Err("sparse_logistic needs a dataset".into()),
            };
            if s.normalize {
                data.normalize_max_abs();
            }
            let n = data.n_features;
            let p = build_sparse_logistic(Arc::new(data), s.mcp).map_err(err)?;
            (Built::Logistic(p), vec![0.0; n])
        }
        ProblemKind::Trajectory => {
            let s = cfg.trajectory.as_ref().ok_or("missing [trajectory]")?;
            let p = build_trajectory_problem(s.environment()?).map_err(err)?;
            let x1 = p.straight_line();
            (Built::Trajectory(p), x1)
        }
    })
}
