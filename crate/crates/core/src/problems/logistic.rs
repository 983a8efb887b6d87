//! Logistic regression under an MCP sparsity constraint.
//!
//! `f(x, k) = log(1 + exp(−b_k ⟨a_k, x⟩))` with `k` a uniformly drawn
//! training row, `g(x) = mcp(x) − τ ≤ 0`, `u ≡ 0`, no convex constraints.

use std::sync::Arc;

use rand::Rng;

use crate::error::{CostaError, Result};
use crate::problem::{NoRegularizer, NonconvexConstraint, Regularizer, SmoothFn, SmoothnessMeta, StochasticProblem};
use crate::problems::dataset::Dataset;
use crate::problems::mcp::{McpConstraint, McpParams};

/// `log(1 + e^{−m})`, stable for large `|m|`.
pub fn logistic_loss(margin: f64) -> f64 {
    if margin > 0.0 {
        (-margin).exp().ln_1p()
    } else {
        -margin + margin.exp().ln_1p()
    }
}

/// `d/dm log(1 + e^{−m}) = −1 / (1 + e^{m})`.
pub fn logistic_loss_derivative(margin: f64) -> f64 {
    if margin > 0.0 {
        let e = (-margin).exp();
        -e / (1.0 + e)
    } else {
        -1.0 / (1.0 + margin.exp())
    }
}

pub struct SparseLogistic {
    data: Arc<Dataset>,
    regularizer: NoRegularizer,
    nonconvex: Vec<Box<dyn NonconvexConstraint>>,
    meta: SmoothnessMeta,
}

impl SparseLogistic {
    pub fn new(data: Arc<Dataset>, mcp: McpParams) -> Result<Self> {
        if data.is_empty() || data.train.is_empty() {
            return Err(CostaError::InvalidInput("dataset has no training rows".into()));
        }
        let g = McpConstraint::new(mcp)?;
        // per-sample loss: L = max ‖a‖²/4, G = max ‖a‖; the smoothed MCP adds
        // curvature up to λ/√ϱ + 1/θ per coordinate
        let max_sq = data.train.iter().map(|&k| data.rows[k].norm_sq()).fold(0.0, f64::max);
        let loss_l = 0.25 * max_sq;
        let mcp_l = mcp.lambda / mcp.smoothing.sqrt() + 1.0 / mcp.theta;
        let meta = SmoothnessMeta {
            smoothness: Some(loss_l.max(mcp_l)),
            lipschitz: Some(max_sq.sqrt()),
            noise_std: Some(2.0 * max_sq.sqrt()),
            initial_gap: Some(std::f64::consts::LN_2),
            ..Default::default()
        };
        Ok(Self { data, regularizer: NoRegularizer, nonconvex: vec![Box::new(g)], meta })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    pub fn mcp(&self) -> &dyn NonconvexConstraint {
        self.nonconvex[0].as_ref()
    }

    /// Fraction of `rows` with `sign(⟨a, x⟩) = b` (a zero score counts as `+1`).
    pub fn accuracy(&self, x: &[f64], rows: &[usize]) -> f64 {
        if rows.is_empty() {
            return f64::NAN;
        }
        let hits = rows
            .iter()
            .filter(|&&k| {
                let s = self.data.rows[k].dot(x);
                let pred = if s >= 0.0 { 1.0 } else { -1.0 };
                pred == self.data.labels[k]
            })
            .count();
        hits as f64 / rows.len() as f64
    }

    pub fn train_accuracy(&self, x: &[f64]) -> f64 {
        self.accuracy(x, &self.data.train)
    }

    pub fn test_accuracy(&self, x: &[f64]) -> f64 {
        self.accuracy(x, &self.data.test)
    }

    fn margin(&self, x: &[f64], k: usize) -> f64 {
        self.data.labels[k] * self.data.rows[k].dot(x)
    }
}

impl StochasticProblem for SparseLogistic {
    /// Row index into the dataset.
    type Sample = usize;

    fn dim(&self) -> usize {
        self.data.n_features
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.data.train[rng.random_range(0..self.data.train.len())]
    }

    fn value(&self, x: &[f64], k: &usize) -> f64 {
        logistic_loss(self.margin(x, *k))
    }

    fn gradient(&self, x: &[f64], k: &usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let d = logistic_loss_derivative(self.margin(x, *k));
        self.data.rows[*k].axpy(d * self.data.labels[*k], out);
    }

    fn expected_value(&self, x: &[f64]) -> Option<f64> {
        let m = self.data.train.len() as f64;
        Some(self.data.train.iter().map(|&k| logistic_loss(self.margin(x, k))).sum::<f64>() / m)
    }

    fn expected_gradient(&self, x: &[f64], out: &mut [f64]) -> bool {
        out.iter_mut().for_each(|v| *v = 0.0);
        let m = self.data.train.len() as f64;
        for &k in &self.data.train {
            let d = logistic_loss_derivative(self.margin(x, k));
            self.data.rows[k].axpy(d * self.data.labels[k] / m, out);
        }
        true
    }

    fn regularizer(&self) -> &dyn Regularizer {
        &self.regularizer
    }

    fn convex_constraints(&self) -> &[Box<dyn SmoothFn>] {
        &[]
    }

    fn nonconvex_constraints(&self) -> &[Box<dyn NonconvexConstraint>] {
        &self.nonconvex
    }

    fn meta(&self) -> SmoothnessMeta {
        self.meta
    }
}

/// Builds the MCP-constrained logistic problem over `data`.
pub fn build_sparse_logistic(data: Arc<Dataset>, mcp: McpParams) -> Result<SparseLogistic> {
    SparseLogistic::new(data, mcp)
}
