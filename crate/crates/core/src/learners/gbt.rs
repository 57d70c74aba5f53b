//! Second-order gradient boosting with logistic loss.
//!
//! Each round fits a regression tree to per-row gradients `g = σ(m) - y` and
//! hessians `h = σ(m)(1 - σ(m))` of the current margins `m`. A leaf holding
//! sums `G`, `H` gets weight `-G / (H + λ)`; a split is worth
//! `½[G_L²/(H_L+λ) + G_R²/(H_R+λ) - (G_L+G_R)²/(H_L+H_R+λ)] - γ` and is only
//! taken when that is positive.

use serde::{Deserialize, Serialize};

use super::tree::{check_xy, grow, Acc, GrowInput, Objective, Tree};
use super::Matrix;
use crate::numeric::{logit, sigmoid, softplus};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub n_rounds: usize,
    pub eta: f64,
    pub max_depth: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub min_child_weight: f64,
}

impl GbtParams {
    pub fn new(n_rounds: usize, eta: f64, max_depth: usize) -> Self {
        GbtParams {
            n_rounds,
            eta,
            max_depth,
            lambda: 1.0,
            gamma: 0.0,
            min_child_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub n_features: usize,
    pub params: GbtParams,
    pub base_margin: f64,
    pub trees: Vec<Tree>,
    /// Mean training log-loss before the first round and after each round.
    pub train_loss: Vec<f64>,
}

impl GbtModel {
    /// `base + η · Σ` outputs of the first `k` trees.
    pub fn margin(&self, row: &[f64], k: usize) -> f64 {
        let sum: f64 = self.trees.iter().take(k).map(|t| t.predict_row(row)).sum();
        self.base_margin + self.params.eta * sum
    }
}

/// Gradient and hessian of the logistic loss `softplus(m) - y m` in `m`.
pub fn grad_hess(margin: f64, y: bool) -> (f64, f64) {
    let p = sigmoid(margin);
    (p - f64::from(u8::from(y)), p * (1.0 - p))
}

pub fn log_loss(margin: f64, y: bool) -> f64 {
    softplus(margin) - f64::from(u8::from(y)) * margin
}

struct BoostObjective {
    lambda: f64,
    gamma: f64,
    min_child_weight: f64,
}

impl BoostObjective {
    fn score(&self, a: Acc) -> f64 {
        a.a * a.a / (a.b + self.lambda)
    }
}

impl Objective for BoostObjective {
    fn gain(&self, parent: Acc, left: Acc, right: Acc) -> f64 {
        0.5 * (self.score(left) + self.score(right) - self.score(parent)) - self.gamma
    }

    fn admissible(&self, left: Acc, right: Acc) -> bool {
        left.n >= 1.0 && right.n >= 1.0 && left.b >= self.min_child_weight && right.b >= self.min_child_weight
    }

    fn leaf_value(&self, acc: Acc) -> f64 {
        if acc.n == 0.0 {
            return 0.0;
        }
        -acc.a / (acc.b + self.lambda)
    }

    fn is_terminal(&self, _acc: Acc) -> bool {
        false
    }
}

pub fn fit_gbt(x: &Matrix, y: &[bool], params: &GbtParams) -> Result<GbtModel> {
    check_xy(x, y)?;
    if params.n_rounds < 1 {
        return Err(Error::InvalidArgument("n_rounds must be at least 1".into()));
    }
    if !(params.lambda >= 0.0 && params.gamma >= 0.0 && params.eta > 0.0 && params.min_child_weight >= 0.0) {
        return Err(Error::InvalidArgument("gbt needs eta > 0 and nonnegative lambda, gamma, min_child_weight".into()));
    }
    let n = x.n_rows();
    let prevalence = y.iter().filter(|&&l| l).count() as f64 / n as f64;
    let base_margin = logit(prevalence.clamp(1e-6, 1.0 - 1e-6));
    let rows: Vec<usize> = (0..n).collect();
    let obj = BoostObjective {
        lambda: params.lambda,
        gamma: params.gamma,
        min_child_weight: params.min_child_weight,
    };

    let mut margins = vec![base_margin; n];
    let mean_loss = |m: &[f64]| m.iter().zip(y).map(|(&m, &l)| log_loss(m, l)).sum::<f64>() / n as f64;
    let mut train_loss = vec![mean_loss(&margins)];
    let mut trees = Vec::with_capacity(params.n_rounds);
    for _ in 0..params.n_rounds {
        let contrib: Vec<(f64, f64)> = margins.iter().zip(y).map(|(&m, &l)| grad_hess(m, l)).collect();
        let input = GrowInput {
            x,
            rows: &rows,
            contrib: &contrib,
            max_depth: Some(params.max_depth),
            mtry: None,
        };
        let tree = grow(&obj, &input, None);
        for (i, m) in margins.iter_mut().enumerate() {
            *m += params.eta * tree.predict_row(x.row(i));
        }
        train_loss.push(mean_loss(&margins));
        trees.push(tree);
    }
    Ok(GbtModel {
        n_features: x.n_cols(),
        params: *params,
        base_margin,
        trees,
        train_loss,
    })
}
