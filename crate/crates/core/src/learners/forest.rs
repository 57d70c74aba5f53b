//! Random forest of classification trees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{check_xy, grow, ClassificationObjective, Criterion, GrowInput, Tree};
use super::Matrix;
use crate::numeric::derive_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub mtry: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub criterion: Criterion,
    /// Draw a bootstrap sample per tree. Turning this off is meant for tests.
    pub bootstrap: bool,
}

impl ForestParams {
    pub fn new(n_trees: usize, mtry: usize, max_depth: Option<usize>) -> Self {
        ForestParams {
            n_trees,
            mtry,
            max_depth,
            min_leaf: 1,
            criterion: Criterion::Gini,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub n_features: usize,
    pub params: ForestParams,
    pub seed: u64,
    pub tree_seeds: Vec<u64>,
    pub trees: Vec<Tree>,
}

/// Tree `t` is grown from its own generator seeded with
/// `derive_seed(seed, t)`, so forests with more trees extend forests with
/// fewer and results do not depend on scheduling.
pub fn fit_forest(x: &Matrix, y: &[bool], params: &ForestParams, seed: u64) -> Result<ForestModel> {
    check_xy(x, y)?;
    if params.n_trees == 0 {
        return Err(Error::InvalidArgument("a forest needs at least one tree".into()));
    }
    if params.mtry == 0 || params.mtry > x.n_cols() {
        return Err(Error::InvalidArgument(format!(
            "mtry {} outside [1, {}]",
            params.mtry,
            x.n_cols()
        )));
    }
    let n = x.n_rows();
    let contrib_all: Vec<(f64, f64)> = y.iter().map(|&l| (f64::from(u8::from(l)), 0.0)).collect();
    let obj = ClassificationObjective {
        criterion: params.criterion,
        min_leaf: params.min_leaf,
    };
    let tree_seeds: Vec<u64> = (0..params.n_trees as u64).map(|t| derive_seed(seed, t)).collect();
    let trees = tree_seeds
        .par_iter()
        .map(|&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let rows: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let contrib: Vec<(f64, f64)> = rows.iter().map(|&r| contrib_all[r]).collect();
            let input = GrowInput {
                x,
                rows: &rows,
                contrib: &contrib,
                max_depth: params.max_depth,
                mtry: Some(params.mtry),
            };
            grow(&obj, &input, Some(&mut rng))
        })
        .collect();
    Ok(ForestModel {
        n_features: x.n_cols(),
        params: *params,
        seed,
        tree_seeds,
        trees,
    })
}

impl ForestModel {
    /// Whether tree `t` votes positive for `row`: its leaf holds a positive
    /// share of at least one half.
    pub fn tree_vote(&self, t: usize, row: &[f64]) -> bool {
        self.trees[t].predict_row(row) >= 0.5
    }

    /// Fraction of the first `k` trees voting positive.
    pub fn vote_fraction(&self, row: &[f64], k: usize) -> f64 {
        let k = k.min(self.trees.len());
        let votes = (0..k).filter(|&t| self.tree_vote(t, row)).count();
        votes as f64 / k as f64
    }
}
