//! Penalized logistic regression on sparse rows.
//!
//! The objective is the mean logistic loss plus `l2/2 * |w|^2` (the bias is
//! not penalized). It is minimized with full-batch L-BFGS and an Armijo
//! backtracking line search, so the training loss never increases from one
//! epoch to the next. One epoch is one L-BFGS iteration over the whole
//! training part. Because the loss is a mean, duplicating every training row
//! leaves the objective unchanged; the fitted model then agrees up to
//! floating-point rounding in the summation order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::features::{featurize, SparseVector, DEFAULT_DIM};
use super::split::{stratified_split, SplitSpec};
use super::{ScorerModel, TrainMetadata, SplitSizes};
use crate::data::CommentRecord;
use crate::evaluation::ConfusionCounts;
use crate::numeric::{sigmoid, softplus};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub epoch_grid: Vec<usize>,
    pub l2: f64,
    pub dim: usize,
    /// L-BFGS history length.
    pub memory: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epoch_grid: vec![5, 10, 20, 40],
            l2: 1e-4,
            dim: DEFAULT_DIM,
            memory: 10,
        }
    }
}

/// Mean logistic loss with L2 penalty and its gradient. `params` holds the
/// weights followed by the bias; row indices must be below `params.len() - 1`.
pub fn loss_and_gradient(rows: &[SparseVector], y: &[f64], params: &[f64], l2: f64) -> (f64, Vec<f64>) {
    let d = params.len() - 1;
    let bias = params[d];
    let n = rows.len() as f64;
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    for (row, &label) in rows.iter().zip(y) {
        let m = row.dot_dense(&params[..d]) + bias;
        loss += softplus(m) - label * m;
        let r = (sigmoid(m) - label) / n;
        for (&i, &v) in row.indices.iter().zip(&row.values) {
            grad[i as usize] += r * v;
        }
        grad[d] += r;
    }
    loss /= n;
    let mut penalty = 0.0;
    for (g, &w) in grad[..d].iter_mut().zip(&params[..d]) {
        penalty += w * w;
        *g += l2 * w;
    }
    (loss + 0.5 * l2 * penalty, grad)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Parameters after each requested epoch count, plus the loss after every
/// epoch (index 0 is the starting loss).
pub struct FitTrace {
    pub snapshots: BTreeMap<usize, Vec<f64>>,
    pub loss: Vec<f64>,
}

/// Runs L-BFGS from zero for `max(snapshot_at)` epochs.
pub fn fit_logistic(rows: &[SparseVector], y: &[f64], dim: usize, l2: f64, memory: usize, snapshot_at: &[usize]) -> FitTrace {
    let max_epochs = snapshot_at.iter().copied().max().unwrap_or(0);
    let mut x = vec![0.0; dim + 1];
    let (mut f, mut g) = loss_and_gradient(rows, y, &x, l2);
    let mut history: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
    let mut trace = FitTrace {
        snapshots: BTreeMap::new(),
        loss: vec![f],
    };
    if snapshot_at.contains(&0) {
        trace.snapshots.insert(0, x.clone());
    }
    let mut stalled = false;
    for epoch in 1..=max_epochs {
        if !stalled && dot(&g, &g).sqrt() > 1e-12 {
            // Two-loop recursion.
            let mut q = g.clone();
            let mut alphas = Vec::with_capacity(history.len());
            for (s, yv, rho) in history.iter().rev() {
                let a = rho * dot(s, &q);
                for (qi, yi) in q.iter_mut().zip(yv) {
                    *qi -= a * yi;
                }
                alphas.push(a);
            }
            let gamma = match history.last() {
                Some((s, yv, _)) => dot(s, yv) / dot(yv, yv),
                None => 1.0 / dot(&g, &g).sqrt().max(1.0),
            };
            for qi in &mut q {
                *qi *= gamma;
            }
            for ((s, yv, rho), a) in history.iter().zip(alphas.iter().rev()) {
                let b = rho * dot(yv, &q);
                for (qi, si) in q.iter_mut().zip(s) {
                    *qi += (a - b) * si;
                }
            }
            let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
            let mut slope = dot(&g, &dir);
            if slope >= 0.0 {
                dir = g.iter().map(|v| -v).collect();
                slope = -dot(&g, &g);
                history.clear();
            }

            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..60 {
                let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
                let (ft, gt) = loss_and_gradient(rows, y, &trial, l2);
                if ft <= f + 1e-4 * step * slope {
                    accepted = Some((trial, ft, gt));
                    break;
                }
                step *= 0.5;
            }
            match accepted {
                Some((nx, nf, ng)) => {
                    let s: Vec<f64> = nx.iter().zip(&x).map(|(a, b)| a - b).collect();
                    let yv: Vec<f64> = ng.iter().zip(&g).map(|(a, b)| a - b).collect();
                    let sy = dot(&s, &yv);
                    if sy > 1e-12 {
                        if history.len() == memory.max(1) {
                            history.remove(0);
                        }
                        history.push((s, yv, 1.0 / sy));
                    }
                    x = nx;
                    f = nf;
                    g = ng;
                }
                None => stalled = true,
            }
        }
        trace.loss.push(f);
        if snapshot_at.contains(&epoch) {
            trace.snapshots.insert(epoch, x.clone());
        }
    }
    trace
}

/// Rows restricted to the features seen in `train`, renumbered densely.
/// Unseen features keep a zero weight under the L2 penalty, so dropping them
/// changes nothing.
struct Compact {
    global: Vec<u32>,
    local: BTreeMap<u32, u32>,
}

impl Compact {
    fn new<'a>(rows: impl Iterator<Item = &'a SparseVector>) -> Self {
        let mut local = BTreeMap::new();
        for r in rows {
            for &i in &r.indices {
                local.insert(i, 0);
            }
        }
        let global: Vec<u32> = local.keys().copied().collect();
        for (k, v) in local.values_mut().enumerate() {
            *v = k as u32;
        }
        Compact { global, local }
    }

    fn map(&self, row: &SparseVector) -> SparseVector {
        let mut out = SparseVector::default();
        for (&i, &v) in row.indices.iter().zip(&row.values) {
            if let Some(&j) = self.local.get(&i) {
                out.indices.push(j);
                out.values.push(v);
            }
        }
        out
    }
}

fn f1_at_half(rows: &[SparseVector], y: &[bool], params: &[f64]) -> Option<f64> {
    let d = params.len() - 1;
    let pred: Vec<bool> = rows
        .iter()
        .map(|r| sigmoid(r.dot_dense(&params[..d]) + params[d]) > 0.5)
        .collect();
    ConfusionCounts::from_pairs(&pred, y).f1()
}

/// Trains the reference scorer on the labeled comments. Unlabeled comments
/// are ignored. Comments are ordered by id before splitting, so input order
/// does not matter.
pub fn train_reference_scorer(comments: &[CommentRecord], split: &SplitSpec, options: &TrainOptions) -> Result<ScorerModel> {
    if options.epoch_grid.is_empty() {
        return Err(Error::InvalidArgument("epoch grid is empty".into()));
    }
    if options.dim == 0 || options.dim > u32::MAX as usize {
        return Err(Error::InvalidArgument("feature dimension out of range".into()));
    }
    let mut labeled: Vec<&CommentRecord> = comments.iter().filter(|c| c.label.is_labeled()).collect();
    labeled.sort_by(|a, b| a.comment_id.cmp(&b.comment_id));
    let labels: Vec<bool> = labeled.iter().map(|c| c.label.code() == Some(1)).collect();
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos < 2 || n_neg < 2 {
        return Err(Error::InsufficientData(format!(
            "scorer training needs at least 2 labeled comments per class, found {n_pos} relevant and {n_neg} not relevant"
        )));
    }

    let features: Vec<SparseVector> = labeled.iter().map(|c| featurize(&c.text, options.dim)).collect();
    let parts = stratified_split(&labels, split)?;
    let compact = Compact::new(parts.train.iter().map(|&i| &features[i]));
    let select = |idx: &[usize]| -> (Vec<SparseVector>, Vec<bool>) {
        (
            idx.iter().map(|&i| compact.map(&features[i])).collect(),
            idx.iter().map(|&i| labels[i]).collect(),
        )
    };
    let (train_x, train_y) = select(&parts.train);
    let (val_x, val_y) = select(&parts.validation);
    let (test_x, test_y) = select(&parts.test);
    let y: Vec<f64> = train_y.iter().map(|&l| f64::from(u8::from(l))).collect();

    let mut grid = options.epoch_grid.clone();
    grid.sort_unstable();
    grid.dedup();
    let trace = fit_logistic(&train_x, &y, compact.global.len(), options.l2, options.memory, &grid);

    let mut by_epoch = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, Option<f64>)> = None;
    for &e in &grid {
        let f1 = f1_at_half(&val_x, &val_y, &trace.snapshots[&e]);
        by_epoch.push((e, f1));
        let better = match best {
            None => true,
            Some((_, bf)) => f1.unwrap_or(0.0) > bf.unwrap_or(0.0),
        };
        if better {
            best = Some((e, f1));
        }
    }
    let (epochs, validation_f1) = best.expect("grid is nonempty");
    let params = &trace.snapshots[&epochs];
    let test_f1 = f1_at_half(&test_x, &test_y, params);

    let d = compact.global.len();
    let weights: Vec<(u32, f64)> = compact
        .global
        .iter()
        .zip(&params[..d])
        .filter(|(_, &w)| w != 0.0)
        .map(|(&i, &w)| (i, w))
        .collect();

    log::info!(
        "scorer: {epochs} epochs selected, validation F1 {:?}, test F1 {:?}",
        validation_f1,
        test_f1
    );
    Ok(ScorerModel::new(
        options.dim,
        weights,
        params[d],
        TrainMetadata {
            epochs,
            validation_f1,
            test_f1,
            seed: split.seed,
            split_sizes: SplitSizes {
                train: parts.train.len(),
                validation: parts.validation.len(),
                test: parts.test.len(),
            },
            epoch_grid: grid,
            validation_f1_by_epoch: by_epoch,
            l2: options.l2,
            train_loss: trace.loss[..=epochs].to_vec(),
        },
    ))
}
