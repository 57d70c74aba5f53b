//! Stratified k-fold grid search with F1 selection.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ForestParams, GbtParams, LearnerKind, LearnerParams, Matrix, Model};
use crate::data::io::create;
use crate::evaluation::ConfusionCounts;
use crate::numeric::derive_seed;
use crate::{Error, Result};

/// Features tried per forest split, relative to the feature count `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MtrySpec {
    /// `floor(sqrt(d))`
    Sqrt,
    /// `d`
    All,
    /// `floor(d / 3)`
    Third,
    Fixed(usize),
}

impl MtrySpec {
    pub fn resolve(self, d: usize) -> usize {
        let m = match self {
            MtrySpec::Sqrt => (d as f64).sqrt().floor() as usize,
            MtrySpec::All => d,
            MtrySpec::Third => d / 3,
            MtrySpec::Fixed(m) => m,
        };
        m.clamp(1, d.max(1))
    }
}

/// Value lists per hyperparameter. Points are enumerated with the first
/// listed parameter varying slowest, then resolved against the feature count
/// and de-duplicated keeping the first occurrence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamGrid {
    Forest {
        n_trees: Vec<usize>,
        mtry: Vec<MtrySpec>,
        max_depth: Vec<Option<usize>>,
        min_leaf: usize,
    },
    Gbt {
        n_rounds: Vec<usize>,
        eta: Vec<f64>,
        max_depth: Vec<usize>,
        lambda: Vec<f64>,
        gamma: Vec<f64>,
        min_child_weight: f64,
    },
}

impl ParamGrid {
    pub fn default_forest() -> Self {
        ParamGrid::Forest {
            n_trees: vec![100, 300],
            mtry: vec![MtrySpec::Sqrt, MtrySpec::All, MtrySpec::Third],
            max_depth: vec![None, Some(8)],
            min_leaf: 1,
        }
    }

    pub fn default_gbt() -> Self {
        ParamGrid::Gbt {
            n_rounds: vec![100, 300],
            eta: vec![0.1, 0.3],
            max_depth: vec![3, 5],
            lambda: vec![1.0],
            gamma: vec![0.0],
            min_child_weight: 1.0,
        }
    }

    pub fn default_for(kind: LearnerKind) -> Self {
        match kind {
            LearnerKind::Forest => Self::default_forest(),
            LearnerKind::Gbt => Self::default_gbt(),
        }
    }

    pub fn kind(&self) -> LearnerKind {
        match self {
            ParamGrid::Forest { .. } => LearnerKind::Forest,
            ParamGrid::Gbt { .. } => LearnerKind::Gbt,
        }
    }

    pub fn points(&self, n_features: usize) -> Vec<LearnerParams> {
        let mut out: Vec<LearnerParams> = Vec::new();
        let mut push = |p: LearnerParams| {
            if !out.contains(&p) {
                out.push(p);
            }
        };
        match self {
            ParamGrid::Forest {
                n_trees,
                mtry,
                max_depth,
                min_leaf,
            } => {
                for &t in n_trees {
                    for &m in mtry {
                        for &d in max_depth {
                            let mut p = ForestParams::new(t, m.resolve(n_features), d);
                            p.min_leaf = *min_leaf;
                            push(LearnerParams::Forest(p));
                        }
                    }
                }
            }
            ParamGrid::Gbt {
                n_rounds,
                eta,
                max_depth,
                lambda,
                gamma,
                min_child_weight,
            } => {
                for &r in n_rounds {
                    for &e in eta {
                        for &d in max_depth {
                            for &l in lambda {
                                for &g in gamma {
                                    push(LearnerParams::Gbt(GbtParams {
                                        n_rounds: r,
                                        eta: e,
                                        max_depth: d,
                                        lambda: l,
                                        gamma: g,
                                        min_child_weight: *min_child_weight,
                                    }));
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchSpec {
    pub grid: ParamGrid,
    pub k: usize,
    pub seed: u64,
}

impl GridSearchSpec {
    pub fn new(grid: ParamGrid, seed: u64) -> Self {
        GridSearchSpec { grid, k: 5, seed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub grid_point: usize,
    pub fold: usize,
    pub counts: ConfusionCounts,
    /// Absent when undefined; counted as 0 in the mean.
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub points: Vec<LearnerParams>,
    pub mean_f1: Vec<f64>,
    pub best: usize,
    pub best_params: LearnerParams,
    pub table: Vec<CvRow>,
    pub warnings: Vec<String>,
}

/// Fold index of every row. Each class is shuffled with its own seed and
/// dealt round-robin, so fold sizes per class differ by at most one.
pub fn stratified_folds(y: &[bool], k: usize, seed: u64) -> Vec<usize> {
    let mut fold = vec![0; y.len()];
    for (c, class) in [false, true].into_iter().enumerate() {
        let mut rows: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        rows.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, c as u64)));
        for (pos, &r) in rows.iter().enumerate() {
            fold[r] = pos % k;
        }
    }
    fold
}

/// Member count of a point and the point with that count cleared, used to
/// share one fit across points that differ only in tree/round count.
fn family(p: &LearnerParams) -> (LearnerParams, usize) {
    match *p {
        LearnerParams::Forest(f) => (LearnerParams::Forest(ForestParams { n_trees: 0, ..f }), f.n_trees),
        LearnerParams::Gbt(g) => (LearnerParams::Gbt(GbtParams { n_rounds: 0, ..g }), g.n_rounds),
    }
}

fn with_count(p: &LearnerParams, count: usize) -> LearnerParams {
    match *p {
        LearnerParams::Forest(f) => LearnerParams::Forest(ForestParams { n_trees: count, ..f }),
        LearnerParams::Gbt(g) => LearnerParams::Gbt(GbtParams { n_rounds: count, ..g }),
    }
}

/// Scores every grid point by mean validation F1 over `spec.k` stratified
/// folds. The best point has the highest mean; ties go to the earlier point.
///
/// A forest with `n` trees is the first `n` trees of a larger forest with the
/// same seed, and boosting is sequential, so points differing only in their
/// tree or round count are evaluated from one fit.
pub fn grid_search_cv(x: &Matrix, y: &[bool], spec: &GridSearchSpec) -> Result<GridSearchResult> {
    if spec.k < 2 {
        return Err(Error::InvalidArgument("k must be at least 2".into()));
    }
    if y.len() != x.n_rows() {
        return Err(Error::InvalidArgument("label count differs from row count".into()));
    }
    if !(y.iter().any(|&l| l) && y.iter().any(|&l| !l)) {
        return Err(Error::InsufficientData("grid search needs both classes".into()));
    }
    let points = spec.grid.points(x.n_cols());
    if points.is_empty() {
        return Err(Error::InvalidArgument("parameter grid is empty".into()));
    }

    let mut families: Vec<(LearnerParams, Vec<usize>)> = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let (key, _) = family(p);
        match families.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push(i),
            None => families.push((key, vec![i])),
        }
    }

    let folds = stratified_folds(y, spec.k, spec.seed);
    let mut table = Vec::with_capacity(points.len() * spec.k);
    let mut warnings = Vec::new();
    for fold in 0..spec.k {
        let train: Vec<usize> = (0..y.len()).filter(|&i| folds[i] != fold).collect();
        let valid: Vec<usize> = (0..y.len()).filter(|&i| folds[i] == fold).collect();
        let ty: Vec<bool> = train.iter().map(|&i| y[i]).collect();
        let vy: Vec<bool> = valid.iter().map(|&i| y[i]).collect();
        let lost_class = !(ty.iter().any(|&l| l) && ty.iter().any(|&l| !l))
            || !(vy.iter().any(|&l| l) && vy.iter().any(|&l| !l));
        if lost_class {
            let msg = format!("fold {fold} lacks a class; all grid points score 0 on it");
            log::warn!("{msg}");
            warnings.push(msg);
        }
        let tx = x.select_rows(&train);
        let vx = x.select_rows(&valid);

        let mut rows_for_fold: Vec<CvRow> = Vec::new();
        for (key, members) in &families {
            let max_count = members.iter().map(|&i| family(&points[i]).1).max().unwrap();
            let model: Option<Model> = if lost_class && ty.iter().all(|&l| l == ty[0]) {
                None
            } else {
                Some(with_count(key, max_count).fit(&tx, &ty, spec.seed)?)
            };
            for &i in members {
                let count = family(&points[i]).1;
                let counts = match &model {
                    Some(m) => {
                        let pred: Vec<bool> = vx.rows().map(|r| m.proba_row_prefix(r, count) >= 0.5).collect();
                        ConfusionCounts::from_pairs(&pred, &vy)
                    }
                    None => ConfusionCounts::default(),
                };
                let f1 = if lost_class { None } else { counts.f1() };
                rows_for_fold.push(CvRow {
                    grid_point: i,
                    fold,
                    counts,
                    f1,
                });
            }
        }
        rows_for_fold.sort_by_key(|r| r.grid_point);
        table.extend(rows_for_fold);
    }
    table.sort_by_key(|r| (r.grid_point, r.fold));

    let mean_f1: Vec<f64> = (0..points.len())
        .map(|i| {
            table
                .iter()
                .filter(|r| r.grid_point == i)
                .map(|r| r.f1.unwrap_or(0.0))
                .sum::<f64>()
                / spec.k as f64
        })
        .collect();
    let mut best = 0;
    for i in 1..points.len() {
        if mean_f1[i] > mean_f1[best] {
            best = i;
        }
    }
    Ok(GridSearchResult {
        best_params: points[best],
        points,
        mean_f1,
        best,
        table,
        warnings,
    })
}

/// `grid_point,fold,tp,fp,fn,tn,f1` with an empty field for undefined F1.
pub fn write_cv_table(rows: &[CvRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["grid_point", "fold", "tp", "fp", "fn", "tn", "f1"])?;
    for r in rows {
        w.write_record([
            r.grid_point.to_string(),
            r.fold.to_string(),
            r.counts.tp.to_string(),
            r.counts.fp.to_string(),
            r.counts.fn_.to_string(),
            r.counts.tn.to_string(),
            r.f1.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
