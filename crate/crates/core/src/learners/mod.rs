//! Tree-ensemble classifiers and stratified k-fold grid search.

pub mod cv;
pub mod forest;
pub mod gbt;
mod matrix;
pub mod tree;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::io::create;
use crate::numeric::sigmoid;
use crate::{Error, Result};

pub use cv::{grid_search_cv, CvRow, GridSearchResult, GridSearchSpec, MtrySpec, ParamGrid};
pub use forest::{fit_forest, ForestModel, ForestParams};
pub use gbt::{fit_gbt, GbtModel, GbtParams};
pub use matrix::Matrix;
pub use tree::{fit_tree, Criterion, Node, Tree, TreeParams};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Forest,
    Gbt,
}

impl LearnerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LearnerKind::Forest => "forest",
            LearnerKind::Gbt => "gbt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerParams {
    Forest(ForestParams),
    Gbt(GbtParams),
}

impl LearnerParams {
    pub fn kind(&self) -> LearnerKind {
        match self {
            LearnerParams::Forest(_) => LearnerKind::Forest,
            LearnerParams::Gbt(_) => LearnerKind::Gbt,
        }
    }

    pub fn fit(&self, x: &Matrix, y: &[bool], seed: u64) -> Result<Model> {
        match self {
            LearnerParams::Forest(p) => fit_forest(x, y, p, seed).map(Model::Forest),
            LearnerParams::Gbt(p) => fit_gbt(x, y, p).map(Model::Gbt),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Forest(ForestModel),
    Gbt(GbtModel),
}

/// On-disk form of a model.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    model: Model,
}

impl Model {
    pub fn n_features(&self) -> usize {
        match self {
            Model::Forest(m) => m.n_features,
            Model::Gbt(m) => m.n_features,
        }
    }

    pub fn kind(&self) -> LearnerKind {
        match self {
            Model::Forest(_) => LearnerKind::Forest,
            Model::Gbt(_) => LearnerKind::Gbt,
        }
    }

    /// Number of trees (forest) or rounds (boosting).
    pub fn n_members(&self) -> usize {
        match self {
            Model::Forest(m) => m.trees.len(),
            Model::Gbt(m) => m.trees.len(),
        }
    }

    /// Probability for one row using only the first `k` members.
    pub fn proba_row_prefix(&self, row: &[f64], k: usize) -> f64 {
        match self {
            Model::Forest(m) => m.vote_fraction(row, k),
            Model::Gbt(m) => sigmoid(m.margin(row, k)),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(&ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        })
        .map_err(|e| Error::InvalidRecord(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(s).map_err(|e| Error::InvalidRecord(e.to_string()))?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::InvalidRecord(format!(
                "unsupported model format version {}",
                file.format_version
            )));
        }
        Ok(file.model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        use std::io::Write;
        let mut w = create(path)?;
        w.write_all(self.to_json()?.as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

fn check_dim(model: &Model, x: &Matrix) -> Result<()> {
    if x.n_cols() != model.n_features() {
        return Err(Error::DimensionMismatch {
            expected: model.n_features(),
            got: x.n_cols(),
        });
    }
    Ok(())
}

/// Forest: fraction of trees voting positive. Boosting: σ(margin).
pub fn predict_proba(model: &Model, x: &Matrix) -> Result<Vec<f64>> {
    check_dim(model, x)?;
    let k = model.n_members();
    Ok(x.rows().map(|r| model.proba_row_prefix(r, k)).collect())
}

/// Positive when the probability is at least `threshold`. For a forest this
/// is a majority vote with ties going to the positive class.
pub fn predict_class_at(model: &Model, x: &Matrix, threshold: f64) -> Result<Vec<bool>> {
    Ok(predict_proba(model, x)?.into_iter().map(|p| p >= threshold).collect())
}

pub fn predict_class(model: &Model, x: &Matrix) -> Result<Vec<bool>> {
    predict_class_at(model, x, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn data(seed: u64) -> (Matrix, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..120)
            .map(|_| {
                (0..3)
                    .map(|_| if rng.random_bool(0.05) { f64::NAN } else { rng.random_range(-1.0..1.0) })
                    .collect()
            })
            .collect();
        let y = rows.iter().map(|r| r[0] > 0.1 || rng.random_bool(0.1)).collect();
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let (x, y) = data(1);
        let m = fit_gbt(&x, &y, &GbtParams::new(3, 0.3, 2)).map(Model::Gbt).unwrap();
        let wrong = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(matches!(
            predict_proba(&m, &wrong),
            Err(Error::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn models_round_trip_exactly() {
        let (x, y) = data(2);
        for params in [
            LearnerParams::Forest(ForestParams::new(7, 2, None)),
            LearnerParams::Gbt(GbtParams::new(9, 0.1, 3)),
        ] {
            let m = params.fit(&x, &y, 4).unwrap();
            let json = m.to_json().unwrap();
            let back = Model::from_json(&json).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.to_json().unwrap(), json);
            assert_eq!(predict_proba(&back, &x).unwrap(), predict_proba(&m, &x).unwrap());
        }
    }

    proptest! {
        #[test]
        fn probabilities_are_in_unit_interval(seed in 0u64..1000) {
            let (x, y) = data(seed);
            let m = fit_gbt(&x, &y, &GbtParams::new(5, 0.3, 3)).map(Model::Gbt).unwrap();
            for p in predict_proba(&m, &x).unwrap() {
                prop_assert!((0.0..=1.0).contains(&p));
            }
        }
    }
}
