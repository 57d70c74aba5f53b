//! Comment relevance scorer.
//!
//! The built-in reference scorer is a hashed n-gram logistic model (see
//! [`features`] and [`train`]). Probabilities produced elsewhere can replace it
//! through [`import_external_scores`]; the rest of the pipeline only consumes
//! a `comment_id -> probability` map.

pub mod features;
pub mod split;
pub mod train;

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::io::create;
use crate::data::{CommentRecord, Dataset};
use crate::numeric::sigmoid;
use crate::{Error, Result};

pub use features::{featurize, SparseVector, DEFAULT_DIM, HASH_NAME};
pub use split::{stratified_split, SplitParts, SplitSpec};
pub use train::{train_reference_scorer, TrainOptions};

/// Probabilities are kept within `[EPS, 1 - EPS]`.
pub const EPS: f64 = 1e-6;
pub const MODEL_FORMAT_VERSION: u32 = 1;
const MODEL_KIND: &str = "hashed-ngram-logistic";

pub fn clamp_probability(p: f64) -> f64 {
    p.clamp(EPS, 1.0 - EPS)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMetadata {
    pub epochs: usize,
    pub validation_f1: Option<f64>,
    pub test_f1: Option<f64>,
    pub seed: u64,
    pub split_sizes: SplitSizes,
    pub epoch_grid: Vec<usize>,
    pub validation_f1_by_epoch: Vec<(usize, Option<f64>)>,
    pub l2: f64,
    /// Training loss after each epoch up to the selected one.
    pub train_loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerModel {
    pub format_version: u32,
    pub kind: String,
    pub hash: String,
    pub dim: usize,
    pub bias: f64,
    /// `(bucket, weight)` pairs in increasing bucket order; omitted buckets
    /// have weight zero.
    pub weights: Vec<(u32, f64)>,
    pub metadata: TrainMetadata,
}

impl ScorerModel {
    pub fn new(dim: usize, weights: Vec<(u32, f64)>, bias: f64, metadata: TrainMetadata) -> Self {
        ScorerModel {
            format_version: MODEL_FORMAT_VERSION,
            kind: MODEL_KIND.to_string(),
            hash: HASH_NAME.to_string(),
            dim,
            bias,
            weights,
            metadata,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.format_version != MODEL_FORMAT_VERSION || self.kind != MODEL_KIND || self.hash != HASH_NAME {
            return Err(Error::InvalidRecord(format!(
                "unsupported scorer model (version {}, kind {:?}, hash {:?})",
                self.format_version, self.kind, self.hash
            )));
        }
        if !self.weights.windows(2).all(|w| w[0].0 < w[1].0)
            || self.weights.last().is_some_and(|&(i, _)| i as usize >= self.dim)
        {
            return Err(Error::InvalidRecord("scorer weights must be sorted buckets below dim".into()));
        }
        Ok(())
    }

    fn weight(&self, bucket: u32) -> f64 {
        self.weights
            .binary_search_by_key(&bucket, |&(i, _)| i)
            .map(|k| self.weights[k].1)
            .unwrap_or(0.0)
    }

    pub fn margin(&self, x: &SparseVector) -> f64 {
        self.bias
            + x.indices
                .iter()
                .zip(&x.values)
                .map(|(&i, &v)| self.weight(i) * v)
                .sum::<f64>()
    }

    pub fn probability(&self, text: &str) -> f64 {
        clamp_probability(sigmoid(self.margin(&featurize(text, self.dim))))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = create(path)?;
        serde_json::to_writer(file, self).map_err(|e| Error::json(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let model: ScorerModel = serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))?;
        model.validate()?;
        Ok(model)
    }
}

/// Scores every given comment.
pub fn score_comments(model: &ScorerModel, comments: &[CommentRecord]) -> BTreeMap<String, f64> {
    comments
        .par_iter()
        .map(|c| (c.comment_id.clone(), model.probability(&c.text)))
        .collect()
}

/// Scores for a subset of the dataset's comments. Unknown ids are an error.
pub fn score_ids(model: &ScorerModel, dataset: &Dataset, ids: &[&str]) -> Result<BTreeMap<String, f64>> {
    ids.iter()
        .map(|id| {
            let c = dataset
                .comment(id)
                .ok_or_else(|| Error::UnknownComment(id.to_string()))?;
            Ok((c.comment_id.clone(), model.probability(&c.text)))
        })
        .collect()
}

/// Writes `comment_id,probability` rows in id order.
pub fn export_scores(scores: &BTreeMap<String, f64>, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["comment_id", "probability"])?;
    for (id, p) in scores {
        w.write_record([id.as_str(), &p.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads externally produced probabilities. The file must cover every comment
/// of `dataset` exactly once; values must lie in [0, 1] and are clamped to
/// `[EPS, 1 - EPS]`.
pub fn import_external_scores(path: &Path, dataset: &Dataset) -> Result<BTreeMap<String, f64>> {
    let malformed = |line: u64, message: String| Error::Malformed {
        path: path.to_path_buf(),
        line,
        message,
    };
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::Fields)
        .from_reader(std::io::BufReader::new(file));
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim_start_matches('\u{feff}') == name)
            .ok_or_else(|| malformed(1, format!("missing column {name:?}")))
    };
    let (id_col, p_col) = (col("comment_id")?, col("probability")?);

    let mut out = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let id = record.get(id_col).unwrap_or_default();
        let raw = record.get(p_col).unwrap_or_default();
        let p: f64 = raw
            .parse()
            .map_err(|_| malformed(line, format!("probability {raw:?} is not a number")))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(malformed(line, format!("probability {p} for comment {id:?} is outside [0, 1]")));
        }
        if dataset.comment(id).is_none() {
            return Err(malformed(line, format!("unknown comment id {id:?}")));
        }
        if out.insert(id.to_string(), clamp_probability(p)).is_some() {
            return Err(malformed(line, format!("duplicate comment id {id:?}")));
        }
    }
    let missing: Vec<&str> = dataset
        .comments()
        .iter()
        .map(|c| c.comment_id.as_str())
        .filter(|id| !out.contains_key(*id))
        .take(5)
        .collect();
    if !missing.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{} does not score every comment; missing e.g. {}",
            path.display(),
            missing.join(", ")
        )));
    }
    Ok(out)
}

/// Checks that `scores` covers all comments of `dataset`.
pub fn check_coverage(scores: &BTreeMap<String, f64>, dataset: &Dataset) -> Result<()> {
    let known: HashSet<&str> = scores.keys().map(String::as_str).collect();
    match dataset.comments().iter().find(|c| !known.contains(c.comment_id.as_str())) {
        Some(c) => Err(Error::InsufficientData(format!("no score for comment {:?}", c.comment_id))),
        None => Ok(()),
    }
}
