//! Run directory contents: model, flagged comments, CV table and manifest.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{RunResult, Variant};
use crate::data::io::create;
use crate::evaluation::{ConfusionCounts, MetricSet};
use crate::learners::{cv::write_cv_table, GridSearchSpec, LearnerParams};
use crate::scorer::SplitSpec;
use crate::{Error, Result};

pub const FLAGGED_COMMENTS_FILE: &str = "flagged_comments.csv";
pub const MODEL_FILE: &str = "model.json";
pub const CV_TABLE_FILE: &str = "cv_results.csv";
pub const RUN_MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub counts: ConfusionCounts,
    pub metrics: MetricSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub variant: Variant,
    pub learner: Option<String>,
    pub seed: u64,
    pub split: SplitSpec,
    pub grid_search: Option<GridSearchSpec>,
    pub chosen_params: Option<LearnerParams>,
    pub cv_mean_f1: Option<f64>,
    pub cv_warnings: Vec<String>,
    pub data_hash: String,
    pub feature_names: Vec<String>,
    pub n_comments: usize,
    pub n_labeled: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub n_flagged: usize,
    /// Over every labeled comment, training rows included.
    pub full: MetricSummary,
    /// Over the labeled held-out rows.
    pub test: MetricSummary,
    pub files: Vec<String>,
}

impl RunManifest {
    pub fn from_run(run: &RunResult, files: Vec<String>) -> Self {
        let p = &run.predictions;
        let summary = |counts: ConfusionCounts| MetricSummary {
            counts,
            metrics: MetricSet::from_counts(&counts),
        };
        RunManifest {
            run_id: run.run_id(),
            variant: run.variant,
            learner: run.variant.learner().map(|k| k.as_str().to_string()),
            seed: run.provenance.seed,
            split: run.provenance.split,
            grid_search: run.provenance.grid_search.clone(),
            chosen_params: run.grid_search.as_ref().map(|g| g.best_params),
            cv_mean_f1: run.grid_search.as_ref().map(|g| g.mean_f1[g.best]),
            cv_warnings: run.grid_search.as_ref().map(|g| g.warnings.clone()).unwrap_or_default(),
            data_hash: run.provenance.data_hash.clone(),
            feature_names: run.provenance.feature_names.clone(),
            n_comments: p.len(),
            n_labeled: p.iter().filter(|x| x.label.is_some()).count(),
            n_train: p.iter().filter(|x| x.in_train).count(),
            n_test: p.iter().filter(|x| x.in_test).count(),
            n_flagged: p.iter().filter(|x| x.flagged).count(),
            full: summary(run.full_counts()),
            test: summary(run.test_counts()),
            files,
        }
    }
}

/// `comment_id,item_id,probability,flagged,in_train` for every comment.
pub fn write_flagged_comments(run: &RunResult, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["comment_id", "item_id", "probability", "flagged", "in_train"])?;
    for p in &run.predictions {
        w.write_record([
            p.comment_id.as_str(),
            p.item_id.as_str(),
            &p.probability.to_string(),
            if p.flagged { "1" } else { "0" },
            if p.in_train { "1" } else { "0" },
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One row of `flagged_comments.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaggedRow {
    pub comment_id: String,
    pub item_id: String,
    pub probability: f64,
    pub flagged: u8,
    pub in_train: u8,
}

pub fn read_flagged_comments(path: &Path) -> Result<Vec<FlaggedRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::InvalidRecord(format!("{}: {other:?}", path.display())),
    })?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<FlaggedRow>, _>>()?;
    Ok(rows)
}

/// Writes the run's files into `dir` (created if needed) and returns the
/// manifest that was written last.
pub fn write_run(run: &RunResult, dir: &Path) -> Result<RunManifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    if let Some(model) = &run.model {
        model.save(&dir.join(MODEL_FILE))?;
        files.push(MODEL_FILE.to_string());
    }
    if let Some(search) = &run.grid_search {
        write_cv_table(&search.table, &dir.join(CV_TABLE_FILE))?;
        files.push(CV_TABLE_FILE.to_string());
    }
    write_flagged_comments(run, &dir.join(FLAGGED_COMMENTS_FILE))?;
    files.push(FLAGGED_COMMENTS_FILE.to_string());

    let manifest = RunManifest::from_run(run, files);
    let path = dir.join(RUN_MANIFEST_FILE);
    let body = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::json(&path, e))?;
    std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
