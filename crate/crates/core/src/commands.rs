//! Batch steps over a [`Store`]. The CLI and the service both call these.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::Utc;
use serde::{Deserialize, Serialize};

use crate::data::io::{load_dataset, DatasetPaths};
use crate::data::synth::{generate_synthetic, SynthSpec};
use crate::data::{CleaningRules, DatasetSummary, ItemRecord, Label};
use crate::evaluation::histogram::DEFAULT_BINS;
use crate::evaluation::{emit_reports, ReportBundle, ReportInput};
use crate::pipeline::{
    assemble_features, read_flagged_comments, report_input, run_variant, write_run, RunManifest, Variant, VariantConfig,
    FLAGGED_COMMENTS_FILE, RUN_MANIFEST_FILE,
};
use crate::psychometrics::io::write_stats;
use crate::psychometrics::{compute_item_statistics, ItemStatistics, PsychometricsConfig, PsychometricsReport};
use crate::scorer::{
    export_scores, import_external_scores, score_comments, train_reference_scorer, ScorerModel, SplitSpec, TrainOptions,
};
use crate::store::{read_json, write_json, LabelEvent, Store, RUN_REPORTS_DIR};
use crate::{Error, Result};

/// Per-run record that lets `eval` rebuild report columns without re-running.
const REPORT_INPUT_FILE: &str = "report_input.json";

#[derive(Serialize, Deserialize)]
struct StoredReportInput {
    input: ReportInput,
    /// Scorer probabilities of the run's flagged comments.
    scores: BTreeMap<String, f64>,
}

/// Loads the four input files from `input_dir`, applies `rules` and stores
/// the result.
pub fn ingest(store: &Store, input_dir: &Path, rules: &CleaningRules) -> Result<DatasetSummary> {
    let dataset = load_dataset(&DatasetPaths::in_dir(input_dir))?.apply_cleaning(rules)?;
    store.save_dataset(&dataset)?;
    Ok(dataset.summary())
}

/// Generates a synthetic dataset into the store, with its ground truth in
/// `data/truth.json` and the planted speeders cleaned out.
pub fn synth(store: &Store, spec: &SynthSpec, seed: u64) -> Result<DatasetSummary> {
    let (dataset, truth) = generate_synthetic(spec, seed)?;
    let dataset = dataset.apply_cleaning(&spec.speeder_cleaning_rules())?;
    store.save_dataset(&dataset)?;
    store.save_truth(&truth)?;
    Ok(dataset.summary())
}

pub fn stats(store: &Store, config: &PsychometricsConfig) -> Result<PsychometricsReport> {
    let dataset = store.load_dataset()?;
    let report = compute_item_statistics(&dataset, config)?;
    write_stats(&report, &store.stats_dir())?;
    Ok(report)
}

/// Trains the reference scorer on the current labels.
pub fn train_scorer(store: &Store, seed: u64, options: &TrainOptions) -> Result<ScorerModel> {
    let dataset = store.load_dataset()?;
    let model = train_reference_scorer(dataset.comments(), &SplitSpec::scorer_default(seed), options)?;
    model.save(&store.scorer_path())?;
    Ok(model)
}

/// Scores every comment with the trained scorer, or imports probabilities
/// produced elsewhere. Returns the number of comments scored.
pub fn score(store: &Store, import: Option<&Path>) -> Result<usize> {
    let dataset = store.load_dataset()?;
    let scores = match import {
        Some(path) => import_external_scores(path, &dataset)?,
        None => score_comments(&store.load_scorer()?, dataset.comments()),
    };
    export_scores(&scores, &store.scores_path())?;
    Ok(scores.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub bins: usize,
    /// Flagged comments an item needs before it counts as flagged.
    pub min_count: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            bins: DEFAULT_BINS,
            min_count: 1,
        }
    }
}

/// Runs a variant, writes its directory (with single-model reports) and
/// records it as the variant's latest run.
pub fn run(store: &Store, config: &VariantConfig, report: &ReportOptions) -> Result<RunManifest> {
    let dataset = store.load_dataset()?;
    let scores = store.load_scores()?;
    let stats = store.load_stats(&dataset)?;
    let table = assemble_features(&dataset, &stats, &scores)?;
    let result = run_variant(config, &table)?;
    let run_id = result.run_id();

    let staging = store.staging_dir(&run_id);
    if staging.exists() {
        std::fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    let mut manifest = write_run(&result, &staging)?;
    let input = report_input(&result, &dataset, report.min_count)?;
    let flagged_scores: BTreeMap<String, f64> =
        input.histogram.flagged.iter().map(|id| (id.clone(), scores[id])).collect();
    emit_reports(std::slice::from_ref(&input), &flagged_scores, report.bins, &staging.join(RUN_REPORTS_DIR))?;
    write_json(
        &staging.join(REPORT_INPUT_FILE),
        &StoredReportInput {
            input,
            scores: flagged_scores,
        },
    )?;
    manifest.files.extend([REPORT_INPUT_FILE.to_string(), format!("{RUN_REPORTS_DIR}/")]);
    write_json(&staging.join(RUN_MANIFEST_FILE), &manifest)?;
    store.publish_run(config.variant, &run_id)?;
    Ok(manifest)
}

/// Writes `reports/` for the latest run of every variant that has one, in
/// M1..M5 order.
pub fn eval(store: &Store, options: &ReportOptions) -> Result<ReportBundle> {
    let latest = store.latest_runs()?;
    if latest.is_empty() {
        return Err(Error::MissingPrerequisite("no completed runs; run `run --variant ...` first".into()));
    }
    let mut inputs = Vec::new();
    let mut scores = BTreeMap::new();
    for run_id in latest.values() {
        let stored: StoredReportInput = read_json(&store.run_dir(run_id).join(REPORT_INPUT_FILE))?;
        scores.extend(stored.scores);
        inputs.push(stored.input);
    }
    emit_reports(&inputs, &scores, options.bins, &store.reports_dir())
}

/// Records a review decision for an existing comment.
pub fn label(store: &Store, comment_id: &str, label: u8, reviewer: &str) -> Result<(LabelEvent, bool)> {
    if label > 1 {
        return Err(Error::InvalidArgument(format!("label must be 0 or 1, got {label}")));
    }
    let dataset = store.load_dataset()?;
    if dataset.comment(comment_id).is_none() {
        return Err(Error::UnknownComment(comment_id.to_string()));
    }
    let event = LabelEvent {
        comment_id: comment_id.to_string(),
        label,
        reviewer: reviewer.to_string(),
        timestamp: Utc::now(),
    };
    let appended = store.append_label(&event)?;
    Ok((event, appended))
}

/// Checks that the current labels can train both the scorer and a learner.
pub fn check_retrainable(store: &Store) -> Result<()> {
    let dataset = store.load_dataset()?;
    let count = |l: Label| dataset.comments().iter().filter(|c| c.label == l).count();
    let (pos, neg) = (count(Label::Relevant), count(Label::NotRelevant));
    if pos < 2 || neg < 2 {
        return Err(Error::InsufficientData(format!(
            "retraining needs at least two labeled comments of each class; have {pos} relevant and {neg} not relevant"
        )));
    }
    Ok(())
}

/// Scorer, scores and the variant's run, all from the current labels.
pub fn retrain(store: &Store, variant: Variant, seed: u64) -> Result<RunManifest> {
    check_retrainable(store)?;
    train_scorer(store, seed, &TrainOptions::default())?;
    score(store, None)?;
    run(store, &VariantConfig::new(variant, seed), &ReportOptions::default())
}

/// Item statistics joined onto a queued comment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSnapshot {
    pub b: Option<f64>,
    pub p: Option<f64>,
    pub r: Option<f64>,
    pub comment_n: usize,
    pub exam_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub comment_id: String,
    pub text: String,
    pub item_id: String,
    pub probability: f64,
    pub variant: Variant,
    pub run_id: String,
    pub features: FeatureSnapshot,
    /// Label the comment was ingested with, if any.
    pub label: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueFilter {
    pub variant: Variant,
    pub item_id: Option<String>,
    pub limit: Option<usize>,
}

/// Flagged comments of the variant's latest run that have no review event,
/// by descending probability then ascending comment id.
pub fn queue(store: &Store, filter: &QueueFilter) -> Result<Vec<QueueEntry>> {
    let run_id = store
        .latest_run(filter.variant)?
        .ok_or_else(|| Error::MissingPrerequisite(format!("no completed run for {}", filter.variant)))?;
    let rows = read_flagged_comments(&store.run_dir(&run_id).join(FLAGGED_COMMENTS_FILE))?;
    let reviewed = store.label_view()?;
    let dataset = store.load_dataset()?;
    let stats = store.load_stats(&dataset).unwrap_or_default();
    let counts = dataset.comment_counts();

    let mut entries = Vec::new();
    for row in rows {
        if row.flagged != 1 || reviewed.contains_key(&row.comment_id) {
            continue;
        }
        if filter.item_id.as_deref().is_some_and(|it| it != row.item_id) {
            continue;
        }
        let comment = dataset
            .comment(&row.comment_id)
            .ok_or_else(|| Error::UnknownComment(row.comment_id.clone()))?;
        let s = stats.get(&row.item_id);
        entries.push(QueueEntry {
            comment_id: row.comment_id,
            text: comment.text.clone(),
            item_id: row.item_id.clone(),
            probability: row.probability,
            variant: filter.variant,
            run_id: run_id.clone(),
            features: FeatureSnapshot {
                b: s.and_then(|s| s.b),
                p: s.and_then(|s| s.p),
                r: s.and_then(|s| s.r),
                comment_n: counts.get(&row.item_id).copied().unwrap_or(0),
                exam_score: dataset.candidate(&comment.candidate_id).map(|c| c.exam_score).unwrap_or(0.0),
            },
            label: comment.label.code(),
        });
    }
    entries.sort_by(|a, b| {
        b.probability
            .total_cmp(&a.probability)
            .then_with(|| a.comment_id.cmp(&b.comment_id))
    });
    if let Some(limit) = filter.limit {
        entries.truncate(limit);
    }
    Ok(entries)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemComment {
    pub comment_id: String,
    pub candidate_id: String,
    pub text: String,
    /// Effective label after review events.
    pub label: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemDetail {
    pub item: ItemRecord,
    pub statistics: Option<ItemStatistics>,
    pub comments: Vec<ItemComment>,
}

pub fn item_detail(store: &Store, item_id: &str) -> Result<ItemDetail> {
    let dataset = store.load_dataset()?;
    let item = dataset
        .item(item_id)
        .cloned()
        .ok_or_else(|| Error::UnknownItem(item_id.to_string()))?;
    let stats = store.load_stats(&dataset).ok();
    let mut comments: Vec<ItemComment> = dataset
        .comments()
        .iter()
        .filter(|c| c.item_id == item_id)
        .map(|c| ItemComment {
            comment_id: c.comment_id.clone(),
            candidate_id: c.candidate_id.clone(),
            text: c.text.clone(),
            label: c.label.code(),
        })
        .collect();
    comments.sort_by(|a, b| a.comment_id.cmp(&b.comment_id));
    Ok(ItemDetail {
        item,
        statistics: stats.and_then(|mut s| s.remove(item_id)),
        comments,
    })
}

/// Synthetic spec with the CLI's item/person overrides applied.
pub fn synth_spec(operational_items: Option<usize>, persons: Option<usize>) -> SynthSpec {
    let mut spec = SynthSpec::standard();
    if let Some(n) = operational_items {
        spec.n_operational = n;
    }
    if let Some(n) = persons {
        spec.n_persons = n;
    }
    spec
}
