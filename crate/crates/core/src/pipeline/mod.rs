//! Model variants M1–M5 over per-comment features, and item-level
//! aggregation of comment flags.
//!
//! | variant | learner  | features                    |
//! |---------|----------|-----------------------------|
//! | M1      | none     | `bert_prob > 0.5`           |
//! | M2      | boosting | `bert_prob, comment_n`      |
//! | M3      | forest   | `bert_prob, comment_n`      |
//! | M4      | boosting | comment set + item + exam   |
//! | M5      | forest   | comment set + item + exam   |

pub mod features;
mod output;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{Dataset, Label};
use crate::evaluation::{ConfusionCounts, HistogramInput, MetricSet, ReportInput};
use crate::learners::{grid_search_cv, predict_proba, GridSearchResult, GridSearchSpec, LearnerKind, Model, ParamGrid};
use crate::numeric::round_half_up;
use crate::scorer::{stratified_split, SplitSpec};
use crate::{Error, Result};

pub use features::{assemble_features, FeatureSet, FeatureTable, FeatureVector, COMMENT_FEATURES, FULL_FEATURES};
pub use output::{read_flagged_comments, write_flagged_comments, write_run, FlaggedRow, RunManifest, FLAGGED_COMMENTS_FILE, MODEL_FILE, RUN_MANIFEST_FILE, CV_TABLE_FILE};

/// Scorer-only threshold of M1.
pub const SCORE_THRESHOLD: f64 = 0.5;
/// Learner variants flag when the predicted probability reaches this value.
pub const LEARNER_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    M1,
    M2,
    M3,
    M4,
    M5,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::M1, Variant::M2, Variant::M3, Variant::M4, Variant::M5];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::M1 => "M1",
            Variant::M2 => "M2",
            Variant::M3 => "M3",
            Variant::M4 => "M4",
            Variant::M5 => "M5",
        }
    }

    pub fn learner(self) -> Option<LearnerKind> {
        match self {
            Variant::M1 => None,
            Variant::M2 | Variant::M4 => Some(LearnerKind::Gbt),
            Variant::M3 | Variant::M5 => Some(LearnerKind::Forest),
        }
    }

    pub fn feature_set(self) -> FeatureSet {
        match self {
            Variant::M1 => FeatureSet::ScoreOnly,
            Variant::M2 | Variant::M3 => FeatureSet::Comment,
            Variant::M4 | Variant::M5 => FeatureSet::Full,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variant {s:?} (expected M1..M5)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantConfig {
    pub variant: Variant,
    /// Seeds the 80/20 split, the folds and the learner.
    pub seed: u64,
    /// Defaults to the learner's standard grid.
    pub grid: Option<ParamGrid>,
    pub folds: usize,
}

impl VariantConfig {
    pub fn new(variant: Variant, seed: u64) -> Self {
        VariantConfig {
            variant,
            seed,
            grid: None,
            folds: 5,
        }
    }

    fn grid_spec(&self) -> Result<Option<GridSearchSpec>> {
        let Some(kind) = self.variant.learner() else {
            if self.grid.is_some() {
                return Err(Error::InvalidArgument(format!("{} takes no parameter grid", self.variant)));
            }
            return Ok(None);
        };
        let grid = self.grid.clone().unwrap_or_else(|| ParamGrid::default_for(kind));
        if grid.kind() != kind {
            return Err(Error::InvalidArgument(format!(
                "{} uses the {} learner but the grid is for {}",
                self.variant,
                kind.as_str(),
                grid.kind().as_str()
            )));
        }
        Ok(Some(GridSearchSpec {
            grid,
            k: self.folds,
            seed: self.seed,
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub comment_id: String,
    pub item_id: String,
    pub probability: f64,
    pub flagged: bool,
    /// The row was part of the learner's training data.
    pub in_train: bool,
    /// The row belongs to the held-out 20%.
    pub in_test: bool,
    pub label: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub split: SplitSpec,
    pub grid_search: Option<GridSearchSpec>,
    /// SHA-256 of the assembled feature table.
    pub data_hash: String,
    pub feature_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub variant: Variant,
    pub model: Option<Model>,
    pub grid_search: Option<GridSearchResult>,
    /// Every comment, in `comment_id` order.
    pub predictions: Vec<Prediction>,
    pub provenance: Provenance,
}

impl RunResult {
    pub fn flagged_ids(&self) -> BTreeSet<String> {
        self.predictions
            .iter()
            .filter(|p| p.flagged)
            .map(|p| p.comment_id.clone())
            .collect()
    }

    fn counts_where(&self, keep: impl Fn(&Prediction) -> bool) -> ConfusionCounts {
        let mut c = ConfusionCounts::default();
        for p in self.predictions.iter().filter(|p| keep(p)) {
            if let Some(l) = p.label {
                c.add(p.flagged, l);
            }
        }
        c
    }

    /// Confusion counts over every labeled comment, training rows included.
    pub fn full_counts(&self) -> ConfusionCounts {
        self.counts_where(|_| true)
    }

    /// Confusion counts over the labeled held-out rows.
    pub fn test_counts(&self) -> ConfusionCounts {
        self.counts_where(|p| p.in_test)
    }

    pub fn full_metrics(&self) -> MetricSet {
        MetricSet::from_counts(&self.full_counts())
    }

    pub fn test_metrics(&self) -> MetricSet {
        MetricSet::from_counts(&self.test_counts())
    }

    /// `<variant>-<seed>-<first 8 hex digits of the data hash>`.
    pub fn run_id(&self) -> String {
        format!(
            "{}-{}-{}",
            self.variant,
            self.provenance.seed,
            &self.provenance.data_hash[..8]
        )
    }
}

pub fn feature_table_hash(table: &FeatureTable) -> String {
    let bytes = serde_json::to_vec(table).expect("feature rows serialize");
    hex::encode(Sha256::digest(bytes))
}

/// Runs one variant over an assembled feature table.
///
/// Labeled rows are split 80/20 per class. M1 only thresholds the scorer
/// probability; the split is still drawn so its held-out metrics cover the
/// same rows as the learners'. Learner variants search their grid on the 80%,
/// refit the best point on all of it and predict every comment.
pub fn run_variant(config: &VariantConfig, table: &FeatureTable) -> Result<RunResult> {
    let grid_spec = config.grid_spec()?;
    let split = SplitSpec::train_test(config.seed);
    let (labeled_pos, labels) = table.labeled();
    let parts = stratified_split(&labels, &split)?;
    let mut in_train = vec![false; table.len()];
    let mut in_test = vec![false; table.len()];
    for &i in &parts.test {
        in_test[labeled_pos[i]] = true;
    }

    let (probabilities, model, grid_search, threshold_inclusive) = match &grid_spec {
        None => {
            let probs: Vec<f64> = table.rows.iter().map(|r| r.bert_prob).collect();
            (probs, None, None, false)
        }
        Some(spec) => {
            let train_rows: Vec<usize> = parts.train.iter().map(|&i| labeled_pos[i]).collect();
            let y_train: Vec<bool> = parts.train.iter().map(|&i| labels[i]).collect();
            if !(y_train.iter().any(|&l| l) && y_train.iter().any(|&l| !l)) {
                return Err(Error::InsufficientData(format!(
                    "{} needs labeled comments of both classes in its training split",
                    config.variant
                )));
            }
            for &r in &train_rows {
                in_train[r] = true;
            }
            let x = table.matrix(config.variant);
            let x_train = x.select_rows(&train_rows);
            let search = grid_search_cv(&x_train, &y_train, spec)?;
            let model = search.best_params.fit(&x_train, &y_train, config.seed)?;
            let probs = predict_proba(&model, &x)?;
            (probs, Some(model), Some(search), true)
        }
    };

    let predictions = table
        .rows
        .iter()
        .zip(probabilities)
        .enumerate()
        .map(|(i, (row, probability))| Prediction {
            comment_id: row.comment_id.clone(),
            item_id: row.item_id.clone(),
            probability,
            flagged: if threshold_inclusive {
                probability >= LEARNER_THRESHOLD
            } else {
                probability > SCORE_THRESHOLD
            },
            in_train: in_train[i],
            in_test: in_test[i],
            label: row.label,
        })
        .collect();

    Ok(RunResult {
        variant: config.variant,
        model,
        grid_search,
        predictions,
        provenance: Provenance {
            seed: config.seed,
            split,
            grid_search: grid_spec,
            data_hash: feature_table_hash(table),
            feature_names: config.variant.feature_set().names().iter().map(|s| s.to_string()).collect(),
        },
    })
}

/// Items with at least `min_count` flagged comments.
pub fn aggregate_item_flags<'a>(
    flagged_comments: impl IntoIterator<Item = &'a str>,
    dataset: &Dataset,
    min_count: usize,
) -> Result<BTreeSet<String>> {
    let mut per_item: BTreeMap<&str, usize> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for id in flagged_comments {
        if !seen.insert(id) {
            continue;
        }
        let c = dataset.comment(id).ok_or_else(|| Error::UnknownComment(id.to_string()))?;
        *per_item.entry(c.item_id.as_str()).or_insert(0) += 1;
    }
    Ok(per_item
        .into_iter()
        .filter(|&(_, n)| n >= min_count.max(1))
        .map(|(item, _)| item.to_string())
        .collect())
}

/// Items that have at least one comment labeled relevant.
pub fn labeled_item_flags(dataset: &Dataset) -> BTreeSet<String> {
    dataset
        .comments()
        .iter()
        .filter(|c| c.label == Label::Relevant)
        .map(|c| c.item_id.clone())
        .collect()
}

/// Overlap of model-flagged items with reference items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemFlagReport {
    pub overlap_n: usize,
    /// `overlap_n / true_n · 100` to one decimal; absent when `true_n = 0`.
    pub overlap_pct: Option<f64>,
    pub total_n: usize,
    /// `total_n / total_items · 100` to one decimal.
    pub total_pct: Option<f64>,
    pub true_n: usize,
    pub total_items: usize,
}

pub fn compare_item_flags(ml: &BTreeSet<String>, truth: &BTreeSet<String>, total_items: usize) -> ItemFlagReport {
    let overlap_n = ml.intersection(truth).count();
    item_flag_report(overlap_n, truth.len(), ml.len(), total_items)
}

/// [`compare_item_flags`] from the counts alone.
pub fn item_flag_report(overlap_n: usize, true_n: usize, total_n: usize, total_items: usize) -> ItemFlagReport {
    let pct = |num: usize, den: usize| (den > 0).then(|| round_half_up(num as f64 / den as f64 * 100.0, 1));
    ItemFlagReport {
        overlap_n,
        overlap_pct: pct(overlap_n, true_n),
        total_n,
        total_pct: pct(total_n, total_items),
        true_n,
        total_items,
    }
}

/// Report row of a run: full-set counts, item overlap with the items that
/// have a comment labeled relevant, and the comment sets for the histogram.
pub fn report_input(run: &RunResult, dataset: &Dataset, min_count: usize) -> Result<ReportInput> {
    let flagged = run.flagged_ids();
    let ml_items = aggregate_item_flags(flagged.iter().map(String::as_str), dataset, min_count)?;
    let item_flags = compare_item_flags(&ml_items, &labeled_item_flags(dataset), dataset.items().len());
    let false_positives = run
        .predictions
        .iter()
        .filter(|p| p.flagged && p.label == Some(false))
        .map(|p| p.comment_id.clone())
        .collect();
    Ok(ReportInput {
        model: run.variant.to_string(),
        run_id: Some(run.run_id()),
        counts: run.full_counts(),
        item_flags,
        histogram: HistogramInput {
            model: run.variant.to_string(),
            flagged,
            false_positives,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::fixtures::{comment, item, response};
    use crate::data::{CandidateRecord, ItemType};
    use crate::learners::MtrySpec;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    /// Items A..D, one candidate per comment, labels and scores from the
    /// caller.
    fn dataset(n: usize, label: impl Fn(usize) -> Label) -> Dataset {
        let items = ["A", "B", "C", "D"].map(|id| item(id, ItemType::Operational, None)).to_vec();
        let candidates = (0..n).map(|i| CandidateRecord::new(format!("c{i:03}"), "F")).collect();
        let responses = (0..n)
            .map(|i| response(&format!("c{i:03}"), "A", if i % 3 == 0 { "B" } else { "A" }, 10.0))
            .collect();
        let comments = (0..n)
            .map(|i| {
                let it = ["A", "B", "C", "D"][i % 4];
                comment(&format!("k{i:03}"), &format!("c{i:03}"), it, "text", label(i))
            })
            .collect();
        Dataset::new(items, candidates, responses, comments).unwrap()
    }

    fn table(ds: &Dataset, score: impl Fn(usize) -> f64) -> FeatureTable {
        let scores = ds
            .comments()
            .iter()
            .enumerate()
            .map(|(i, c)| (c.comment_id.clone(), score(i)))
            .collect();
        assemble_features(ds, &BTreeMap::new(), &scores).unwrap()
    }

    fn small_grid(kind: LearnerKind) -> ParamGrid {
        match kind {
            LearnerKind::Gbt => ParamGrid::Gbt {
                n_rounds: vec![10],
                eta: vec![0.3],
                max_depth: vec![2],
                lambda: vec![1.0],
                gamma: vec![0.0],
                min_child_weight: 1.0,
            },
            LearnerKind::Forest => ParamGrid::Forest {
                n_trees: vec![15],
                mtry: vec![MtrySpec::All],
                max_depth: vec![None],
                min_leaf: 1,
            },
        }
    }

    #[test]
    fn variant_table() {
        assert_eq!(Variant::M1.learner(), None);
        assert_eq!(Variant::M2.learner(), Some(LearnerKind::Gbt));
        assert_eq!(Variant::M5.learner(), Some(LearnerKind::Forest));
        assert_eq!("m4".parse::<Variant>().unwrap(), Variant::M4);
        assert!("M6".parse::<Variant>().is_err());
    }

    #[test]
    fn m1_with_low_scores_flags_nothing() {
        let ds = dataset(40, |i| if i % 5 == 0 { Label::Relevant } else { Label::NotRelevant });
        let run = run_variant(&VariantConfig::new(Variant::M1, 1), &table(&ds, |_| 0.4)).unwrap();
        assert!(run.flagged_ids().is_empty());
        assert!(run.model.is_none());
        assert!(run.predictions.iter().all(|p| !p.in_train));
        // 0.5 itself is not above the threshold.
        let run = run_variant(&VariantConfig::new(Variant::M1, 1), &table(&ds, |_| 0.5)).unwrap();
        assert!(run.flagged_ids().is_empty());
    }

    #[test]
    fn learner_runs_mark_train_and_test_rows() {
        let ds = dataset(100, |i| match i % 10 {
            0 | 1 => Label::Relevant,
            9 => Label::Unlabeled,
            _ => Label::NotRelevant,
        });
        let t = table(&ds, |i| if i % 10 < 2 { 0.9 } else { 0.2 });
        let mut cfg = VariantConfig::new(Variant::M3, 4);
        cfg.grid = Some(small_grid(LearnerKind::Forest));
        let run = run_variant(&cfg, &t).unwrap();
        assert_eq!(run.predictions.len(), 100);
        let train = run.predictions.iter().filter(|p| p.in_train).count();
        let test = run.predictions.iter().filter(|p| p.in_test).count();
        assert_eq!(train + test, 90);
        assert_eq!(test, 18);
        assert!(run.predictions.iter().filter(|p| p.label.is_none()).all(|p| !p.in_train && !p.in_test));
        assert_eq!(run.full_counts().population(), 90);
        // Perfectly separable on bert_prob.
        assert_eq!(run.full_counts().fp + run.full_counts().fn_, 0);
        assert_eq!(run.flagged_ids().len(), 20);
    }

    #[test]
    fn prediction_is_pure() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let labels: Vec<bool> = (0..120).map(|_| rng.random_bool(0.3)).collect();
        let scores: Vec<f64> = labels.iter().map(|&l| if l { rng.random_range(0.3..1.0) } else { rng.random_range(0.0..0.7) }).collect();
        let ds = dataset(120, |i| if labels[i] { Label::Relevant } else { Label::NotRelevant });
        let t = table(&ds, |i| scores[i]);
        let mut cfg = VariantConfig::new(Variant::M2, 8);
        cfg.grid = Some(small_grid(LearnerKind::Gbt));
        let run = run_variant(&cfg, &t).unwrap();
        let model = run.model.as_ref().unwrap();
        let x = t.matrix(Variant::M2);
        let again: BTreeSet<String> = predict_proba(model, &x)
            .unwrap()
            .iter()
            .zip(&t.rows)
            .filter(|(p, _)| **p >= LEARNER_THRESHOLD)
            .map(|(_, r)| r.comment_id.clone())
            .collect();
        assert_eq!(again, run.flagged_ids());
        assert_eq!(run_variant(&cfg, &t).unwrap(), run);
    }

    #[test]
    fn single_class_training_is_rejected() {
        let ds = dataset(30, |_| Label::NotRelevant);
        let err = run_variant(&VariantConfig::new(Variant::M4, 1), &table(&ds, |_| 0.1)).unwrap_err();
        assert!(matches!(err, Error::InsufficientData(_)));
    }

    #[test]
    fn mismatched_grid_is_rejected() {
        let ds = dataset(30, |i| if i % 3 == 0 { Label::Relevant } else { Label::NotRelevant });
        let mut cfg = VariantConfig::new(Variant::M4, 1);
        cfg.grid = Some(small_grid(LearnerKind::Forest));
        assert!(matches!(run_variant(&cfg, &table(&ds, |_| 0.1)), Err(Error::InvalidArgument(_))));
        let mut cfg = VariantConfig::new(Variant::M1, 1);
        cfg.grid = Some(small_grid(LearnerKind::Gbt));
        assert!(run_variant(&cfg, &table(&ds, |_| 0.1)).is_err());
    }

    #[test]
    fn aggregation_rules() {
        let ds = dataset(8, |_| Label::Unlabeled);
        // k000, k004 on A; k001 on B.
        let flagged = ["k000", "k004", "k001"];
        assert_eq!(aggregate_item_flags(flagged, &ds, 1).unwrap(), set(&["A", "B"]));
        assert_eq!(aggregate_item_flags(flagged, &ds, 2).unwrap(), set(&["A"]));
        assert!(aggregate_item_flags([], &ds, 1).unwrap().is_empty());
        assert!(aggregate_item_flags(["nope"], &ds, 1).is_err());
    }

    #[test]
    fn item_report_paper_rows() {
        let r = item_flag_report(12, 23, 93, 257);
        assert_eq!((r.overlap_pct, r.total_pct), (Some(52.2), Some(36.2)));
        let r = item_flag_report(23, 23, 247, 257);
        assert_eq!((r.overlap_pct, r.total_pct), (Some(100.0), Some(96.1)));
        let ml = set(&["A", "B"]);
        let r = compare_item_flags(&ml, &ml, 4);
        assert_eq!(r.overlap_pct, Some(100.0));
        assert_eq!(r.total_pct, Some(50.0));
        assert_eq!(compare_item_flags(&ml, &BTreeSet::new(), 4).overlap_pct, None);
    }

    proptest! {
        #[test]
        fn aggregation_is_monotone(flags in proptest::collection::vec(any::<bool>(), 12), extra in 0usize..12, min in 1usize..3) {
            let ds = dataset(12, |_| Label::Unlabeled);
            let ids: Vec<String> = (0..12).map(|i| format!("k{i:03}")).collect();
            let base: Vec<&str> = ids.iter().zip(&flags).filter(|(_, &f)| f).map(|(s, _)| s.as_str()).collect();
            let mut more = base.clone();
            more.push(&ids[extra]);
            let a = aggregate_item_flags(base.iter().copied(), &ds, min).unwrap();
            let b = aggregate_item_flags(more.iter().copied(), &ds, min).unwrap();
            prop_assert!(a.is_subset(&b));
        }

        #[test]
        fn percentages_recompute_from_counts(true_n in 0usize..300, total_items in 1usize..400, a in 0usize..300, b in 0usize..400) {
            let overlap = a.min(true_n);
            let total_n = b.min(total_items);
            let r = item_flag_report(overlap, true_n, total_n, total_items);
            // Integer oracle: tenths of a percent, rounded half up.
            let tenths = |num: usize, den: usize| (num * 2000 + den) / (2 * den);
            if true_n > 0 {
                prop_assert_eq!((r.overlap_pct.unwrap() * 10.0).round() as usize, tenths(overlap, true_n));
            } else {
                prop_assert!(r.overlap_pct.is_none());
            }
            prop_assert_eq!((r.total_pct.unwrap() * 10.0).round() as usize, tenths(total_n, total_items));
        }
    }
}
