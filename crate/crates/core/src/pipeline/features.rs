//! Per-comment feature rows.
//!
//! Column order is fixed. The comment-level set is `bert_prob, comment_n`; the
//! full set appends `b, p, r, mean_time, n, drift_flag, item_type,
//! exam_score`. Psychometric columns are NaN for comments on items without
//! statistics, which the tree learners route by their learned default
//! direction.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Variant;
use crate::data::{Dataset, ItemType, Label};
use crate::learners::Matrix;
use crate::psychometrics::ItemStatistics;
use crate::{Error, Result};

pub const COMMENT_FEATURES: [&str; 2] = ["bert_prob", "comment_n"];
pub const FULL_FEATURES: [&str; 10] = [
    "bert_prob",
    "comment_n",
    "b",
    "p",
    "r",
    "mean_time",
    "n",
    "drift_flag",
    "item_type",
    "exam_score",
];

/// Which columns a variant consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    ScoreOnly,
    Comment,
    Full,
}

impl FeatureSet {
    pub fn names(self) -> &'static [&'static str] {
        match self {
            FeatureSet::ScoreOnly => &COMMENT_FEATURES[..1],
            FeatureSet::Comment => &COMMENT_FEATURES,
            FeatureSet::Full => &FULL_FEATURES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub comment_id: String,
    pub item_id: String,
    pub bert_prob: f64,
    pub comment_n: usize,
    pub b: Option<f64>,
    pub p: Option<f64>,
    pub r: Option<f64>,
    pub mean_time: Option<f64>,
    pub n: Option<usize>,
    pub drift_flag: Option<bool>,
    pub item_type: ItemType,
    pub exam_score: f64,
    pub label: Option<bool>,
}

impl FeatureVector {
    /// All ten columns in [`FULL_FEATURES`] order.
    pub fn full_row(&self) -> [f64; 10] {
        let nan = |v: Option<f64>| v.unwrap_or(f64::NAN);
        [
            self.bert_prob,
            self.comment_n as f64,
            nan(self.b),
            nan(self.p),
            nan(self.r),
            nan(self.mean_time),
            nan(self.n.map(|n| n as f64)),
            nan(self.drift_flag.map(|f| f64::from(u8::from(f)))),
            match self.item_type {
                ItemType::Operational => 0.0,
                ItemType::Pretest => 1.0,
            },
            self.exam_score,
        ]
    }
}

/// One row per comment in `comment_id` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub rows: Vec<FeatureVector>,
}

impl FeatureTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Columns of the variant's feature set, in documented order.
    pub fn matrix(&self, variant: Variant) -> Matrix {
        let width = variant.feature_set().names().len();
        let mut data = Vec::with_capacity(self.rows.len() * width);
        for row in &self.rows {
            data.extend_from_slice(&row.full_row()[..width]);
        }
        Matrix::new(self.rows.len(), width, data).expect("row width matches feature set")
    }

    /// Positions of labeled rows and their labels.
    pub fn labeled(&self) -> (Vec<usize>, Vec<bool>) {
        self.rows
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.label.map(|l| (i, l)))
            .unzip()
    }

    pub fn position(&self, comment_id: &str) -> Option<usize> {
        self.rows
            .binary_search_by(|r| r.comment_id.as_str().cmp(comment_id))
            .ok()
    }
}

/// Joins scorer probabilities, comment counts, item statistics and exam
/// scores onto every comment.
pub fn assemble_features(
    dataset: &Dataset,
    stats: &BTreeMap<String, ItemStatistics>,
    scores: &BTreeMap<String, f64>,
) -> Result<FeatureTable> {
    let counts = dataset.comment_counts();
    let mut rows = Vec::with_capacity(dataset.comments().len());
    for c in dataset.comments() {
        let bert_prob = *scores.get(&c.comment_id).ok_or_else(|| {
            Error::MissingPrerequisite(format!("no scorer probability for comment {} (run `score`)", c.comment_id))
        })?;
        let item = dataset.item(&c.item_id).ok_or_else(|| Error::UnknownItem(c.item_id.clone()))?;
        let candidate = dataset
            .candidate(&c.candidate_id)
            .ok_or_else(|| Error::UnknownCandidate(c.candidate_id.clone()))?;
        let s = stats.get(&c.item_id);
        rows.push(FeatureVector {
            comment_id: c.comment_id.clone(),
            item_id: c.item_id.clone(),
            bert_prob,
            comment_n: counts[&c.item_id],
            b: s.and_then(|s| s.b),
            p: s.and_then(|s| s.p),
            r: s.and_then(|s| s.r),
            mean_time: s.and_then(|s| s.mean_time),
            n: s.map(|s| s.n),
            drift_flag: s.map(|s| s.drift_flag),
            item_type: item.item_type,
            exam_score: candidate.exam_score,
            label: match c.label {
                Label::Relevant => Some(true),
                Label::NotRelevant => Some(false),
                Label::Unlabeled => None,
            },
        });
    }
    rows.sort_by(|a, b| a.comment_id.cmp(&b.comment_id));
    Ok(FeatureTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::fixtures::{comment, item, response};
    use crate::data::synth::{generate_synthetic, SynthSpec};
    use crate::data::CandidateRecord;
    use crate::psychometrics::io::{write_item_stats, ITEM_STATS_FILE};
    use crate::psychometrics::{compute_item_statistics, PsychometricsConfig};
    use rand::seq::index::sample;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> Dataset {
        let items = vec![item("X", ItemType::Operational, None), item("Y", ItemType::Pretest, None)];
        let candidates = vec![CandidateRecord::new("c1", "F"), CandidateRecord::new("c2", "F")];
        let responses = vec![
            response("c1", "X", "A", 10.0),
            response("c2", "X", "B", 12.0),
            response("c1", "Y", "A", 8.0),
        ];
        let comments = vec![
            comment("k3", "c1", "X", "typo", Label::Relevant),
            comment("k1", "c2", "X", "fine", Label::NotRelevant),
            comment("k2", "c1", "X", "hmm", Label::Unlabeled),
            comment("k4", "c2", "Y", "ok", Label::Unlabeled),
        ];
        Dataset::new(items, candidates, responses, comments).unwrap()
    }

    fn scores(ds: &Dataset, p: f64) -> BTreeMap<String, f64> {
        ds.comments().iter().map(|c| (c.comment_id.clone(), p)).collect()
    }

    #[test]
    fn comment_counts_and_order() {
        let ds = small();
        let t = assemble_features(&ds, &BTreeMap::new(), &scores(&ds, 0.3)).unwrap();
        let ids: Vec<_> = t.rows.iter().map(|r| r.comment_id.as_str()).collect();
        assert_eq!(ids, ["k1", "k2", "k3", "k4"]);
        assert_eq!(t.rows.iter().map(|r| r.comment_n).collect::<Vec<_>>(), [3, 3, 3, 1]);
        assert_eq!(t.labeled(), (vec![0, 2], vec![false, true]));
        assert_eq!(t.rows[3].full_row()[8], 1.0);
    }

    #[test]
    fn matrix_widths() {
        let ds = small();
        let t = assemble_features(&ds, &BTreeMap::new(), &scores(&ds, 0.3)).unwrap();
        assert_eq!(t.matrix(Variant::M1).n_cols(), 1);
        assert_eq!(t.matrix(Variant::M2).n_cols(), 2);
        assert_eq!(t.matrix(Variant::M3).n_cols(), 2);
        assert_eq!(t.matrix(Variant::M4).n_cols(), 10);
        // Same columns for both learners (NaN-aware comparison).
        assert_eq!(format!("{:?}", t.matrix(Variant::M4)), format!("{:?}", t.matrix(Variant::M5)));
        // No statistics: psychometric columns are missing.
        assert!(t.matrix(Variant::M4).get(0, 2).is_nan());
    }

    #[test]
    fn missing_score_is_a_prerequisite_error() {
        let ds = small();
        let mut s = scores(&ds, 0.3);
        s.remove("k2");
        assert!(matches!(
            assemble_features(&ds, &BTreeMap::new(), &s),
            Err(Error::MissingPrerequisite(_))
        ));
    }

    #[test]
    fn joined_statistics_match_the_csv_bytes() {
        let spec = SynthSpec {
            comment_rate: 0.05,
            ..SynthSpec::rasch_only(20, 300)
        };
        let (ds, _) = generate_synthetic(&spec, 3).unwrap();
        let report = compute_item_statistics(&ds, &PsychometricsConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(ITEM_STATS_FILE);
        write_item_stats(&report.items, &path).unwrap();

        // Independent reading: raw CSV fields by item.
        let text = std::fs::read_to_string(&path).unwrap();
        let fields: BTreeMap<String, Vec<String>> = text
            .lines()
            .skip(1)
            .map(|l| {
                let f: Vec<String> = l.split(',').map(str::to_string).collect();
                (f[0].clone(), f)
            })
            .collect();

        let t = assemble_features(&ds, &report.items, &scores(&ds, 0.5)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let render = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for i in sample(&mut rng, t.len(), 20) {
            let row = &t.rows[i];
            let f = &fields[&row.item_id];
            assert_eq!(render(row.b), f[1]);
            assert_eq!(render(row.p), f[2]);
            assert_eq!(render(row.r), f[3]);
            assert_eq!(render(row.mean_time), f[4]);
            assert_eq!(row.n.unwrap().to_string(), f[5]);
            assert_eq!(u8::from(row.drift_flag.unwrap()).to_string(), f[9]);
        }
    }
}
