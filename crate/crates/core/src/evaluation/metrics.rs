//! Confusion counts and the derived metric set.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        ConfusionCounts { tp, fp, fn_, tn }
    }

    pub fn population(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Number of predicted positives (FP+TP).
    pub fn flagged(&self) -> u64 {
        self.tp + self.fp
    }

    pub fn add(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    /// Tally over aligned prediction and truth slices.
    pub fn from_pairs(predicted: &[bool], actual: &[bool]) -> Self {
        assert_eq!(predicted.len(), actual.len());
        let mut c = ConfusionCounts::default();
        for (&p, &a) in predicted.iter().zip(actual) {
            c.add(p, a);
        }
        c
    }

    pub fn f1(&self) -> Option<f64> {
        MetricSet::from_counts(self).f1
    }
}

/// Confusion counts of `predicted` flags against review labels. Every
/// evaluated comment must carry a label.
pub fn confusion(predicted: &BTreeMap<String, bool>, labels: &BTreeMap<String, Label>) -> Result<ConfusionCounts> {
    let mut c = ConfusionCounts::default();
    for (id, &flag) in predicted {
        let actual = match labels.get(id) {
            Some(Label::Relevant) => true,
            Some(Label::NotRelevant) => false,
            _ => {
                return Err(Error::InsufficientData(format!(
                    "comment {id:?} has no label to evaluate against"
                )))
            }
        };
        c.add(flag, actual);
    }
    Ok(c)
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Metrics with 0/0 cells absent rather than NaN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub accuracy: Option<f64>,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    /// Share of the population flagged, (TP+FP)/population.
    pub actual_predictive_rate: Option<f64>,
}

impl MetricSet {
    pub fn from_counts(c: &ConfusionCounts) -> Self {
        let pop = c.population();
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fn_);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            _ => None,
        };
        MetricSet {
            accuracy: ratio(c.tp + c.tn, pop),
            fpr: ratio(c.fp, c.fp + c.tn),
            fnr: ratio(c.fn_, c.fn_ + c.tp),
            precision,
            recall,
            f1,
            actual_predictive_rate: ratio(c.tp + c.fp, pop),
        }
    }
}

/// Metrics for counts over a stated population, which must equal the sum of
/// the four cells.
pub fn metrics(counts: &ConfusionCounts, population: u64) -> Result<MetricSet> {
    if counts.population() != population {
        return Err(Error::InvalidArgument(format!(
            "population {population} differs from tp+fp+fn+tn = {}",
            counts.population()
        )));
    }
    Ok(MetricSet::from_counts(counts))
}
