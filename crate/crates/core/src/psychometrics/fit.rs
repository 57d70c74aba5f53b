//! Rasch infit and outfit mean-square statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::rasch::CalibrationResult;
use crate::data::Dataset;
use crate::numeric::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItemFit {
    /// Information-weighted mean square: sum of squared residuals over summed
    /// model variance.
    pub infit: f64,
    /// Unweighted mean of squared standardized residuals.
    pub outfit: f64,
    pub n: usize,
}

/// Fit of every item with at least one included response from a person with
/// an ability estimate. Other items are absent from the map.
pub fn fit_statistics(dataset: &Dataset, calibration: &CalibrationResult) -> BTreeMap<String, ItemFit> {
    let mut acc: BTreeMap<&str, (f64, f64, f64, usize)> = BTreeMap::new();
    for r in dataset.included_responses() {
        let (Some(&theta), Some(&b)) = (
            calibration.theta.get(&r.candidate_id),
            calibration.b.get(&r.item_id),
        ) else {
            continue;
        };
        let e = sigmoid(theta - b);
        let w = e * (1.0 - e);
        let x = f64::from(u8::from(r.correct));
        let sq = (x - e) * (x - e);
        let entry = acc.entry(r.item_id.as_str()).or_insert((0.0, 0.0, 0.0, 0));
        entry.0 += sq / w;
        entry.1 += sq;
        entry.2 += w;
        entry.3 += 1;
    }
    acc.into_iter()
        .map(|(id, (z2, sq, w, n))| {
            (
                id.to_string(),
                ItemFit {
                    infit: sq / w,
                    outfit: z2 / n as f64,
                    n,
                },
            )
        })
        .collect()
}
