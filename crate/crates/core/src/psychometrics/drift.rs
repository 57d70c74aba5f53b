//! Item parameter drift against banked difficulties, linked by mean
//! difference over the items that have both values.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::rasch::CalibrationResult;
use crate::data::ItemRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftResult {
    pub magnitude: Option<f64>,
    pub flag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub per_item: BTreeMap<String, DriftResult>,
    /// `mean(b_hat) - mean(bank)` over linkable items, when linking ran.
    pub link_constant: Option<f64>,
    pub warnings: Vec<String>,
}

pub fn drift_check(items: &[ItemRecord], calibration: &CalibrationResult, threshold: f64) -> DriftReport {
    let linkable: Vec<(&str, f64, f64)> = items
        .iter()
        .filter_map(|it| {
            let bank = it.bank_difficulty?;
            let b = *calibration.b.get(&it.item_id)?;
            Some((it.item_id.as_str(), b, bank))
        })
        .collect();

    let mut per_item: BTreeMap<String, DriftResult> = items
        .iter()
        .map(|it| {
            (
                it.item_id.clone(),
                DriftResult {
                    magnitude: None,
                    flag: false,
                },
            )
        })
        .collect();

    if linkable.len() < 2 {
        let msg = format!(
            "drift linking skipped: {} linkable item(s), need at least 2",
            linkable.len()
        );
        log::warn!("{msg}");
        return DriftReport {
            per_item,
            link_constant: None,
            warnings: vec![msg],
        };
    }

    let n = linkable.len() as f64;
    let link = linkable.iter().map(|(_, b, _)| b).sum::<f64>() / n
        - linkable.iter().map(|(_, _, bank)| bank).sum::<f64>() / n;
    for (id, b, bank) in linkable {
        let magnitude = (b - link - bank).abs();
        per_item.insert(
            id.to_string(),
            DriftResult {
                magnitude: Some(magnitude),
                flag: magnitude > threshold,
            },
        );
    }
    DriftReport {
        per_item,
        link_constant: Some(link),
        warnings: Vec::new(),
    }
}
