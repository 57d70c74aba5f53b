//! Item statistics used both as model features and as statistical flags.

pub mod classical;
pub mod drift;
pub mod fit;
pub mod flags;
pub mod io;
pub mod rasch;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, ItemType};
use crate::Result;

pub use classical::{classical_item_stats, ClassicalStats, OptionStat};
pub use drift::{drift_check, DriftReport, DriftResult};
pub use fit::{fit_statistics, ItemFit};
pub use flags::{statistical_flags, FlagReason, FlagRuleConfig};
pub use rasch::{rasch_calibrate, CalibrationResult, RaschOptions, ResponseMatrix};

/// The point-biserial variant used everywhere in this crate.
pub const POINT_BISERIAL_VARIANT: &str = "corrected: item score vs rest score (operational total minus the item)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemStatistics {
    pub item_id: String,
    pub item_type: ItemType,
    pub b: Option<f64>,
    pub p: Option<f64>,
    pub r: Option<f64>,
    pub mean_time: Option<f64>,
    pub n: usize,
    pub infit: Option<f64>,
    pub outfit: Option<f64>,
    pub drift_magnitude: Option<f64>,
    pub drift_flag: bool,
    pub option_stats: Vec<OptionStat>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PsychometricsConfig {
    pub rasch: RaschOptions,
    pub flags: FlagRuleConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsychometricsReport {
    pub items: BTreeMap<String, ItemStatistics>,
    pub calibration: CalibrationResult,
    pub flags: BTreeMap<String, Vec<FlagReason>>,
    pub drift_link_constant: Option<f64>,
    pub warnings: Vec<String>,
}

/// Runs classical statistics, calibration, fit, drift and flag rules over
/// the included responses of a cleaned dataset.
pub fn compute_item_statistics(dataset: &Dataset, config: &PsychometricsConfig) -> Result<PsychometricsReport> {
    config.flags.validate()?;
    let classical = classical_item_stats(dataset);
    let calibration = rasch_calibrate(dataset, &config.rasch)?;
    let fit = fit_statistics(dataset, &calibration);
    let drift = drift_check(dataset.items(), &calibration, config.flags.drift_threshold);

    let mut items = BTreeMap::new();
    for item in dataset.items() {
        let id = &item.item_id;
        let c = &classical[id];
        let f = fit.get(id);
        let d = drift.per_item.get(id).copied().unwrap_or(DriftResult {
            magnitude: None,
            flag: false,
        });
        items.insert(
            id.clone(),
            ItemStatistics {
                item_id: id.clone(),
                item_type: item.item_type,
                b: calibration.b.get(id).copied(),
                p: c.p,
                r: c.r,
                mean_time: c.mean_time,
                n: c.n,
                infit: f.map(|f| f.infit),
                outfit: f.map(|f| f.outfit),
                drift_magnitude: d.magnitude,
                drift_flag: d.flag,
                option_stats: c.option_stats.clone(),
            },
        );
    }
    let flags = statistical_flags(&items, &config.flags);
    Ok(PsychometricsReport {
        items,
        calibration,
        flags,
        drift_link_constant: drift.link_constant,
        warnings: drift.warnings,
    })
}
