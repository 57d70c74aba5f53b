//! Statistical item flag rules.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ItemStatistics;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlagRuleConfig {
    pub p_min: f64,
    pub p_max: f64,
    pub r_min: f64,
    pub drift_threshold: f64,
    pub fit_min: f64,
    pub fit_max: f64,
}

impl Default for FlagRuleConfig {
    fn default() -> Self {
        FlagRuleConfig {
            p_min: 0.20,
            p_max: 0.95,
            r_min: 0.10,
            drift_threshold: 0.5,
            fit_min: 0.7,
            fit_max: 1.3,
        }
    }
}

impl FlagRuleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_min < self.p_max) {
            return Err(Error::InvalidArgument("p_min must be below p_max".into()));
        }
        if !(self.r_min > -1.0 && self.r_min < 1.0) {
            return Err(Error::InvalidArgument("r_min must lie in (-1, 1)".into()));
        }
        if !(self.fit_min < self.fit_max) || self.fit_min < 0.0 {
            return Err(Error::InvalidArgument("invalid fit mean-square interval".into()));
        }
        if !(self.drift_threshold >= 0.0) {
            return Err(Error::InvalidArgument("drift threshold must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagReason {
    TooEasy,
    TooHard,
    LowDiscrimination,
    Drift,
    Misfit,
    KeyedOptionSuspect,
}

impl FlagReason {
    pub fn as_str(self) -> &'static str {
        match self {
            FlagReason::TooEasy => "too_easy",
            FlagReason::TooHard => "too_hard",
            FlagReason::LowDiscrimination => "low_discrimination",
            FlagReason::Drift => "drift",
            FlagReason::Misfit => "misfit",
            FlagReason::KeyedOptionSuspect => "keyed_option_suspect",
        }
    }
}

/// Reasons per item; items with no reason map to an empty list.
pub fn statistical_flags(
    stats: &BTreeMap<String, ItemStatistics>,
    config: &FlagRuleConfig,
) -> BTreeMap<String, Vec<FlagReason>> {
    stats
        .iter()
        .map(|(id, s)| (id.clone(), item_flags(s, config)))
        .collect()
}

fn item_flags(s: &ItemStatistics, config: &FlagRuleConfig) -> Vec<FlagReason> {
    let mut reasons = Vec::new();
    if let Some(p) = s.p {
        if p > config.p_max {
            reasons.push(FlagReason::TooEasy);
        }
        if p < config.p_min {
            reasons.push(FlagReason::TooHard);
        }
    }
    if s.r.is_some_and(|r| r < config.r_min) {
        reasons.push(FlagReason::LowDiscrimination);
    }
    if s.drift_flag {
        reasons.push(FlagReason::Drift);
    }
    let outside = |v: Option<f64>| v.is_some_and(|v| v < config.fit_min || v > config.fit_max);
    if outside(s.infit) || outside(s.outfit) {
        reasons.push(FlagReason::Misfit);
    }
    let key_r = s
        .option_stats
        .iter()
        .find(|o| o.is_key)
        .and_then(|o| o.option_r)
        .unwrap_or(f64::NEG_INFINITY);
    if s
        .option_stats
        .iter()
        .filter(|o| !o.is_key)
        .any(|o| o.option_r.is_some_and(|r| r > key_r))
    {
        reasons.push(FlagReason::KeyedOptionSuspect);
    }
    reasons
}
