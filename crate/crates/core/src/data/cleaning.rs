//! Candidate exclusion rules applied before any item statistic is computed.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::{Error, Result};

/// Threshold rules. The defaults exclude nobody.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleaningRules {
    /// Candidates whose summed response time is below this are excluded.
    pub min_total_time_sec: f64,
    /// Candidates with fewer non-omitted responses are excluded.
    pub min_items_answered: u32,
    pub excluded_candidate_ids: BTreeSet<String>,
}

impl CleaningRules {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_total_time_sec >= 0.0 && self.min_total_time_sec.is_finite()) {
            return Err(Error::InvalidArgument(
                "min_total_time_sec must be a nonnegative number".into(),
            ));
        }
        Ok(())
    }
}

impl Dataset {
    /// Marks every candidate as included or not according to `rules`.
    ///
    /// Inclusion is recomputed from scratch, so applying the same rules twice
    /// is a no-op. Comments from excluded candidates are kept and flagged.
    pub fn apply_cleaning(&self, rules: &CleaningRules) -> Result<Dataset> {
        rules.validate()?;
        let mut total_time: HashMap<&str, f64> = HashMap::new();
        let mut answered: HashMap<&str, u32> = HashMap::new();
        for r in &self.responses {
            *total_time.entry(&r.candidate_id).or_insert(0.0) += r.response_time_sec;
            if !r.is_omitted() {
                *answered.entry(&r.candidate_id).or_insert(0) += 1;
            }
        }

        let mut out = self.clone();
        for c in &mut out.candidates {
            let id = c.candidate_id.as_str();
            let time = total_time.get(id).copied().unwrap_or(0.0);
            let n = answered.get(id).copied().unwrap_or(0);
            c.included = time >= rules.min_total_time_sec
                && n >= rules.min_items_answered
                && !rules.excluded_candidate_ids.contains(id);
        }
        for comment in &mut out.comments {
            let cand = &out.candidates[out.candidate_index[&comment.candidate_id]];
            comment.from_excluded_candidate = !cand.included;
        }
        out.cleaning = rules.clone();
        let excluded = out.candidates.iter().filter(|c| !c.included).count();
        if excluded > 0 {
            log::info!(
                "cleaning excluded {excluded} of {} candidates",
                out.candidates.len()
            );
        }
        Ok(out)
    }
}
