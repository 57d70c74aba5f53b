//! Canonical data model: items, candidates, responses and comments.
//!
//! A [`Dataset`] is always cross-linked: every response and comment resolves
//! to a known item and candidate, `correct` is derived from the item key, and
//! candidate scores are recomputed from the responses. Construct one with
//! [`Dataset::new`], [`io::load_dataset`] or [`synth::generate_synthetic`].

pub mod cleaning;
pub mod io;
pub mod synth;

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use cleaning::CleaningRules;

/// Sentinel `selected_option` for an item the candidate saw but did not answer.
pub const OMITTED: &str = "omitted";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemType {
    Operational,
    Pretest,
}

impl ItemType {
    pub fn as_str(self) -> &'static str {
        match self {
            ItemType::Operational => "operational",
            ItemType::Pretest => "pretest",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "operational" => Some(ItemType::Operational),
            "pretest" => Some(ItemType::Pretest),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub item_id: String,
    pub form_id: String,
    pub item_type: ItemType,
    pub key_option: String,
    pub option_ids: Vec<String>,
    /// Banked difficulty from a prior calibration, used for drift.
    pub bank_difficulty: Option<f64>,
}

impl ItemRecord {
    fn validate(&self) -> Result<()> {
        if self.item_id.trim().is_empty() {
            return Err(Error::InvalidRecord("empty item id".into()));
        }
        if self.option_ids.is_empty() {
            return Err(Error::InvalidRecord(format!(
                "item {}: no options",
                self.item_id
            )));
        }
        let unique: HashSet<&String> = self.option_ids.iter().collect();
        if unique.len() != self.option_ids.len() {
            return Err(Error::InvalidRecord(format!(
                "item {}: duplicate option ids",
                self.item_id
            )));
        }
        if self.option_ids.iter().any(|o| o == OMITTED) {
            return Err(Error::InvalidRecord(format!(
                "item {}: option id {OMITTED:?} is reserved",
                self.item_id
            )));
        }
        if !self.option_ids.contains(&self.key_option) {
            return Err(Error::InvalidRecord(format!(
                "item {}: key {:?} not among options",
                self.item_id, self.key_option
            )));
        }
        if let Some(b) = self.bank_difficulty {
            if !b.is_finite() {
                return Err(Error::InvalidRecord(format!(
                    "item {}: non-finite bank difficulty",
                    self.item_id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseEvent {
    pub candidate_id: String,
    pub item_id: String,
    pub form_id: String,
    /// Option id, or [`OMITTED`].
    pub selected_option: String,
    pub correct: bool,
    pub response_time_sec: f64,
}

impl ResponseEvent {
    pub fn is_omitted(&self) -> bool {
        self.selected_option == OMITTED
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub candidate_id: String,
    pub form_id: String,
    /// Correct operational responses.
    pub raw_score: u32,
    /// `raw_score` over operational items administered, in `[0, 1]`.
    pub exam_score: f64,
    pub theta: Option<f64>,
    pub included: bool,
}

impl CandidateRecord {
    pub fn new(candidate_id: impl Into<String>, form_id: impl Into<String>) -> Self {
        CandidateRecord {
            candidate_id: candidate_id.into(),
            form_id: form_id.into(),
            raw_score: 0,
            exam_score: 0.0,
            theta: None,
            included: true,
        }
    }
}

/// Review label of a comment: 1 means it was sent to the item review meeting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Label {
    Relevant,
    NotRelevant,
    #[default]
    Unlabeled,
}

impl Label {
    pub fn from_code(code: Option<u8>) -> Result<Self> {
        match code {
            Some(1) => Ok(Label::Relevant),
            Some(0) => Ok(Label::NotRelevant),
            None => Ok(Label::Unlabeled),
            Some(other) => Err(Error::InvalidRecord(format!(
                "label must be 0 or 1, got {other}"
            ))),
        }
    }

    pub fn code(self) -> Option<u8> {
        match self {
            Label::Relevant => Some(1),
            Label::NotRelevant => Some(0),
            Label::Unlabeled => None,
        }
    }

    pub fn is_labeled(self) -> bool {
        self != Label::Unlabeled
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommentRecord {
    pub comment_id: String,
    pub candidate_id: String,
    pub item_id: String,
    pub text: String,
    pub label: Label,
    pub reviewer_note: Option<String>,
    /// Set by cleaning when the author was excluded. Excluded candidates'
    /// comments stay in the table and are still scored.
    pub from_excluded_candidate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    items: Vec<ItemRecord>,
    candidates: Vec<CandidateRecord>,
    responses: Vec<ResponseEvent>,
    comments: Vec<CommentRecord>,
    cleaning: CleaningRules,
    item_index: HashMap<String, usize>,
    candidate_index: HashMap<String, usize>,
    comment_index: HashMap<String, usize>,
}

impl Dataset {
    /// Validates referential integrity and derives `correct`, raw and exam
    /// scores. Incoming `correct`, `raw_score` and `exam_score` values are
    /// ignored.
    pub fn new(
        items: Vec<ItemRecord>,
        candidates: Vec<CandidateRecord>,
        mut responses: Vec<ResponseEvent>,
        comments: Vec<CommentRecord>,
    ) -> Result<Self> {
        let mut item_index = HashMap::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            item.validate()?;
            if item_index.insert(item.item_id.clone(), i).is_some() {
                return Err(Error::InvalidRecord(format!(
                    "duplicate item id {:?}",
                    item.item_id
                )));
            }
        }
        let mut candidate_index = HashMap::with_capacity(candidates.len());
        for (i, c) in candidates.iter().enumerate() {
            if candidate_index.insert(c.candidate_id.clone(), i).is_some() {
                return Err(Error::InvalidRecord(format!(
                    "duplicate candidate id {:?}",
                    c.candidate_id
                )));
            }
        }

        let mut seen = HashSet::with_capacity(responses.len());
        for r in responses.iter_mut() {
            let item = item_index
                .get(&r.item_id)
                .map(|&i| &items[i])
                .ok_or_else(|| Error::UnknownItem(r.item_id.clone()))?;
            if !candidate_index.contains_key(&r.candidate_id) {
                return Err(Error::UnknownCandidate(r.candidate_id.clone()));
            }
            if !seen.insert((r.candidate_id.clone(), r.item_id.clone())) {
                return Err(Error::DuplicateResponse {
                    candidate: r.candidate_id.clone(),
                    item: r.item_id.clone(),
                });
            }
            if !(r.response_time_sec >= 0.0 && r.response_time_sec.is_finite()) {
                return Err(Error::InvalidRecord(format!(
                    "response {}/{}: response time must be a nonnegative number",
                    r.candidate_id, r.item_id
                )));
            }
            if !r.is_omitted() && !item.option_ids.contains(&r.selected_option) {
                return Err(Error::InvalidRecord(format!(
                    "response {}/{}: option {:?} not offered by the item",
                    r.candidate_id, r.item_id, r.selected_option
                )));
            }
            r.correct = r.selected_option == item.key_option;
        }

        let mut comment_index = HashMap::with_capacity(comments.len());
        for (i, c) in comments.iter().enumerate() {
            if comment_index.insert(c.comment_id.clone(), i).is_some() {
                return Err(Error::DuplicateComment(c.comment_id.clone()));
            }
            if !item_index.contains_key(&c.item_id) {
                return Err(Error::UnknownItem(c.item_id.clone()));
            }
            if !candidate_index.contains_key(&c.candidate_id) {
                return Err(Error::UnknownCandidate(c.candidate_id.clone()));
            }
            if c.text.trim().is_empty() {
                return Err(Error::InvalidRecord(format!(
                    "comment {}: empty text",
                    c.comment_id
                )));
            }
        }

        let mut ds = Dataset {
            items,
            candidates,
            responses,
            comments,
            cleaning: CleaningRules::default(),
            item_index,
            candidate_index,
            comment_index,
        };
        ds.recompute_scores();
        Ok(ds)
    }

    fn recompute_scores(&mut self) {
        let mut raw = vec![0u32; self.candidates.len()];
        let mut administered = vec![0u32; self.candidates.len()];
        for r in &self.responses {
            let item = &self.items[self.item_index[&r.item_id]];
            if item.item_type != ItemType::Operational {
                continue;
            }
            let c = self.candidate_index[&r.candidate_id];
            administered[c] += 1;
            if r.correct {
                raw[c] += 1;
            }
        }
        for (i, c) in self.candidates.iter_mut().enumerate() {
            c.raw_score = raw[i];
            c.exam_score = if administered[i] == 0 {
                0.0
            } else {
                raw[i] as f64 / administered[i] as f64
            };
        }
    }

    pub fn items(&self) -> &[ItemRecord] {
        &self.items
    }

    pub fn candidates(&self) -> &[CandidateRecord] {
        &self.candidates
    }

    pub fn responses(&self) -> &[ResponseEvent] {
        &self.responses
    }

    pub fn comments(&self) -> &[CommentRecord] {
        &self.comments
    }

    pub fn cleaning_rules(&self) -> &CleaningRules {
        &self.cleaning
    }

    pub fn item(&self, item_id: &str) -> Option<&ItemRecord> {
        self.item_index.get(item_id).map(|&i| &self.items[i])
    }

    pub fn candidate(&self, candidate_id: &str) -> Option<&CandidateRecord> {
        self.candidate_index
            .get(candidate_id)
            .map(|&i| &self.candidates[i])
    }

    pub fn comment(&self, comment_id: &str) -> Option<&CommentRecord> {
        self.comment_index
            .get(comment_id)
            .map(|&i| &self.comments[i])
    }

    pub fn item_position(&self, item_id: &str) -> Option<usize> {
        self.item_index.get(item_id).copied()
    }

    pub fn candidate_position(&self, candidate_id: &str) -> Option<usize> {
        self.candidate_index.get(candidate_id).copied()
    }

    /// Responses whose candidate survived cleaning.
    pub fn included_responses(&self) -> impl Iterator<Item = &ResponseEvent> {
        self.responses
            .iter()
            .filter(move |r| self.candidates[self.candidate_index[&r.candidate_id]].included)
    }

    pub fn included_candidate_count(&self) -> usize {
        self.candidates.iter().filter(|c| c.included).count()
    }

    pub fn operational_item_count(&self) -> usize {
        self.items
            .iter()
            .filter(|i| i.item_type == ItemType::Operational)
            .count()
    }

    /// Overrides a comment's label (the label-log view).
    pub fn set_label(&mut self, comment_id: &str, label: Label) -> Result<()> {
        let i = *self
            .comment_index
            .get(comment_id)
            .ok_or_else(|| Error::UnknownComment(comment_id.to_string()))?;
        self.comments[i].label = label;
        Ok(())
    }

    /// Stores calibrated abilities on the candidate records.
    pub fn set_thetas(&mut self, thetas: &BTreeMap<String, f64>) {
        for c in &mut self.candidates {
            c.theta = thetas.get(&c.candidate_id).copied();
        }
    }

    /// Comment counts per item, over all comments regardless of label or
    /// author exclusion.
    pub fn comment_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for c in &self.comments {
            *counts.entry(c.item_id.clone()).or_insert(0) += 1;
        }
        counts
    }

    pub fn summary(&self) -> DatasetSummary {
        DatasetSummary {
            items: self.items.len(),
            candidates: self.candidates.len(),
            included_candidates: self.included_candidate_count(),
            responses: self.responses.len(),
            comments: self.comments.len(),
            labeled_comments: self.comments.iter().filter(|c| c.label.is_labeled()).count(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DatasetSummary {
    pub items: usize,
    pub candidates: usize,
    pub included_candidates: usize,
    pub responses: usize,
    pub comments: usize,
    pub labeled_comments: usize,
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn item(id: &str, item_type: ItemType, bank: Option<f64>) -> ItemRecord {
        ItemRecord {
            item_id: id.into(),
            form_id: "F1".into(),
            item_type,
            key_option: "A".into(),
            option_ids: vec!["A".into(), "B".into(), "C".into(), "D".into()],
            bank_difficulty: bank,
        }
    }

    pub fn response(cand: &str, item: &str, opt: &str, time: f64) -> ResponseEvent {
        ResponseEvent {
            candidate_id: cand.into(),
            item_id: item.into(),
            form_id: "F1".into(),
            selected_option: opt.into(),
            correct: false,
            response_time_sec: time,
        }
    }

    pub fn comment(id: &str, cand: &str, item: &str, text: &str, label: Label) -> CommentRecord {
        CommentRecord {
            comment_id: id.into(),
            candidate_id: cand.into(),
            item_id: item.into(),
            text: text.into(),
            label,
            reviewer_note: None,
            from_excluded_candidate: false,
        }
    }
}
