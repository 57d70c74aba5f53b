//! Classical test theory statistics per item and per option.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, ItemType};
use crate::numeric::pearson;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionStat {
    pub option_id: String,
    /// Share of the item's included responses selecting this option.
    pub prop: f64,
    /// Option-selected indicator correlated with the rest score.
    pub option_r: Option<f64>,
    pub is_key: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalStats {
    pub p: Option<f64>,
    pub r: Option<f64>,
    pub mean_time: Option<f64>,
    pub n: usize,
    pub option_stats: Vec<OptionStat>,
}

/// Rest score of a candidate for an item: correct operational responses
/// excluding the item itself. Pretest items are not part of the total.
fn rest_score(raw: u32, item_type: ItemType, correct: bool) -> f64 {
    let own = u32::from(item_type == ItemType::Operational && correct);
    (raw - own) as f64
}

/// p, corrected point-biserial, mean time, exposure and option statistics
/// over included candidates. Items without included responses get `n = 0`
/// and absent statistics.
pub fn classical_item_stats(dataset: &Dataset) -> BTreeMap<String, ClassicalStats> {
    let mut by_item: HashMap<&str, Vec<usize>> = HashMap::new();
    let responses = dataset.responses();
    for (idx, r) in responses.iter().enumerate() {
        let cand = &dataset.candidates()[dataset.candidate_position(&r.candidate_id).unwrap()];
        if cand.included {
            by_item.entry(r.item_id.as_str()).or_default().push(idx);
        }
    }

    let mut out = BTreeMap::new();
    for item in dataset.items() {
        let idxs = by_item.get(item.item_id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        let n = idxs.len();
        let mut scores = Vec::with_capacity(n);
        let mut rest = Vec::with_capacity(n);
        let mut time_sum = 0.0;
        for &i in idxs {
            let r = &responses[i];
            let cand = dataset.candidate(&r.candidate_id).unwrap();
            scores.push(if r.correct { 1.0 } else { 0.0 });
            rest.push(rest_score(cand.raw_score, item.item_type, r.correct));
            time_sum += r.response_time_sec;
        }
        let nf = n as f64;
        let option_stats = item
            .option_ids
            .iter()
            .map(|opt| {
                let chosen: Vec<f64> = idxs
                    .iter()
                    .map(|&i| if &responses[i].selected_option == opt { 1.0 } else { 0.0 })
                    .collect();
                let count = chosen.iter().sum::<f64>();
                OptionStat {
                    option_id: opt.clone(),
                    prop: if n == 0 { 0.0 } else { count / nf },
                    option_r: pearson(&chosen, &rest),
                    is_key: *opt == item.key_option,
                }
            })
            .collect();
        out.insert(
            item.item_id.clone(),
            ClassicalStats {
                p: (n > 0).then(|| scores.iter().sum::<f64>() / nf),
                r: pearson(&scores, &rest),
                mean_time: (n > 0).then(|| time_sum / nf),
                n,
                option_stats,
            },
        );
    }
    out
}
