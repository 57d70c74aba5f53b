//! Synthetic exam data with known ground truth.
//!
//! Responses follow the Rasch model `P(correct) = logistic(theta - b)`.
//! Defects are planted on a few operational items:
//!
//! * drift items: administered difficulty is `bank + drift_shift`;
//! * miskeyed items: the recorded key is a distractor, so the option chosen by
//!   able candidates is not the key;
//! * noisy items: responses are coin flips independent of ability.
//!
//! Comments come from three template pools. Relevant comments (label 1) use
//! defect vocabulary and are attached preferentially to defect items.
//! "Misleading" comments reuse that vocabulary but are written by low scorers
//! on easy, healthy items and are labeled 0, the way a reviewer would discount
//! them. Everything else is neutral chatter or generic complaints, label 0.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    CandidateRecord, CleaningRules, CommentRecord, Dataset, ItemRecord, ItemType, Label,
    ResponseEvent,
};
use crate::numeric::sigmoid;
use crate::{Error, Result};

const FORM_ID: &str = "F1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_operational: usize,
    pub n_pretest: usize,
    pub n_persons: usize,
    pub n_options: usize,
    pub b_min: f64,
    pub b_max: f64,
    pub theta_mean: f64,
    pub theta_sd: f64,
    /// Comments per (person, item) pair.
    pub comment_rate: f64,
    /// Share of comments that are planted relevant.
    pub relevant_rate: f64,
    /// Share of comments that sound relevant but are labeled 0.
    pub misleading_rate: f64,
    /// Share of planted relevant comments placed on defect items.
    pub defect_affinity: f64,
    pub speeder_rate: f64,
    pub n_drift_items: usize,
    pub drift_shift: f64,
    pub n_miskeyed: usize,
    pub n_noisy: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec::standard()
    }
}

impl SynthSpec {
    /// The standard fixture: 50 operational + 10 pretest items, 1000
    /// candidates, about 3000 comments of which 5% are planted relevant.
    pub fn standard() -> Self {
        SynthSpec {
            n_operational: 50,
            n_pretest: 10,
            n_persons: 1000,
            n_options: 4,
            b_min: -2.0,
            b_max: 2.0,
            theta_mean: 0.0,
            theta_sd: 1.0,
            comment_rate: 0.05,
            relevant_rate: 0.05,
            misleading_rate: 0.002,
            defect_affinity: 0.85,
            speeder_rate: 0.05,
            n_drift_items: 3,
            drift_shift: 0.8,
            n_miskeyed: 2,
            n_noisy: 2,
        }
    }

    /// Pure Rasch data: no defects, speeders or comments.
    pub fn rasch_only(n_items: usize, n_persons: usize) -> Self {
        SynthSpec {
            n_operational: n_items,
            n_pretest: 0,
            n_persons,
            comment_rate: 0.0,
            relevant_rate: 0.0,
            misleading_rate: 0.0,
            speeder_rate: 0.0,
            n_drift_items: 0,
            n_miskeyed: 0,
            n_noisy: 0,
            ..SynthSpec::standard()
        }
    }

    pub fn n_items(&self) -> usize {
        self.n_operational + self.n_pretest
    }

    /// A total-time cleaning threshold that separates planted speeders
    /// (at most 3 s per item) from regular candidates (at least 10 s per item).
    pub fn speeder_cleaning_rules(&self) -> CleaningRules {
        CleaningRules {
            min_total_time_sec: 5.0 * self.n_items() as f64,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_items() == 0 || self.n_persons == 0 {
            return Err(Error::InvalidArgument(
                "synthetic spec needs at least one item and one person".into(),
            ));
        }
        if self.n_options < 2 {
            return Err(Error::InvalidArgument("need at least two options".into()));
        }
        if self.b_min > self.b_max || self.theta_sd < 0.0 {
            return Err(Error::InvalidArgument("invalid difficulty or ability range".into()));
        }
        for (name, v) in [
            ("comment_rate", self.comment_rate),
            ("relevant_rate", self.relevant_rate),
            ("misleading_rate", self.misleading_rate),
            ("defect_affinity", self.defect_affinity),
            ("speeder_rate", self.speeder_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!("{name} must be in [0, 1]")));
            }
        }
        if self.relevant_rate + self.misleading_rate > 1.0 {
            return Err(Error::InvalidArgument(
                "relevant_rate + misleading_rate exceeds 1".into(),
            ));
        }
        if self.n_drift_items + self.n_miskeyed + self.n_noisy > self.n_operational {
            return Err(Error::InvalidArgument(
                "more planted defects than operational items".into(),
            ));
        }
        Ok(())
    }
}

/// What the generator knows and the pipeline has to rediscover.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SynthTruth {
    pub seed: u64,
    /// Difficulty the responses were drawn from.
    pub item_b: BTreeMap<String, f64>,
    pub theta: BTreeMap<String, f64>,
    pub drift_items: BTreeSet<String>,
    pub miskeyed_items: BTreeSet<String>,
    pub noisy_items: BTreeSet<String>,
    pub speeders: BTreeSet<String>,
    pub relevant_comments: BTreeSet<String>,
    pub misleading_comments: BTreeSet<String>,
}

impl SynthTruth {
    pub fn defect_items(&self) -> BTreeSet<String> {
        self.drift_items
            .iter()
            .chain(&self.miskeyed_items)
            .chain(&self.noisy_items)
            .cloned()
            .collect()
    }
}

const RELEVANT_TEMPLATES: &[&str] = &[
    "there are two correct answers to this question",
    "i think options {a} and {b} are both correct",
    "typo in option {a}",
    "the keyed answer looks wrong, {a} should be correct",
    "none of the options is correct here",
    "the stem refers to a deprecated version of the product",
    "option {a} contradicts the stem",
    "the exhibit is missing so this cannot be answered",
    "answer {a} and answer {b} say the same thing",
    "the scenario has an error in the numbers given",
];

const COMPLAINT_TEMPLATES: &[&str] = &[
    "this question was too hard",
    "i ran out of time on this one",
    "did not study this topic",
    "way too much reading for one item",
    "tricky wording, i just guessed",
    "i found this stressful",
    "not covered in my training course",
];

const NEUTRAL_TEMPLATES: &[&str] = &[
    "good question",
    "no comment",
    "nice one",
    "i enjoyed this item",
    "thanks",
    "fair question overall",
    "easy if you know the material",
    "marking this for review later",
];

const PREFIXES: &[&str] = &["", "", "", "hmm ", "honestly ", "ok so ", "note: "];
const SUFFIXES: &[&str] = &["", "", "", ".", "!", " please check", " thanks"];

fn render(template: &str, options: &[String], rng: &mut ChaCha8Rng) -> String {
    let mut picks = options.to_vec();
    picks.shuffle(rng);
    let body = template
        .replace("{a}", &picks[0].to_lowercase())
        .replace("{b}", &picks[1 % picks.len()].to_lowercase());
    let prefix = PREFIXES.choose(rng).unwrap();
    let suffix = SUFFIXES.choose(rng).unwrap();
    format!("{prefix}{body}{suffix}")
}

fn option_labels(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| {
            let c = (b'A' + (i % 26) as u8) as char;
            if i < 26 {
                c.to_string()
            } else {
                format!("{c}{}", i / 26)
            }
        })
        .collect()
}

/// Generates a dataset and its ground truth. Deterministic in `seed`.
pub fn generate_synthetic(spec: &SynthSpec, seed: u64) -> Result<(Dataset, SynthTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let options = option_labels(spec.n_options);
    let mut truth = SynthTruth {
        seed,
        ..Default::default()
    };

    // Items.
    let mut items = Vec::with_capacity(spec.n_items());
    let mut true_keys = Vec::with_capacity(spec.n_items());
    let mut item_b = Vec::with_capacity(spec.n_items());
    for i in 0..spec.n_items() {
        let (id, item_type) = if i < spec.n_operational {
            (format!("Q{:03}", i + 1), ItemType::Operational)
        } else {
            (format!("P{:03}", i - spec.n_operational + 1), ItemType::Pretest)
        };
        let b = rng.random_range(spec.b_min..=spec.b_max);
        let key = options[rng.random_range(0..options.len())].clone();
        items.push(ItemRecord {
            item_id: id,
            form_id: FORM_ID.into(),
            item_type,
            key_option: key.clone(),
            option_ids: options.clone(),
            bank_difficulty: (item_type == ItemType::Operational).then_some(b),
        });
        true_keys.push(key);
        item_b.push(b);
    }

    let mut operational: Vec<usize> = (0..spec.n_operational).collect();
    operational.shuffle(&mut rng);
    let mut planted = operational.into_iter();
    let drift: Vec<usize> = planted.by_ref().take(spec.n_drift_items).collect();
    let miskeyed: Vec<usize> = planted.by_ref().take(spec.n_miskeyed).collect();
    let noisy: Vec<usize> = planted.by_ref().take(spec.n_noisy).collect();
    for &i in &drift {
        item_b[i] += spec.drift_shift;
        truth.drift_items.insert(items[i].item_id.clone());
    }
    for &i in &miskeyed {
        let wrong: Vec<&String> = options.iter().filter(|o| **o != true_keys[i]).collect();
        items[i].key_option = (*wrong.choose(&mut rng).unwrap()).clone();
        truth.miskeyed_items.insert(items[i].item_id.clone());
    }
    let noisy_set: HashSet<usize> = noisy.iter().copied().collect();
    for &i in &noisy {
        truth.noisy_items.insert(items[i].item_id.clone());
    }
    for (item, &b) in items.iter().zip(&item_b) {
        truth.item_b.insert(item.item_id.clone(), b);
    }

    // Candidates.
    let n_speeders = (spec.speeder_rate * spec.n_persons as f64).round() as usize;
    let mut order: Vec<usize> = (0..spec.n_persons).collect();
    order.shuffle(&mut rng);
    let speeder_idx: HashSet<usize> = order[..n_speeders].iter().copied().collect();
    let theta_dist = (spec.theta_sd > 0.0).then(|| Normal::new(spec.theta_mean, spec.theta_sd).unwrap());
    let time_dist = Normal::new(60f64.ln(), 0.4).unwrap();
    let mut candidates = Vec::with_capacity(spec.n_persons);
    let mut thetas = Vec::with_capacity(spec.n_persons);
    for p in 0..spec.n_persons {
        let id = format!("C{:05}", p + 1);
        let theta = theta_dist
            .as_ref()
            .map(|d| d.sample(&mut rng))
            .unwrap_or(spec.theta_mean);
        truth.theta.insert(id.clone(), theta);
        if speeder_idx.contains(&p) {
            truth.speeders.insert(id.clone());
        }
        candidates.push(CandidateRecord::new(id, FORM_ID));
        thetas.push(theta);
    }

    // Responses.
    let mut responses = Vec::with_capacity(spec.n_persons * spec.n_items());
    for p in 0..spec.n_persons {
        let speeder = speeder_idx.contains(&p);
        for i in 0..spec.n_items() {
            let (selected, time) = if speeder {
                let opt = options.choose(&mut rng).unwrap().clone();
                (opt, rng.random_range(1.0..3.0))
            } else {
                let correct = if noisy_set.contains(&i) {
                    rng.random_bool(0.5)
                } else {
                    rng.random_bool(sigmoid(thetas[p] - item_b[i]))
                };
                let opt = if correct {
                    true_keys[i].clone()
                } else {
                    let distractors: Vec<&String> =
                        options.iter().filter(|o| **o != true_keys[i]).collect();
                    (*distractors.choose(&mut rng).unwrap()).clone()
                };
                let time: f64 = time_dist.sample(&mut rng).exp().max(10.0);
                (opt, time)
            };
            responses.push(ResponseEvent {
                candidate_id: candidates[p].candidate_id.clone(),
                item_id: items[i].item_id.clone(),
                form_id: FORM_ID.into(),
                selected_option: selected,
                correct: false,
                // Whole milliseconds keep the CSV export compact.
                response_time_sec: (time * 1000.0).round() / 1000.0,
            });
        }
    }

    let comments = plant_comments(spec, &mut rng, &items, &item_b, &thetas, &truth, &options)?;
    let mut comments_out = Vec::with_capacity(comments.len());
    for (idx, (cand, item, text, kind)) in comments.into_iter().enumerate() {
        let comment_id = format!("K{:06}", idx + 1);
        let label = match kind {
            CommentKind::Relevant => {
                truth.relevant_comments.insert(comment_id.clone());
                Label::Relevant
            }
            CommentKind::Misleading => {
                truth.misleading_comments.insert(comment_id.clone());
                Label::NotRelevant
            }
            CommentKind::Other => Label::NotRelevant,
        };
        comments_out.push(CommentRecord {
            comment_id,
            candidate_id: candidates[cand].candidate_id.clone(),
            item_id: items[item].item_id.clone(),
            text,
            label,
            reviewer_note: None,
            from_excluded_candidate: false,
        });
    }

    let dataset = Dataset::new(items, candidates, responses, comments_out)?;
    Ok((dataset, truth))
}

#[derive(Clone, Copy)]
enum CommentKind {
    Relevant,
    Misleading,
    Other,
}

type PlantedComment = (usize, usize, String, CommentKind);

fn plant_comments(
    spec: &SynthSpec,
    rng: &mut ChaCha8Rng,
    items: &[ItemRecord],
    item_b: &[f64],
    thetas: &[f64],
    truth: &SynthTruth,
    options: &[String],
) -> Result<Vec<PlantedComment>> {
    let n_pairs = spec.n_persons * spec.n_items();
    let n_comments = (spec.comment_rate * n_pairs as f64).round() as usize;
    if n_comments == 0 {
        return Ok(Vec::new());
    }
    let n_relevant = (spec.relevant_rate * n_comments as f64).round() as usize;
    let n_misleading = (spec.misleading_rate * n_comments as f64).round() as usize;
    let n_other = n_comments - n_relevant - n_misleading;

    let defects = truth.defect_items();
    let defect_idx: Vec<usize> = (0..items.len())
        .filter(|&i| defects.contains(&items[i].item_id))
        .collect();
    let healthy_idx: Vec<usize> = (0..items.len())
        .filter(|&i| !defects.contains(&items[i].item_id))
        .collect();
    let all_persons: Vec<usize> = (0..spec.n_persons).collect();

    // Easiest quarter of healthy items, lowest quarter of abilities.
    let mut easy = healthy_idx.clone();
    easy.sort_by(|&a, &b| item_b[a].total_cmp(&item_b[b]).then(a.cmp(&b)));
    easy.truncate((easy.len() / 4).max(1));
    let mut weak = all_persons.clone();
    weak.sort_by(|&a, &b| thetas[a].total_cmp(&thetas[b]).then(a.cmp(&b)));
    weak.truncate((weak.len() / 4).max(1));

    let mut used: HashSet<(usize, usize)> = HashSet::with_capacity(n_comments);
    let mut out = Vec::with_capacity(n_comments);
    let max_attempts = 1000 * n_comments + 1000;
    let mut attempts = 0usize;
    let mut draw = |persons: &[usize], item_pool: &[usize], rng: &mut ChaCha8Rng| -> Result<(usize, usize)> {
        loop {
            attempts += 1;
            if attempts > max_attempts {
                return Err(Error::InvalidArgument(
                    "comment rate too high for the person-by-item grid".into(),
                ));
            }
            let p = *persons.choose(rng).unwrap();
            let i = *item_pool.choose(rng).unwrap();
            if used.insert((p, i)) {
                return Ok((p, i));
            }
        }
    };

    for _ in 0..n_relevant {
        let pool = if !defect_idx.is_empty() && rng.random_bool(spec.defect_affinity) {
            &defect_idx
        } else if !healthy_idx.is_empty() {
            &healthy_idx
        } else {
            &defect_idx
        };
        let (p, i) = draw(&all_persons, pool, rng)?;
        let text = render(RELEVANT_TEMPLATES.choose(rng).unwrap(), options, rng);
        out.push((p, i, text, CommentKind::Relevant));
    }
    let easy_pool = if easy.is_empty() { (0..items.len()).collect() } else { easy };
    for _ in 0..n_misleading {
        let (p, i) = draw(&weak, &easy_pool, rng)?;
        let text = render(RELEVANT_TEMPLATES.choose(rng).unwrap(), options, rng);
        out.push((p, i, text, CommentKind::Misleading));
    }
    let every_item: Vec<usize> = (0..items.len()).collect();
    for _ in 0..n_other {
        let (p, i) = draw(&all_persons, &every_item, rng)?;
        let pool = if rng.random_bool(0.5) {
            COMPLAINT_TEMPLATES
        } else {
            NEUTRAL_TEMPLATES
        };
        let text = render(pool.choose(rng).unwrap(), options, rng);
        out.push((p, i, text, CommentKind::Other));
    }
    out.shuffle(rng);
    Ok(out)
}
