//! Binned scorer probabilities of flagged comments, per model.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::io::create;
use crate::{Error, Result};

pub const HISTOGRAM_FILE: &str = "fig_prob_hist.csv";
pub const DEFAULT_BINS: usize = 20;

pub const SUBSET_ALL_FLAGGED: &str = "all_flagged";
pub const SUBSET_FALSE_POSITIVES: &str = "false_positives";

/// Comment sets of one model.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HistogramInput {
    pub model: String,
    pub flagged: BTreeSet<String>,
    pub false_positives: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub model: String,
    pub subset: String,
    pub bin_low: f64,
    pub bin_high: f64,
    pub count: u64,
}

/// Index of the bin holding `p` among `bins` equal bins on [0, 1]. Bins are
/// `[i/bins, (i+1)/bins)` except the last, which also holds 1.
pub fn bin_index(p: f64, bins: usize) -> usize {
    let edge = |i: usize| i as f64 / bins as f64;
    let mut i = ((p * bins as f64).floor().max(0.0) as usize).min(bins - 1);
    // Settle disagreements between the product and the stated edges.
    while i + 1 < bins && p >= edge(i + 1) {
        i += 1;
    }
    while i > 0 && p < edge(i) {
        i -= 1;
    }
    i
}

pub fn probability_histogram(
    scores: &BTreeMap<String, f64>,
    inputs: &[HistogramInput],
    bins: usize,
) -> Result<Vec<HistogramRow>> {
    if bins < 1 {
        return Err(Error::InvalidArgument("histogram needs at least one bin".into()));
    }
    let mut rows = Vec::with_capacity(inputs.len() * 2 * bins);
    for input in inputs {
        for (subset, ids) in [
            (SUBSET_ALL_FLAGGED, &input.flagged),
            (SUBSET_FALSE_POSITIVES, &input.false_positives),
        ] {
            let mut counts = vec![0u64; bins];
            for id in ids {
                let p = *scores
                    .get(id)
                    .ok_or_else(|| Error::MissingPrerequisite(format!("no scorer probability for comment {id}")))?;
                counts[bin_index(p, bins)] += 1;
            }
            for (i, count) in counts.into_iter().enumerate() {
                rows.push(HistogramRow {
                    model: input.model.clone(),
                    subset: subset.to_string(),
                    bin_low: i as f64 / bins as f64,
                    bin_high: (i + 1) as f64 / bins as f64,
                    count,
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_histogram(rows: &[HistogramRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record(["model", "subset", "bin_low", "bin_high", "count"])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Computes and writes the histogram CSV.
pub fn export_probability_histogram(
    scores: &BTreeMap<String, f64>,
    inputs: &[HistogramInput],
    bins: usize,
    path: &Path,
) -> Result<Vec<HistogramRow>> {
    let rows = probability_histogram(scores, inputs, bins)?;
    write_histogram(&rows, path)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ids(n: usize) -> BTreeSet<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn half_goes_to_upper_of_two_bins() {
        let scores: BTreeMap<String, f64> = ids(5).into_iter().map(|id| (id, 0.5)).collect();
        let input = HistogramInput {
            model: "M1".into(),
            flagged: ids(5),
            false_positives: BTreeSet::new(),
        };
        let rows = probability_histogram(&scores, &[input], 2).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!((rows[0].count, rows[1].count), (0, 5));
        assert_eq!((rows[1].bin_low, rows[1].bin_high), (0.5, 1.0));
    }

    #[test]
    fn one_is_in_the_last_bin() {
        assert_eq!(bin_index(1.0, 20), 19);
        assert_eq!(bin_index(0.0, 20), 0);
        assert_eq!(bin_index(0.05, 20), 1);
        assert_eq!(bin_index(0.35, 20), 7);
    }

    #[test]
    fn zero_bins_rejected() {
        assert!(probability_histogram(&BTreeMap::new(), &[], 0).is_err());
    }

    #[test]
    fn missing_score_rejected() {
        let input = HistogramInput {
            model: "M1".into(),
            flagged: ids(1),
            false_positives: BTreeSet::new(),
        };
        assert!(probability_histogram(&BTreeMap::new(), &[input], 4).is_err());
    }

    #[test]
    fn matches_independent_recount_of_csv() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let scores: BTreeMap<String, f64> = ids(500).into_iter().map(|id| (id, rng.random::<f64>())).collect();
        let flagged: BTreeSet<String> = scores.keys().filter(|_| rng.random_bool(0.4)).cloned().collect();
        let fps: BTreeSet<String> = flagged.iter().filter(|_| rng.random_bool(0.3)).cloned().collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(HISTOGRAM_FILE);
        let input = HistogramInput {
            model: "M4".into(),
            flagged: flagged.clone(),
            false_positives: fps.clone(),
        };
        export_probability_histogram(&scores, &[input], 20, &path).unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("model,subset,bin_low,bin_high,count"));
        for line in lines {
            let f: Vec<&str> = line.split(',').collect();
            let lo: f64 = f[2].parse().unwrap();
            let hi: f64 = f[3].parse().unwrap();
            let set = if f[1] == "all_flagged" { &flagged } else { &fps };
            // Counting pass straight over the score map.
            let expect = set
                .iter()
                .filter(|id| {
                    let p = scores[*id];
                    p >= lo && (p < hi || (hi == 1.0 && p <= 1.0))
                })
                .count();
            assert_eq!(f[4].parse::<usize>().unwrap(), expect, "{line}");
        }
    }

    proptest! {
        #[test]
        fn counts_sum_to_subset_size(ps in proptest::collection::vec(0.0f64..=1.0, 0..80), bins in 1usize..30) {
            let scores: BTreeMap<String, f64> = ps.iter().enumerate().map(|(i, &p)| (format!("c{i}"), p)).collect();
            let input = HistogramInput { model: "M".into(), flagged: scores.keys().cloned().collect(), false_positives: BTreeSet::new() };
            let rows = probability_histogram(&scores, &[input], bins).unwrap();
            let total: u64 = rows.iter().filter(|r| r.subset == SUBSET_ALL_FLAGGED).map(|r| r.count).sum();
            prop_assert_eq!(total as usize, ps.len());
        }
    }
}
