//! Report tables: flag counts, precision/recall/F1 and item-flag overlap per
//! model, each as JSON plus an aligned text rendering.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::histogram::{probability_histogram, write_histogram, HistogramInput, HistogramRow, HISTOGRAM_FILE};
use super::{ConfusionCounts, MetricSet};
use crate::numeric::round_half_up;
use crate::pipeline::ItemFlagReport;
use crate::{Error, Result};

pub const TABLE3_JSON: &str = "table3.json";
pub const TABLE3_TXT: &str = "table3.txt";
pub const TABLE4_JSON: &str = "table4.json";
pub const TABLE4_TXT: &str = "table4.txt";
pub const TABLE5_JSON: &str = "table5.json";
pub const TABLE5_TXT: &str = "table5.txt";
pub const REPORT_MANIFEST: &str = "manifest.json";
pub const REPORT_FILES: [&str; 8] = [
    TABLE3_JSON,
    TABLE3_TXT,
    TABLE4_JSON,
    TABLE4_TXT,
    TABLE5_JSON,
    TABLE5_TXT,
    HISTOGRAM_FILE,
    REPORT_MANIFEST,
];

/// Rendering of an absent value.
pub const ABSENT: &str = "—";

/// Everything the report needs about one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportInput {
    pub model: String,
    pub run_id: Option<String>,
    pub counts: ConfusionCounts,
    pub item_flags: ItemFlagReport,
    pub histogram: HistogramInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table3 {
    pub models: Vec<String>,
    pub fp: Vec<u64>,
    #[serde(rename = "fn")]
    pub fn_: Vec<u64>,
    pub fp_tp: Vec<u64>,
}

/// Values rounded half up to two decimals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table4 {
    pub models: Vec<String>,
    pub precision: Vec<Option<f64>>,
    pub recall: Vec<Option<f64>>,
    pub f1: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountPct {
    pub n: usize,
    pub pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table5 {
    pub models: Vec<String>,
    pub overlap: Vec<CountPct>,
    pub total: Vec<CountPct>,
    pub true_items: Vec<usize>,
    pub total_items: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: String,
    pub run_id: Option<String>,
    pub counts: ConfusionCounts,
    /// Unrounded, including the metrics the tables leave out.
    pub metrics: MetricSet,
    pub item_flags: ItemFlagReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportManifest {
    pub models: Vec<ModelSummary>,
    pub histogram_bins: usize,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportBundle {
    pub table3: Table3,
    pub table4: Table4,
    pub table5: Table5,
    pub histogram: Vec<HistogramRow>,
    pub manifest: ReportManifest,
}

fn round2(v: Option<f64>) -> Option<f64> {
    v.map(|x| round_half_up(x, 2))
}

pub fn build_reports(inputs: &[ReportInput], scores: &BTreeMap<String, f64>, bins: usize) -> Result<ReportBundle> {
    if inputs.is_empty() {
        return Err(Error::InsufficientData("reports need at least one model".into()));
    }
    let models: Vec<String> = inputs.iter().map(|i| i.model.clone()).collect();
    let metrics: Vec<MetricSet> = inputs.iter().map(|i| MetricSet::from_counts(&i.counts)).collect();
    let table3 = Table3 {
        models: models.clone(),
        fp: inputs.iter().map(|i| i.counts.fp).collect(),
        fn_: inputs.iter().map(|i| i.counts.fn_).collect(),
        fp_tp: inputs.iter().map(|i| i.counts.flagged()).collect(),
    };
    let table4 = Table4 {
        models: models.clone(),
        precision: metrics.iter().map(|m| round2(m.precision)).collect(),
        recall: metrics.iter().map(|m| round2(m.recall)).collect(),
        f1: metrics.iter().map(|m| round2(m.f1)).collect(),
    };
    let table5 = Table5 {
        models,
        overlap: inputs
            .iter()
            .map(|i| CountPct {
                n: i.item_flags.overlap_n,
                pct: i.item_flags.overlap_pct,
            })
            .collect(),
        total: inputs
            .iter()
            .map(|i| CountPct {
                n: i.item_flags.total_n,
                pct: i.item_flags.total_pct,
            })
            .collect(),
        true_items: inputs.iter().map(|i| i.item_flags.true_n).collect(),
        total_items: inputs.iter().map(|i| i.item_flags.total_items).collect(),
    };
    let histogram_inputs: Vec<HistogramInput> = inputs.iter().map(|i| i.histogram.clone()).collect();
    let histogram = probability_histogram(scores, &histogram_inputs, bins)?;
    let manifest = ReportManifest {
        models: inputs
            .iter()
            .zip(&metrics)
            .map(|(i, m)| ModelSummary {
                model: i.model.clone(),
                run_id: i.run_id.clone(),
                counts: i.counts,
                metrics: *m,
                item_flags: i.item_flags.clone(),
            })
            .collect(),
        histogram_bins: bins,
        files: REPORT_FILES.iter().map(|s| s.to_string()).collect(),
    };
    Ok(ReportBundle {
        table3,
        table4,
        table5,
        histogram,
        manifest,
    })
}

/// Left-aligned row labels, right-aligned cells.
fn render_grid(title: &str, models: &[String], rows: &[(&str, Vec<String>)]) -> String {
    let label_w = rows.iter().map(|(l, _)| l.chars().count()).max().unwrap_or(0);
    let widths: Vec<usize> = (0..models.len())
        .map(|j| {
            rows.iter()
                .map(|(_, cells)| cells[j].chars().count())
                .chain([models[j].chars().count()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let pad_left = |s: &str, w: usize| format!("{}{s}", " ".repeat(w.saturating_sub(s.chars().count())));
    let mut out = format!("{title}\n");
    out.push_str(&" ".repeat(label_w));
    for (m, &w) in models.iter().zip(&widths) {
        out.push_str("  ");
        out.push_str(&pad_left(m, w));
    }
    out.push('\n');
    for (label, cells) in rows {
        out.push_str(label);
        out.push_str(&" ".repeat(label_w - label.chars().count()));
        for (c, &w) in cells.iter().zip(&widths) {
            out.push_str("  ");
            out.push_str(&pad_left(c, w));
        }
        out.push('\n');
    }
    out
}

fn fmt2(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_else(|| ABSENT.to_string())
}

fn fmt_count_pct(c: &CountPct) -> String {
    match c.pct {
        Some(p) => format!("{} ({p:.1}%)", c.n),
        None => format!("{} ({ABSENT})", c.n),
    }
}

impl Table3 {
    pub fn render(&self) -> String {
        let col = |v: &[u64]| v.iter().map(u64::to_string).collect();
        render_grid(
            "False positives and false negatives",
            &self.models,
            &[("FP", col(&self.fp)), ("FN", col(&self.fn_)), ("FP+TP", col(&self.fp_tp))],
        )
    }
}

impl Table4 {
    pub fn render(&self) -> String {
        let col = |v: &[Option<f64>]| v.iter().map(|&x| fmt2(x)).collect();
        render_grid(
            "Model evaluation metrics",
            &self.models,
            &[
                ("Precision", col(&self.precision)),
                ("Recall", col(&self.recall)),
                ("F1", col(&self.f1)),
            ],
        )
    }
}

impl Table5 {
    pub fn render(&self) -> String {
        let col = |v: &[CountPct]| v.iter().map(fmt_count_pct).collect();
        render_grid(
            "Flagged items: overlap with reference items and total",
            &self.models,
            &[("Overlap N (%)", col(&self.overlap)), ("Total N (%)", col(&self.total))],
        )
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut body = serde_json::to_vec_pretty(value).map_err(|e| Error::json(path, e))?;
    body.push(b'\n');
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn write_text(text: &str, path: &Path) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes every file of [`REPORT_FILES`] into `dir`.
pub fn write_reports(bundle: &ReportBundle, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&bundle.table3, &dir.join(TABLE3_JSON))?;
    write_text(&bundle.table3.render(), &dir.join(TABLE3_TXT))?;
    write_json(&bundle.table4, &dir.join(TABLE4_JSON))?;
    write_text(&bundle.table4.render(), &dir.join(TABLE4_TXT))?;
    write_json(&bundle.table5, &dir.join(TABLE5_JSON))?;
    write_text(&bundle.table5.render(), &dir.join(TABLE5_TXT))?;
    write_histogram(&bundle.histogram, &dir.join(HISTOGRAM_FILE))?;
    write_json(&bundle.manifest, &dir.join(REPORT_MANIFEST))
}

pub fn emit_reports(inputs: &[ReportInput], scores: &BTreeMap<String, f64>, bins: usize, dir: &Path) -> Result<ReportBundle> {
    let bundle = build_reports(inputs, scores, bins)?;
    write_reports(&bundle, dir)?;
    Ok(bundle)
}
