//! `item_stats.csv`, `option_stats.csv` and the stats metadata record.
//!
//! Floats are written with Rust's shortest round-trip formatting, so reading
//! a file back yields bit-identical values. Absent values are empty fields.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ItemStatistics, OptionStat, PsychometricsReport, POINT_BISERIAL_VARIANT};
use crate::data::io::{create, opt_f64};
use crate::data::ItemRecord;
use crate::{Error, Result};

pub const ITEM_STATS_FILE: &str = "item_stats.csv";
pub const OPTION_STATS_FILE: &str = "option_stats.csv";
pub const METADATA_FILE: &str = "metadata.json";

const ITEM_HEADER: [&str; 10] = [
    "item_id",
    "b",
    "p",
    "r",
    "mean_time",
    "n",
    "infit",
    "outfit",
    "drift_magnitude",
    "drift_flag",
];
const OPTION_HEADER: [&str; 5] = ["item_id", "option_id", "prop", "option_r", "is_key"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsMetadata {
    pub point_biserial: String,
    pub rasch_converged: bool,
    pub rasch_iterations: usize,
    pub log_likelihood: f64,
    pub extreme_items: Vec<String>,
    pub extreme_persons: usize,
    pub drift_link_constant: Option<f64>,
    pub warnings: Vec<String>,
    pub flags: BTreeMap<String, Vec<super::FlagReason>>,
}

impl StatsMetadata {
    pub fn from_report(report: &PsychometricsReport) -> Self {
        StatsMetadata {
            point_biserial: POINT_BISERIAL_VARIANT.to_string(),
            rasch_converged: report.calibration.converged,
            rasch_iterations: report.calibration.iterations,
            log_likelihood: report.calibration.log_likelihood,
            extreme_items: report.calibration.extreme_items.iter().cloned().collect(),
            extreme_persons: report.calibration.extreme_persons.len(),
            drift_link_constant: report.drift_link_constant,
            warnings: report.warnings.clone(),
            flags: report.flags.clone(),
        }
    }
}

/// Writes the two CSV files and `metadata.json` into `dir`.
pub fn write_stats(report: &PsychometricsReport, dir: &Path) -> Result<()> {
    write_item_stats(&report.items, &dir.join(ITEM_STATS_FILE))?;
    write_option_stats(&report.items, &dir.join(OPTION_STATS_FILE))?;
    let meta_path = dir.join(METADATA_FILE);
    let body = serde_json::to_vec_pretty(&StatsMetadata::from_report(report))
        .map_err(|e| Error::json(&meta_path, e))?;
    std::fs::write(&meta_path, body).map_err(|e| Error::io(&meta_path, e))
}

pub fn write_item_stats(items: &BTreeMap<String, ItemStatistics>, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(ITEM_HEADER)?;
    for s in items.values() {
        w.write_record([
            s.item_id.clone(),
            opt_f64(s.b),
            opt_f64(s.p),
            opt_f64(s.r),
            opt_f64(s.mean_time),
            s.n.to_string(),
            opt_f64(s.infit),
            opt_f64(s.outfit),
            opt_f64(s.drift_magnitude),
            u8::from(s.drift_flag).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_option_stats(items: &BTreeMap<String, ItemStatistics>, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(OPTION_HEADER)?;
    for s in items.values() {
        for o in &s.option_stats {
            w.write_record([
                s.item_id.clone(),
                o.option_id.clone(),
                o.prop.to_string(),
                opt_f64(o.option_r),
                u8::from(o.is_key).to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn malformed(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Malformed {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_opt(path: &Path, line: u64, field: &str) -> Result<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse::<f64>()
        .map(Some)
        .map_err(|_| malformed(path, line, format!("invalid number {field:?}")))
}

fn parse_bool(path: &Path, line: u64, field: &str) -> Result<bool> {
    match field {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(malformed(path, line, format!("expected 0 or 1, got {field:?}"))),
    }
}

fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(std::io::BufReader::new(file));
    let found = reader.headers()?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(malformed(path, 1, format!("expected header {}", header.join(","))));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != header.len() {
            return Err(malformed(path, line, format!("expected {} fields", header.len())));
        }
        rows.push((line, record));
    }
    Ok(rows)
}

/// Reads the stats files from `dir`. Item types come from `items`, which must
/// cover every item in the files.
pub fn read_stats(dir: &Path, items: &[ItemRecord]) -> Result<BTreeMap<String, ItemStatistics>> {
    let types: BTreeMap<&str, _> = items.iter().map(|i| (i.item_id.as_str(), i.item_type)).collect();
    let path = dir.join(ITEM_STATS_FILE);
    let mut out = BTreeMap::new();
    for (line, rec) in read_rows(&path, &ITEM_HEADER)? {
        let id = rec[0].to_string();
        let item_type = *types
            .get(id.as_str())
            .ok_or_else(|| Error::UnknownItem(id.clone()))?;
        let n = rec[5]
            .parse::<usize>()
            .map_err(|_| malformed(&path, line, format!("invalid count {:?}", &rec[5])))?;
        out.insert(
            id.clone(),
            ItemStatistics {
                item_id: id,
                item_type,
                b: parse_opt(&path, line, &rec[1])?,
                p: parse_opt(&path, line, &rec[2])?,
                r: parse_opt(&path, line, &rec[3])?,
                mean_time: parse_opt(&path, line, &rec[4])?,
                n,
                infit: parse_opt(&path, line, &rec[6])?,
                outfit: parse_opt(&path, line, &rec[7])?,
                drift_magnitude: parse_opt(&path, line, &rec[8])?,
                drift_flag: parse_bool(&path, line, &rec[9])?,
                option_stats: Vec::new(),
            },
        );
    }
    let path = dir.join(OPTION_STATS_FILE);
    for (line, rec) in read_rows(&path, &OPTION_HEADER)? {
        let stats = out
            .get_mut(&rec[0])
            .ok_or_else(|| malformed(&path, line, format!("option row for unknown item {:?}", &rec[0])))?;
        stats.option_stats.push(OptionStat {
            option_id: rec[1].to_string(),
            prop: parse_opt(&path, line, &rec[2])?
                .ok_or_else(|| malformed(&path, line, "missing prop"))?,
            option_r: parse_opt(&path, line, &rec[3])?,
            is_key: parse_bool(&path, line, &rec[4])?,
        });
    }
    Ok(out)
}
