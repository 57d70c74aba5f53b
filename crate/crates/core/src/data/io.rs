//! CSV/JSONL ingestion and export.
//!
//! * `items.csv`: `item_id,form_id,item_type,key_option,option_ids,bank_difficulty`
//!   with `option_ids` `|`-separated and `bank_difficulty` optional.
//! * `responses.csv`: `candidate_id,item_id,form_id,selected_option,response_time_sec`
//! * `candidates.csv`: `candidate_id,form_id`
//! * `comments.jsonl`: one object per line with `comment_id`, `candidate_id`,
//!   `item_id`, `text`, optional `label` (0|1) and optional `reviewer_note`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use csv::StringRecord;
use serde::{Deserialize, Serialize};

use super::{
    CandidateRecord, CommentRecord, Dataset, ItemRecord, ItemType, Label, ResponseEvent,
};
use crate::{Error, Result};

pub const ITEMS_FILE: &str = "items.csv";
pub const RESPONSES_FILE: &str = "responses.csv";
pub const CANDIDATES_FILE: &str = "candidates.csv";
pub const COMMENTS_FILE: &str = "comments.jsonl";

/// Paths of the four input files.
#[derive(Debug, Clone)]
pub struct DatasetPaths {
    pub items: PathBuf,
    pub responses: PathBuf,
    pub candidates: PathBuf,
    pub comments: PathBuf,
}

impl DatasetPaths {
    /// The conventional file names inside `dir`.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        DatasetPaths {
            items: dir.join(ITEMS_FILE),
            responses: dir.join(RESPONSES_FILE),
            candidates: dir.join(CANDIDATES_FILE),
            comments: dir.join(COMMENTS_FILE),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CommentLine {
    comment_id: String,
    candidate_id: String,
    item_id: String,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reviewer_note: Option<String>,
}

struct CsvTable {
    path: PathBuf,
    headers: StringRecord,
    columns: Vec<usize>,
    rows: Vec<(u64, StringRecord)>,
}

impl CsvTable {
    fn read(path: &Path, required: &[&str]) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::Fields)
            .from_reader(BufReader::new(file));
        let headers = reader.headers()?.clone();
        let mut columns = Vec::with_capacity(required.len());
        for name in required {
            let idx = headers
                .iter()
                .position(|h| h.trim_start_matches('\u{feff}') == *name)
                .ok_or_else(|| Error::Malformed {
                    path: path.to_path_buf(),
                    line: 1,
                    message: format!("missing column {name:?} in header"),
                })?;
            columns.push(idx);
        }
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                Error::Malformed {
                    path: path.to_path_buf(),
                    line,
                    message: e.to_string(),
                }
            })?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            rows.push((line, record));
        }
        Ok(CsvTable {
            path: path.to_path_buf(),
            headers,
            columns,
            rows,
        })
    }

    fn optional_column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    fn field<'r>(&self, row: &'r (u64, StringRecord), col: usize) -> Result<&'r str> {
        row.1.get(self.columns[col]).ok_or_else(|| Error::Malformed {
            path: self.path.clone(),
            line: row.0,
            message: format!("row has only {} fields", row.1.len()),
        })
    }

    fn malformed(&self, line: u64, message: impl Into<String>) -> Error {
        Error::Malformed {
            path: self.path.clone(),
            line,
            message: message.into(),
        }
    }
}

fn read_items(path: &Path) -> Result<Vec<ItemRecord>> {
    let table = CsvTable::read(
        path,
        &["item_id", "form_id", "item_type", "key_option", "option_ids"],
    )?;
    let bank_col = table.optional_column("bank_difficulty");

    let mut items = Vec::with_capacity(table.rows.len());
    for row in &table.rows {
        let item_type_raw = table.field(row, 2)?;
        let item_type = ItemType::parse(item_type_raw).ok_or_else(|| {
            table.malformed(row.0, format!("unknown item_type {item_type_raw:?}"))
        })?;
        let option_ids: Vec<String> = table
            .field(row, 4)?
            .split('|')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        let bank_difficulty = match bank_col.and_then(|c| row.1.get(c)).map(str::trim) {
            None | Some("") => None,
            Some(v) => Some(v.parse::<f64>().map_err(|_| {
                table.malformed(row.0, format!("bank_difficulty {v:?} is not a number"))
            })?),
        };
        let item = ItemRecord {
            item_id: table.field(row, 0)?.to_string(),
            form_id: table.field(row, 1)?.to_string(),
            item_type,
            key_option: table.field(row, 3)?.to_string(),
            option_ids,
            bank_difficulty,
        };
        item.validate()
            .map_err(|e| table.malformed(row.0, e.to_string()))?;
        items.push(item);
    }
    Ok(items)
}

fn read_responses(path: &Path) -> Result<Vec<ResponseEvent>> {
    let table = CsvTable::read(
        path,
        &[
            "candidate_id",
            "item_id",
            "form_id",
            "selected_option",
            "response_time_sec",
        ],
    )?;
    let mut out = Vec::with_capacity(table.rows.len());
    for row in &table.rows {
        let time_raw = table.field(row, 4)?;
        let response_time_sec = time_raw.parse::<f64>().map_err(|_| {
            table.malformed(row.0, format!("response_time_sec {time_raw:?} is not a number"))
        })?;
        if !(response_time_sec >= 0.0 && response_time_sec.is_finite()) {
            return Err(table.malformed(row.0, "response_time_sec must be nonnegative"));
        }
        let selected = table.field(row, 3)?;
        out.push(ResponseEvent {
            candidate_id: table.field(row, 0)?.to_string(),
            item_id: table.field(row, 1)?.to_string(),
            form_id: table.field(row, 2)?.to_string(),
            selected_option: if selected.is_empty() {
                super::OMITTED.to_string()
            } else {
                selected.to_string()
            },
            correct: false,
            response_time_sec,
        });
    }
    Ok(out)
}

fn read_candidates(path: &Path) -> Result<Vec<CandidateRecord>> {
    let table = CsvTable::read(path, &["candidate_id", "form_id"])?;
    table
        .rows
        .iter()
        .map(|row| {
            Ok(CandidateRecord::new(
                table.field(row, 0)?,
                table.field(row, 1)?,
            ))
        })
        .collect()
}

fn read_comments(path: &Path) -> Result<Vec<CommentRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| Error::Malformed {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let parsed: CommentLine =
            serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        let label = Label::from_code(parsed.label).map_err(|e| malformed(e.to_string()))?;
        if parsed.text.trim().is_empty() {
            return Err(malformed("comment text is empty".into()));
        }
        out.push(CommentRecord {
            comment_id: parsed.comment_id,
            candidate_id: parsed.candidate_id,
            item_id: parsed.item_id,
            text: parsed.text,
            label,
            reviewer_note: parsed.reviewer_note,
            from_excluded_candidate: false,
        });
    }
    Ok(out)
}

/// Reads and cross-links the four input files. The result has every
/// candidate included; apply [`Dataset::apply_cleaning`] afterwards.
pub fn load_dataset(paths: &DatasetPaths) -> Result<Dataset> {
    let items = read_items(&paths.items)?;
    let candidates = read_candidates(&paths.candidates)?;
    let responses = read_responses(&paths.responses)?;
    let comments = read_comments(&paths.comments)?;
    Dataset::new(items, candidates, responses, comments)
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

pub(crate) fn opt_f64(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `dataset` in the ingestion formats. Cleaning state is not part of
/// these files.
pub fn save_dataset(dataset: &Dataset, paths: &DatasetPaths) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(&paths.items)?);
    w.write_record([
        "item_id",
        "form_id",
        "item_type",
        "key_option",
        "option_ids",
        "bank_difficulty",
    ])?;
    for item in dataset.items() {
        w.write_record([
            item.item_id.as_str(),
            &item.form_id,
            item.item_type.as_str(),
            &item.key_option,
            &item.option_ids.join("|"),
            &opt_f64(item.bank_difficulty),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&paths.items, e))?;

    let mut w = csv::Writer::from_writer(create(&paths.responses)?);
    w.write_record([
        "candidate_id",
        "item_id",
        "form_id",
        "selected_option",
        "response_time_sec",
    ])?;
    for r in dataset.responses() {
        w.write_record([
            r.candidate_id.as_str(),
            &r.item_id,
            &r.form_id,
            &r.selected_option,
            &r.response_time_sec.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&paths.responses, e))?;

    let mut w = csv::Writer::from_writer(create(&paths.candidates)?);
    w.write_record(["candidate_id", "form_id"])?;
    for c in dataset.candidates() {
        w.write_record([c.candidate_id.as_str(), &c.form_id])?;
    }
    w.flush().map_err(|e| Error::io(&paths.candidates, e))?;

    let mut w = create(&paths.comments)?;
    for c in dataset.comments() {
        let line = CommentLine {
            comment_id: c.comment_id.clone(),
            candidate_id: c.candidate_id.clone(),
            item_id: c.item_id.clone(),
            text: c.text.clone(),
            label: c.label.code(),
            reviewer_note: c.reviewer_note.clone(),
        };
        let json = serde_json::to_string(&line).map_err(|e| Error::json(&paths.comments, e))?;
        writeln!(w, "{json}").map_err(|e| Error::io(&paths.comments, e))?;
    }
    w.flush().map_err(|e| Error::io(&paths.comments, e))?;
    Ok(())
}
