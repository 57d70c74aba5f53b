//! On-disk working directory shared by the CLI and the service.
//!
//! ```text
//! <root>/
//!   data/        items.csv responses.csv candidates.csv comments.jsonl cleaning.json [truth.json]
//!   stats/       item_stats.csv option_stats.csv metadata.json
//!   scorer/      model.json
//!   scores/      scores.csv
//!   runs/<id>/   manifest.json flagged_comments.csv [model.json cv_results.csv] reports/
//!   runs/latest.json
//!   reports/     tables of the latest run per variant
//!   labels.jsonl append-only review decisions
//! ```
//!
//! The effective label of a comment is the latest event for it in
//! `labels.jsonl`, falling back to the label it was ingested with.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::io::{load_dataset, save_dataset, DatasetPaths};
use crate::data::synth::SynthTruth;
use crate::data::{CleaningRules, Dataset, Label};
use crate::pipeline::{RunManifest, Variant, RUN_MANIFEST_FILE};
use crate::psychometrics::io::{read_stats, ITEM_STATS_FILE};
use crate::psychometrics::ItemStatistics;
use crate::scorer::{ScorerModel, EPS};
use crate::{Error, Result};

/// Environment variable naming the store directory.
pub const STORE_ENV: &str = "ITEMQC_STORE";

const CLEANING_FILE: &str = "cleaning.json";
const TRUTH_FILE: &str = "truth.json";
const LABELS_FILE: &str = "labels.jsonl";
const LATEST_FILE: &str = "latest.json";
pub const RUN_REPORTS_DIR: &str = "reports";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEvent {
    pub comment_id: String,
    pub label: u8,
    pub reviewer: String,
    pub timestamp: DateTime<Utc>,
}

impl LabelEvent {
    pub fn as_label(&self) -> Label {
        if self.label == 1 {
            Label::Relevant
        } else {
            Label::NotRelevant
        }
    }
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    /// Opens (and creates if needed) a store at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Store { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn data_dir(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn stats_dir(&self) -> PathBuf {
        self.root.join("stats")
    }

    pub fn scorer_path(&self) -> PathBuf {
        self.root.join("scorer").join("model.json")
    }

    pub fn scores_path(&self) -> PathBuf {
        self.root.join("scores").join("scores.csv")
    }

    pub fn runs_dir(&self) -> PathBuf {
        self.root.join("runs")
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.runs_dir().join(run_id)
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn labels_path(&self) -> PathBuf {
        self.root.join(LABELS_FILE)
    }

    fn require(&self, path: &Path, step: &str) -> Result<()> {
        if path.exists() {
            Ok(())
        } else {
            Err(Error::MissingPrerequisite(format!(
                "{} not found; run `{step}` first",
                path.display()
            )))
        }
    }

    // ---- dataset ----

    pub fn has_dataset(&self) -> bool {
        DatasetPaths::in_dir(self.data_dir()).items.exists()
    }

    /// Persists the dataset files and the cleaning rules applied to them.
    pub fn save_dataset(&self, dataset: &Dataset) -> Result<()> {
        let dir = self.data_dir();
        save_dataset(dataset, &DatasetPaths::in_dir(&dir))?;
        write_json(&dir.join(CLEANING_FILE), dataset.cleaning_rules())
    }

    pub fn save_truth(&self, truth: &SynthTruth) -> Result<()> {
        write_json(&self.data_dir().join(TRUTH_FILE), truth)
    }

    pub fn load_truth(&self) -> Result<SynthTruth> {
        read_json(&self.data_dir().join(TRUTH_FILE))
    }

    /// The cleaned dataset with the label log applied.
    pub fn load_dataset(&self) -> Result<Dataset> {
        let dir = self.data_dir();
        let paths = DatasetPaths::in_dir(&dir);
        self.require(&paths.items, "ingest` or `synth")?;
        let dataset = load_dataset(&paths)?;
        let cleaning_path = dir.join(CLEANING_FILE);
        let rules: CleaningRules = if cleaning_path.exists() {
            read_json(&cleaning_path)?
        } else {
            CleaningRules::default()
        };
        let mut dataset = dataset.apply_cleaning(&rules)?;
        for (id, event) in self.label_view()? {
            dataset.set_label(&id, event.as_label())?;
        }
        Ok(dataset)
    }

    // ---- statistics, scorer, scores ----

    pub fn load_stats(&self, dataset: &Dataset) -> Result<BTreeMap<String, ItemStatistics>> {
        let dir = self.stats_dir();
        self.require(&dir.join(ITEM_STATS_FILE), "stats")?;
        read_stats(&dir, dataset.items())
    }

    pub fn load_scorer(&self) -> Result<ScorerModel> {
        let path = self.scorer_path();
        self.require(&path, "train-scorer")?;
        ScorerModel::load(&path)
    }

    /// Scores written by `score`. Values are read as written, so a round
    /// trip through the file is exact.
    pub fn load_scores(&self) -> Result<BTreeMap<String, f64>> {
        let path = self.scores_path();
        self.require(&path, "score")?;
        let mut r = csv::Reader::from_path(&path).map_err(|e| Error::InvalidRecord(format!("{}: {e}", path.display())))?;
        let mut out = BTreeMap::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = i as u64 + 2;
            let bad = |m: &str| Error::Malformed {
                path: path.clone(),
                line,
                message: m.to_string(),
            };
            let id = rec.get(0).ok_or_else(|| bad("missing comment_id"))?;
            let p: f64 = rec
                .get(1)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("probability is not a number"))?;
            if !(EPS..=1.0 - EPS).contains(&p) {
                return Err(bad("probability outside the clamped range"));
            }
            out.insert(id.to_string(), p);
        }
        Ok(out)
    }

    // ---- runs ----

    /// Runs recorded as the latest per variant.
    pub fn latest_runs(&self) -> Result<BTreeMap<Variant, String>> {
        let path = self.runs_dir().join(LATEST_FILE);
        if !path.exists() {
            return Ok(BTreeMap::new());
        }
        read_json(&path)
    }

    pub fn latest_run(&self, variant: Variant) -> Result<Option<String>> {
        Ok(self.latest_runs()?.remove(&variant))
    }

    pub fn set_latest_run(&self, variant: Variant, run_id: &str) -> Result<()> {
        let mut latest = self.latest_runs()?;
        latest.insert(variant, run_id.to_string());
        write_json_atomic(&self.runs_dir().join(LATEST_FILE), &latest)
    }

    pub fn run_exists(&self, run_id: &str) -> bool {
        is_safe_id(run_id) && self.run_dir(run_id).join(RUN_MANIFEST_FILE).is_file()
    }

    pub fn load_run_manifest(&self, run_id: &str) -> Result<RunManifest> {
        if !self.run_exists(run_id) {
            return Err(Error::InvalidArgument(format!("unknown run {run_id:?}")));
        }
        read_json(&self.run_dir(run_id).join(RUN_MANIFEST_FILE))
    }

    /// Directory to build a run in before it is published with
    /// [`Store::publish_run`].
    pub fn staging_dir(&self, run_id: &str) -> PathBuf {
        self.runs_dir().join(format!(".staging-{run_id}"))
    }

    /// Moves a staged run into place, replacing an earlier run with the same
    /// id, and records it as the variant's latest.
    pub fn publish_run(&self, variant: Variant, run_id: &str) -> Result<()> {
        let staged = self.staging_dir(run_id);
        let target = self.run_dir(run_id);
        if target.exists() {
            std::fs::remove_dir_all(&target).map_err(|e| Error::io(&target, e))?;
        }
        std::fs::rename(&staged, &target).map_err(|e| Error::io(&staged, e))?;
        self.set_latest_run(variant, run_id)
    }

    // ---- labels ----

    /// Every event in the log, oldest first. A torn final line (no newline,
    /// unparsable) is what a crash mid-append leaves and is ignored.
    pub fn label_events(&self) -> Result<Vec<LabelEvent>> {
        let path = self.labels_path();
        let file = match File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(Error::io(&path, e)),
        };
        let mut reader = BufReader::new(file);
        let mut events = Vec::new();
        let mut line = String::new();
        let mut n = 0u64;
        loop {
            line.clear();
            let read = reader.read_line(&mut line).map_err(|e| Error::io(&path, e))?;
            if read == 0 {
                break;
            }
            n += 1;
            let complete = line.ends_with('\n');
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<LabelEvent>(line.trim_end()) {
                Ok(ev) => events.push(ev),
                Err(_) if !complete => {
                    log::warn!("{}: ignoring torn final line {n}", path.display());
                }
                Err(e) => {
                    return Err(Error::Malformed {
                        path: path.clone(),
                        line: n,
                        message: e.to_string(),
                    })
                }
            }
        }
        Ok(events)
    }

    /// Latest event per comment.
    pub fn label_view(&self) -> Result<BTreeMap<String, LabelEvent>> {
        Ok(replay(self.label_events()?))
    }

    /// Appends an event and syncs it to disk. Returns false without writing
    /// when the comment's current event already has the same label and
    /// reviewer.
    pub fn append_label(&self, event: &LabelEvent) -> Result<bool> {
        if event.label > 1 {
            return Err(Error::InvalidArgument(format!("label must be 0 or 1, got {}", event.label)));
        }
        if let Some(cur) = self.label_view()?.get(&event.comment_id) {
            if cur.label == event.label && cur.reviewer == event.reviewer {
                return Ok(false);
            }
        }
        let path = self.labels_path();
        let mut line = serde_json::to_string(event).map_err(|e| Error::json(&path, e))?;
        line.push('\n');
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        f.write_all(line.as_bytes())
            .and_then(|_| f.sync_data())
            .map_err(|e| Error::io(&path, e))?;
        Ok(true)
    }

    /// SHA-256 over every file's relative path and bytes, in path order.
    pub fn content_hash(&self) -> Result<String> {
        let mut files = Vec::new();
        collect_files(&self.root, &self.root, &mut files)?;
        files.sort();
        let mut h = Sha256::new();
        for rel in files {
            let bytes = std::fs::read(self.root.join(&rel)).map_err(|e| Error::io(&rel, e))?;
            h.update(rel.to_string_lossy().as_bytes());
            h.update([0]);
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(&bytes);
        }
        Ok(hex::encode(h.finalize()))
    }
}

/// Latest event per comment from events in log order.
pub fn replay(events: impl IntoIterator<Item = LabelEvent>) -> BTreeMap<String, LabelEvent> {
    let mut view = BTreeMap::new();
    for ev in events {
        view.insert(ev.comment_id.clone(), ev);
    }
    view
}

/// Run ids are generated as `<variant>-<seed>-<hex>`; anything that could
/// escape the runs directory is rejected.
pub fn is_safe_id(id: &str) -> bool {
    !id.is_empty() && !id.starts_with('.') && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            out.push(path.strip_prefix(root).expect("inside root").to_path_buf());
        }
    }
    Ok(())
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut body = serde_json::to_vec_pretty(value).map_err(|e| Error::json(path, e))?;
    body.push(b'\n');
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn write_json_atomic<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    write_json(&tmp, value)?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}
