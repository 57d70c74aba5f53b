//! C interface to `itemqc`.
//!
//! Every fallible call returns an [`ItqStatus`]. On anything other than
//! `ITQ_STATUS_OK` a message is kept for the calling thread and can be read
//! with [`itq_last_error`]. Objects are handed out as opaque pointers and
//! must be released with the matching `_free` function. Absent statistics
//! and undefined metrics come back as NaN.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use itemqc::data::io::{load_dataset, DatasetPaths};
use itemqc::data::synth::generate_synthetic;
use itemqc::data::{Dataset, ItemType};
use itemqc::evaluation::{ConfusionCounts, MetricSet};
use itemqc::learners::{predict_proba, Matrix, Model};
use itemqc::psychometrics::{compute_item_statistics, PsychometricsConfig, PsychometricsReport};
use itemqc::scorer::{train_reference_scorer, ScorerModel, SplitSpec, TrainOptions};
use itemqc::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ItqStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    NotFound = 4,
    MissingPrerequisite = 5,
    InsufficientData = 6,
    Malformed = 7,
    Io = 8,
    /// A Rust panic was caught at the boundary.
    Panic = 9,
}

impl From<&Error> for ItqStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::UnknownItem(_) | Error::UnknownCandidate(_) | Error::UnknownComment(_) => ItqStatus::NotFound,
            Error::InvalidArgument(_) | Error::DimensionMismatch { .. } => ItqStatus::InvalidArgument,
            Error::InsufficientData(_) => ItqStatus::InsufficientData,
            Error::MissingPrerequisite(_) => ItqStatus::MissingPrerequisite,
            Error::Io { .. } => ItqStatus::Io,
            _ => ItqStatus::Malformed,
        }
    }
}

/// Opaque cleaned dataset.
pub struct ItqDataset {
    inner: Dataset,
}

/// Opaque item statistics for every item of a dataset.
pub struct ItqStats {
    inner: PsychometricsReport,
}

/// Opaque comment relevance scorer.
pub struct ItqScorer {
    inner: ScorerModel,
}

/// Opaque fitted tree ensemble.
pub struct ItqModel {
    inner: Model,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ItqItemStats {
    pub b: f64,
    pub p: f64,
    pub r: f64,
    pub mean_time: f64,
    pub infit: f64,
    pub outfit: f64,
    pub drift_magnitude: f64,
    pub n: u64,
    pub drift_flag: bool,
    pub pretest: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ItqMetrics {
    pub accuracy: f64,
    pub fpr: f64,
    pub fnr: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub actual_predictive_rate: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

struct Failure(ItqStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(ItqStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(ItqStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, recording its failure or panic for the thread.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ItqStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ItqStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_last_error(format!("panic: {message}"));
            ItqStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Failure(ItqStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn nan(x: Option<f64>) -> f64 {
    x.unwrap_or(f64::NAN)
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next `itq_` call on the same thread.
#[no_mangle]
pub extern "C" fn itq_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn itq_status_name(status: ItqStatus) -> *const c_char {
    let s: &'static CStr = match status {
        ItqStatus::Ok => c"ok",
        ItqStatus::NullPointer => c"null_pointer",
        ItqStatus::InvalidUtf8 => c"invalid_utf8",
        ItqStatus::InvalidArgument => c"invalid_argument",
        ItqStatus::NotFound => c"not_found",
        ItqStatus::MissingPrerequisite => c"missing_prerequisite",
        ItqStatus::InsufficientData => c"insufficient_data",
        ItqStatus::Malformed => c"malformed",
        ItqStatus::Io => c"io",
        ItqStatus::Panic => c"panic",
    };
    s.as_ptr()
}

/// Loads `items.csv`, `responses.csv`, `candidates.csv` and
/// `comments.jsonl` from `dir`.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn itq_dataset_load(dir: *const c_char, out: *mut *mut ItqDataset) -> ItqStatus {
    guard(|| {
        let dir = PathBuf::from(str_arg(dir, "dir")?);
        let inner = load_dataset(&DatasetPaths::in_dir(dir))?;
        put(out, ItqDataset { inner })
    })
}

/// Generates the synthetic fixture with speeders already excluded. Zero
/// `operational_items` or `persons` keeps the standard size.
///
/// # Safety
/// `out` must be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn itq_dataset_synth(
    operational_items: usize,
    persons: usize,
    seed: u64,
    out: *mut *mut ItqDataset,
) -> ItqStatus {
    guard(|| {
        let spec = itemqc::commands::synth_spec(
            (operational_items > 0).then_some(operational_items),
            (persons > 0).then_some(persons),
        );
        let (dataset, _) = generate_synthetic(&spec, seed)?;
        let inner = dataset.apply_cleaning(&spec.speeder_cleaning_rules())?;
        put(out, ItqDataset { inner })
    })
}

/// Number of items, or 0 for NULL.
///
/// # Safety
/// `dataset` must be NULL or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn itq_dataset_item_count(dataset: *const ItqDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.items().len())
}

/// Number of comments, or 0 for NULL.
///
/// # Safety
/// `dataset` must be NULL or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn itq_dataset_comment_count(dataset: *const ItqDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.comments().len())
}

/// # Safety
/// `dataset` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn itq_dataset_free(dataset: *mut ItqDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Computes item statistics with the default configuration.
///
/// # Safety
/// `dataset` must be a live dataset handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn itq_stats_compute(dataset: *const ItqDataset, out: *mut *mut ItqStats) -> ItqStatus {
    guard(|| {
        let dataset = deref(dataset, "dataset")?;
        let inner = compute_item_statistics(&dataset.inner, &PsychometricsConfig::default())?;
        put(out, ItqStats { inner })
    })
}

/// # Safety
/// `stats` must be NULL or a live stats handle.
#[no_mangle]
pub unsafe extern "C" fn itq_stats_item_count(stats: *const ItqStats) -> usize {
    stats.as_ref().map_or(0, |s| s.inner.items.len())
}

/// Copies the statistics of one item into `out`.
///
/// # Safety
/// `stats` must be a live stats handle, `item_id` a NUL-terminated string
/// and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn itq_stats_item(
    stats: *const ItqStats,
    item_id: *const c_char,
    out: *mut ItqItemStats,
) -> ItqStatus {
    guard(|| {
        let stats = deref(stats, "stats")?;
        let id = str_arg(item_id, "item_id")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let s = stats
            .inner
            .items
            .get(id)
            .ok_or_else(|| Failure::from(Error::UnknownItem(id.to_string())))?;
        *out = ItqItemStats {
            b: nan(s.b),
            p: nan(s.p),
            r: nan(s.r),
            mean_time: nan(s.mean_time),
            infit: nan(s.infit),
            outfit: nan(s.outfit),
            drift_magnitude: nan(s.drift_magnitude),
            n: s.n as u64,
            drift_flag: s.drift_flag,
            pretest: s.item_type == ItemType::Pretest,
        };
        Ok(())
    })
}

/// # Safety
/// `stats` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn itq_stats_free(stats: *mut ItqStats) {
    if !stats.is_null() {
        drop(Box::from_raw(stats));
    }
}

/// Trains the reference scorer on the dataset's labeled comments.
///
/// # Safety
/// `dataset` must be a live dataset handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn itq_scorer_train(
    dataset: *const ItqDataset,
    seed: u64,
    out: *mut *mut ItqScorer,
) -> ItqStatus {
    guard(|| {
        let dataset = deref(dataset, "dataset")?;
        let inner = train_reference_scorer(
            dataset.inner.comments(),
            &SplitSpec::scorer_default(seed),
            &TrainOptions::default(),
        )?;
        put(out, ItqScorer { inner })
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn itq_scorer_load(path: *const c_char, out: *mut *mut ItqScorer) -> ItqStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        let inner = ScorerModel::load(&path)?;
        put(out, ItqScorer { inner })
    })
}

/// # Safety
/// `scorer` must be a live scorer handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn itq_scorer_save(scorer: *const ItqScorer, path: *const c_char) -> ItqStatus {
    guard(|| {
        let scorer = deref(scorer, "scorer")?;
        let path = PathBuf::from(str_arg(path, "path")?);
        Ok(scorer.inner.save(&path)?)
    })
}

/// Relevance probability of one comment text.
///
/// # Safety
/// `scorer` must be a live scorer handle, `text` a NUL-terminated string and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn itq_scorer_probability(
    scorer: *const ItqScorer,
    text: *const c_char,
    out: *mut f64,
) -> ItqStatus {
    guard(|| {
        let scorer = deref(scorer, "scorer")?;
        let text = str_arg(text, "text")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = scorer.inner.probability(text);
        Ok(())
    })
}

/// # Safety
/// `scorer` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn itq_scorer_free(scorer: *mut ItqScorer) {
    if !scorer.is_null() {
        drop(Box::from_raw(scorer));
    }
}

/// Loads a `model.json` written by a run.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn itq_model_load(path: *const c_char, out: *mut *mut ItqModel) -> ItqStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        let inner = Model::load(&path)?;
        put(out, ItqModel { inner })
    })
}

/// Number of feature columns the model expects, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live model handle.
#[no_mangle]
pub unsafe extern "C" fn itq_model_feature_count(model: *const ItqModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.n_features())
}

/// Positive-class probabilities for `n_rows` row-major rows of `n_cols`
/// values. NaN marks a missing value.
///
/// # Safety
/// `rows` must point to `n_rows * n_cols` doubles and `out` to `n_rows`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn itq_model_predict(
    model: *const ItqModel,
    rows: *const f64,
    n_rows: usize,
    n_cols: usize,
    out: *mut f64,
) -> ItqStatus {
    guard(|| {
        let model = deref(model, "model")?;
        if n_rows == 0 {
            return Ok(());
        }
        if rows.is_null() {
            return Err(null("rows"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let len = n_rows
            .checked_mul(n_cols)
            .ok_or_else(|| Failure::from(Error::InvalidArgument("n_rows * n_cols overflows".into())))?;
        let data = std::slice::from_raw_parts(rows, len).to_vec();
        let x = Matrix::new(n_rows, n_cols, data)?;
        let probs = predict_proba(&model.inner, &x)?;
        std::slice::from_raw_parts_mut(out, n_rows).copy_from_slice(&probs);
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn itq_model_free(model: *mut ItqModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Metrics of a confusion table. Negative counts are rejected.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn itq_metrics(tp: i64, fp: i64, fn_: i64, tn: i64, out: *mut ItqMetrics) -> ItqStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let cell = |name: &str, v: i64| {
            u64::try_from(v).map_err(|_| Failure::from(Error::InvalidArgument(format!("{name} is negative: {v}"))))
        };
        let counts = ConfusionCounts::new(cell("tp", tp)?, cell("fp", fp)?, cell("fn", fn_)?, cell("tn", tn)?);
        let m = MetricSet::from_counts(&counts);
        *out = ItqMetrics {
            accuracy: nan(m.accuracy),
            fpr: nan(m.fpr),
            fnr: nan(m.fnr),
            precision: nan(m.precision),
            recall: nan(m.recall),
            f1: nan(m.f1),
            actual_predictive_rate: nan(m.actual_predictive_rate),
        };
        Ok(())
    })
}
