//! Comment triage for exam item review.
//!
//! The crate turns raw exam data (responses, item metadata, free-text
//! examinee comments) into a short, ranked list of comments worth sending to
//! an item review meeting. Each comment gets a relevance probability from a
//! text scorer. That probability is joined with psychometric statistics of the
//! commented item (Rasch difficulty, p-value, point-biserial, timing, drift,
//! fit) and the commenter's exam score, then fed to tree-ensemble
//! classifiers. Five model variants (`M1`..`M5`) are supported; see
//! [`pipeline::Variant`].
//!
//! Layout:
//!
//! * [`data`] - the canonical data model, CSV/JSONL ingestion, cleaning and a
//!   synthetic generator with known ground truth.
//! * [`psychometrics`] - classical item statistics, Rasch JMLE calibration,
//!   infit/outfit, parameter drift and statistical flag rules.
//! * [`scorer`] - a hashed n-gram logistic relevance scorer plus an import
//!   adapter for externally produced probabilities.
//! * [`learners`] - CART, random forest, second-order gradient boosting and
//!   stratified k-fold grid search.
//! * [`pipeline`] - feature assembly, variant runs and item-level aggregation.
//! * [`evaluation`] - confusion counts, metrics, report tables and histogram
//!   exports.
//! * [`store`], [`commands`], [`service`] - the on-disk store, the batch
//!   commands behind the CLI and the HTTP review service.

pub mod commands;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod learners;
pub mod numeric;
pub mod pipeline;
pub mod psychometrics;
pub mod scorer;
pub mod service;
pub mod store;

pub use error::{Error, Result};
