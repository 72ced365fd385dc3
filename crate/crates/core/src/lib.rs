//! Execution-based evaluation harness for Earth Engine code generation.
//!
//! A suite of unit cases is loaded ([`model`]), models are prompted for
//! candidate functions ([`submission`]), candidates are executed by an
//! external runner process ([`runner`]), outputs are judged against the
//! expected answers ([`judge`]), failures are categorized ([`classify`]),
//! and per-model metrics and rankings are reported ([`metrics`], [`report`]).
//! [`forge`] drafts new cases from API documentation and [`run`] ties the
//! pipeline to an on-disk, resumable run layout.
//!
//! Numeric code is generic over [`Scalar`]; the aliases below fix it to `f64`.

pub mod classify;
pub mod forge;
pub mod geometry;
pub mod judge;
pub mod metrics;
pub mod model;
pub mod npy;
pub mod pycode;
pub mod report;
pub mod run;
pub mod runner;
pub mod scalar;
pub mod submission;

pub use classify::ErrorCategory;
pub use model::{OutputType, Suite, TestCase, ValueGroup};
pub use scalar::Scalar;

pub type Tolerances = judge::Tolerances<f64>;
pub type ModelSummary = metrics::ModelSummary<f64>;
pub type Efficiencies = metrics::Efficiencies<f64>;
pub type ResourceAverages = metrics::ResourceAverages<f64>;
