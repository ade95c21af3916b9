//! Quantifying the accuracy of sports judges from panel scoring data.
//!
//! Panels of judges mark performances on a closed finite scale. The spread
//! of a panel's marks around its median depends strongly on how good the
//! performance is, and that dependence is stable enough per discipline to
//! be modeled: this crate estimates the intrinsic judging-error variability
//! as a function of performance quality, fits it with count-weighted least
//! squares (quadratic by default, exponential optionally), and then scores
//! each judge against the model — a marking score per evaluation, an
//! overall marking score per judge, and an adaptive outlier flag for
//! evaluations far out of consensus.
//!
//! The crate is organized around the pipeline:
//!
//! * [`data`] — exact-rational domain types and delimited-text ingestion;
//! * [`median`] — per-performance control scores;
//! * [`variance`] — error extraction, binning, weighted fits, diagnostics;
//! * [`model_doc`] — the fitted-model text document format;
//! * [`metrics`] — marking scores, judge profiles, outlier flags, reports;
//! * [`synthetic`] — seeded ground-truth scenario generator and scorecards;
//! * [`pipeline`] — per-discipline orchestration and curve sampling.

pub mod data;
pub mod median;
pub mod metrics;
pub mod model_doc;
pub mod pipeline;
pub mod score;
pub mod synthetic;
pub mod variance;

pub use data::{Dataset, IngestionReport, MarkRecord, PerformanceGroup, Scale};
pub use median::median_control_score;
pub use metrics::{EvaluationScore, JudgeProfile, ScoreOptions};
pub use score::Score;
pub use synthetic::{ScenarioSpec, Scorecard, SyntheticRun};
pub use variance::{BinningPolicy, JudgingError, ModelKind, Shape, SigmaCurve, VarianceBin, VarianceModel};
