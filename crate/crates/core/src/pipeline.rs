//! Per-discipline orchestration: errors → bins → fitted model.

use thiserror::Error;

use crate::data::{DataError, Dataset};
use crate::variance::{
    bin_errors, extract_errors, fit_exponential, fit_quadratic, sigma_floor, BinningPolicy,
    FitError, FitOptions, ModelKind, VarianceBin, VarianceModel,
};

/// Fitting configuration for a whole dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOptions {
    pub kind: ModelKind,
    pub binning: BinningPolicy,
    /// Overrides the per-discipline floor max(1e−6, step/100) when set.
    pub floor_override: Option<f64>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            kind: ModelKind::Quadratic,
            binning: BinningPolicy::default(),
            floor_override: None,
        }
    }
}

/// A fitted discipline with its bin table.
#[derive(Debug, Clone)]
pub struct DisciplineFit {
    pub discipline_id: String,
    pub model: VarianceModel,
    pub bins: Vec<VarianceBin>,
    pub n_errors: usize,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("discipline `{discipline}`: {source}")]
    Fit {
        discipline: String,
        source: FitError,
    },
}

/// Fit one discipline's variance model.
pub fn fit_discipline(
    dataset: &Dataset,
    discipline: &str,
    opts: &AnalysisOptions,
) -> Result<DisciplineFit, PipelineError> {
    let errors = extract_errors(dataset, discipline)?;
    let bins = bin_errors(&errors, &opts.binning);
    let floor = opts.floor_override.unwrap_or_else(|| {
        sigma_floor(dataset.max_step(discipline).unwrap_or(0.0))
    });
    let fit_opts = FitOptions {
        floor,
        domain: control_range(&errors),
    };
    let model = match opts.kind {
        ModelKind::Quadratic => fit_quadratic(&bins, &fit_opts),
        ModelKind::Exponential => fit_exponential(&bins, &fit_opts),
    }
    .map_err(|source| PipelineError::Fit {
        discipline: discipline.to_string(),
        source,
    })?;
    Ok(DisciplineFit {
        discipline_id: discipline.to_string(),
        model,
        bins,
        n_errors: errors.len(),
    })
}

fn control_range(errors: &[crate::variance::JudgingError]) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for e in errors {
        let c = e.control_score.to_f64();
        lo = lo.min(c);
        hi = hi.max(c);
    }
    (lo <= hi).then_some((lo, hi))
}

/// Fit every discipline, keeping per-discipline failures separate.
pub fn fit_all(
    dataset: &Dataset,
    opts: &AnalysisOptions,
) -> Vec<(String, Result<DisciplineFit, PipelineError>)> {
    dataset
        .discipline_ids()
        .map(|d| (d.to_string(), fit_discipline(dataset, d, opts)))
        .collect()
}

/// Evenly spaced (c, sigma(c)) samples over the model's domain, for
/// plotting the fitted curve next to the bin scatter.
pub fn curve_samples(model: &VarianceModel, n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 2);
    let (lo, hi) = model.domain;
    (0..n)
        .map(|i| {
            let c = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            (c, model.sigma(c))
        })
        .collect()
}
