//! Heteroscedastic judging-error variability: binning and model fitting.
//!
//! Judging errors (mark minus control score) are grouped by control score,
//! each bin's standard deviation estimates the intrinsic variability at that
//! quality level, and a curve is fitted through the bins by count-weighted
//! least squares. The quadratic family is the default; an exponential family
//! is available for disciplines where the best performances dominate.

use std::collections::BTreeMap;

use num_rational::Rational64;
use num_traits::ToPrimitive;
use thiserror::Error;

use crate::data::{DataError, Dataset};
use crate::score::Score;

/// Normal-equation condition number beyond which a quadratic fit is refused.
pub const MAX_CONDITION: f64 = 1e12;

/// Iteration cap for the exponential Gauss-Newton refinement.
const MAX_GAUSS_NEWTON_ITERATIONS: usize = 100;

/// One judging error: a judge's deviation from the control score.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JudgingError {
    pub competition_id: String,
    pub discipline_id: String,
    pub performance_id: String,
    pub judge_id: String,
    pub control_score: Score,
    /// mark − control score, exact.
    pub error: Score,
}

/// Aggregated errors at one quality level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceBin {
    /// Count-weighted mean control score of the merged errors.
    pub center: f64,
    pub count: usize,
    /// Standard deviation of the bin's errors.
    pub sigma: f64,
}

/// Fitted variability family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaCurve {
    /// sigma(c) = a0 + a1·c + a2·c²
    Quadratic { a0: f64, a1: f64, a2: f64 },
    /// sigma(c) = alpha·e^(beta·c)
    Exponential { alpha: f64, beta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Quadratic,
    Exponential,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelKind::Quadratic => f.write_str("quadratic"),
            ModelKind::Exponential => f.write_str("exponential"),
        }
    }
}

impl SigmaCurve {
    pub fn kind(&self) -> ModelKind {
        match self {
            SigmaCurve::Quadratic { .. } => ModelKind::Quadratic,
            SigmaCurve::Exponential { .. } => ModelKind::Exponential,
        }
    }

    /// Raw curve value, before the positivity floor.
    pub fn value(&self, c: f64) -> f64 {
        match *self {
            SigmaCurve::Quadratic { a0, a1, a2 } => a0 + c * (a1 + c * a2),
            SigmaCurve::Exponential { alpha, beta } => alpha * (beta * c).exp(),
        }
    }

    pub fn slope(&self, c: f64) -> f64 {
        match *self {
            SigmaCurve::Quadratic { a1, a2, .. } => a1 + 2.0 * a2 * c,
            SigmaCurve::Exponential { alpha, beta } => alpha * beta * (beta * c).exp(),
        }
    }

    /// Shape by the sign of the curvature: concave and convex quadratics by
    /// the leading coefficient; a positive exponential is always convex.
    pub fn classify(&self) -> Shape {
        match *self {
            SigmaCurve::Quadratic { a2, .. } => {
                if a2 < 0.0 {
                    Shape::Concave
                } else if a2 > 0.0 {
                    Shape::Convex
                } else {
                    Shape::Degenerate
                }
            }
            SigmaCurve::Exponential { alpha, beta } => {
                if alpha > 0.0 && beta != 0.0 {
                    Shape::Convex
                } else {
                    Shape::Degenerate
                }
            }
        }
    }
}

/// Sign of the fitted curvature.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Concave,
    Convex,
    Degenerate,
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Shape::Concave => f.write_str("concave"),
            Shape::Convex => f.write_str("convex"),
            Shape::Degenerate => f.write_str("degenerate"),
        }
    }
}

/// A fitted variability model with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceModel {
    pub curve: SigmaCurve,
    /// Observed control-score range the fit is trusted on.
    pub domain: (f64, f64),
    /// Positive lower clamp for evaluation.
    pub floor: f64,
    /// Count-weighted coefficient of determination; `None` when the bin
    /// sigmas are all equal and r² is undefined.
    pub r2_weighted: Option<f64>,
    /// Count-weighted root-mean-square deviation, in score units.
    pub rmsd_weighted: f64,
    pub shape: Shape,
    /// Condition number of the normal equations (quadratic fits only).
    pub condition: Option<f64>,
}

/// Evaluation of the model at one quality level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaEval {
    pub value: f64,
    /// The raw curve dipped to or below the floor here.
    pub clamped: bool,
    /// Evaluated outside the observed control-score range.
    pub outside_domain: bool,
}

impl VarianceModel {
    pub fn kind(&self) -> ModelKind {
        self.curve.kind()
    }

    /// Approximated variability at quality `c`, clamped below by the floor.
    /// Total and strictly positive, so downstream divisions are safe.
    pub fn sigma(&self, c: f64) -> f64 {
        self.curve.value(c).max(self.floor)
    }

    pub fn sigma_detailed(&self, c: f64) -> SigmaEval {
        let raw = self.curve.value(c);
        SigmaEval {
            value: raw.max(self.floor),
            clamped: raw < self.floor || !raw.is_finite(),
            outside_domain: c < self.domain.0 || c > self.domain.1,
        }
    }
}

/// How a bin's standard deviation is centered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SdCentering {
    /// Sample standard deviation about the bin's error mean, denominator
    /// count − 1. Separates panel dispersion from bin-level bias.
    #[default]
    BinMean,
    /// Root mean square about zero, denominator count.
    Zero,
}

/// Binning configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinningPolicy {
    /// Bins are merged with their nearest neighbor until every bin holds at
    /// least this many errors.
    pub min_count: usize,
    pub centering: SdCentering,
}

impl Default for BinningPolicy {
    fn default() -> Self {
        BinningPolicy {
            min_count: 10,
            centering: SdCentering::BinMean,
        }
    }
}

/// Fit configuration shared by both families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Positive evaluation floor, in score units.
    pub floor: f64,
    /// Observed control-score range; derived from the bin centers when
    /// absent.
    pub domain: Option<(f64, f64)>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            floor: 1e-6,
            domain: None,
        }
    }
}

/// Evaluation floor for a scale: max(1e−6, step / 100).
pub fn sigma_floor(max_step: f64) -> f64 {
    (max_step / 100.0).max(1e-6)
}

/// Fit failure.
#[derive(Debug, Error)]
pub enum FitError {
    #[error("insufficient support: {got} bins with distinct centers, need {needed}")]
    InsufficientSupport { needed: usize, got: usize },
    #[error("singular normal equations")]
    Singular,
    #[error("normal equations ill-conditioned (condition {condition:.3e})")]
    IllConditioned { condition: f64 },
    #[error("exponential fit did not converge after {iterations} iterations")]
    NonConvergent {
        /// Best iterate reached before the cap; usable with caution.
        best: Box<VarianceModel>,
        iterations: usize,
    },
}

/// One judging error per (performance, judge) mark in the discipline.
pub fn extract_errors(dataset: &Dataset, discipline: &str) -> Result<Vec<JudgingError>, DataError> {
    let groups = dataset
        .groups(discipline)
        .ok_or_else(|| DataError::UnknownDiscipline(discipline.to_string()))?;
    let mut errors = Vec::new();
    for group in groups {
        for mark in &group.marks {
            errors.push(JudgingError {
                competition_id: mark.competition_id.clone(),
                discipline_id: mark.discipline_id.clone(),
                performance_id: mark.performance_id.clone(),
                judge_id: mark.judge_id.clone(),
                control_score: group.control_score,
                error: mark.mark - group.control_score,
            });
        }
    }
    Ok(errors)
}

struct ProtoBin {
    /// Exact sum of member control scores; keeps merge decisions free of
    /// float rounding so they commute with rescaling.
    control_sum: Rational64,
    count: usize,
    errors: Vec<f64>,
}

impl ProtoBin {
    fn center_exact(&self) -> Rational64 {
        self.control_sum / Rational64::from_integer(self.count as i64)
    }

    fn absorb(&mut self, other: ProtoBin) {
        self.control_sum += other.control_sum;
        self.count += other.count;
        self.errors.extend(other.errors);
    }
}

/// Group errors by control score and merge sparse bins.
///
/// Every attainable control-score value starts as its own bin; the
/// smallest bin below `min_count` is then repeatedly merged into its
/// nearest neighbor by center. Singleton leftovers (only possible when a
/// single bin remains) are dropped, since a standard deviation needs two
/// points. Every error is assigned to exactly one surviving bin.
pub fn bin_errors(errors: &[JudgingError], policy: &BinningPolicy) -> Vec<VarianceBin> {
    let mut by_control: BTreeMap<Rational64, ProtoBin> = BTreeMap::new();
    for e in errors {
        let key = e.control_score.inner();
        let entry = by_control.entry(key).or_insert_with(|| ProtoBin {
            control_sum: Rational64::from_integer(0),
            count: 0,
            errors: Vec::new(),
        });
        entry.control_sum += key;
        entry.count += 1;
        entry.errors.push(e.error.to_f64());
    }
    let mut bins: Vec<ProtoBin> = by_control.into_values().collect();

    // Greedy nearest-neighbor merging, smallest deficient bin first.
    while bins.len() > 1 {
        let deficient = bins
            .iter()
            .enumerate()
            .filter(|(_, b)| b.count < policy.min_count)
            .min_by_key(|(i, b)| (b.count, *i))
            .map(|(i, _)| i);
        let Some(i) = deficient else { break };
        let center = bins[i].center_exact();
        let left = i.checked_sub(1).map(|l| center - bins[l].center_exact());
        let right = bins.get(i + 1).map(|r| r.center_exact() - center);
        let into = match (left, right) {
            (Some(l), Some(r)) if r < l => i + 1,
            (Some(_), _) => i - 1,
            (None, Some(_)) => i + 1,
            (None, None) => break,
        };
        let absorbed = bins.remove(i);
        let into = if into > i { into - 1 } else { into };
        bins[into].absorb(absorbed);
    }

    bins.iter()
        .filter(|b| b.count >= 2)
        .map(|b| VarianceBin {
            center: b.center_exact().to_f64().expect("finite center"),
            count: b.count,
            sigma: bin_sigma(&b.errors, policy.centering),
        })
        .collect()
}

fn bin_sigma(errors: &[f64], centering: SdCentering) -> f64 {
    let n = errors.len();
    debug_assert!(n >= 2);
    match centering {
        SdCentering::BinMean => {
            let mean = errors.iter().sum::<f64>() / n as f64;
            let ss = errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>();
            (ss / (n - 1) as f64).sqrt()
        }
        SdCentering::Zero => {
            let ss = errors.iter().map(|e| e * e).sum::<f64>();
            (ss / n as f64).sqrt()
        }
    }
}

fn distinct_centers(bins: &[VarianceBin]) -> usize {
    let mut centers: Vec<f64> = bins.iter().map(|b| b.center).collect();
    centers.sort_by(f64::total_cmp);
    centers.dedup();
    centers.len()
}

fn center_range(bins: &[VarianceBin]) -> (f64, f64) {
    let lo = bins.iter().map(|b| b.center).fold(f64::INFINITY, f64::min);
    let hi = bins
        .iter()
        .map(|b| b.center)
        .fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Count-weighted least-squares quadratic fit through the bins.
///
/// Solved by closed-form 3×3 normal equations with partial pivoting, on a
/// regressor centered and scaled to [−1, 1] for conditioning; coefficients
/// are mapped back to the raw basis afterwards.
pub fn fit_quadratic(bins: &[VarianceBin], opts: &FitOptions) -> Result<VarianceModel, FitError> {
    let distinct = distinct_centers(bins);
    if distinct < 3 {
        return Err(FitError::InsufficientSupport {
            needed: 3,
            got: distinct,
        });
    }
    let (lo, hi) = center_range(bins);
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);

    let mut m = [[0.0f64; 3]; 3];
    let mut rhs = [0.0f64; 3];
    for b in bins {
        let w = b.count as f64;
        let u = (b.center - mid) / half;
        let pow = [1.0, u, u * u];
        for j in 0..3 {
            for k in 0..3 {
                m[j][k] += w * pow[j] * pow[k];
            }
            rhs[j] += w * pow[j] * b.sigma;
        }
    }
    let condition = condition_inf3(&m).ok_or(FitError::Singular)?;
    if condition > MAX_CONDITION {
        return Err(FitError::IllConditioned { condition });
    }
    let b = solve3(m, rhs).ok_or(FitError::Singular)?;

    // sigma(c) = b0 + b1·u + b2·u² with u = (c − mid)/half.
    let a2 = b[2] / (half * half);
    let a1 = b[1] / half - 2.0 * b[2] * mid / (half * half);
    let a0 = b[0] - b[1] * mid / half + b[2] * (mid * mid) / (half * half);
    let curve = SigmaCurve::Quadratic { a0, a1, a2 };

    let mut model = VarianceModel {
        shape: curve.classify(),
        curve,
        domain: opts.domain.unwrap_or((lo, hi)),
        floor: opts.floor,
        r2_weighted: None,
        rmsd_weighted: 0.0,
        condition: Some(condition),
    };
    let (r2, rmsd) = diagnostics(bins, &model);
    model.r2_weighted = r2;
    model.rmsd_weighted = rmsd;
    Ok(model)
}

/// Count-weighted least-squares exponential fit sigma(c) = alpha·e^(beta·c).
///
/// Initialized from the weighted log-linear regression of ln sigma on c
/// (zero sigmas are floor-substituted there), then refined by iteratively
/// damped Gauss-Newton on the untransformed loss.
pub fn fit_exponential(bins: &[VarianceBin], opts: &FitOptions) -> Result<VarianceModel, FitError> {
    let distinct = distinct_centers(bins);
    if distinct < 2 {
        return Err(FitError::InsufficientSupport {
            needed: 2,
            got: distinct,
        });
    }
    let (lo, hi) = center_range(bins);
    let total_w: f64 = bins.iter().map(|b| b.count as f64).sum();
    let cbar = bins.iter().map(|b| b.count as f64 * b.center).sum::<f64>() / total_w;

    // Log-linear initialization on the centered regressor.
    let logs: Vec<f64> = bins
        .iter()
        .map(|b| b.sigma.max(opts.floor).ln())
        .collect();
    let ybar = bins
        .iter()
        .zip(&logs)
        .map(|(b, y)| b.count as f64 * y)
        .sum::<f64>()
        / total_w;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (b, y) in bins.iter().zip(&logs) {
        let w = b.count as f64;
        let x = b.center - cbar;
        sxx += w * x * x;
        sxy += w * x * (y - ybar);
    }
    if sxx <= 0.0 {
        return Err(FitError::Singular);
    }
    let mut beta = sxy / sxx;
    // amp = alpha·e^(beta·cbar), the curve value at the weighted center.
    let mut amp = ybar.exp();

    let loss = |amp: f64, beta: f64| -> f64 {
        bins.iter()
            .map(|b| {
                let f = amp * (beta * (b.center - cbar)).exp();
                let r = f - b.sigma;
                b.count as f64 * r * r
            })
            .sum()
    };

    let mut current = loss(amp, beta);
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..MAX_GAUSS_NEWTON_ITERATIONS {
        iterations += 1;
        // Normal equations of the linearized residuals.
        let mut jtj = [[0.0f64; 2]; 2];
        let mut jtr = [0.0f64; 2];
        for b in bins {
            let w = b.count as f64;
            let x = b.center - cbar;
            let e = (beta * x).exp();
            let f = amp * e;
            let r = f - b.sigma;
            let j = [e, amp * x * e];
            for p in 0..2 {
                for q in 0..2 {
                    jtj[p][q] += w * j[p] * j[q];
                }
                jtr[p] += w * j[p] * r;
            }
        }
        let Some(delta) = solve2(jtj, [-jtr[0], -jtr[1]]) else {
            break;
        };
        // Damp the step until the loss improves.
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let cand = loss(amp + t * delta[0], beta + t * delta[1]);
            if cand.is_finite() && cand < current {
                amp += t * delta[0];
                beta += t * delta[1];
                let change = current - cand;
                current = cand;
                improved = true;
                if change <= 1e-14 * current.max(1e-300) {
                    converged = true;
                }
                break;
            }
            t *= 0.5;
        }
        if !improved {
            // No descent direction left at the smallest damping: stationary.
            converged = true;
        }
        if converged {
            break;
        }
    }

    let alpha = amp * (-beta * cbar).exp();
    let curve = SigmaCurve::Exponential { alpha, beta };
    let mut model = VarianceModel {
        shape: curve.classify(),
        curve,
        domain: opts.domain.unwrap_or((lo, hi)),
        floor: opts.floor,
        r2_weighted: None,
        rmsd_weighted: 0.0,
        condition: None,
    };
    let (r2, rmsd) = diagnostics(bins, &model);
    model.r2_weighted = r2;
    model.rmsd_weighted = rmsd;
    if converged {
        Ok(model)
    } else {
        Err(FitError::NonConvergent {
            best: Box::new(model),
            iterations,
        })
    }
}

/// Count-weighted r² and RMSD of a model over its bins.
///
/// r² = 1 − SS_res/SS_tot about the weighted mean sigma; reported missing
/// when every bin sigma is equal (SS_tot = 0). RMSD = sqrt(SS_res / Σw).
pub fn diagnostics(bins: &[VarianceBin], model: &VarianceModel) -> (Option<f64>, f64) {
    let total_w: f64 = bins.iter().map(|b| b.count as f64).sum();
    let mean = bins
        .iter()
        .map(|b| b.count as f64 * b.sigma)
        .sum::<f64>()
        / total_w;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for b in bins {
        let w = b.count as f64;
        let r = b.sigma - model.sigma(b.center);
        let d = b.sigma - mean;
        ss_res += w * r * r;
        ss_tot += w * d * d;
    }
    let r2 = (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot);
    (r2, (ss_res / total_w).sqrt())
}

fn solve2(m: [[f64; 2]; 2], rhs: [f64; 2]) -> Option<[f64; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    Some([
        (rhs[0] * m[1][1] - rhs[1] * m[0][1]) / det,
        (m[0][0] * rhs[1] - m[1][0] * rhs[0]) / det,
    ])
}

/// Gaussian elimination with partial pivoting on a 3×3 system.
fn solve3(mut m: [[f64; 3]; 3], mut rhs: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        if m[pivot][col] == 0.0 || !m[pivot][col].is_finite() {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = [0.0f64; 3];
    for row in (0..3).rev() {
        let mut s = rhs[row];
        for k in row + 1..3 {
            s -= m[row][k] * x[k];
        }
        x[row] = s / m[row][row];
        if !x[row].is_finite() {
            return None;
        }
    }
    Some(x)
}

/// Infinity-norm condition number of a 3×3 matrix, via explicit inverse.
fn condition_inf3(m: &[[f64; 3]; 3]) -> Option<f64> {
    let norm = |mat: &[[f64; 3]; 3]| -> f64 {
        (0..3)
            .map(|i| (0..3).map(|j| mat[i][j].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    let mut inv = [[0.0f64; 3]; 3];
    for col in 0..3 {
        let mut e = [0.0f64; 3];
        e[col] = 1.0;
        let x = solve3(*m, e)?;
        for row in 0..3 {
            inv[row][col] = x[row];
        }
    }
    let cond = norm(m) * norm(&inv);
    cond.is_finite().then_some(cond)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn err_at(control: Score, error: Score) -> JudgingError {
        JudgingError {
            competition_id: "C".into(),
            discipline_id: "D".into(),
            performance_id: "P".into(),
            judge_id: "J".into(),
            control_score: control,
            error,
        }
    }

    fn micro(v: f64) -> Score {
        Score::new((v * 1e6).round() as i64, 1_000_000)
    }

    fn bins_on_curve(curve: &SigmaCurve, centers: &[f64], count: usize) -> Vec<VarianceBin> {
        centers
            .iter()
            .map(|&c| VarianceBin {
                center: c,
                count,
                sigma: curve.value(c),
            })
            .collect()
    }

    #[test]
    fn errors_from_marks() {
        let input = "competition_id,discipline_id,performance_id,judge_id,mark,scale_min,scale_max,scale_step\n\
             W,DIV,P1,J1,8.0,0,10,0.5\nW,DIV,P1,J2,8.5,0,10,0.5\nW,DIV,P1,J3,9.0,0,10,0.5\n";
        let (dataset, _) = crate::data::ingest(input.as_bytes(), "t").unwrap();
        let errors = extract_errors(&dataset, "DIV").unwrap();
        assert_eq!(errors.len(), 3);
        let values: Vec<f64> = errors.iter().map(|e| e.error.to_f64()).collect();
        assert_eq!(values, vec![-0.5, 0.0, 0.5]);
        assert!(extract_errors(&dataset, "XXX").is_err());
    }

    #[test]
    fn two_point_bin_sigma() {
        let errors = vec![
            err_at(Score::from_int(5), micro(0.5)),
            err_at(Score::from_int(5), micro(-0.5)),
        ];
        let bins = bin_errors(&errors, &BinningPolicy { min_count: 2, ..Default::default() });
        assert_eq!(bins.len(), 1);
        assert_eq!(bins[0].count, 2);
        assert_relative_eq!(bins[0].sigma, 0.707, epsilon = 5e-4);
        assert_relative_eq!(bins[0].sigma, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
    }

    #[test]
    fn zero_variance_bin() {
        let errors: Vec<JudgingError> = (0..4)
            .map(|_| err_at(Score::from_int(5), Score::ZERO))
            .collect();
        let bins = bin_errors(&errors, &BinningPolicy { min_count: 2, ..Default::default() });
        assert_eq!(bins[0].sigma, 0.0);
    }

    #[test]
    fn monte_carlo_bin_sigma_within_three_standard_errors() {
        use rand::SeedableRng;
        use rand_distr::Distribution;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1405);
        let normal = rand_distr::Normal::new(0.0, 0.30).unwrap();
        let errors: Vec<JudgingError> = (0..1000)
            .map(|_| err_at(Score::from_int(7), micro(normal.sample(&mut rng))))
            .collect();
        let bins = bin_errors(&errors, &BinningPolicy::default());
        assert_eq!(bins.len(), 1);
        assert_eq!(bins[0].count, 1000);
        // 3 standard errors of the SD estimator: 3·0.30/sqrt(2·999) ≈ 0.020.
        assert!(
            bins[0].sigma > 0.27 && bins[0].sigma < 0.33,
            "sigma = {}",
            bins[0].sigma
        );
    }

    #[test]
    fn merging_respects_min_count() {
        // Ten grid levels with 3 errors each, min_count 10: merging must
        // leave every bin with >= 10 errors and conserve the total.
        let mut errors = Vec::new();
        for level in 0..10 {
            for j in 0..3 {
                errors.push(err_at(
                    Score::new(level, 2),
                    micro(0.1 * (j as f64 - 1.0)),
                ));
            }
        }
        let bins = bin_errors(&errors, &BinningPolicy::default());
        assert!(bins.iter().all(|b| b.count >= 10));
        assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), errors.len());
        let mut centers: Vec<f64> = bins.iter().map(|b| b.center).collect();
        let mut sorted = centers.clone();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(centers, sorted, "bins stay ordered by center");
        centers.dedup();
        assert_eq!(centers.len(), bins.len());
    }

    #[test]
    fn exact_quadratic_recovered() {
        let truth = SigmaCurve::Quadratic {
            a0: 0.2,
            a1: 0.1,
            a2: -0.01,
        };
        let centers: Vec<f64> = (0..=10).map(|i| i as f64).collect();
        let bins = bins_on_curve(&truth, &centers, 25);
        let model = fit_quadratic(&bins, &FitOptions::default()).unwrap();
        let SigmaCurve::Quadratic { a0, a1, a2 } = model.curve else {
            panic!("quadratic expected")
        };
        assert_relative_eq!(a0, 0.2, epsilon = 1e-9);
        assert_relative_eq!(a1, 0.1, epsilon = 1e-9);
        assert_relative_eq!(a2, -0.01, epsilon = 1e-9);
        assert_eq!(model.r2_weighted, Some(1.0));
        assert!(model.rmsd_weighted < 1e-12);
        assert_eq!(model.shape, Shape::Concave);
    }

    #[test]
    fn three_bin_interpolating_parabola() {
        // Oracle: solving the 3×3 system by hand (and with an independent
        // dense grid search, see the acceptance suite) gives the parabola
        // through (1,1), (2,2), (3,1): sigma(c) = −2 + 4c − c².
        let bins = vec![
            VarianceBin { center: 1.0, count: 1, sigma: 1.0 },
            VarianceBin { center: 2.0, count: 1, sigma: 2.0 },
            VarianceBin { center: 3.0, count: 1, sigma: 1.0 },
        ];
        let model = fit_quadratic(&bins, &FitOptions::default()).unwrap();
        let SigmaCurve::Quadratic { a0, a1, a2 } = model.curve else {
            panic!("quadratic expected")
        };
        assert_relative_eq!(a0, -2.0, epsilon = 1e-9);
        assert_relative_eq!(a1, 4.0, epsilon = 1e-9);
        assert_relative_eq!(a2, -1.0, epsilon = 1e-9);
        assert_eq!(model.r2_weighted, Some(1.0));
    }

    #[test]
    fn insufficient_support_rejected() {
        let bins = vec![
            VarianceBin { center: 1.0, count: 5, sigma: 0.3 },
            VarianceBin { center: 2.0, count: 5, sigma: 0.4 },
        ];
        match fit_quadratic(&bins, &FitOptions::default()) {
            Err(FitError::InsufficientSupport { needed: 3, got: 2 }) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn duplicated_bin_equals_doubled_weight() {
        let base = vec![
            VarianceBin { center: 1.0, count: 7, sigma: 0.31 },
            VarianceBin { center: 3.0, count: 11, sigma: 0.42 },
            VarianceBin { center: 5.0, count: 13, sigma: 0.40 },
            VarianceBin { center: 7.0, count: 17, sigma: 0.28 },
        ];
        let mut duplicated = base.clone();
        duplicated.push(base[1]);
        let mut reweighted = base.clone();
        reweighted[1].count *= 2;
        let opts = FitOptions::default();
        let a = fit_quadratic(&duplicated, &opts).unwrap();
        let b = fit_quadratic(&reweighted, &opts).unwrap();
        let (SigmaCurve::Quadratic { a0, a1, a2 }, SigmaCurve::Quadratic { a0: b0, a1: b1, a2: b2 }) =
            (a.curve, b.curve)
        else {
            panic!("quadratic expected")
        };
        assert_relative_eq!(a0, b0, epsilon = 1e-12);
        assert_relative_eq!(a1, b1, epsilon = 1e-12);
        assert_relative_eq!(a2, b2, epsilon = 1e-12);
    }

    #[test]
    fn exact_exponential_recovered() {
        let truth = SigmaCurve::Exponential { alpha: 0.8, beta: -0.2 };
        let centers: Vec<f64> = (0..=8).map(|i| i as f64 * 1.25).collect();
        let bins = bins_on_curve(&truth, &centers, 30);
        let model = fit_exponential(&bins, &FitOptions::default()).unwrap();
        let SigmaCurve::Exponential { alpha, beta } = model.curve else {
            panic!("exponential expected")
        };
        assert_relative_eq!(alpha, 0.8, epsilon = 1e-6);
        assert_relative_eq!(beta, -0.2, epsilon = 1e-6);
    }

    #[test]
    fn exponential_single_bin_rejected() {
        let bins = vec![VarianceBin { center: 2.0, count: 20, sigma: 0.5 }];
        match fit_exponential(&bins, &FitOptions::default()) {
            Err(FitError::InsufficientSupport { needed: 2, got: 1 }) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn noisy_exponential_within_ten_percent() {
        use rand::SeedableRng;
        use rand_distr::Distribution;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
        let (alpha, beta) = (0.6, -0.15);
        let bins: Vec<VarianceBin> = (0..20)
            .map(|i| {
                let c = i as f64 * 0.5;
                let noise: f64 = normal.sample(&mut rng);
                VarianceBin {
                    center: c,
                    count: 50,
                    sigma: alpha * (beta * c).exp() * (1.0 + 0.05 * noise),
                }
            })
            .collect();
        let model = fit_exponential(&bins, &FitOptions::default()).unwrap();
        let SigmaCurve::Exponential { alpha: a, beta: b } = model.curve else {
            panic!("exponential expected")
        };
        assert!((a - alpha).abs() / alpha.abs() < 0.10, "alpha = {a}");
        assert!((b - beta).abs() / beta.abs() < 0.10, "beta = {b}");

        // Grid-search fallback verifier: the Gauss-Newton optimum must not
        // lose to any point of a refined grid around it.
        let loss = |al: f64, be: f64| -> f64 {
            bins.iter()
                .map(|bn| {
                    let r = al * (be * bn.center).exp() - bn.sigma;
                    bn.count as f64 * r * r
                })
                .sum()
        };
        let mut best = (f64::INFINITY, 0.0, 0.0);
        let (mut a_lo, mut a_hi, mut b_lo, mut b_hi) = (0.01, 2.0, -1.0, 0.5);
        for _ in 0..6 {
            for i in 0..=40 {
                for j in 0..=40 {
                    let al = a_lo + (a_hi - a_lo) * i as f64 / 40.0;
                    let be = b_lo + (b_hi - b_lo) * j as f64 / 40.0;
                    let l = loss(al, be);
                    if l < best.0 {
                        best = (l, al, be);
                    }
                }
            }
            let (da, db) = ((a_hi - a_lo) / 40.0, (b_hi - b_lo) / 40.0);
            (a_lo, a_hi) = (best.1 - 2.0 * da, best.1 + 2.0 * da);
            (b_lo, b_hi) = (best.2 - 2.0 * db, best.2 + 2.0 * db);
        }
        assert!(
            loss(a, b) <= best.0 * (1.0 + 1e-9) + 1e-15,
            "grid found a better optimum: {} < {}",
            best.0,
            loss(a, b)
        );
    }

    #[test]
    fn evaluate_quadratic_at_five() {
        let model = VarianceModel {
            curve: SigmaCurve::Quadratic { a0: 0.2, a1: 0.1, a2: -0.01 },
            domain: (0.0, 10.0),
            floor: 1e-6,
            r2_weighted: None,
            rmsd_weighted: 0.0,
            shape: Shape::Concave,
            condition: None,
        };
        assert_relative_eq!(model.sigma(5.0), 0.45, epsilon = 1e-12);
        let eval = model.sigma_detailed(5.0);
        assert!(!eval.clamped && !eval.outside_domain);
    }

    #[test]
    fn evaluate_clamps_negative_curve() {
        let model = VarianceModel {
            curve: SigmaCurve::Quadratic { a0: -1.0, a1: 0.0, a2: 0.0 },
            domain: (0.0, 10.0),
            floor: 0.005,
            r2_weighted: None,
            rmsd_weighted: 0.0,
            shape: Shape::Degenerate,
            condition: None,
        };
        let eval = model.sigma_detailed(3.0);
        assert_eq!(eval.value, 0.005);
        assert!(eval.clamped);
        assert!(model.sigma(3.0) > 0.0);
        assert!(model.sigma_detailed(42.0).outside_domain);
    }

    #[test]
    fn evaluate_exponential_at_zero() {
        let model = VarianceModel {
            curve: SigmaCurve::Exponential { alpha: 0.8, beta: -0.2 },
            domain: (0.0, 10.0),
            floor: 1e-6,
            r2_weighted: None,
            rmsd_weighted: 0.0,
            shape: Shape::Convex,
            condition: None,
        };
        assert_relative_eq!(model.sigma(0.0), 0.8, epsilon = 1e-15);
    }

    #[test]
    fn diagnostics_mean_model_scores_zero() {
        let bins = vec![
            VarianceBin { center: 1.0, count: 10, sigma: 0.2 },
            VarianceBin { center: 2.0, count: 10, sigma: 0.4 },
            VarianceBin { center: 3.0, count: 20, sigma: 0.3 },
        ];
        let mean = (10.0 * 0.2 + 10.0 * 0.4 + 20.0 * 0.3) / 40.0;
        let model = VarianceModel {
            curve: SigmaCurve::Quadratic { a0: mean, a1: 0.0, a2: 0.0 },
            domain: (1.0, 3.0),
            floor: 1e-6,
            r2_weighted: None,
            rmsd_weighted: 0.0,
            shape: Shape::Degenerate,
            condition: None,
        };
        let (r2, rmsd) = diagnostics(&bins, &model);
        assert_relative_eq!(r2.unwrap(), 0.0, epsilon = 1e-12);
        assert!(rmsd > 0.0);
    }

    #[test]
    fn diagnostics_constant_sigma_has_no_r2() {
        let bins = vec![
            VarianceBin { center: 1.0, count: 10, sigma: 0.3 },
            VarianceBin { center: 2.0, count: 10, sigma: 0.3 },
            VarianceBin { center: 3.0, count: 10, sigma: 0.3 },
        ];
        let model = fit_quadratic(&bins, &FitOptions::default()).unwrap();
        assert_eq!(model.r2_weighted, None);
        assert!(model.rmsd_weighted >= 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        /// Rescaling bins by k maps the quadratic fit covariantly:
        /// sigma'(k·c) = k·sigma(c).
        #[test]
        fn quadratic_fit_scale_equivariant(
            k in 0.1f64..10.0,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(4..12);
            let bins: Vec<VarianceBin> = (0..n)
                .map(|i| VarianceBin {
                    center: i as f64 + rng.random_range(0.0..0.5),
                    count: rng.random_range(5..50),
                    sigma: rng.random_range(0.05..0.8),
                })
                .collect();
            let scaled: Vec<VarianceBin> = bins
                .iter()
                .map(|b| VarianceBin { center: k * b.center, count: b.count, sigma: k * b.sigma })
                .collect();
            let opts = FitOptions { floor: 1e-9, domain: None };
            let base = fit_quadratic(&bins, &opts).unwrap();
            let mapped = fit_quadratic(&scaled, &opts).unwrap();
            for i in 0..=8 {
                let c = bins[0].center + (bins[n - 1].center - bins[0].center) * i as f64 / 8.0;
                let expect = k * base.curve.value(c);
                let got = mapped.curve.value(k * c);
                prop_assert!(
                    (got - expect).abs() <= 1e-9 * expect.abs().max(1.0),
                    "at c={c}: {got} vs {expect}"
                );
            }
            // r² is scaleless, RMSD scales by k.
            match (base.r2_weighted, mapped.r2_weighted) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-9),
                (a, b) => prop_assert_eq!(a, b),
            }
            prop_assert!(
                (mapped.rmsd_weighted - k * base.rmsd_weighted).abs()
                    <= 1e-9 * (1.0 + k * base.rmsd_weighted)
            );
        }

        /// After binning, every bin respects min_count (unless only one bin
        /// survives) and the error count is conserved.
        #[test]
        fn binning_conserves_and_fills(
            seed in any::<u64>(),
            min_count in 2usize..12,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(4..200);
            let errors: Vec<JudgingError> = (0..n)
                .map(|_| {
                    let level = rng.random_range(0i64..20);
                    err_at(Score::new(level, 2), micro(rng.random_range(-0.5..0.5)))
                })
                .collect();
            let bins = bin_errors(&errors, &BinningPolicy { min_count, centering: SdCentering::BinMean });
            let total: usize = bins.iter().map(|b| b.count).sum();
            if bins.len() > 1 {
                prop_assert!(bins.iter().all(|b| b.count >= min_count));
            }
            if !bins.is_empty() {
                prop_assert_eq!(total, errors.len());
            } else {
                prop_assert!(n == 1);
            }
        }
    }
}
