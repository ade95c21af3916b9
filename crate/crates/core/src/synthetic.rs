//! Seeded Monte Carlo generator of judged competitions with known ground
//! truth.
//!
//! Scenarios pin a true variability curve, a quality distribution, a panel
//! of judge archetypes and a seed; the generator emits a regular [`Dataset`]
//! plus the ground truth needed to audit the analysis pipeline: true
//! qualities, cheat-boosted evaluations and clamping bookkeeping.
//! Generation draws one independent RNG stream per performance, so results
//! do not depend on how work is partitioned.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use serde::Deserialize;
use thiserror::Error;

use crate::data::{build_dataset, DataError, Dataset, MarkRecord, Provenance, Scale, SourcedRecord};
use crate::metrics::{score_discipline, ScoreOptions};
use crate::score::Score;
use crate::variance::{
    bin_errors, extract_errors, fit_exponential, fit_quadratic, sigma_floor, BinningPolicy,
    FitError, FitOptions, JudgingError, ModelKind, Shape, SigmaCurve, VarianceModel,
};

/// Synthetic judge behavior.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchetypeKind {
    Honest,
    Erratic,
    Biased,
    Cheater,
}

impl fmt::Display for ArchetypeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArchetypeKind::Honest => f.write_str("honest"),
            ArchetypeKind::Erratic => f.write_str("erratic"),
            ArchetypeKind::Biased => f.write_str("biased"),
            ArchetypeKind::Cheater => f.write_str("cheater"),
        }
    }
}

/// Performance selector and boost for a cheating judge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheatPlan {
    /// Probability that a performance is cheat-selected, in (0, 1].
    pub fraction: f64,
    /// Score-unit boost applied to selected performances.
    pub boost: f64,
}

/// One synthetic judge.
#[derive(Debug, Clone, PartialEq)]
pub struct JudgeArchetype {
    pub id: String,
    pub kind: ArchetypeKind,
    pub noise_multiplier: f64,
    pub bias_offset: f64,
    pub cheat: Option<CheatPlan>,
}

impl JudgeArchetype {
    pub fn honest(id: impl Into<String>) -> Self {
        JudgeArchetype {
            id: id.into(),
            kind: ArchetypeKind::Honest,
            noise_multiplier: 1.0,
            bias_offset: 0.0,
            cheat: None,
        }
    }

    pub fn erratic(id: impl Into<String>, multiplier: f64) -> Self {
        JudgeArchetype {
            id: id.into(),
            kind: ArchetypeKind::Erratic,
            noise_multiplier: multiplier,
            bias_offset: 0.0,
            cheat: None,
        }
    }

    pub fn biased(id: impl Into<String>, offset: f64) -> Self {
        JudgeArchetype {
            id: id.into(),
            kind: ArchetypeKind::Biased,
            noise_multiplier: 1.0,
            bias_offset: offset,
            cheat: None,
        }
    }

    pub fn cheater(id: impl Into<String>, fraction: f64, boost: f64) -> Self {
        JudgeArchetype {
            id: id.into(),
            kind: ArchetypeKind::Cheater,
            noise_multiplier: 1.0,
            bias_offset: 0.0,
            cheat: Some(CheatPlan { fraction, boost }),
        }
    }

    fn validate(&self) -> Result<(), String> {
        if !self.noise_multiplier.is_finite() || self.noise_multiplier < 0.0 {
            return Err(format!("judge {}: noise multiplier must be >= 0", self.id));
        }
        if !self.bias_offset.is_finite() {
            return Err(format!("judge {}: bias offset must be finite", self.id));
        }
        match self.kind {
            ArchetypeKind::Honest => {
                if self.noise_multiplier != 1.0 || self.bias_offset != 0.0 || self.cheat.is_some()
                {
                    return Err(format!(
                        "judge {}: honest archetype requires multiplier 1, offset 0, no cheat plan",
                        self.id
                    ));
                }
            }
            ArchetypeKind::Cheater => {
                let Some(plan) = self.cheat else {
                    return Err(format!("judge {}: cheater needs a cheat plan", self.id));
                };
                if !(plan.fraction > 0.0 && plan.fraction <= 1.0) {
                    return Err(format!(
                        "judge {}: cheat fraction must be in (0, 1]",
                        self.id
                    ));
                }
                if plan.boost == 0.0 || !plan.boost.is_finite() {
                    return Err(format!("judge {}: cheat boost must be nonzero", self.id));
                }
            }
            ArchetypeKind::Erratic | ArchetypeKind::Biased => {
                if self.cheat.is_some() {
                    return Err(format!(
                        "judge {}: only the cheater archetype takes a cheat plan",
                        self.id
                    ));
                }
            }
        }
        Ok(())
    }
}

/// True performance-quality distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QualityDistribution {
    /// Full-range coverage, diving/trampoline-like.
    Uniform { lo: f64, hi: f64 },
    /// Right-skewed coverage, gymnastics-like: no low-end performances.
    Beta { alpha: f64, beta: f64, lo: f64, hi: f64 },
}

impl QualityDistribution {
    pub fn support(&self) -> (f64, f64) {
        match *self {
            QualityDistribution::Uniform { lo, hi } => (lo, hi),
            QualityDistribution::Beta { lo, hi, .. } => (lo, hi),
        }
    }
}

/// A fully pinned synthetic competition.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub discipline: String,
    pub competition: String,
    pub seed: u64,
    pub n_performances: u32,
    pub panel_size: usize,
    pub scale: Scale,
    pub true_sigma: SigmaCurve,
    pub quality: QualityDistribution,
    pub judges: Vec<JudgeArchetype>,
}

/// Scenario validation, parsing or generation failure.
#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("infeasible scenario: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Fit(#[from] FitError),
}

fn infeasible(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Infeasible(msg.into())
}

impl ScenarioSpec {
    /// Default panel when the scenario file lists no judges.
    pub fn honest_panel(panel_size: usize) -> Vec<JudgeArchetype> {
        (1..=panel_size)
            .map(|i| JudgeArchetype::honest(format!("J{i:02}")))
            .collect()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.discipline.is_empty() {
            return Err(infeasible("discipline id must be nonempty"));
        }
        if self.n_performances == 0 {
            return Err(infeasible("need at least one performance"));
        }
        if !(3..=9).contains(&self.panel_size) {
            return Err(infeasible("panel size must be between 3 and 9"));
        }
        if self.judges.len() != self.panel_size {
            return Err(infeasible(format!(
                "panel size {} but {} judges configured",
                self.panel_size,
                self.judges.len()
            )));
        }
        let mut ids = BTreeSet::new();
        for judge in &self.judges {
            judge.validate().map_err(infeasible)?;
            if !ids.insert(&judge.id) {
                return Err(infeasible(format!("duplicate judge id {}", judge.id)));
            }
        }
        let (lo, hi) = self.quality.support();
        if !(lo < hi) {
            return Err(infeasible("quality support must be a nonempty interval"));
        }
        if lo < self.scale.min_mark.to_f64() || hi > self.scale.max_mark.to_f64() {
            return Err(infeasible("quality support must lie within the scale"));
        }
        if let QualityDistribution::Beta { alpha, beta, .. } = self.quality {
            if !(alpha > 0.0 && beta > 0.0) {
                return Err(infeasible("beta shape parameters must be positive"));
            }
        }
        // Dense positivity check of the true curve over the support.
        for i in 0..=1000 {
            let c = lo + (hi - lo) * i as f64 / 1000.0;
            if !(self.true_sigma.value(c) > 0.0) {
                return Err(infeasible(format!(
                    "true sigma must be positive over the quality support (fails at c = {c})"
                )));
            }
        }
        Ok(())
    }

    /// Parse a scenario from its TOML configuration text.
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let raw: RawScenario = toml::from_str(text)?;
        let scale = Scale::new(
            raw.scale.min.to_score()?,
            raw.scale.max.to_score()?,
            raw.scale.step.to_score()?,
        )
        .map_err(|e| infeasible(format!("scale: {e}")))?;
        let true_sigma = match raw.true_sigma {
            RawCurve::Quadratic { a0, a1, a2 } => SigmaCurve::Quadratic { a0, a1, a2 },
            RawCurve::Exponential { alpha, beta } => SigmaCurve::Exponential { alpha, beta },
        };
        let quality = match raw.quality {
            RawQuality::Uniform { lo, hi } => QualityDistribution::Uniform { lo, hi },
            RawQuality::Beta { alpha, beta, lo, hi } => {
                QualityDistribution::Beta { alpha, beta, lo, hi }
            }
        };
        let panel_size = raw.panel_size as usize;
        let judges = if raw.judges.is_empty() {
            Self::honest_panel(panel_size)
        } else {
            raw.judges
                .into_iter()
                .enumerate()
                .map(|(i, j)| j.into_archetype(i))
                .collect::<Result<_, _>>()?
        };
        let spec = ScenarioSpec {
            discipline: raw.discipline,
            competition: raw.competition,
            seed: raw.seed,
            n_performances: raw.n_performances,
            panel_size,
            scale,
            true_sigma,
            quality,
            judges,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Root mean square of the panel's noise multipliers; scaling the true
    /// curve by this gives the effective pooled noise curve the bins see.
    pub fn effective_multiplier(&self) -> f64 {
        let ss: f64 = self
            .judges
            .iter()
            .map(|j| j.noise_multiplier * j.noise_multiplier)
            .sum();
        (ss / self.judges.len() as f64).sqrt()
    }

    /// True curve scaled by the panel's rms noise multiplier.
    pub fn effective_sigma(&self) -> SigmaCurve {
        let m = self.effective_multiplier();
        match self.true_sigma {
            SigmaCurve::Quadratic { a0, a1, a2 } => SigmaCurve::Quadratic {
                a0: m * a0,
                a1: m * a1,
                a2: m * a2,
            },
            SigmaCurve::Exponential { alpha, beta } => SigmaCurve::Exponential {
                alpha: m * alpha,
                beta,
            },
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    discipline: String,
    #[serde(default = "default_competition")]
    competition: String,
    seed: u64,
    n_performances: u32,
    panel_size: u32,
    scale: RawScale,
    true_sigma: RawCurve,
    quality: RawQuality,
    #[serde(default)]
    judges: Vec<RawJudge>,
}

fn default_competition() -> String {
    "SIM".to_string()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScale {
    min: TomlScore,
    max: TomlScore,
    step: TomlScore,
}

/// Scale bounds accept strings for exactness, and plain numbers for
/// convenience (converted via their shortest decimal representation).
#[derive(Deserialize)]
#[serde(untagged)]
enum TomlScore {
    Int(i64),
    Float(f64),
    Str(String),
}

impl TomlScore {
    fn to_score(&self) -> Result<Score, ScenarioError> {
        let parsed = match self {
            TomlScore::Int(v) => Ok(Score::from_int(*v)),
            TomlScore::Float(v) => Score::from_f64_lossy(*v),
            TomlScore::Str(s) => Score::parse_decimal(s),
        };
        parsed.map_err(|e| infeasible(format!("scale value: {e}")))
    }
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum RawCurve {
    Quadratic { a0: f64, a1: f64, a2: f64 },
    Exponential { alpha: f64, beta: f64 },
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum RawQuality {
    Uniform { lo: f64, hi: f64 },
    Beta { alpha: f64, beta: f64, lo: f64, hi: f64 },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawJudge {
    #[serde(default)]
    id: Option<String>,
    kind: String,
    #[serde(default)]
    noise_multiplier: Option<f64>,
    #[serde(default)]
    bias_offset: Option<f64>,
    #[serde(default)]
    cheat_fraction: Option<f64>,
    #[serde(default)]
    cheat_boost: Option<f64>,
}

impl RawJudge {
    fn into_archetype(self, index: usize) -> Result<JudgeArchetype, ScenarioError> {
        let id = self.id.unwrap_or_else(|| format!("J{:02}", index + 1));
        let kind = match self.kind.as_str() {
            "honest" => ArchetypeKind::Honest,
            "erratic" => ArchetypeKind::Erratic,
            "biased" => ArchetypeKind::Biased,
            "cheater" => ArchetypeKind::Cheater,
            other => return Err(infeasible(format!("unknown judge kind `{other}`"))),
        };
        let cheat = match (self.cheat_fraction, self.cheat_boost) {
            (None, None) => None,
            (Some(fraction), Some(boost)) => Some(CheatPlan { fraction, boost }),
            _ => {
                return Err(infeasible(format!(
                    "judge {id}: cheat_fraction and cheat_boost go together"
                )))
            }
        };
        Ok(JudgeArchetype {
            id,
            kind,
            noise_multiplier: self.noise_multiplier.unwrap_or(1.0),
            bias_offset: self.bias_offset.unwrap_or(0.0),
            cheat,
        })
    }
}

/// Generator output: a valid dataset plus ground truth for auditing.
#[derive(Debug, Clone)]
pub struct SyntheticRun {
    pub dataset: Dataset,
    /// performance id → true quality drawn for it.
    pub true_qualities: BTreeMap<String, f64>,
    /// (performance id, judge id) pairs that received a cheat boost.
    pub boosted: BTreeSet<(String, String)>,
    /// Draws that fell outside the scale and were clamped to a bound.
    pub clamped_marks: u64,
    pub total_marks: u64,
}

impl SyntheticRun {
    pub fn clamped_fraction(&self) -> f64 {
        if self.total_marks == 0 {
            return 0.0;
        }
        self.clamped_marks as f64 / self.total_marks as f64
    }
}

/// Generate a synthetic competition.
///
/// Deterministic in the seed: each performance consumes its own ChaCha
/// stream, so the output is independent of any work partitioning.
pub fn generate(spec: &ScenarioSpec) -> Result<SyntheticRun, ScenarioError> {
    spec.validate()?;
    let width = spec.n_performances.to_string().len();
    let standard_normal = rand_distr::Normal::new(0.0, 1.0).expect("unit normal");
    let beta_dist = match spec.quality {
        QualityDistribution::Beta { alpha, beta, .. } => Some(
            rand_distr::Beta::new(alpha, beta)
                .map_err(|e| infeasible(format!("beta distribution: {e}")))?,
        ),
        QualityDistribution::Uniform { .. } => None,
    };

    let mut records = Vec::with_capacity(spec.n_performances as usize * spec.panel_size);
    let mut true_qualities = BTreeMap::new();
    let mut boosted = BTreeSet::new();
    let mut clamped_marks = 0u64;
    let mut line = 1u64;

    for perf in 0..spec.n_performances {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(perf as u64);
        let performance_id = format!("P{:0width$}", perf + 1);
        let (lo, hi) = spec.quality.support();
        let q = match beta_dist {
            Some(dist) => lo + (hi - lo) * dist.sample(&mut rng),
            None => lo + (hi - lo) * rng.random::<f64>(),
        };
        let sigma_q = spec.true_sigma.value(q);
        true_qualities.insert(performance_id.clone(), q);

        for judge in &spec.judges {
            let mut raw = q + judge.bias_offset;
            if let Some(plan) = judge.cheat {
                let selected = rng.random::<f64>() < plan.fraction;
                if selected {
                    raw += plan.boost;
                    boosted.insert((performance_id.clone(), judge.id.clone()));
                }
            }
            if judge.noise_multiplier > 0.0 {
                let draw: f64 = standard_normal.sample(&mut rng);
                raw += judge.noise_multiplier * sigma_q * draw;
            }
            let (mark, clamped) = spec.scale.snap(raw);
            clamped_marks += clamped as u64;
            line += 1;
            records.push(SourcedRecord {
                line,
                record: MarkRecord {
                    competition_id: spec.competition.clone(),
                    discipline_id: spec.discipline.clone(),
                    performance_id: performance_id.clone(),
                    judge_id: judge.id.clone(),
                    mark,
                    scale: spec.scale,
                    judge_role: None,
                },
            });
        }
    }

    let total_marks = records.len() as u64;
    let built = build_dataset(
        records,
        Provenance {
            sources: vec![(format!("synthetic seed {}", spec.seed), total_marks)],
        },
    )?;
    debug_assert!(built.rejections.is_empty(), "generator emits valid panels");
    Ok(SyntheticRun {
        dataset: built.dataset,
        true_qualities,
        boosted,
        clamped_marks,
        total_marks,
    })
}

/// Recovery of the truth by one fitting route.
#[derive(Debug, Clone)]
pub struct RecoveryReport {
    /// Which control score drove the errors: "median" or "true-quality".
    pub control: &'static str,
    pub model: VarianceModel,
    /// Per-coefficient deviation from the effective truth: relative where
    /// the true coefficient is nonzero, absolute against a zero one.
    pub coefficient_errors: Vec<f64>,
    pub max_coefficient_error: f64,
    pub shape_matches_truth: bool,
    /// d(sigma)/dc at the low end of the fitted domain.
    pub low_end_slope: f64,
}

/// One judge's outcome in the scored synthetic discipline.
#[derive(Debug, Clone)]
pub struct JudgeOutcome {
    /// 1-based rank by overall marking (1 = most erratic).
    pub rank: usize,
    pub judge_id: String,
    pub kind: ArchetypeKind,
    pub overall_marking: f64,
    pub evaluation_count: usize,
    pub flagged_count: usize,
}

/// Flag quality against the cheat-selected evaluations.
#[derive(Debug, Clone, Copy)]
pub struct FlagAudit {
    pub boosted_total: usize,
    pub boosted_flagged: usize,
    pub flagged_total: usize,
    pub recall: f64,
    pub precision: f64,
}

/// Ground-truth audit of a generated dataset.
#[derive(Debug, Clone)]
pub struct Scorecard {
    pub discipline: String,
    pub n_performances: usize,
    pub n_marks: usize,
    pub clamped_fraction: f64,
    pub truth: SigmaCurve,
    pub effective_multiplier: f64,
    /// Pipeline route: errors against the panel median.
    pub pipeline: RecoveryReport,
    /// Oracle route: errors against the grid-snapped true quality.
    pub oracle: RecoveryReport,
    pub judges: Vec<JudgeOutcome>,
    pub flag_rate: f64,
    pub flags: Option<FlagAudit>,
}

fn coefficients(curve: &SigmaCurve) -> Vec<f64> {
    match *curve {
        SigmaCurve::Quadratic { a0, a1, a2 } => vec![a0, a1, a2],
        SigmaCurve::Exponential { alpha, beta } => vec![alpha, beta],
    }
}

fn recovery_report(
    control: &'static str,
    errors: &[JudgingError],
    spec: &ScenarioSpec,
    policy: &BinningPolicy,
) -> Result<RecoveryReport, ScenarioError> {
    let bins = bin_errors(errors, policy);
    let opts = FitOptions {
        floor: sigma_floor(spec.scale.step.to_f64()),
        domain: None,
    };
    let model = match spec.true_sigma.kind() {
        ModelKind::Quadratic => fit_quadratic(&bins, &opts)?,
        ModelKind::Exponential => fit_exponential(&bins, &opts)?,
    };
    let effective = spec.effective_sigma();
    let truth_coefs = coefficients(&effective);
    let fit_coefs = coefficients(&model.curve);
    let coefficient_errors: Vec<f64> = truth_coefs
        .iter()
        .zip(&fit_coefs)
        .map(|(&t, &f)| {
            if t.abs() > 1e-12 {
                (f - t).abs() / t.abs()
            } else {
                (f - t).abs()
            }
        })
        .collect();
    let max_coefficient_error = coefficient_errors.iter().copied().fold(0.0, f64::max);
    let expected_shape = if spec.effective_multiplier() == 0.0 {
        Shape::Degenerate
    } else {
        spec.true_sigma.classify()
    };
    Ok(RecoveryReport {
        control,
        shape_matches_truth: model.shape == expected_shape,
        low_end_slope: model.curve.slope(model.domain.0),
        coefficient_errors,
        max_coefficient_error,
        model,
    })
}

/// Errors against the grid-snapped true quality, for the oracle route.
pub fn oracle_errors(run: &SyntheticRun, spec: &ScenarioSpec) -> Vec<JudgingError> {
    let mut errors = Vec::new();
    if let Some(groups) = run.dataset.groups(&spec.discipline) {
        for group in groups {
            let q = run.true_qualities[&group.performance_id];
            let (control, _) = spec.scale.snap(q);
            for mark in &group.marks {
                errors.push(JudgingError {
                    competition_id: mark.competition_id.clone(),
                    discipline_id: mark.discipline_id.clone(),
                    performance_id: mark.performance_id.clone(),
                    judge_id: mark.judge_id.clone(),
                    control_score: control,
                    error: mark.mark - control,
                });
            }
        }
    }
    errors
}

/// Score a generated dataset against its own ground truth.
///
/// Fits the truth's curve family through both the median-control pipeline
/// route and the true-quality oracle route, scores and flags every judge,
/// and audits flags against the cheat-selected evaluations.
pub fn evaluate_scenario(
    run: &SyntheticRun,
    spec: &ScenarioSpec,
) -> Result<Scorecard, ScenarioError> {
    let policy = BinningPolicy::default();
    let pipeline_errors = extract_errors(&run.dataset, &spec.discipline)?;
    let pipeline = recovery_report("median", &pipeline_errors, spec, &policy)?;
    let oracle = recovery_report("true-quality", &oracle_errors(run, spec), spec, &policy)?;

    let scoring = score_discipline(&pipeline_errors, &pipeline.model, &ScoreOptions::default());
    let archetypes: BTreeMap<&str, ArchetypeKind> = spec
        .judges
        .iter()
        .map(|j| (j.id.as_str(), j.kind))
        .collect();
    let judges: Vec<JudgeOutcome> = scoring
        .profiles
        .iter()
        .enumerate()
        .map(|(i, p)| JudgeOutcome {
            rank: i + 1,
            judge_id: p.judge_id.clone(),
            kind: archetypes.get(p.judge_id.as_str()).copied().unwrap_or(ArchetypeKind::Honest),
            overall_marking: p.overall_marking,
            evaluation_count: p.evaluation_count,
            flagged_count: p.flagged_count,
        })
        .collect();

    let flagged_total = scoring.evaluations.iter().filter(|e| e.flagged).count();
    let flags = if spec.judges.iter().any(|j| j.cheat.is_some()) {
        let boosted_total = run.boosted.len();
        let boosted_flagged = scoring
            .evaluations
            .iter()
            .filter(|e| {
                e.flagged
                    && run
                        .boosted
                        .contains(&(e.performance_id.clone(), e.judge_id.clone()))
            })
            .count();
        Some(FlagAudit {
            boosted_total,
            boosted_flagged,
            flagged_total,
            recall: if boosted_total > 0 {
                boosted_flagged as f64 / boosted_total as f64
            } else {
                0.0
            },
            precision: if flagged_total > 0 {
                boosted_flagged as f64 / flagged_total as f64
            } else {
                0.0
            },
        })
    } else {
        None
    };

    Ok(Scorecard {
        discipline: spec.discipline.clone(),
        n_performances: run.true_qualities.len(),
        n_marks: run.total_marks as usize,
        clamped_fraction: run.clamped_fraction(),
        truth: spec.true_sigma,
        effective_multiplier: spec.effective_multiplier(),
        pipeline,
        oracle,
        judges,
        flag_rate: if scoring.evaluations.is_empty() {
            0.0
        } else {
            flagged_total as f64 / scoring.evaluations.len() as f64
        },
        flags,
    })
}

fn fmt_curve(curve: &SigmaCurve) -> String {
    match *curve {
        SigmaCurve::Quadratic { a0, a1, a2 } => format!("quadratic {a0} {a1} {a2}"),
        SigmaCurve::Exponential { alpha, beta } => format!("exponential {alpha} {beta}"),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "NA".to_string())
}

impl fmt::Display for RecoveryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "recovery {}", self.control)?;
        writeln!(f, "  fitted {}", fmt_curve(&self.model.curve))?;
        let errs: Vec<String> = self.coefficient_errors.iter().map(f64::to_string).collect();
        writeln!(f, "  coefficient_errors {}", errs.join(" "))?;
        writeln!(f, "  max_coefficient_error {}", self.max_coefficient_error)?;
        writeln!(
            f,
            "  shape {} matches_truth {}",
            self.model.shape, self.shape_matches_truth
        )?;
        writeln!(f, "  r2_weighted {}", fmt_opt(self.model.r2_weighted))?;
        writeln!(f, "  rmsd_weighted {}", self.model.rmsd_weighted)?;
        writeln!(f, "  low_end_slope {}", self.low_end_slope)?;
        write!(
            f,
            "  domain {} {}",
            self.model.domain.0, self.model.domain.1
        )
    }
}

impl fmt::Display for Scorecard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "judgekit-scorecard v1")?;
        writeln!(f, "discipline {}", self.discipline)?;
        writeln!(f, "performances {}", self.n_performances)?;
        writeln!(f, "marks {}", self.n_marks)?;
        writeln!(f, "clamped_fraction {}", self.clamped_fraction)?;
        writeln!(f, "truth {}", fmt_curve(&self.truth))?;
        writeln!(f, "effective_multiplier {}", self.effective_multiplier)?;
        writeln!(f, "{}", self.pipeline)?;
        writeln!(f, "{}", self.oracle)?;
        writeln!(f, "judges {}", self.judges.len())?;
        for j in &self.judges {
            writeln!(
                f,
                "  {} {} {} marking {} evaluations {} flagged {}",
                j.rank, j.judge_id, j.kind, j.overall_marking, j.evaluation_count, j.flagged_count
            )?;
        }
        writeln!(f, "flag_rate {}", self.flag_rate)?;
        match self.flags {
            Some(a) => writeln!(
                f,
                "cheat_audit boosted {} caught {} recall {} flagged_total {} precision {}",
                a.boosted_total, a.boosted_flagged, a.recall, a.flagged_total, a.precision
            ),
            None => writeln!(f, "cheat_audit none"),
        }
    }
}
