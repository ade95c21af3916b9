//! Judge accuracy scores against a fitted variance model.
//!
//! Each evaluation's error is scaled by the fitted variability at that
//! performance's quality, giving a dimensionless marking score; a judge's
//! overall marking score is the root mean square of those markings. An
//! evaluation is flagged when its error exceeds `multiplier · sigma_hat ·
//! M_j`, a per-judge threshold that adapts to how erratic the judge is.
//! A flag means "out of consensus with the panel median" — it is never,
//! by itself, evidence of cheating.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use crate::variance::{JudgingError, VarianceModel};

/// Reason attached to every outlier flag.
pub const FLAG_REASON: &str = "outlier-vs-median";

/// Default flag multiplier from the two-sigma outlier rule.
pub const DEFAULT_FLAG_MULTIPLIER: f64 = 2.0;

/// Default minimum evaluation count for a confident profile. Below this the
/// RMS estimator of the marking score is noisy (its relative standard error
/// under normal markings exceeds ~16%).
pub const DEFAULT_MIN_EVALUATIONS: usize = 20;

/// One scored evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationScore {
    pub competition_id: String,
    pub discipline_id: String,
    pub performance_id: String,
    pub judge_id: String,
    pub control_score: f64,
    /// Judging error in score units.
    pub error: f64,
    /// Fitted variability at this performance's quality; always positive.
    pub sigma_hat: f64,
    /// error / sigma_hat, dimensionless.
    pub marking: f64,
    pub flagged: bool,
}

/// Confidence tag for a judge profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Confidence {
    High,
    /// Fewer evaluations than the configured minimum; shown, not hidden.
    Low,
}

impl std::fmt::Display for Confidence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Confidence::High => f.write_str("high"),
            Confidence::Low => f.write_str("low"),
        }
    }
}

/// Per-judge aggregate over one scope (one discipline, or pooled).
#[derive(Debug, Clone, PartialEq)]
pub struct JudgeProfile {
    pub judge_id: String,
    pub disciplines: BTreeSet<String>,
    pub evaluation_count: usize,
    /// Root mean square of the judge's markings.
    pub overall_marking: f64,
    pub flagged_count: usize,
    pub confidence: Confidence,
    /// True when the overall marking is exactly zero, which makes the
    /// outlier threshold vacuous.
    pub degenerate: bool,
}

/// Scoring configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreOptions {
    pub flag_multiplier: f64,
    pub min_evaluations: usize,
    /// Restrict scoring to one competition; `None` scores longitudinally.
    pub competition: Option<String>,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions {
            flag_multiplier: DEFAULT_FLAG_MULTIPLIER,
            min_evaluations: DEFAULT_MIN_EVALUATIONS,
            competition: None,
        }
    }
}

/// Scored discipline: evaluations with flags plus ranked profiles.
#[derive(Debug, Clone)]
pub struct DisciplineScoring {
    pub evaluations: Vec<EvaluationScore>,
    /// Ranked: confident profiles first, then low-confidence ones.
    pub profiles: Vec<JudgeProfile>,
    pub warnings: Vec<String>,
}

impl DisciplineScoring {
    pub fn flag_rate(&self) -> f64 {
        if self.evaluations.is_empty() {
            return 0.0;
        }
        self.evaluations.iter().filter(|e| e.flagged).count() as f64
            / self.evaluations.len() as f64
    }

    pub fn mean_overall_marking(&self) -> f64 {
        if self.profiles.is_empty() {
            return 0.0;
        }
        self.profiles.iter().map(|p| p.overall_marking).sum::<f64>() / self.profiles.len() as f64
    }
}

/// Scale every judging error by the fitted variability at its quality.
pub fn marking_scores(errors: &[JudgingError], model: &VarianceModel) -> Vec<EvaluationScore> {
    errors
        .iter()
        .map(|e| {
            let control = e.control_score.to_f64();
            let sigma_hat = model.sigma(control);
            let error = e.error.to_f64();
            EvaluationScore {
                competition_id: e.competition_id.clone(),
                discipline_id: e.discipline_id.clone(),
                performance_id: e.performance_id.clone(),
                judge_id: e.judge_id.clone(),
                control_score: control,
                error,
                sigma_hat,
                marking: error / sigma_hat,
                flagged: false,
            }
        })
        .collect()
}

/// Root mean square of one judge's markings.
///
/// Zero for a judge who always matches the control score; one for a judge
/// who always sits exactly one fitted standard deviation away.
pub fn overall_marking(markings: &[f64]) -> f64 {
    assert!(
        !markings.is_empty(),
        "overall marking requires at least one evaluation"
    );
    (markings.iter().map(|m| m * m).sum::<f64>() / markings.len() as f64).sqrt()
}

/// Flag evaluations whose |marking| exceeds `multiplier · M_j`.
///
/// Equivalent, in error space, to |error| > multiplier · sigma_hat · M_j.
/// Returns the number flagged. A zero overall marking flags nothing; the
/// caller should surface the degenerate-profile warning.
pub fn flag_outliers(
    scores: &mut [EvaluationScore],
    overall_marking: f64,
    multiplier: f64,
) -> usize {
    let threshold = multiplier * overall_marking;
    let mut flagged = 0;
    for s in scores.iter_mut() {
        s.flagged = s.marking.abs() > threshold;
        flagged += s.flagged as usize;
    }
    flagged
}

/// Rank profiles: descending overall marking, ties by evaluation count
/// descending then judge id; low-confidence profiles trail in a separate
/// section with the same internal order.
pub fn rank_judges(mut profiles: Vec<JudgeProfile>) -> Vec<JudgeProfile> {
    profiles.sort_by(|a, b| {
        let section = |p: &JudgeProfile| matches!(p.confidence, Confidence::Low) as u8;
        section(a)
            .cmp(&section(b))
            .then(b.overall_marking.total_cmp(&a.overall_marking))
            .then(b.evaluation_count.cmp(&a.evaluation_count))
            .then(a.judge_id.cmp(&b.judge_id))
    });
    profiles
}

/// Score one discipline's errors end to end: markings, profiles, flags.
pub fn score_discipline(
    errors: &[JudgingError],
    model: &VarianceModel,
    opts: &ScoreOptions,
) -> DisciplineScoring {
    let scoped: Vec<&JudgingError> = errors
        .iter()
        .filter(|e| {
            opts.competition
                .as_deref()
                .map(|c| e.competition_id == c)
                .unwrap_or(true)
        })
        .collect();
    let scoped_owned: Vec<JudgingError> = scoped.into_iter().cloned().collect();
    let mut evaluations = marking_scores(&scoped_owned, model);

    let mut by_judge: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, s) in evaluations.iter().enumerate() {
        by_judge.entry(s.judge_id.clone()).or_default().push(i);
    }

    let mut profiles = Vec::new();
    let mut warnings = Vec::new();
    for (judge_id, indices) in by_judge {
        let markings: Vec<f64> = indices.iter().map(|&i| evaluations[i].marking).collect();
        let m_j = overall_marking(&markings);
        let threshold = opts.flag_multiplier * m_j;
        let mut flagged_count = 0;
        for &i in &indices {
            let flagged = evaluations[i].marking.abs() > threshold;
            evaluations[i].flagged = flagged;
            flagged_count += flagged as usize;
        }
        let degenerate = m_j == 0.0;
        if degenerate {
            warnings.push(format!(
                "judge {judge_id}: degenerate profile (overall marking 0), outlier rule is vacuous"
            ));
        }
        let disciplines: BTreeSet<String> = indices
            .iter()
            .map(|&i| evaluations[i].discipline_id.clone())
            .collect();
        profiles.push(JudgeProfile {
            judge_id,
            disciplines,
            evaluation_count: indices.len(),
            overall_marking: m_j,
            flagged_count,
            confidence: if indices.len() >= opts.min_evaluations {
                Confidence::High
            } else {
                Confidence::Low
            },
            degenerate,
        });
    }

    DisciplineScoring {
        evaluations,
        profiles: rank_judges(profiles),
        warnings,
    }
}

/// Pooled profiles over several disciplines' scored evaluations.
///
/// Markings are already normalized per discipline, so pooling them across
/// disciplines is legitimate. Only judges appearing in more than one
/// discipline get a pooled profile.
pub fn pooled_profiles(
    scorings: &[&DisciplineScoring],
    opts: &ScoreOptions,
) -> Vec<JudgeProfile> {
    let mut by_judge: BTreeMap<String, (Vec<f64>, BTreeSet<String>, usize)> = BTreeMap::new();
    for scoring in scorings {
        for e in &scoring.evaluations {
            let entry = by_judge.entry(e.judge_id.clone()).or_default();
            entry.0.push(e.marking);
            entry.1.insert(e.discipline_id.clone());
            entry.2 += e.flagged as usize;
        }
    }
    let profiles = by_judge
        .into_iter()
        .filter(|(_, (_, disciplines, _))| disciplines.len() > 1)
        .map(|(judge_id, (markings, disciplines, flagged_count))| {
            let m_j = overall_marking(&markings);
            JudgeProfile {
                judge_id,
                disciplines,
                evaluation_count: markings.len(),
                overall_marking: m_j,
                flagged_count,
                confidence: if markings.len() >= opts.min_evaluations {
                    Confidence::High
                } else {
                    Confidence::Low
                },
                degenerate: m_j == 0.0,
            }
        })
        .collect();
    rank_judges(profiles)
}

/// Judge report rows: `judge_id,discipline_id,evaluation_count,overall_marking,flagged_count,confidence`.
///
/// Pooled profiles are written with discipline id `pooled`.
pub fn write_judge_report<W: Write>(
    w: W,
    per_discipline: &[(&str, &DisciplineScoring)],
    pooled: &[JudgeProfile],
) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "judge_id",
        "discipline_id",
        "evaluation_count",
        "overall_marking",
        "flagged_count",
        "confidence",
    ])?;
    for (discipline, scoring) in per_discipline {
        for p in &scoring.profiles {
            out.write_record([
                p.judge_id.as_str(),
                discipline,
                &p.evaluation_count.to_string(),
                &p.overall_marking.to_string(),
                &p.flagged_count.to_string(),
                &p.confidence.to_string(),
            ])?;
        }
    }
    for p in pooled {
        out.write_record([
            p.judge_id.as_str(),
            "pooled",
            &p.evaluation_count.to_string(),
            &p.overall_marking.to_string(),
            &p.flagged_count.to_string(),
            &p.confidence.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Flag report rows, one per flagged evaluation.
pub fn write_flag_report<W: Write>(
    w: W,
    per_discipline: &[(&str, &DisciplineScoring)],
    flag_multiplier: f64,
) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "judge_id",
        "discipline_id",
        "performance_id",
        "error",
        "sigma_hat",
        "threshold",
        "reason",
    ])?;
    for (discipline, scoring) in per_discipline {
        let m_by_judge: BTreeMap<&str, f64> = scoring
            .profiles
            .iter()
            .map(|p| (p.judge_id.as_str(), p.overall_marking))
            .collect();
        let mut flagged: Vec<&EvaluationScore> =
            scoring.evaluations.iter().filter(|e| e.flagged).collect();
        flagged.sort_by(|a, b| {
            a.judge_id
                .cmp(&b.judge_id)
                .then(a.performance_id.cmp(&b.performance_id))
        });
        for e in flagged {
            let m_j = m_by_judge.get(e.judge_id.as_str()).copied().unwrap_or(0.0);
            let threshold = flag_multiplier * e.sigma_hat * m_j;
            out.write_record([
                e.judge_id.as_str(),
                discipline,
                e.performance_id.as_str(),
                &e.error.to_string(),
                &e.sigma_hat.to_string(),
                &threshold.to_string(),
                FLAG_REASON,
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}
