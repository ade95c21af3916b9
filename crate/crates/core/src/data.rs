//! Domain types, validation and ingestion of panel-scoring records.
//!
//! Input files are UTF-8 comma-delimited with the header
//! `competition_id,discipline_id,performance_id,judge_id,mark,scale_min,scale_max,scale_step[,judge_role]`.
//! Ingestion never silently drops data: every rejected row lands in the
//! [`IngestionReport`] with its line number and a reason, and
//! `accepted + rejected == total` always holds.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use thiserror::Error;

use crate::median::median_control_score;
use crate::score::Score;

/// Grid alignment tolerance for marks, in score units.
pub const GRID_TOLERANCE: f64 = 1e-9;

const REQUIRED_COLUMNS: [&str; 8] = [
    "competition_id",
    "discipline_id",
    "performance_id",
    "judge_id",
    "mark",
    "scale_min",
    "scale_max",
    "scale_step",
];
const ROLE_COLUMN: &str = "judge_role";

/// The closed finite marking range of a judging system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Scale {
    pub min_mark: Score,
    pub max_mark: Score,
    pub step: Score,
}

impl Scale {
    pub fn new(min_mark: Score, max_mark: Score, step: Score) -> Result<Self, ScaleError> {
        if min_mark >= max_mark {
            return Err(ScaleError::EmptyRange);
        }
        if step <= Score::ZERO {
            return Err(ScaleError::NonPositiveStep);
        }
        if (max_mark - min_mark).div_exact(step).is_none() {
            return Err(ScaleError::RangeNotMultipleOfStep);
        }
        Ok(Scale {
            min_mark,
            max_mark,
            step,
        })
    }

    /// Number of grid steps between `min_mark` and `max_mark`.
    pub fn step_count(&self) -> i64 {
        (self.max_mark - self.min_mark)
            .div_exact(self.step)
            .expect("validated on construction")
    }

    pub fn contains(&self, mark: Score) -> bool {
        self.min_mark <= mark && mark <= self.max_mark
    }

    pub fn on_grid(&self, mark: Score) -> bool {
        (mark - self.min_mark).is_multiple_of(self.step, GRID_TOLERANCE)
    }

    /// Snap an arbitrary real value to the nearest grid mark, clamping to
    /// the scale bounds. Returns the mark and whether clamping occurred.
    pub fn snap(&self, value: f64) -> (Score, bool) {
        let step = self.step.to_f64();
        let raw = ((value - self.min_mark.to_f64()) / step).round();
        let max_k = self.step_count();
        let k = (raw as i64).clamp(0, max_k);
        let clamped = raw < 0.0 || raw > max_k as f64;
        (self.min_mark + self.step * k, clamped)
    }
}

/// Invalid scale definition.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScaleError {
    #[error("scale min must be below max")]
    EmptyRange,
    #[error("scale step must be positive")]
    NonPositiveStep,
    #[error("scale range is not an integer multiple of the step")]
    RangeNotMultipleOfStep,
}

/// One judge's mark for one performance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkRecord {
    pub competition_id: String,
    pub discipline_id: String,
    pub performance_id: String,
    pub judge_id: String,
    pub mark: Score,
    pub scale: Scale,
    /// Accepted and preserved, unused by the core math.
    pub judge_role: Option<String>,
}

impl MarkRecord {
    fn validate(&self) -> Result<(), String> {
        if self.mark < self.scale.min_mark {
            return Err("mark below min_mark".into());
        }
        if self.mark > self.scale.max_mark {
            return Err("mark above max_mark".into());
        }
        if !self.scale.on_grid(self.mark) {
            return Err("mark off scale grid".into());
        }
        Ok(())
    }
}

/// A record together with the input line it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourcedRecord {
    /// 1-based line number in the source file (the header is line 1).
    pub line: u64,
    pub record: MarkRecord,
}

/// All marks of one performance within one discipline.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceGroup {
    pub performance_id: String,
    pub discipline_id: String,
    /// Sorted by judge id; at least two, one per judge, shared scale.
    pub marks: Vec<MarkRecord>,
    pub control_score: Score,
}

impl PerformanceGroup {
    pub fn scale(&self) -> Scale {
        self.marks[0].scale
    }

    pub fn panel_size(&self) -> usize {
        self.marks.len()
    }
}

/// Where a dataset came from.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Provenance {
    /// (source label, total rows seen in that source).
    pub sources: Vec<(String, u64)>,
}

/// Immutable panel-scoring dataset grouped by discipline and performance.
#[derive(Debug, Clone)]
pub struct Dataset {
    disciplines: BTreeMap<String, Vec<PerformanceGroup>>,
    provenance: Provenance,
    has_role_column: bool,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.disciplines == other.disciplines
    }
}

impl Dataset {
    pub fn discipline_ids(&self) -> impl Iterator<Item = &str> {
        self.disciplines.keys().map(String::as_str)
    }

    pub fn groups(&self, discipline: &str) -> Option<&[PerformanceGroup]> {
        self.disciplines.get(discipline).map(Vec::as_slice)
    }

    pub fn disciplines(&self) -> impl Iterator<Item = (&str, &[PerformanceGroup])> {
        self.disciplines
            .iter()
            .map(|(id, groups)| (id.as_str(), groups.as_slice()))
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn group_count(&self) -> usize {
        self.disciplines.values().map(Vec::len).sum()
    }

    pub fn mark_count(&self) -> usize {
        self.disciplines
            .values()
            .flatten()
            .map(PerformanceGroup::panel_size)
            .sum()
    }

    /// Largest scale step across a discipline's groups, as f64.
    pub fn max_step(&self, discipline: &str) -> Option<f64> {
        self.groups(discipline)?
            .iter()
            .map(|g| g.scale().step)
            .max()
            .map(Score::to_f64)
    }

    /// Serialize back to the delimited ingestion format.
    ///
    /// Disciplines, performances and judges are written in sorted order, so
    /// the output is deterministic and re-parsing yields an equal dataset.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = REQUIRED_COLUMNS.to_vec();
        if self.has_role_column {
            header.push(ROLE_COLUMN);
        }
        w.write_record(&header)?;
        for group in self.disciplines.values().flatten() {
            for m in &group.marks {
                let mut row = vec![
                    m.competition_id.clone(),
                    m.discipline_id.clone(),
                    m.performance_id.clone(),
                    m.judge_id.clone(),
                    m.mark.to_string(),
                    m.scale.min_mark.to_string(),
                    m.scale.max_mark.to_string(),
                    m.scale.step.to_string(),
                ];
                if self.has_role_column {
                    row.push(m.judge_role.clone().unwrap_or_default());
                }
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// One rejected input row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub line: u64,
    pub reason: String,
}

/// Row-level accounting for one ingestion run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestionReport {
    pub total_rows: u64,
    pub accepted_rows: u64,
    pub rejections: Vec<Rejection>,
}

impl IngestionReport {
    pub fn rejected_rows(&self) -> u64 {
        self.rejections.len() as u64
    }

    /// One line per rejected row: `<row_number>\t<reason>`.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in &self.rejections {
            writeln!(w, "{}\t{}", r.line, r.reason)?;
        }
        Ok(())
    }
}

/// Fatal ingestion or lookup failure.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed delimited input: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing required column `{0}`")]
    MissingColumn(&'static str),
    #[error("empty dataset: every group was rejected")]
    EmptyDataset,
    #[error("unknown discipline `{0}`")]
    UnknownDiscipline(String),
}

/// Result of parsing one delimited source.
#[derive(Debug, Clone)]
pub struct ParseOutcome {
    pub records: Vec<SourcedRecord>,
    pub rejections: Vec<Rejection>,
    pub total_rows: u64,
}

/// Parse delimited text into mark records plus a rejection list.
///
/// A missing required column is fatal; anything wrong with an individual
/// row (unparseable mark, scale violation, off-grid mark) rejects that row
/// only.
pub fn parse_records<R: Read>(reader: R) -> Result<ParseOutcome, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut index = BTreeMap::new();
    for (i, name) in headers.iter().enumerate() {
        index.insert(name.trim().to_string(), i);
    }
    let mut col = [0usize; 8];
    for (slot, name) in col.iter_mut().zip(REQUIRED_COLUMNS) {
        *slot = *index.get(name).ok_or(DataError::MissingColumn(name))?;
    }
    let role_col = index.get(ROLE_COLUMN).copied();

    let mut records = Vec::new();
    let mut rejections = Vec::new();
    let mut total_rows = 0u64;
    for row in rdr.records() {
        let row = row?;
        total_rows += 1;
        let line = row.position().map(|p| p.line()).unwrap_or(total_rows + 1);
        match parse_row(&row, &col, role_col) {
            Ok(record) => records.push(SourcedRecord { line, record }),
            Err(reason) => rejections.push(Rejection { line, reason }),
        }
    }
    Ok(ParseOutcome {
        records,
        rejections,
        total_rows,
    })
}

fn parse_row(
    row: &csv::StringRecord,
    col: &[usize; 8],
    role_col: Option<usize>,
) -> Result<MarkRecord, String> {
    let field = |i: usize| -> Result<&str, String> {
        row.get(col[i]).ok_or_else(|| "short row".to_string())
    };
    let score_field = |i: usize, label: &str| -> Result<Score, String> {
        Score::parse_decimal(field(i)?).map_err(|_| format!("unparseable {label}"))
    };
    let competition_id = field(0)?.to_string();
    let discipline_id = field(1)?.to_string();
    let performance_id = field(2)?.to_string();
    let judge_id = field(3)?.to_string();
    if discipline_id.is_empty() || performance_id.is_empty() || judge_id.is_empty() {
        return Err("empty identifier".into());
    }
    let mark = score_field(4, "mark")?;
    let scale_min = score_field(5, "scale_min")?;
    let scale_max = score_field(6, "scale_max")?;
    let scale_step = score_field(7, "scale_step")?;
    let scale = Scale::new(scale_min, scale_max, scale_step).map_err(|e| e.to_string())?;
    let judge_role = role_col
        .and_then(|i| row.get(i))
        .filter(|r| !r.is_empty())
        .map(str::to_string);
    let record = MarkRecord {
        competition_id,
        discipline_id,
        performance_id,
        judge_id,
        mark,
        scale,
        judge_role,
    };
    record.validate()?;
    Ok(record)
}

/// Outcome of grouping records into a dataset.
#[derive(Debug, Clone)]
pub struct BuildOutcome {
    pub dataset: Dataset,
    /// Rows belonging to rejected groups, one rejection per row.
    pub rejections: Vec<Rejection>,
}

/// Group records by (discipline, performance), validate panels and compute
/// control scores.
///
/// Groups with fewer than two marks, mixed scales, or duplicate judges are
/// rejected row by row. Order of the input records does not matter.
pub fn build_dataset(
    records: Vec<SourcedRecord>,
    provenance: Provenance,
) -> Result<BuildOutcome, DataError> {
    let has_role_column = records.iter().any(|r| r.record.judge_role.is_some());
    let mut groups: BTreeMap<(String, String), Vec<SourcedRecord>> = BTreeMap::new();
    for rec in records {
        groups
            .entry((
                rec.record.discipline_id.clone(),
                rec.record.performance_id.clone(),
            ))
            .or_default()
            .push(rec);
    }

    let mut disciplines: BTreeMap<String, Vec<PerformanceGroup>> = BTreeMap::new();
    let mut rejections = Vec::new();
    for ((discipline_id, performance_id), mut members) in groups {
        members.sort_by(|a, b| {
            a.record
                .judge_id
                .cmp(&b.record.judge_id)
                .then(a.line.cmp(&b.line))
        });
        if let Err(reason) = validate_group(&members) {
            rejections.extend(members.iter().map(|m| Rejection {
                line: m.line,
                reason: reason.clone(),
            }));
            continue;
        }
        let marks: Vec<MarkRecord> = members.into_iter().map(|m| m.record).collect();
        let values: Vec<Score> = marks.iter().map(|m| m.mark).collect();
        let control_score = median_control_score(&values);
        debug_assert!(
            values.iter().copied().min().unwrap() <= control_score
                && control_score <= values.iter().copied().max().unwrap()
        );
        disciplines.entry(discipline_id.clone()).or_default().push(
            PerformanceGroup {
                performance_id,
                discipline_id,
                marks,
                control_score,
            },
        );
    }
    rejections.sort_by_key(|r| r.line);
    if disciplines.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    Ok(BuildOutcome {
        dataset: Dataset {
            disciplines,
            provenance,
            has_role_column,
        },
        rejections,
    })
}

fn validate_group(members: &[SourcedRecord]) -> Result<(), String> {
    if members.len() < 2 {
        return Err("panel size < 2".into());
    }
    let scale = members[0].record.scale;
    if members.iter().any(|m| m.record.scale != scale) {
        return Err("mixed scales".into());
    }
    let mut judges = BTreeSet::new();
    for m in members {
        if !judges.insert(&m.record.judge_id) {
            return Err("duplicate judge".into());
        }
    }
    Ok(())
}

/// Parse one source and build a dataset, merging row accounting into a
/// single report.
pub fn ingest<R: Read>(reader: R, source: &str) -> Result<(Dataset, IngestionReport), DataError> {
    ingest_all(vec![(source.to_string(), Box::new(reader) as Box<dyn Read>)])
}

/// Ingest several delimited sources into one dataset.
pub fn ingest_all(
    sources: Vec<(String, Box<dyn Read + '_>)>,
) -> Result<(Dataset, IngestionReport), DataError> {
    let mut records = Vec::new();
    let mut rejections = Vec::new();
    let mut total_rows = 0u64;
    let mut provenance = Provenance::default();
    for (label, reader) in sources {
        let outcome = parse_records(reader)?;
        provenance.sources.push((label, outcome.total_rows));
        total_rows += outcome.total_rows;
        records.extend(outcome.records);
        rejections.extend(outcome.rejections);
    }
    let built = build_dataset(records, provenance)?;
    rejections.extend(built.rejections);
    rejections.sort_by_key(|r| r.line);
    let accepted_rows = total_rows - rejections.len() as u64;
    Ok((
        built.dataset,
        IngestionReport {
            total_rows,
            accepted_rows,
            rejections,
        },
    ))
}
