//! judgekit: ingest panel scores, fit judging-error variability models,
//! score judges and flag outlier evaluations.
//!
//! Exit codes: 0 success, 1 usage or schema failure, 2 fit failure,
//! 3 partial failure under --keep-going.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use judgekit::data::{ingest_all, Dataset, IngestionReport};
use judgekit::metrics::{pooled_profiles, score_discipline, write_flag_report, write_judge_report, DisciplineScoring, ScoreOptions};
use judgekit::model_doc::{parse_model_document, write_model_document};
use judgekit::pipeline::{curve_samples, fit_discipline, AnalysisOptions, DisciplineFit, PipelineError};
use judgekit::synthetic::{evaluate_scenario, generate, ScenarioSpec};
use judgekit::variance::{extract_errors, BinningPolicy, ModelKind, SdCentering, VarianceModel};

const EXIT_USAGE: u8 = 1;
const EXIT_FIT: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "judgekit",
    version,
    about = "Heteroscedastic judging-error models and judge accuracy scores"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit per-discipline variance models and emit plot-ready curves
    Fit(FitArgs),
    /// Score judges (judge report + flag report)
    Score(ScoreArgs),
    /// Write only the outlier flag report
    Flag(ScoreArgs),
    /// Generate a synthetic dataset and its ground-truth scorecard
    Simulate(SimulateArgs),
    /// Fit, score and flag in one pass
    Report(ScoreArgs),
}

#[derive(Args, Clone)]
struct FitArgs {
    /// Input delimited files (repeatable)
    #[arg(long = "input", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// Output directory (created if missing)
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Model family to fit
    #[arg(long, value_enum, default_value_t = KindArg::Quadratic)]
    model: KindArg,
    /// Minimum error count per bin before merging stops
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(2..))]
    min_count: u32,
    /// Bin standard deviation about zero instead of the bin mean
    #[arg(long)]
    sd_about_zero: bool,
    /// Keep fitting other disciplines when one fails
    #[arg(long)]
    keep_going: bool,
}

#[derive(Args, Clone)]
struct ScoreArgs {
    #[command(flatten)]
    fit: FitArgs,
    /// Directory with fitted model documents; fits inline when absent
    #[arg(long)]
    model_dir: Option<PathBuf>,
    /// Outlier threshold multiplier
    #[arg(long, default_value_t = 2.0)]
    flag_multiplier: f64,
    /// Evaluations needed for a confident judge profile
    #[arg(long, default_value_t = 20)]
    min_evaluations: usize,
    /// Restrict scoring to one competition id
    #[arg(long)]
    competition: Option<String>,
}

#[derive(Args, Clone)]
struct SimulateArgs {
    /// Scenario configuration file (TOML)
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory (created if missing)
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Override the scenario's seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Quadratic,
    Exponential,
}

impl From<KindArg> for ModelKind {
    fn from(k: KindArg) -> ModelKind {
        match k {
            KindArg::Quadratic => ModelKind::Quadratic,
            KindArg::Exponential => ModelKind::Exponential,
        }
    }
}

/// A failure with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn usage(error: anyhow::Error) -> Self {
        Failure { code: EXIT_USAGE, error }
    }

    fn fit(error: anyhow::Error) -> Self {
        Failure { code: EXIT_FIT, error }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error);
            ExitCode::from(failure.code)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Failure> {
    match cli.command {
        Command::Fit(args) => cmd_fit(&args),
        Command::Score(args) => cmd_score(&args, true, false),
        Command::Flag(args) => cmd_score(&args, false, true),
        Command::Report(args) => {
            let code = cmd_fit(&args.fit)?;
            let score_code = cmd_score(&args, true, false)?;
            Ok(if code == ExitCode::SUCCESS { score_code } else { code })
        }
        Command::Simulate(args) => cmd_simulate(&args),
    }
}

fn analysis_options(args: &FitArgs) -> AnalysisOptions {
    AnalysisOptions {
        kind: args.model.into(),
        binning: BinningPolicy {
            min_count: args.min_count as usize,
            centering: if args.sd_about_zero {
                SdCentering::Zero
            } else {
                SdCentering::BinMean
            },
        },
        floor_override: None,
    }
}

fn load_dataset(args: &FitArgs) -> Result<(Dataset, IngestionReport), Failure> {
    let mut sources: Vec<(String, Box<dyn Read>)> = Vec::new();
    for path in &args.inputs {
        let file = fs::File::open(path)
            .with_context(|| format!("cannot open {}", path.display()))
            .map_err(Failure::usage)?;
        sources.push((path.display().to_string(), Box::new(file)));
    }
    let (dataset, report) = ingest_all(sources)
        .context("ingestion failed")
        .map_err(Failure::usage)?;
    let report_path = args.out_dir.join("ingestion_report.txt");
    let mut buf = Vec::new();
    report.write_text(&mut buf).map_err(io_failure)?;
    write_atomic(&report_path, &buf)?;
    if report.rejected_rows() > 0 {
        eprintln!(
            "warning: {} of {} rows rejected; see {}",
            report.rejected_rows(),
            report.total_rows,
            report_path.display()
        );
    }
    Ok((dataset, report))
}

fn io_failure(e: impl Into<anyhow::Error>) -> Failure {
    Failure::usage(e.into())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .with_context(|| format!("cannot create {}", parent.display()))
                .map_err(Failure::usage)?;
        }
    }
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".tmp");
    let tmp = path.with_file_name(name);
    fs::write(&tmp, bytes)
        .with_context(|| format!("cannot write {}", tmp.display()))
        .map_err(Failure::usage)?;
    fs::rename(&tmp, path)
        .with_context(|| format!("cannot move {} into place", tmp.display()))
        .map_err(Failure::usage)?;
    Ok(())
}

/// Filesystem-safe, collision-free discipline file stem.
fn discipline_stems(dataset: &Dataset) -> BTreeMap<String, String> {
    let mut stems = BTreeMap::new();
    let mut used: BTreeMap<String, usize> = BTreeMap::new();
    for id in dataset.discipline_ids() {
        let base: String = id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
            .collect();
        let n = used.entry(base.clone()).or_insert(0);
        *n += 1;
        let stem = if *n == 1 { base } else { format!("{base}__{n}") };
        stems.insert(id.to_string(), stem);
    }
    stems
}

fn fit_failure_code(keep_going: bool, failures: usize, total: usize) -> Result<ExitCode, Failure> {
    if failures == 0 {
        Ok(ExitCode::SUCCESS)
    } else if keep_going && failures < total {
        Ok(ExitCode::from(EXIT_PARTIAL))
    } else {
        Ok(ExitCode::from(EXIT_FIT))
    }
}

fn cmd_fit(args: &FitArgs) -> Result<ExitCode, Failure> {
    let (dataset, _) = load_dataset(args)?;
    let opts = analysis_options(args);
    let stems = discipline_stems(&dataset);
    let mut failures = 0usize;
    let mut total = 0usize;
    for id in dataset.discipline_ids() {
        total += 1;
        match fit_discipline(&dataset, id, &opts) {
            Ok(fit) => {
                write_fit_outputs(&args.out_dir, &stems[id], &fit)?;
                print_fit_summary(&fit);
            }
            Err(err) => {
                failures += 1;
                eprintln!("error: discipline {id}: {err}");
                if !args.keep_going {
                    return Err(Failure::fit(anyhow!("fit failed for discipline {id}: {err}")));
                }
            }
        }
    }
    fit_failure_code(args.keep_going, failures, total)
}

fn write_fit_outputs(out_dir: &Path, stem: &str, fit: &DisciplineFit) -> Result<(), Failure> {
    let mut doc = Vec::new();
    write_model_document(&mut doc, &fit.discipline_id, &fit.model, &fit.bins)
        .map_err(io_failure)?;
    write_atomic(&out_dir.join(format!("{stem}.model.txt")), &doc)?;

    let mut curve = String::from("c,sigma\n");
    for (c, s) in curve_samples(&fit.model, 200) {
        curve.push_str(&format!("{c},{s}\n"));
    }
    write_atomic(&out_dir.join(format!("{stem}.curve.csv")), curve.as_bytes())?;
    Ok(())
}

fn print_fit_summary(fit: &DisciplineFit) {
    let r2 = fit
        .model
        .r2_weighted
        .map(|v| v.to_string())
        .unwrap_or_else(|| "NA".into());
    println!(
        "fit {}: kind={} shape={} r2={} rmsd={} bins={} errors={}",
        fit.discipline_id,
        fit.model.kind(),
        fit.model.shape,
        r2,
        fit.model.rmsd_weighted,
        fit.bins.len(),
        fit.n_errors
    );
}

fn load_models(
    dataset: &Dataset,
    model_dir: &Path,
    stems: &BTreeMap<String, String>,
) -> Result<BTreeMap<String, VarianceModel>, Failure> {
    let mut models = BTreeMap::new();
    for id in dataset.discipline_ids() {
        let path = model_dir.join(format!("{}.model.txt", stems[id]));
        let text = fs::read_to_string(&path)
            .with_context(|| format!("no model document for discipline {id} at {}", path.display()))
            .map_err(Failure::fit)?;
        let (doc_discipline, model, _bins) = parse_model_document(&text)
            .with_context(|| format!("bad model document {}", path.display()))
            .map_err(Failure::fit)?;
        if doc_discipline != id {
            return Err(Failure::fit(anyhow!(
                "model/discipline mismatch: {} declares `{doc_discipline}`, dataset needs `{id}`",
                path.display()
            )));
        }
        models.insert(id.to_string(), model);
    }
    Ok(models)
}

fn cmd_score(args: &ScoreArgs, judge_report: bool, flags_only: bool) -> Result<ExitCode, Failure> {
    let (dataset, _) = load_dataset(&args.fit)?;
    if args.flag_multiplier <= 0.0 || !args.flag_multiplier.is_finite() {
        return Err(Failure::usage(anyhow!("--flag-multiplier must be positive")));
    }
    let stems = discipline_stems(&dataset);
    let models = match &args.model_dir {
        Some(dir) => load_models(&dataset, dir, &stems)?,
        None => {
            let opts = analysis_options(&args.fit);
            let mut models = BTreeMap::new();
            for id in dataset.discipline_ids() {
                let fit = fit_discipline(&dataset, id, &opts).map_err(|e| match e {
                    PipelineError::Data(d) => Failure::usage(d.into()),
                    other => Failure::fit(other.into()),
                })?;
                models.insert(id.to_string(), fit.model);
            }
            models
        }
    };

    let score_opts = ScoreOptions {
        flag_multiplier: args.flag_multiplier,
        min_evaluations: args.min_evaluations,
        competition: args.competition.clone(),
    };
    let mut scorings: Vec<(String, DisciplineScoring)> = Vec::new();
    for (id, model) in &models {
        let errors = extract_errors(&dataset, id).map_err(|e| Failure::usage(e.into()))?;
        let scoring = score_discipline(&errors, model, &score_opts);
        for w in &scoring.warnings {
            eprintln!("warning: discipline {id}: {w}");
        }
        println!(
            "score {id}: judges={} mean_M={} flag_rate={}",
            scoring.profiles.len(),
            scoring.mean_overall_marking(),
            scoring.flag_rate()
        );
        scorings.push((id.clone(), scoring));
    }

    let borrowed: Vec<(&str, &DisciplineScoring)> = scorings
        .iter()
        .map(|(id, s)| (id.as_str(), s))
        .collect();
    if judge_report {
        let pooled = pooled_profiles(
            &borrowed.iter().map(|(_, s)| *s).collect::<Vec<_>>(),
            &score_opts,
        );
        let mut buf = Vec::new();
        write_judge_report(&mut buf, &borrowed, &pooled).map_err(io_failure)?;
        write_atomic(&args.fit.out_dir.join("judges.csv"), &buf)?;
    }
    if judge_report || flags_only {
        let mut buf = Vec::new();
        write_flag_report(&mut buf, &borrowed, args.flag_multiplier).map_err(io_failure)?;
        write_atomic(&args.fit.out_dir.join("flags.csv"), &buf)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<ExitCode, Failure> {
    let text = fs::read_to_string(&args.scenario)
        .with_context(|| format!("cannot read scenario {}", args.scenario.display()))
        .map_err(Failure::usage)?;
    let mut spec = ScenarioSpec::from_toml_str(&text)
        .context("invalid scenario")
        .map_err(Failure::usage)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let run = generate(&spec)
        .context("generation failed")
        .map_err(Failure::usage)?;

    let mut csv = Vec::new();
    run.dataset.write_csv(&mut csv).map_err(io_failure)?;
    write_atomic(&args.out_dir.join("dataset.csv"), &csv)?;

    let card = evaluate_scenario(&run, &spec)
        .context("scorecard evaluation failed")
        .map_err(Failure::fit)?;
    write_atomic(
        &args.out_dir.join("scorecard.txt"),
        card.to_string().as_bytes(),
    )?;
    println!(
        "simulate {}: performances={} marks={} clamped_fraction={}",
        spec.discipline,
        card.n_performances,
        card.n_marks,
        card.clamped_fraction
    );
    Ok(ExitCode::SUCCESS)
}
