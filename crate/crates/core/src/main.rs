//! Command-line entry point: synthetic cohort generation, median-spectrum
//! extraction, bootstrap evaluation and confounder reports.
//!
//! Exit codes: 0 success, 2 usage error, 3 data validation error,
//! 4 numerical failure.

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use hsiclass::confound::{
    self, ConfounderReport, ConfoundError, SeparationResult,
};
use hsiclass::data::{
    self, load_cohort, load_cube, load_mask, median_spectrum, save_cohort, Cohort, DataError,
    Group, MedianSpectrum, Site, SpectrumMeta, SubjectRecord, TissueIndexConfig,
};
use hsiclass::eval::{
    run_evaluation, Aggregation, ClassifierConfig, EvalError, EvalReport, LabelMode, SiteFilter,
    SplitPlan, TestCounts, TestTimepoints,
};
use hsiclass::lda::{LdaError, PriorsMode};
use hsiclass::synth::{
    generate_cohort, scenario, write_ground_truth, Scenario, ScenarioOverrides, SynthError,
};

const WORKERS_ENV: &str = "HSICLASS_WORKERS";

#[derive(Parser)]
#[command(
    name = "hsiclass",
    version,
    about = "Skin hyperspectral median-spectrum classification and confounder analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort from a scenario preset.
    Synth(SynthArgs),
    /// Extract median spectra (and band-ratio indices) from cubes.
    Extract(ExtractArgs),
    /// Run the bootstrap-split evaluation on a cohort manifest.
    Eval(EvalArgs),
    /// Confounder descriptives, balance and separation tests.
    Confound(ConfoundArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Scenario preset: separable | null | confounded | balanced_confounder
    #[arg(long)]
    scenario: String,
    /// Master seed; every output is a pure function of it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (manifest.csv, spectra/, wavelengths.txt, ...).
    #[arg(long)]
    out: PathBuf,
    /// Subjects per group as healthy,pancreatic,sepsis.
    #[arg(long)]
    subjects: Option<String>,
    /// Time points per subject as min,max.
    #[arg(long)]
    timepoints: Option<String>,
    /// Band noise standard deviation.
    #[arg(long)]
    noise: Option<f64>,
    /// Tilt slope of the software-update style effect.
    #[arg(long)]
    tilt: Option<f64>,
    /// Fraction of tilted subjects per group as h,p,s.
    #[arg(long)]
    tilt_fraction: Option<String>,
}

#[derive(Args)]
struct ExtractArgs {
    /// Listing CSV: cube,mask,subject_id,group,site,timepoint_index,
    /// acquired_at,software_version plus optional covariate columns.
    #[arg(long)]
    list: PathBuf,
    /// Root the cube/mask paths resolve against (default: the listing's
    /// directory).
    #[arg(long)]
    root: Option<PathBuf>,
    /// Output directory for spectra, manifest and indices.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Cohort manifest CSV.
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory (report.json, splits.csv, boxplot.csv).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    splits: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Test subjects per group as healthy,pancreatic,sepsis.
    #[arg(long, default_value = "5,5,5")]
    test_counts: String,
    /// hand | thigh | both
    #[arg(long, default_value = "both")]
    site: String,
    /// Test-time points: all | first
    #[arg(long, default_value = "all")]
    timepoints: String,
    /// Shrinkage intensity.
    #[arg(long, default_value_t = 1e-3)]
    gamma: f64,
    /// empirical | uniform
    #[arg(long, default_value = "empirical")]
    priors: String,
    /// binary | three-class
    #[arg(long, default_value = "binary")]
    labels: String,
    /// Patient aggregation: mean | majority
    #[arg(long, default_value = "mean")]
    aggregation: String,
    /// Worker threads (0 = library default); HSICLASS_WORKERS overrides
    /// the default.
    #[arg(long)]
    workers: Option<usize>,
    /// Include the per-split table in report.json.
    #[arg(long, default_value_t = false)]
    per_split: bool,
}

#[derive(Args)]
struct ConfoundArgs {
    /// Cohort manifest CSV.
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated variables, or "all".
    #[arg(long, default_value = "all")]
    variables: String,
    /// Run a separation test against this variable
    /// (software_version, acquired_at or a numeric covariate).
    #[arg(long)]
    separate: Option<String>,
    /// Cut value for --separate (version tag, RFC3339 timestamp, or
    /// numeric threshold).
    #[arg(long)]
    cut: Option<String>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 1e-3)]
    gamma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also emit directed SMD rows for this ordered group pair, e.g.
    /// "healthy,sepsis" (smd_directed.csv).
    #[arg(long)]
    smd_pair: Option<String>,
}

enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::UnknownScenario(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<LdaError> for CliError {
    fn from(e: LdaError) -> Self {
        match e {
            LdaError::NotPositiveDefinite { .. } | LdaError::NegativeGamma(_) => {
                CliError::Numeric(e.to_string())
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Lda(inner) => inner.into(),
            // classify by the underlying cause, keep the full message
            EvalError::AllSplitsFailed { ref first, .. } => {
                if matches!(
                    **first,
                    EvalError::Lda(LdaError::NotPositiveDefinite { .. })
                        | EvalError::Lda(LdaError::NegativeGamma(_))
                ) {
                    CliError::Numeric(e.to_string())
                } else {
                    CliError::Data(e.to_string())
                }
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<ConfoundError> for CliError {
    fn from(e: ConfoundError) -> Self {
        match e {
            ConfoundError::Lda(inner) => inner.into(),
            ConfoundError::Eval(inner) => inner.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("i/o error on {}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Extract(args) => cmd_extract(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Confound(args) => cmd_confound(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

fn parse_triple<T: FromStr>(text: &str, what: &str) -> Result<[T; 3], CliError> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 3 {
        return Err(CliError::Usage(format!(
            "{what} must be three comma-separated values, got {text:?}"
        )));
    }
    let mut out = Vec::with_capacity(3);
    for p in parts {
        out.push(p.trim().parse::<T>().map_err(|_| {
            CliError::Usage(format!("bad {what} component {p:?}"))
        })?);
    }
    out.try_into()
        .map_err(|_| CliError::Usage(format!("bad {what}")))
}

fn parse_pair<T: FromStr>(text: &str, what: &str) -> Result<(T, T), CliError> {
    let (a, b) = text
        .split_once(',')
        .ok_or_else(|| CliError::Usage(format!("{what} must be min,max, got {text:?}")))?;
    let a = a
        .trim()
        .parse::<T>()
        .map_err(|_| CliError::Usage(format!("bad {what} component {a:?}")))?;
    let b = b
        .trim()
        .parse::<T>()
        .map_err(|_| CliError::Usage(format!("bad {what} component {b:?}")))?;
    Ok((a, b))
}

fn usage<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, CliError> {
    r.map_err(|e| CliError::Usage(e.to_string()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Data(format!("json encoding failed: {e}")))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_error(path, e))
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    let which = Scenario::from_str(&args.scenario)?;
    let overrides = ScenarioOverrides {
        master_seed: Some(args.seed),
        counts: args
            .subjects
            .as_deref()
            .map(|s| parse_triple::<usize>(s, "--subjects"))
            .transpose()?,
        timepoints: args
            .timepoints
            .as_deref()
            .map(|s| parse_pair::<u32>(s, "--timepoints"))
            .transpose()?,
        noise_sd: args.noise,
        tilt_slope: args.tilt,
        tilt_fraction: args
            .tilt_fraction
            .as_deref()
            .map(|s| parse_triple::<f64>(s, "--tilt-fraction"))
            .transpose()?,
    };
    let config = scenario(which, &overrides);
    let generated = generate_cohort(&config)?;

    fs::create_dir_all(&args.out).map_err(|e| io_error(&args.out, e))?;
    let manifest = save_cohort(&generated.cohort, &args.out)?;
    write_ground_truth(&generated, &args.out.join("ground_truth.csv"))?;
    write_json(&args.out.join("config.json"), &config)?;
    if generated.truth.clamp_fraction() > 0.001 {
        eprintln!(
            "warning: {:.3}% of generated values clamped at zero",
            100.0 * generated.truth.clamp_fraction()
        );
    }
    println!(
        "wrote {} subjects, {} spectra to {}",
        generated.cohort.subjects.len(),
        generated.cohort.spectrum_count(),
        manifest.display()
    );
    Ok(())
}

struct ExtractRow {
    cube: PathBuf,
    mask: PathBuf,
    meta: SpectrumMeta,
    covariates: Vec<Option<data::CovariateValue>>,
}

fn cmd_extract(args: ExtractArgs) -> Result<(), CliError> {
    let root = args
        .root
        .clone()
        .unwrap_or_else(|| args.list.parent().unwrap_or(Path::new(".")).to_path_buf());
    let mut reader = csv::Reader::from_path(&args.list)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.list.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Data(format!("{}: {e}", args.list.display())))?
        .clone();
    const FIXED: [&str; 8] = [
        "cube",
        "mask",
        "subject_id",
        "group",
        "site",
        "timepoint_index",
        "acquired_at",
        "software_version",
    ];
    for (i, expected) in FIXED.iter().enumerate() {
        if headers.get(i) != Some(expected) {
            return Err(CliError::Data(format!(
                "{}: column {i} must be {expected:?}",
                args.list.display()
            )));
        }
    }
    let covariate_names: Vec<String> = headers.iter().skip(FIXED.len()).map(String::from).collect();

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record =
            record.map_err(|e| CliError::Data(format!("{}:{line}: {e}", args.list.display())))?;
        let field = |j: usize| record.get(j).unwrap_or("").trim().to_string();
        let acquired_at = {
            let cell = field(6);
            if cell.is_empty() {
                None
            } else {
                Some(
                    DateTime::parse_from_rfc3339(&cell)
                        .map(|t| t.with_timezone(&Utc))
                        .map_err(|_| {
                            CliError::Data(format!(
                                "{}:{line}: bad timestamp {cell:?}",
                                args.list.display()
                            ))
                        })?,
                )
            }
        };
        rows.push(ExtractRow {
            cube: root.join(field(0)),
            mask: root.join(field(1)),
            meta: SpectrumMeta {
                subject_id: data::SubjectId(field(2)),
                group: Group::from_str(&field(3))?,
                site: Site::from_str(&field(4))?,
                timepoint_index: field(5).parse().map_err(|_| {
                    CliError::Data(format!(
                        "{}:{line}: bad timepoint_index {:?}",
                        args.list.display(),
                        field(5)
                    ))
                })?,
                acquired_at,
                software_version: field(7),
            },
            covariates: (0..covariate_names.len())
                .map(|j| {
                    let cell = field(FIXED.len() + j);
                    if cell.is_empty() {
                        None
                    } else {
                        Some(match cell.parse::<f64>() {
                            Ok(v) => data::CovariateValue::Scalar(v),
                            Err(_) => data::CovariateValue::Category(cell),
                        })
                    }
                })
                .collect(),
        });
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no rows to extract",
            args.list.display()
        )));
    }

    // extract every spectrum, then assemble subjects in row order
    let mut grid: Option<data::WavelengthGrid> = None;
    let mut subjects: Vec<SubjectRecord> = Vec::new();
    let mut index_rows: Vec<(SpectrumMeta, data::TissueIndices)> = Vec::new();
    let mut indices_supported = true;
    for row in rows {
        if !row.mask.exists() {
            return Err(CliError::Data(format!(
                "mask file {} does not exist",
                row.mask.display()
            )));
        }
        let cube = load_cube(&row.cube)?;
        let mask = load_mask(&row.mask)?;
        let spectrum = median_spectrum(&cube, &mask, row.meta.clone())?;
        // band-ratio indices are a side product; grids too narrow for the
        // default windows just skip them
        match data::tissue_indices(&spectrum, cube.grid(), &TissueIndexConfig::default()) {
            Ok(indices) => index_rows.push((row.meta.clone(), indices)),
            Err(DataError::WindowOutsideGrid { .. }) => indices_supported = false,
            Err(other) => return Err(other.into()),
        }
        match &grid {
            None => grid = Some(cube.grid().clone()),
            Some(g) => {
                if g != cube.grid() {
                    return Err(CliError::Data(format!(
                        "{}: wavelength grid differs from previous cubes",
                        row.cube.display()
                    )));
                }
            }
        }
        let position = subjects
            .iter()
            .position(|s| s.subject_id == row.meta.subject_id);
        let subject = match position {
            Some(i) => {
                if subjects[i].group != row.meta.group {
                    return Err(CliError::Data(format!(
                        "subject {} listed with conflicting groups",
                        row.meta.subject_id
                    )));
                }
                &mut subjects[i]
            }
            None => {
                subjects.push(SubjectRecord {
                    subject_id: row.meta.subject_id.clone(),
                    group: row.meta.group,
                    covariates: covariate_names
                        .iter()
                        .map(|n| (n.clone(), Vec::new()))
                        .collect(),
                    spectra: Vec::new(),
                });
                subjects.last_mut().unwrap()
            }
        };
        subject.spectra.push(spectrum);
        for (name, value) in covariate_names.iter().zip(row.covariates) {
            subject.covariates.get_mut(name).unwrap().push(value);
        }
    }
    let cohort = Cohort::new(subjects, grid.expect("at least one row"))?;

    fs::create_dir_all(&args.out).map_err(|e| io_error(&args.out, e))?;
    let manifest = save_cohort(&cohort, &args.out)?;
    if indices_supported {
        let indices_path = args.out.join("indices.csv");
        let mut writer = csv::Writer::from_path(&indices_path)
            .map_err(|e| CliError::Data(format!("{}: {e}", indices_path.display())))?;
        writer
            .write_record([
                "subject_id",
                "site",
                "timepoint_index",
                "sto2_like",
                "npi_like",
                "thi_like",
                "twi_like",
            ])
            .map_err(|e| CliError::Data(e.to_string()))?;
        for (meta, idx) in index_rows {
            writer
                .write_record([
                    meta.subject_id.to_string(),
                    meta.site.to_string(),
                    meta.timepoint_index.to_string(),
                    idx.sto2_like.to_string(),
                    idx.npi_like.to_string(),
                    idx.thi_like.to_string(),
                    idx.twi_like.to_string(),
                ])
                .map_err(|e| CliError::Data(e.to_string()))?;
        }
        writer
            .flush()
            .map_err(|e| io_error(&indices_path, e))?;
    } else {
        eprintln!("note: grid does not cover the default index windows; indices.csv skipped");
    }
    println!(
        "extracted {} spectra into {}",
        cohort.spectrum_count(),
        manifest.display()
    );
    Ok(())
}

fn worker_count(flag: Option<usize>) -> usize {
    flag.or_else(|| {
        std::env::var(WORKERS_ENV)
            .ok()
            .and_then(|v| v.parse().ok())
    })
    .unwrap_or(0)
}

fn write_splits_csv(report: &EvalReport, path: &Path) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    writer
        .write_record([
            "split_index",
            "accuracy",
            "sensitivity",
            "specificity",
            "n_sepsis",
            "n_non_sepsis",
            "excluded",
        ])
        .map_err(|e| CliError::Data(e.to_string()))?;
    for s in &report.splits {
        writer
            .write_record([
                s.split_index.to_string(),
                s.accuracy.to_string(),
                s.sensitivity.to_string(),
                s.specificity.to_string(),
                s.n_sepsis.to_string(),
                s.n_non_sepsis.to_string(),
                s.excluded.join(";"),
            ])
            .map_err(|e| CliError::Data(e.to_string()))?;
    }
    writer.flush().map_err(|e| io_error(path, e))
}

fn write_boxplot_csv(report: &EvalReport, path: &Path) -> Result<(), CliError> {
    let setting = format!(
        "site={};timepoints={};labels={}",
        report.plan.site_filter, report.plan.test_timepoints, report.plan.classifier.label_mode
    );
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    writer
        .write_record([
            "metric",
            "setting",
            "n",
            "mean",
            "min",
            "q1",
            "median",
            "q3",
            "max",
            "whisker_low",
            "whisker_high",
        ])
        .map_err(|e| CliError::Data(e.to_string()))?;
    for (name, s) in [
        ("accuracy", report.summary.accuracy),
        ("sensitivity", report.summary.sensitivity),
        ("specificity", report.summary.specificity),
    ] {
        writer
            .write_record([
                name.to_string(),
                setting.clone(),
                s.n.to_string(),
                s.mean.to_string(),
                s.min.to_string(),
                s.q1.to_string(),
                s.median.to_string(),
                s.q3.to_string(),
                s.max.to_string(),
                s.whisker_low.to_string(),
                s.whisker_high.to_string(),
            ])
            .map_err(|e| CliError::Data(e.to_string()))?;
    }
    writer.flush().map_err(|e| io_error(path, e))
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let counts = parse_triple::<usize>(&args.test_counts, "--test-counts")?;
    let plan = SplitPlan {
        n_splits: args.splits,
        test_counts: TestCounts {
            healthy: counts[0],
            pancreatic: counts[1],
            sepsis: counts[2],
        },
        master_seed: args.seed,
        site_filter: usage(SiteFilter::from_str(&args.site))?,
        test_timepoints: usage(TestTimepoints::from_str(&args.timepoints))?,
        classifier: ClassifierConfig {
            gamma: args.gamma,
            priors: usage(PriorsMode::from_str(&args.priors))?,
            label_mode: usage(LabelMode::from_str(&args.labels))?,
            aggregation: usage(Aggregation::from_str(&args.aggregation))?,
        },
    };
    if args.splits == 0 {
        return Err(CliError::Usage("--splits must be at least 1".into()));
    }
    let cohort = load_cohort(&args.manifest, args.manifest.parent().unwrap_or(Path::new(".")))?;

    let workers = worker_count(args.workers);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Data(format!("thread pool: {e}")))?;
    let mut report = pool.install(|| run_evaluation(&cohort, &plan))?;

    fs::create_dir_all(&args.out).map_err(|e| io_error(&args.out, e))?;
    write_splits_csv(&report, &args.out.join("splits.csv"))?;
    write_boxplot_csv(&report, &args.out.join("boxplot.csv"))?;
    if !args.per_split {
        report.splits.clear();
    }
    write_json(&args.out.join("report.json"), &report)?;
    println!(
        "accuracy mean {:.4}, sensitivity mean {:.4}, specificity mean {:.4} over {} splits",
        report.summary.accuracy.mean,
        report.summary.sensitivity.mean,
        report.summary.specificity.mean,
        report.summary.accuracy.n
    );
    Ok(())
}

fn write_descriptives_csv(report: &ConfounderReport, dir: &Path) -> Result<(), CliError> {
    let path = dir.join("descriptives.csv");
    let mut writer = csv::Writer::from_path(&path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    writer
        .write_record([
            "variable", "group", "n", "mean", "sd", "min", "q1", "median", "q3", "max",
        ])
        .map_err(|e| CliError::Data(e.to_string()))?;
    let mut levels_rows: Vec<[String; 4]> = Vec::new();
    for variable in &report.variables {
        for row in &variable.groups {
            let stats = row.numeric.as_ref();
            let fmt = |f: Option<f64>| f.map(|v| v.to_string()).unwrap_or_default();
            writer
                .write_record([
                    variable.variable.clone(),
                    row.group.to_string(),
                    row.n.to_string(),
                    fmt(stats.map(|s| s.mean)),
                    fmt(stats.and_then(|s| s.sd)),
                    fmt(stats.map(|s| s.min)),
                    fmt(stats.map(|s| s.q1)),
                    fmt(stats.map(|s| s.median)),
                    fmt(stats.map(|s| s.q3)),
                    fmt(stats.map(|s| s.max)),
                ])
                .map_err(|e| CliError::Data(e.to_string()))?;
            if let Some(levels) = &row.levels {
                for (level, count) in levels {
                    levels_rows.push([
                        variable.variable.clone(),
                        row.group.to_string(),
                        level.clone(),
                        count.to_string(),
                    ]);
                }
            }
        }
    }
    writer.flush().map_err(|e| io_error(&path, e))?;

    if !levels_rows.is_empty() {
        let path = dir.join("levels.csv");
        let mut writer = csv::Writer::from_path(&path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        writer
            .write_record(["variable", "group", "level", "count"])
            .map_err(|e| CliError::Data(e.to_string()))?;
        for row in levels_rows {
            writer
                .write_record(&row)
                .map_err(|e| CliError::Data(e.to_string()))?;
        }
        writer.flush().map_err(|e| io_error(&path, e))?;
    }
    Ok(())
}

fn write_smd_csv(report: &ConfounderReport, dir: &Path) -> Result<(), CliError> {
    let path = dir.join("smd.csv");
    let mut writer = csv::Writer::from_path(&path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    writer
        .write_record(["variable", "group_a", "group_b", "smd", "note"])
        .map_err(|e| CliError::Data(e.to_string()))?;
    for row in &report.smd {
        writer
            .write_record([
                row.variable.clone(),
                row.group_a.to_string(),
                row.group_b.to_string(),
                row.smd.map(|v| v.to_string()).unwrap_or_default(),
                row.note.clone().unwrap_or_default(),
            ])
            .map_err(|e| CliError::Data(e.to_string()))?;
    }
    writer.flush().map_err(|e| io_error(&path, e))
}

fn write_timeline_csv(report: &ConfounderReport, dir: &Path) -> Result<(), CliError> {
    let path = dir.join("timeline.csv");
    let mut writer = csv::Writer::from_path(&path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    writer
        .write_record(["group", "subject_id", "acquired_at"])
        .map_err(|e| CliError::Data(e.to_string()))?;
    for group in &report.timeline.groups {
        for event in &group.events {
            writer
                .write_record([
                    group.group.to_string(),
                    event.subject_id.to_string(),
                    event
                        .acquired_at
                        .to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                ])
                .map_err(|e| CliError::Data(e.to_string()))?;
        }
    }
    writer.flush().map_err(|e| io_error(&path, e))
}

fn separation_for(
    cohort: &Cohort,
    variable: &str,
    cut: Option<&str>,
    folds: usize,
    gamma: f64,
    seed: u64,
) -> Result<SeparationResult, CliError> {
    match variable {
        "software_version" => {
            let tag = cut.unwrap_or("v2").to_string();
            let name = format!("software_version == {tag}");
            Ok(confound::separation_test(
                cohort,
                |_| true,
                |_, spectrum| spectrum.meta.software_version == tag,
                &name,
                folds,
                gamma,
                seed,
            )?)
        }
        "acquired_at" => {
            let cut = cut.ok_or_else(|| {
                CliError::Usage("--separate acquired_at needs --cut <RFC3339>".into())
            })?;
            let threshold = DateTime::parse_from_rfc3339(cut)
                .map_err(|_| CliError::Usage(format!("bad --cut timestamp {cut:?}")))?
                .with_timezone(&Utc);
            let name = format!("acquired_at >= {cut}");
            Ok(confound::separation_test(
                cohort,
                |_| true,
                move |_, spectrum: &MedianSpectrum| {
                    spectrum.meta.acquired_at.is_some_and(|t| t >= threshold)
                },
                &name,
                folds,
                gamma,
                seed,
            )?)
        }
        covariate => {
            let cut = cut.ok_or_else(|| {
                CliError::Usage(format!("--separate {covariate} needs --cut <number>"))
            })?;
            let threshold: f64 = cut
                .parse()
                .map_err(|_| CliError::Usage(format!("bad --cut number {cut:?}")))?;
            if !cohort
                .subjects
                .iter()
                .any(|s| s.covariates.contains_key(covariate))
            {
                return Err(ConfoundError::UnknownVariable(covariate.to_string()).into());
            }
            let name = format!("{covariate} >= {threshold}");
            let filter_var = covariate.to_string();
            let label_var = covariate.to_string();
            Ok(confound::separation_test(
                cohort,
                move |subject: &SubjectRecord| subject.subject_scalar(&filter_var).is_some(),
                move |subject: &SubjectRecord, _: &MedianSpectrum| {
                    subject
                        .subject_scalar(&label_var)
                        .is_some_and(|v| v >= threshold)
                },
                &name,
                folds,
                gamma,
                seed,
            )?)
        }
    }
}

fn cmd_confound(args: ConfoundArgs) -> Result<(), CliError> {
    let cohort = load_cohort(&args.manifest, args.manifest.parent().unwrap_or(Path::new(".")))?;
    let variables: Vec<String> = if args.variables == "all" {
        confound::available_variables(&cohort)
    } else {
        args.variables
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect()
    };
    let report = confound::confounder_report(&cohort, &variables)?;

    let separation = match &args.separate {
        Some(variable) => Some(separation_for(
            &cohort,
            variable,
            args.cut.as_deref(),
            args.folds,
            args.gamma,
            args.seed,
        )?),
        None => None,
    };

    type DirectedSmdRow = (String, Group, Group, Option<f64>, Option<String>);
    let directed: Option<Vec<DirectedSmdRow>> =
        match &args.smd_pair {
            Some(pair) => {
                let (a, b) = pair.split_once(',').ok_or_else(|| {
                    CliError::Usage(format!("--smd-pair must be groupA,groupB, got {pair:?}"))
                })?;
                let a = Group::from_str(a.trim()).map_err(|e| CliError::Usage(e.to_string()))?;
                let b = Group::from_str(b.trim()).map_err(|e| CliError::Usage(e.to_string()))?;
                let mut rows = Vec::new();
                for variable in &variables {
                    match confound::standardized_mean_difference(&cohort, variable, a, b) {
                        Ok(v) => rows.push((variable.clone(), a, b, Some(v), None)),
                        Err(e) => rows.push((variable.clone(), a, b, None, Some(e.to_string()))),
                    }
                }
                Some(rows)
            }
            None => None,
        };

    fs::create_dir_all(&args.out).map_err(|e| io_error(&args.out, e))?;
    write_json(&args.out.join("confounders.json"), &report)?;
    write_descriptives_csv(&report, &args.out)?;
    write_smd_csv(&report, &args.out)?;
    write_timeline_csv(&report, &args.out)?;
    if let Some(rows) = directed {
        let path = args.out.join("smd_directed.csv");
        let mut writer = csv::Writer::from_path(&path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        writer
            .write_record(["variable", "group_a", "group_b", "smd", "note"])
            .map_err(|e| CliError::Data(e.to_string()))?;
        for (variable, a, b, smd, note) in rows {
            writer
                .write_record([
                    variable,
                    a.to_string(),
                    b.to_string(),
                    smd.map(|v| v.to_string()).unwrap_or_default(),
                    note.unwrap_or_default(),
                ])
                .map_err(|e| CliError::Data(e.to_string()))?;
        }
        writer.flush().map_err(|e| io_error(&path, e))?;
    }
    if let Some(result) = &separation {
        write_json(&args.out.join("separation.json"), result)?;
        println!(
            "separation [{}]: mean cv accuracy {:.4} over {} folds",
            result.label, result.mean_accuracy, result.folds
        );
    }
    println!(
        "confounder report over {} variables written to {}",
        report.variables.len(),
        args.out.display()
    );
    Ok(())
}
