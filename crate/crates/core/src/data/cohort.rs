//! Cohort manifests.
//!
//! A cohort is a CSV manifest with one row per spectrum. Fixed columns
//! come first (subject_id, group, site, timepoint_index, acquired_at,
//! software_version, spectrum_file), every further column is a covariate
//! with blank cells meaning missing. Spectrum files carry one ASCII
//! float per line. The manifest directory may hold a `wavelengths.txt`
//! sidecar (one nm per line); without it the default grid is assumed.

use chrono::{DateTime, NaiveDate, Utc};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{
    DataError, Group, MedianSpectrum, Site, SpectrumMeta, SubjectId, WavelengthGrid,
};

const FIXED_COLUMNS: [&str; 7] = [
    "subject_id",
    "group",
    "site",
    "timepoint_index",
    "acquired_at",
    "software_version",
    "spectrum_file",
];

/// Covariates written first and in this order when saving; anything else
/// follows alphabetically.
const CANONICAL_COVARIATES: [&str; 10] = [
    "age",
    "sex",
    "bmi",
    "map",
    "spo2",
    "hb",
    "bilirubin",
    "fluid_balance",
    "vis",
    "ventilation_ratio",
];

/// One covariate cell: numeric measurements or a category level.
#[derive(Clone, Debug, PartialEq)]
pub enum CovariateValue {
    Scalar(f64),
    Category(String),
}

impl CovariateValue {
    fn parse(cell: &str) -> Option<CovariateValue> {
        let cell = cell.trim();
        if cell.is_empty() {
            return None;
        }
        match cell.parse::<f64>() {
            Ok(v) => Some(CovariateValue::Scalar(v)),
            Err(_) => Some(CovariateValue::Category(cell.to_string())),
        }
    }

    fn render(&self) -> String {
        match self {
            CovariateValue::Scalar(v) => v.to_string(),
            CovariateValue::Category(s) => s.clone(),
        }
    }
}

/// A subject and everything measured on them.
///
/// Covariate columns are aligned with `spectra`: entry `i` of a column
/// belongs to spectrum `i`, so dynamic covariates may vary over time
/// while static ones simply repeat.
#[derive(Clone, Debug, PartialEq)]
pub struct SubjectRecord {
    pub subject_id: SubjectId,
    pub group: Group,
    pub covariates: BTreeMap<String, Vec<Option<CovariateValue>>>,
    pub spectra: Vec<MedianSpectrum>,
}

impl SubjectRecord {
    /// Subject-level numeric value: the mean over non-missing scalar
    /// entries across this subject's rows.
    pub fn subject_scalar(&self, name: &str) -> Option<f64> {
        let column = self.covariates.get(name)?;
        let mut sum = 0.0;
        let mut n = 0usize;
        for entry in column.iter().flatten() {
            if let CovariateValue::Scalar(v) = entry {
                sum += v;
                n += 1;
            }
        }
        (n > 0).then(|| sum / n as f64)
    }

    /// Subject-level category: the first non-missing category entry.
    pub fn subject_category(&self, name: &str) -> Option<&str> {
        let column = self.covariates.get(name)?;
        column.iter().flatten().find_map(|entry| match entry {
            CovariateValue::Category(s) => Some(s.as_str()),
            CovariateValue::Scalar(_) => None,
        })
    }

    /// True when any row carries a value for `name`.
    pub fn has_covariate(&self, name: &str) -> bool {
        self.covariates
            .get(name)
            .is_some_and(|col| col.iter().any(Option::is_some))
    }
}

/// Subjects plus the shared wavelength grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Cohort {
    pub subjects: Vec<SubjectRecord>,
    pub grid: WavelengthGrid,
}

impl Cohort {
    /// Validates subject uniqueness, metadata consistency, grid band
    /// counts and covariate column alignment.
    pub fn new(subjects: Vec<SubjectRecord>, grid: WavelengthGrid) -> Result<Self, DataError> {
        let mut seen = std::collections::BTreeSet::new();
        for subject in &subjects {
            if !seen.insert(subject.subject_id.clone()) {
                return Err(DataError::DuplicateSubject(subject.subject_id.to_string()));
            }
            for spectrum in &subject.spectra {
                if spectrum.meta.subject_id != subject.subject_id
                    || spectrum.meta.group != subject.group
                {
                    return Err(DataError::MetadataMismatch {
                        subject: subject.subject_id.to_string(),
                    });
                }
                if spectrum.values.len() != grid.bands() {
                    return Err(DataError::GridMismatch {
                        subject: subject.subject_id.to_string(),
                        expected: grid.bands(),
                        found: spectrum.values.len(),
                    });
                }
            }
            for (name, column) in &subject.covariates {
                if column.len() != subject.spectra.len() {
                    return Err(DataError::CovariateShape {
                        subject: subject.subject_id.to_string(),
                        name: name.clone(),
                        expected: subject.spectra.len(),
                        found: column.len(),
                    });
                }
            }
        }
        Ok(Cohort { subjects, grid })
    }

    /// Indices of subjects in `group`, in cohort order.
    pub fn group_indices(&self, group: Group) -> Vec<usize> {
        self.subjects
            .iter()
            .enumerate()
            .filter(|(_, s)| s.group == group)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn group_count(&self, group: Group) -> usize {
        self.subjects.iter().filter(|s| s.group == group).count()
    }

    pub fn spectrum_count(&self) -> usize {
        self.subjects.iter().map(|s| s.spectra.len()).sum()
    }

    /// Union of covariate names over all subjects, canonical names first.
    pub fn covariate_names(&self) -> Vec<String> {
        let mut present = std::collections::BTreeSet::new();
        for subject in &self.subjects {
            for name in subject.covariates.keys() {
                present.insert(name.clone());
            }
        }
        let mut names: Vec<String> = CANONICAL_COVARIATES
            .iter()
            .filter(|n| present.contains(**n))
            .map(|n| n.to_string())
            .collect();
        for name in present {
            if !CANONICAL_COVARIATES.contains(&name.as_str()) {
                names.push(name);
            }
        }
        names
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, reason: impl Into<String>) -> DataError {
    DataError::Parse {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

fn parse_timestamp(path: &Path, line: usize, cell: &str) -> Result<Option<DateTime<Utc>>, DataError> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    if let Ok(ts) = DateTime::parse_from_rfc3339(cell) {
        return Ok(Some(ts.with_timezone(&Utc)));
    }
    if let Ok(date) = NaiveDate::parse_from_str(cell, "%Y-%m-%d") {
        let ts = date.and_hms_opt(0, 0, 0).unwrap().and_utc();
        return Ok(Some(ts));
    }
    Err(parse_err(path, line, format!("bad timestamp {cell:?}")))
}

fn load_spectrum_values(path: &Path) -> Result<Vec<f64>, DataError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut values = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let v: f64 = raw
            .parse()
            .map_err(|_| parse_err(path, i + 1, format!("bad float {raw:?}")))?;
        values.push(v);
    }
    Ok(values)
}

fn load_grid(manifest: &Path) -> Result<WavelengthGrid, DataError> {
    let sidecar = manifest
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join("wavelengths.txt");
    if !sidecar.exists() {
        return Ok(WavelengthGrid::default());
    }
    let text = fs::read_to_string(&sidecar).map_err(io_err(&sidecar))?;
    let mut centers = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let v: f64 = raw
            .parse()
            .map_err(|_| parse_err(&sidecar, i + 1, format!("bad wavelength {raw:?}")))?;
        centers.push(v);
    }
    WavelengthGrid::new(centers)
}

/// Loads and validates a cohort manifest; spectrum files resolve
/// relative to `spectra_root`.
pub fn load_cohort(manifest: &Path, spectra_root: &Path) -> Result<Cohort, DataError> {
    let grid = load_grid(manifest)?;
    let mut reader = csv::ReaderBuilder::new()
        .flexible(false)
        .from_path(manifest)
        .map_err(|e| parse_err(manifest, 1, e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| parse_err(manifest, 1, e.to_string()))?
        .clone();
    if headers.len() < FIXED_COLUMNS.len() {
        return Err(parse_err(manifest, 1, "missing fixed columns"));
    }
    for (i, expected) in FIXED_COLUMNS.iter().enumerate() {
        if headers.get(i) != Some(expected) {
            return Err(parse_err(
                manifest,
                1,
                format!("column {i} must be {expected:?}, got {:?}", headers.get(i)),
            ));
        }
    }
    let covariate_names: Vec<String> = headers
        .iter()
        .skip(FIXED_COLUMNS.len())
        .map(|s| s.to_string())
        .collect();
    {
        let mut dedup = std::collections::BTreeSet::new();
        for name in &covariate_names {
            if !dedup.insert(name) {
                return Err(parse_err(manifest, 1, format!("duplicate column {name:?}")));
            }
        }
    }

    let mut subjects: Vec<SubjectRecord> = Vec::new();
    let mut by_id: BTreeMap<String, usize> = BTreeMap::new();
    for (row_index, record) in reader.records().enumerate() {
        let line = row_index + 2;
        let record = record.map_err(|e| parse_err(manifest, line, e.to_string()))?;
        let field = |i: usize| record.get(i).unwrap_or("").trim();

        let subject_id = SubjectId(field(0).to_string());
        if subject_id.0.is_empty() {
            return Err(parse_err(manifest, line, "empty subject_id"));
        }
        let group = Group::from_str(field(1))?;
        let site = Site::from_str(field(2))?;
        let timepoint_index: u32 = field(3)
            .parse()
            .map_err(|_| parse_err(manifest, line, format!("bad timepoint_index {:?}", field(3))))?;
        let acquired_at = parse_timestamp(manifest, line, field(4))?;
        let software_version = field(5).to_string();
        let spectrum_file = spectra_root.join(field(6));
        let values = load_spectrum_values(&spectrum_file)?;

        let spectrum = MedianSpectrum::new(
            values,
            SpectrumMeta {
                subject_id: subject_id.clone(),
                group,
                site,
                timepoint_index,
                acquired_at,
                software_version,
            },
        )?;

        let subject_index = match by_id.get(&subject_id.0) {
            Some(&i) => {
                if subjects[i].group != group {
                    return Err(DataError::GroupConflict {
                        subject: subject_id.to_string(),
                        first: subjects[i].group,
                        second: group,
                    });
                }
                i
            }
            None => {
                by_id.insert(subject_id.0.clone(), subjects.len());
                subjects.push(SubjectRecord {
                    subject_id: subject_id.clone(),
                    group,
                    covariates: covariate_names
                        .iter()
                        .map(|n| (n.clone(), Vec::new()))
                        .collect(),
                    spectra: Vec::new(),
                });
                subjects.len() - 1
            }
        };
        let subject = &mut subjects[subject_index];
        subject.spectra.push(spectrum);
        for (offset, name) in covariate_names.iter().enumerate() {
            let cell = field(FIXED_COLUMNS.len() + offset);
            subject
                .covariates
                .get_mut(name)
                .expect("column initialized above")
                .push(CovariateValue::parse(cell));
        }
    }

    Cohort::new(subjects, grid)
}

/// Writes `manifest.csv`, `wavelengths.txt` and per-spectrum files under
/// `dir/spectra/`. Returns the manifest path.
pub fn save_cohort(cohort: &Cohort, dir: &Path) -> Result<PathBuf, DataError> {
    let spectra_dir = dir.join("spectra");
    fs::create_dir_all(&spectra_dir).map_err(io_err(&spectra_dir))?;

    let wl_path = dir.join("wavelengths.txt");
    let mut wl = String::new();
    for c in cohort.grid.centers() {
        wl.push_str(&c.to_string());
        wl.push('\n');
    }
    fs::write(&wl_path, wl).map_err(io_err(&wl_path))?;

    let covariate_names = cohort.covariate_names();
    let manifest_path = dir.join("manifest.csv");
    let mut writer = csv::Writer::from_path(&manifest_path)
        .map_err(|e| parse_err(&manifest_path, 1, e.to_string()))?;
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(covariate_names.iter().cloned());
    writer
        .write_record(&header)
        .map_err(|e| parse_err(&manifest_path, 1, e.to_string()))?;

    for subject in &cohort.subjects {
        for (i, spectrum) in subject.spectra.iter().enumerate() {
            let file_name = format!("{}_{:03}.spec", subject.subject_id, i);
            let spec_path = spectra_dir.join(&file_name);
            let mut text = String::new();
            for v in &spectrum.values {
                text.push_str(&v.to_string());
                text.push('\n');
            }
            fs::write(&spec_path, text).map_err(io_err(&spec_path))?;

            let mut row: Vec<String> = vec![
                subject.subject_id.to_string(),
                subject.group.to_string(),
                spectrum.meta.site.to_string(),
                spectrum.meta.timepoint_index.to_string(),
                spectrum
                    .meta
                    .acquired_at
                    .map(|t| t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
                    .unwrap_or_default(),
                spectrum.meta.software_version.clone(),
                format!("spectra/{file_name}"),
            ];
            for name in &covariate_names {
                let cell = subject
                    .covariates
                    .get(name)
                    .and_then(|col| col.get(i))
                    .and_then(|v| v.as_ref())
                    .map(CovariateValue::render)
                    .unwrap_or_default();
                row.push(cell);
            }
            writer
                .write_record(&row)
                .map_err(|e| parse_err(&manifest_path, 1, e.to_string()))?;
        }
    }
    writer
        .flush()
        .map_err(|e| io_err(&manifest_path)(e))?;
    Ok(manifest_path)
}
