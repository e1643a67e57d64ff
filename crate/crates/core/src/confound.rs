//! Confounder diagnostics over cohort covariates and acquisition
//! metadata: per-group descriptives, standardized mean differences,
//! subject-grouped cross-validated separation tests and acquisition
//! timelines.
//!
//! All statistics follow a two-stage rule: per-spectrum covariate values
//! are first averaged per subject, then summarized per group, so a
//! subject's weight never depends on how often they were imaged.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::data::{Cohort, Group, MedianSpectrum, SubjectId, SubjectRecord};
use crate::eval::{summarize, EvalError, Summary};
use crate::lda::{fit_lda, LdaConfig, LdaError, PriorsMode};
use crate::rng::{self, stream};

#[derive(Debug, Error)]
pub enum ConfoundError {
    #[error("unknown variable {0:?}")]
    UnknownVariable(String),
    #[error("variable {0:?} has no recorded value in any group")]
    AllMissing(String),
    #[error("variable {0:?} is categorical, not numeric")]
    NotNumeric(String),
    #[error("variable {variable:?}: group {group} has {have} values, need {need}")]
    InsufficientData {
        variable: String,
        group: Group,
        have: usize,
        need: usize,
    },
    #[error("variable {0:?}: zero pooled sd with unequal means")]
    ZeroPooledSd(String),
    #[error("label {0:?} absent after filtering")]
    LabelAbsent(String),
    #[error("{have} subjects after filtering, need at least {need} for {need}-fold CV")]
    TooFewSubjects { have: usize, need: usize },
    #[error("fold count must be at least 2, got {0}")]
    BadFoldCount(usize),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Lda(#[from] LdaError),
}

/// Numeric per-group statistics over subject-level values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NumericStats {
    pub mean: f64,
    /// Sample standard deviation; absent for a single value.
    pub sd: Option<f64>,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// One group's row in a variable's descriptives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupDescriptives {
    pub group: Group,
    /// Number of subjects with a non-missing value.
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub numeric: Option<NumericStats>,
    /// Present for categorical variables: subject-level level counts.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levels: Option<BTreeMap<String, usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableDescriptives {
    pub variable: String,
    pub groups: Vec<GroupDescriptives>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmdRow {
    pub variable: String,
    pub group_a: Group,
    pub group_b: Group,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimelineEvent {
    pub acquired_at: DateTime<Utc>,
    pub subject_id: SubjectId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupTimeline {
    pub group: Group,
    pub events: Vec<TimelineEvent>,
    pub first: Option<DateTime<Utc>>,
    pub last: Option<DateTime<Utc>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupOverlap {
    pub group_a: Group,
    pub group_b: Group,
    /// Days the two groups' acquisition windows overlap; absent when a
    /// group has no timestamps.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub days: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub groups: Vec<GroupTimeline>,
    pub overlaps: Vec<GroupOverlap>,
    /// Spectra lacking a timestamp, as (subject, spectrum index).
    pub missing: Vec<(SubjectId, usize)>,
}

/// Subject-grouped cross-validated separation of a binary labeling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationResult {
    pub label: String,
    pub folds: usize,
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    pub n_subjects: usize,
    pub n_positive_subjects: usize,
    pub n_negative_subjects: usize,
    pub n_positive_spectra: usize,
    pub n_negative_spectra: usize,
}

/// Confounders the model cannot measure; carried in reports verbatim.
pub const NOT_MEASURED: [&str; 4] = [
    "hand_posture",
    "camera_perspective",
    "season_melanin",
    "room_illumination",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfounderReport {
    pub variables: Vec<VariableDescriptives>,
    pub smd: Vec<SmdRow>,
    pub timeline: Timeline,
    pub not_measured: Vec<String>,
}

enum SubjectValue {
    Numeric(f64),
    Category(String),
}

fn subject_value(subject: &SubjectRecord, variable: &str) -> Option<SubjectValue> {
    if let Some(v) = subject.subject_scalar(variable) {
        return Some(SubjectValue::Numeric(v));
    }
    subject
        .subject_category(variable)
        .map(|s| SubjectValue::Category(s.to_string()))
}

fn variable_exists(cohort: &Cohort, variable: &str) -> bool {
    cohort
        .subjects
        .iter()
        .any(|s| s.covariates.contains_key(variable))
}

/// Union of covariate names across the cohort, canonical names first.
pub fn available_variables(cohort: &Cohort) -> Vec<String> {
    cohort.covariate_names()
}

/// Per-group descriptives of one variable over subject-level values.
pub fn descriptives(
    cohort: &Cohort,
    variable: &str,
) -> Result<VariableDescriptives, ConfoundError> {
    if !variable_exists(cohort, variable) {
        return Err(ConfoundError::UnknownVariable(variable.to_string()));
    }
    let mut groups = Vec::with_capacity(3);
    let mut any = false;
    for group in Group::ALL {
        let mut numeric_values = Vec::new();
        let mut levels: BTreeMap<String, usize> = BTreeMap::new();
        for subject in cohort.subjects.iter().filter(|s| s.group == group) {
            match subject_value(subject, variable) {
                Some(SubjectValue::Numeric(v)) => numeric_values.push(v),
                Some(SubjectValue::Category(level)) => *levels.entry(level).or_insert(0) += 1,
                None => {}
            }
        }
        let n = numeric_values.len() + levels.values().sum::<usize>();
        any |= n > 0;
        let numeric = if numeric_values.is_empty() {
            None
        } else {
            let s: Summary = summarize(&numeric_values)?;
            let sd = (numeric_values.len() >= 2).then(|| {
                let mean = s.mean;
                let ss: f64 = numeric_values.iter().map(|v| (v - mean).powi(2)).sum();
                (ss / (numeric_values.len() - 1) as f64).sqrt()
            });
            Some(NumericStats {
                mean: s.mean,
                sd,
                min: s.min,
                q1: s.q1,
                median: s.median,
                q3: s.q3,
                max: s.max,
            })
        };
        groups.push(GroupDescriptives {
            group,
            n,
            numeric,
            levels: (!levels.is_empty()).then_some(levels),
        });
    }
    if !any {
        return Err(ConfoundError::AllMissing(variable.to_string()));
    }
    Ok(VariableDescriptives {
        variable: variable.to_string(),
        groups,
    })
}

fn group_numeric_values(
    cohort: &Cohort,
    variable: &str,
    group: Group,
) -> Result<Vec<f64>, ConfoundError> {
    let mut values = Vec::new();
    for subject in cohort.subjects.iter().filter(|s| s.group == group) {
        match subject_value(subject, variable) {
            Some(SubjectValue::Numeric(v)) => values.push(v),
            Some(SubjectValue::Category(_)) => {
                return Err(ConfoundError::NotNumeric(variable.to_string()))
            }
            None => {}
        }
    }
    Ok(values)
}

fn sample_sd(values: &[f64], mean: f64) -> f64 {
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// `(mean_a - mean_b) / sqrt((sd_a^2 + sd_b^2) / 2)` over subject-level
/// values; zero when both groups are constant and equal.
pub fn standardized_mean_difference(
    cohort: &Cohort,
    variable: &str,
    group_a: Group,
    group_b: Group,
) -> Result<f64, ConfoundError> {
    if !variable_exists(cohort, variable) {
        return Err(ConfoundError::UnknownVariable(variable.to_string()));
    }
    let a = group_numeric_values(cohort, variable, group_a)?;
    let b = group_numeric_values(cohort, variable, group_b)?;
    for (group, values) in [(group_a, &a), (group_b, &b)] {
        if values.len() < 2 {
            return Err(ConfoundError::InsufficientData {
                variable: variable.to_string(),
                group,
                have: values.len(),
                need: 2,
            });
        }
    }
    let mean_a = a.iter().sum::<f64>() / a.len() as f64;
    let mean_b = b.iter().sum::<f64>() / b.len() as f64;
    let sd_a = sample_sd(&a, mean_a);
    let sd_b = sample_sd(&b, mean_b);
    let pooled = ((sd_a * sd_a + sd_b * sd_b) / 2.0).sqrt();
    if pooled == 0.0 {
        if mean_a == mean_b {
            return Ok(0.0);
        }
        return Err(ConfoundError::ZeroPooledSd(variable.to_string()));
    }
    Ok((mean_a - mean_b) / pooled)
}

/// Deterministic fold assignment: filtered subjects are shuffled by the
/// seed and dealt round-robin into `folds` folds.
pub fn assign_folds(subject_indices: &[usize], folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut shuffled: Vec<usize> = subject_indices.to_vec();
    let mut rng = rng::substream_rng(rng::substream_seed(seed, stream::FOLD), 0);
    use rand::seq::SliceRandom;
    shuffled.shuffle(&mut rng);
    let mut out = vec![Vec::new(); folds];
    for (i, subject) in shuffled.into_iter().enumerate() {
        out[i % folds].push(subject);
    }
    out
}

/// Subject-grouped k-fold CV accuracy of an LDA fitted on the binary
/// labeling `label_fn`. Subjects never straddle a fold boundary; fold
/// accuracy is the mean of per-subject mean correctness, as in the
/// evaluation harness.
pub fn separation_test<F, L>(
    cohort: &Cohort,
    subject_filter: F,
    label_fn: L,
    label_name: &str,
    folds: usize,
    gamma: f64,
    seed: u64,
) -> Result<SeparationResult, ConfoundError>
where
    F: Fn(&SubjectRecord) -> bool,
    L: Fn(&SubjectRecord, &MedianSpectrum) -> bool,
{
    if folds < 2 {
        return Err(ConfoundError::BadFoldCount(folds));
    }
    let picked: Vec<usize> = cohort
        .subjects
        .iter()
        .enumerate()
        .filter(|(_, s)| subject_filter(s))
        .map(|(i, _)| i)
        .collect();
    if picked.len() < folds {
        return Err(ConfoundError::TooFewSubjects {
            have: picked.len(),
            need: folds,
        });
    }
    let mut n_pos_subjects = 0usize;
    let mut n_neg_subjects = 0usize;
    let mut n_pos_spectra = 0usize;
    let mut n_neg_spectra = 0usize;
    for &si in &picked {
        let subject = &cohort.subjects[si];
        let mut has_pos = false;
        let mut has_neg = false;
        for spectrum in &subject.spectra {
            if label_fn(subject, spectrum) {
                has_pos = true;
                n_pos_spectra += 1;
            } else {
                has_neg = true;
                n_neg_spectra += 1;
            }
        }
        if has_pos {
            n_pos_subjects += 1;
        }
        if has_neg {
            n_neg_subjects += 1;
        }
    }
    if n_pos_spectra == 0 {
        return Err(ConfoundError::LabelAbsent("positive".into()));
    }
    if n_neg_spectra == 0 {
        return Err(ConfoundError::LabelAbsent("negative".into()));
    }

    let fold_members = assign_folds(&picked, folds, seed);
    let lda_cfg = LdaConfig {
        gamma,
        priors: PriorsMode::Empirical,
    };
    let mut fold_accuracies = Vec::with_capacity(folds);
    for held_out in 0..folds {
        let mut rows: Vec<&[f64]> = Vec::new();
        let mut labels: Vec<bool> = Vec::new();
        for (f, members) in fold_members.iter().enumerate() {
            if f == held_out {
                continue;
            }
            for &si in members {
                let subject = &cohort.subjects[si];
                for spectrum in &subject.spectra {
                    rows.push(&spectrum.values);
                    labels.push(label_fn(subject, spectrum));
                }
            }
        }
        if !labels.contains(&true) {
            return Err(ConfoundError::LabelAbsent("positive".into()));
        }
        if !labels.contains(&false) {
            return Err(ConfoundError::LabelAbsent("negative".into()));
        }
        let model = fit_lda(&rows, &labels, &lda_cfg)?;
        let mut subject_scores = Vec::new();
        for &si in &fold_members[held_out] {
            let subject = &cohort.subjects[si];
            if subject.spectra.is_empty() {
                continue;
            }
            let mut correct = 0.0f64;
            for spectrum in &subject.spectra {
                let predicted = model.classify(&spectrum.values)?.0;
                if predicted == label_fn(subject, spectrum) {
                    correct += 1.0;
                }
            }
            subject_scores.push(correct / subject.spectra.len() as f64);
        }
        if subject_scores.is_empty() {
            continue;
        }
        fold_accuracies.push(subject_scores.iter().sum::<f64>() / subject_scores.len() as f64);
    }
    let mean_accuracy = fold_accuracies.iter().sum::<f64>() / fold_accuracies.len() as f64;
    Ok(SeparationResult {
        label: label_name.to_string(),
        folds,
        fold_accuracies,
        mean_accuracy,
        n_subjects: picked.len(),
        n_positive_subjects: n_pos_subjects,
        n_negative_subjects: n_neg_subjects,
        n_positive_spectra: n_pos_spectra,
        n_negative_spectra: n_neg_spectra,
    })
}

/// Sorted per-group acquisition events with window overlaps.
pub fn acquisition_timeline(cohort: &Cohort) -> Timeline {
    let mut groups = Vec::with_capacity(3);
    let mut missing = Vec::new();
    for group in Group::ALL {
        let mut events = Vec::new();
        for subject in cohort.subjects.iter().filter(|s| s.group == group) {
            for (i, spectrum) in subject.spectra.iter().enumerate() {
                match spectrum.meta.acquired_at {
                    Some(acquired_at) => events.push(TimelineEvent {
                        acquired_at,
                        subject_id: subject.subject_id.clone(),
                    }),
                    None => missing.push((subject.subject_id.clone(), i)),
                }
            }
        }
        events.sort_by(|a, b| {
            a.acquired_at
                .cmp(&b.acquired_at)
                .then_with(|| a.subject_id.cmp(&b.subject_id))
        });
        let first = events.first().map(|e| e.acquired_at);
        let last = events.last().map(|e| e.acquired_at);
        groups.push(GroupTimeline {
            group,
            events,
            first,
            last,
        });
    }
    let mut overlaps = Vec::new();
    for i in 0..groups.len() {
        for j in (i + 1)..groups.len() {
            let days = match (
                groups[i].first,
                groups[i].last,
                groups[j].first,
                groups[j].last,
            ) {
                (Some(a0), Some(a1), Some(b0), Some(b1)) => {
                    let start = a0.max(b0);
                    let end = a1.min(b1);
                    let seconds = (end - start).num_seconds();
                    Some((seconds.max(0) as f64) / 86_400.0)
                }
                _ => None,
            };
            overlaps.push(GroupOverlap {
                group_a: groups[i].group,
                group_b: groups[j].group,
                days,
            });
        }
    }
    Timeline {
        groups,
        overlaps,
        missing,
    }
}

/// Builds the full report for the given variables.
pub fn confounder_report(
    cohort: &Cohort,
    variables: &[String],
) -> Result<ConfounderReport, ConfoundError> {
    let mut descriptive_rows = Vec::new();
    let mut smd_rows = Vec::new();
    for variable in variables {
        descriptive_rows.push(descriptives(cohort, variable)?);
        for (a, b) in [
            (Group::Healthy, Group::Pancreatic),
            (Group::Healthy, Group::Sepsis),
            (Group::Pancreatic, Group::Sepsis),
        ] {
            match standardized_mean_difference(cohort, variable, a, b) {
                Ok(v) => smd_rows.push(SmdRow {
                    variable: variable.clone(),
                    group_a: a,
                    group_b: b,
                    smd: Some(v),
                    note: None,
                }),
                Err(e) => smd_rows.push(SmdRow {
                    variable: variable.clone(),
                    group_a: a,
                    group_b: b,
                    smd: None,
                    note: Some(e.to_string()),
                }),
            }
        }
    }
    Ok(ConfounderReport {
        variables: descriptive_rows,
        smd: smd_rows,
        timeline: acquisition_timeline(cohort),
        not_measured: NOT_MEASURED.iter().map(|s| s.to_string()).collect(),
    })
}
