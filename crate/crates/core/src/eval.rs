//! Bootstrap-subsampling evaluation.
//!
//! Each split draws a fixed per-group number of test subjects uniformly
//! without replacement, fits an LDA classifier on every image of the
//! remaining subjects, classifies the test images and aggregates
//! correctness per patient before any metric is computed: a patient's
//! score is the mean correctness over their test images, accuracy is the
//! mean patient score, sensitivity the mean over sepsis patients and
//! specificity the mean over non-sepsis patients.
//!
//! Split `i` is a pure function of `(master_seed, i)`, so results are
//! identical for any number of worker threads and the same seed yields
//! the same split sequence under every site/timepoint setting.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::data::{Cohort, Group, MedianSpectrum, Site, SubjectId};
use crate::lda::{fit_lda, BinaryLabel, LdaConfig, LdaError, LdaModel, PriorsMode};
use crate::rng;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("group {group} has {have} subjects but the plan needs {need} in test")]
    GroupTooSmall {
        group: Group,
        have: usize,
        need: usize,
    },
    #[error("group {group} would keep no training subjects")]
    NoTrainingSubjects { group: Group },
    #[error("test count for group {group} must be at least 1")]
    ZeroTestCount { group: Group },
    #[error("class {label} absent from training after filtering")]
    ClassAbsentFromTraining { label: String },
    #[error("no test patient kept any image after filtering")]
    NoTestPatients,
    #[error("{metric} undefined: no contributing test patients")]
    MetricUndefined { metric: String },
    #[error("empty input")]
    EmptyInput,
    #[error("non-finite value in input")]
    NonFiniteInput,
    #[error("all {n} splits failed; first failure: {first}")]
    AllSplitsFailed { n: u64, first: Box<EvalError> },
    #[error(transparent)]
    Lda(#[from] LdaError),
}

/// Which sites contribute images.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SiteFilter {
    Hand,
    Thigh,
    Both,
}

impl SiteFilter {
    pub fn keeps(self, site: Site) -> bool {
        match self {
            SiteFilter::Both => true,
            SiteFilter::Hand => site == Site::Hand,
            SiteFilter::Thigh => site == Site::Thigh,
        }
    }
}

impl fmt::Display for SiteFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SiteFilter::Hand => "hand",
            SiteFilter::Thigh => "thigh",
            SiteFilter::Both => "both",
        })
    }
}

impl FromStr for SiteFilter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "hand" => Ok(SiteFilter::Hand),
            "thigh" => Ok(SiteFilter::Thigh),
            "both" => Ok(SiteFilter::Both),
            other => Err(format!("unknown site filter {other:?}")),
        }
    }
}

/// Which time points of a test patient are scored. Training always uses
/// all available time points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestTimepoints {
    All,
    First,
}

impl fmt::Display for TestTimepoints {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestTimepoints::All => "all",
            TestTimepoints::First => "first",
        })
    }
}

impl FromStr for TestTimepoints {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "all" => Ok(TestTimepoints::All),
            "first" => Ok(TestTimepoints::First),
            other => Err(format!("unknown timepoint filter {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    /// Sepsis versus rest.
    Binary,
    /// One class per cohort group.
    ThreeClass,
}

impl fmt::Display for LabelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelMode::Binary => "binary",
            LabelMode::ThreeClass => "three-class",
        })
    }
}

impl FromStr for LabelMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "binary" => Ok(LabelMode::Binary),
            "three-class" | "three_class" => Ok(LabelMode::ThreeClass),
            other => Err(format!("unknown label mode {other:?}")),
        }
    }
}

/// How a test patient's images combine into one score.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Mean correctness over the patient's images.
    Mean,
    /// 1 when the majority-vote prediction matches, else 0.
    Majority,
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregation::Mean => "mean",
            Aggregation::Majority => "majority",
        })
    }
}

impl FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mean" => Ok(Aggregation::Mean),
            "majority" => Ok(Aggregation::Majority),
            other => Err(format!("unknown aggregation {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCounts {
    pub healthy: usize,
    pub pancreatic: usize,
    pub sepsis: usize,
}

impl TestCounts {
    pub fn for_group(&self, group: Group) -> usize {
        match group {
            Group::Healthy => self.healthy,
            Group::Pancreatic => self.pancreatic,
            Group::Sepsis => self.sepsis,
        }
    }
}

impl Default for TestCounts {
    fn default() -> Self {
        TestCounts {
            healthy: 5,
            pancreatic: 5,
            sepsis: 5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub gamma: f64,
    pub priors: PriorsMode,
    pub label_mode: LabelMode,
    pub aggregation: Aggregation,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            gamma: 1e-3,
            priors: PriorsMode::Empirical,
            label_mode: LabelMode::Binary,
            aggregation: Aggregation::Mean,
        }
    }
}

/// Full description of an evaluation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub n_splits: u64,
    pub test_counts: TestCounts,
    pub master_seed: u64,
    pub site_filter: SiteFilter,
    pub test_timepoints: TestTimepoints,
    pub classifier: ClassifierConfig,
}

impl Default for SplitPlan {
    fn default() -> Self {
        SplitPlan {
            n_splits: 1000,
            test_counts: TestCounts::default(),
            master_seed: 0,
            site_filter: SiteFilter::Both,
            test_timepoints: TestTimepoints::All,
            classifier: ClassifierConfig::default(),
        }
    }
}

/// Subject indices of one train/test partition, each sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// One evaluated split with patient-level detail.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitResult {
    pub split_index: u64,
    pub patient_scores: Vec<PatientScore>,
    pub excluded: Vec<SubjectId>,
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub n_sepsis: usize,
    pub n_non_sepsis: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatientScore {
    pub subject_id: SubjectId,
    pub group: Group,
    pub score: f64,
    pub n_images: usize,
}

/// Compact per-split record kept in reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub split_index: u64,
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub n_sepsis: usize,
    pub n_non_sepsis: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excluded: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailedSplit {
    pub split_index: u64,
    pub reason: String,
}

/// Five-number summary with mean and clamped 1.5 IQR whiskers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummaries {
    pub accuracy: Summary,
    pub sensitivity: Summary,
    pub specificity: Summary,
}

/// Result of an evaluation run: plan echo, metric summaries, failures,
/// and the per-split table the summaries are recomputable from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub plan: SplitPlan,
    pub summary: MetricSummaries,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failed_splits: Vec<FailedSplit>,
    pub splits: Vec<SplitMetrics>,
}

/// Quantile by linear interpolation between order statistics.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p * (n - 1) as f64;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 < n {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[lo]
    }
}

/// Summarizes a nonempty list of finite values.
pub fn summarize(values: &[f64]) -> Result<Summary, EvalError> {
    if values.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(EvalError::NonFiniteInput);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let q1 = quantile(&sorted, 0.25);
    let median = quantile(&sorted, 0.5);
    let q3 = quantile(&sorted, 0.75);
    let iqr = q3 - q1;
    let min = sorted[0];
    let max = sorted[n - 1];
    Ok(Summary {
        n,
        mean,
        min,
        q1,
        median,
        q3,
        max,
        whisker_low: (q1 - 1.5 * iqr).max(min),
        whisker_high: (q3 + 1.5 * iqr).min(max),
    })
}

/// Checks the plan against the cohort before any split is drawn.
pub fn validate_plan(cohort: &Cohort, plan: &SplitPlan) -> Result<(), EvalError> {
    for group in Group::ALL {
        let need = plan.test_counts.for_group(group);
        if need == 0 {
            return Err(EvalError::ZeroTestCount { group });
        }
        let have = cohort.group_count(group);
        if have < need {
            return Err(EvalError::GroupTooSmall { group, have, need });
        }
        if have == need {
            return Err(EvalError::NoTrainingSubjects { group });
        }
    }
    Ok(())
}

/// Draws split `split_index`: per group, `test_counts` subjects sampled
/// uniformly without replacement; everyone else trains. Pure in
/// `(master_seed, split_index)`.
pub fn make_split(cohort: &Cohort, plan: &SplitPlan, split_index: u64) -> Result<Split, EvalError> {
    let mut rng = rng::substream_rng(
        rng::substream_seed(plan.master_seed, rng::stream::SPLIT),
        split_index,
    );
    let mut train = Vec::new();
    let mut test = Vec::new();
    for group in Group::ALL {
        let mut pool = cohort.group_indices(group);
        let need = plan.test_counts.for_group(group);
        if need == 0 {
            return Err(EvalError::ZeroTestCount { group });
        }
        if pool.len() < need {
            return Err(EvalError::GroupTooSmall {
                group,
                have: pool.len(),
                need,
            });
        }
        if pool.len() == need {
            return Err(EvalError::NoTrainingSubjects { group });
        }
        use rand::Rng;
        for i in 0..need {
            let j = rng.gen_range(i..pool.len());
            pool.swap(i, j);
        }
        test.extend_from_slice(&pool[..need]);
        train.extend_from_slice(&pool[need..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}

enum FittedClassifier {
    Binary(LdaModel<BinaryLabel>),
    Multi(LdaModel<Group>),
}

impl FittedClassifier {
    fn correct(&self, x: &[f64], truth: Group) -> Result<bool, LdaError> {
        Ok(match self {
            FittedClassifier::Binary(m) => m.classify(x)?.0 == BinaryLabel::from(truth),
            FittedClassifier::Multi(m) => m.classify(x)?.0 == truth,
        })
    }

    /// Predicted class index in the model's own label order.
    fn predict_index(&self, x: &[f64]) -> Result<usize, LdaError> {
        let scores = match self {
            FittedClassifier::Binary(m) => m.scores(x)?,
            FittedClassifier::Multi(m) => m.scores(x)?,
        };
        let mut best = 0usize;
        for k in 1..scores.len() {
            if scores[k] > scores[best] {
                best = k;
            }
        }
        Ok(best)
    }

    fn truth_index(&self, truth: Group) -> usize {
        match self {
            FittedClassifier::Binary(m) => m
                .labels()
                .iter()
                .position(|l| *l == BinaryLabel::from(truth))
                .expect("binary label present"),
            FittedClassifier::Multi(m) => m
                .labels()
                .iter()
                .position(|l| *l == truth)
                .expect("group label present"),
        }
    }

    fn n_classes(&self) -> usize {
        match self {
            FittedClassifier::Binary(m) => m.labels().len(),
            FittedClassifier::Multi(m) => m.labels().len(),
        }
    }
}

fn test_images(
    spectra: &[MedianSpectrum],
    site_filter: SiteFilter,
    timepoints: TestTimepoints,
) -> Vec<&MedianSpectrum> {
    let filtered: Vec<&MedianSpectrum> = spectra
        .iter()
        .filter(|s| site_filter.keeps(s.meta.site))
        .collect();
    match timepoints {
        TestTimepoints::All => filtered,
        TestTimepoints::First => {
            let first = filtered.iter().map(|s| s.meta.timepoint_index).min();
            match first {
                Some(t) => filtered
                    .into_iter()
                    .filter(|s| s.meta.timepoint_index == t)
                    .collect(),
                None => Vec::new(),
            }
        }
    }
}

/// Fits on the split's training images and scores its test patients.
pub fn evaluate_split(
    cohort: &Cohort,
    split: &Split,
    plan: &SplitPlan,
    split_index: u64,
) -> Result<SplitResult, EvalError> {
    let cfg = &plan.classifier;
    let lda_cfg = LdaConfig {
        gamma: cfg.gamma,
        priors: cfg.priors,
    };

    // training uses every available time point of the training subjects
    let mut rows: Vec<&[f64]> = Vec::new();
    let mut groups: Vec<Group> = Vec::new();
    for &si in &split.train {
        let subject = &cohort.subjects[si];
        for spectrum in &subject.spectra {
            if plan.site_filter.keeps(spectrum.meta.site) {
                rows.push(&spectrum.values);
                groups.push(subject.group);
            }
        }
    }
    let classifier = match cfg.label_mode {
        LabelMode::Binary => {
            let labels = crate::lda::relabel_binary(&groups);
            for needed in [BinaryLabel::Negative, BinaryLabel::Positive] {
                if !labels.contains(&needed) {
                    return Err(EvalError::ClassAbsentFromTraining {
                        label: needed.to_string(),
                    });
                }
            }
            FittedClassifier::Binary(fit_lda(&rows, &labels, &lda_cfg)?)
        }
        LabelMode::ThreeClass => {
            for needed in Group::ALL {
                if !groups.contains(&needed) {
                    return Err(EvalError::ClassAbsentFromTraining {
                        label: needed.to_string(),
                    });
                }
            }
            FittedClassifier::Multi(fit_lda(&rows, &groups, &lda_cfg)?)
        }
    };

    let mut patient_scores = Vec::new();
    let mut excluded = Vec::new();
    for &si in &split.test {
        let subject = &cohort.subjects[si];
        let images = test_images(&subject.spectra, plan.site_filter, plan.test_timepoints);
        if images.is_empty() {
            excluded.push(subject.subject_id.clone());
            continue;
        }
        let score = match cfg.aggregation {
            Aggregation::Mean => {
                let mut correct = 0.0f64;
                for image in &images {
                    if classifier.correct(&image.values, subject.group)? {
                        correct += 1.0;
                    }
                }
                correct / images.len() as f64
            }
            Aggregation::Majority => {
                let mut votes = vec![0usize; classifier.n_classes()];
                for image in &images {
                    votes[classifier.predict_index(&image.values)?] += 1;
                }
                let mut winner = 0usize;
                for k in 1..votes.len() {
                    if votes[k] > votes[winner] {
                        winner = k;
                    }
                }
                if winner == classifier.truth_index(subject.group) {
                    1.0
                } else {
                    0.0
                }
            }
        };
        patient_scores.push(PatientScore {
            subject_id: subject.subject_id.clone(),
            group: subject.group,
            score,
            n_images: images.len(),
        });
    }

    if patient_scores.is_empty() {
        return Err(EvalError::NoTestPatients);
    }
    let mut sepsis_sum = 0.0f64;
    let mut non_sum = 0.0f64;
    let mut n_sepsis = 0usize;
    let mut n_non = 0usize;
    for p in &patient_scores {
        if p.group == Group::Sepsis {
            sepsis_sum += p.score;
            n_sepsis += 1;
        } else {
            non_sum += p.score;
            n_non += 1;
        }
    }
    if n_sepsis == 0 {
        return Err(EvalError::MetricUndefined {
            metric: "sensitivity".into(),
        });
    }
    if n_non == 0 {
        return Err(EvalError::MetricUndefined {
            metric: "specificity".into(),
        });
    }
    Ok(SplitResult {
        split_index,
        accuracy: (sepsis_sum + non_sum) / (n_sepsis + n_non) as f64,
        sensitivity: sepsis_sum / n_sepsis as f64,
        specificity: non_sum / n_non as f64,
        n_sepsis,
        n_non_sepsis: n_non,
        patient_scores,
        excluded,
    })
}

/// Runs every split of the plan, in parallel over the current rayon
/// pool, and assembles the report. Bitwise deterministic in
/// `plan.master_seed` regardless of worker count.
pub fn run_evaluation(cohort: &Cohort, plan: &SplitPlan) -> Result<EvalReport, EvalError> {
    validate_plan(cohort, plan)?;
    let outcomes: Vec<Result<SplitResult, EvalError>> = (0..plan.n_splits)
        .into_par_iter()
        .map(|i| make_split(cohort, plan, i).and_then(|s| evaluate_split(cohort, &s, plan, i)))
        .collect();

    let mut splits = Vec::new();
    let mut failed = Vec::new();
    let mut first_error = None;
    for (i, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(r) => splits.push(SplitMetrics {
                split_index: r.split_index,
                accuracy: r.accuracy,
                sensitivity: r.sensitivity,
                specificity: r.specificity,
                n_sepsis: r.n_sepsis,
                n_non_sepsis: r.n_non_sepsis,
                excluded: r.excluded.iter().map(|s| s.to_string()).collect(),
            }),
            Err(e) => {
                failed.push(FailedSplit {
                    split_index: i as u64,
                    reason: e.to_string(),
                });
                if first_error.is_none() {
                    first_error = Some(e);
                }
            }
        }
    }
    if splits.is_empty() {
        return Err(EvalError::AllSplitsFailed {
            n: plan.n_splits,
            first: Box::new(first_error.expect("had failures")),
        });
    }
    let col = |f: fn(&SplitMetrics) -> f64| -> Vec<f64> { splits.iter().map(f).collect() };
    let summary = MetricSummaries {
        accuracy: summarize(&col(|s| s.accuracy))?,
        sensitivity: summarize(&col(|s| s.sensitivity))?,
        specificity: summarize(&col(|s| s.specificity))?,
    };
    Ok(EvalReport {
        plan: plan.clone(),
        summary,
        failed_splits: failed,
        splits,
    })
}
