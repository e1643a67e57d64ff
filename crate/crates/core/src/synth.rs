//! Seeded synthetic-cohort generation.
//!
//! Spectra follow a Beer-Lambert-style forward model
//!
//! ```text
//! R(l) = b * exp(-sum_i c_i * g_i(l) - s * x(l)) * t(l) + eps
//! ```
//!
//! with Gaussian absorber bands `g_i`, per-image illumination factor
//! `b`, normalized wavelength `x(l) = (l - l_min) / (l_max - l_min)`,
//! scattering slope `s`, an optional multiplicative tilt
//! `t(l) = 1 + a * (l - l_mid) / (l_max - l_min)` injected by confounder
//! effects, and i.i.d. Gaussian band noise `eps` (clamped at zero, with
//! clamp counting). The absorber bands echo well-known chromophore
//! regions but carry no quantitative claim.
//!
//! Everything is a pure function of the config and its master seed.

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

use crate::data::{
    AnnotationMask, Cohort, CovariateValue, DataError, Group, HsiCube, MedianSpectrum, Site,
    SpectrumMeta, SubjectId, SubjectRecord, WavelengthGrid,
};
use crate::rng::{self, stream};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("config: {0}")]
    InvalidConfig(String),
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// One Gaussian absorber band.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChromophoreBand {
    pub center_nm: f64,
    pub width_nm: f64,
    pub strength: f64,
}

impl ChromophoreBand {
    /// Band shape at wavelength `nm`.
    pub fn shape(&self, nm: f64) -> f64 {
        let z = (nm - self.center_nm) / self.width_nm;
        self.strength * (-0.5 * z * z).exp()
    }
}

/// An absorber with per-group baseline concentration and subject-level
/// spread.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chromophore {
    pub name: String,
    pub band: ChromophoreBand,
    /// Baseline concentration per group (healthy, pancreatic, sepsis).
    pub baseline: [f64; 3],
    /// Subject-to-subject concentration standard deviation.
    pub subject_sd: f64,
}

/// Spectral action of an injected confounder effect.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralAction {
    /// Multiplicative linear tilt with the given slope.
    Tilt { slope: f64 },
    /// Additive delta on one chromophore concentration.
    ConcentrationDelta { chromophore: usize, delta: f64 },
}

/// A confounder assigned at the subject level: within each group, the
/// given fraction of subjects carries the effect (seeded coin flips).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfounderEffect {
    pub name: String,
    pub per_group_fraction: [f64; 3],
    pub action: SpectralAction,
}

/// Group-conditional normal model for one covariate; `None` marks a
/// group where the covariate is not collected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    pub per_group: [Option<(f64, f64)>; 3],
    pub clamp: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub grid: WavelengthGrid,
    /// Subjects per group (healthy, pancreatic, sepsis).
    pub counts: [usize; 3],
    /// Per-subject number of time points, drawn uniformly inclusive.
    pub timepoints: (u32, u32),
    /// One image per site per time point.
    pub sites: Vec<Site>,
    pub chromophores: Vec<Chromophore>,
    /// Per-chromophore concentration delta per group; all zeros means no
    /// group effect.
    pub group_effect: Vec<[f64; 3]>,
    pub confounders: Vec<ConfounderEffect>,
    /// Name of the effect that flips the recorded software version tag.
    pub version_effect: Option<String>,
    pub scattering_slope: f64,
    pub illumination_jitter_sd: f64,
    pub noise_sd: f64,
    pub covariates: Vec<CovariateSpec>,
    /// Female fraction per group for the categorical `sex` covariate.
    pub female_fraction: [f64; 3],
    /// Edge length of cubes produced by [`generate_cube`].
    pub cube_size: usize,
    pub master_seed: u64,
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: &str| Err(SynthError::InvalidConfig(msg.to_string()));
        if self.counts.iter().all(|&c| c == 0) {
            return bad("all group counts are zero");
        }
        if self.timepoints.0 == 0 || self.timepoints.0 > self.timepoints.1 {
            return bad("timepoints must satisfy 1 <= min <= max");
        }
        if self.sites.is_empty() {
            return bad("at least one site required");
        }
        if self.chromophores.len() != self.group_effect.len() {
            return bad("group_effect length must match chromophores");
        }
        for c in &self.chromophores {
            if c.band.width_nm <= 0.0 || c.band.strength < 0.0 || c.subject_sd < 0.0 {
                return bad("chromophore widths must be positive, strengths and sds non-negative");
            }
            if c.baseline.iter().any(|&b| b < 0.0) {
                return bad("baseline concentrations must be non-negative");
            }
        }
        for e in &self.confounders {
            if e.per_group_fraction.iter().any(|f| !(0.0..=1.0).contains(f)) {
                return bad("confounder fractions must lie in [0, 1]");
            }
            if let SpectralAction::ConcentrationDelta { chromophore, .. } = e.action {
                if chromophore >= self.chromophores.len() {
                    return bad("concentration delta references a missing chromophore");
                }
            }
        }
        if self.illumination_jitter_sd < 0.0 || self.noise_sd < 0.0 || self.scattering_slope < 0.0
        {
            return bad("sds and slopes must be non-negative");
        }
        if self.cube_size == 0 {
            return bad("cube_size must be positive");
        }
        Ok(())
    }
}

/// Named scenario presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    /// Real group effect, no confounders.
    Separable,
    /// No effects at all: labels carry no signal.
    Null,
    /// Zero group effect; a tilt hits every sepsis subject and nobody else.
    Confounded,
    /// The same tilt hits half of every group.
    BalancedConfounder,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Separable => "separable",
            Scenario::Null => "null",
            Scenario::Confounded => "confounded",
            Scenario::BalancedConfounder => "balanced_confounder",
        })
    }
}

impl FromStr for Scenario {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, SynthError> {
        match s {
            "separable" => Ok(Scenario::Separable),
            "null" => Ok(Scenario::Null),
            "confounded" => Ok(Scenario::Confounded),
            "balanced_confounder" | "balanced-confounder" => Ok(Scenario::BalancedConfounder),
            other => Err(SynthError::UnknownScenario(other.to_string())),
        }
    }
}

/// Knobs the CLI exposes on top of a scenario preset.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScenarioOverrides {
    pub master_seed: Option<u64>,
    pub counts: Option<[usize; 3]>,
    pub timepoints: Option<(u32, u32)>,
    pub noise_sd: Option<f64>,
    pub tilt_slope: Option<f64>,
    pub tilt_fraction: Option<[f64; 3]>,
}

fn base_config() -> SyntheticConfig {
    let chromophores = vec![
        Chromophore {
            name: "oxy_a".into(),
            band: ChromophoreBand {
                center_nm: 540.0,
                width_nm: 12.0,
                strength: 1.0,
            },
            baseline: [0.9, 0.9, 0.9],
            subject_sd: 0.05,
        },
        Chromophore {
            name: "oxy_b".into(),
            band: ChromophoreBand {
                center_nm: 575.0,
                width_nm: 12.0,
                strength: 0.8,
            },
            baseline: [0.9, 0.9, 0.9],
            subject_sd: 0.05,
        },
        Chromophore {
            name: "deoxy".into(),
            band: ChromophoreBand {
                center_nm: 760.0,
                width_nm: 20.0,
                strength: 0.6,
            },
            baseline: [0.5, 0.5, 0.5],
            subject_sd: 0.05,
        },
        Chromophore {
            name: "water".into(),
            band: ChromophoreBand {
                center_nm: 970.0,
                width_nm: 35.0,
                strength: 0.9,
            },
            baseline: [0.8, 0.8, 0.8],
            subject_sd: 0.05,
        },
    ];
    let covariates = vec![
        CovariateSpec {
            name: "age".into(),
            per_group: [Some((40.0, 12.0)), Some((66.0, 10.0)), Some((64.0, 12.0))],
            clamp: Some((18.0, 95.0)),
        },
        CovariateSpec {
            name: "bmi".into(),
            per_group: [Some((24.0, 3.0)), Some((26.0, 4.0)), Some((27.0, 5.0))],
            clamp: Some((15.0, 55.0)),
        },
        CovariateSpec {
            name: "map".into(),
            per_group: [Some((90.0, 8.0)), Some((82.0, 10.0)), Some((72.0, 12.0))],
            clamp: Some((35.0, 140.0)),
        },
        CovariateSpec {
            name: "spo2".into(),
            per_group: [Some((98.0, 1.0)), Some((96.0, 2.0)), Some((94.0, 3.0))],
            clamp: Some((70.0, 100.0)),
        },
        CovariateSpec {
            name: "hb".into(),
            per_group: [None, Some((11.5, 1.5)), Some((9.5, 1.5))],
            clamp: Some((4.0, 20.0)),
        },
        CovariateSpec {
            name: "bilirubin".into(),
            per_group: [None, Some((0.8, 0.4)), Some((1.6, 1.0))],
            clamp: Some((0.1, 25.0)),
        },
        CovariateSpec {
            name: "fluid_balance".into(),
            per_group: [None, Some((1500.0, 800.0)), Some((3500.0, 1500.0))],
            clamp: Some((-2000.0, 12000.0)),
        },
        CovariateSpec {
            name: "vis".into(),
            per_group: [None, Some((2.0, 2.0)), Some((8.0, 6.0))],
            clamp: Some((0.0, 60.0)),
        },
        CovariateSpec {
            name: "ventilation_ratio".into(),
            per_group: [None, Some((0.1, 0.1)), Some((0.5, 0.3))],
            clamp: Some((0.0, 1.0)),
        },
    ];
    SyntheticConfig {
        grid: WavelengthGrid::default(),
        counts: [25, 25, 25],
        timepoints: (4, 10),
        sites: vec![Site::Hand, Site::Thigh],
        chromophores,
        group_effect: vec![[0.0; 3]; 4],
        confounders: Vec::new(),
        version_effect: None,
        scattering_slope: 0.3,
        illumination_jitter_sd: 0.03,
        noise_sd: 0.01,
        covariates,
        female_fraction: [0.5, 0.4, 0.35],
        cube_size: 32,
        master_seed: 0,
    }
}

const DEFAULT_TILT_SLOPE: f64 = 0.05;

fn tilt_effect(fraction: [f64; 3], slope: f64) -> ConfounderEffect {
    ConfounderEffect {
        name: "software_update".into(),
        per_group_fraction: fraction,
        action: SpectralAction::Tilt { slope },
    }
}

/// Builds the preset config for a scenario and applies overrides.
pub fn scenario(which: Scenario, overrides: &ScenarioOverrides) -> SyntheticConfig {
    let mut config = base_config();
    match which {
        Scenario::Separable => {
            // sepsis shifts deoxy and water up, oxy bands down
            config.group_effect = vec![
                [0.0, 0.0, -0.15],
                [0.0, 0.0, -0.15],
                [0.0, 0.0, 0.25],
                [0.0, 0.05, 0.2],
            ];
        }
        Scenario::Null => {
            // no effects at all: also drop subject-level heterogeneity, so
            // spectra carry no structure a classifier could attach to
            for c in config.chromophores.iter_mut() {
                c.subject_sd = 0.0;
            }
        }
        Scenario::Confounded => {
            config.confounders = vec![tilt_effect([0.0, 0.0, 1.0], DEFAULT_TILT_SLOPE)];
            config.version_effect = Some("software_update".into());
        }
        Scenario::BalancedConfounder => {
            config.confounders = vec![tilt_effect([0.5, 0.5, 0.5], DEFAULT_TILT_SLOPE)];
            config.version_effect = Some("software_update".into());
        }
    }
    if let Some(seed) = overrides.master_seed {
        config.master_seed = seed;
    }
    if let Some(counts) = overrides.counts {
        config.counts = counts;
    }
    if let Some(tp) = overrides.timepoints {
        config.timepoints = tp;
    }
    if let Some(noise) = overrides.noise_sd {
        config.noise_sd = noise;
    }
    if overrides.tilt_slope.is_some() || overrides.tilt_fraction.is_some() {
        let slope = overrides.tilt_slope.unwrap_or(DEFAULT_TILT_SLOPE);
        let fraction = overrides.tilt_fraction.unwrap_or(match which {
            Scenario::Confounded => [0.0, 0.0, 1.0],
            Scenario::BalancedConfounder => [0.5; 3],
            _ => [0.0; 3],
        });
        config.confounders = vec![tilt_effect(fraction, slope)];
        config.version_effect = Some("software_update".into());
    }
    config
}

/// Per-subject ground truth: effective concentrations, applied effects
/// and the resulting tilt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectTruth {
    pub subject_id: SubjectId,
    pub group: Group,
    /// Global subject ordinal; seeds this subject's substreams.
    pub ordinal: usize,
    pub concentrations: Vec<f64>,
    pub effects: Vec<(String, bool)>,
    pub tilt_slope: f64,
    pub n_timepoints: u32,
}

impl SubjectTruth {
    pub fn effect_applied(&self, name: &str) -> bool {
        self.effects
            .iter()
            .any(|(n, applied)| n == name && *applied)
    }
}

/// Ground-truth sidecar of a generated cohort.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub subjects: Vec<SubjectTruth>,
    pub clamped_values: u64,
    pub total_values: u64,
}

impl GroundTruth {
    /// Fraction of generated band values clamped at zero.
    pub fn clamp_fraction(&self) -> f64 {
        if self.total_values == 0 {
            0.0
        } else {
            self.clamped_values as f64 / self.total_values as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedCohort {
    pub cohort: Cohort,
    pub truth: GroundTruth,
}

/// Noise-free spectrum of a subject at unit illumination.
pub fn clean_spectrum(config: &SyntheticConfig, truth: &SubjectTruth) -> Vec<f64> {
    let lo = config.grid.min_nm();
    let hi = config.grid.max_nm();
    let mid = 0.5 * (lo + hi);
    let span = hi - lo;
    config
        .grid
        .centers()
        .iter()
        .map(|&nm| {
            let mut absorb = 0.0;
            for (c, chromo) in truth.concentrations.iter().zip(&config.chromophores) {
                absorb += c * chromo.band.shape(nm);
            }
            absorb += config.scattering_slope * (nm - lo) / span;
            let tilt = 1.0 + truth.tilt_slope * (nm - mid) / span;
            (-absorb).exp() * tilt
        })
        .collect()
}

fn group_prefix(group: Group) -> &'static str {
    match group {
        Group::Healthy => "h",
        Group::Pancreatic => "p",
        Group::Sepsis => "s",
    }
}

fn group_start(group: Group) -> DateTime<Utc> {
    match group {
        Group::Healthy => Utc.with_ymd_and_hms(2019, 6, 1, 8, 0, 0).unwrap(),
        Group::Pancreatic => Utc.with_ymd_and_hms(2019, 2, 1, 8, 0, 0).unwrap(),
        Group::Sepsis => Utc.with_ymd_and_hms(2019, 9, 1, 8, 0, 0).unwrap(),
    }
}

/// Deterministic subject-level draws: concentrations, effect coins,
/// time point count.
pub fn subject_profiles(config: &SyntheticConfig) -> Vec<SubjectTruth> {
    let mut profiles = Vec::new();
    let mut ordinal = 0usize;
    let subject_master = rng::substream_seed(config.master_seed, stream::SUBJECT);
    let assign_master = rng::substream_seed(config.master_seed, stream::ASSIGNMENT);
    for group in Group::ALL {
        for slot in 0..config.counts[group.index()] {
            let subject_id = SubjectId(format!("{}{:03}", group_prefix(group), slot + 1));
            let mut rng = rng::substream_rng(subject_master, ordinal as u64);
            let mut concentrations = Vec::with_capacity(config.chromophores.len());
            for (i, chromo) in config.chromophores.iter().enumerate() {
                let jitter: f64 = rng.sample(StandardNormal);
                let c = chromo.baseline[group.index()]
                    + config.group_effect[i][group.index()]
                    + chromo.subject_sd * jitter;
                concentrations.push(c.max(0.0));
            }
            let n_timepoints = rng.gen_range(config.timepoints.0..=config.timepoints.1);

            let mut effects = Vec::with_capacity(config.confounders.len());
            let mut tilt_slope = 0.0;
            for (e_idx, effect) in config.confounders.iter().enumerate() {
                let mut coin = rng::substream_rng(
                    assign_master,
                    (e_idx as u64) << 32 | ordinal as u64,
                );
                let applied = coin.gen::<f64>() < effect.per_group_fraction[group.index()];
                effects.push((effect.name.clone(), applied));
                if applied {
                    match effect.action {
                        SpectralAction::Tilt { slope } => tilt_slope += slope,
                        SpectralAction::ConcentrationDelta { chromophore, delta } => {
                            concentrations[chromophore] =
                                (concentrations[chromophore] + delta).max(0.0);
                        }
                    }
                }
            }

            profiles.push(SubjectTruth {
                subject_id,
                group,
                ordinal,
                concentrations,
                effects,
                tilt_slope,
                n_timepoints,
            });
            ordinal += 1;
        }
    }
    profiles
}

/// Generates the full cohort plus its ground truth.
pub fn generate_cohort(config: &SyntheticConfig) -> Result<GeneratedCohort, SynthError> {
    config.validate()?;
    let profiles = subject_profiles(config);
    let image_master = rng::substream_seed(config.master_seed, stream::IMAGE);
    let covariate_master = rng::substream_seed(config.master_seed, stream::COVARIATE);
    let version_name = config.version_effect.as_deref();

    let mut subjects = Vec::with_capacity(profiles.len());
    let mut clamped = 0u64;
    let mut total = 0u64;
    let mut image_counter = 0u64;
    for (group_slot, profile) in profiles.iter().enumerate() {
        let _ = group_slot;
        let group = profile.group;
        let clean = clean_spectrum(config, profile);
        let software_version = if version_name.is_some_and(|n| profile.effect_applied(n)) {
            "v2"
        } else {
            "v1"
        };

        // covariates: one draw per subject, repeated across rows
        let mut cov_rng = rng::substream_rng(covariate_master, profile.ordinal as u64);
        let mut subject_values: BTreeMap<String, Option<CovariateValue>> = BTreeMap::new();
        for spec in &config.covariates {
            let value = spec.per_group[group.index()].map(|(mean, sd)| {
                let z: f64 = cov_rng.sample(StandardNormal);
                let mut v = mean + sd * z;
                if let Some((lo, hi)) = spec.clamp {
                    v = v.clamp(lo, hi);
                }
                CovariateValue::Scalar(v)
            });
            subject_values.insert(spec.name.clone(), value);
        }
        let female: f64 = cov_rng.gen();
        let sex = if female < config.female_fraction[group.index()] {
            "f"
        } else {
            "m"
        };
        subject_values.insert(
            "sex".into(),
            Some(CovariateValue::Category(sex.to_string())),
        );

        let slot_in_group = profile
            .subject_id
            .0
            .trim_start_matches(group_prefix(group))
            .parse::<i64>()
            .unwrap_or(1)
            - 1;
        let inclusion = group_start(group) + Duration::hours(72 * slot_in_group);

        let mut spectra = Vec::new();
        for t in 0..profile.n_timepoints {
            for &site in &config.sites {
                let mut img_rng = rng::substream_rng(image_master, image_counter);
                image_counter += 1;
                let jitter: f64 = img_rng.sample(StandardNormal);
                let b = (1.0 + config.illumination_jitter_sd * jitter).max(0.1);
                let mut values = Vec::with_capacity(clean.len());
                for &r in &clean {
                    let eps: f64 = img_rng.sample(StandardNormal);
                    let v = b * r + config.noise_sd * eps;
                    total += 1;
                    if v < 0.0 {
                        clamped += 1;
                        values.push(0.0);
                    } else {
                        values.push(v);
                    }
                }
                let meta = SpectrumMeta {
                    subject_id: profile.subject_id.clone(),
                    group,
                    site,
                    timepoint_index: t,
                    acquired_at: Some(inclusion + Duration::hours(8 * i64::from(t))),
                    software_version: software_version.to_string(),
                };
                spectra.push(MedianSpectrum::new(values, meta)?);
            }
        }

        let n_rows = spectra.len();
        let covariates: BTreeMap<String, Vec<Option<CovariateValue>>> = subject_values
            .into_iter()
            .map(|(name, value)| (name, vec![value; n_rows]))
            .collect();
        subjects.push(SubjectRecord {
            subject_id: profile.subject_id.clone(),
            group,
            covariates,
            spectra,
        });
    }

    let cohort = Cohort::new(subjects, config.grid.clone())?;
    Ok(GeneratedCohort {
        cohort,
        truth: GroundTruth {
            subjects: profiles,
            clamped_values: clamped,
            total_values: total,
        },
    })
}

/// Generates a small cube whose pixels are per-pixel noisy realizations
/// of the subject's clean spectrum, plus an inset rectangular mask.
pub fn generate_cube(
    config: &SyntheticConfig,
    subject: &SubjectTruth,
    image_index: u64,
) -> Result<(HsiCube, AnnotationMask), SynthError> {
    config.validate()?;
    let clean = clean_spectrum(config, subject);
    let size = config.cube_size;
    let pixels = size * size;
    let bands = config.grid.bands();
    let cube_master = rng::substream_seed(config.master_seed, stream::CUBE);
    let mut rng = rng::substream_rng(
        cube_master,
        (subject.ordinal as u64) << 32 | image_index,
    );
    let mut values = Vec::with_capacity(pixels * bands);
    for &r in clean.iter() {
        for _ in 0..pixels {
            let eps: f64 = rng.sample(StandardNormal);
            let v = (r + config.noise_sd * eps).max(0.0);
            values.push(v as f32);
        }
    }
    let cube = HsiCube::new(size, size, config.grid.clone(), values)?;
    let margin = (size / 8).max(1).min(size.saturating_sub(1) / 2);
    let mut included = vec![false; pixels];
    for row in margin..size - margin {
        for col in margin..size - margin {
            included[row * size + col] = true;
        }
    }
    let mask = AnnotationMask::new(size, size, included)?;
    Ok((cube, mask))
}

/// Writes the ground-truth sidecar: one row per spectrum and effect.
pub fn write_ground_truth(
    generated: &GeneratedCohort,
    path: &Path,
) -> Result<(), DataError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| DataError::Parse {
        path: path.to_path_buf(),
        line: 0,
        reason: e.to_string(),
    })?;
    writer
        .write_record(["spectrum_id", "subject_id", "effect", "applied"])
        .map_err(|e| DataError::Parse {
            path: path.to_path_buf(),
            line: 0,
            reason: e.to_string(),
        })?;
    for (subject, truth) in generated
        .cohort
        .subjects
        .iter()
        .zip(&generated.truth.subjects)
    {
        for (i, _) in subject.spectra.iter().enumerate() {
            let spectrum_id = format!("{}_{:03}", subject.subject_id, i);
            for (effect, applied) in &truth.effects {
                writer
                    .write_record([
                        spectrum_id.as_str(),
                        subject.subject_id.0.as_str(),
                        effect.as_str(),
                        if *applied { "1" } else { "0" },
                    ])
                    .map_err(|e| DataError::Parse {
                        path: path.to_path_buf(),
                        line: 0,
                        reason: e.to_string(),
                    })?;
            }
        }
    }
    writer.flush().map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}
