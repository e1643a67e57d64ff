//! In-memory and on-disk data model: hyperspectral cubes, annotation
//! masks, cohort manifests and median-spectrum extraction.

mod cohort;
mod cube;

pub use cohort::{load_cohort, save_cohort, Cohort, CovariateValue, SubjectRecord};
pub use cube::{load_cube, load_mask, save_cube, save_mask, AnnotationMask, HsiCube};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use thiserror::Error;

/// Errors raised while loading, validating or transforming cube and
/// cohort data.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed header: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },
    #[error("{path}: expected {expected} values, found {found}")]
    ValueCountMismatch {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("non-finite or negative value {value} at index {index}")]
    BadValue { index: usize, value: f64 },
    #[error("wavelength grid must be strictly increasing, finite and positive")]
    BadGrid,
    #[error("mask is {mask_width}x{mask_height} but cube is {cube_width}x{cube_height}")]
    DimensionMismatch {
        mask_width: usize,
        mask_height: usize,
        cube_width: usize,
        cube_height: usize,
    },
    #[error("annotation mask includes no pixels")]
    EmptyMask,
    #[error("window {lo}..{hi} nm covers no grid band")]
    WindowOutsideGrid { lo: f64, hi: f64 },
    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("subject {subject} appears with conflicting groups {first} and {second}")]
    GroupConflict {
        subject: String,
        first: Group,
        second: Group,
    },
    #[error("unknown group label {0:?}")]
    UnknownGroup(String),
    #[error("unknown site label {0:?}")]
    UnknownSite(String),
    #[error("spectrum of subject {subject} has {found} bands, cohort grid has {expected}")]
    GridMismatch {
        subject: String,
        expected: usize,
        found: usize,
    },
    #[error("duplicate subject id {0}")]
    DuplicateSubject(String),
    #[error("subject {subject}: spectrum metadata does not match its record")]
    MetadataMismatch { subject: String },
    #[error("subject {subject}: covariate column {name} has {found} entries for {expected} spectra")]
    CovariateShape {
        subject: String,
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("refusing to write cube to {0}: the .raw extension is reserved for the payload")]
    ReservedExtension(PathBuf),
}

/// Subject cohort membership.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Healthy,
    Pancreatic,
    Sepsis,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Healthy, Group::Pancreatic, Group::Sepsis];

    /// Stable position in [`Group::ALL`].
    pub fn index(self) -> usize {
        match self {
            Group::Healthy => 0,
            Group::Pancreatic => 1,
            Group::Sepsis => 2,
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Group::Healthy => "healthy",
            Group::Pancreatic => "pancreatic",
            Group::Sepsis => "sepsis",
        };
        f.write_str(s)
    }
}

impl FromStr for Group {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, DataError> {
        match s {
            "healthy" => Ok(Group::Healthy),
            "pancreatic" => Ok(Group::Pancreatic),
            "sepsis" => Ok(Group::Sepsis),
            other => Err(DataError::UnknownGroup(other.to_string())),
        }
    }
}

/// Measurement site of one image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Site {
    Hand,
    Thigh,
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Site::Hand => "hand",
            Site::Thigh => "thigh",
        })
    }
}

impl FromStr for Site {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, DataError> {
        match s {
            "hand" => Ok(Site::Hand),
            "thigh" => Ok(Site::Thigh),
            other => Err(DataError::UnknownSite(other.to_string())),
        }
    }
}

/// Opaque subject identifier.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubjectId(pub String);

impl fmt::Display for SubjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SubjectId {
    fn from(s: &str) -> Self {
        SubjectId(s.to_string())
    }
}

/// Ordered band-center wavelengths in nanometers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WavelengthGrid {
    centers: Vec<f64>,
}

impl WavelengthGrid {
    /// Validates that centers are finite, positive and strictly increasing.
    pub fn new(centers: Vec<f64>) -> Result<Self, DataError> {
        if centers.is_empty() {
            return Err(DataError::BadGrid);
        }
        for (i, &c) in centers.iter().enumerate() {
            if !c.is_finite() || c <= 0.0 {
                return Err(DataError::BadGrid);
            }
            if i > 0 && centers[i - 1] >= c {
                return Err(DataError::BadGrid);
            }
        }
        Ok(WavelengthGrid { centers })
    }

    pub fn bands(&self) -> usize {
        self.centers.len()
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn min_nm(&self) -> f64 {
        self.centers[0]
    }

    pub fn max_nm(&self) -> f64 {
        *self.centers.last().unwrap()
    }
}

impl Default for WavelengthGrid {
    /// 100 bands uniformly spanning 500-1000 nm.
    fn default() -> Self {
        let centers = (0..100)
            .map(|k| 500.0 + 500.0 * k as f64 / 99.0)
            .collect();
        WavelengthGrid { centers }
    }
}

impl TryFrom<Vec<f64>> for WavelengthGrid {
    type Error = DataError;

    fn try_from(v: Vec<f64>) -> Result<Self, DataError> {
        WavelengthGrid::new(v)
    }
}

impl From<WavelengthGrid> for Vec<f64> {
    fn from(g: WavelengthGrid) -> Vec<f64> {
        g.centers
    }
}

/// Acquisition metadata attached to one extracted spectrum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMeta {
    pub subject_id: SubjectId,
    pub group: Group,
    pub site: Site,
    pub timepoint_index: u32,
    pub acquired_at: Option<DateTime<Utc>>,
    pub software_version: String,
}

/// Per-image feature vector: the band-wise median over annotated pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct MedianSpectrum {
    pub values: Vec<f64>,
    pub meta: SpectrumMeta,
}

impl MedianSpectrum {
    pub fn new(values: Vec<f64>, meta: SpectrumMeta) -> Result<Self, DataError> {
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(DataError::BadValue { index, value });
            }
        }
        Ok(MedianSpectrum { values, meta })
    }
}

/// Band-wise median over the included pixels of `mask`.
///
/// Each band is reduced independently; even pixel counts take the
/// arithmetic mean of the two central order statistics.
pub fn median_spectrum(
    cube: &HsiCube,
    mask: &AnnotationMask,
    meta: SpectrumMeta,
) -> Result<MedianSpectrum, DataError> {
    if mask.width() != cube.width() || mask.height() != cube.height() {
        return Err(DataError::DimensionMismatch {
            mask_width: mask.width(),
            mask_height: mask.height(),
            cube_width: cube.width(),
            cube_height: cube.height(),
        });
    }
    let included: Vec<usize> = mask.included_indices().collect();
    if included.is_empty() {
        return Err(DataError::EmptyMask);
    }
    let pixels = cube.width() * cube.height();
    let bands = cube.grid().bands();
    let mut scratch: Vec<f32> = Vec::with_capacity(included.len());
    let mut values = Vec::with_capacity(bands);
    for band in 0..bands {
        let plane = &cube.values()[band * pixels..(band + 1) * pixels];
        scratch.clear();
        scratch.extend(included.iter().map(|&p| plane[p]));
        values.push(median_f32(&mut scratch));
    }
    MedianSpectrum::new(values, meta)
}

fn median_f32(v: &mut [f32]) -> f64 {
    let n = v.len();
    debug_assert!(n > 0);
    let mid = n / 2;
    let (below, upper, _) =
        v.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).expect("finite values"));
    let upper = f64::from(*upper);
    if n % 2 == 1 {
        upper
    } else {
        let lower = below.iter().fold(f32::NEG_INFINITY, |acc, &x| acc.max(x));
        (f64::from(lower) + upper) / 2.0
    }
}

/// A half-open-free wavelength interval `[lo_nm, hi_nm]`; a band belongs
/// to the window when its center lies inside.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WavelengthWindow {
    pub lo_nm: f64,
    pub hi_nm: f64,
}

/// One index = mean(A) / (mean(A) + mean(B)) over two wavelength windows.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandRatio {
    pub window_a: WavelengthWindow,
    pub window_b: WavelengthWindow,
}

/// Windows for the four generic band-ratio tissue indices.
///
/// The defaults sit in well-known absorber regions but make no claim of
/// equivalence to any camera vendor's parameter formulas.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TissueIndexConfig {
    pub sto2_like: BandRatio,
    pub npi_like: BandRatio,
    pub thi_like: BandRatio,
    pub twi_like: BandRatio,
}

impl Default for TissueIndexConfig {
    fn default() -> Self {
        let w = |lo_nm: f64, hi_nm: f64| WavelengthWindow { lo_nm, hi_nm };
        TissueIndexConfig {
            sto2_like: BandRatio {
                window_a: w(570.0, 590.0),
                window_b: w(740.0, 780.0),
            },
            npi_like: BandRatio {
                window_a: w(655.0, 735.0),
                window_b: w(825.0, 925.0),
            },
            thi_like: BandRatio {
                window_a: w(530.0, 590.0),
                window_b: w(785.0, 825.0),
            },
            twi_like: BandRatio {
                window_a: w(950.0, 1000.0),
                window_b: w(650.0, 700.0),
            },
        }
    }
}

/// Dimensionless band-ratio summaries, each clamped to [0, 1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TissueIndices {
    pub sto2_like: f64,
    pub npi_like: f64,
    pub thi_like: f64,
    pub twi_like: f64,
}

/// Computes the four band-ratio indices of `spectrum` on `grid`.
pub fn tissue_indices(
    spectrum: &MedianSpectrum,
    grid: &WavelengthGrid,
    config: &TissueIndexConfig,
) -> Result<TissueIndices, DataError> {
    Ok(TissueIndices {
        sto2_like: band_ratio(&spectrum.values, grid, &config.sto2_like)?,
        npi_like: band_ratio(&spectrum.values, grid, &config.npi_like)?,
        thi_like: band_ratio(&spectrum.values, grid, &config.thi_like)?,
        twi_like: band_ratio(&spectrum.values, grid, &config.twi_like)?,
    })
}

fn window_mean(
    values: &[f64],
    grid: &WavelengthGrid,
    window: &WavelengthWindow,
) -> Result<f64, DataError> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (v, &c) in values.iter().zip(grid.centers()) {
        if c >= window.lo_nm && c <= window.hi_nm {
            sum += v;
            n += 1;
        }
    }
    if n == 0 {
        return Err(DataError::WindowOutsideGrid {
            lo: window.lo_nm,
            hi: window.hi_nm,
        });
    }
    Ok(sum / n as f64)
}

fn band_ratio(
    values: &[f64],
    grid: &WavelengthGrid,
    ratio: &BandRatio,
) -> Result<f64, DataError> {
    let a = window_mean(values, grid, &ratio.window_a)?;
    let b = window_mean(values, grid, &ratio.window_b)?;
    if a + b == 0.0 {
        // both windows all-zero: the ratio is symmetric, report the midpoint
        return Ok(0.5);
    }
    Ok((a / (a + b)).clamp(0.0, 1.0))
}
