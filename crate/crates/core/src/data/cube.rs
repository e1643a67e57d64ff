//! Cube and mask containers.
//!
//! A cube is stored as a text header (`key=value` lines) plus a sibling
//! raw little-endian float32 payload with band-major ordering (band,
//! then row, then column). The payload lives next to the header with its
//! extension replaced by `.raw`. A mask is a single text file: `width=`
//! and `height=` lines followed by one row of '0'/'1' characters per
//! image row.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{DataError, WavelengthGrid};

/// A width x height x bands reflectance volume on a wavelength grid.
#[derive(Clone, Debug, PartialEq)]
pub struct HsiCube {
    width: usize,
    height: usize,
    grid: WavelengthGrid,
    values: Vec<f32>,
}

impl HsiCube {
    /// Validates counts and that all values are finite and non-negative.
    pub fn new(
        width: usize,
        height: usize,
        grid: WavelengthGrid,
        values: Vec<f32>,
    ) -> Result<Self, DataError> {
        let expected = width * height * grid.bands();
        if values.len() != expected {
            return Err(DataError::ValueCountMismatch {
                path: PathBuf::new(),
                expected,
                found: values.len(),
            });
        }
        for (index, &v) in values.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(DataError::BadValue {
                    index,
                    value: f64::from(v),
                });
            }
        }
        Ok(HsiCube {
            width,
            height,
            grid,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn grid(&self) -> &WavelengthGrid {
        &self.grid
    }

    /// Band-major values: index = band * width * height + row * width + col.
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn value(&self, band: usize, row: usize, col: usize) -> f32 {
        self.values[band * self.width * self.height + row * self.width + col]
    }
}

/// Boolean raster marking annotated skin pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotationMask {
    width: usize,
    height: usize,
    included: Vec<bool>,
}

impl AnnotationMask {
    pub fn new(width: usize, height: usize, included: Vec<bool>) -> Result<Self, DataError> {
        if included.len() != width * height {
            return Err(DataError::ValueCountMismatch {
                path: PathBuf::new(),
                expected: width * height,
                found: included.len(),
            });
        }
        Ok(AnnotationMask {
            width,
            height,
            included,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn included(&self) -> &[bool] {
        &self.included
    }

    pub fn included_count(&self) -> usize {
        self.included.iter().filter(|&&b| b).count()
    }

    /// Row-major pixel indices of included pixels.
    pub fn included_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.included
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn header_err(path: &Path, reason: impl Into<String>) -> DataError {
    DataError::MalformedHeader {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn payload_path(header: &Path) -> PathBuf {
    header.with_extension("raw")
}

fn parse_header(path: &Path, text: &str) -> Result<Vec<(String, String)>, DataError> {
    let mut pairs = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| header_err(path, format!("line {line:?} is not key=value")))?;
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

fn require<'a>(
    path: &Path,
    pairs: &'a [(String, String)],
    key: &str,
) -> Result<&'a str, DataError> {
    pairs
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| header_err(path, format!("missing key {key:?}")))
}

fn parse_dim(path: &Path, key: &str, value: &str) -> Result<usize, DataError> {
    let n: usize = value
        .parse()
        .map_err(|_| header_err(path, format!("{key}={value:?} is not a count")))?;
    if n == 0 {
        return Err(header_err(path, format!("{key} must be positive")));
    }
    Ok(n)
}

/// Loads a cube container: `path` names the header file, the payload is
/// read from the sibling `.raw` file.
pub fn load_cube(path: &Path) -> Result<HsiCube, DataError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let pairs = parse_header(path, &text)?;
    let width = parse_dim(path, "width", require(path, &pairs, "width")?)?;
    let height = parse_dim(path, "height", require(path, &pairs, "height")?)?;
    let bands = parse_dim(path, "bands", require(path, &pairs, "bands")?)?;
    let layout = require(path, &pairs, "layout")?;
    if layout != "band-major" {
        return Err(header_err(path, format!("unsupported layout {layout:?}")));
    }
    let dtype = require(path, &pairs, "dtype")?;
    if dtype != "float32" {
        return Err(header_err(path, format!("unsupported dtype {dtype:?}")));
    }
    let wavelengths = require(path, &pairs, "wavelengths")?;
    let centers: Vec<f64> = wavelengths
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| header_err(path, format!("bad wavelength {s:?}")))
        })
        .collect::<Result<_, _>>()?;
    if centers.len() != bands {
        return Err(header_err(
            path,
            format!("{} wavelengths for {bands} bands", centers.len()),
        ));
    }
    let grid = WavelengthGrid::new(centers)?;

    let raw = payload_path(path);
    let bytes = fs::read(&raw).map_err(io_err(&raw))?;
    if bytes.len() % 4 != 0 {
        return Err(header_err(&raw, "payload length is not a multiple of 4"));
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let expected = width * height * bands;
    if values.len() != expected {
        return Err(DataError::ValueCountMismatch {
            path: raw,
            expected,
            found: values.len(),
        });
    }
    HsiCube::new(width, height, grid, values)
}

/// Writes the header at `path` and the payload at the sibling `.raw`.
pub fn save_cube(cube: &HsiCube, path: &Path) -> Result<(), DataError> {
    if path.extension().is_some_and(|e| e == "raw") {
        return Err(DataError::ReservedExtension(path.to_path_buf()));
    }
    let wavelengths: Vec<String> = cube.grid().centers().iter().map(|c| c.to_string()).collect();
    let header = format!(
        "width={}\nheight={}\nbands={}\nlayout=band-major\ndtype=float32\nwavelengths={}\n",
        cube.width(),
        cube.height(),
        cube.grid().bands(),
        wavelengths.join(",")
    );
    fs::write(path, header).map_err(io_err(path))?;
    let raw = payload_path(path);
    let mut bytes = Vec::with_capacity(cube.values().len() * 4);
    for v in cube.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(&raw).map_err(io_err(&raw))?;
    f.write_all(&bytes).map_err(io_err(&raw))?;
    Ok(())
}

/// Loads a mask raster.
pub fn load_mask(path: &Path) -> Result<AnnotationMask, DataError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines();
    let width_line = lines
        .next()
        .ok_or_else(|| header_err(path, "empty file"))?;
    let height_line = lines
        .next()
        .ok_or_else(|| header_err(path, "missing height line"))?;
    let parse_field = |line: &str, key: &str| -> Result<usize, DataError> {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| header_err(path, format!("line {line:?} is not key=value")))?;
        if k.trim() != key {
            return Err(header_err(path, format!("expected {key}=, got {line:?}")));
        }
        parse_dim(path, key, v.trim())
    };
    let width = parse_field(width_line, "width")?;
    let height = parse_field(height_line, "height")?;
    let mut included = Vec::with_capacity(width * height);
    let mut rows = 0usize;
    for line in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.len() != width {
            return Err(header_err(
                path,
                format!("row {rows} has {} columns, expected {width}", line.len()),
            ));
        }
        for ch in line.chars() {
            match ch {
                '0' => included.push(false),
                '1' => included.push(true),
                other => return Err(header_err(path, format!("bad mask character {other:?}"))),
            }
        }
        rows += 1;
    }
    if rows != height {
        return Err(DataError::ValueCountMismatch {
            path: path.to_path_buf(),
            expected: height,
            found: rows,
        });
    }
    AnnotationMask::new(width, height, included)
}

/// Writes a mask raster.
pub fn save_mask(mask: &AnnotationMask, path: &Path) -> Result<(), DataError> {
    let mut out = format!("width={}\nheight={}\n", mask.width(), mask.height());
    for row in 0..mask.height() {
        for col in 0..mask.width() {
            out.push(if mask.included()[row * mask.width() + col] {
                '1'
            } else {
                '0'
            });
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}
