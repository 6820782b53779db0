//! Snapshot matrices on disk: CSV or raw little-endian f64 with a JSON
//! sidecar, text masks, and PGM heatmaps.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sparsense_core::linalg::Matrix;
use sparsense_core::snapshots::{decode_raw_f64, encode_f64_le, parse_csv, SnapshotMatrix};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatrixFormat {
    #[serde(rename = "csv")]
    Csv,
    #[serde(rename = "raw-f64")]
    RawF64,
}

impl MatrixFormat {
    /// `.csv` files are CSV; everything else is raw f64.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => MatrixFormat::Csv,
            _ => MatrixFormat::RawF64,
        }
    }
}

impl FromStr for MatrixFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(MatrixFormat::Csv),
            "raw-f64" | "raw" => Ok(MatrixFormat::RawF64),
            other => Err(format!("unknown matrix format `{other}` (expected csv or raw-f64)")),
        }
    }
}

/// Dimensions and layout of a stored matrix, kept next to it as `<file>.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSidecar {
    pub m: usize,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_shape: Option<[usize; 2]>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::artifact(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::artifact(path, e))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_sidecar(path: &Path) -> Result<Option<MatrixSidecar>> {
    let side = sidecar_path(path);
    if side.exists() {
        read_json(&side).map(Some)
    } else {
        Ok(None)
    }
}

/// Reads a matrix as stored, without applying any mask. Raw files take
/// their dimensions from the sidecar.
pub fn load_matrix(path: &Path, format: MatrixFormat) -> Result<SnapshotMatrix> {
    match format {
        MatrixFormat::Csv => {
            let bytes = read_bytes(path)?;
            let text = std::str::from_utf8(&bytes).map_err(|e| Error::artifact(path, e))?;
            parse_csv(text).map_err(|e| Error::load(path, e))
        }
        MatrixFormat::RawF64 => {
            let side = read_sidecar(path)?
                .ok_or_else(|| Error::artifact(path, format!("missing sidecar {}", sidecar_path(path).display())))?;
            let bytes = read_bytes(path)?;
            decode_raw_f64(&bytes, side.m, side.n).map_err(|e| Error::load(path, e))
        }
    }
}

/// Reads a matrix and applies the grid shape and valid-mask named in its
/// sidecar, if any.
pub fn load_dataset(path: &Path, format: MatrixFormat) -> Result<SnapshotMatrix> {
    let mut data = load_matrix(path, format)?;
    let Some(side) = read_sidecar(path)? else {
        return Ok(data);
    };
    if side.m != data.raw_dim() || side.n != data.len() {
        return Err(Error::artifact(
            path,
            format!(
                "sidecar declares {}x{} but the file holds {}x{}",
                side.m,
                side.n,
                data.raw_dim(),
                data.len()
            ),
        ));
    }
    if let Some([rows, cols]) = side.grid_shape {
        data = data.with_grid_shape(rows, cols).map_err(|e| Error::load(path, e))?;
    }
    if let Some(mask_path) = &side.mask_path {
        let mask_path = resolve_relative(path, mask_path);
        let mask = load_mask(&mask_path)?;
        data = data.apply_valid_mask(&mask).map_err(|e| Error::load(&mask_path, e))?;
    }
    Ok(data)
}

fn resolve_relative(anchor: &Path, name: &str) -> PathBuf {
    let p = Path::new(name);
    if p.is_absolute() {
        return p.to_path_buf();
    }
    anchor.parent().map_or_else(|| p.to_path_buf(), |dir| dir.join(p))
}

fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned())
}

/// Stores a dataset in its raw (unmasked) layout. Masked rows are written
/// as zeros and the mask goes to `<file>.mask`. A sidecar is always written.
pub fn save_dataset(data: &SnapshotMatrix, path: &Path, format: MatrixFormat) -> Result<()> {
    let raw = raw_values(data)?;
    match format {
        MatrixFormat::Csv => write_bytes(path, csv_text(&raw).as_bytes())?,
        MatrixFormat::RawF64 => write_bytes(path, &encode_f64_le(raw.as_slice()))?,
    }
    let mask_path = Layout::of(data).save_mask_beside(path)?;
    let side = MatrixSidecar {
        m: raw.rows(),
        n: raw.cols(),
        mask_path,
        grid_shape: data.grid_shape().map(|(r, c)| [r, c]),
    };
    write_json(&sidecar_path(path), &side)
}

fn raw_values(data: &SnapshotMatrix) -> Result<Matrix> {
    if data.valid_mask().is_none() {
        return Ok(data.values().clone());
    }
    let mut raw = Matrix::zeros(data.raw_dim(), data.len());
    for j in 0..data.len() {
        raw.col_mut(j).copy_from_slice(&data.scatter(data.column(j), 0.0)?);
    }
    Ok(raw)
}

/// One line per state entry, one comma-separated value per snapshot.
/// Values use Rust's shortest round-trip formatting.
pub fn csv_text(x: &Matrix) -> String {
    let mut out = String::with_capacity(x.rows() * x.cols() * 12);
    for i in 0..x.rows() {
        for j in 0..x.cols() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{:?}", x.get(i, j));
        }
        out.push('\n');
    }
    out
}

/// Masks are text files with one `0` or `1` per line.
pub fn load_mask(path: &Path) -> Result<Vec<bool>> {
    let bytes = read_bytes(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Error::artifact(path, e))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, l)| match l {
            "1" => Ok(true),
            "0" => Ok(false),
            other => Err(Error::artifact(path, format!("line {}: expected 0 or 1, got `{other}`", i + 1))),
        })
        .collect()
}

pub fn save_mask(path: &Path, mask: &[bool]) -> Result<()> {
    let text: String = mask.iter().map(|&b| if b { "1\n" } else { "0\n" }).collect();
    write_bytes(path, text.as_bytes())
}

/// Grid placement of a state vector: which raw cells are valid and how
/// they tile a 2-D grid.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Layout {
    pub grid_shape: Option<(usize, usize)>,
    pub valid_mask: Option<Vec<bool>>,
    row_map: Option<Vec<usize>>,
}

impl Layout {
    pub fn new(grid_shape: Option<(usize, usize)>, valid_mask: Option<Vec<bool>>) -> Self {
        let row_map = valid_mask
            .as_ref()
            .map(|m| m.iter().enumerate().filter(|(_, &k)| k).map(|(i, _)| i).collect());
        Layout {
            grid_shape,
            valid_mask,
            row_map,
        }
    }

    pub fn of(data: &SnapshotMatrix) -> Self {
        Layout::new(data.grid_shape(), data.valid_mask().map(<[bool]>::to_vec))
    }

    /// Raw index of compact entry `k`.
    pub fn raw_index(&self, k: usize) -> usize {
        self.row_map.as_ref().map_or(k, |map| map[k])
    }

    /// Number of valid entries, if a mask fixes it.
    pub fn compact_dim(&self) -> Option<usize> {
        self.row_map.as_ref().map(Vec::len)
    }

    /// `(row, col)` on the grid of compact entry `k`.
    pub fn coordinates(&self, k: usize) -> Option<(usize, usize)> {
        let (_, cols) = self.grid_shape?;
        let raw = self.raw_index(k);
        Some((raw / cols, raw % cols))
    }

    /// Writes the mask next to `path` as `<file>.mask` and returns the
    /// file name to record in a sidecar.
    pub(crate) fn save_mask_beside(&self, path: &Path) -> Result<Option<String>> {
        let Some(mask) = &self.valid_mask else {
            return Ok(None);
        };
        let mut p = path.as_os_str().to_owned();
        p.push(".mask");
        let p = PathBuf::from(p);
        save_mask(&p, mask)?;
        Ok(Some(file_name(&p)))
    }

    pub(crate) fn load_beside(path: &Path, grid_shape: Option<[usize; 2]>, mask_path: Option<&str>) -> Result<Self> {
        let mask = mask_path.map(|p| load_mask(&resolve_relative(path, p))).transpose()?;
        Ok(Layout::new(grid_shape.map(|[r, c]| (r, c)), mask))
    }
}

/// Gray level used for masked cells.
pub const PGM_MASKED: u8 = 128;
/// Gray level used for sensor markers on placement maps.
pub const PGM_MARKER: u8 = 255;

/// Scaling recorded next to every PGM as `<file>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PgmScale {
    pub rows: usize,
    pub cols: usize,
    /// Data value mapped to gray level 0.
    pub min: f64,
    /// Data value mapped to gray level `levels`.
    pub max: f64,
    pub levels: u8,
    pub masked_value: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marker_value: Option<u8>,
}

/// Writes a single snapshot as a binary PGM. `field` is in the dataset's
/// compact layout; masked cells render mid-gray, `markers` (compact
/// indices) render white, and the field is scaled linearly between its own
/// min and max.
pub fn write_pgm(path: &Path, layout: &Layout, field: &[f64], markers: &[usize]) -> Result<PgmScale> {
    let (rows, cols) = layout
        .grid_shape
        .ok_or_else(|| Error::artifact(path, "no grid shape to render"))?;
    let expected = layout.compact_dim().unwrap_or(rows * cols);
    if field.len() != expected {
        return Err(Error::artifact(
            path,
            format!("field has {} entries, the grid holds {expected}", field.len()),
        ));
    }
    let (min, max) = field
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let levels: u8 = if markers.is_empty() { 255 } else { 191 };
    let span = max - min;
    let level = |v: f64| -> u8 {
        if span > 0.0 {
            ((v - min) / span * levels as f64).round() as u8
        } else {
            0
        }
    };
    let mut pixels = vec![PGM_MASKED; rows * cols];
    for (k, &v) in field.iter().enumerate() {
        pixels[layout.raw_index(k)] = level(v);
    }
    for &k in markers {
        pixels[layout.raw_index(k)] = PGM_MARKER;
    }
    let mut bytes = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    bytes.extend_from_slice(&pixels);
    write_bytes(path, &bytes)?;
    let scale = PgmScale {
        rows,
        cols,
        min,
        max,
        levels,
        masked_value: PGM_MASKED,
        marker_value: (!markers.is_empty()).then_some(PGM_MARKER),
    };
    write_json(&sidecar_path(path), &scale)?;
    Ok(scale)
}

/// Parses a binary PGM written by [`write_pgm`] into `(cols, rows, pixels)`.
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = read_bytes(path)?;
    let bad = || Error::artifact(path, "not a binary PGM");
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad());
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad())?.to_string());
    }
    pos += 1;
    if fields[0] != "P5" {
        return Err(bad());
    }
    let cols: usize = fields[1].parse().map_err(|_| bad())?;
    let rows: usize = fields[2].parse().map_err(|_| bad())?;
    let pixels = bytes.get(pos..).ok_or_else(bad)?.to_vec();
    if pixels.len() != rows * cols {
        return Err(bad());
    }
    Ok((cols, rows, pixels))
}
