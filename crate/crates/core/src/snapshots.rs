//! Snapshot matrices: states stacked as columns, plus the operations that
//! prepare them for the placement and reconstruction stages.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{HouseholderQr, Matrix};
use crate::math::{exp, floor, powf, round, sin};
use crate::rng::rng_from_seed;

/// `m × N` state snapshots (rows are state entries, columns are samples).
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix {
    values: Matrix,
    valid_mask: Option<Vec<bool>>,
    row_map: Option<Vec<usize>>,
    grid_shape: Option<(usize, usize)>,
}

impl SnapshotMatrix {
    pub fn new(values: Matrix) -> Result<Self> {
        if values.rows() == 0 || values.cols() == 0 {
            return Err(Error::invalid(format!(
                "snapshot matrix must be non-empty, got {}x{}",
                values.rows(),
                values.cols()
            )));
        }
        if let Some(pos) = values.as_slice().iter().position(|v| !v.is_finite()) {
            let (row, col) = (pos % values.rows(), pos / values.rows());
            return Err(Error::Parse {
                row,
                col,
                message: "non-finite entry".into(),
            });
        }
        Ok(SnapshotMatrix {
            values,
            valid_mask: None,
            row_map: None,
            grid_shape: None,
        })
    }

    /// Attaches the `(rows, cols)` shape of the original field. The product
    /// must equal the raw (unmasked) state dimension.
    pub fn with_grid_shape(mut self, rows: usize, cols: usize) -> Result<Self> {
        check_dim("grid shape", self.raw_dim(), rows * cols)?;
        self.grid_shape = Some((rows, cols));
        Ok(self)
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    /// State dimension `m` (after masking).
    pub fn dim(&self) -> usize {
        self.values.rows()
    }

    /// Number of snapshots `N`.
    pub fn len(&self) -> usize {
        self.values.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// State dimension of the original grid, before any mask was applied.
    pub fn raw_dim(&self) -> usize {
        self.valid_mask.as_ref().map_or(self.dim(), Vec::len)
    }

    pub fn valid_mask(&self) -> Option<&[bool]> {
        self.valid_mask.as_deref()
    }

    pub fn row_map(&self) -> Option<&[usize]> {
        self.row_map.as_deref()
    }

    pub fn grid_shape(&self) -> Option<(usize, usize)> {
        self.grid_shape
    }

    pub fn column(&self, j: usize) -> &[f64] {
        self.values.col(j)
    }

    /// Same metadata, new values (same row count).
    pub fn with_values(&self, values: Matrix) -> Result<Self> {
        check_dim("snapshot rows", self.dim(), values.rows())?;
        let mut out = SnapshotMatrix::new(values)?;
        out.valid_mask = self.valid_mask.clone();
        out.row_map = self.row_map.clone();
        out.grid_shape = self.grid_shape;
        Ok(out)
    }

    pub fn select_columns(&self, columns: &[usize]) -> Result<Self> {
        if let Some(&bad) = columns.iter().find(|&&c| c >= self.len()) {
            return Err(Error::invalid(format!("column {bad} out of range")));
        }
        self.with_values(self.values.select_cols(columns))
    }

    /// Removes rows where `mask` is false and records the surviving original
    /// indices in `row_map`.
    pub fn apply_valid_mask(&self, mask: &[bool]) -> Result<Self> {
        check_dim("valid mask length", self.dim(), mask.len())?;
        let keep: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        if keep.is_empty() {
            return Err(Error::invalid("valid mask removes every row"));
        }
        // compose with an existing mask so row_map always points at the raw grid
        let (full_mask, row_map) = match (&self.valid_mask, &self.row_map) {
            (Some(prev), Some(prev_map)) => {
                let mut full = vec![false; prev.len()];
                let map: Vec<usize> = keep.iter().map(|&i| prev_map[i]).collect();
                for &o in &map {
                    full[o] = true;
                }
                (full, map)
            }
            _ => (mask.to_vec(), keep.clone()),
        };
        let values = self.values.select_rows(&keep);
        Ok(SnapshotMatrix {
            values,
            valid_mask: Some(full_mask),
            row_map: Some(row_map),
            grid_shape: self.grid_shape,
        })
    }

    /// Expands a compacted state vector onto the raw grid, writing `fill` at
    /// masked positions.
    pub fn scatter(&self, compact: &[f64], fill: f64) -> Result<Vec<f64>> {
        check_dim("compact state length", self.dim(), compact.len())?;
        match &self.row_map {
            None => Ok(compact.to_vec()),
            Some(map) => {
                let mut out = vec![fill; self.raw_dim()];
                for (&o, &v) in map.iter().zip(compact) {
                    out[o] = v;
                }
                Ok(out)
            }
        }
    }

    /// Inverse of [`scatter`](Self::scatter): keeps only the valid entries.
    pub fn gather(&self, raw: &[f64]) -> Result<Vec<f64>> {
        check_dim("raw state length", self.raw_dim(), raw.len())?;
        Ok(match &self.row_map {
            None => raw.to_vec(),
            Some(map) => map.iter().map(|&o| raw[o]).collect(),
        })
    }

    /// Per-row mean over snapshots.
    pub fn row_mean(&self) -> Vec<f64> {
        let n = self.len() as f64;
        let mut mean = vec![0.0; self.dim()];
        for c in self.values.columns() {
            for (m, v) in mean.iter_mut().zip(c) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        mean
    }

    /// Returns the centered snapshots and the per-row mean that was removed.
    pub fn mean_center(&self) -> (SnapshotMatrix, Vec<f64>) {
        let mean = self.row_mean();
        let centered = self
            .center_with(&mean)
            .expect("mean has the state dimension");
        (centered, mean)
    }

    /// Subtracts a given mean (e.g. a training mean) from every column.
    pub fn center_with(&self, mean: &[f64]) -> Result<SnapshotMatrix> {
        check_dim("mean length", self.dim(), mean.len())?;
        let mut values = self.values.clone();
        for j in 0..values.cols() {
            for (v, m) in values.col_mut(j).iter_mut().zip(mean) {
                *v -= m;
            }
        }
        let mut out = self.clone();
        out.values = values;
        Ok(out)
    }

    /// Adds i.i.d. Gaussian noise with `σ = max|x| · 10^(−psnr/20)`.
    pub fn add_noise(&self, spec: &NoiseSpec) -> Result<SnapshotMatrix> {
        spec.validate()?;
        if spec.psnr_db.is_infinite() {
            return Ok(self.clone());
        }
        let sigma = spec.sigma_for(self.values.max_abs());
        let mut rng = rng_from_seed(spec.seed);
        let mut values = self.values.clone();
        for v in values.as_mut_slice() {
            let z: f64 = rng.sample(StandardNormal);
            *v += sigma * z;
        }
        let mut out = self.clone();
        out.values = values;
        Ok(out)
    }

    /// Column indices `(train, test)` for a split, both ascending.
    pub fn split_indices(&self, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
        let n = self.len();
        if spec.train_count == 0 || spec.train_count >= n {
            return Err(Error::invalid(format!(
                "train_count must be in [1, {n}), got {}",
                spec.train_count
            )));
        }
        let mut cols: Vec<usize> = (0..n).collect();
        if spec.strategy == SplitStrategy::Random {
            let mut rng = rng_from_seed(spec.seed);
            cols.shuffle(&mut rng);
        }
        let mut train = cols[..spec.train_count].to_vec();
        let mut test = cols[spec.train_count..].to_vec();
        train.sort_unstable();
        test.sort_unstable();
        Ok((train, test))
    }

    pub fn split(&self, spec: &SplitSpec) -> Result<(SnapshotMatrix, SnapshotMatrix)> {
        let (train, test) = self.split_indices(spec)?;
        Ok((self.select_columns(&train)?, self.select_columns(&test)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NoiseSpec {
    /// Peak signal-to-noise ratio in decibels; `f64::INFINITY` means no noise.
    pub psnr_db: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if self.psnr_db.is_nan() || self.psnr_db <= 0.0 {
            return Err(Error::invalid(format!(
                "psnr_db must be positive or infinite, got {}",
                self.psnr_db
            )));
        }
        Ok(())
    }

    /// Noise standard deviation for data whose peak magnitude is `peak`.
    pub fn sigma_for(&self, peak: f64) -> f64 {
        if self.psnr_db.is_infinite() {
            0.0
        } else {
            peak * powf(10.0, -self.psnr_db / 20.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SplitStrategy {
    #[default]
    Random,
    Leading,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SplitSpec {
    pub train_count: usize,
    pub seed: u64,
    pub strategy: SplitStrategy,
}

/// Parses CSV text with one state entry per row and one snapshot per column.
pub fn parse_csv(text: &str) -> Result<SnapshotMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for (c, field) in line.split(',').enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                row: r,
                col: c,
                message: format!("not a number: {:?}", field.trim()),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: r,
                    col: c,
                    message: "non-finite entry".into(),
                });
            }
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    row: r,
                    col: row.len().min(first.len()),
                    message: format!("ragged row: expected {} fields, got {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Format("empty CSV input".into()));
    }
    let (m, n) = (rows.len(), rows[0].len());
    let mut values = Matrix::zeros(m, n);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            values.set(i, j, v);
        }
    }
    SnapshotMatrix::new(values)
}

/// Decodes little-endian `f64` values stored column by column.
pub fn decode_raw_f64(bytes: &[u8], m: usize, n: usize) -> Result<SnapshotMatrix> {
    let values = decode_f64_le(bytes)?;
    if values.len() != m * n {
        return Err(Error::Format(format!(
            "raw-f64 payload holds {} values but the declared shape is {m}x{n}",
            values.len()
        )));
    }
    SnapshotMatrix::new(Matrix::from_col_major(m, n, values)?)
}

pub fn decode_f64_le(bytes: &[u8]) -> Result<Vec<f64>> {
    if !bytes.len().is_multiple_of(8) {
        return Err(Error::Format(format!(
            "raw-f64 payload length {} is not a multiple of 8",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

pub fn encode_f64_le(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

/// A single traveling wave component.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Wave {
    pub amplitude: f64,
    /// Wavenumbers along the grid rows and columns (cycles per grid length).
    pub k_row: f64,
    pub k_col: f64,
    /// Temporal frequency (cycles per unit time).
    pub omega: f64,
    pub phase: f64,
}

/// Separable Gaussian amplitude window in normalized grid coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Envelope {
    pub center: (f64, f64),
    pub width: (f64, f64),
}

impl Envelope {
    fn at(&self, u: f64, v: f64) -> f64 {
        let a = (u - self.center.0) / self.width.0;
        let b = (v - self.center.1) / self.width.1;
        exp(-0.5 * (a * a + b * b))
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct TravelingWaveParams {
    pub rows: usize,
    pub cols: usize,
    pub snapshots: usize,
    /// Number of wave components drawn from the seed when `waves` is empty.
    #[cfg_attr(feature = "serde", serde(default))]
    pub components: usize,
    pub amplitude: f64,
    /// Explicit components; overrides the random draw when non-empty.
    #[cfg_attr(feature = "serde", serde(default))]
    pub waves: Vec<Wave>,
    /// Time between snapshots.
    pub dt: f64,
    /// Optional spatial window multiplying every component. Keeps the rank
    /// bound because the window is separable from time.
    #[cfg_attr(feature = "serde", serde(default))]
    pub envelope: Option<Envelope>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct RankRandomParams {
    pub m: usize,
    pub snapshots: usize,
    pub rank: usize,
    /// Largest singular value; the others decrease linearly to `amplitude / rank`.
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct VortexParams {
    pub rows: usize,
    pub cols: usize,
    pub snapshots: usize,
    /// Blobs per row of the street; signs alternate.
    pub blobs: usize,
    pub amplitude: f64,
    /// Blob radius as a fraction of the grid width.
    pub width: f64,
    /// Snapshots per full pass across the domain.
    pub period: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum Generator {
    TravelingWave(TravelingWaveParams),
    RankRRandom(RankRandomParams),
    VortexLike(VortexParams),
}

fn check_grid(rows: usize, cols: usize, snapshots: usize) -> Result<()> {
    if rows == 0 || cols == 0 || snapshots == 0 {
        return Err(Error::invalid(format!(
            "grid {rows}x{cols} with {snapshots} snapshots must be non-empty"
        )));
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::invalid(format!("{name} must be positive and finite, got {v}")));
    }
    Ok(())
}

/// Generates a synthetic snapshot matrix. Pure function of `(generator, seed)`.
pub fn gen_synthetic(generator: &Generator, seed: u64) -> Result<SnapshotMatrix> {
    match generator {
        Generator::TravelingWave(p) => traveling_wave(p, seed),
        Generator::RankRRandom(p) => rank_r_random(p, seed),
        Generator::VortexLike(p) => vortex_like(p, seed),
    }
}

impl TravelingWaveParams {
    /// The components actually used: explicit waves, or `components` waves
    /// drawn from the seed with integer wavenumbers and frequencies.
    pub fn resolve_waves(&self, seed: u64) -> Vec<Wave> {
        if !self.waves.is_empty() {
            return self.waves.clone();
        }
        let mut rng = rng_from_seed(seed);
        (0..self.components)
            .map(|j| Wave {
                amplitude: self.amplitude / (j + 1) as f64,
                k_row: rng.random_range(1..=3) as f64,
                k_col: rng.random_range(1..=4) as f64,
                omega: (j + 1) as f64,
                phase: rng.random_range(0.0..1.0),
            })
            .collect()
    }
}

fn traveling_wave(p: &TravelingWaveParams, seed: u64) -> Result<SnapshotMatrix> {
    check_grid(p.rows, p.cols, p.snapshots)?;
    check_positive("dt", p.dt)?;
    if p.waves.is_empty() {
        if p.components == 0 {
            return Err(Error::invalid("traveling wave needs at least one component"));
        }
        check_positive("amplitude", p.amplitude)?;
    }
    if let Some(env) = &p.envelope {
        check_positive("envelope width", env.width.0)?;
        check_positive("envelope width", env.width.1)?;
    }
    let waves = p.resolve_waves(seed);
    let m = p.rows * p.cols;
    let mut values = Matrix::zeros(m, p.snapshots);
    for k in 0..p.snapshots {
        let t = k as f64 * p.dt;
        let col = values.col_mut(k);
        for i in 0..p.rows {
            let u = i as f64 / p.rows as f64;
            for j in 0..p.cols {
                let v = j as f64 / p.cols as f64;
                let mut x = 0.0;
                for w in &waves {
                    x += w.amplitude * sin(2.0 * PI * (w.k_row * u + w.k_col * v - w.omega * t + w.phase));
                }
                if let Some(env) = &p.envelope {
                    x *= env.at(u, v);
                }
                col[i * p.cols + j] = x;
            }
        }
    }
    SnapshotMatrix::new(values)?.with_grid_shape(p.rows, p.cols)
}

/// `m × r` matrix with orthonormal columns from a seeded Gaussian draw.
pub(crate) fn random_orthonormal(m: usize, r: usize, rng: &mut crate::rng::Rng) -> Result<Matrix> {
    let data = (0..m * r).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let g = Matrix::from_col_major(m, r, data)?;
    let qr = HouseholderQr::new(&g)?;
    let mut q = Matrix::zeros(m, r);
    for j in 0..r {
        q.set(j, j, 1.0);
    }
    qr.apply_q(&mut q);
    Ok(q)
}

fn rank_r_random(p: &RankRandomParams, seed: u64) -> Result<SnapshotMatrix> {
    if p.rank == 0 || p.rank > p.m.min(p.snapshots) {
        return Err(Error::invalid(format!(
            "rank {} must be in [1, min(m, N)] = [1, {}]",
            p.rank,
            p.m.min(p.snapshots)
        )));
    }
    check_positive("amplitude", p.amplitude)?;
    let mut rng = rng_from_seed(seed);
    let left = random_orthonormal(p.m, p.rank, &mut rng)?;
    let right = random_orthonormal(p.snapshots, p.rank, &mut rng)?;
    let r = p.rank as f64;
    let mut scaled = left;
    for j in 0..p.rank {
        let sigma = p.amplitude * (r - j as f64) / r;
        for v in scaled.col_mut(j) {
            *v *= sigma;
        }
    }
    let mut values = Matrix::zeros(p.m, p.snapshots);
    crate::linalg::gemm(1.0, &scaled, false, &right, true, 0.0, &mut values);
    SnapshotMatrix::new(values)
}

fn vortex_like(p: &VortexParams, seed: u64) -> Result<SnapshotMatrix> {
    check_grid(p.rows, p.cols, p.snapshots)?;
    if p.blobs == 0 {
        return Err(Error::invalid("vortex street needs at least one blob"));
    }
    check_positive("amplitude", p.amplitude)?;
    check_positive("width", p.width)?;
    check_positive("period", p.period)?;
    let mut rng = rng_from_seed(seed);
    let offset: f64 = rng.random_range(0.0..1.0);
    let m = p.rows * p.cols;
    let mut values = Matrix::zeros(m, p.snapshots);
    let spacing = 1.0 / p.blobs as f64;
    let w2 = 2.0 * p.width * p.width;
    for k in 0..p.snapshots {
        let shift = offset + k as f64 / p.period;
        let col = values.col_mut(k);
        for b in 0..(2 * p.blobs) {
            // upper and lower rows of the street, staggered by half a spacing
            let upper = b % 2 == 0;
            let sign = if upper { 1.0 } else { -1.0 };
            let yc = if upper { 0.4 } else { 0.6 };
            let xc0 = (b / 2) as f64 * spacing + if upper { 0.0 } else { 0.5 * spacing };
            let xc = xc0 + shift - floor(xc0 + shift);
            for i in 0..p.rows {
                let dy = i as f64 / p.rows as f64 - yc;
                for j in 0..p.cols {
                    let mut dx = j as f64 / p.cols as f64 - xc;
                    dx -= round(dx);
                    col[i * p.cols + j] += sign * p.amplitude * exp(-(dx * dx + dy * dy) / w2);
                }
            }
        }
    }
    SnapshotMatrix::new(values)?.with_grid_shape(p.rows, p.cols)
}

/// Formats a short description of a generator for logs and fingerprints.
pub fn describe(generator: &Generator) -> alloc::string::String {
    match generator {
        Generator::TravelingWave(p) => format!("traveling_wave {}x{} N={}", p.rows, p.cols, p.snapshots),
        Generator::RankRRandom(p) => format!("rank_r_random m={} N={} r={}", p.m, p.snapshots, p.rank),
        Generator::VortexLike(p) => format!("vortex_like {}x{} N={}", p.rows, p.cols, p.snapshots),
    }
}
