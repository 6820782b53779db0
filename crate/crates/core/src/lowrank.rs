//! Truncated POD bases and gappy-POD reconstruction from point measurements.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, Matrix};
use crate::placement::SensorSet;
use crate::rng::Fingerprint;
use crate::snapshots::SnapshotMatrix;

/// Condition estimate above which a coefficient fit is flagged.
pub const ILL_CONDITIONED: f64 = 1e12;
/// Largest deviation of `modesᵀ·modes` from the identity accepted on load.
pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// Leading left singular vectors of centered training data.
#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    modes: Matrix,
    singular_values: Vec<f64>,
    train_mean: Vec<f64>,
}

impl PodBasis {
    /// Assembles a basis from stored parts (e.g. a file on disk).
    pub fn from_parts(modes: Matrix, singular_values: Vec<f64>, train_mean: Vec<f64>) -> Result<Self> {
        check_dim("singular value count", modes.cols(), singular_values.len())?;
        check_dim("train mean length", modes.rows(), train_mean.len())?;
        if modes.cols() == 0 || modes.cols() > modes.rows() {
            return Err(Error::invalid(format!(
                "basis rank {} must be in [1, {}]",
                modes.cols(),
                modes.rows()
            )));
        }
        if singular_values.windows(2).any(|w| w[0] < w[1]) || singular_values.iter().any(|&s| !(s >= 0.0)) {
            return Err(Error::invalid("singular values must be non-negative and non-increasing"));
        }
        let r = modes.cols();
        for i in 0..r {
            for j in i..r {
                let want = if i == j { 1.0 } else { 0.0 };
                let got = linalg::dot(modes.col(i), modes.col(j));
                if !((got - want).abs() <= ORTHONORMAL_TOL) {
                    return Err(Error::invalid(format!(
                        "modes {i} and {j} have inner product {got}, expected {want}"
                    )));
                }
            }
        }
        Ok(PodBasis {
            modes,
            singular_values,
            train_mean,
        })
    }

    /// `m × r` matrix of orthonormal modes.
    pub fn modes(&self) -> &Matrix {
        &self.modes
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn train_mean(&self) -> &[f64] {
        &self.train_mean
    }

    pub fn rank(&self) -> usize {
        self.modes.cols()
    }

    pub fn dim(&self) -> usize {
        self.modes.rows()
    }

    /// Keeps the leading `r` modes.
    pub fn truncate(&self, r: usize) -> Result<PodBasis> {
        if r == 0 || r > self.rank() {
            return Err(Error::invalid(format!("cannot truncate rank {} basis to {r}", self.rank())));
        }
        Ok(PodBasis {
            modes: self.modes.leading_cols(r),
            singular_values: self.singular_values[..r].to_vec(),
            train_mean: self.train_mean.clone(),
        })
    }

    pub fn fingerprint(&self) -> u64 {
        Fingerprint::new()
            .u64(self.dim() as u64)
            .u64(self.rank() as u64)
            .f64s(self.modes.as_slice())
            .f64s(&self.singular_values)
            .f64s(&self.train_mean)
            .finish()
    }
}

/// Computes the rank-`r` POD basis of already-centered training snapshots.
///
/// `train_mean` is the mean the caller removed; it is stored so that
/// reconstructions can be shifted back. Each mode is signed so that its
/// largest-magnitude entry is positive.
pub fn pod_basis(x_centered: &SnapshotMatrix, r: usize, train_mean: &[f64]) -> Result<PodBasis> {
    let (m, n) = (x_centered.dim(), x_centered.len());
    if r == 0 || r > m.min(n) {
        return Err(Error::invalid(format!("rank {r} must be in [1, min(m, N)] = [1, {}]", m.min(n))));
    }
    check_dim("train mean length", m, train_mean.len())?;
    let dec = linalg::svd(x_centered.values(), Some(r))?;
    let mut modes = dec.u;
    for j in 0..r {
        let col = modes.col_mut(j);
        let mut best = 0;
        for (i, v) in col.iter().enumerate() {
            // first index wins among equal magnitudes
            if v.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            for v in col.iter_mut() {
                *v = -*v;
            }
        }
    }
    PodBasis::from_parts(modes, dec.s[..r].to_vec(), train_mean.to_vec())
}

/// Centers `x_train` and computes its rank-`r` basis in one step.
pub fn pod_basis_from_raw(x_train: &SnapshotMatrix, r: usize) -> Result<PodBasis> {
    let (centered, mean) = x_train.mean_center();
    pod_basis(&centered, r, &mean)
}

/// POD coefficients with conditioning metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientFit {
    pub coefficients: Vec<f64>,
    /// Condition estimate of the sensed block `ΦΨ_r`.
    pub condition: f64,
    pub ill_conditioned: bool,
}

/// Solves for POD coefficients from measurements at `sensors`.
///
/// With as many sensors as modes this is an exact solve; with more it is the
/// least-squares (pseudoinverse) solution.
pub fn fit_coefficients(basis: &PodBasis, sensors: &SensorSet, s: &[f64]) -> Result<CoefficientFit> {
    check_dim("sensor state dimension", basis.dim(), sensors.m())?;
    check_dim("measurement length", sensors.len(), s.len())?;
    if sensors.len() < basis.rank() {
        return Err(Error::invalid(format!(
            "need at least r = {} sensors for a rank-{} basis, got {}",
            basis.rank(),
            basis.rank(),
            sensors.len()
        )));
    }
    let block = basis.modes.select_rows(sensors.indices());
    let (coefficients, condition) = linalg::lstsq(&block, s)?;
    Ok(CoefficientFit {
        coefficients,
        condition,
        ill_conditioned: !(condition <= ILL_CONDITIONED),
    })
}

/// `Ψ_r a`, optionally plus the training mean.
pub fn reconstruct(basis: &PodBasis, a: &[f64], add_mean: bool) -> Result<Vec<f64>> {
    check_dim("coefficient length", basis.rank(), a.len())?;
    let mut x = basis.modes.mul_vec(a)?;
    if add_mean {
        for (xi, m) in x.iter_mut().zip(&basis.train_mean) {
            *xi += m;
        }
    }
    Ok(x)
}

/// Orthogonal projection coefficients `Ψ_rᵀ x`.
pub fn project(basis: &PodBasis, x: &[f64]) -> Result<Vec<f64>> {
    basis.modes.tr_mul_vec(x)
}
