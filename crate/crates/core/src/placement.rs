//! Sensor selection and the sensing operator.
//!
//! A sensing matrix `Φ` picks `n` rows of the `m × m` identity; it is kept
//! implicitly as the ordered list of selected indices in [`SensorSet`].

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, norm2, Matrix};
use crate::lowrank::PodBasis;
use crate::math::sqrt;
use crate::rng::rng_from_seed;

/// Relative tolerance under which two residual norms count as tied.
pub const PIVOT_TIE_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SensorMethod {
    QrPivot,
    Random,
    Pruned,
}

impl SensorMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            SensorMethod::QrPivot => "qr_pivot",
            SensorMethod::Random => "random",
            SensorMethod::Pruned => "pruned",
        }
    }
}

/// Ordered, distinct measurement indices into a state of dimension `m`.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SensorSet {
    indices: Vec<usize>,
    m: usize,
    method: SensorMethod,
    /// RNG seed for random or pruned sets, basis fingerprint for QR sets.
    seed: Option<u64>,
}

impl SensorSet {
    pub fn new(indices: Vec<usize>, m: usize, method: SensorMethod, seed: Option<u64>) -> Result<Self> {
        let mut seen = vec![false; m];
        for &i in &indices {
            if i >= m {
                return Err(Error::invalid(format!("sensor index {i} out of range for m = {m}")));
            }
            if seen[i] {
                return Err(Error::invalid(format!("duplicate sensor index {i}")));
            }
            seen[i] = true;
        }
        Ok(SensorSet {
            indices,
            m,
            method,
            seed,
        })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn method(&self) -> SensorMethod {
        self.method
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Re-checks the invariants, e.g. after deserialization.
    pub fn validate(&self) -> Result<()> {
        SensorSet::new(self.indices.clone(), self.m, self.method, self.seed).map(|_| ())
    }
}

/// First pivots of a column-pivoted QR factorization.
#[derive(Debug, Clone, PartialEq)]
pub struct PivotedQr {
    /// Selected column indices in pivot order.
    pub pivots: Vec<usize>,
    /// `|r_ii|` for each pivot step; non-increasing.
    pub diag: Vec<f64>,
}

/// Householder QR with column pivoting on `a`, stopping after `steps` pivots.
///
/// Each step picks the remaining column with the largest residual norm; ties
/// within [`PIVOT_TIE_RTOL`] go to the lowest original column index. Columns
/// listed in `forbidden` are never chosen. Residual norms are down-dated and
/// recomputed once cancellation would cost more than half the digits.
pub fn pivoted_qr(a: &Matrix, steps: usize, forbidden: &[usize]) -> Result<PivotedQr> {
    let (rows, cols) = (a.rows(), a.cols());
    let mut allowed = vec![true; cols];
    for &f in forbidden {
        if f < cols {
            allowed[f] = false;
        }
    }
    let candidates = allowed.iter().filter(|&&x| x).count();
    if steps > rows.min(candidates) {
        return Err(Error::invalid(format!(
            "cannot take {steps} pivots from a {rows}x{cols} matrix with {candidates} allowed columns"
        )));
    }
    let mut work = a.clone();
    let mut norms: Vec<f64> = work.columns().map(norm2).collect();
    let mut reference = norms.clone();
    let mut taken = vec![false; cols];
    let mut pivots = Vec::with_capacity(steps);
    let mut diag = Vec::with_capacity(steps);
    let tol3z = sqrt(f64::EPSILON);

    for k in 0..steps {
        let max = (0..cols)
            .filter(|&j| allowed[j] && !taken[j])
            .map(|j| norms[j])
            .fold(f64::NEG_INFINITY, f64::max);
        let pivot = (0..cols)
            .find(|&j| allowed[j] && !taken[j] && norms[j] >= max * (1.0 - PIVOT_TIE_RTOL))
            .expect("at least one candidate column");
        taken[pivot] = true;
        pivots.push(pivot);

        // Householder reflector zeroing rows k+1.. of the pivot column.
        let col = work.col_mut(pivot);
        let x = &mut col[k..];
        let alpha = norm2(x);
        diag.push(alpha);
        if alpha == 0.0 {
            continue;
        }
        let beta = if x[0] >= 0.0 { -alpha } else { alpha };
        let tau = (beta - x[0]) / beta;
        let scale = 1.0 / (x[0] - beta);
        for v in &mut x[1..] {
            *v *= scale;
        }
        x[0] = beta;
        let mut v = vec![1.0; rows - k];
        v[1..].copy_from_slice(&x[1..]);

        for j in 0..cols {
            if taken[j] || !allowed[j] {
                continue;
            }
            let cj = &mut work.col_mut(j)[k..];
            let f = tau * dot(&v, cj);
            for (c, vi) in cj.iter_mut().zip(&v) {
                *c -= f * vi;
            }
            if norms[j] != 0.0 {
                let ratio = cj[0].abs() / norms[j];
                let temp = (1.0 - ratio * ratio).max(0.0);
                let rel = norms[j] / reference[j];
                if temp * rel * rel <= tol3z {
                    let fresh = norm2(&cj[1..]);
                    norms[j] = fresh;
                    reference[j] = fresh;
                } else {
                    norms[j] *= sqrt(temp);
                }
            }
        }
    }
    Ok(PivotedQr { pivots, diag })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QrOptions {
    /// Permit `n < r` (ablation only: the sensed block is then not square).
    pub allow_fewer: bool,
    pub forbidden: Vec<usize>,
}

/// Greedy sensor selection: the first `n` column pivots of `Ψ_rᵀ`.
///
/// Requires `n == basis.rank()`.
pub fn qr_pivots(basis: &PodBasis, n: usize) -> Result<SensorSet> {
    qr_pivots_with(basis, n, &QrOptions::default())
}

pub fn qr_pivots_with(basis: &PodBasis, n: usize, opts: &QrOptions) -> Result<SensorSet> {
    let r = basis.rank();
    if n == 0 || n > r || (n < r && !opts.allow_fewer) {
        return Err(Error::invalid(format!(
            "QR placement takes n = r sensors (r = {r}), got n = {n}"
        )));
    }
    let qr = pivoted_qr(&basis.modes().transpose(), n, &opts.forbidden)?;
    SensorSet::new(qr.pivots, basis.dim(), SensorMethod::QrPivot, Some(basis.fingerprint()))
}

/// `n` distinct indices drawn uniformly without replacement from `[0, m)`
/// minus `forbidden`, in draw order.
pub fn random_sensors(m: usize, n: usize, seed: u64, forbidden: &[usize]) -> Result<SensorSet> {
    let mut allowed = vec![true; m];
    for &f in forbidden {
        if f < m {
            allowed[f] = false;
        }
    }
    let mut pool: Vec<usize> = (0..m).filter(|&i| allowed[i]).collect();
    if n > pool.len() {
        return Err(Error::invalid(format!(
            "cannot draw {n} sensors from {} allowed indices",
            pool.len()
        )));
    }
    let mut rng = rng_from_seed(seed);
    let (drawn, _) = pool.partial_shuffle(&mut rng, n);
    SensorSet::new(drawn.to_vec(), m, SensorMethod::Random, Some(seed))
}

/// `s = Φx`: the state entries at the sensor indices, in sensor order.
pub fn sample(x: &[f64], sensors: &SensorSet) -> Result<Vec<f64>> {
    check_dim("state length", sensors.m(), x.len())?;
    Ok(sensors.indices().iter().map(|&i| x[i]).collect())
}

/// Measurements for every column of a snapshot matrix (`n × N`).
pub fn sample_columns(x: &Matrix, sensors: &SensorSet) -> Result<Matrix> {
    check_dim("state length", sensors.m(), x.rows())?;
    Ok(x.select_rows(sensors.indices()))
}

/// `Φᵀs`: places measurements back at their indices, `fill` elsewhere.
pub fn scatter(s: &[f64], sensors: &SensorSet, fill: f64) -> Result<Vec<f64>> {
    check_dim("measurement length", sensors.len(), s.len())?;
    let mut x = vec![fill; sensors.m()];
    for (&i, &v) in sensors.indices().iter().zip(s) {
        x[i] = v;
    }
    Ok(x)
}
