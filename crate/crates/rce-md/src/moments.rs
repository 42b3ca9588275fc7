//! Trigonometric moments: storage, estimation from lattice data, and the
//! structured moment matrix.
//!
//! A moment sequence is a Hermitian family `c_k` over Ω with
//! `c_{-k} = conj(c_k)`; only the canonical half-set is stored. The moment
//! matrix has entry `(i, j) = c_{κ(i)−κ(j)}`, a d-level Toeplitz-block
//! structure, and its positive definiteness is exactly the existence
//! criterion for a strictly positive density matching `c`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::indexing::{IndexingError, MultiIndexSet};

#[derive(Debug, Error)]
pub enum MomentError {
    #[error("need more than n = {n} samples per axis, got N = {n_samples}")]
    InsufficientData { n: usize, n_samples: usize },
    #[error("neither the unbiased nor the biased statistic yields a positive definite moment matrix")]
    DegenerateData,
    #[error("zeroth moment must be real, got imaginary part {im:e}")]
    NonRealZerothMoment { im: f64 },
    #[error("expected {expected} half-set values, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error(transparent)]
    Indexing(#[from] IndexingError),
}

/// Hermitian moment family over Ω, stored on the canonical half-set.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSequence {
    omega: MultiIndexSet,
    values: Vec<Complex64>,
}

impl MomentSequence {
    pub fn new(omega: MultiIndexSet, mut values: Vec<Complex64>) -> Result<Self, MomentError> {
        if values.len() != omega.half_len() {
            return Err(MomentError::WrongLength { expected: omega.half_len(), got: values.len() });
        }
        let scale = values.iter().map(|v| v.norm()).fold(1.0, f64::max);
        if values[0].im.abs() > 1e-9 * scale {
            return Err(MomentError::NonRealZerothMoment { im: values[0].im });
        }
        values[0].im = 0.0;
        Ok(Self { omega, values })
    }

    pub fn zeros(omega: MultiIndexSet) -> Self {
        let values = vec![Complex64::ZERO; omega.half_len()];
        Self { omega, values }
    }

    pub fn omega(&self) -> &MultiIndexSet {
        &self.omega
    }

    /// Half-set values in canonical order (`0` first).
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn zeroth(&self) -> f64 {
        self.values[0].re
    }

    pub fn get(&self, k: &[i32]) -> Result<Complex64, IndexingError> {
        let (pos, conj) = self.omega.half_position(k)?;
        let v = self.values[pos];
        Ok(if conj { v.conj() } else { v })
    }

    /// All values, densely indexed by the box offset of `k`.
    pub fn box_values(&self) -> Vec<Complex64> {
        self.omega
            .members()
            .map(|k| self.get(&k).expect("member of own box"))
            .collect()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            omega: self.omega.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// Max-norm of the difference over the full box.
    pub fn linf_distance(&self, other: &Self) -> f64 {
        assert_eq!(self.omega, other.omega);
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Complex sample field on the lattice box `{0..N-1}^d`, row-major with
/// axis 1 slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeField {
    d: usize,
    n_axis: usize,
    values: Vec<Complex64>,
}

impl LatticeField {
    pub fn new(d: usize, n_axis: usize, values: Vec<Complex64>) -> Result<Self, MomentError> {
        let expected = n_axis.pow(d as u32);
        if values.len() != expected {
            return Err(MomentError::WrongLength { expected, got: values.len() });
        }
        Ok(Self { d, n_axis, values })
    }

    pub fn dimension(&self) -> usize {
        self.d
    }

    pub fn samples_per_axis(&self) -> usize {
        self.n_axis
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }
}

/// Lag sums `Σ_t y_t conj(y_{t+k})` over all positions where both endpoints
/// lie in the observation box, for every `k` in the half-set.
fn lag_sums(field: &LatticeField, omega: &MultiIndexSet) -> Vec<Complex64> {
    let n_axis = field.n_axis as i64;
    let d = field.d;
    // Strides of the row-major layout, axis 1 slowest.
    let mut strides = vec![1i64; d];
    for j in (0..d.saturating_sub(1)).rev() {
        strides[j] = strides[j + 1] * n_axis;
    }
    omega
        .half()
        .par_iter()
        .map(|k| {
            let delta: i64 = k.iter().zip(&strides).map(|(kj, s)| *kj as i64 * s).sum();
            let lo: Vec<i64> = k.iter().map(|kj| 0.max(-(*kj as i64))).collect();
            let hi: Vec<i64> = k.iter().map(|kj| n_axis - 0.max(*kj as i64)).collect();
            if lo.iter().zip(&hi).any(|(l, h)| l >= h) {
                return Complex64::ZERO;
            }
            let mut t = lo.clone();
            let mut acc = Complex64::ZERO;
            'outer: loop {
                let base: i64 = t.iter().zip(&strides).map(|(tj, s)| tj * s).sum();
                let y = &field.values;
                // Innermost axis is contiguous; sweep it directly.
                let row_lo = base - t[d - 1] + lo[d - 1];
                let row_len = hi[d - 1] - lo[d - 1];
                for off in 0..row_len {
                    let idx = (row_lo + off) as usize;
                    acc += y[idx] * y[(row_lo + off + delta) as usize].conj();
                }
                // Odometer over the outer axes.
                if d == 1 {
                    break;
                }
                let mut j = d - 2;
                loop {
                    t[j] += 1;
                    if t[j] < hi[j] {
                        break;
                    }
                    t[j] = lo[j];
                    if j == 0 {
                        break 'outer;
                    }
                    j -= 1;
                }
            }
            acc
        })
        .collect()
}

fn check_record(field: &LatticeField, omega: &MultiIndexSet) -> Result<(), MomentError> {
    if field.n_axis <= omega.order() {
        return Err(MomentError::InsufficientData { n: omega.order(), n_samples: field.n_axis });
    }
    Ok(())
}

/// Biased covariance estimate: lag sums normalized by `N^d`. Always yields a
/// positive semidefinite moment matrix.
pub fn estimate_biased(
    field: &LatticeField,
    omega: &MultiIndexSet,
) -> Result<MomentSequence, MomentError> {
    check_record(field, omega)?;
    let norm = 1.0 / field.values.len() as f64;
    let values = lag_sums(field, omega).into_iter().map(|s| s * norm).collect();
    MomentSequence::new(omega.clone(), values)
}

/// Unbiased covariance estimate: each lag normalized by its own pair count
/// `Π_j (N − |k_j|)`. Unbiased but not guaranteed positive definite.
pub fn estimate_unbiased(
    field: &LatticeField,
    omega: &MultiIndexSet,
) -> Result<MomentSequence, MomentError> {
    check_record(field, omega)?;
    let n_axis = field.n_axis;
    let values = lag_sums(field, omega)
        .into_iter()
        .zip(omega.half())
        .map(|(s, k)| {
            let pairs: usize = k.iter().map(|kj| n_axis - kj.unsigned_abs() as usize).product();
            s / pairs as f64
        })
        .collect();
    MomentSequence::new(omega.clone(), values)
}

/// The structured moment matrix `T_d` with entry `(i, j) = c_{κ(i)−κ(j)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentMatrix {
    size: usize,
    data: DMatrix<Complex64>,
}

impl MomentMatrix {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.data[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<Complex64> {
        &self.data
    }
}

pub fn assemble_moment_matrix(c: &MomentSequence) -> MomentMatrix {
    let kappa = c.omega().kappa();
    let size = kappa.len();
    let boxed = c.box_values();
    let omega = c.omega();
    let data = DMatrix::from_fn(size, size, |i, j| {
        let diff = kappa.pair_difference(i, j);
        boxed[omega.box_flat(&diff).expect("κ differences stay in Ω")]
    });
    MomentMatrix { size, data }
}

/// Outcome of the positive-definiteness check, with the extreme eigenvalues
/// kept for diagnostics.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PdReport {
    pub is_pd: bool,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
}

/// Relative eigenvalue tolerance of the PD test.
pub const PD_REL_TOL: f64 = 1e-10;

/// Eigenvalues of a Hermitian matrix via the real symmetric embedding
/// `[[X, -Y], [Y, X]]` of `Z = X + iY`, which carries each eigenvalue of `Z`
/// twice.
pub fn hermitian_eigenvalues(m: &DMatrix<Complex64>) -> Vec<f64> {
    let s = m.nrows();
    let embedded = DMatrix::<f64>::from_fn(2 * s, 2 * s, |i, j| {
        let (bi, bj) = (i / s, j / s);
        let z = m[(i % s, j % s)];
        match (bi, bj) {
            (0, 0) | (1, 1) => z.re,
            (0, 1) => -z.im,
            _ => z.im,
        }
    });
    let mut eig: Vec<f64> = SymmetricEigen::new(embedded).eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // Keep one copy of each doubled eigenvalue.
    eig.into_iter().step_by(2).collect()
}

/// Eigenvalue test for `T ≻ 0`: true iff the smallest eigenvalue exceeds
/// `PD_REL_TOL` times the largest magnitude.
pub fn is_positive_definite(t: &MomentMatrix) -> PdReport {
    let eig = hermitian_eigenvalues(&t.data);
    let min = *eig.first().expect("nonempty spectrum");
    let max = *eig.last().expect("nonempty spectrum");
    PdReport { is_pd: min > PD_REL_TOL * max.abs(), min_eigenvalue: min, max_eigenvalue: max }
}

/// Periodogram of a sample field evaluated on a torus grid:
/// `(1/N^d) |Σ_t y_t e^{+i(t,θ)}|²`, whose trigonometric moments are exactly
/// the biased covariance estimates.
pub fn periodogram(field: &LatticeField, grid: crate::grid::TorusGrid) -> crate::grid::GridFunction {
    assert_eq!(field.dimension(), grid.dimension(), "field and grid dimensions differ");
    let d = field.d;
    let n_axis = field.n_axis;
    let m = grid.nodes_per_axis();

    // Kernel table e^{i t θ_q} shared by every axis (all axes have the same
    // sample count and node set).
    let kernel: Vec<Vec<Complex64>> = (0..m)
        .map(|q| {
            let theta = grid.axis_node(q);
            (0..n_axis)
                .map(|t| {
                    let ang = t as f64 * theta;
                    Complex64::new(ang.cos(), ang.sin())
                })
                .collect()
        })
        .collect();

    let mut data = field.values.clone();
    let mut dims = vec![n_axis; d];
    for axis in 0..d {
        let len_in = dims[axis];
        let stride: usize = dims[axis + 1..].iter().product();
        let mut out_dims = dims.clone();
        out_dims[axis] = m;
        let out_total: usize = out_dims.iter().product();
        let out_block = m * stride;
        let in_block = len_in * stride;
        let data_ref = &data;
        let out: Vec<Complex64> = (0..out_total)
            .into_par_iter()
            .map(|flat| {
                let block = flat / out_block;
                let rem = flat % out_block;
                let q = rem / stride;
                let offset = rem % stride;
                let base = block * in_block + offset;
                let kern = &kernel[q];
                let mut acc = Complex64::ZERO;
                for (t, k) in kern.iter().enumerate() {
                    acc += data_ref[base + t * stride] * k;
                }
                acc
            })
            .collect();
        data = out;
        dims = out_dims;
    }

    let norm = 1.0 / field.values.len() as f64;
    let values = data.into_iter().map(|v| Complex64::new(v.norm_sqr() * norm, 0.0)).collect();
    crate::grid::GridFunction::new(grid, values).expect("transform preserves the node count")
}

/// Which covariance statistic a run selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatisticKind {
    Unbiased,
    Biased,
}

/// The statistic-selection rule: prefer the unbiased estimate when its moment
/// matrix is positive definite, otherwise fall back to the biased one; fail
/// when neither is usable.
pub fn select_statistic(
    field: &LatticeField,
    omega: &MultiIndexSet,
) -> Result<(MomentSequence, StatisticKind), MomentError> {
    let unbiased = estimate_unbiased(field, omega)?;
    if is_positive_definite(&assemble_moment_matrix(&unbiased)).is_pd {
        return Ok((unbiased, StatisticKind::Unbiased));
    }
    let biased = estimate_biased(field, omega)?;
    if is_positive_definite(&assemble_moment_matrix(&biased)).is_pd {
        return Ok((biased, StatisticKind::Biased));
    }
    Err(MomentError::DegenerateData)
}
