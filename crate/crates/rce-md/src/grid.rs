//! Uniform grids on the d-torus and rectangle-rule quadrature.
//!
//! The rectangle rule with the normalized measure `dm = (1/2π)^d Π dθ_j` is a
//! plain average over the nodes. For smooth periodic integrands it converges
//! geometrically, and for trigonometric polynomials of per-axis order below
//! `m/2` it is exact, which is what makes moment computations on these grids
//! reliable at modest `m`.

use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;
use thiserror::Error;

use crate::indexing::MultiIndexSet;
use crate::moments::MomentSequence;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GridError {
    #[error("grid with m = {m} nodes per axis aliases coefficients of order n = {n}; need m > 2n")]
    Aliasing { m: usize, n: usize },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("value buffer has length {got}, grid has {expected} nodes")]
    WrongLength { got: usize, expected: usize },
}

/// Uniform tensor grid on 𝕋^d with nodes `θ_j = 2π j / m − π` per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TorusGrid {
    d: usize,
    m: usize,
}

impl TorusGrid {
    pub fn new(d: usize, m: usize) -> Self {
        assert!(d >= 1 && m >= 1, "grid needs d >= 1 and m >= 1");
        Self { d, m }
    }

    pub fn dimension(&self) -> usize {
        self.d
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.m.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight of a single node, `(1/m)^d`.
    pub fn weight(&self) -> f64 {
        1.0 / self.len() as f64
    }

    pub fn axis_node(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.m as f64 - PI
    }

    /// Node coordinates for a flat index (axis 1 slowest).
    pub fn theta(&self, mut flat: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        for j in (0..self.d).rev() {
            out[j] = self.axis_node(flat % self.m);
            flat /= self.m;
        }
        out
    }
}

/// A scalar function sampled on a [`TorusGrid`], node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: TorusGrid,
    values: Vec<Complex64>,
}

impl GridFunction {
    pub fn new(grid: TorusGrid, values: Vec<Complex64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::WrongLength { got: values.len(), expected: grid.len() });
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: TorusGrid, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.theta(i))).collect();
        Self { grid, values }
    }

    pub fn from_real_fn(grid: TorusGrid, f: impl Fn(&[f64]) -> f64) -> Self {
        Self::from_fn(grid, |t| Complex64::new(f(t), 0.0))
    }

    pub fn constant(grid: TorusGrid, value: f64) -> Self {
        Self { grid, values: vec![Complex64::new(value, 0.0); grid.len()] }
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn real_values(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn min_real(&self) -> f64 {
        self.values.iter().map(|v| v.re).fold(f64::INFINITY, f64::min)
    }
}

/// Rectangle-rule integral against the normalized measure: the node average.
pub fn integrate(f: &GridFunction) -> Complex64 {
    let sum: Complex64 = f.values.iter().sum();
    sum * f.grid.weight()
}

/// Trigonometric moments `c_k = ∫ e^{i(k,θ)} f dm` for every `k ∈ Ω`,
/// computed by direct quadrature on the grid.
///
/// Requires `m > 2n` so that no coefficient of a band-limited integrand
/// aliases onto another.
pub fn fourier_coefficients(
    f: &GridFunction,
    omega: &MultiIndexSet,
) -> Result<MomentSequence, GridError> {
    if f.grid.nodes_per_axis() <= 2 * omega.order() {
        return Err(GridError::Aliasing { m: f.grid.nodes_per_axis(), n: omega.order() });
    }
    if f.grid.dimension() != omega.dimension() {
        return Err(GridError::GridMismatch(format!(
            "grid dimension {} vs index set dimension {}",
            f.grid.dimension(),
            omega.dimension()
        )));
    }
    let w = f.grid.weight();
    let d = f.grid.dimension();
    let m = f.grid.nodes_per_axis();
    let values: Vec<Complex64> = omega
        .half()
        .par_iter()
        .map(|k| {
            // Per-axis character tables e^{i k_j θ_t}; the node character is
            // their product, maintained with an odometer so no per-node trig
            // (or m^d-sized table) is needed.
            let axis: Vec<Vec<Complex64>> = (0..d)
                .map(|j| {
                    (0..m)
                        .map(|t| {
                            let ang = k[j] as f64 * f.grid.axis_node(t);
                            Complex64::new(ang.cos(), ang.sin())
                        })
                        .collect()
                })
                .collect();
            let mut digits = vec![0usize; d];
            let mut prefix = vec![Complex64::ONE; d];
            let mut running = Complex64::ONE;
            for j in 0..d {
                running *= axis[j][0];
                prefix[j] = running;
            }
            let mut acc = Complex64::ZERO;
            for v in &f.values {
                acc += v * prefix[d - 1];
                let mut j = d;
                loop {
                    if j == 0 {
                        break;
                    }
                    j -= 1;
                    digits[j] += 1;
                    if digits[j] < m {
                        let base = if j == 0 { Complex64::ONE } else { prefix[j - 1] };
                        let mut p = base * axis[j][digits[j]];
                        prefix[j] = p;
                        for l in (j + 1)..d {
                            p *= axis[l][0];
                            prefix[l] = p;
                        }
                        break;
                    }
                    digits[j] = 0;
                }
            }
            acc * w
        })
        .collect();
    MomentSequence::new(omega.clone(), values)
        .map_err(|e| GridError::GridMismatch(format!("quadrature produced invalid moments: {e}")))
}

/// Evaluate the Hermitian coefficient family `v` as a real trigonometric
/// polynomial, `f(θ) = Σ_{k∈Ω} v_k e^{−i(k,θ)}`, at one point.
pub fn synthesize_at(seq: &MomentSequence, theta: &[f64]) -> f64 {
    let omega = seq.omega();
    let mut acc = seq.values()[0].re;
    for (pos, k) in omega.half().iter().enumerate().skip(1) {
        let dot: f64 = k.iter().zip(theta).map(|(kj, tj)| *kj as f64 * tj).sum();
        let v = seq.values()[pos];
        acc += 2.0 * (v.re * dot.cos() + v.im * dot.sin());
    }
    acc
}

/// Evaluate the family on every node of a grid. Runs axis-product
/// accumulation per half index, so memory stays `O(m·d)` beyond the output
/// even on very fine grids.
pub fn synthesize(seq: &MomentSequence, grid: TorusGrid) -> GridFunction {
    let omega = seq.omega();
    assert_eq!(grid.dimension(), omega.dimension());
    let d = grid.dimension();
    let m = grid.nodes_per_axis();
    let mut out = vec![seq.values()[0].re; grid.len()];
    for (pos, k) in omega.half().iter().enumerate().skip(1) {
        let v = seq.values()[pos];
        let (x, y) = (2.0 * v.re, 2.0 * v.im);
        let axis: Vec<Vec<Complex64>> = (0..d)
            .map(|j| {
                (0..m)
                    .map(|t| {
                        let ang = k[j] as f64 * grid.axis_node(t);
                        Complex64::new(ang.cos(), ang.sin())
                    })
                    .collect()
            })
            .collect();
        let mut digits = vec![0usize; d];
        let mut prefix = vec![Complex64::ONE; d];
        let mut running = Complex64::ONE;
        for j in 0..d {
            running *= axis[j][0];
            prefix[j] = running;
        }
        for o in out.iter_mut() {
            let w = prefix[d - 1];
            // 2 Re(v e^{−i(k,θ)}) with w = e^{+i(k,θ)}.
            *o += x * w.re + y * w.im;
            let mut j = d;
            loop {
                if j == 0 {
                    break;
                }
                j -= 1;
                digits[j] += 1;
                if digits[j] < m {
                    let base = if j == 0 { Complex64::ONE } else { prefix[j - 1] };
                    let mut p = base * axis[j][digits[j]];
                    prefix[j] = p;
                    for l in (j + 1)..d {
                        p *= axis[l][0];
                        prefix[l] = p;
                    }
                    break;
                }
                digits[j] = 0;
            }
        }
    }
    GridFunction {
        grid,
        values: out.into_iter().map(|v| Complex64::new(v, 0.0)).collect(),
    }
}

/// Kronecker-product basis `K(e^{iθ})` tabulated on a grid: entry `i` of the
/// per-node vector is `e^{i(κ(i),θ)}` in κ order.
#[derive(Debug, Clone)]
pub struct BasisTable {
    basis_len: usize,
    values: Vec<Complex64>,
}

impl BasisTable {
    pub fn basis_len(&self) -> usize {
        self.basis_len
    }

    pub fn row(&self, node: usize) -> &[Complex64] {
        &self.values[node * self.basis_len..(node + 1) * self.basis_len]
    }
}

/// Evaluate the basis vector at one point.
pub fn basis_at(omega: &MultiIndexSet, theta: &[f64]) -> Vec<Complex64> {
    let kappa = omega.kappa();
    (0..kappa.len())
        .map(|i| {
            let k = kappa.kappa(i);
            let dot: f64 = k.iter().zip(theta).map(|(kj, tj)| *kj as f64 * tj).sum();
            Complex64::new(dot.cos(), dot.sin())
        })
        .collect()
}

pub fn evaluate_basis(grid: TorusGrid, omega: &MultiIndexSet) -> BasisTable {
    let kappa = omega.kappa();
    let basis_len = kappa.len();
    let mut values = Vec::with_capacity(grid.len() * basis_len);
    for node in 0..grid.len() {
        values.extend(basis_at(omega, &grid.theta(node)));
    }
    BasisTable { basis_len, values }
}

/// Per-half-index tables of `cos (k,θ)` and `sin (k,θ)` over the grid nodes.
///
/// These back both directions of the transform: synthesis of a Hermitian
/// family onto the grid and projection of grid values onto the half-set.
/// Projection parallelizes over half indices; each single sum stays
/// sequential so results are bit-identical regardless of thread count.
#[derive(Debug, Clone)]
pub struct HalfTables {
    grid: TorusGrid,
    cos: Vec<Vec<f64>>,
    sin: Vec<Vec<f64>>,
}

impl HalfTables {
    pub fn build(grid: TorusGrid, omega: &MultiIndexSet) -> Self {
        assert_eq!(grid.dimension(), omega.dimension());
        let half = omega.half();
        let mut cos = vec![vec![0.0; grid.len()]; half.len()];
        let mut sin = vec![vec![0.0; grid.len()]; half.len()];
        // Node angles once, then all half indices per node.
        for node in 0..grid.len() {
            let theta = grid.theta(node);
            for (pos, k) in half.iter().enumerate() {
                let dot: f64 = k.iter().zip(&theta).map(|(kj, tj)| *kj as f64 * tj).sum();
                cos[pos][node] = dot.cos();
                sin[pos][node] = dot.sin();
            }
        }
        Self { grid, cos, sin }
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn half_len(&self) -> usize {
        self.cos.len()
    }

    pub fn cos_value(&self, pos: usize, node: usize) -> f64 {
        self.cos[pos][node]
    }

    pub fn sin_value(&self, pos: usize, node: usize) -> f64 {
        self.sin[pos][node]
    }

    /// Real values of `Σ_k v_k e^{−i(k,θ)}` on the grid for a Hermitian
    /// half-set family `v`.
    pub fn synthesize_real(&self, half_values: &[Complex64]) -> Vec<f64> {
        assert_eq!(half_values.len(), self.half_len());
        let mut out = vec![half_values[0].re; self.grid.len()];
        for ((v, cos), sin) in half_values[1..].iter().zip(&self.cos[1..]).zip(&self.sin[1..]) {
            let x = 2.0 * v.re;
            let y = 2.0 * v.im;
            for (i, o) in out.iter_mut().enumerate() {
                // Re(v e^{−i(k,θ)}) = Re(v) cos + Im(v) sin
                *o += x * cos[i] + y * sin[i];
            }
        }
        out
    }

    /// Unnormalized projections `Σ_i w_i e^{+i(k,θ_i)}` for each half index.
    /// Multiplying by the grid weight gives the trigonometric moments of a
    /// real-valued grid function `w`.
    pub fn project(&self, weights: &[f64]) -> Vec<Complex64> {
        assert_eq!(weights.len(), self.grid.len());
        (0..self.half_len())
            .into_par_iter()
            .map(|pos| {
                let cos = &self.cos[pos];
                let sin = &self.sin[pos];
                let mut re = 0.0;
                let mut im = 0.0;
                for (i, w) in weights.iter().enumerate() {
                    re += w * cos[i];
                    im += w * sin[i];
                }
                Complex64::new(re, im)
            })
            .collect()
    }
}
