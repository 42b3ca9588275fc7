//! Ground-truth construction and synthetic data generation.
//!
//! A rational truth density is built from recursive-filter tap arrays `b`
//! and `a` as `Φ = |b/a|²`: the numerator coefficients are the
//! autocorrelation of `b`, the denominator coefficients the autocorrelation
//! of `a`. Sample fields are drawn by shaping complex white noise with √Φ on
//! the DFT frequency grid and transforming back, which makes the biased
//! moments of the samples converge to the moments of Φ.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use thiserror::Error;

use crate::grid::{synthesize_at, TorusGrid};
use crate::indexing::MultiIndexSet;
use crate::moments::{LatticeField, MomentError, MomentSequence};
use crate::solver::StructuredLagrangian;
use crate::spectral::{RationalSpectralDensity, SpectralError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("filter denominator has a near-zero symbol value on the grid (min |a| = {min_abs:e})")]
    UnstableFilter { min_abs: f64 },
    #[error("tap array must have (n+1)^d = {expected} entries, got {got}")]
    WrongTapCount { expected: usize, got: usize },
    #[error("density is not strictly positive on the synthesis grid")]
    NonPositiveOnSynthesisGrid,
    #[error("need at least 2 samples per axis, got {0}")]
    RecordTooShort(usize),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Moment(#[from] MomentError),
}

/// Numerator and denominator tap arrays of a recursive filter on the
/// nonnegative box `{0..n}^d`, stored in κ order (axis 1 slowest). The
/// convention `a_0 = 1` is assumed by the ARMA export but not forced here.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterCoefficients {
    d: usize,
    n: usize,
    b: Vec<Complex64>,
    a: Vec<Complex64>,
}

impl FilterCoefficients {
    pub fn new(
        d: usize,
        n: usize,
        b: Vec<Complex64>,
        a: Vec<Complex64>,
    ) -> Result<Self, SynthError> {
        let expected = (n + 1).pow(d as u32);
        for taps in [&b, &a] {
            if taps.len() != expected {
                return Err(SynthError::WrongTapCount { expected, got: taps.len() });
            }
        }
        Ok(Self { d, n, b, a })
    }

    pub fn from_real(d: usize, n: usize, b: &[f64], a: &[f64]) -> Result<Self, SynthError> {
        let lift = |v: &[f64]| v.iter().map(|x| Complex64::new(*x, 0.0)).collect();
        Self::new(d, n, lift(b), lift(a))
    }

    /// The built-in two-dimensional order-2 example filter driving the
    /// default pipeline.
    pub fn default_truth_filter() -> Self {
        #[rustfmt::skip]
        let b = [
            0.9, -0.2, 0.05,
            0.2, 0.3, 0.05,
            -0.05, -0.05, 0.1,
        ];
        #[rustfmt::skip]
        let a = [
            1.0, 0.1, 0.1,
            -0.2, 0.2, -0.1,
            0.4, -0.1, -0.2,
        ];
        Self::from_real(2, 2, &b, &a).expect("static tap arrays are well-formed")
    }

    pub fn dimension(&self) -> usize {
        self.d
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn numerator_taps(&self) -> &[Complex64] {
        &self.b
    }

    pub fn denominator_taps(&self) -> &[Complex64] {
        &self.a
    }

    /// `Σ_{k ∈ {0..n}^d} taps_k e^{−i(k,θ)}`.
    fn symbol_at(&self, taps: &[Complex64], theta: &[f64]) -> Complex64 {
        let kappa = crate::indexing::FlatIndexMap::new(self.d, self.n).expect("d >= 1");
        let mut acc = Complex64::ZERO;
        for (i, t) in taps.iter().enumerate() {
            let k = kappa.kappa(i);
            let dot: f64 = k.iter().zip(theta).map(|(kj, tj)| *kj as f64 * tj).sum();
            acc += t * Complex64::new(dot.cos(), -dot.sin());
        }
        acc
    }

    pub fn numerator_symbol_at(&self, theta: &[f64]) -> Complex64 {
        self.symbol_at(&self.b, theta)
    }

    pub fn denominator_symbol_at(&self, theta: &[f64]) -> Complex64 {
        self.symbol_at(&self.a, theta)
    }
}

/// Autocorrelation of a tap array: `r_k = Σ_j taps_{j+k} conj(taps_j)` over
/// the half-set of Ω. These are exactly the coefficients of `|symbol|²`.
pub fn tap_autocorrelation(
    taps: &[Complex64],
    d: usize,
    n: usize,
) -> Result<MomentSequence, SynthError> {
    let expected = (n + 1).pow(d as u32);
    if taps.len() != expected {
        return Err(SynthError::WrongTapCount { expected, got: taps.len() });
    }
    let omega = MultiIndexSet::new(d, n).expect("d >= 1");
    let kappa = omega.kappa();
    let values = omega
        .half()
        .iter()
        .map(|k| {
            let mut acc = Complex64::ZERO;
            for j in 0..taps.len() {
                let base = kappa.kappa(j);
                let shifted: Vec<i32> = base.iter().zip(k).map(|(bj, kj)| bj + kj).collect();
                if shifted.iter().all(|s| *s >= 0 && *s as usize <= n) {
                    let mut flat = 0usize;
                    for s in &shifted {
                        flat = flat * (n + 1) + *s as usize;
                    }
                    acc += taps[flat] * taps[j].conj();
                }
            }
            acc
        })
        .collect();
    Ok(MomentSequence::new(omega, values)?)
}

/// Threshold below which the denominator symbol counts as unstable.
pub const STABILITY_FLOOR: f64 = 1e-8;

/// Builds `Φ = |b/a|²` as a rational density: numerator `|b|²`, denominator
/// `|a|²`, both trigonometric polynomials over the full box Ω.
pub fn truth_density(
    fc: &FilterCoefficients,
    grid: TorusGrid,
) -> Result<RationalSpectralDensity, SynthError> {
    let mut min_abs = f64::INFINITY;
    for node in 0..grid.len() {
        let a = fc.denominator_symbol_at(&grid.theta(node));
        min_abs = min_abs.min(a.norm());
    }
    if min_abs <= STABILITY_FLOOR {
        return Err(SynthError::UnstableFilter { min_abs });
    }
    let p = tap_autocorrelation(&fc.b, fc.d, fc.n)?;
    let q = tap_autocorrelation(&fc.a, fc.d, fc.n)?;
    let lambda = StructuredLagrangian::new(q.omega().clone(), q.values().to_vec())
        .expect("autocorrelation at lag 0 is real");
    Ok(RationalSpectralDensity::new(p, lambda)?)
}

/// Seeded, counter-based noise source; identical seeds give identical
/// fields on any platform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomSource {
    pub seed: u64,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    /// Identifier of the generation recipe, recorded in output metadata.
    pub fn algorithm(&self) -> &'static str {
        "chacha12/std-normal/fwd-dft"
    }

    fn rng(&self) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(self.seed)
    }
}

/// Draw one complex WSS field of size `n_axis^d` with spectral density `phi`.
///
/// White noise `Z = (W₁ + iW₂)/√2` is generated per DFT node in row-major
/// order, shaped by `√Φ`, and transformed with the `e^{−i2π(f,t)/N}` kernel
/// scaled by `N^{−d/2}` so that `Φ ≡ 1` yields unit-variance white samples.
pub fn generate_field(
    phi: &RationalSpectralDensity,
    n_axis: usize,
    rs: &RandomSource,
) -> Result<LatticeField, SynthError> {
    if n_axis < 2 {
        return Err(SynthError::RecordTooShort(n_axis));
    }
    let d = phi.dimension();
    let total = n_axis.pow(d as u32);
    let p = phi.numerator();
    let lambda = phi.denominator().to_sequence();

    let mut rng = rs.rng();
    let normal = StandardNormal;
    let mut spectrum = Vec::with_capacity(total);
    let mut freq = vec![0usize; d];
    let mut theta = vec![0.0f64; d];
    for _ in 0..total {
        for (t, f) in theta.iter_mut().zip(&freq) {
            *t = 2.0 * std::f64::consts::PI * *f as f64 / n_axis as f64;
        }
        let num = synthesize_at(p, &theta);
        let den = synthesize_at(&lambda, &theta);
        if num <= 0.0 || den <= 0.0 {
            return Err(SynthError::NonPositiveOnSynthesisGrid);
        }
        let w1: f64 = normal.sample(&mut rng);
        let w2: f64 = normal.sample(&mut rng);
        let z = Complex64::new(w1, w2) / 2.0_f64.sqrt();
        spectrum.push(z * (num / den).sqrt());

        let mut j = d;
        loop {
            if j == 0 {
                break;
            }
            j -= 1;
            freq[j] += 1;
            if freq[j] < n_axis {
                break;
            }
            freq[j] = 0;
        }
    }

    dft_all_axes(&mut spectrum, d, n_axis);
    let scale = 1.0 / (total as f64).sqrt();
    for v in &mut spectrum {
        *v *= scale;
    }
    Ok(LatticeField::new(d, n_axis, spectrum)?)
}

/// In-place forward DFT (`e^{−i2πkn/N}` kernel, unnormalized) along every
/// axis of a row-major `n_axis^d` array.
fn dft_all_axes(values: &mut [Complex64], d: usize, n_axis: usize) {
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n_axis);
    let mut scratch = vec![Complex64::ZERO; fft.get_inplace_scratch_len()];
    let total = values.len();

    for axis in (0..d).rev() {
        // Stride between consecutive entries along `axis`.
        let stride = n_axis.pow((d - 1 - axis) as u32);
        if stride == 1 {
            for chunk in values.chunks_exact_mut(n_axis) {
                fft.process_with_scratch(chunk, &mut scratch);
            }
            continue;
        }
        let block = stride * n_axis;
        let mut line = vec![Complex64::ZERO; n_axis];
        for base in (0..total).step_by(block) {
            for offset in 0..stride {
                for (i, v) in line.iter_mut().enumerate() {
                    *v = values[base + offset + i * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (i, v) in line.iter().enumerate() {
                    values[base + offset + i * stride] = *v;
                }
            }
        }
    }
}
