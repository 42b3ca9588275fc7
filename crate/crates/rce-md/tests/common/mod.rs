//! Shared test oracles and problem generators.
//!
//! Everything here is deliberately independent of the library's solve path:
//! the Levinson recursion, the direct Yule-Walker solve, finite differences,
//! and the Newton iteration for the entropy-maximizing density are separate
//! implementations used to cross-check the crate, not wrappers around it.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use rce_md::grid::{self, GridFunction, HalfTables, TorusGrid};
use rce_md::indexing::MultiIndexSet;
use rce_md::moments::MomentSequence;
use rce_md::solver::StructuredLagrangian;
use rce_md::spectral::RationalSpectralDensity;
use rce_md::synth::FilterCoefficients;

pub fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

// ── Levinson-Durbin oracle ──────────────────────────────────────────────

/// Levinson-Durbin recursion on Hermitian Toeplitz moments `c_0..c_n`:
/// returns forward prediction coefficients `φ_1..φ_n` (so the spectrum is
/// `σ² / |1 − Σ φ_j e^{−ijθ}|²`) and the prediction error variance σ².
pub fn levinson(c: &[Complex64]) -> Option<(Vec<Complex64>, f64)> {
    let n = c.len() - 1;
    let mut err = c[0].re;
    if err <= 0.0 {
        return None;
    }
    let mut phi: Vec<Complex64> = Vec::with_capacity(n);
    for k in 1..=n {
        let mut acc = c[k];
        for j in 1..k {
            acc -= phi[j - 1] * c[k - j];
        }
        let reflection = acc / err;
        let mut next = vec![Complex64::ZERO; k];
        for j in 1..k {
            next[j - 1] = phi[j - 1] - reflection * phi[k - j - 1].conj();
        }
        next[k - 1] = reflection;
        phi = next;
        err *= 1.0 - reflection.norm_sqr();
        if err <= 0.0 {
            return None;
        }
    }
    Some((phi, err))
}

/// Direct dense solve of the Yule-Walker system `Σ_j φ_j c_{k−j} = c_k`,
/// `k = 1..n`; used to cross-check the recursion.
pub fn yule_walker_direct(c: &[Complex64]) -> Option<(Vec<Complex64>, f64)> {
    let n = c.len() - 1;
    if n == 0 {
        return Some((Vec::new(), c[0].re));
    }
    let get = |idx: i64| -> Complex64 {
        if idx >= 0 {
            c[idx as usize]
        } else {
            c[(-idx) as usize].conj()
        }
    };
    let a = DMatrix::from_fn(n, n, |k, j| get((k as i64 + 1) - (j as i64 + 1)));
    let b = DVector::from_fn(n, |k, _| c[k + 1]);
    let phi = a.lu().solve(&b)?;
    let mut sigma2 = c[0];
    for (j, p) in phi.iter().enumerate() {
        sigma2 -= p * c[j + 1].conj();
    }
    Some((phi.iter().copied().collect(), sigma2.re))
}

/// `σ² / |1 − Σ_j φ_j e^{−i(j+1)θ}|²`.
pub fn ar_spectrum_at(phi: &[Complex64], sigma2: f64, theta: f64) -> f64 {
    let mut a = Complex64::new(1.0, 0.0);
    for (j, p) in phi.iter().enumerate() {
        let ang = (j + 1) as f64 * theta;
        a -= p * Complex64::new(ang.cos(), -ang.sin());
    }
    sigma2 / a.norm_sqr()
}

// ── finite differences ──────────────────────────────────────────────────

pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut plus = x.to_vec();
            let mut minus = x.to_vec();
            plus[i] += h;
            minus[i] -= h;
            (f(&plus) - f(&minus)) / (2.0 * h)
        })
        .collect()
}

// ── random problem generators ───────────────────────────────────────────

/// Random Hermitian half-set family with a real, dominant zero coefficient.
pub fn random_half_family(omega: &MultiIndexSet, scale: f64, rng: &mut ChaCha12Rng) -> Vec<Complex64> {
    let mut values = vec![Complex64::ZERO; omega.half_len()];
    values[0] = Complex64::new(1.0 + rng.gen::<f64>(), 0.0);
    for v in values.iter_mut().skip(1) {
        *v = Complex64::new(
            scale * (rng.gen::<f64>() - 0.5),
            scale * (rng.gen::<f64>() - 0.5),
        );
    }
    values
}

/// Random λ in the open feasible region: random coefficients, then the zero
/// coefficient lifted until `min Q` clears the requested floor.
pub fn random_feasible_lambda(
    omega: &MultiIndexSet,
    grid: TorusGrid,
    floor: f64,
    rng: &mut ChaCha12Rng,
) -> StructuredLagrangian {
    let mut values = random_half_family(omega, 0.6, rng);
    values[0] = Complex64::ZERO;
    let probe = StructuredLagrangian::new(omega.clone(), values.clone()).unwrap();
    let min_q = probe.q_values(grid).min_real();
    values[0] = Complex64::new(floor - min_q.min(0.0) + rng.gen::<f64>(), 0.0);
    StructuredLagrangian::new(omega.clone(), values).unwrap()
}

/// Strictly positive random trigonometric polynomial as grid values plus its
/// coefficient family: `|poly|² + floor`.
pub fn random_positive_polynomial(
    omega: &MultiIndexSet,
    floor: f64,
    rng: &mut ChaCha12Rng,
) -> MomentSequence {
    let d = omega.dimension();
    let n = omega.order();
    let tap_count = (n + 1).pow(d as u32);
    let taps: Vec<Complex64> = (0..tap_count)
        .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
        .collect();
    let auto = rce_md::synth::tap_autocorrelation(&taps, d, n).unwrap();
    let mut values = auto.values().to_vec();
    values[0] += Complex64::new(floor, 0.0);
    MomentSequence::new(omega.clone(), values).unwrap()
}

/// Exact (fine-quadrature) moments of a random strictly positive density,
/// normalized to `c_0 = 1`.
pub fn random_pd_moments(
    omega: &MultiIndexSet,
    m_fine: usize,
    rng: &mut ChaCha12Rng,
) -> MomentSequence {
    let denom = random_positive_polynomial(omega, 0.3, rng);
    let numer = random_positive_polynomial(omega, 0.3, rng);
    let grid = TorusGrid::new(omega.dimension(), m_fine);
    let q = grid::synthesize(&denom, grid);
    let p = grid::synthesize(&numer, grid);
    let values: Vec<Complex64> = p
        .values()
        .iter()
        .zip(q.values())
        .map(|(a, b)| Complex64::new(a.re / b.re, 0.0))
        .collect();
    let f = GridFunction::new(grid, values).unwrap();
    let c = grid::fourier_coefficients(&f, omega).unwrap();
    let c0 = c.zeroth();
    c.scaled(1.0 / c0)
}

// ── the reference experiment ────────────────────────────────────────────

/// The built-in 2-D order-2 experiment: filter, truth density, its exact
/// quadrature moments on the m-node grid, and the numerator sampled as the
/// solve prior.
pub struct TruthSetup {
    pub filter: FilterCoefficients,
    pub truth: RationalSpectralDensity,
    pub omega: MultiIndexSet,
    pub grid: TorusGrid,
    pub exact_moments: MomentSequence,
    pub prior_values: GridFunction,
}

pub fn truth_setup(m: usize) -> TruthSetup {
    let filter = FilterCoefficients::default_truth_filter();
    let grid = TorusGrid::new(2, m);
    let truth = rce_md::synth::truth_density(&filter, grid).unwrap();
    let omega = MultiIndexSet::new(2, 2).unwrap();
    let exact_moments =
        grid::fourier_coefficients(&truth.evaluate(grid).unwrap(), &omega).unwrap();
    let prior_values = grid::synthesize(truth.numerator(), grid);
    TruthSetup { filter, truth, omega, grid, exact_moments, prior_values }
}

/// Independent autocorrelation oracle: direct double loop over tap pairs,
/// reimplemented here rather than calling the library.
pub fn autocorrelation_oracle(
    taps: &[Complex64],
    d: usize,
    n: usize,
    k: &[i32],
) -> Complex64 {
    let side = n + 1;
    let total = side.pow(d as u32);
    let decode = |mut flat: usize| -> Vec<i32> {
        let mut idx = vec![0i32; d];
        for j in (0..d).rev() {
            idx[j] = (flat % side) as i32;
            flat /= side;
        }
        idx
    };
    let encode = |idx: &[i32]| -> Option<usize> {
        let mut flat = 0usize;
        for c in idx {
            if *c < 0 || *c as usize >= side {
                return None;
            }
            flat = flat * side + *c as usize;
        }
        Some(flat)
    };
    let mut acc = Complex64::ZERO;
    for j in 0..total {
        let base = decode(j);
        let shifted: Vec<i32> = base.iter().zip(k).map(|(b, kk)| b + kk).collect();
        if let Some(flat) = encode(&shifted) {
            acc += taps[flat] * taps[j].conj();
        }
    }
    acc
}

// ── entropy-maximizing density (exp-family Newton solve) ────────────────

/// The entropy-maximizing density with the given moments: `Φ̆ = exp(g)` with
/// `g` a real trigonometric polynomial over Ω, fitted by a damped Newton
/// iteration on the strictly convex functional
/// `F(γ) = ∫ exp(g_γ) dm − Σ_k γ_k c_{−k}`.
/// Returns the grid values and the entropy `H[Φ̆] = −Σ_k γ_k c_{−k}`.
pub fn shannon_max_density(
    c: &MomentSequence,
    grid: TorusGrid,
) -> Option<(GridFunction, f64)> {
    let omega = c.omega();
    let tables = HalfTables::build(grid, omega);
    let weight = grid.weight();
    let half = omega.half_len();
    let dim = 2 * half - 1;

    // Chart target: [c_0, 2Re c_k, 2Im c_k, ...] matches the gradient chart.
    let mut target = DVector::zeros(dim);
    target[0] = c.values()[0].re;
    for (i, v) in c.values().iter().enumerate().skip(1) {
        target[2 * i - 1] = 2.0 * v.re;
        target[2 * i] = 2.0 * v.im;
    }

    let decode = |x: &DVector<f64>| -> Vec<Complex64> {
        let mut out = vec![Complex64::new(x[0], 0.0)];
        for i in 1..half {
            out.push(Complex64::new(x[2 * i - 1], x[2 * i]));
        }
        out
    };

    // Basis functions of the chart at each node: 1, 2cos(k·θ), 2sin(k·θ).
    let basis_row = |node: usize, tab: &HalfTables| -> DVector<f64> {
        let mut row = DVector::zeros(dim);
        row[0] = 1.0;
        for i in 1..half {
            row[2 * i - 1] = 2.0 * tab.cos_value(i, node);
            row[2 * i] = 2.0 * tab.sin_value(i, node);
        }
        row
    };

    let value_grad_hess = |x: &DVector<f64>| -> (f64, DVector<f64>, DMatrix<f64>) {
        let g_vals = tables.synthesize_real(&decode(x));
        let mut value = 0.0;
        let mut grad = DVector::zeros(dim);
        let mut hess = DMatrix::zeros(dim, dim);
        for (node, g) in g_vals.iter().enumerate() {
            let e = g.exp();
            value += e;
            let row = basis_row(node, &tables);
            grad.axpy(e * weight, &row, 1.0);
            hess.ger(e * weight, &row, &row, 1.0);
        }
        value *= weight;
        value -= target.dot(x);
        grad -= &target;
        (value, grad, hess)
    };

    // Start at the flat density with the right mass: g ≡ log c_0.
    let mut x = DVector::zeros(dim);
    x[0] = c.values()[0].re.max(1e-12).ln();

    for _ in 0..100 {
        let (value, grad, hess) = value_grad_hess(&x);
        if grad.iter().map(|v| v.abs()).fold(0.0, f64::max) < 1e-11 {
            break;
        }
        let step = hess.lu().solve(&(-&grad))?;
        let mut t = 1.0;
        let slope = grad.dot(&step);
        let mut accepted = false;
        while t > 1e-16 {
            let trial = &x + &step * t;
            let (trial_value, _, _) = value_grad_hess(&trial);
            if trial_value <= value + 1e-4 * t * slope {
                x = trial;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    let (_, grad, _) = value_grad_hess(&x);
    if grad.iter().map(|v| v.abs()).fold(0.0, f64::max) > 1e-8 {
        return None;
    }
    let g_vals = tables.synthesize_real(&decode(&x));
    let values: Vec<Complex64> =
        g_vals.iter().map(|g| Complex64::new(g.exp(), 0.0)).collect();
    let entropy = -target.dot(&x);
    Some((GridFunction::new(grid, values).unwrap(), entropy))
}
