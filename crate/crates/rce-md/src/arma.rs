//! ARMA difference-equation export of a solved rational density.
//!
//! No multidimensional spectral factorization is attempted (none exists in
//! general for d ≥ 2). With a known AR polynomial the right-hand side
//! carries the solved `λ*_k` directly as u-lag weights; without one the
//! model is emitted in spectral-coefficient form and flagged as such.

use num_complex::Complex64;
use thiserror::Error;

use crate::indexing::FlatIndexMap;
use crate::moments::MomentSequence;
use crate::solver::StructuredLagrangian;
use crate::spectral::{RationalSpectralDensity, SpectralError};
use crate::synth::FilterCoefficients;

#[derive(Debug, Error)]
pub enum ArmaError {
    #[error("density is not solved: moment residual {residual:e} exceeds tolerance {tolerance:e}")]
    NotSolved { residual: f64, tolerance: f64 },
    #[error("AR reference has a zero leading tap; cannot normalize")]
    ZeroLeadingTap,
    #[error("AR reference shape ({d}, {n}) does not match the density ({want_d}, {want_n})")]
    ReferenceMismatch { d: usize, n: usize, want_d: usize, want_n: usize },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// How the right-hand-side weights of the model are to be read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArmaForm {
    /// AR part known; `λ*_k` weight the input lags directly.
    LambdaWeighted,
    /// No AR reference: the weights are spectral coefficients, not factored
    /// moving-average taps.
    SpectralCoefficient,
}

impl ArmaForm {
    pub fn as_str(&self) -> &'static str {
        match self {
            ArmaForm::LambdaWeighted => "lambda-weighted",
            ArmaForm::SpectralCoefficient => "spectral-coefficient",
        }
    }
}

/// The exported difference-equation model. Lag arrays live on the
/// nonnegative box `{0..n}^d` in κ order (axis 1 slowest, matching the
/// lag ordering `k₁` outer, `k₂` inner).
#[derive(Debug, Clone, PartialEq)]
pub struct ArmaModel {
    d: usize,
    n: usize,
    ar_taps: Vec<Complex64>,
    rhs_weights: Vec<Complex64>,
    form: ArmaForm,
    // Source coefficients, kept so the spectral density the model stands for
    // can be rebuilt exactly.
    lambda: StructuredLagrangian,
    p: MomentSequence,
}

impl ArmaModel {
    pub fn dimension(&self) -> usize {
        self.d
    }

    pub fn order(&self) -> usize {
        self.n
    }

    /// AR taps, normalized so the tap at lag 0 is 1.
    pub fn ar_taps(&self) -> &[Complex64] {
        &self.ar_taps
    }

    /// Input-lag weights over `{0..n}^d`.
    pub fn rhs_weights(&self) -> &[Complex64] {
        &self.rhs_weights
    }

    pub fn form(&self) -> ArmaForm {
        self.form
    }

    pub fn lambda(&self) -> &StructuredLagrangian {
        &self.lambda
    }

    pub fn numerator(&self) -> &MomentSequence {
        &self.p
    }

    /// The rational density the model was extracted from, rebuilt from the
    /// stored coefficients.
    pub fn implied_density(&self) -> Result<RationalSpectralDensity, ArmaError> {
        Ok(RationalSpectralDensity::new(self.p.clone(), self.lambda.clone())?)
    }
}

/// Convert a solved density into the difference-equation model.
///
/// `moment_residual` is the solve's final moment mismatch; extraction
/// refuses unsolved densities. When `ar_reference` is given (its shape must
/// match), the AR side is taken from it and the `λ*_k` become the u-lag
/// weights; otherwise the model is flagged [`ArmaForm::SpectralCoefficient`].
pub fn extract_arma(
    phi_star: &RationalSpectralDensity,
    moment_residual: f64,
    tolerance: f64,
    ar_reference: Option<&FilterCoefficients>,
) -> Result<ArmaModel, ArmaError> {
    if moment_residual.is_nan() || moment_residual > tolerance {
        return Err(ArmaError::NotSolved { residual: moment_residual, tolerance });
    }
    let lambda = phi_star.denominator().clone();
    let omega = lambda.omega();
    let (d, n) = (omega.dimension(), omega.order());
    let kappa = FlatIndexMap::new(d, n).expect("d >= 1");
    let seq = lambda.to_sequence();
    let rhs_weights: Vec<Complex64> = (0..kappa.len())
        .map(|i| seq.get(&kappa.kappa(i)).expect("nonnegative box lies in Ω"))
        .collect();

    let (ar_taps, form) = match ar_reference {
        Some(fc) => {
            if fc.dimension() != d || fc.order() != n {
                return Err(ArmaError::ReferenceMismatch {
                    d: fc.dimension(),
                    n: fc.order(),
                    want_d: d,
                    want_n: n,
                });
            }
            let lead = fc.denominator_taps()[0];
            if lead.norm() == 0.0 {
                return Err(ArmaError::ZeroLeadingTap);
            }
            let taps = fc.denominator_taps().iter().map(|t| t / lead).collect();
            (taps, ArmaForm::LambdaWeighted)
        }
        None => {
            let mut taps = vec![Complex64::ZERO; kappa.len()];
            taps[0] = Complex64::ONE;
            (taps, ArmaForm::SpectralCoefficient)
        }
    };

    Ok(ArmaModel { d, n, ar_taps, rhs_weights, form, lambda, p: phi_star.numerator().clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TorusGrid;
    use crate::indexing::MultiIndexSet;
    use crate::synth::{truth_density, FilterCoefficients};

    fn flat_phi() -> RationalSpectralDensity {
        let omega = MultiIndexSet::new(2, 2).unwrap();
        let mut p = vec![Complex64::ZERO; omega.half_len()];
        p[0] = Complex64::ONE;
        RationalSpectralDensity::new(
            MomentSequence::new(omega.clone(), p).unwrap(),
            StructuredLagrangian::flat(omega, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn flat_density_gives_identity_model() {
        let model = extract_arma(&flat_phi(), 0.0, 1e-6, None).unwrap();
        assert_eq!(model.form(), ArmaForm::SpectralCoefficient);
        assert!((model.rhs_weights()[0] - Complex64::ONE).norm() < 1e-15);
        assert!(model.rhs_weights()[1..].iter().all(|w| w.norm() < 1e-15));
        assert!((model.ar_taps()[0] - Complex64::ONE).norm() < 1e-15);
    }

    #[test]
    fn unsolved_density_is_rejected() {
        let err = extract_arma(&flat_phi(), 0.1, 1e-6, None).unwrap_err();
        assert!(matches!(err, ArmaError::NotSolved { .. }));
    }

    #[test]
    fn reference_model_carries_lambda_weights() {
        let fc = FilterCoefficients::default_truth_filter();
        let phi = truth_density(&fc, TorusGrid::new(2, 32)).unwrap();
        let model = extract_arma(&phi, 0.0, 1e-6, Some(&fc)).unwrap();
        assert_eq!(model.form(), ArmaForm::LambdaWeighted);

        // Weight at lag (0,0) is the autocorrelation of the AR taps at 0;
        // oracle is the direct sum of squared magnitudes.
        let direct: f64 = fc.denominator_taps().iter().map(|t| t.norm_sqr()).sum();
        assert!((model.rhs_weights()[0].re - direct).abs() < 1e-12);
        assert!((direct - 1.32).abs() < 1e-12);

        // Lag layout: k₁ outer, k₂ inner.
        let seq = phi.denominator().to_sequence();
        let kappa = FlatIndexMap::new(2, 2).unwrap();
        for i in 0..kappa.len() {
            let k = kappa.kappa(i);
            assert!((model.rhs_weights()[i] - seq.get(&k).unwrap()).norm() < 1e-15);
        }
        // AR side reproduces the reference taps (already normalized).
        for (got, want) in model.ar_taps().iter().zip(fc.denominator_taps()) {
            assert!((got - want).norm() < 1e-15);
        }
    }

    #[test]
    fn mismatched_reference_is_rejected() {
        let fc = FilterCoefficients::from_real(1, 1, &[1.0, 0.0], &[1.0, 0.0]).unwrap();
        let err = extract_arma(&flat_phi(), 0.0, 1e-6, Some(&fc)).unwrap_err();
        assert!(matches!(err, ArmaError::ReferenceMismatch { .. }));
    }

    #[test]
    fn implied_density_round_trips() {
        let fc = FilterCoefficients::default_truth_filter();
        let grid = TorusGrid::new(2, 32);
        let phi = truth_density(&fc, grid).unwrap();
        let model = extract_arma(&phi, 0.0, 1e-6, Some(&fc)).unwrap();
        let back = model.implied_density().unwrap();
        let a = phi.evaluate(grid).unwrap();
        let b = back.evaluate(grid).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).norm() <= 1e-8);
        }
    }
}
