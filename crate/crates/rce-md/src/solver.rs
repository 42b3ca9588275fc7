//! The dual problem: minimize
//! `J_P(Λ) = −∫ P log(K^H Λ K) dm + tr(Λ T_d)`
//! over structured Hermitian `Λ` whose entries are `λ_k / card(N_k)`.
//!
//! In the half-set coefficient chart the objective is smooth and strictly
//! convex on the feasible region `{λ : Q(θ; λ) > 0 on the grid}`, and its
//! gradient is literally the moment mismatch `c − Γ(P/Q)`, so the stopping
//! tolerance doubles as the moment-matching accuracy. The log barrier blows
//! up as Q approaches zero, so a plain backtracking line search keeps
//! iterates feasible without any constraint machinery.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::grid::{GridFunction, HalfTables, TorusGrid};
use crate::indexing::MultiIndexSet;
use crate::moments::{
    assemble_moment_matrix, hermitian_eigenvalues, is_positive_definite, MomentSequence,
};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("moment matrix is not positive definite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },
    #[error("Q is not strictly positive on the grid at this point")]
    InfeasiblePoint,
    #[error("initial point is infeasible: Q ≤ 0 somewhere on the grid")]
    InfeasibleStart,
    #[error("prior numerator must be strictly positive on the grid (min {min:e})")]
    PriorNotPositive { min: f64 },
    #[error("L2 target must be nonnegative on the grid (min {min:e})")]
    TargetNegative { min: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("no convergence within {} iterations (gradient norm {:e})", report.iterations, report.grad_norm)]
    MaxIterations { report: Box<SolveReport> },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("λ_0 must be real, got imaginary part {im:e}")]
    NonRealZeroCoefficient { im: f64 },
    #[error("expected {expected} half-set coefficients, got {got}")]
    WrongLength { expected: usize, got: usize },
}

/// The free denominator coefficients `λ_k` over the half-set together with
/// the structured Hermitian matrix they induce.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredLagrangian {
    omega: MultiIndexSet,
    lambda: Vec<Complex64>,
}

impl StructuredLagrangian {
    pub fn new(omega: MultiIndexSet, mut lambda: Vec<Complex64>) -> Result<Self, SolverError> {
        if lambda.len() != omega.half_len() {
            return Err(SolverError::WrongLength { expected: omega.half_len(), got: lambda.len() });
        }
        let scale = lambda.iter().map(|v| v.norm()).fold(1.0, f64::max);
        if lambda[0].im.abs() > 1e-9 * scale {
            return Err(SolverError::NonRealZeroCoefficient { im: lambda[0].im });
        }
        lambda[0].im = 0.0;
        Ok(Self { omega, lambda })
    }

    /// The always-feasible flat start `Q ≡ level`.
    pub fn flat(omega: MultiIndexSet, level: f64) -> Self {
        let mut lambda = vec![Complex64::ZERO; omega.half_len()];
        lambda[0] = Complex64::new(level, 0.0);
        Self { omega, lambda }
    }

    pub fn omega(&self) -> &MultiIndexSet {
        &self.omega
    }

    /// Half-set coefficients, canonical order.
    pub fn coefficients(&self) -> &[Complex64] {
        &self.lambda
    }

    /// The real chart: `λ_0`, then `(Re λ_k, Im λ_k)` per nonzero half index.
    /// Length `(2n+1)^d`.
    pub fn free_params(&self) -> Vec<f64> {
        chart_encode(&self.lambda)
    }

    pub fn from_free_params(omega: MultiIndexSet, params: &[f64]) -> Result<Self, SolverError> {
        let expected = 2 * omega.half_len() - 1;
        if params.len() != expected {
            return Err(SolverError::WrongLength { expected, got: params.len() });
        }
        Self::new(omega, chart_decode(params))
    }

    /// `Q(θ) = Σ_k λ_k e^{−i(k,θ)}` on the grid; real-valued by Hermitian
    /// symmetry.
    pub fn q_values(&self, grid: TorusGrid) -> GridFunction {
        let seq = MomentSequence::new(self.omega.clone(), self.lambda.clone())
            .expect("λ is a valid Hermitian family");
        crate::grid::synthesize(&seq, grid)
    }

    /// The induced matrix with entry `(i, j) = λ_{κ(i)−κ(j)} / card(N_{κ(i)−κ(j)})`.
    pub fn induced_matrix(&self) -> DMatrix<Complex64> {
        let kappa = self.omega.kappa();
        let size = kappa.len();
        DMatrix::from_fn(size, size, |i, j| {
            let diff = kappa.pair_difference(i, j);
            let (pos, conj) = self.omega.half_position(&diff).expect("κ difference in Ω");
            let v = if conj { self.lambda[pos].conj() } else { self.lambda[pos] };
            v / self.omega.card_n(&diff).expect("κ difference in Ω") as f64
        })
    }

    /// Coefficients reinterpreted as a Hermitian moment-style family.
    pub fn to_sequence(&self) -> MomentSequence {
        MomentSequence::new(self.omega.clone(), self.lambda.clone())
            .expect("λ is a valid Hermitian family")
    }
}

fn chart_encode(half: &[Complex64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * half.len() - 1);
    out.push(half[0].re);
    for v in &half[1..] {
        out.push(v.re);
        out.push(v.im);
    }
    out
}

fn chart_decode(params: &[f64]) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(params.len().div_ceil(2));
    out.push(Complex64::new(params[0], 0.0));
    for pair in params[1..].chunks_exact(2) {
        out.push(Complex64::new(pair[0], pair[1]));
    }
    out
}

/// `tr(Λ T_d)` computed coefficient-wise as `Σ_k λ_k c_{−k}`, which is real
/// by Hermitian symmetry. The matrix-trace route exists only in tests.
pub fn trace_term(lambda: &[Complex64], c: &MomentSequence) -> f64 {
    let cv = c.values();
    let mut acc = lambda[0].re * cv[0].re;
    for (l, cx) in lambda[1..].iter().zip(&cv[1..]) {
        acc += 2.0 * (l * cx.conj()).re;
    }
    acc
}

/// Solver settings. `grad_tol` is relative to `c_0`; the stop test is
/// `‖∇J‖_∞ ≤ grad_tol · c_0`, which bounds the moment residual by the same
/// quantity.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub grid_m: usize,
    pub grad_tol: f64,
    pub max_iters: usize,
    pub ls_shrink: f64,
    pub ls_c1: f64,
    pub initial: Option<StructuredLagrangian>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            grid_m: 64,
            grad_tol: 1e-8,
            max_iters: 500,
            ls_shrink: 0.5,
            ls_c1: 1e-4,
            initial: None,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<(), SolverError> {
        if self.grad_tol.is_nan() || self.grad_tol <= 0.0 {
            return Err(SolverError::InvalidConfig(format!(
                "grad_tol must be positive, got {}",
                self.grad_tol
            )));
        }
        if !(self.ls_shrink > 0.0 && self.ls_shrink < 1.0) {
            return Err(SolverError::InvalidConfig(format!(
                "line-search shrink factor must lie in (0, 1), got {}",
                self.ls_shrink
            )));
        }
        if !(self.ls_c1 > 0.0 && self.ls_c1 < 1.0) {
            return Err(SolverError::InvalidConfig(format!(
                "sufficient-decrease constant must lie in (0, 1), got {}",
                self.ls_c1
            )));
        }
        if self.max_iters == 0 {
            return Err(SolverError::InvalidConfig("max_iters must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of a dual solve.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub lambda_star: StructuredLagrangian,
    pub iterations: usize,
    /// ∞-norm of the chart gradient at the final iterate.
    pub grad_norm: f64,
    /// `max_k |c_k − Γ(P/Q*)_k|`, the entrywise moment mismatch.
    pub moment_residual: f64,
    /// Whether the induced matrix Λ* is positive definite (checked post hoc).
    pub lambda_matrix_pd: bool,
    pub lambda_matrix_min_eig: f64,
    pub objective_trace: Vec<f64>,
}

struct DualProblem<'a> {
    tables: HalfTables,
    p: Vec<f64>,
    c: &'a MomentSequence,
    weight: f64,
}

impl DualProblem<'_> {
    fn q_of(&self, params: &[f64]) -> Vec<f64> {
        self.tables.synthesize_real(&chart_decode(params))
    }

    fn value(&self, params: &[f64]) -> f64 {
        let q = self.q_of(params);
        let mut log_term = 0.0;
        for (pi, qi) in self.p.iter().zip(&q) {
            if *qi <= 0.0 {
                return f64::INFINITY;
            }
            log_term += pi * qi.ln();
        }
        let lambda = chart_decode(params);
        -self.weight * log_term + trace_term(&lambda, self.c)
    }

    fn gradient(&self, params: &[f64]) -> Vec<f64> {
        let q = self.q_of(params);
        let w: Vec<f64> = self.p.iter().zip(&q).map(|(pi, qi)| pi / qi).collect();
        let proj = self.tables.project(&w);
        let cv = self.c.values();
        let mut grad = Vec::with_capacity(2 * cv.len() - 1);
        grad.push(cv[0].re - self.weight * proj[0].re);
        for (cx, g) in cv[1..].iter().zip(&proj[1..]) {
            grad.push(2.0 * (cx.re - self.weight * g.re));
            grad.push(2.0 * (cx.im - self.weight * g.im));
        }
        grad
    }

    /// `max_k |c_k − moments(P/Q)_k|` at the given point.
    fn moment_residual(&self, params: &[f64]) -> f64 {
        let q = self.q_of(params);
        let w: Vec<f64> = self.p.iter().zip(&q).map(|(pi, qi)| pi / qi).collect();
        let proj = self.tables.project(&w);
        self.c
            .values()
            .iter()
            .zip(&proj)
            .map(|(cx, g)| (cx - g * self.weight).norm())
            .fold(0.0, f64::max)
    }
}

/// Dual objective `J_P` at `λ`; infinite outside the feasible region, an
/// error at the public surface.
pub fn objective(
    lambda: &StructuredLagrangian,
    p: &GridFunction,
    c: &MomentSequence,
    grid: TorusGrid,
) -> Result<f64, SolverError> {
    let problem = build_problem(lambda.omega(), p, c, grid)?;
    let v = problem.value(&lambda.free_params());
    if v.is_finite() {
        Ok(v)
    } else {
        Err(SolverError::InfeasiblePoint)
    }
}

/// Exact gradient of [`objective`] in the free-parameter chart: the chart
/// image of `c − Γ(P/Q)`.
pub fn gradient(
    lambda: &StructuredLagrangian,
    p: &GridFunction,
    c: &MomentSequence,
    grid: TorusGrid,
) -> Result<Vec<f64>, SolverError> {
    let problem = build_problem(lambda.omega(), p, c, grid)?;
    let params = lambda.free_params();
    if !problem.value(&params).is_finite() {
        return Err(SolverError::InfeasiblePoint);
    }
    Ok(problem.gradient(&params))
}

fn build_problem<'a>(
    omega: &MultiIndexSet,
    p: &GridFunction,
    c: &'a MomentSequence,
    grid: TorusGrid,
) -> Result<DualProblem<'a>, SolverError> {
    if p.grid() != grid {
        return Err(SolverError::GridMismatch("prior is sampled on a different grid".into()));
    }
    validate_geometry(omega, grid)?;
    Ok(DualProblem {
        tables: HalfTables::build(grid, omega),
        p: p.real_values(),
        c,
        weight: grid.weight(),
    })
}

/// Minimize the dual functional by BFGS from the flat start `λ_0 = c_0`.
///
/// Preconditions: the moment matrix of `c` is positive definite and the
/// prior `p` is strictly positive on its grid. The returned report carries
/// the post-hoc positivity check of Λ* and the full objective trace.
pub fn solve(
    p: &GridFunction,
    c: &MomentSequence,
    config: &SolverConfig,
) -> Result<SolveReport, SolverError> {
    config.validate()?;
    let omega = c.omega().clone();
    let grid = p.grid();
    validate_geometry(&omega, grid)?;
    let min_p = p.min_real();
    if min_p <= 0.0 {
        return Err(SolverError::PriorNotPositive { min: min_p });
    }
    let pd = is_positive_definite(&assemble_moment_matrix(c));
    if !pd.is_pd {
        return Err(SolverError::NotPositiveDefinite { min_eigenvalue: pd.min_eigenvalue });
    }

    let problem = DualProblem {
        tables: HalfTables::build(grid, &omega),
        p: p.real_values(),
        c,
        weight: grid.weight(),
    };

    let start = match &config.initial {
        Some(l) => l.clone(),
        None => StructuredLagrangian::flat(omega.clone(), c.zeroth()),
    };
    let x0 = start.free_params();
    if !problem.value(&x0).is_finite() {
        return Err(SolverError::InfeasibleStart);
    }

    let tol = config.grad_tol * c.zeroth().max(f64::MIN_POSITIVE);
    let outcome = bfgs(
        &x0,
        |x| problem.value(x),
        |x| problem.gradient(x),
        tol,
        config.max_iters,
        config.ls_shrink,
        config.ls_c1,
    );

    let lambda_star = StructuredLagrangian::from_free_params(omega, &outcome.x)?;
    let eig = hermitian_eigenvalues(&lambda_star.induced_matrix());
    let min_eig = *eig.first().expect("nonempty spectrum");
    let max_eig = *eig.last().expect("nonempty spectrum");
    let report = SolveReport {
        lambda_star,
        iterations: outcome.iterations,
        grad_norm: outcome.grad_inf_norm,
        moment_residual: problem.moment_residual(&outcome.x),
        lambda_matrix_pd: min_eig > 1e-10 * max_eig.abs(),
        lambda_matrix_min_eig: min_eig,
        objective_trace: outcome.trace,
    };
    if outcome.converged {
        Ok(report)
    } else {
        Err(SolverError::MaxIterations { report: Box::new(report) })
    }
}

fn validate_geometry(omega: &MultiIndexSet, grid: TorusGrid) -> Result<(), SolverError> {
    if grid.dimension() != omega.dimension() {
        return Err(SolverError::GridMismatch(format!(
            "grid dimension {} vs index set dimension {}",
            grid.dimension(),
            omega.dimension()
        )));
    }
    if grid.nodes_per_axis() <= 2 * omega.order() {
        return Err(SolverError::GridMismatch(format!(
            "grid m = {} aliases order n = {}",
            grid.nodes_per_axis(),
            omega.order()
        )));
    }
    Ok(())
}

/// Result of the non-convex least-squares baseline fit.
#[derive(Debug, Clone)]
pub struct L2Report {
    pub lambda: StructuredLagrangian,
    /// Final `Σ_nodes (P/Q − target)²`.
    pub residual: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    /// False when the iteration budget ran out while still descending.
    pub converged: bool,
}

/// Fit `P/Q` to a nonnegative target on the grid by minimizing the nodewise
/// squared error. The problem is not convex; this returns the local minimum
/// reached from the scale-matched flat start and is used only for
/// comparison against the moment-matching solve.
pub fn fit_l2_baseline(
    p: &GridFunction,
    target: &GridFunction,
    omega: &MultiIndexSet,
    config: &SolverConfig,
) -> Result<L2Report, SolverError> {
    config.validate()?;
    if p.grid() != target.grid() {
        return Err(SolverError::GridMismatch("prior and target grids differ".into()));
    }
    let grid = p.grid();
    validate_geometry(omega, grid)?;
    let min_p = p.min_real();
    if min_p <= 0.0 {
        return Err(SolverError::PriorNotPositive { min: min_p });
    }
    let t_vals = target.real_values();
    let min_t = t_vals.iter().copied().fold(f64::INFINITY, f64::min);
    if min_t < 0.0 {
        return Err(SolverError::TargetNegative { min: min_t });
    }

    let tables = HalfTables::build(grid, omega);
    let p_vals = p.real_values();
    let mean_p = p_vals.iter().sum::<f64>() / p_vals.len() as f64;
    let mean_t = (t_vals.iter().sum::<f64>() / t_vals.len() as f64).max(f64::MIN_POSITIVE);

    let value = |x: &[f64]| -> f64 {
        let q = tables.synthesize_real(&chart_decode(x));
        let mut acc = 0.0;
        for ((pi, qi), ti) in p_vals.iter().zip(&q).zip(&t_vals) {
            if *qi <= 0.0 {
                return f64::INFINITY;
            }
            let r = pi / qi - ti;
            acc += r * r;
        }
        acc
    };
    let grad = |x: &[f64]| -> Vec<f64> {
        let q = tables.synthesize_real(&chart_decode(x));
        let w: Vec<f64> = p_vals
            .iter()
            .zip(&q)
            .zip(&t_vals)
            .map(|((pi, qi), ti)| -2.0 * (pi / qi - ti) * pi / (qi * qi))
            .collect();
        let proj = tables.project(&w);
        let mut g = Vec::with_capacity(2 * proj.len() - 1);
        g.push(proj[0].re);
        for v in &proj[1..] {
            g.push(2.0 * v.re);
            g.push(2.0 * v.im);
        }
        g
    };

    let start = match &config.initial {
        Some(l) => l.clone(),
        None => StructuredLagrangian::flat(omega.clone(), mean_p / mean_t),
    };
    let x0 = start.free_params();
    if !value(&x0).is_finite() {
        return Err(SolverError::InfeasibleStart);
    }
    let g0 = grad(&x0);
    let tol = config.grad_tol * g0.iter().map(|v| v.abs()).fold(1.0, f64::max);
    let outcome = bfgs(&x0, value, grad, tol, config.max_iters, config.ls_shrink, config.ls_c1);

    Ok(L2Report {
        lambda: StructuredLagrangian::from_free_params(omega.clone(), &outcome.x)?,
        residual: value(&outcome.x),
        iterations: outcome.iterations,
        grad_norm: outcome.grad_inf_norm,
        converged: outcome.converged || outcome.stalled,
    })
}

struct BfgsOutcome {
    x: Vec<f64>,
    grad_inf_norm: f64,
    iterations: usize,
    trace: Vec<f64>,
    converged: bool,
    stalled: bool,
}

/// Dense inverse-Hessian BFGS with backtracking Armijo line search. The
/// objective may return `+∞` (infeasible trial point); such steps simply
/// fail the decrease test and get shrunk. The gradient is only requested at
/// accepted, feasible points.
fn bfgs(
    x0: &[f64],
    value: impl Fn(&[f64]) -> f64,
    gradient: impl Fn(&[f64]) -> Vec<f64>,
    grad_tol: f64,
    max_iters: usize,
    shrink: f64,
    c1: f64,
) -> BfgsOutcome {
    let dim = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let mut f = value(x.as_slice());
    let mut g = DVector::from_vec(gradient(x.as_slice()));
    let mut h = DMatrix::<f64>::identity(dim, dim);
    let mut trace = vec![f];
    let mut first_update = true;
    let mut stalled = false;
    let mut iterations = 0;

    let inf_norm = |v: &DVector<f64>| v.iter().map(|x| x.abs()).fold(0.0, f64::max);

    while iterations < max_iters {
        let g_norm = inf_norm(&g);
        if g_norm <= grad_tol {
            break;
        }
        let mut dir = -(&h * &g);
        let mut slope = dir.dot(&g);
        if !slope.is_finite() || slope >= 0.0 {
            // Curvature information went bad; restart from steepest descent.
            h = DMatrix::identity(dim, dim);
            dir = -g.clone();
            slope = dir.dot(&g);
        }

        // Backtracking with two acceptance rules: Armijo decrease while the
        // objective still resolves differences, and otherwise a strict drop
        // in the gradient norm — near the minimum the objective flattens to
        // machine precision long before the analytic gradient does.
        let flat_slack = 4.0 * f64::EPSILON * (1.0 + f.abs());
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-20 {
            let x_trial = &x + &dir * t;
            let f_trial = value(x_trial.as_slice());
            if f_trial <= f + c1 * t * slope {
                let g_trial = DVector::from_vec(gradient(x_trial.as_slice()));
                accepted = Some((x_trial, f_trial, g_trial));
                break;
            }
            if f_trial <= f + flat_slack {
                let g_trial = DVector::from_vec(gradient(x_trial.as_slice()));
                if inf_norm(&g_trial) < 0.999 * g_norm {
                    accepted = Some((x_trial, f_trial, g_trial));
                    break;
                }
            }
            t *= shrink;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            stalled = true;
            break;
        };
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if first_update {
                // Scale the initial inverse Hessian to the first curvature.
                h *= sy / y.dot(&y);
                first_update = false;
            }
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            let rho = 1.0 / sy;
            // H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ, expanded.
            let ss = &s * s.transpose();
            let hys = &hy * s.transpose();
            h += ss * (rho * (1.0 + rho * yhy)) - (&hys + hys.transpose()) * rho;
        }

        x = x_new;
        f = f_new;
        g = g_new;
        iterations += 1;
        trace.push(f);
    }

    let grad_inf_norm = inf_norm(&g);
    BfgsOutcome {
        x: x.as_slice().to_vec(),
        grad_inf_norm,
        iterations,
        trace,
        converged: grad_inf_norm <= grad_tol,
        stalled,
    }
}
