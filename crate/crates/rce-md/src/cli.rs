//! Command-line pipeline: truth synthesis, sample generation, estimation,
//! verification, baseline comparison, and ARMA export.
//!
//! Every command resolves its configuration from defaults, then an optional
//! `--config` JSON file, then explicit flags (flags win), and writes a
//! manifest next to its primary output echoing the fully resolved
//! configuration, so any produced file can be regenerated from its manifest.

use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::grid::{self, TorusGrid};
use crate::indexing::MultiIndexSet;
use crate::io::{
    self, ArmaFile, DensityFile, FieldMetaFile, FilterFile, IoError, ManifestFile, MomentsFile,
    ReportFile,
};
use crate::moments::{
    self, assemble_moment_matrix, is_positive_definite, MomentError, MomentSequence, PdReport,
    StatisticKind,
};
use crate::solver::{self, SolverConfig, SolverError};
use crate::spectral::{self, ModeCount, RationalSpectralDensity, SpectralError};
use crate::synth::{self, FilterCoefficients, RandomSource, SynthError};
use crate::arma::{extract_arma, ArmaError};

/// Classified command error; the code becomes the process exit status.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for CliError {}

fn usage(msg: impl Into<String>) -> CliError {
    CliError { code: 2, message: msg.into() }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError { code: 2, message: e.to_string() }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError { code: 2, message: e.to_string() }
    }
}

impl From<MomentError> for CliError {
    fn from(e: MomentError) -> Self {
        let code = match e {
            MomentError::DegenerateData => 4,
            _ => 2,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        let code = match &e {
            SynthError::UnstableFilter { .. } | SynthError::WrongTapCount { .. } => 3,
            SynthError::RecordTooShort(_) => 2,
            SynthError::NonPositiveOnSynthesisGrid => 9,
            SynthError::Spectral(inner) => return CliError::from_spectral(inner, e.to_string()),
            SynthError::Moment(_) => 2,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        let code = match &e {
            SolverError::NotPositiveDefinite { .. } => 5,
            SolverError::MaxIterations { .. } => 6,
            SolverError::GridMismatch(_) => 8,
            SolverError::InvalidConfig(_) => 2,
            _ => 9,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        CliError::from_spectral(&e, e.to_string())
    }
}

impl CliError {
    fn from_spectral(e: &SpectralError, message: String) -> Self {
        let code = match e {
            SpectralError::GridMismatch | SpectralError::DimensionMismatch { .. } => 8,
            SpectralError::Grid(_) => 8,
            SpectralError::Moment(_) => 2,
            _ => 9,
        };
        CliError { code, message }
    }
}

impl From<ArmaError> for CliError {
    fn from(e: ArmaError) -> Self {
        let code = match &e {
            ArmaError::NotSolved { .. } => 7,
            ArmaError::ReferenceMismatch { .. } => 8,
            ArmaError::ZeroLeadingTap => 3,
            ArmaError::Spectral(_) => 9,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<crate::grid::GridError> for CliError {
    fn from(e: crate::grid::GridError) -> Self {
        CliError { code: 8, message: e.to_string() }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "rce-md",
    version,
    about = "Rational spectral densities on the d-torus from trigonometric moments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a ground-truth rational density from filter tap arrays.
    GenTruth(GenTruthArgs),
    /// Draw a stationary sample field from a density file.
    Synth(SynthArgs),
    /// Estimate a density from a field or a moment file.
    Estimate(EstimateArgs),
    /// Check a density file against a moment file.
    Verify(VerifyArgs),
    /// Run the moment-matching estimator and the least-squares baseline side by side.
    CompareL2(CompareL2Args),
    /// Export a solved estimate as a difference-equation model.
    Arma(ArmaArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatisticChoice {
    Auto,
    Biased,
    Unbiased,
}

fn merge_config<T: Serialize + DeserializeOwned>(
    cli: &T,
    config: Option<&Path>,
) -> Result<T, CliError> {
    let mut base = match config {
        Some(path) => io::read_json::<serde_json::Value>(path)?,
        None => serde_json::Value::Object(Default::default()),
    };
    if !base.is_object() {
        return Err(usage("config file must hold a JSON object"));
    }
    let overlay = serde_json::to_value(cli)?;
    if let (Some(dst), Some(src)) = (base.as_object_mut(), overlay.as_object()) {
        for (k, v) in src {
            if !v.is_null() {
                dst.insert(k.clone(), v.clone());
            }
        }
    }
    Ok(serde_json::from_value(base)?)
}

fn write_manifest<T: Serialize>(
    command: &str,
    config: &T,
    outputs: &[PathBuf],
    primary: &Path,
) -> Result<PathBuf, CliError> {
    let manifest = ManifestFile {
        format_version: io::FORMAT_VERSION,
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        config: serde_json::to_value(config)?,
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
    };
    let path = primary.with_extension("manifest.json");
    io::write_json(&path, &manifest)?;
    Ok(path)
}

// ── gen-truth ────────────────────────────────────────────────────────────

#[derive(Parser, Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct GenTruthArgs {
    /// JSON config file; explicit flags override its entries.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long = "d")]
    pub d: Option<usize>,
    #[arg(long = "n")]
    pub n: Option<usize>,
    #[arg(long = "grid-m")]
    pub grid_m: Option<usize>,
    /// Filter tap file; defaults to the built-in 2-D order-2 example.
    #[arg(long)]
    pub filter: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write nodewise density values for plotting.
    #[arg(long = "grid-csv")]
    pub grid_csv: Option<PathBuf>,
    /// Also write the exact quadrature moments of the density.
    #[arg(long = "moments-out")]
    pub moments_out: Option<PathBuf>,
}

pub fn cmd_gen_truth(args: &GenTruthArgs) -> Result<Vec<PathBuf>, CliError> {
    let cfg = merge_config(args, args.config.as_deref())?;
    let out = cfg.out.clone().ok_or_else(|| usage("gen-truth requires --out"))?;
    let grid_m = cfg.grid_m.unwrap_or(64);

    let fc = match &cfg.filter {
        Some(path) => io::read_json::<FilterFile>(path)?.into_filter()?,
        None => {
            let fc = FilterCoefficients::default_truth_filter();
            if cfg.d.is_some_and(|d| d != fc.dimension())
                || cfg.n.is_some_and(|n| n != fc.order())
            {
                return Err(usage(
                    "the built-in filter is d = 2, n = 2; pass --filter for other shapes",
                ));
            }
            fc
        }
    };
    let grid = TorusGrid::new(fc.dimension(), grid_m);
    let phi = synth::truth_density(&fc, grid)?;

    let mut outputs = vec![out.clone()];
    io::write_json(&out, &DensityFile::from_density(&phi))?;
    if let Some(csv) = &cfg.grid_csv {
        io::write_grid_csv(csv, &phi.evaluate(grid)?)?;
        outputs.push(csv.clone());
    }
    if let Some(mpath) = &cfg.moments_out {
        let omega = MultiIndexSet::new(fc.dimension(), fc.order())
            .map_err(|e| usage(e.to_string()))?;
        let c = grid::fourier_coefficients(&phi.evaluate(grid)?, &omega)?;
        io::write_json(&mpath.clone(), &MomentsFile::from_sequence(&c, "exact-quadrature"))?;
        outputs.push(mpath.clone());
    }
    outputs.push(write_manifest("gen-truth", &cfg, &outputs, &out)?);
    println!("wrote density ({} outputs)", outputs.len());
    Ok(outputs)
}

// ── synth ────────────────────────────────────────────────────────────────

#[derive(Parser, Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct SynthArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Density coefficient file to sample from.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Samples per axis.
    #[arg(long = "N")]
    pub n_samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output field; `.csv` extension switches to the text format.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn cmd_synth(args: &SynthArgs) -> Result<Vec<PathBuf>, CliError> {
    let cfg = merge_config(args, args.config.as_deref())?;
    let input = cfg.input.clone().ok_or_else(|| usage("synth requires --in"))?;
    let out = cfg.out.clone().ok_or_else(|| usage("synth requires --out"))?;
    let n_samples = cfg.n_samples.unwrap_or(200);
    let seed = cfg.seed.unwrap_or(0);

    let density_file = io::read_json::<DensityFile>(&input)?;
    let phi = density_file.into_density()?;
    let rs = RandomSource::new(seed);
    let field = synth::generate_field(&phi, n_samples, &rs)?;

    io::write_field(&out, &field)?;
    let meta = FieldMetaFile {
        format_version: io::FORMAT_VERSION,
        d: field.dimension(),
        n_axis: field.samples_per_axis(),
        seed,
        algorithm: rs.algorithm().to_string(),
        density: Some(density_file),
    };
    let meta_path = out.with_extension("meta.json");
    io::write_json(&meta_path, &meta)?;
    let mut outputs = vec![out.clone(), meta_path];
    outputs.push(write_manifest("synth", &cfg, &outputs, &out)?);
    println!("wrote {}^{} field (seed {seed})", n_samples, field.dimension());
    Ok(outputs)
}

// ── estimate ─────────────────────────────────────────────────────────────

#[derive(Parser, Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct EstimateArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Sample field input.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Moment file input (alternative to --in).
    #[arg(long)]
    pub moments: Option<PathBuf>,
    #[arg(long = "d")]
    pub d: Option<usize>,
    #[arg(long = "n")]
    pub n: Option<usize>,
    #[arg(long = "grid-m")]
    pub grid_m: Option<usize>,
    /// Relative gradient tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long = "max-iters")]
    pub max_iters: Option<usize>,
    #[arg(long, value_enum)]
    pub statistic: Option<StatisticChoice>,
    /// Density file whose numerator serves as the prior P (default P ≡ 1).
    #[arg(long)]
    pub prior: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long = "density-out")]
    pub density_out: Option<PathBuf>,
    #[arg(long = "grid-csv")]
    pub grid_csv: Option<PathBuf>,
    #[arg(long = "moments-out")]
    pub moments_out: Option<PathBuf>,
}

struct SelectedMoments {
    c: MomentSequence,
    kind: Option<StatisticKind>,
    provenance: String,
}

fn load_moments(cfg: &EstimateArgs) -> Result<SelectedMoments, CliError> {
    match (&cfg.input, &cfg.moments) {
        (Some(_), Some(_)) => Err(usage("pass either --in or --moments, not both")),
        (None, None) => Err(usage("estimate requires --in or --moments")),
        (None, Some(mpath)) => {
            let mf = io::read_json::<MomentsFile>(mpath)?;
            if cfg.d.is_some_and(|d| d != mf.d) || cfg.n.is_some_and(|n| n != mf.n) {
                return Err(CliError {
                    code: 8,
                    message: format!(
                        "moment file is (d = {}, n = {}) but flags request (d = {:?}, n = {:?})",
                        mf.d, mf.n, cfg.d, cfg.n
                    ),
                });
            }
            Ok(SelectedMoments {
                c: mf.into_sequence()?,
                kind: None,
                provenance: mf.provenance.clone(),
            })
        }
        (Some(fpath), None) => {
            let field = io::read_field(fpath)?;
            let d = cfg.d.unwrap_or(field.dimension());
            if d != field.dimension() {
                return Err(CliError {
                    code: 8,
                    message: format!(
                        "field is {}-dimensional but --d {} was given",
                        field.dimension(),
                        d
                    ),
                });
            }
            let n = cfg.n.unwrap_or(2);
            let omega = MultiIndexSet::new(d, n).map_err(|e| usage(e.to_string()))?;
            let (c, kind) = match cfg.statistic.unwrap_or(StatisticChoice::Auto) {
                StatisticChoice::Auto => moments::select_statistic(&field, &omega)?,
                StatisticChoice::Biased => {
                    (moments::estimate_biased(&field, &omega)?, StatisticKind::Biased)
                }
                StatisticChoice::Unbiased => {
                    (moments::estimate_unbiased(&field, &omega)?, StatisticKind::Unbiased)
                }
            };
            let provenance = match kind {
                StatisticKind::Biased => "biased",
                StatisticKind::Unbiased => "unbiased",
            }
            .to_string();
            Ok(SelectedMoments { c, kind: Some(kind), provenance })
        }
    }
}

fn load_prior(
    prior: Option<&Path>,
    omega: &MultiIndexSet,
) -> Result<MomentSequence, CliError> {
    match prior {
        Some(path) => {
            let df = io::read_json::<DensityFile>(path)?;
            let phi = df.into_density()?;
            if phi.numerator().omega().dimension() != omega.dimension() {
                return Err(CliError {
                    code: 8,
                    message: "prior dimension does not match the moment index set".into(),
                });
            }
            Ok(phi.numerator().clone())
        }
        None => {
            let mut values = vec![Complex64::ZERO; omega.half_len()];
            values[0] = Complex64::ONE;
            Ok(MomentSequence::new(omega.clone(), values).expect("flat prior is valid"))
        }
    }
}

pub fn cmd_estimate(args: &EstimateArgs) -> Result<Vec<PathBuf>, CliError> {
    let cfg = merge_config(args, args.config.as_deref())?;
    let out = cfg.out.clone().ok_or_else(|| usage("estimate requires --out"))?;
    let selected = load_moments(&cfg)?;
    let omega = selected.c.omega().clone();
    let grid_m = cfg.grid_m.unwrap_or(64);
    let grid = TorusGrid::new(omega.dimension(), grid_m);

    let prior_seq = load_prior(cfg.prior.as_deref(), &omega)?;
    let prior_values = grid::synthesize(&prior_seq, grid);

    let solver_cfg = SolverConfig {
        grid_m,
        grad_tol: cfg.tol.unwrap_or(1e-8),
        max_iters: cfg.max_iters.unwrap_or(500),
        ..Default::default()
    };
    let report = solver::solve(&prior_values, &selected.c, &solver_cfg)?;

    let report_file =
        ReportFile::from_report(&report, &prior_seq, &selected.c, grid_m, selected.kind);
    io::write_json(&out, &report_file)?;
    let mut outputs = vec![out.clone()];

    let phi = RationalSpectralDensity::new(prior_seq.clone(), report.lambda_star.clone())?;
    if let Some(dpath) = &cfg.density_out {
        io::write_json(dpath, &DensityFile::from_density(&phi))?;
        outputs.push(dpath.clone());
    }
    if let Some(csv) = &cfg.grid_csv {
        io::write_grid_csv(csv, &phi.evaluate(grid)?)?;
        outputs.push(csv.clone());
    }
    if let Some(mpath) = &cfg.moments_out {
        io::write_json(mpath, &MomentsFile::from_sequence(&selected.c, &selected.provenance))?;
        outputs.push(mpath.clone());
    }
    outputs.push(write_manifest("estimate", &cfg, &outputs, &out)?);
    println!(
        "solved in {} iterations: moment residual {:.3e}, Λ* pd = {}",
        report.iterations, report.moment_residual, report.lambda_matrix_pd
    );
    Ok(outputs)
}

// ── verify ───────────────────────────────────────────────────────────────

#[derive(Parser, Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct VerifyArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Density file to check.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Moment file to check against.
    #[arg(long)]
    pub moments: Option<PathBuf>,
    #[arg(long = "grid-m")]
    pub grid_m: Option<usize>,
    /// Grid used for mode counting; sharp ridges need a fine raster.
    /// Defaults to 4096 per axis in up to two dimensions, else --grid-m.
    #[arg(long = "modes-grid-m")]
    pub modes_grid_m: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Serialized verification outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyFile {
    pub format_version: u32,
    pub residual_linf: f64,
    pub residual_l2: f64,
    pub moment_matrix: PdReport,
    pub lambda_matrix_pd: bool,
    pub lambda_matrix_min_eig: f64,
    pub modes: ModeCount,
    pub mode_bound: usize,
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<Vec<PathBuf>, CliError> {
    let cfg = merge_config(args, args.config.as_deref())?;
    let input = cfg.input.clone().ok_or_else(|| usage("verify requires --in"))?;
    let mpath = cfg.moments.clone().ok_or_else(|| usage("verify requires --moments"))?;
    let grid_m = cfg.grid_m.unwrap_or(64);

    let phi = io::read_json::<DensityFile>(&input)?.into_density()?;
    let mf = io::read_json::<MomentsFile>(&mpath)?;
    let c = mf.into_sequence()?;
    let q_omega = phi.denominator().omega();
    if q_omega.dimension() != c.omega().dimension() || q_omega.order() != c.omega().order() {
        return Err(CliError {
            code: 8,
            message: format!(
                "density is (d = {}, n = {}) but moments are (d = {}, n = {})",
                q_omega.dimension(),
                q_omega.order(),
                c.omega().dimension(),
                c.omega().order()
            ),
        });
    }

    let d = c.omega().dimension();
    let grid = TorusGrid::new(d, grid_m);
    let residual = spectral::verify_moments(&phi, &c, grid)?;
    let moment_matrix = is_positive_definite(&assemble_moment_matrix(&c));
    let eig = moments::hermitian_eigenvalues(&phi.denominator().induced_matrix());
    let lambda_min = *eig.first().expect("nonempty spectrum");
    let lambda_max = *eig.last().expect("nonempty spectrum");
    let modes_m = cfg.modes_grid_m.unwrap_or(if d <= 2 { 4096 } else { grid_m });
    let modes = spectral::count_modes(&phi, TorusGrid::new(d, modes_m))?;
    let bound = spectral::mode_bound(c.omega().order(), c.omega().dimension());

    let result = VerifyFile {
        format_version: io::FORMAT_VERSION,
        residual_linf: residual.linf,
        residual_l2: residual.l2,
        moment_matrix,
        lambda_matrix_pd: lambda_min > 1e-10 * lambda_max.abs(),
        lambda_matrix_min_eig: lambda_min,
        modes,
        mode_bound: bound,
    };
    println!("moment residual: linf {:.3e}, l2 {:.3e}", residual.linf, residual.l2);
    println!(
        "moment matrix pd: {} (min eig {:.3e}); Λ pd: {} (min eig {:.3e})",
        result.moment_matrix.is_pd,
        result.moment_matrix.min_eigenvalue,
        result.lambda_matrix_pd,
        result.lambda_matrix_min_eig
    );
    println!(
        "modes: {} (bound {}){}",
        result.modes.count,
        result.mode_bound,
        if result.modes.plateau { " [plateau]" } else { "" }
    );

    let mut outputs = Vec::new();
    if let Some(opath) = &cfg.out {
        io::write_json(opath, &result)?;
        outputs.push(opath.clone());
        outputs.push(write_manifest("verify", &cfg, &outputs, opath)?);
    }
    Ok(outputs)
}

// ── compare-l2 ───────────────────────────────────────────────────────────

#[derive(Parser, Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct CompareL2Args {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Sample field input.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[arg(long = "d")]
    pub d: Option<usize>,
    #[arg(long = "n")]
    pub n: Option<usize>,
    #[arg(long = "grid-m")]
    pub grid_m: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long = "max-iters")]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub prior: Option<PathBuf>,
    /// Truth density for total-variation comparisons.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long = "convex-out")]
    pub convex_out: Option<PathBuf>,
    #[arg(long = "l2-out")]
    pub l2_out: Option<PathBuf>,
}

/// Paired outcome of the moment-matching estimator and the baseline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonFile {
    pub format_version: u32,
    pub statistic: StatisticKind,
    pub convex_moment_residual: f64,
    pub convex_iterations: usize,
    pub l2_moment_residual: f64,
    pub l2_objective: f64,
    pub l2_iterations: usize,
    pub l2_converged: bool,
    pub tv_convex_to_truth: Option<f64>,
    pub tv_l2_to_truth: Option<f64>,
}

pub fn cmd_compare_l2(args: &CompareL2Args) -> Result<Vec<PathBuf>, CliError> {
    let cfg = merge_config(args, args.config.as_deref())?;
    let input = cfg.input.clone().ok_or_else(|| usage("compare-l2 requires --in"))?;
    let out = cfg.out.clone().ok_or_else(|| usage("compare-l2 requires --out"))?;

    let field = io::read_field(&input)?;
    let d = cfg.d.unwrap_or(field.dimension());
    let n = cfg.n.unwrap_or(2);
    let omega = MultiIndexSet::new(d, n).map_err(|e| usage(e.to_string()))?;
    let grid_m = cfg.grid_m.unwrap_or(64);
    let grid = TorusGrid::new(d, grid_m);

    let (c, kind) = moments::select_statistic(&field, &omega)?;
    let prior_seq = load_prior(cfg.prior.as_deref(), &omega)?;
    let prior_values = grid::synthesize(&prior_seq, grid);

    let solver_cfg = SolverConfig {
        grid_m,
        grad_tol: cfg.tol.unwrap_or(1e-8),
        max_iters: cfg.max_iters.unwrap_or(500),
        ..Default::default()
    };
    let convex = solver::solve(&prior_values, &c, &solver_cfg)?;
    let convex_phi = RationalSpectralDensity::new(prior_seq.clone(), convex.lambda_star.clone())?;

    let target = moments::periodogram(&field, grid);
    let l2 = solver::fit_l2_baseline(&prior_values, &target, &omega, &solver_cfg)?;
    let l2_phi = RationalSpectralDensity::new(prior_seq.clone(), l2.lambda.clone())?;
    let l2_residual = spectral::verify_moments(&l2_phi, &c, grid)?;

    let (tv_convex, tv_l2) = match &cfg.truth {
        Some(tpath) => {
            let truth = io::read_json::<DensityFile>(tpath)?.into_density()?;
            let truth_values = truth.normalized(grid)?.0.evaluate(grid)?;
            let conv_values = convex_phi.normalized(grid)?.0.evaluate(grid)?;
            let l2_values = l2_phi.normalized(grid)?.0.evaluate(grid)?;
            (
                Some(spectral::total_variation(&conv_values, &truth_values)?),
                Some(spectral::total_variation(&l2_values, &truth_values)?),
            )
        }
        None => (None, None),
    };

    let result = ComparisonFile {
        format_version: io::FORMAT_VERSION,
        statistic: kind,
        convex_moment_residual: convex.moment_residual,
        convex_iterations: convex.iterations,
        l2_moment_residual: l2_residual.linf,
        l2_objective: l2.residual,
        l2_iterations: l2.iterations,
        l2_converged: l2.converged,
        tv_convex_to_truth: tv_convex,
        tv_l2_to_truth: tv_l2,
    };
    io::write_json(&out, &result)?;
    let mut outputs = vec![out.clone()];
    if let Some(path) = &cfg.convex_out {
        io::write_json(path, &DensityFile::from_density(&convex_phi))?;
        outputs.push(path.clone());
    }
    if let Some(path) = &cfg.l2_out {
        io::write_json(path, &DensityFile::from_density(&l2_phi))?;
        outputs.push(path.clone());
    }
    outputs.push(write_manifest("compare-l2", &cfg, &outputs, &out)?);
    println!(
        "moment residual: convex {:.3e}, baseline {:.3e}",
        result.convex_moment_residual, result.l2_moment_residual
    );
    Ok(outputs)
}

// ── arma ─────────────────────────────────────────────────────────────────

#[derive(Parser, Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ArmaArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Solve report to export.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Filter file supplying the known AR polynomial.
    #[arg(long = "ar-ref")]
    pub ar_ref: Option<PathBuf>,
    /// Largest admissible moment residual.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn cmd_arma(args: &ArmaArgs) -> Result<Vec<PathBuf>, CliError> {
    let cfg = merge_config(args, args.config.as_deref())?;
    let rpath = cfg.report.clone().ok_or_else(|| usage("arma requires --report"))?;
    let out = cfg.out.clone().ok_or_else(|| usage("arma requires --out"))?;
    let tol = cfg.tol.unwrap_or(1e-6);

    let report = io::read_json::<ReportFile>(&rpath)?;
    let phi = report.into_density()?;
    let ar_ref = match &cfg.ar_ref {
        Some(path) => Some(io::read_json::<FilterFile>(path)?.into_filter()?),
        None => None,
    };
    let model = extract_arma(&phi, report.moment_residual, tol, ar_ref.as_ref())?;
    io::write_json(&out, &ArmaFile::from_model(&model))?;
    let mut outputs = vec![out.clone()];
    outputs.push(write_manifest("arma", &cfg, &outputs, &out)?);
    println!("wrote {} model", model.form().as_str());
    Ok(outputs)
}

// ── entry point ──────────────────────────────────────────────────────────

/// Parse arguments, honor `RCE_MD_THREADS`, run the command, and map errors
/// onto exit codes: 2 usage/format, 3 filter, 4 degenerate data, 5 moment
/// matrix not positive definite, 6 no convergence, 7 unsolved estimate,
/// 8 shape/grid mismatch, 9 other solver domain errors.
pub fn run() -> i32 {
    if let Ok(raw) = std::env::var("RCE_MD_THREADS") {
        match raw.parse::<usize>() {
            Ok(threads) if threads > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
            }
            _ => {
                eprintln!("RCE_MD_THREADS must be a positive integer, got {raw:?}");
                return 2;
            }
        }
    }
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenTruth(args) => cmd_gen_truth(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Verify(args) => cmd_verify(args),
        Command::CompareL2(args) => cmd_compare_l2(args),
        Command::Arma(args) => cmd_arma(args),
    };
    match result {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
