//! On-disk formats: JSON for coefficients, moments, reports and models;
//! CSV for grid values; a flat little-endian binary layout (with CSV
//! fallback) for large sample fields. Every format carries a
//! `format_version` field.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

use crate::arma::ArmaModel;
use crate::grid::{self, TorusGrid};
use crate::indexing::MultiIndexSet;
use crate::moments::{LatticeField, MomentSequence, StatisticKind};
use crate::solver::{SolveReport, StructuredLagrangian};
use crate::spectral::RationalSpectralDensity;
use crate::synth::FilterCoefficients;

pub const FORMAT_VERSION: u32 = 1;
const FIELD_MAGIC: &[u8; 8] = b"RCEFLD1\0";

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("bad file format: {0}")]
    Format(String),
}

fn format_err(msg: impl Into<String>) -> IoError {
    IoError::Format(msg.into())
}

/// One complex coefficient tagged with its multi-index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoeffEntry {
    pub k: Vec<i32>,
    pub re: f64,
    pub im: f64,
}

pub fn entries_from_half(omega: &MultiIndexSet, values: &[Complex64]) -> Vec<CoeffEntry> {
    omega
        .half()
        .iter()
        .zip(values)
        .map(|(k, v)| CoeffEntry { k: k.clone(), re: v.re, im: v.im })
        .collect()
}

pub fn half_from_entries(
    omega: &MultiIndexSet,
    entries: &[CoeffEntry],
) -> Result<Vec<Complex64>, IoError> {
    let mut out = vec![None; omega.half_len()];
    for e in entries {
        let (pos, conj) = omega
            .half_position(&e.k)
            .map_err(|err| format_err(format!("coefficient index {:?}: {err}", e.k)))?;
        let v = Complex64::new(e.re, e.im);
        let v = if conj { v.conj() } else { v };
        if out[pos].is_some() {
            return Err(format_err(format!("duplicate coefficient for {:?}", e.k)));
        }
        out[pos] = Some(v);
    }
    out.into_iter()
        .enumerate()
        .map(|(pos, v)| {
            v.ok_or_else(|| {
                format_err(format!("missing coefficient for {:?}", omega.half()[pos]))
            })
        })
        .collect()
}

/// Rational density coefficients: numerator and denominator half-sets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityFile {
    pub format_version: u32,
    pub d: usize,
    pub n: usize,
    pub p: Vec<CoeffEntry>,
    pub lambda: Vec<CoeffEntry>,
}

impl DensityFile {
    pub fn from_density(phi: &RationalSpectralDensity) -> Self {
        let p_omega = phi.numerator().omega();
        let q_omega = phi.denominator().omega();
        Self {
            format_version: FORMAT_VERSION,
            d: q_omega.dimension(),
            n: q_omega.order(),
            p: entries_from_half(p_omega, phi.numerator().values()),
            lambda: entries_from_half(q_omega, phi.denominator().coefficients()),
        }
    }

    pub fn into_density(&self) -> Result<RationalSpectralDensity, IoError> {
        let omega = MultiIndexSet::new(self.d, self.n)
            .map_err(|e| format_err(format!("bad index set: {e}")))?;
        let p = MomentSequence::new(omega.clone(), half_from_entries(&omega, &self.p)?)
            .map_err(|e| format_err(format!("bad numerator: {e}")))?;
        let lambda =
            StructuredLagrangian::new(omega.clone(), half_from_entries(&omega, &self.lambda)?)
                .map_err(|e| format_err(format!("bad denominator: {e}")))?;
        RationalSpectralDensity::new(p, lambda)
            .map_err(|e| format_err(format!("inconsistent density: {e}")))
    }
}

/// A moment sequence plus how it was obtained.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentsFile {
    pub format_version: u32,
    pub d: usize,
    pub n: usize,
    pub provenance: String,
    pub values: Vec<CoeffEntry>,
}

impl MomentsFile {
    pub fn from_sequence(c: &MomentSequence, provenance: &str) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            d: c.omega().dimension(),
            n: c.omega().order(),
            provenance: provenance.to_string(),
            values: entries_from_half(c.omega(), c.values()),
        }
    }

    pub fn into_sequence(&self) -> Result<MomentSequence, IoError> {
        let omega = MultiIndexSet::new(self.d, self.n)
            .map_err(|e| format_err(format!("bad index set: {e}")))?;
        MomentSequence::new(omega.clone(), half_from_entries(&omega, &self.values)?)
            .map_err(|e| format_err(format!("bad moment sequence: {e}")))
    }
}

/// Solve outcome: scalars, the solved coefficients, and the inputs needed to
/// reproduce or verify the run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportFile {
    pub format_version: u32,
    pub d: usize,
    pub n: usize,
    pub grid_m: usize,
    pub statistic: Option<StatisticKind>,
    pub iterations: usize,
    pub grad_norm: f64,
    pub moment_residual: f64,
    pub lambda_matrix_pd: bool,
    pub lambda_matrix_min_eig: f64,
    pub lambda: Vec<CoeffEntry>,
    pub p: Vec<CoeffEntry>,
    pub moments: Vec<CoeffEntry>,
    pub objective_trace: Vec<f64>,
}

impl ReportFile {
    pub fn from_report(
        report: &SolveReport,
        p: &MomentSequence,
        moments: &MomentSequence,
        grid_m: usize,
        statistic: Option<StatisticKind>,
    ) -> Self {
        let omega = report.lambda_star.omega();
        Self {
            format_version: FORMAT_VERSION,
            d: omega.dimension(),
            n: omega.order(),
            grid_m,
            statistic,
            iterations: report.iterations,
            grad_norm: report.grad_norm,
            moment_residual: report.moment_residual,
            lambda_matrix_pd: report.lambda_matrix_pd,
            lambda_matrix_min_eig: report.lambda_matrix_min_eig,
            lambda: entries_from_half(omega, report.lambda_star.coefficients()),
            p: entries_from_half(p.omega(), p.values()),
            moments: entries_from_half(moments.omega(), moments.values()),
            objective_trace: report.objective_trace.clone(),
        }
    }

    pub fn into_density(&self) -> Result<RationalSpectralDensity, IoError> {
        let omega = MultiIndexSet::new(self.d, self.n)
            .map_err(|e| format_err(format!("bad index set: {e}")))?;
        let p = MomentSequence::new(omega.clone(), half_from_entries(&omega, &self.p)?)
            .map_err(|e| format_err(format!("bad numerator: {e}")))?;
        let lambda =
            StructuredLagrangian::new(omega.clone(), half_from_entries(&omega, &self.lambda)?)
                .map_err(|e| format_err(format!("bad lambda: {e}")))?;
        RationalSpectralDensity::new(p, lambda)
            .map_err(|e| format_err(format!("inconsistent density: {e}")))
    }

    pub fn into_moments(&self) -> Result<MomentSequence, IoError> {
        let omega = MultiIndexSet::new(self.d, self.n)
            .map_err(|e| format_err(format!("bad index set: {e}")))?;
        MomentSequence::new(omega.clone(), half_from_entries(&omega, &self.moments)?)
            .map_err(|e| format_err(format!("bad moments: {e}")))
    }
}

/// Serialized ARMA model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArmaFile {
    pub format_version: u32,
    pub d: usize,
    pub n: usize,
    pub form: String,
    pub ar: Vec<CoeffEntry>,
    pub rhs_weights: Vec<CoeffEntry>,
    pub lambda: Vec<CoeffEntry>,
    pub p: Vec<CoeffEntry>,
}

impl ArmaFile {
    pub fn from_model(model: &ArmaModel) -> Self {
        let omega = model.lambda().omega();
        let kappa = omega.kappa();
        let tag = |values: &[Complex64]| -> Vec<CoeffEntry> {
            values
                .iter()
                .enumerate()
                .map(|(i, v)| CoeffEntry { k: kappa.kappa(i), re: v.re, im: v.im })
                .collect()
        };
        Self {
            format_version: FORMAT_VERSION,
            d: model.dimension(),
            n: model.order(),
            form: model.form().as_str().to_string(),
            ar: tag(model.ar_taps()),
            rhs_weights: tag(model.rhs_weights()),
            lambda: entries_from_half(omega, model.lambda().coefficients()),
            p: entries_from_half(model.numerator().omega(), model.numerator().values()),
        }
    }

    pub fn implied_density(&self) -> Result<RationalSpectralDensity, IoError> {
        let omega = MultiIndexSet::new(self.d, self.n)
            .map_err(|e| format_err(format!("bad index set: {e}")))?;
        let p = MomentSequence::new(omega.clone(), half_from_entries(&omega, &self.p)?)
            .map_err(|e| format_err(format!("bad numerator: {e}")))?;
        let lambda =
            StructuredLagrangian::new(omega.clone(), half_from_entries(&omega, &self.lambda)?)
                .map_err(|e| format_err(format!("bad lambda: {e}")))?;
        RationalSpectralDensity::new(p, lambda)
            .map_err(|e| format_err(format!("inconsistent density: {e}")))
    }
}

/// Filter tap arrays for gen-truth and as an ARMA AR reference.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterFile {
    pub format_version: u32,
    pub d: usize,
    pub n: usize,
    pub b: Vec<CoeffEntry>,
    pub a: Vec<CoeffEntry>,
}

impl FilterFile {
    pub fn from_filter(fc: &FilterCoefficients) -> Self {
        let kappa = crate::indexing::FlatIndexMap::new(fc.dimension(), fc.order()).unwrap();
        let tag = |values: &[Complex64]| -> Vec<CoeffEntry> {
            values
                .iter()
                .enumerate()
                .map(|(i, v)| CoeffEntry { k: kappa.kappa(i), re: v.re, im: v.im })
                .collect()
        };
        Self {
            format_version: FORMAT_VERSION,
            d: fc.dimension(),
            n: fc.order(),
            b: tag(fc.numerator_taps()),
            a: tag(fc.denominator_taps()),
        }
    }

    pub fn into_filter(&self) -> Result<FilterCoefficients, IoError> {
        let kappa = crate::indexing::FlatIndexMap::new(self.d, self.n)
            .map_err(|e| format_err(format!("bad box: {e}")))?;
        let untag = |entries: &[CoeffEntry]| -> Result<Vec<Complex64>, IoError> {
            let mut out = vec![None; kappa.len()];
            for e in entries {
                if e.k.len() != self.d
                    || e.k.iter().any(|c| *c < 0 || *c as usize > self.n)
                {
                    return Err(format_err(format!("tap index {:?} outside {{0..n}}^d", e.k)));
                }
                let mut flat = 0usize;
                for c in &e.k {
                    flat = flat * (self.n + 1) + *c as usize;
                }
                out[flat] = Some(Complex64::new(e.re, e.im));
            }
            out.into_iter()
                .enumerate()
                .map(|(i, v)| {
                    v.ok_or_else(|| format_err(format!("missing tap for {:?}", kappa.kappa(i))))
                })
                .collect()
        };
        FilterCoefficients::new(self.d, self.n, untag(&self.b)?, untag(&self.a)?)
            .map_err(|e| format_err(format!("bad filter: {e}")))
    }
}

/// Sidecar metadata for generated fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldMetaFile {
    pub format_version: u32,
    pub d: usize,
    pub n_axis: usize,
    pub seed: u64,
    pub algorithm: String,
    pub density: Option<DensityFile>,
}

/// Resolved-run manifest written next to every command output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestFile {
    pub format_version: u32,
    pub artifact_version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub outputs: Vec<String>,
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    let data = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&data)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut out = serde_json::to_string_pretty(value)?;
    out.push('\n');
    fs::write(path, out)?;
    Ok(())
}

/// Write a field: flat little-endian binary unless the path ends in `.csv`.
///
/// Binary layout: 8-byte magic `RCEFLD1\0`, then little-endian `u32`
/// format version, `u32` dimension, `u64` samples per axis, then `re, im`
/// f64 pairs in row-major order (axis 1 slowest).
pub fn write_field(path: &Path, field: &LatticeField) -> Result<(), IoError> {
    if path.extension().is_some_and(|e| e == "csv") {
        return write_field_csv(path, field);
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(FIELD_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(field.dimension() as u32).to_le_bytes())?;
    w.write_all(&(field.samples_per_axis() as u64).to_le_bytes())?;
    for v in field.values() {
        w.write_all(&v.re.to_le_bytes())?;
        w.write_all(&v.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn write_field_csv(path: &Path, field: &LatticeField) -> Result<(), IoError> {
    let d = field.dimension();
    let n_axis = field.samples_per_axis();
    let mut w = BufWriter::new(fs::File::create(path)?);
    let header: Vec<String> = (1..=d).map(|j| format!("t{j}")).collect();
    writeln!(w, "{},re,im", header.join(","))?;
    let mut t = vec![0usize; d];
    for v in field.values() {
        let coords: Vec<String> = t.iter().map(|x| x.to_string()).collect();
        writeln!(w, "{},{:.17e},{:.17e}", coords.join(","), v.re, v.im)?;
        let mut j = d;
        loop {
            if j == 0 {
                break;
            }
            j -= 1;
            t[j] += 1;
            if t[j] < n_axis {
                break;
            }
            t[j] = 0;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a field written by [`write_field`]; the format is sniffed from the
/// leading bytes, so either layout loads regardless of extension.
pub fn read_field(path: &Path) -> Result<LatticeField, IoError> {
    let mut file = fs::File::open(path)?;
    let mut magic = [0u8; 8];
    let got = file.read(&mut magic)?;
    if got == 8 && &magic == FIELD_MAGIC {
        let mut buf4 = [0u8; 4];
        file.read_exact(&mut buf4)?;
        let version = u32::from_le_bytes(buf4);
        if version != FORMAT_VERSION {
            return Err(format_err(format!("unsupported field format version {version}")));
        }
        file.read_exact(&mut buf4)?;
        let d = u32::from_le_bytes(buf4) as usize;
        let mut buf8 = [0u8; 8];
        file.read_exact(&mut buf8)?;
        let n_axis = u64::from_le_bytes(buf8) as usize;
        let total = n_axis
            .checked_pow(d as u32)
            .ok_or_else(|| format_err("field header overflows"))?;
        let mut values = Vec::with_capacity(total);
        let mut pair = [0u8; 16];
        for _ in 0..total {
            file.read_exact(&mut pair)?;
            let re = f64::from_le_bytes(pair[0..8].try_into().unwrap());
            let im = f64::from_le_bytes(pair[8..16].try_into().unwrap());
            values.push(Complex64::new(re, im));
        }
        return LatticeField::new(d, n_axis, values)
            .map_err(|e| format_err(format!("bad field payload: {e}")));
    }
    read_field_csv(path)
}

fn read_field_csv(path: &Path) -> Result<LatticeField, IoError> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut rows: Vec<(Vec<usize>, Complex64)> = Vec::new();
    let mut d = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || (lineno == 0 && trimmed.starts_with('t')) {
            continue;
        }
        let cols: Vec<&str> = trimmed.split(',').collect();
        if cols.len() < 3 {
            return Err(format_err(format!("line {}: need t-indices, re, im", lineno + 1)));
        }
        let this_d = cols.len() - 2;
        if d == 0 {
            d = this_d;
        } else if d != this_d {
            return Err(format_err(format!("line {}: inconsistent column count", lineno + 1)));
        }
        let parse =
            |s: &str| s.trim().parse::<f64>().map_err(|e| format_err(format!("line {}: {e}", lineno + 1)));
        let idx: Vec<usize> = cols[..this_d]
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|e| format_err(format!("line {}: {e}", lineno + 1)))
            })
            .collect::<Result<_, _>>()?;
        let re = parse(cols[this_d])?;
        let im = parse(cols[this_d + 1])?;
        rows.push((idx, Complex64::new(re, im)));
    }
    if rows.is_empty() {
        return Err(format_err("empty field file"));
    }
    let n_axis = rows.iter().flat_map(|(idx, _)| idx.iter().copied()).max().unwrap() + 1;
    let total = n_axis.pow(d as u32);
    if rows.len() != total {
        return Err(format_err(format!(
            "field has {} rows but a {}^{} box needs {}",
            rows.len(),
            n_axis,
            d,
            total
        )));
    }
    let mut values = vec![Complex64::ZERO; total];
    for (idx, v) in rows {
        let mut flat = 0usize;
        for x in &idx {
            flat = flat * n_axis + x;
        }
        values[flat] = v;
    }
    LatticeField::new(d, n_axis, values).map_err(|e| format_err(format!("bad field payload: {e}")))
}

/// Plot-ready CSV of grid values: node coordinates then the real value.
pub fn write_grid_csv(
    path: &Path,
    values: &grid::GridFunction,
) -> Result<(), IoError> {
    let g: TorusGrid = values.grid();
    let mut w = BufWriter::new(fs::File::create(path)?);
    let header: Vec<String> = (1..=g.dimension()).map(|j| format!("theta{j}")).collect();
    writeln!(w, "{},value", header.join(","))?;
    for node in 0..g.len() {
        let coords: Vec<String> = g.theta(node).iter().map(|t| format!("{t:.12}")).collect();
        writeln!(w, "{},{:.17e}", coords.join(","), values.values()[node].re)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    #[test]
    fn density_file_round_trip() {
        let fc = FilterCoefficients::default_truth_filter();
        let phi = synth::truth_density(&fc, TorusGrid::new(2, 24)).unwrap();
        let file = DensityFile::from_density(&phi);
        let json = serde_json::to_string(&file).unwrap();
        let parsed: DensityFile = serde_json::from_str(&json).unwrap();
        let back = parsed.into_density().unwrap();
        assert_eq!(phi, back);
    }

    #[test]
    fn field_binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.bin");
        let values: Vec<Complex64> =
            (0..16).map(|i| Complex64::new(i as f64, -(i as f64) * 0.5)).collect();
        let field = LatticeField::new(2, 4, values).unwrap();
        write_field(&path, &field).unwrap();
        let back = read_field(&path).unwrap();
        assert_eq!(field, back);
    }

    #[test]
    fn field_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.csv");
        let values: Vec<Complex64> =
            (0..9).map(|i| Complex64::new((i as f64).sin(), (i as f64).cos())).collect();
        let field = LatticeField::new(2, 3, values).unwrap();
        write_field(&path, &field).unwrap();
        let back = read_field(&path).unwrap();
        for (a, b) in field.values().iter().zip(back.values()) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn half_entries_reject_missing_and_duplicate() {
        let omega = MultiIndexSet::new(1, 1).unwrap();
        let entries = vec![CoeffEntry { k: vec![0], re: 1.0, im: 0.0 }];
        assert!(half_from_entries(&omega, &entries).is_err());
        let entries = vec![
            CoeffEntry { k: vec![0], re: 1.0, im: 0.0 },
            CoeffEntry { k: vec![1], re: 0.5, im: 0.0 },
            CoeffEntry { k: vec![-1], re: 0.5, im: 0.0 },
        ];
        assert!(half_from_entries(&omega, &entries).is_err());
    }

    #[test]
    fn conjugate_entries_accepted() {
        let omega = MultiIndexSet::new(1, 1).unwrap();
        let entries = vec![
            CoeffEntry { k: vec![0], re: 1.0, im: 0.0 },
            CoeffEntry { k: vec![-1], re: 0.5, im: 0.25 },
        ];
        let half = half_from_entries(&omega, &entries).unwrap();
        assert!((half[1] - Complex64::new(0.5, -0.25)).norm() < 1e-15);
    }
}
