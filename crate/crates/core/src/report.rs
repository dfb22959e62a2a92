//! Per-dimension summary tying the engines together.

use serde::{Deserialize, Serialize};

use crate::bounds::{eigenvalue_bounds, yamabe_lower_bound};
use crate::error::{Error, Result};
use crate::fpt::{default_window, fit_tail_exponent, survival_curve, WalkConfig};
use crate::rng::Substreams;
use crate::spectral::{richardson_extrapolate, solve_levels, GridSpec};
use crate::sphere::DomainSpec;

/// Largest dimension for which exit-time exponents are simulated.
pub const MAX_MC_DIM: usize = 16;

/// Sample counts and resolutions used by [`report`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budgets {
    pub paths: usize,
    pub step: f64,
    pub t_max: f64,
    pub rayleigh_samples: usize,
    /// Coarsest `n_theta` of the spectral sequence; `n_phi = 2 n_theta`.
    pub spectral_n_theta: usize,
    pub spectral_levels: usize,
    pub spectral_tol: f64,
}

impl Default for Budgets {
    fn default() -> Self {
        Self {
            paths: 100_000,
            step: 1.0,
            t_max: 1000.0,
            rayleigh_samples: 1_000_000,
            spectral_n_theta: 32,
            spectral_levels: 4,
            spectral_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub dim: usize,
    pub p_mc: Option<f64>,
    pub p_mc_stderr: Option<f64>,
    pub lambda_mc: Option<f64>,
    pub lambda_mc_stderr: Option<f64>,
    pub lambda_spectral: Option<f64>,
    pub yamabe_lower: Option<f64>,
    pub rayleigh_upper: Option<f64>,
    pub rayleigh_stderr: Option<f64>,
    /// `yamabe_lower * 2^d / d`.
    pub lower_ratio: Option<f64>,
    /// `rayleigh_upper * 2^d / d^3`.
    pub upper_ratio: Option<f64>,
    /// The Monte Carlo eigenvalue falls outside `[yamabe_lower, rayleigh_upper]`
    /// by more than 4 combined standard errors (checked for `dim >= 4`).
    pub sandwich_violation: bool,
    pub notes: Vec<String>,
}

impl ReportRow {
    fn empty(dim: usize) -> Self {
        Self {
            dim,
            p_mc: None,
            p_mc_stderr: None,
            lambda_mc: None,
            lambda_mc_stderr: None,
            lambda_spectral: None,
            yamabe_lower: None,
            rayleigh_upper: None,
            rayleigh_stderr: None,
            lower_ratio: None,
            upper_ratio: None,
            sandwich_violation: false,
            notes: Vec::new(),
        }
    }
}

/// One row per dimension. Engine errors are returned with the dimension in
/// the message, except fit-window failures of the exit-time fit, which leave
/// the Monte Carlo columns empty and add a note.
pub fn report(dims: &[usize], budgets: &Budgets, seed: u64) -> Result<Vec<ReportRow>> {
    dims.iter()
        .map(|&d| report_row(d, budgets, seed).map_err(|e| annotate(e, d)))
        .collect()
}

fn annotate(e: Error, dim: usize) -> Error {
    let at = |s: String| format!("dim {dim}: {s}");
    match e {
        Error::InvalidParameter(s) => Error::InvalidParameter(at(s)),
        Error::InsufficientSamples(s) => Error::InsufficientSamples(at(s)),
        Error::NotApplicable(s) => Error::NotApplicable(at(s)),
        Error::DegenerateCurve(s) => Error::DegenerateCurve(at(s)),
        Error::FitWindow(s) => Error::FitWindow(at(s)),
        Error::Unsupported(s) => Error::Unsupported(at(s)),
        Error::Factorization(s) => Error::Factorization(at(s)),
        other => other,
    }
}

fn report_row(dim: usize, b: &Budgets, seed: u64) -> Result<ReportRow> {
    if dim == 0 {
        return Err(Error::InvalidDimension(0));
    }
    let mut row = ReportRow::empty(dim);

    if dim <= MAX_MC_DIM {
        let cfg = WalkConfig::brownian(dim, b.step, b.t_max, b.paths, seed)?;
        let curve = survival_curve(&cfg)?;
        match fit_tail_exponent(&curve, default_window(b.t_max)) {
            Ok(fit) => {
                row.p_mc = Some(fit.p_hat);
                row.p_mc_stderr = Some(fit.p_stderr);
                row.lambda_mc = Some(fit.lambda_hat);
                row.lambda_mc_stderr = Some(fit.lambda_stderr);
            }
            Err(Error::FitWindow(msg)) => row.notes.push(format!("no exponent fit: {msg}")),
            Err(e) => return Err(e),
        }
    }

    if dim == 3 {
        let grid = GridSpec::new(
            b.spectral_n_theta,
            2 * b.spectral_n_theta,
            DomainSpec::OrthantComplement { dim: 3 },
        )?;
        let levels = solve_levels(&grid, b.spectral_levels, b.spectral_tol)?;
        let ex = richardson_extrapolate(&levels)?;
        if let Some(w) = &ex.warning {
            row.notes.push(format!("spectral extrapolation: {w}"));
        }
        row.lambda_spectral = Some(ex.value);
    }

    if dim >= 2 {
        let streams = Substreams::new(seed).fork("rayleigh");
        let eb = eigenvalue_bounds(dim, b.rayleigh_samples, &streams)?;
        row.rayleigh_upper = Some(eb.upper);
        row.rayleigh_stderr = Some(eb.upper_stderr);
        row.upper_ratio = Some(eb.upper_ratio);
        row.lower_ratio = eb.lower_ratio;
    }
    if dim >= 4 {
        row.yamabe_lower = Some(yamabe_lower_bound(dim)?);
    }

    if let (true, Some(l), Some(ls)) = (dim >= 4, row.lambda_mc, row.lambda_mc_stderr) {
        let lower = row.yamabe_lower.unwrap_or(0.0);
        let (up, ups) = (
            row.rayleigh_upper.unwrap_or(f64::INFINITY),
            row.rayleigh_stderr.unwrap_or(0.0),
        );
        let below = l + 4.0 * ls < lower;
        let above = l - 4.0 * (ls * ls + ups * ups).sqrt() > up;
        row.sandwich_violation = below || above;
        if row.sandwich_violation {
            row.notes
                .push(format!("lambda_mc={l} outside [{lower}, {up}]"));
        }
    }
    Ok(row)
}
