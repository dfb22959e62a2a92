//! Two-sided bounds on the first Dirichlet eigenvalue `lambda_1(d)` of the
//! orthant complement `U_d`, and the conversion to the survival exponent.
//!
//! * Lower bound: closed form from the sharp Sobolev inequality on the
//!   sphere, see [`yamabe_lower_bound`].
//! * Upper bound: the Rayleigh quotient `Y(eta) = ∫|∇eta|² / ∫eta²` of the
//!   plateau function `eta(x) = theta(min_i x_i)`, estimated by Monte Carlo,
//!   see [`rayleigh_upper_bound`].
//!
//! # Sign averaging
//!
//! Write a uniform point as `x_i = s_i m_i` with magnitudes `m` and
//! independent fair signs `s`. Given `m`, `min_i x_i = -m_j` where `j` is the
//! largest magnitude carrying a minus sign, so with `r_j` the number of
//! magnitudes larger than `m_j`,
//!
//! ```text
//! E[eta²     | m] = Σ_j 2^{-(r_j+1)} theta(-m_j)²
//! E[|∇eta|²  | m] = Σ_j 2^{-(r_j+1)} theta'(-m_j)² (1 - m_j²)
//! ```
//!
//! The transition shell where `∇eta ≠ 0` has measure of order `2^{-d}`; the
//! conditional expectation integrates it exactly instead of waiting for
//! samples to land there.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::{chunk_ranges, Substreams};
use crate::sphere::{fill_uniform_sphere, SpherePoint};

/// Width `a` of the cutoff `theta`, with `0 < a < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CutoffProfile {
    a: f64,
}

impl CutoffProfile {
    pub fn new(a: f64) -> Result<Self> {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "cutoff width a={a} outside (0, 1)"
            )));
        }
        Ok(Self { a })
    }

    /// `a = alpha * d^{-3/2}`.
    pub fn from_scaling(alpha: f64, d: usize) -> Result<Self> {
        Self::new(alpha * (d as f64).powf(-1.5))
    }

    pub fn a(&self) -> f64 {
        self.a
    }
}

/// Cubic smoothstep cutoff: `0` for `t >= 0`, `1` for `t <= -a`,
/// `3u² - 2u³` with `u = -t/a` in between. `C¹`, with `max |theta'| = 3/(2a)`.
pub fn theta(t: f64, profile: &CutoffProfile) -> f64 {
    let a = profile.a;
    if t >= 0.0 {
        0.0
    } else if t <= -a {
        1.0
    } else {
        let u = -t / a;
        u * u * (3.0 - 2.0 * u)
    }
}

/// Derivative of [`theta`] in `t`.
pub fn theta_prime(t: f64, profile: &CutoffProfile) -> f64 {
    let a = profile.a;
    if t >= 0.0 || t <= -a {
        0.0
    } else {
        let u = -t / a;
        -6.0 * u * (1.0 - u) / a
    }
}

fn min_index(x: &[f64]) -> usize {
    let mut j = 0;
    for (i, &c) in x.iter().enumerate().skip(1) {
        if c < x[j] {
            j = i;
        }
    }
    j
}

/// `eta(x) = max_i theta(x_i) = theta(min_i x_i)`; zero on the closed
/// positive orthant, one once a coordinate reaches `-a`.
pub fn eta(x: &SpherePoint, profile: &CutoffProfile) -> f64 {
    let c = x.coords();
    theta(c[min_index(c)], profile)
}

/// Squared norm of the spherical gradient of `eta`:
/// `theta'(x_j)² (1 - x_j²)` with `j` the lowest-index minimizer.
pub fn grad_norm_sq_eta(x: &SpherePoint, profile: &CutoffProfile) -> f64 {
    let c = x.coords();
    let xj = c[min_index(c)];
    let dt = theta_prime(xj, profile);
    dt * dt * (1.0 - xj * xj)
}

/// Monte Carlo estimate of the Rayleigh quotient of `eta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RayleighEstimate {
    pub a: f64,
    pub n: usize,
    /// `E|∇eta|² / E eta²`: an upper bound on `lambda_1(d)` up to Monte Carlo error.
    pub bound: f64,
    /// Delta-method standard error of `bound`.
    pub stderr: f64,
    /// Sample mean of `|∇eta|²` over the sphere.
    pub numerator: f64,
    pub numerator_stderr: f64,
    /// Sample mean of `eta²` over the sphere.
    pub denominator: f64,
    pub denominator_stderr: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    sn: f64,
    sd: f64,
    snn: f64,
    sdd: f64,
    snd: f64,
}

impl Moments {
    fn push(&mut self, num: f64, den: f64) {
        self.n += 1.0;
        self.sn += num;
        self.sd += den;
        self.snn += num * num;
        self.sdd += den * den;
        self.snd += num * den;
    }

    fn merge(&mut self, o: &Moments) {
        self.n += o.n;
        self.sn += o.sn;
        self.sd += o.sd;
        self.snn += o.snn;
        self.sdd += o.sdd;
        self.snd += o.snd;
    }

    fn estimate(&self, a: f64) -> RayleighEstimate {
        let n = self.n;
        let mn = self.sn / n;
        let md = self.sd / n;
        let vn = (self.snn / n - mn * mn).max(0.0) * n / (n - 1.0);
        let vd = (self.sdd / n - md * md).max(0.0) * n / (n - 1.0);
        let cnd = (self.snd / n - mn * md) * n / (n - 1.0);
        let bound = mn / md;
        let var = (vn - 2.0 * bound * cnd + bound * bound * vd).max(0.0) / (n * md * md);
        RayleighEstimate {
            a,
            n: n as usize,
            bound,
            stderr: var.sqrt(),
            numerator: mn,
            numerator_stderr: (vn / n).sqrt(),
            denominator: md,
            denominator_stderr: (vd / n).sqrt(),
        }
    }
}

/// Evaluates the sign-averaged integrands for every profile on the same
/// magnitude samples (common random numbers across the grid).
fn sign_averaged_moments(
    d: usize,
    profiles: &[CutoffProfile],
    n: usize,
    streams: &Substreams,
) -> Vec<Moments> {
    let chunks: Vec<Vec<Moments>> = chunk_ranges(n)
        .into_par_iter()
        .enumerate()
        .map(|(c, range)| {
            let mut rng = streams.stream(c as u64);
            let mut m = vec![0.0; d];
            let mut acc = vec![Moments::default(); profiles.len()];
            for _ in range {
                let mut norm2 = 0.0;
                for v in m.iter_mut() {
                    let g: f64 = rng.sample(StandardNormal);
                    *v = g.abs();
                    norm2 += g * g;
                }
                let inv = norm2.sqrt().recip();
                m.iter_mut().for_each(|v| *v *= inv);
                m.sort_unstable_by(|x, y| y.total_cmp(x));
                for (p, slot) in profiles.iter().zip(acc.iter_mut()) {
                    let (mut num, mut den) = (0.0, 0.0);
                    let mut w = 0.5;
                    for &mj in &m {
                        let th = theta(-mj, p);
                        let dt = theta_prime(-mj, p);
                        den += w * th * th;
                        num += w * dt * dt * (1.0 - mj * mj);
                        w *= 0.5;
                    }
                    slot.push(num, den);
                }
            }
            acc
        })
        .collect();
    let mut total = vec![Moments::default(); profiles.len()];
    for chunk in &chunks {
        for (t, c) in total.iter_mut().zip(chunk) {
            t.merge(c);
        }
    }
    total
}

fn check_rayleigh_args(d: usize, n: usize) -> Result<()> {
    if d < 2 {
        return Err(Error::InvalidDimension(d as i64));
    }
    if n < 10_000 {
        return Err(Error::InvalidParameter(format!(
            "n={n} below the minimum of 10000 samples"
        )));
    }
    Ok(())
}

fn check_denominator(e: &RayleighEstimate) -> Result<()> {
    if !(e.denominator >= 4.0 * e.denominator_stderr && e.denominator > 0.0) {
        return Err(Error::InsufficientSamples(format!(
            "denominator {} not above 4 standard errors ({}) at a={}",
            e.denominator, e.denominator_stderr, e.a
        )));
    }
    Ok(())
}

/// Sign-averaged Monte Carlo estimate of `Y(eta)` on `S^{d-1}`.
pub fn rayleigh_upper_bound(
    d: usize,
    profile: &CutoffProfile,
    n: usize,
    streams: &Substreams,
) -> Result<RayleighEstimate> {
    check_rayleigh_args(d, n)?;
    let e = sign_averaged_moments(d, std::slice::from_ref(profile), n, streams)[0]
        .estimate(profile.a());
    check_denominator(&e)?;
    Ok(e)
}

/// Plain hit-or-miss estimate of `Y(eta)`: uniform points, direct evaluation
/// of `eta²` and `|∇eta|²`. Only practical for small `d`.
pub fn rayleigh_plain(
    d: usize,
    profile: &CutoffProfile,
    n: usize,
    streams: &Substreams,
) -> Result<RayleighEstimate> {
    check_rayleigh_args(d, n)?;
    let chunks: Vec<Moments> = chunk_ranges(n)
        .into_par_iter()
        .enumerate()
        .map(|(c, range)| {
            let mut rng = streams.stream(c as u64);
            let mut x = vec![0.0; d];
            let mut acc = Moments::default();
            for _ in range {
                fill_uniform_sphere(&mut x, &mut rng);
                let xj = x[min_index(&x)];
                let th = theta(xj, profile);
                let dt = theta_prime(xj, profile);
                acc.push(dt * dt * (1.0 - xj * xj), th * th);
            }
            acc
        })
        .collect();
    let mut total = Moments::default();
    chunks.iter().for_each(|c| total.merge(c));
    let e = total.estimate(profile.a());
    check_denominator(&e)?;
    Ok(e)
}

/// Result of scanning a grid of cutoff widths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutoffChoice {
    pub a_star: f64,
    pub bound: f64,
    pub stderr: f64,
    /// Every grid point whose denominator passed the significance check.
    pub evaluated: Vec<RayleighEstimate>,
}

/// Picks the grid width minimizing `bound + stderr`. All widths share the
/// same samples.
pub fn optimize_cutoff(
    d: usize,
    a_grid: &[f64],
    n: usize,
    streams: &Substreams,
) -> Result<CutoffChoice> {
    check_rayleigh_args(d, n)?;
    if a_grid.is_empty() {
        return Err(Error::InvalidParameter("empty cutoff grid".into()));
    }
    let profiles = a_grid
        .iter()
        .map(|&a| CutoffProfile::new(a))
        .collect::<Result<Vec<_>>>()?;
    let moments = sign_averaged_moments(d, &profiles, n, streams);
    let evaluated: Vec<RayleighEstimate> = moments
        .iter()
        .zip(&profiles)
        .map(|(m, p)| m.estimate(p.a()))
        .filter(|e| check_denominator(e).is_ok())
        .collect();
    let best = evaluated
        .iter()
        .min_by(|x, y| (x.bound + x.stderr).total_cmp(&(y.bound + y.stderr)))
        .ok_or_else(|| {
            Error::InsufficientSamples(format!(
                "no cutoff width passed the denominator check at d={d}"
            ))
        })?;
    Ok(CutoffChoice {
        a_star: best.a,
        bound: best.bound,
        stderr: best.stderr,
        evaluated: evaluated.clone(),
    })
}

/// Default scan: 15 log-spaced widths on `[0.1 d^{-3/2}, 0.5]` plus `d^{-3/2}` itself.
pub fn default_cutoff_grid(d: usize) -> Vec<f64> {
    let scale = (d as f64).powf(-1.5);
    let lo = (0.1 * scale).ln();
    let hi = 0.5f64.ln();
    let mut grid: Vec<f64> = (0..15)
        .map(|i| (lo + (hi - lo) * i as f64 / 14.0).exp())
        .collect();
    grid.push(scale.min(0.5));
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

fn sobolev_bound(d: f64, removed_fraction_ln1p: f64) -> f64 {
    // 1 - x with x = (1 - removed)^{2/d}
    let one_minus_x = -((2.0 / d) * removed_fraction_ln1p).exp_m1();
    let x = 1.0 - one_minus_x;
    d * (d - 2.0) * one_minus_x / (4.0 * x)
}

fn check_yamabe_dim(dim: usize) -> Result<()> {
    if dim <= 3 {
        return Err(Error::NotApplicable(format!(
            "Sobolev lower bound needs dim >= 4, got {dim}"
        )));
    }
    Ok(())
}

/// Lower bound `lambda_1(dim) >= d(d-2)(1-x)/(4x)` with `d = dim - 1` and
/// `x = (1 - 2^{-d})^{2/d}`, in the form it is usually printed.
pub fn yamabe_lower_bound(dim: usize) -> Result<f64> {
    check_yamabe_dim(dim)?;
    let d = (dim - 1) as f64;
    Ok(sobolev_bound(d, (-(0.5f64.powf(d))).ln_1p()))
}

/// Same bound with the exact measure of `U_dim` inside `S^{dim-1}`, which
/// misses the fraction `2^{-dim}` (not `2^{-(dim-1)}`) of the sphere.
pub fn yamabe_lower_bound_symmetric(dim: usize) -> Result<f64> {
    check_yamabe_dim(dim)?;
    let d = (dim - 1) as f64;
    Ok(sobolev_bound(d, (-(0.5f64.powf(d + 1.0))).ln_1p()))
}

fn check_d(d: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::InvalidDimension(0));
    }
    Ok(())
}

/// `p = sqrt(lambda + (d/2 - 1)²) - (d/2 - 1)`.
pub fn p_from_lambda(lambda: f64, d: usize) -> Result<f64> {
    check_d(d)?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "eigenvalue {lambda} must be finite and >= 0"
        )));
    }
    let c = d as f64 / 2.0 - 1.0;
    let root = (lambda + c * c).sqrt();
    if c > 0.0 {
        // rationalized to avoid cancellation when lambda << c²
        Ok(lambda / (root + c))
    } else {
        Ok(root - c)
    }
}

/// Inverse of [`p_from_lambda`]: `lambda = p (p + d - 2)`.
pub fn lambda_from_p(p: f64, d: usize) -> Result<f64> {
    check_d(d)?;
    if !(p >= 0.0) || !p.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "exponent {p} must be finite and >= 0"
        )));
    }
    Ok(p * (p + (d as f64 - 2.0)))
}

/// Source of a point estimate of `lambda_1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateSource {
    McExponent,
    SpectralS2,
    Literature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointEstimate {
    pub value: f64,
    pub stderr: Option<f64>,
    pub source: EstimateSource,
}

/// Per-dimension summary of what is known about `lambda_1(dim)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenvalueBounds {
    pub dim: usize,
    /// Sobolev lower bound; `None` below dimension 4.
    pub lower: Option<f64>,
    pub lower_symmetric: Option<f64>,
    pub upper: f64,
    pub upper_stderr: f64,
    pub a_star: f64,
    pub point_estimates: Vec<PointEstimate>,
    /// `lower * 2^d / d`.
    pub lower_ratio: Option<f64>,
    /// `upper * 2^d / d³`.
    pub upper_ratio: f64,
}

impl EigenvalueBounds {
    /// `lower <= upper + 4 stderr`, or `true` when no lower bound applies.
    pub fn is_consistent(&self) -> bool {
        self.lower
            .is_none_or(|l| l <= self.upper + 4.0 * self.upper_stderr)
    }
}

/// Lower bound plus optimized Rayleigh upper bound for one dimension.
pub fn eigenvalue_bounds(dim: usize, n: usize, streams: &Substreams) -> Result<EigenvalueBounds> {
    let choice = optimize_cutoff(dim, &default_cutoff_grid(dim), n, streams)?;
    let lower = yamabe_lower_bound(dim).ok();
    let d = dim as f64;
    let two_d = 2f64.powi(dim as i32);
    Ok(EigenvalueBounds {
        dim,
        lower,
        lower_symmetric: yamabe_lower_bound_symmetric(dim).ok(),
        upper: choice.bound,
        upper_stderr: choice.stderr,
        a_star: choice.a_star,
        point_estimates: Vec::new(),
        lower_ratio: lower.map(|l| l * two_d / d),
        upper_ratio: choice.bound * two_d / (d * d * d),
    })
}

/// `p(lambda, d) * d / lambda`, which tends to one when `lambda / d -> 0`.
pub fn corollary_ratio(lambda: f64, d: usize) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "eigenvalue {lambda} must be > 0"
        )));
    }
    Ok(p_from_lambda(lambda, d)? * d as f64 / lambda)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorollaryRow {
    pub dim: usize,
    pub upper_ratio: f64,
    pub lower_ratio: Option<f64>,
    /// Either ratio is more than `1e-2` away from one.
    pub flagged: bool,
}

/// Checks `p_d ~ lambda_1 / d` on both ends of the bounds.
pub fn corollary_check(bounds: &[EigenvalueBounds]) -> Result<Vec<CorollaryRow>> {
    bounds
        .iter()
        .map(|b| {
            let upper_ratio = corollary_ratio(b.upper, b.dim)?;
            let lower_ratio = b.lower.map(|l| corollary_ratio(l, b.dim)).transpose()?;
            let off = |r: f64| (r - 1.0).abs() > 1e-2;
            Ok(CorollaryRow {
                dim: b.dim,
                upper_ratio,
                lower_ratio,
                flagged: off(upper_ratio) || lower_ratio.is_some_and(off),
            })
        })
        .collect()
}
