//! Geometry kernel: points on `S^{d-1}`, the domain family used throughout the
//! crate, and sphere surface constants.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

const NORM_TOL: f64 = 1e-12;

/// A unit vector of `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpherePoint {
    coords: Vec<f64>,
}

impl SpherePoint {
    /// Wraps coordinates that already have unit norm (within `1e-12`).
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidDimension(0));
        }
        let norm = coords.iter().map(|c| c * c).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidParameter(format!(
                "coordinates have norm {norm}, expected 1"
            )));
        }
        Ok(Self { coords })
    }

    /// Projects a nonzero vector onto the sphere.
    pub fn from_direction(mut v: Vec<f64>) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::InvalidDimension(0));
        }
        let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidParameter(
                "cannot normalize a zero or non-finite vector".into(),
            ));
        }
        v.iter_mut().for_each(|c| *c /= norm);
        Ok(Self { coords: v })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }
}

/// Uniform point on `S^{d-1}`: a normalized vector of `d` standard Gaussians.
pub fn sample_uniform_sphere<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<SpherePoint> {
    if d == 0 {
        return Err(Error::InvalidDimension(0));
    }
    let mut v = vec![0.0; d];
    fill_uniform_sphere(&mut v, rng);
    Ok(SpherePoint { coords: v })
}

/// Allocation-free variant of [`sample_uniform_sphere`] for hot loops.
pub(crate) fn fill_uniform_sphere<R: Rng + ?Sized>(v: &mut [f64], rng: &mut R) {
    loop {
        let mut norm2 = 0.0;
        for c in v.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *c = g;
            norm2 += g * g;
        }
        // A vector of exact zeros has probability zero but would divide by zero.
        if norm2 > 0.0 && v.len() == 1 {
            v[0] = v[0].signum();
            return;
        }
        if norm2 > 0.0 {
            let inv = norm2.sqrt().recip();
            v.iter_mut().for_each(|c| *c *= inv);
            return;
        }
    }
}

/// A spherical subdomain of `S^{dim-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "snake_case")]
pub enum DomainSpec {
    /// `U_d`: the sphere minus the open negative orthant.
    OrthantComplement { dim: usize },
    /// Open negative orthant: every coordinate `< 0`.
    NegativeOrthant { dim: usize },
    /// `[-a, 1]^d` intersected with the sphere.
    SigmaSlab { dim: usize, a: f64 },
    /// `([-a, 1]^k x [0, 1]^{d-k})` intersected with the sphere.
    VSlab { dim: usize, k: usize, a: f64 },
    /// Last coordinate `> 0`.
    Hemisphere { dim: usize },
    /// Azimuth of `(x_1, x_2)` in `(0, beta)`, with the axis `x_1 = x_2 = 0` excluded.
    Lune { dim: usize, beta: f64 },
}

impl DomainSpec {
    pub fn dim(&self) -> usize {
        match *self {
            DomainSpec::OrthantComplement { dim }
            | DomainSpec::NegativeOrthant { dim }
            | DomainSpec::SigmaSlab { dim, .. }
            | DomainSpec::VSlab { dim, .. }
            | DomainSpec::Hemisphere { dim }
            | DomainSpec::Lune { dim, .. } => dim,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DomainSpec::OrthantComplement { .. } => "orthant_complement",
            DomainSpec::NegativeOrthant { .. } => "negative_orthant",
            DomainSpec::SigmaSlab { .. } => "sigma_slab",
            DomainSpec::VSlab { .. } => "v_slab",
            DomainSpec::Hemisphere { .. } => "hemisphere",
            DomainSpec::Lune { .. } => "lune",
        }
    }

    /// Slab parameter, for the slab tags.
    pub fn slab_a(&self) -> Option<f64> {
        match *self {
            DomainSpec::SigmaSlab { a, .. } | DomainSpec::VSlab { a, .. } => Some(a),
            _ => None,
        }
    }

    /// Number of `[-a, 1]` factors: `dim` for `SigmaSlab`, `k` for `VSlab`.
    pub fn slab_k(&self) -> Option<usize> {
        match *self {
            DomainSpec::SigmaSlab { dim, .. } => Some(dim),
            DomainSpec::VSlab { k, .. } => Some(k),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.dim();
        if dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        match *self {
            DomainSpec::SigmaSlab { a, .. } | DomainSpec::VSlab { a, .. }
                if !(0.0..=1.0).contains(&a) =>
            {
                Err(Error::InvalidParameter(format!(
                    "slab parameter a={a} outside [0, 1]"
                )))
            }
            DomainSpec::VSlab { k, .. } if k > dim => Err(Error::InvalidParameter(format!(
                "slab index k={k} exceeds dimension {dim}"
            ))),
            DomainSpec::Lune { beta, .. } if !(beta > 0.0 && beta <= 2.0 * PI) => Err(
                Error::InvalidParameter(format!("lune angle beta={beta} outside (0, 2pi]")),
            ),
            DomainSpec::Lune { dim, .. } if dim < 2 => Err(Error::InvalidDimension(dim as i64)),
            _ => Ok(()),
        }
    }

    /// Membership test. Points with a zero coordinate and all others `<= 0`
    /// belong to the orthant complement, not to the open negative orthant.
    pub fn contains(&self, x: &SpherePoint) -> Result<bool> {
        self.validate()?;
        if x.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.dim(),
            });
        }
        Ok(self.contains_coords(x.coords()))
    }

    /// [`DomainSpec::contains`] without validation, for hot loops.
    pub(crate) fn contains_coords(&self, x: &[f64]) -> bool {
        match *self {
            DomainSpec::OrthantComplement { .. } => x.iter().any(|&c| c >= 0.0),
            DomainSpec::NegativeOrthant { .. } => x.iter().all(|&c| c < 0.0),
            DomainSpec::SigmaSlab { a, .. } => x.iter().all(|&c| c >= -a),
            DomainSpec::VSlab { k, a, .. } => {
                x[..k].iter().all(|&c| c >= -a) && x[k..].iter().all(|&c| c >= 0.0)
            }
            DomainSpec::Hemisphere { .. } => x[x.len() - 1] > 0.0,
            DomainSpec::Lune { beta, .. } => {
                if x[0] == 0.0 && x[1] == 0.0 {
                    return false;
                }
                let az = x[1].atan2(x[0]).rem_euclid(2.0 * PI);
                az > 0.0 && az < beta
            }
        }
    }
}

/// `ln(omega_d)`, where `omega_d = 2 pi^{(d+1)/2} / Gamma((d+1)/2)` is the
/// surface measure of `S^d` in `R^{d+1}`.
pub fn log_sphere_area(d: i64) -> Result<f64> {
    if d < 0 {
        return Err(Error::InvalidDimension(d));
    }
    let half = (d as f64 + 1.0) / 2.0;
    Ok(std::f64::consts::LN_2 + half * PI.ln() - ln_gamma(half))
}

/// `omega_d`, the surface measure of `S^d`. Underflows to zero only for very
/// large `d` (beyond several hundred); use [`log_sphere_area`] there.
pub fn sphere_area(d: i64) -> Result<f64> {
    log_sphere_area(d).map(f64::exp)
}

/// `omega_{d-1} / omega_d`, evaluated in log space.
pub fn sphere_area_ratio(d: i64) -> Result<f64> {
    Ok((log_sphere_area(d - 1)? - log_sphere_area(d)?).exp())
}
