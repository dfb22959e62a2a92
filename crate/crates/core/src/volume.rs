//! Volume fractions of spherical slabs.
//!
//! Two independent routes to `|V_{k,d}(a)| / omega_{d-1}`, where
//! `V_{k,d}(a) = ([-a,1]^k x [0,1]^{d-k}) ∩ S^{d-1}`:
//!
//! * [`estimate_fraction`]: hit-or-miss Monte Carlo on uniform sphere samples;
//! * [`recursion_bound`]: a deterministic upper bound obtained by slicing the
//!   sphere along one coordinate,
//!
//!   ```text
//!   F(k+1, d+1, a) <= F(k, d+1, a) + a * (omega_{d-1} / omega_d) * F(k, d, a / sqrt(1 - a^2)),
//!   ```
//!
//!   unfolded down to `F(0, m, a) = 2^{-m}`.
//!
//! The slicing step from `S^1` to `S^2` is the one place where the slice
//! Jacobian `(1 - s^2)^{(d-2)/2}` exceeds one, so the unfolding stops at the
//! circle and uses exact arc lengths there.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::{OnceLock, RwLock};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::{chunk_ranges, Substreams};
use crate::sphere::{fill_uniform_sphere, sphere_area_ratio, DomainSpec};

/// Hit-or-miss estimate of `|A| / omega_{dim-1}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VolumeEstimate {
    pub domain: DomainSpec,
    pub n: usize,
    pub hits: usize,
    pub fraction: f64,
    /// Binomial standard error `sqrt(f (1 - f) / n)`.
    pub stderr: f64,
    /// Standard error from the spread of the per-chunk means.
    pub batch_stderr: f64,
    pub ci95: (f64, f64),
}

/// Monte Carlo volume fraction of `domain`, split into [`crate::rng::CHUNKS`] chunks with
/// one substream each. Bit-identical for a fixed seed regardless of the
/// number of worker threads.
pub fn estimate_fraction(
    domain: &DomainSpec,
    n: usize,
    streams: &Substreams,
) -> Result<VolumeEstimate> {
    domain.validate()?;
    if n == 0 {
        return Err(Error::InvalidParameter(
            "sample count must be at least 1".into(),
        ));
    }
    let dim = domain.dim();
    let ranges = chunk_ranges(n);
    let per_chunk: Vec<(usize, usize)> = ranges
        .into_par_iter()
        .enumerate()
        .map(|(c, range)| {
            let mut rng = streams.stream(c as u64);
            let mut x = vec![0.0; dim];
            let mut hits = 0usize;
            for _ in range.clone() {
                fill_uniform_sphere(&mut x, &mut rng);
                hits += usize::from(domain.contains_coords(&x));
            }
            (hits, range.len())
        })
        .collect();

    let hits: usize = per_chunk.iter().map(|c| c.0).sum();
    let fraction = hits as f64 / n as f64;
    let stderr = (fraction * (1.0 - fraction) / n as f64).sqrt();

    let means: Vec<f64> = per_chunk
        .iter()
        .filter(|c| c.1 > 0)
        .map(|&(h, m)| h as f64 / m as f64)
        .collect();
    let batch_stderr = if means.len() > 1 {
        let k = means.len() as f64;
        let mean = means.iter().sum::<f64>() / k;
        let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (k - 1.0);
        (var / k).sqrt()
    } else {
        f64::NAN
    };

    let half = 1.96 * stderr;
    Ok(VolumeEstimate {
        domain: *domain,
        n,
        hits,
        fraction,
        stderr,
        batch_stderr,
        ci95: ((fraction - half).max(0.0), (fraction + half).min(1.0)),
    })
}

/// Certified upper bound on `|V_{k,d}(a)| / omega_{d-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecursionBound {
    pub k: usize,
    pub d: usize,
    pub a: f64,
    pub bound_fraction: f64,
}

/// Memo table for [`RecursionCache::bound`], keyed on `(k, d, a)` with the
/// exact bit pattern of `a`.
#[derive(Debug, Default)]
pub struct RecursionCache {
    table: RwLock<HashMap<(usize, usize, u64), f64>>,
}

impl RecursionCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.table.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bound(&self, k: usize, d: usize, a: f64) -> Result<RecursionBound> {
        if d == 0 {
            return Err(Error::InvalidDimension(0));
        }
        if k > d {
            return Err(Error::InvalidParameter(format!("k={k} exceeds d={d}")));
        }
        if !(0.0..1.0).contains(&a) {
            return Err(Error::InvalidParameter(format!(
                "slab parameter a={a} outside [0, 1)"
            )));
        }
        let bound_fraction = self.unfold(k, d, a)?;
        Ok(RecursionBound {
            k,
            d,
            a,
            bound_fraction,
        })
    }

    fn unfold(&self, k: usize, d: usize, a: f64) -> Result<f64> {
        if k == 0 || a == 0.0 {
            return Ok(0.5f64.powi(d as i32));
        }
        match d {
            1 => return Ok(0.5),
            2 => return Ok(circle_slab_fraction(k, a)),
            _ => {}
        }
        let key = (k, d, a.to_bits());
        if let Some(&v) = self.table.read().unwrap().get(&key) {
            return Ok(v);
        }

        let shrink = 1.0 - a * a;
        let next_a = if shrink > 0.0 {
            a / shrink.sqrt()
        } else {
            f64::INFINITY
        };
        if next_a >= 1.0 {
            return Err(Error::ParameterOverflow {
                dim: d - 1,
                value: next_a,
            });
        }
        let ratio = sphere_area_ratio(d as i64 - 1)?;
        let mut cross = 0.0;
        for i in 0..k {
            cross += self.unfold(i, d - 1, next_a)?;
        }
        let value = 0.5f64.powi(d as i32) + a * ratio * cross;

        self.table.write().unwrap().insert(key, value);
        Ok(value)
    }
}

fn global_cache() -> &'static RecursionCache {
    static CACHE: OnceLock<RecursionCache> = OnceLock::new();
    CACHE.get_or_init(RecursionCache::new)
}

/// [`RecursionCache::bound`] on a process-wide cache.
pub fn recursion_bound(k: usize, d: usize, a: f64) -> Result<RecursionBound> {
    global_cache().bound(k, d, a)
}

/// Exact `|V_{k,2}(a)| / (2 pi)` on the unit circle.
///
/// `cos t >= -a` and `sin t >= -a` are arcs of half-width `pi/2 + asin(a)`
/// centred at `0` and `pi/2`; `sin t >= 0` has half-width `pi/2`.
fn circle_slab_fraction(k: usize, a: f64) -> f64 {
    let s = a.min(1.0).asin();
    let arc = match k {
        0 => FRAC_PI_2,
        1 => FRAC_PI_2 + s,
        _ => FRAC_PI_2 + 2.0 * s + (2.0 * s - FRAC_PI_2).max(0.0),
    };
    arc / (2.0 * PI)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lemma1Row {
    pub d: usize,
    pub a: f64,
    pub bound_fraction: f64,
    /// `bound_fraction * 2^d`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lemma1Report {
    pub exponent: f64,
    pub rows: Vec<Lemma1Row>,
    pub max_ratio: f64,
    /// `false` when `exponent <= 3/2`, where bounded ratios are not expected.
    pub in_regime: bool,
}

/// Ratios `recursion_bound(d, d, d^-exponent) * 2^d` for `d = 2..=d_max`.
pub fn lemma1_report(d_max: usize, exponent: f64) -> Result<Lemma1Report> {
    if d_max < 2 {
        return Err(Error::InvalidParameter(format!(
            "d_max={d_max} must be at least 2"
        )));
    }
    if !exponent.is_finite() || exponent <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "exponent {exponent} must be positive"
        )));
    }
    let rows = (2..=d_max)
        .map(|d| {
            let a = (d as f64).powf(-exponent);
            let b = recursion_bound(d, d, a)?;
            Ok(Lemma1Row {
                d,
                a,
                bound_fraction: b.bound_fraction,
                ratio: b.bound_fraction * 2f64.powi(d as i32),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_ratio = rows
        .iter()
        .map(|r| r.ratio)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(Lemma1Report {
        exponent,
        rows,
        max_ratio,
        in_regime: exponent > 1.5,
    })
}
