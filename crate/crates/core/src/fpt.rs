//! Path-level Monte Carlo for `d` independent particles.
//!
//! The exit time `tau_d = inf{t > 0 : B_1(t) < 0, ..., B_d(t) < 0}` is the first
//! time all particles are negative at once. Its tail
//! `P_x(tau_d > t) ~ V(x) t^{-p_d/2}` is estimated from simulated survival
//! curves and a log-log fit over the last decade of the horizon.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{chunk_ranges, Substreams};

/// Grid points per decade of the survival curve.
pub const POINTS_PER_DECADE: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum WalkModel {
    /// Exact Gaussian increments of variance `step` per coordinate, monitored
    /// at multiples of `step`.
    Brownian { step: f64 },
    /// Each coordinate moves by `±1` per unit of time.
    Lattice,
}

impl WalkModel {
    pub fn name(&self) -> &'static str {
        match self {
            WalkModel::Brownian { .. } => "brownian",
            WalkModel::Lattice => "lattice",
        }
    }

    /// Monitoring interval.
    pub fn step(&self) -> f64 {
        match *self {
            WalkModel::Brownian { step } => step,
            WalkModel::Lattice => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub dim: usize,
    pub model: WalkModel,
    pub start: Vec<f64>,
    pub t_max: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl WalkConfig {
    /// Brownian particles started from `(1, ..., 1) / sqrt(d)`.
    pub fn brownian(dim: usize, step: f64, t_max: f64, n_paths: usize, seed: u64) -> Result<Self> {
        let start = vec![(dim.max(1) as f64).sqrt().recip(); dim];
        let cfg = Self {
            dim,
            model: WalkModel::Brownian { step },
            start,
            t_max,
            n_paths,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Lattice walkers started from `(1, ..., 1)`.
    pub fn lattice(dim: usize, t_max: f64, n_paths: usize, seed: u64) -> Result<Self> {
        let cfg = Self {
            dim,
            model: WalkModel::Lattice,
            start: vec![1.0; dim],
            t_max,
            n_paths,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_start(mut self, start: Vec<f64>) -> Result<Self> {
        self.start = start;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        if self.start.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: self.start.len(),
            });
        }
        if !self.start.iter().any(|&c| c > 0.0) {
            return Err(Error::InvalidParameter(
                "start point needs at least one positive coordinate".into(),
            ));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "t_max={} must be positive",
                self.t_max
            )));
        }
        match self.model {
            WalkModel::Brownian { step } => {
                if !(step > 0.0 && step <= self.t_max) {
                    return Err(Error::InvalidParameter(format!(
                        "step={step} must lie in (0, t_max={}]",
                        self.t_max
                    )));
                }
            }
            WalkModel::Lattice => {
                if self.start.iter().any(|c| c.fract() != 0.0) {
                    return Err(Error::InvalidParameter(
                        "lattice start must have integer coordinates".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn streams(&self) -> Substreams {
        Substreams::new(self.seed).fork("exit-time")
    }

    fn n_steps(&self) -> u64 {
        (self.t_max / self.model.step() * (1.0 + 1e-12)).floor() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExitTime {
    Exited(f64),
    /// Still alive at `t_max`.
    Censored,
}

impl ExitTime {
    /// `+inf` for censored paths.
    pub fn as_f64(&self) -> f64 {
        match *self {
            ExitTime::Exited(t) => t,
            ExitTime::Censored => f64::INFINITY,
        }
    }
}

/// Runs one path, calling `observe(step_index, position)` after every step
/// (and once for the start at index 0).
fn run_path<R, F>(cfg: &WalkConfig, rng: &mut R, x: &mut [f64], mut observe: F) -> ExitTime
where
    R: Rng + ?Sized,
    F: FnMut(u64, &[f64]),
{
    x.copy_from_slice(&cfg.start);
    observe(0, x);
    let n_steps = cfg.n_steps();
    match cfg.model {
        WalkModel::Brownian { step } => {
            let sd = step.sqrt();
            for k in 1..=n_steps {
                let mut all_neg = true;
                for c in x.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *c += sd * z;
                    all_neg &= *c < 0.0;
                }
                observe(k, x);
                if all_neg {
                    return ExitTime::Exited(k as f64 * step);
                }
            }
        }
        WalkModel::Lattice => {
            let (mut bits, mut left) = (0u64, 0u32);
            for k in 1..=n_steps {
                let mut all_neg = true;
                for c in x.iter_mut() {
                    if left == 0 {
                        bits = rng.next_u64();
                        left = 64;
                    }
                    *c += if bits & 1 == 1 { 1.0 } else { -1.0 };
                    bits >>= 1;
                    left -= 1;
                    all_neg &= *c < -0.5;
                }
                observe(k, x);
                if all_neg {
                    return ExitTime::Exited(k as f64);
                }
            }
        }
    }
    ExitTime::Censored
}

/// Samples `tau_d` for one path, censored at `t_max`.
pub fn sample_exit_time<R: Rng + ?Sized>(cfg: &WalkConfig, rng: &mut R) -> ExitTime {
    let mut x = vec![0.0; cfg.dim];
    run_path(cfg, rng, &mut x, |_, _| {})
}

/// Empirical `P_x(tau_d > t)` on a geometric time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalCurve {
    pub dim: usize,
    pub model: WalkModel,
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Paths with `tau_d > t` at each grid time.
    pub alive: Vec<u64>,
    pub n_paths: usize,
    /// Fraction of paths still alive at `t_max`.
    pub censored_fraction: f64,
}

/// `t_max * 10^{-j/32}` for `j = K, ..., 0`, ascending, with every point at
/// or above `t_min`.
pub fn time_grid(t_min: f64, t_max: f64) -> Vec<f64> {
    let decades = (t_max / t_min).log10().max(0.0);
    let k = (decades * POINTS_PER_DECADE as f64 + 1e-9).floor() as usize;
    (0..=k)
        .rev()
        .map(|j| t_max * 10f64.powf(-(j as f64) / POINTS_PER_DECADE as f64))
        .collect()
}

/// Simulates `cfg.n_paths` independent paths (path `i` uses substream `i`)
/// and tabulates survival. Counts are integer sums, so the curve does not
/// depend on the number of threads.
pub fn survival_curve(cfg: &WalkConfig) -> Result<SurvivalCurve> {
    cfg.validate()?;
    if cfg.n_paths < 1000 {
        return Err(Error::InvalidParameter(format!(
            "n_paths={} below the minimum of 1000",
            cfg.n_paths
        )));
    }
    let times = time_grid(cfg.model.step(), cfg.t_max);
    let g = times.len();
    let streams = cfg.streams();

    let histograms: Vec<Vec<u64>> = chunk_ranges(cfg.n_paths)
        .into_par_iter()
        .map(|range| {
            let mut hist = vec![0u64; g + 1];
            let mut x = vec![0.0; cfg.dim];
            for i in range {
                let mut rng = streams.stream(i as u64);
                let tau = run_path(cfg, &mut rng, &mut x, |_, _| {}).as_f64();
                hist[times.partition_point(|&t| t < tau)] += 1;
            }
            hist
        })
        .collect();

    let mut hist = vec![0u64; g + 1];
    for h in &histograms {
        hist.iter_mut().zip(h).for_each(|(a, b)| *a += b);
    }
    // alive[j] = #{tau > t_j} = #{paths whose bucket index exceeds j}
    let mut alive = vec![0u64; g];
    let mut acc = hist[g];
    for j in (0..g).rev() {
        alive[j] = acc;
        acc += hist[j];
    }
    if g == 0 || alive[0] == 0 {
        return Err(Error::DegenerateCurve(format!(
            "all {} paths exited before the first grid time",
            cfg.n_paths
        )));
    }
    let n = cfg.n_paths as f64;
    let survival: Vec<f64> = alive.iter().map(|&a| a as f64 / n).collect();
    let stderr = survival
        .iter()
        .map(|&s| (s * (1.0 - s) / n).sqrt())
        .collect();
    Ok(SurvivalCurve {
        dim: cfg.dim,
        model: cfg.model,
        times,
        survival,
        stderr,
        alive,
        n_paths: cfg.n_paths,
        censored_fraction: hist[g] as f64 / n,
    })
}

/// Weighted log-log fit of the survival tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentFit {
    pub dim: usize,
    pub slope: f64,
    /// Standard error of `slope`, including the correlation between grid
    /// points of one empirical curve.
    pub stderr: f64,
    pub window: (f64, f64),
    pub n_points: usize,
    pub r_squared: f64,
    /// `-2 * slope`.
    pub p_hat: f64,
    pub p_stderr: f64,
    /// `p_hat (p_hat + d - 2)`.
    pub lambda_hat: f64,
    pub lambda_stderr: f64,
}

/// Default fit window: the last decade `[t_max / 10, t_max]`.
pub fn default_window(t_max: f64) -> (f64, f64) {
    (t_max / 10.0, t_max)
}

/// Fits `ln S(t) = c + slope ln t` over the grid points inside `window`.
///
/// Weights are `1 / Var(ln S)` with `Var(ln S) = (1 - S) / (n S)`. Ordinates of
/// one empirical curve are correlated, `Cov(ln S(s), ln S(t)) = Var(ln S(s))`
/// for `s <= t`; the slope error is the exact variance of the weighted
/// estimator under that covariance.
pub fn fit_tail_exponent(curve: &SurvivalCurve, window: (f64, f64)) -> Result<ExponentFit> {
    let (lo, hi) = window;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::FitWindow(format!(
            "window ({lo}, {hi}) is not a positive interval"
        )));
    }
    let eps = 1e-9;
    let idx: Vec<usize> = (0..curve.times.len())
        .filter(|&i| curve.times[i] >= lo * (1.0 - eps) && curve.times[i] <= hi * (1.0 + eps))
        .collect();
    if idx.len() < 8 {
        return Err(Error::FitWindow(format!(
            "window ({lo}, {hi}) holds {} grid points, need at least 8",
            idx.len()
        )));
    }
    if idx.iter().any(|&i| curve.alive[i] == 0) {
        return Err(Error::FitWindow(format!(
            "survival reaches zero inside ({lo}, {hi})"
        )));
    }
    let last = *idx.last().unwrap();
    if curve.survival[last] >= 0.9 {
        return Err(Error::FitWindow(format!(
            "survival {} at t={} leaves too little decay to fit",
            curve.survival[last], curve.times[last]
        )));
    }

    let n = curve.n_paths as f64;
    let xs: Vec<f64> = idx.iter().map(|&i| curve.times[i].ln()).collect();
    let ys: Vec<f64> = idx.iter().map(|&i| curve.survival[i].ln()).collect();
    let vs: Vec<f64> = idx
        .iter()
        .map(|&i| {
            let s = curve.survival[i];
            ((1.0 - s) / (n * s)).max(1.0 / (n * n))
        })
        .collect();
    let ws: Vec<f64> = vs.iter().map(|v| v.recip()).collect();

    let sw: f64 = ws.iter().sum();
    let xbar = ws.iter().zip(&xs).map(|(w, x)| w * x).sum::<f64>() / sw;
    let ybar = ws.iter().zip(&ys).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = ws
        .iter()
        .zip(&xs)
        .map(|(w, x)| w * (x - xbar).powi(2))
        .sum();
    let sxy: f64 = (0..xs.len())
        .map(|i| ws[i] * (xs[i] - xbar) * (ys[i] - ybar))
        .sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;

    let coef: Vec<f64> = (0..xs.len())
        .map(|i| ws[i] * (xs[i] - xbar) / sxx)
        .collect();
    let mut var = 0.0;
    for i in 0..coef.len() {
        for j in 0..coef.len() {
            var += coef[i] * coef[j] * vs[i.min(j)];
        }
    }
    let stderr = var.max(0.0).sqrt();

    let ss_res: f64 = (0..xs.len())
        .map(|i| ws[i] * (ys[i] - intercept - slope * xs[i]).powi(2))
        .sum();
    let ss_tot: f64 = (0..xs.len()).map(|i| ws[i] * (ys[i] - ybar).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };

    let p_hat = -2.0 * slope;
    let p_stderr = 2.0 * stderr;
    let dm2 = curve.dim as f64 - 2.0;
    Ok(ExponentFit {
        dim: curve.dim,
        slope,
        stderr,
        window,
        n_points: idx.len(),
        r_squared,
        p_hat,
        p_stderr,
        lambda_hat: p_hat * (p_hat + dm2),
        lambda_stderr: (2.0 * p_hat + dm2).abs() * p_stderr,
    })
}

/// `P(tau_1 > t)` for one particle started at `x > 0`: `erf(x / sqrt(2t))`.
pub fn one_particle_survival(x: f64, t: f64) -> f64 {
    statrs::function::erf::erf(x / (2.0 * t).sqrt())
}

/// CDF of the arcsine law on `[0, 1]`: `(2/pi) asin(sqrt(t))`.
pub fn arcsine_cdf(t: f64) -> f64 {
    2.0 / PI * t.clamp(0.0, 1.0).sqrt().asin()
}

/// Bridges whose probability of reaching zero is below this are treated as
/// not crossing.
const CROSSING_TOL: f64 = 1e-4;
/// Bridge refinement stops at intervals of this length.
const LEAF_LENGTH: f64 = 1e-6;

/// One sample of `T = ∫_0^1 1{B(t) ∈ R_+^d} dt` for `B` started at the origin.
///
/// The path is generated on a grid of step `h`; steps during which the
/// orthant indicator may change are refined by Brownian-bridge midpoint
/// sampling down to intervals of length `1e-6`, where the occupation is read
/// off the linear interpolant. Steps whose bridge stays inside or outside
/// the orthant with probability at least `1 - 1e-4` count as a whole.
pub fn occupation_time_sample<R: Rng + ?Sized>(dim: usize, h: f64, rng: &mut R) -> Result<f64> {
    if dim == 0 {
        return Err(Error::InvalidDimension(0));
    }
    if !(h > 0.0 && h <= 1e-2) {
        return Err(Error::InvalidParameter(format!(
            "step h={h} outside (0, 0.01]"
        )));
    }
    let n = (1.0 / h).round() as usize;
    let dt = 1.0 / n as f64;
    let depth = (dt / LEAF_LENGTH).log2().ceil().clamp(0.0, 40.0) as usize;
    let sd = dt.sqrt();
    let mut x = vec![0.0; dim];
    let mut y = vec![0.0; dim];
    let mut scratch = vec![0.0; dim * (depth + 1)];
    let mut total = 0.0;
    for _ in 0..n {
        for (yi, xi) in y.iter_mut().zip(&x) {
            let z: f64 = rng.sample(StandardNormal);
            *yi = xi + sd * z;
        }
        total += bridge_occupation(&x, &y, dt, depth, rng, &mut scratch);
        std::mem::swap(&mut x, &mut y);
    }
    Ok(total.clamp(0.0, 1.0))
}

fn bridge_occupation<R: Rng + ?Sized>(
    a: &[f64],
    b: &[f64],
    len: f64,
    depth: usize,
    rng: &mut R,
    scratch: &mut [f64],
) -> f64 {
    let mut settled_inside = true;
    for (&ai, &bi) in a.iter().zip(b) {
        let same_sign = (ai < 0.0 && bi < 0.0) || (ai > 0.0 && bi > 0.0);
        let crossing = if same_sign {
            (-2.0 * ai * bi / len).exp()
        } else {
            1.0
        };
        if crossing < CROSSING_TOL {
            if ai < 0.0 {
                return 0.0;
            }
        } else {
            settled_inside = false;
        }
    }
    if settled_inside {
        return len;
    }
    if depth == 0 {
        return len * linear_inside_fraction(a, b);
    }
    let (mid, rest) = scratch.split_at_mut(a.len());
    let sd = (len / 4.0).sqrt();
    for i in 0..a.len() {
        let z: f64 = rng.sample(StandardNormal);
        mid[i] = 0.5 * (a[i] + b[i]) + sd * z;
    }
    let mid: &[f64] = mid;
    bridge_occupation(a, mid, len / 2.0, depth - 1, rng, rest)
        + bridge_occupation(mid, b, len / 2.0, depth - 1, rng, rest)
}

/// Fraction of `s ∈ [0, 1]` with `a + s (b - a)` in the closed positive orthant.
fn linear_inside_fraction(a: &[f64], b: &[f64]) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for (&ai, &bi) in a.iter().zip(b) {
        if ai >= 0.0 && bi >= 0.0 {
            continue;
        }
        if ai < 0.0 && bi < 0.0 {
            return 0.0;
        }
        let s = ai / (ai - bi);
        if ai < 0.0 {
            lo = lo.max(s);
        } else {
            hi = hi.min(s);
        }
    }
    (hi - lo).max(0.0)
}

/// Draws `n` occupation times with one substream per sample.
pub fn occupation_times(dim: usize, h: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    let streams = Substreams::new(seed).fork("occupation");
    let chunks: Vec<Vec<f64>> = chunk_ranges(n)
        .into_par_iter()
        .map(|range| {
            range
                .map(|i| occupation_time_sample(dim, h, &mut streams.stream(i as u64)))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

/// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
pub fn ks_distance(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathRow {
    pub path: usize,
    pub step: u64,
    pub t: f64,
    pub position: Vec<f64>,
}

/// Trajectories of the first `n` paths that survive to `t_max`, searching at
/// most `cfg.n_paths` candidates.
pub fn render_paths(cfg: &WalkConfig, n: usize) -> Result<Vec<PathRow>> {
    cfg.validate()?;
    if cfg.dim > 3 {
        return Err(Error::Unsupported(format!(
            "rendering needs dim <= 3, got {}",
            cfg.dim
        )));
    }
    if n > 10 {
        return Err(Error::InvalidParameter(format!(
            "at most 10 paths can be rendered, got {n}"
        )));
    }
    let streams = cfg.streams().fork("render");
    let step = cfg.model.step();
    let mut rows = Vec::new();
    let mut x = vec![0.0; cfg.dim];
    let mut found = 0;
    for i in 0..cfg.n_paths {
        if found == n {
            break;
        }
        let mut rng = streams.stream(i as u64);
        let mut trace = Vec::new();
        let exit = run_path(cfg, &mut rng, &mut x, |k, pos| {
            trace.push(PathRow {
                path: found,
                step: k,
                t: k as f64 * step,
                position: pos.to_vec(),
            })
        });
        if exit == ExitTime::Censored {
            rows.extend(trace);
            found += 1;
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn grid_is_geometric_and_bounded() {
        let g = time_grid(1e-3, 1.0);
        assert_eq!(g.len(), 3 * POINTS_PER_DECADE + 1);
        assert_relative_eq!(g[0], 1e-3, max_relative = 1e-12);
        assert_eq!(*g.last().unwrap(), 1.0);
        for w in g.windows(2) {
            assert_relative_eq!(w[1] / w[0], 10f64.powf(1.0 / 32.0), max_relative = 1e-12);
        }
        assert_eq!(time_grid(1.0, 1.0), vec![1.0]);
    }

    #[test]
    fn config_validation() {
        assert!(WalkConfig::brownian(0, 0.1, 1.0, 1000, 0).is_err());
        assert!(WalkConfig::brownian(2, -0.1, 1.0, 1000, 0).is_err());
        let c = WalkConfig::brownian(2, 0.1, 1.0, 1000, 0).unwrap();
        assert!(c.clone().with_start(vec![-1.0, -1.0]).is_err());
        assert!(c.clone().with_start(vec![1.0]).is_err());
        let l = WalkConfig::lattice(2, 10.0, 1000, 0).unwrap();
        assert!(l.with_start(vec![0.5, 1.0]).is_err());
    }

    #[test]
    fn horizon_shorter_than_one_step_is_censored() {
        assert!(WalkConfig::brownian(1, 0.5, 0.1, 1000, 1).is_err());
        let cfg = WalkConfig {
            dim: 1,
            model: WalkModel::Brownian { step: 0.5 },
            start: vec![1.0],
            t_max: 0.1,
            n_paths: 1000,
            seed: 1,
        };
        let mut rng = cfg.streams().stream(0);
        assert_eq!(sample_exit_time(&cfg, &mut rng), ExitTime::Censored);
    }

    #[test]
    fn exit_times_are_grid_multiples() {
        let cfg = WalkConfig::brownian(2, 0.25, 100.0, 1000, 4).unwrap();
        let s = cfg.streams();
        for i in 0..200 {
            if let ExitTime::Exited(t) = sample_exit_time(&cfg, &mut s.stream(i)) {
                let k = t / 0.25;
                assert!((k - k.round()).abs() < 1e-9 && k >= 1.0);
            }
        }
    }

    #[test]
    fn larger_start_survives_longer_pathwise() {
        let base = WalkConfig::brownian(3, 0.01, 20.0, 1000, 8).unwrap();
        let near = base.clone().with_start(vec![0.05, -0.5, -0.5]).unwrap();
        let far = base.with_start(vec![1.0 / 3f64.sqrt(); 3]).unwrap();
        let s = near.streams();
        for i in 0..300 {
            let a = sample_exit_time(&near, &mut s.stream(i)).as_f64();
            let b = sample_exit_time(&far, &mut s.stream(i)).as_f64();
            assert!(a <= b, "path {i}: {a} > {b}");
        }
    }

    #[test]
    fn finer_monitoring_never_survives_longer() {
        // Monitoring the same path at every other step is the coarse scheme.
        let fine = WalkConfig::brownian(2, 0.05, 50.0, 1000, 9).unwrap();
        let s = fine.streams();
        let mut x = vec![0.0; 2];
        for i in 0..300 {
            let mut coarse_exit = None;
            let tau_fine = run_path(&fine, &mut s.stream(i), &mut x, |k, pos| {
                if coarse_exit.is_none() && k > 0 && k % 2 == 0 && pos.iter().all(|&c| c < 0.0) {
                    coarse_exit = Some(k as f64 * 0.05);
                }
            });
            let tau_coarse = coarse_exit.unwrap_or(f64::INFINITY);
            assert!(tau_fine.as_f64() <= tau_coarse, "path {i}");
        }
    }

    #[test]
    fn survival_is_a_tail_function() {
        let cfg = WalkConfig::lattice(2, 200.0, 2000, 3).unwrap();
        let c = survival_curve(&cfg).unwrap();
        assert!(c.survival.windows(2).all(|w| w[1] <= w[0]));
        assert!(c.survival.iter().all(|&s| (0.0..=1.0).contains(&s)));
        assert_eq!(
            c.alive.last().copied().unwrap() as f64 / 2000.0,
            c.censored_fraction
        );
    }

    #[test]
    fn survival_curve_requires_enough_paths() {
        let cfg = WalkConfig::lattice(1, 10.0, 999, 0).unwrap();
        assert!(matches!(
            survival_curve(&cfg),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn blocked_coordinate_gives_quarter_exits() {
        // From (1, -5) two unit steps can only exit via 1 -> 0 -> -1.
        let cfg = WalkConfig {
            dim: 2,
            model: WalkModel::Lattice,
            start: vec![1.0, -5.0],
            t_max: 2.0,
            n_paths: 40_000,
            seed: 0,
        };
        let c = survival_curve(&cfg).unwrap();
        let s = *c.survival.last().unwrap();
        assert!(
            (s - 0.75).abs() < 4.0 * (0.75 * 0.25 / 40_000f64).sqrt(),
            "{s}"
        );
    }

    #[test]
    fn exact_power_law_fits_exactly() {
        let times = time_grid(1.0, 1000.0);
        let n = 1_000_000u64;
        let survival: Vec<f64> = times.iter().map(|t| t.powf(-0.5)).collect();
        let curve = SurvivalCurve {
            dim: 1,
            model: WalkModel::Lattice,
            alive: survival.iter().map(|s| (s * n as f64) as u64).collect(),
            stderr: survival
                .iter()
                .map(|s| (s * (1.0 - s) / n as f64).sqrt())
                .collect(),
            survival,
            times,
            n_paths: n as usize,
            censored_fraction: 1000f64.powf(-0.5),
        };
        let fit = fit_tail_exponent(&curve, (100.0, 1000.0)).unwrap();
        assert_relative_eq!(fit.p_hat, 1.0, epsilon = 1e-12);
        assert_relative_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
        assert_relative_eq!(fit.lambda_hat, 0.0, epsilon = 1e-11);
        assert_eq!(fit.n_points, 33);
        assert!(fit.stderr > 0.0);
    }

    #[test]
    fn fit_window_errors() {
        let cfg = WalkConfig::lattice(1, 100.0, 2000, 5).unwrap();
        let c = survival_curve(&cfg).unwrap();
        assert!(matches!(
            fit_tail_exponent(&c, (50.0, 60.0)),
            Err(Error::FitWindow(_))
        ));
        assert!(matches!(
            fit_tail_exponent(&c, (60.0, 50.0)),
            Err(Error::FitWindow(_))
        ));
        assert!(fit_tail_exponent(&c, (10.0, 100.0)).is_ok());

        let mut zero = c.clone();
        let last = zero.alive.len() - 1;
        zero.alive[last] = 0;
        zero.survival[last] = 0.0;
        assert!(matches!(
            fit_tail_exponent(&zero, (10.0, 100.0)),
            Err(Error::FitWindow(_))
        ));
    }

    #[test]
    fn one_particle_oracle_values() {
        assert_relative_eq!(
            one_particle_survival(1.0, 1.0),
            0.682_689_492_137_086,
            epsilon = 1e-10
        );
        assert_relative_eq!(arcsine_cdf(0.5), 0.5, epsilon = 1e-15);
        assert_eq!(arcsine_cdf(0.0), 0.0);
        assert_eq!(arcsine_cdf(1.0), 1.0);
    }

    #[test]
    fn occupation_samples_are_fractions() {
        let mut rng = Substreams::new(1).stream(0);
        for d in 1..4 {
            for _ in 0..50 {
                let t = occupation_time_sample(d, 1e-2, &mut rng).unwrap();
                assert!((0.0..=1.0).contains(&t));
            }
        }
        assert!(occupation_time_sample(1, 0.1, &mut rng).is_err());
        assert!(occupation_time_sample(0, 1e-3, &mut rng).is_err());
    }

    #[test]
    fn linear_fraction_cases() {
        assert_eq!(linear_inside_fraction(&[1.0, 1.0], &[2.0, 3.0]), 1.0);
        assert_eq!(linear_inside_fraction(&[1.0, -1.0], &[2.0, -3.0]), 0.0);
        assert_relative_eq!(linear_inside_fraction(&[-1.0], &[1.0]), 0.5);
        assert_relative_eq!(linear_inside_fraction(&[-1.0, 1.0], &[3.0, -1.0]), 0.25);
    }

    #[test]
    fn ks_distance_of_exact_quantiles_is_small() {
        let n = 1000;
        let s: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        assert!(ks_distance(&s, |x| x) <= 0.5 / n as f64 + 1e-12);
    }

    #[test]
    fn rendering_limits() {
        let cfg = WalkConfig::lattice(2, 50.0, 2000, 6).unwrap();
        assert!(render_paths(&cfg, 0).unwrap().is_empty());
        assert!(render_paths(&cfg, 11).is_err());
        let big = WalkConfig::lattice(4, 50.0, 2000, 6).unwrap();
        assert!(matches!(render_paths(&big, 1), Err(Error::Unsupported(_))));
    }

    #[test]
    fn rendered_paths_stay_in_the_complement() {
        let cfg = WalkConfig::lattice(2, 100.0, 5000, 7).unwrap();
        let rows = render_paths(&cfg, 3).unwrap();
        assert_eq!(rows.len(), 3 * 101);
        assert!(rows.iter().all(|r| r.position.iter().any(|&c| c >= 0.0)));

        let one = WalkConfig::lattice(1, 100.0, 5000, 7).unwrap();
        let rows = render_paths(&one, 2).unwrap();
        assert!(rows.iter().all(|r| r.position[0] >= 0.0));
    }
}
