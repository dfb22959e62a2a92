//! Dirichlet eigenvalues of the Laplace-Beltrami operator on `S^2`.
//!
//! Finite volumes on the `(theta, phi)` lattice: ring nodes sit at
//! `theta_i = i h_theta`, `phi_j = j h_phi`, and each pole is one node owning
//! the cap of radius `h_theta / 2`. Fluxes across cell faces give a symmetric
//! stiffness matrix `K`; the mass matrix `W` is diagonal with entries
//! `sin(theta_i) h_theta h_phi` (cap area at the poles). Eigenpairs solve
//! `K u = lambda W u` on the nodes outside the Dirichlet set, which are
//! eliminated rather than kept as identity rows.

use std::f64::consts::PI;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sphere::DomainSpec;

/// Iteration cap for inverse iteration.
pub const MAX_ITERATIONS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_theta: usize,
    pub n_phi: usize,
    pub domain: DomainSpec,
}

impl GridSpec {
    pub fn new(n_theta: usize, n_phi: usize, domain: DomainSpec) -> Result<Self> {
        let g = Self {
            n_theta,
            n_phi,
            domain,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_theta < 16 || !self.n_theta.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "n_theta={} must be even and at least 16",
                self.n_theta
            )));
        }
        if self.n_phi < 32 || !self.n_phi.is_multiple_of(4) {
            return Err(Error::InvalidParameter(format!(
                "n_phi={} must be a multiple of 4 and at least 32",
                self.n_phi
            )));
        }
        self.domain.validate()?;
        match self.domain {
            DomainSpec::OrthantComplement { dim: 3 }
            | DomainSpec::Hemisphere { dim: 3 }
            | DomainSpec::Lune { dim: 3, .. } => Ok(()),
            other => Err(Error::Unsupported(format!(
                "no spherical grid for {} in dimension {}",
                other.name(),
                other.dim()
            ))),
        }
    }

    pub fn h_theta(&self) -> f64 {
        PI / self.n_theta as f64
    }

    pub fn h_phi(&self) -> f64 {
        2.0 * PI / self.n_phi as f64
    }

    /// The grid with both spacings halved.
    pub fn refined(&self) -> Self {
        Self {
            n_theta: 2 * self.n_theta,
            n_phi: 2 * self.n_phi,
            domain: self.domain,
        }
    }

    /// Total node count: two poles plus `n_theta - 1` rings of `n_phi` nodes.
    pub fn n_nodes(&self) -> usize {
        2 + (self.n_theta - 1) * self.n_phi
    }

    /// Global index of lattice node `(i, j)`; `i = 0` and `i = n_theta` are
    /// the poles and `j` wraps.
    pub fn node(&self, i: usize, j: usize) -> usize {
        if i == 0 {
            0
        } else if i == self.n_theta {
            self.n_nodes() - 1
        } else {
            1 + (i - 1) * self.n_phi + j % self.n_phi
        }
    }

    /// Whether lattice node `(i, j)` lies in the closed Dirichlet set. Decided
    /// on integer indices so boundary nodes are classified exactly.
    pub fn is_dirichlet(&self, i: usize, j: usize) -> bool {
        let (nt, np) = (self.n_theta, self.n_phi);
        match self.domain {
            // closed negative octant: z <= 0 and phi in [pi, 3 pi / 2]
            DomainSpec::OrthantComplement { .. } => {
                i == nt || (i != 0 && 2 * i >= nt && 2 * np <= 4 * j && 4 * j <= 3 * np)
            }
            DomainSpec::Hemisphere { .. } => 2 * i >= nt,
            DomainSpec::Lune { beta, .. } => {
                i == 0 || i == nt || j == 0 || j as f64 * self.h_phi() >= beta - 1e-12
            }
            _ => unreachable!("validated grid"),
        }
    }

    /// Cartesian coordinates of lattice node `(i, j)`.
    pub fn coords(&self, i: usize, j: usize) -> [f64; 3] {
        let (t, p) = (i as f64 * self.h_theta(), j as f64 * self.h_phi());
        [t.sin() * p.cos(), t.sin() * p.sin(), t.cos()]
    }
}

/// Stiffness and mass matrices restricted to the free nodes of a grid.
#[derive(Debug, Clone)]
pub struct SphereOperator {
    grid: GridSpec,
    /// Free-node index of each global node.
    free_index: Vec<Option<usize>>,
    weights: Vec<f64>,
    stiffness: SparseColMat<usize, f64>,
    /// Mass of every node, free or not.
    all_weights: Vec<f64>,
}

/// Builds the finite-volume discretization of `-Δ` with Dirichlet conditions
/// on the closed complement of `grid.domain`.
pub fn assemble_operator(grid: &GridSpec) -> Result<SphereOperator> {
    grid.validate()?;
    let (nt, np) = (grid.n_theta, grid.n_phi);
    let (ht, hp) = (grid.h_theta(), grid.h_phi());
    let n_nodes = grid.n_nodes();

    let mut all_weights = vec![0.0; n_nodes];
    let cap = 2.0 * PI * (1.0 - (ht / 2.0).cos());
    all_weights[0] = cap;
    all_weights[n_nodes - 1] = cap;
    for i in 1..nt {
        let w = (i as f64 * ht).sin() * ht * hp;
        for j in 0..np {
            all_weights[grid.node(i, j)] = w;
        }
    }

    let mut free_index = vec![None; n_nodes];
    let mut weights = Vec::new();
    let mut n_free = 0;
    let mut mark = |g: usize, dirichlet: bool| {
        if !dirichlet && free_index[g].is_none() {
            free_index[g] = Some(n_free);
            weights.push(all_weights[g]);
            n_free += 1;
        }
    };
    mark(0, grid.is_dirichlet(0, 0));
    for i in 1..nt {
        for j in 0..np {
            mark(grid.node(i, j), grid.is_dirichlet(i, j));
        }
    }
    mark(n_nodes - 1, grid.is_dirichlet(nt, 0));

    let mut diag = vec![0.0; n_free];
    let mut triplets = Vec::new();
    let mut edge = |a: usize, b: usize, c: f64| {
        let (fa, fb) = (free_index[a], free_index[b]);
        if let Some(ia) = fa {
            diag[ia] += c;
        }
        if let Some(ib) = fb {
            diag[ib] += c;
        }
        if let (Some(ia), Some(ib)) = (fa, fb) {
            triplets.push(Triplet::new(ia, ib, -c));
            triplets.push(Triplet::new(ib, ia, -c));
        }
    };
    // faces between rings i and i + 1 sit at theta_{i + 1/2}
    for i in 0..nt {
        let c = ((i as f64 + 0.5) * ht).sin() * hp / ht;
        for j in 0..np {
            edge(grid.node(i, j), grid.node(i + 1, j), c);
        }
    }
    for i in 1..nt {
        let c = ht / ((i as f64 * ht).sin() * hp);
        for j in 0..np {
            edge(grid.node(i, j), grid.node(i, j + 1), c);
        }
    }
    triplets.extend(diag.iter().enumerate().map(|(k, &v)| Triplet::new(k, k, v)));
    let stiffness = SparseColMat::try_new_from_triplets(n_free, n_free, &triplets)
        .map_err(|e| Error::Factorization(format!("sparse assembly failed: {e:?}")))?;

    Ok(SphereOperator {
        grid: *grid,
        free_index,
        weights,
        stiffness,
        all_weights,
    })
}

impl SphereOperator {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn n_free(&self) -> usize {
        self.weights.len()
    }

    /// Mass-matrix diagonal on the free nodes.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn stiffness(&self) -> &SparseColMat<usize, f64> {
        &self.stiffness
    }

    /// `K u` on the free nodes.
    pub fn apply_stiffness(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        let k = self.stiffness.as_ref();
        for col in 0..k.ncols() {
            let rows = k.symbolic().row_idx_of_col_raw(col);
            let vals = k.val_of_col(col);
            for (&r, &v) in rows.iter().zip(vals) {
                out[r] += v * u[col];
            }
        }
        out
    }

    /// Discrete `-Δ u = W^{-1} K u` on the free nodes.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut ku = self.apply_stiffness(u);
        ku.iter_mut().zip(&self.weights).for_each(|(v, w)| *v /= w);
        ku
    }

    /// Area-weighted fraction of the sphere covered by Dirichlet nodes.
    pub fn dirichlet_fraction(&self) -> f64 {
        let total: f64 = self.all_weights.iter().sum();
        let free: f64 = self.weights.iter().sum();
        1.0 - free / total
    }

    /// Extends a free-node vector by zeros on the Dirichlet nodes.
    pub fn to_full(&self, u: &[f64]) -> Vec<f64> {
        self.free_index
            .iter()
            .map(|f| f.map_or(0.0, |k| u[k]))
            .collect()
    }

    /// Free-node index of global node `g`, if any.
    pub fn free_index(&self, g: usize) -> Option<usize> {
        self.free_index[g]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralResult {
    pub lambda: f64,
    pub iterations: usize,
    /// `‖W^{-1} K u - lambda u‖_W` for the `W`-normalized eigenvector.
    pub residual: f64,
    pub grid: GridSpec,
    pub extrapolated: bool,
    /// Eigenvector on all grid nodes, zero on the Dirichlet set, positive
    /// sum.
    #[serde(skip)]
    pub eigenvector: Vec<f64>,
}

/// Smallest eigenvalue of `K u = lambda W u` by inverse iteration (shift 0)
/// with a sparse Cholesky factorization of `K`, iterating until the residual
/// is at most `tol * lambda`.
pub fn smallest_eigenvalue(op: &SphereOperator, tol: f64) -> Result<SpectralResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tol={tol} must be positive"
        )));
    }
    let n = op.n_free();
    if n == 0 {
        return Err(Error::InvalidParameter("grid has no free nodes".into()));
    }
    let llt = op
        .stiffness
        .sp_cholesky(Side::Lower)
        .map_err(|e| Error::Factorization(format!("{e:?}")))?;
    let w = &op.weights;
    let w_norm = |u: &[f64]| {
        u.iter()
            .zip(w)
            .map(|(x, wi)| x * x * wi)
            .sum::<f64>()
            .sqrt()
    };

    let mut u = vec![1.0; n];
    let s = w_norm(&u);
    u.iter_mut().for_each(|x| *x /= s);
    let mut rhs = Mat::<f64>::zeros(n, 1);
    let mut residual = f64::INFINITY;
    for it in 1..=MAX_ITERATIONS {
        for k in 0..n {
            rhs[(k, 0)] = w[k] * u[k];
        }
        llt.solve_in_place(rhs.as_mut());
        for k in 0..n {
            u[k] = rhs[(k, 0)];
        }
        let s = w_norm(&u);
        u.iter_mut().for_each(|x| *x /= s);

        let ku = op.apply_stiffness(&u);
        let lambda: f64 = ku.iter().zip(&u).map(|(a, b)| a * b).sum();
        residual = ku
            .iter()
            .zip(&u)
            .zip(w)
            .map(|((k, x), wi)| (k - lambda * wi * x).powi(2) / wi)
            .sum::<f64>()
            .sqrt();
        if residual <= tol * lambda {
            if u.iter().sum::<f64>() < 0.0 {
                u.iter_mut().for_each(|x| *x = -*x);
            }
            return Ok(SpectralResult {
                lambda,
                iterations: it,
                residual,
                grid: op.grid,
                extrapolated: false,
                eigenvector: op.to_full(&u),
            });
        }
    }
    Err(Error::Convergence {
        iterations: MAX_ITERATIONS,
        residual,
    })
}

/// Solves on `levels` grids, starting from `coarsest` and doubling both
/// resolutions each time.
pub fn solve_levels(coarsest: &GridSpec, levels: usize, tol: f64) -> Result<Vec<SpectralResult>> {
    let mut grid = *coarsest;
    let mut out = Vec::with_capacity(levels);
    for _ in 0..levels {
        out.push(smallest_eigenvalue(&assemble_operator(&grid)?, tol)?);
        grid = grid.refined();
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Extrapolation {
    pub value: f64,
    /// Estimated convergence order `q` in `lambda(h) = lambda_0 + c h^q`.
    pub order: f64,
    /// Set when the three finest values are not monotone or do not contract;
    /// `value` is then the finest raw value.
    pub warning: Option<String>,
}

impl Extrapolation {
    pub fn is_reliable(&self) -> bool {
        self.warning.is_none()
    }
}

/// Richardson extrapolation from values on grids refined by a factor of 2,
/// coarsest first, using the three finest values.
pub fn richardson_values(values: &[f64]) -> Result<Extrapolation> {
    if values.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "extrapolation needs at least 3 levels, got {}",
            values.len()
        )));
    }
    let [l1, l2, l3] = [
        values[values.len() - 3],
        values[values.len() - 2],
        values[values.len() - 1],
    ];
    let (d1, d2) = (l1 - l2, l2 - l3);
    if d2 == 0.0 {
        return Ok(Extrapolation {
            value: l3,
            order: f64::INFINITY,
            warning: None,
        });
    }
    let ratio = d1 / d2;
    if !(ratio > 1.0) {
        return Ok(Extrapolation {
            value: l3,
            order: f64::NAN,
            warning: Some(format!(
                "non-monotone or non-contracting sequence: ratio {ratio:.4}"
            )),
        });
    }
    Ok(Extrapolation {
        value: l3 - d2 / (ratio - 1.0),
        order: ratio.log2(),
        warning: None,
    })
}

/// [`richardson_values`] on a sequence of solves; checks that consecutive
/// grids are refinements by a factor of 2.
pub fn richardson_extrapolate(results: &[SpectralResult]) -> Result<Extrapolation> {
    for w in results.windows(2) {
        if w[1].grid.n_theta != 2 * w[0].grid.n_theta || w[1].grid.n_phi != 2 * w[0].grid.n_phi {
            return Err(Error::InvalidParameter(
                "grids must refine by a factor of 2".into(),
            ));
        }
    }
    let values: Vec<f64> = results.iter().map(|r| r.lambda).collect();
    richardson_values(&values)
}
