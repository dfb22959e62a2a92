//! Monte Carlo and spectral tools for the time until `d` independent Brownian
//! particles are all negative at once.
//!
//! The survival probability decays like `t^{-p_d/2}`, where `p_d` is fixed by
//! the first Dirichlet eigenvalue `λ_1(d)` of the sphere minus its negative
//! orthant: `λ_1(d) = p_d (p_d + d - 2)`. The modules cover each side of that
//! relation:
//!
//! - [`sphere`]: points and spherical domains, areas.
//! - [`volume`]: hit-or-miss volume fractions and the slab recursion bound.
//! - [`bounds`]: Rayleigh-quotient upper bounds and isoperimetric lower bounds.
//! - [`fpt`]: exit-time simulation, survival curves and tail exponents.
//! - [`spectral`]: finite-volume Dirichlet eigenvalues on `S^2`.
//! - [`report`]: one summary row per dimension across all engines.
//! - [`rng`]: reproducible substreams shared by every Monte Carlo engine.

pub mod bounds;
pub mod error;
pub mod fpt;
pub mod report;
pub mod rng;
pub mod spectral;
pub mod sphere;
pub mod volume;

pub use error::{Error, Result};
pub use rng::Substreams;
pub use sphere::{DomainSpec, SpherePoint};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/domains.md")]
    mod domains {}
    #[doc = include_str!("../../../book/src/exit-times.md")]
    mod exit_times {}
    #[doc = include_str!("../../../book/src/bounds.md")]
    mod bounds {}
    #[doc = include_str!("../../../book/src/spectral.md")]
    mod spectral {}
    #[doc = include_str!("../../../book/src/reproducibility.md")]
    mod reproducibility {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
