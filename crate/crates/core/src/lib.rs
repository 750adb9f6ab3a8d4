//! Approximation of probability distributions by transport maps.
//!
//! A target distribution `ν` is approximated by the pushforward (or
//! pullback) of a reference `η` under a map drawn from a finite-dimensional
//! class: Legendre or Hermite expansions, or monotone triangular maps built
//! by integrating a rectified partial derivative. The maps are fitted by
//! minimizing Wasserstein, MMD or KL objectives.
//!
//! Layout:
//!
//! | module | contents |
//! |--------|----------|
//! | [`quadrature`] | Clenshaw–Curtis, Gauss–Legendre, Gauss–Hermite rules |
//! | [`basis`] | spectral bases, expansions, L² projection |
//! | [`distributions`] | reference/target distributions, seeded substreams |
//! | [`maps`] | rectifiers, monotone components, triangular maps, exact transports |
//! | [`divergences`] | W_p objectives, empirical W_p, MMD, KL objectives, V-norm |
//! | [`optimize`] | BFGS and SPD solves |
//! | [`stability`] | numerical checks of the divergence/map-distance inequalities |
//! | [`experiments`] | convergence studies, rate fits, CSV/JSON output |

pub mod basis;
pub mod distributions;
pub mod divergences;
pub mod error;
pub mod experiments;
pub mod maps;
pub mod optimize;
pub mod quadrature;
pub mod stability;

pub use error::{Error, Result};
