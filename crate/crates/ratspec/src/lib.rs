//! Distances, interpolants and barycenters for rational spectra.
//!
//! An all-pole transfer function `G(s) = gain / prod_i (s - p_i)` induces a
//! power spectrum `|G(iw)|^2`. This crate fits such models to signals,
//! normalizes them to unit spectral energy, and compares them with a family
//! of distances that act on pole locations rather than on pointwise spectra:
//!
//! * [`metrics::rd`]: order-p pole matching distance,
//! * [`metrics::wrd`]: the same with residue-derived mass weights,
//! * [`metrics::otrd`]: optimal transport between weighted pole measures,
//! * [`metrics::w_closed`]: the order-p Wasserstein distance between the
//!   continuous spectra themselves, via cumulative-spectrum inversion,
//! * [`metrics::w_discrete`]: its sampled counterpart on frequency grids.
//!
//! On top of the distances sit displacement interpolation and barycenters
//! ([`interpolation`]), and small learning utilities (k-NN, K-barycenter
//! clustering, PCA) over pole embeddings ([`learning`]).

pub mod error;
pub mod experiments;
pub mod interpolation;
pub mod io;
pub mod learning;
pub mod metrics;
pub mod model;
#[cfg(test)]
pub(crate) mod testutil;
pub mod transport;

pub use error::{Error, Result};
pub use model::{RationalModel, Signal};
