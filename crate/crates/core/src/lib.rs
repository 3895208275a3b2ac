//! Block entanglement of inhomogeneous spin-1/2 XY chains.
//!
//! Chains are mapped to free fermions, solved through an SVD of `A + B`, and
//! block entropies are read off the singular values of correlation-matrix
//! blocks. A strong-disorder RG engine and a dense exact-diagonalization
//! oracle provide independent routes to the same quantities.

pub mod chain;
pub mod entanglement;
pub mod error;
pub mod linalg;
pub mod oracle;
pub mod precision;
pub mod rg;
pub mod runner;
pub mod solver;

pub use chain::{
    assemble_quadratic_form, build_concentric_chain, sample_strong_disorder_chain, ChainSpec,
    CouplingProfile, QuadraticForm,
};
pub use error::{Error, Result};
pub use precision::{Extended, Real};
