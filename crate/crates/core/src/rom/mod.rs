//! Eigenbasis reduced-order models of a symmetric linear operator.

mod eig;
mod galerkin;

pub use eig::{eig_symmetric, eigenvalue_gaps, projection, EigenBasis, Ordering};
pub use galerkin::{
    basis_of, galerkin_rhs, modal_rate_variances, nlg_q, rom_integrate, variance_sort, Reduced, RomConfig, RomMode,
    SplitRhs, TrueRhs,
};
