//! Numerical laboratory for L_p estimates of nondivergence-form elliptic
//! and parabolic operators with measurable coefficients.

pub mod bellman;
pub mod coeffs;
pub mod domain;
pub mod error;
pub mod estimates;
pub mod exact;
pub mod fd;
pub mod linalg;
pub mod output;
pub mod quadrature;
pub mod resolvent;
pub mod sde;
pub mod suite;

pub use error::{LabError, Result};
