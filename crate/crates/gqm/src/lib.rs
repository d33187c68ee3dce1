//! Quantum Fisher information and measurement compatibility for multimode
//! Gaussian states.
//!
//! A Gaussian state is stored as a displacement vector `d` of length 2m
//! (quadrature ordering q1, p1, ..., qm, pm, with d = √2 (Re α, Im α) per
//! mode) and a symmetric covariance matrix `V` normalized so the vacuum has
//! V = I. On top of that sit:
//!
//! - [`symplectic`]: the symplectic form, symplectic eigenvalues and the
//!   Williamson normal form.
//! - [`state`] / [`channel`]: states, Gaussian channels and their algebra.
//! - [`metrology`]: parametrized families, symmetric logarithmic derivatives,
//!   and the Fisher (F) and compatibility (J) matrices.
//! - [`estimation`]: Cramér–Rao bounds, scalar waste figures and measurement
//!   compatibility reports.
//! - [`interferometer`]: a three-parameter noisy interferometry scheme
//!   (phase, transmission, added noise) with closed-form F and probe
//!   optimization helpers.
//! - [`fock`]: an independent truncated number-basis oracle used to
//!   cross-check the Gaussian machinery.

pub mod channel;
pub mod error;
pub mod estimation;
pub mod fock;
pub mod interferometer;
pub mod metrology;
pub mod state;
pub mod symplectic;

pub use channel::GaussianChannel;
pub use error::{GqmError, Result};
pub use estimation::CompatibilityReport;
pub use metrology::{DerivativeMethod, ParametrizedFamily, QfiReport};
pub use state::GaussianState;
pub use symplectic::Williamson;
