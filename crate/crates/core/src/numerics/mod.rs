//! Quadrature, trajectory integration and the verification oracle.

pub mod ode;
pub mod quad;
pub mod rank;
pub mod verify;

pub use ode::{dopri5, integrate_trajectory, Trajectory};
pub use quad::{adaptive_quad, adaptive_simpson};
pub use rank::{independence_rank, jacobian, matrix_rank};
pub use verify::{
    lie_residual, sample_initial_state, sample_unit_ball, verify_basis, verify_constancy,
    DriftStats, IntegralReport, VerificationReport, VerifyOptions,
};
