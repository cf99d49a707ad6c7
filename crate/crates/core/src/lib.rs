//! Closed-form first integrals of linear ODE systems, built from the
//! eigen- and Jordan-structure of the transposed coefficient matrix and
//! checked numerically along trajectories.

pub mod autonomous;
pub mod basis;
pub mod classify;
pub mod error;
pub mod expr;
pub mod numerics;
pub mod reducible;
pub mod spectral;
pub mod system;
pub mod timevarying;

pub use autonomous::{basis, Frame, PartialIntegral};
pub use basis::{BasisResult, Integral, Mode, SingularSet};
pub use classify::{
    analyze, classify_system, construct, construct_as, default_mode, Analysis, Classification,
    LabelledSpectrum,
};
pub use error::{FintError, Result};
pub use expr::{CExpr, EvalPoint, Exponent, IntegralExpr, ScalarExpr};
pub use nalgebra::DMatrix;
pub use num_complex::Complex64;
pub use reducible::{check_reduction, reducible_integrals, ReductionCheck};
pub use system::{SpecFile, SystemClass, SystemSpec, TimeScale};
pub use timevarying::{
    algebraic_reducible_integrals, cramer_exponents, frozen_field_residual,
    ld_autonomous_integrals, ld_nonautonomous_integrals, ld_plan, triangular_integrals, LdChain,
    LdPlan,
};
