//! Expression trees: scalar functions of `t` and integral expressions over
//! `(t, x)`.

pub mod complex;
pub mod integral;
pub mod scalar;

pub use complex::CExpr;
pub use integral::{
    eval_integral, format_integral, numeric_partial, EvalPoint, Exponent, IntegralExpr, LinForm,
    Part, PsiNode, QuadNode, Transform, Var,
};
pub use scalar::{eval_scalar, format_number, parse_scalar, Func, ScalarExpr};
