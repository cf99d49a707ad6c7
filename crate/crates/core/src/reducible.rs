//! Reducible systems: a known transformation `y = g(t)x` takes
//! `x' = A(t)x + f(t)` to `y' = s'(t)By + g(t)f(t)` with constant `B`.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::autonomous::{anchored_chain_set, check_independence, forced_in, Frame};
use crate::basis::{BasisResult, Mode};
use crate::error::{FintError, Result};
use crate::expr::Transform;
use crate::spectral::{spectrum_of_transpose, DEFAULT_TOL};
use crate::system::{Reduction, SystemClass, SystemSpec};

/// Grid size of the reduction check.
const CHECK_POINTS: usize = 50;
/// Relative tolerance on `g' + gA − s'Bg`.
pub const REDUCTION_TOL: f64 = 1e-6;

/// Numeric check of the reduction identity `g' + gA = s'Bg` on the window.
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionCheck {
    /// Largest `‖g' + gA − s'Bg‖` relative to `1 + ‖g'‖ + ‖gA‖`.
    pub max_residual: f64,
    /// Smallest `|det g|` on the grid.
    pub min_det: f64,
}

impl ReductionCheck {
    pub fn passes(&self) -> bool {
        self.max_residual <= REDUCTION_TOL && self.min_det > 1e-12
    }
}

fn eval_g(red: &Reduction, t: f64) -> Result<DMatrix<f64>> {
    let n = red.g.len();
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in red.g.iter().enumerate() {
        for (j, e) in row.iter().enumerate() {
            m[(i, j)] = e.eval(t)?;
        }
    }
    Ok(m)
}

pub fn check_reduction(spec: &SystemSpec, red: &Reduction) -> Result<ReductionCheck> {
    let n = spec.n;
    if red.g.len() != n || red.g.iter().any(|r| r.len() != n) || red.b.shape() != (n, n) {
        return Err(FintError::Input(format!("reduction must be {n}×{n}")));
    }
    let (lo, hi) = spec.window;
    let width = hi - lo;
    let h = 1e-5 * width.max(1e-3);
    let rate = red.time_scale.clock_rate();
    let mut max_residual: f64 = 0.0;
    let mut min_det = f64::INFINITY;
    for k in 0..CHECK_POINTS {
        let t = lo + width * (k as f64 + 0.5) / CHECK_POINTS as f64;
        let g = eval_g(red, t)?;
        let dg = (eval_g(red, t + h)? - eval_g(red, t - h)?) / (2.0 * h);
        let ga = &g * spec.coefficient(t)?;
        let sbg = &red.b * &g * rate.eval(t)?;
        let r = (&dg + &ga - sbg).norm() / (1.0 + dg.norm() + ga.norm());
        max_residual = max_residual.max(r);
        min_det = min_det.min(g.determinant().abs());
    }
    Ok(ReductionCheck {
        max_residual,
        min_det,
    })
}

/// Basis of a reducible system from the Jordan chains of `Bᵀ`, written in
/// the original variables through `y = g(t)x`.
pub fn reducible_integrals(spec: &SystemSpec, mode: Mode) -> Result<BasisResult> {
    let red = spec
        .reduction
        .as_ref()
        .ok_or_else(|| FintError::construction("Theorem 3.1", "no reduction g(t), B was given"))?;
    let frame = Frame {
        transform: Some(Arc::new(Transform::new(red.g.clone()))),
        time_scale: red.time_scale,
        t0: spec.anchor(),
    };
    let data = spectrum_of_transpose(&red.b, DEFAULT_TOL)?;
    let mut result = BasisResult::new(spec.n, SystemClass::Reducible, mode);
    match mode {
        Mode::Autonomous => {
            return Err(FintError::construction(
                "Theorem 3.1",
                "reducible systems have no autonomous construction; use full or forced mode",
            ))
        }
        Mode::Full => {
            if spec.has_forcing() {
                return Err(FintError::construction(
                    "homogeneity",
                    "full mode needs f ≡ 0; use forced mode for this system",
                ));
            }
            for c in data.representatives() {
                for (e, tag) in anchored_chain_set(&frame, c) {
                    result.push(e, tag);
                }
            }
        }
        Mode::Forced => {
            let f = spec.forcing_exprs();
            for c in data.representatives() {
                for (e, tag) in forced_in(&frame, c, &f)? {
                    result.push(e, tag);
                }
            }
        }
    }
    if result.len() != spec.n {
        return Err(FintError::construction(
            "basis selection",
            format!("built {} integrals, expected {}", result.len(), spec.n),
        ));
    }
    check_independence(
        &result,
        spec.anchor() + 0.37 * (spec.window.1 - spec.window.0),
        1e-10,
    )?;
    Ok(result)
}
