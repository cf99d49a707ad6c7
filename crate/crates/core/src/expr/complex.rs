//! Complex-valued expressions as pairs of real trees.

use std::ops;
use std::sync::Arc;

use num_complex::Complex64;

use super::integral::{IntegralExpr, Transform};
use super::scalar::ScalarExpr;
use crate::error::Result;

/// `re + i·im`; a missing imaginary part is identically zero.
#[derive(Debug, Clone)]
pub struct CExpr {
    pub re: IntegralExpr,
    pub im: Option<IntegralExpr>,
}

impl CExpr {
    pub fn new(re: IntegralExpr, im: IntegralExpr) -> Self {
        let im = if im.as_const() == Some(0.0) {
            None
        } else {
            Some(im)
        };
        CExpr { re, im }
    }

    pub fn real(re: IntegralExpr) -> Self {
        CExpr { re, im: None }
    }

    pub fn zero() -> Self {
        CExpr::real(IntegralExpr::constant(0.0))
    }

    pub fn constant(z: Complex64) -> Self {
        CExpr::new(IntegralExpr::constant(z.re), IntegralExpr::constant(z.im))
    }

    pub fn scalar(re: ScalarExpr, im: ScalarExpr) -> Self {
        CExpr::new(IntegralExpr::scalar(re), IntegralExpr::scalar(im))
    }

    /// `ν·x` (or `ν·g(t)x`) split into real and imaginary forms.
    pub fn lin(coeffs: &[Complex64], transform: Option<Arc<Transform>>) -> Self {
        let re = IntegralExpr::lin_with(coeffs.iter().map(|z| z.re).collect(), transform.clone());
        if coeffs.iter().all(|z| z.im == 0.0) {
            CExpr::real(re)
        } else {
            let im = IntegralExpr::lin_with(coeffs.iter().map(|z| z.im).collect(), transform);
            CExpr { re, im: Some(im) }
        }
    }

    pub fn is_real(&self) -> bool {
        self.im.is_none()
    }

    pub fn im_or_zero(&self) -> IntegralExpr {
        self.im
            .clone()
            .unwrap_or_else(|| IntegralExpr::constant(0.0))
    }

    pub fn scale(self, z: Complex64) -> Self {
        CExpr::constant(z) * self
    }

    /// `e^{−λ·s(t)}` as a function of time only.
    pub fn exp_neg(lambda: Complex64, s: &ScalarExpr) -> Self {
        if lambda.re == 0.0 && lambda.im == 0.0 {
            return CExpr::real(IntegralExpr::constant(1.0));
        }
        let decay = (ScalarExpr::Const(-lambda.re) * s.clone()).exp();
        if lambda.im == 0.0 {
            return CExpr::real(IntegralExpr::scalar(decay));
        }
        let phase = ScalarExpr::Const(lambda.im) * s.clone();
        if lambda.re == 0.0 {
            return CExpr::scalar(phase.clone().cos(), -phase.sin());
        }
        CExpr::scalar(decay.clone() * phase.clone().cos(), -(decay * phase.sin()))
    }

    /// Componentwise `∫[t₀,t]`; both parts must be free of `x`.
    pub fn quad(self, t0: f64) -> Result<Self> {
        let re = IntegralExpr::quad(self.re, t0)?;
        Ok(match self.im {
            None => CExpr::real(re),
            Some(im) => CExpr::new(re, IntegralExpr::quad(im, t0)?),
        })
    }
}

impl ops::Add for CExpr {
    type Output = CExpr;
    fn add(self, rhs: CExpr) -> CExpr {
        let im = match (self.im, rhs.im) {
            (None, None) => None,
            (Some(a), None) | (None, Some(a)) => Some(a),
            (Some(a), Some(b)) => Some(a + b),
        };
        CExpr {
            re: self.re + rhs.re,
            im,
        }
    }
}

impl ops::Sub for CExpr {
    type Output = CExpr;
    fn sub(self, rhs: CExpr) -> CExpr {
        self + (-rhs)
    }
}

impl ops::Neg for CExpr {
    type Output = CExpr;
    fn neg(self) -> CExpr {
        CExpr {
            re: -self.re,
            im: self.im.map(|i| -i),
        }
    }
}

impl ops::Mul for CExpr {
    type Output = CExpr;
    fn mul(self, rhs: CExpr) -> CExpr {
        match (self.im, rhs.im) {
            (None, None) => CExpr::real(self.re * rhs.re),
            (Some(b), None) => CExpr::new(self.re * rhs.re.clone(), b * rhs.re),
            (None, Some(d)) => CExpr::new(self.re.clone() * rhs.re, self.re * d),
            (Some(b), Some(d)) => CExpr::new(
                self.re.clone() * rhs.re.clone() - b.clone() * d.clone(),
                self.re * d + b * rhs.re,
            ),
        }
    }
}
