//! Expression trees over `(t, x₁…xₙ)`: the output type of every constructor.

use std::collections::HashMap;
use std::fmt;
use std::ops;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use serde_json::{json, Value};

use super::scalar::{format_number, negated, ScalarExpr};
use crate::error::{FintError, Result};
use crate::numerics::quad::adaptive_simpson;

/// Knot spacing of the quadrature memo grid.
const KNOT_STEP: f64 = 1.0 / 32.0;

/// Relative band around a vanishing arctan or Ψ denominator inside which
/// evaluation is refused.
const DENOMINATOR_BAND: f64 = 1e-12;

const VAR_NAMES: [&str; 6] = ["t", "τ", "σ", "ρ", "κ", "η"];

/// Fixed exponent of a power node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    /// `num/den` with `den > 0` and the fraction in lowest terms.
    Rational(i64, i64),
    Real(f64),
}

impl Exponent {
    pub fn int(k: i64) -> Self {
        Exponent::Rational(k, 1)
    }

    pub fn value(&self) -> f64 {
        match *self {
            Exponent::Rational(p, q) => p as f64 / q as f64,
            Exponent::Real(h) => h,
        }
    }

    pub fn as_integer(&self) -> Option<i64> {
        match *self {
            Exponent::Rational(p, 1) => Some(p),
            Exponent::Real(h) if h == h.trunc() && h.abs() < 1e15 => Some(h as i64),
            _ => None,
        }
    }

    fn render(&self) -> String {
        match *self {
            Exponent::Rational(p, 1) if p >= 0 => p.to_string(),
            Exponent::Rational(p, 1) => format!("({p})"),
            Exponent::Rational(p, q) => format!("({p}/{q})"),
            Exponent::Real(h) if h >= 0.0 => format_number(h),
            Exponent::Real(h) => format!("({})", format_number(h)),
        }
    }
}

/// Time-dependent matrix `g(t)` applied to the state before a linear form.
#[derive(Debug, Clone, PartialEq)]
pub struct Transform {
    pub g: Vec<Vec<ScalarExpr>>,
}

impl Transform {
    pub fn new(g: Vec<Vec<ScalarExpr>>) -> Self {
        Transform { g }
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn eval_matrix(&self, t: f64) -> Result<Vec<Vec<f64>>> {
        self.g
            .iter()
            .map(|row| row.iter().map(|e| e.eval(t)).collect())
            .collect()
    }

    /// `g(t)·x`.
    pub fn apply(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = Vec::with_capacity(self.g.len());
        for row in &self.g {
            let mut acc = 0.0;
            for (e, xi) in row.iter().zip(x) {
                acc += e.eval(t)? * xi;
            }
            y.push(acc);
        }
        Ok(y)
    }
}

/// `ν·x` or `ν·(g(t)x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinForm {
    pub coeffs: Vec<f64>,
    pub transform: Option<Arc<Transform>>,
}

impl LinForm {
    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> Result<f64> {
        if x.len() != self.coeffs.len() {
            return Err(FintError::domain(format!(
                "linear form of dimension {} evaluated on a state of length {}",
                self.coeffs.len(),
                x.len()
            )));
        }
        match &self.transform {
            None => Ok(dot(&self.coeffs, x)),
            Some(g) => Ok(dot(&self.coeffs, &g.apply(t, x)?)),
        }
    }

    /// Per-coordinate coefficients `Σⱼ νⱼ gⱼᵢ(t)` as scalar expressions.
    pub fn effective_coeffs(&self) -> Vec<ScalarExpr> {
        match &self.transform {
            None => self.coeffs.iter().map(|&c| ScalarExpr::Const(c)).collect(),
            Some(g) => (0..self.coeffs.len())
                .map(|i| {
                    let mut acc = ScalarExpr::Const(0.0);
                    for (j, &nu) in self.coeffs.iter().enumerate() {
                        if nu != 0.0 {
                            acc = acc + ScalarExpr::Const(nu) * g.g[j][i].clone();
                        }
                    }
                    acc
                })
                .collect(),
        }
    }

    fn render(&self) -> String {
        let mut out = String::new();
        for (i, c) in self.effective_coeffs().iter().enumerate() {
            let var = format!("x{}", i + 1);
            let term = match c.as_const() {
                Some(0.0) => continue,
                Some(1.0) => var,
                Some(-1.0) => format!("-{var}"),
                Some(v) => format!("{}*{var}", format_number(v)),
                None => {
                    let (sign, mag) = match negated(c) {
                        Some(m) => ("-", m),
                        None => ("", c.clone()),
                    };
                    if mag.level() >= 2 {
                        format!("{sign}{mag}*{var}")
                    } else {
                        format!("{sign}({mag})*{var}")
                    }
                }
            };
            if !out.is_empty() && !term.starts_with('-') {
                out.push('+');
            }
            out.push_str(&term);
        }
        if out.is_empty() {
            out.push('0');
        }
        out
    }

    fn level(&self) -> u8 {
        let effective = self.effective_coeffs();
        let nonzero: Vec<&ScalarExpr> = effective.iter().filter(|c| !c.is_zero()).collect();
        match nonzero.as_slice() {
            [] => 5,
            [c] => match c.as_const() {
                Some(1.0) => 5,
                Some(v) if v < 0.0 => 3,
                _ => 2,
            },
            _ => 1,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// Memoized definite integral `∫[t₀,t] integrand(τ) dτ` of an `x`-free
/// integrand.
///
/// Values at knots `t₀ + k·h` are cumulative sums of per-segment adaptive
/// Simpson results; a lookup adds the integral from the nearest knot on the
/// `t₀` side. The grid is fixed, so results do not depend on call order.
pub struct QuadNode {
    integrand: IntegralExpr,
    t0: f64,
    memo: Mutex<HashMap<u64, Knots>>,
}

#[derive(Default)]
struct Knots {
    forward: Vec<f64>,
    backward: Vec<f64>,
}

impl QuadNode {
    pub fn new(integrand: IntegralExpr, t0: f64) -> Result<Self> {
        if !integrand.is_x_free() {
            return Err(FintError::Input(
                "quadrature integrand must not depend on the state".into(),
            ));
        }
        if !t0.is_finite() {
            return Err(FintError::Input("quadrature anchor must be finite".into()));
        }
        Ok(QuadNode {
            integrand,
            t0,
            memo: Mutex::new(HashMap::new()),
        })
    }

    pub fn integrand(&self) -> &IntegralExpr {
        &self.integrand
    }

    pub fn anchor(&self) -> f64 {
        self.t0
    }

    fn segment(&self, a: f64, b: f64, tol: f64) -> Result<f64> {
        adaptive_simpson(|tau| self.integrand.eval(tau, &[], tol), a, b, tol)
    }

    pub fn value(&self, t: f64, tol: f64) -> Result<f64> {
        if !t.is_finite() {
            return Err(FintError::domain("quadrature at non-finite time"));
        }
        let steps = ((t - self.t0) / KNOT_STEP).trunc();
        if steps.abs() > 1e7 {
            return Err(FintError::Quadrature(format!(
                "time {t} too far from the anchor {}",
                self.t0
            )));
        }
        let k = steps as i64;
        let base = self.knot(k, tol)?;
        let tk = self.t0 + k as f64 * KNOT_STEP;
        if tk == t {
            return Ok(base);
        }
        Ok(base + self.segment(tk, t, tol)?)
    }

    fn knot(&self, k: i64, tol: f64) -> Result<f64> {
        if k == 0 {
            return Ok(0.0);
        }
        let mut memo = self.memo.lock().unwrap_or_else(|e| e.into_inner());
        let knots = memo.entry(tol.to_bits()).or_default();
        let (table, dir) = if k > 0 {
            (&mut knots.forward, 1.0)
        } else {
            (&mut knots.backward, -1.0)
        };
        if table.is_empty() {
            table.push(0.0);
        }
        let need = k.unsigned_abs() as usize;
        while table.len() <= need {
            let j = table.len() as f64;
            let a = self.t0 + dir * (j - 1.0) * KNOT_STEP;
            let b = self.t0 + dir * j * KNOT_STEP;
            let last = *table.last().unwrap();
            table.push(last + self.segment(a, b, tol)?);
        }
        Ok(table[need])
    }
}

impl fmt::Debug for QuadNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QuadNode")
            .field("integrand", &self.integrand)
            .field("t0", &self.t0)
            .finish()
    }
}

/// Real or imaginary part selector for Ψ values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Re,
    Im,
}

/// Solver for the lower-triangular functional system
/// `νᵏx = Σ_{τ=1..k} C(k−1, τ−1)·Ψ_τ·ν^{k−τ}x`, `k = 1…m−1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiNode {
    pub chain: Vec<Vec<Complex64>>,
    pub transform: Option<Arc<Transform>>,
}

impl PsiNode {
    pub fn new(chain: Vec<Vec<Complex64>>, transform: Option<Arc<Transform>>) -> Self {
        PsiNode { chain, transform }
    }

    pub fn len(&self) -> usize {
        self.chain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chain.is_empty()
    }

    pub fn forms(&self, t: f64, x: &[f64]) -> Result<Vec<Complex64>> {
        let n = self.chain.first().map_or(0, |v| v.len());
        if x.len() != n {
            return Err(FintError::domain(
                "Ψ evaluated without a state of matching length",
            ));
        }
        let y = match &self.transform {
            None => x.to_vec(),
            Some(g) => g.apply(t, x)?,
        };
        Ok(self
            .chain
            .iter()
            .map(|nu| nu.iter().zip(&y).map(|(c, v)| c * v).sum())
            .collect())
    }

    /// Values `Ψ₁…Ψ_{m−1}` at `(t, x)`; index 0 of the result is `Ψ₁`.
    pub fn solve(&self, t: f64, x: &[f64]) -> Result<Vec<Complex64>> {
        let p = self.forms(t, x)?;
        let scale = p.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if p[0].norm() <= DENOMINATOR_BAND * scale || p[0].norm() == 0.0 {
            return Err(FintError::domain("Ψ system is singular: ν⁰x = 0"));
        }
        let m = p.len();
        let mut psi: Vec<Complex64> = Vec::with_capacity(m.saturating_sub(1));
        for k in 1..m {
            let mut rhs = p[k];
            for tau in 1..k {
                rhs -= binomial(k - 1, tau - 1) * psi[tau - 1] * p[k - tau];
            }
            psi.push(rhs / p[0]);
        }
        Ok(psi)
    }
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round()
}

/// Evaluable expression over `(t, x)`.
#[derive(Debug, Clone)]
pub enum IntegralExpr {
    Scalar(ScalarExpr),
    Lin(Arc<LinForm>),
    Add(Arc<IntegralExpr>, Arc<IntegralExpr>),
    Sub(Arc<IntegralExpr>, Arc<IntegralExpr>),
    Mul(Arc<IntegralExpr>, Arc<IntegralExpr>),
    Div(Arc<IntegralExpr>, Arc<IntegralExpr>),
    Neg(Arc<IntegralExpr>),
    Pow(Arc<IntegralExpr>, Exponent),
    Exp(Arc<IntegralExpr>),
    Ln(Arc<IntegralExpr>),
    Abs(Arc<IntegralExpr>),
    Sin(Arc<IntegralExpr>),
    Cos(Arc<IntegralExpr>),
    /// Principal `atan(num/den)`.
    Arctan(Arc<IntegralExpr>, Arc<IntegralExpr>),
    Quad(Arc<QuadNode>),
    /// `Ψ_k` (1-based) of a chain, real or imaginary part.
    Psi(Arc<PsiNode>, usize, Part),
}

/// Coordinate selector for [`numeric_partial`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    T,
    X(usize),
}

/// A point `(t, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPoint {
    pub t: f64,
    pub x: Vec<f64>,
}

impl EvalPoint {
    pub fn new(t: f64, x: Vec<f64>) -> Self {
        EvalPoint { t, x }
    }
}

impl IntegralExpr {
    pub fn scalar(e: ScalarExpr) -> Self {
        IntegralExpr::Scalar(e)
    }

    pub fn constant(v: f64) -> Self {
        IntegralExpr::Scalar(ScalarExpr::Const(v))
    }

    pub fn lin(coeffs: Vec<f64>) -> Self {
        IntegralExpr::Lin(Arc::new(LinForm {
            coeffs,
            transform: None,
        }))
    }

    pub fn lin_with(coeffs: Vec<f64>, transform: Option<Arc<Transform>>) -> Self {
        IntegralExpr::Lin(Arc::new(LinForm { coeffs, transform }))
    }

    /// `∫[t₀,t] integrand dτ`; the integrand must not depend on `x`.
    pub fn quad(integrand: IntegralExpr, t0: f64) -> Result<Self> {
        if integrand.as_const() == Some(0.0) {
            return Ok(IntegralExpr::constant(0.0));
        }
        Ok(IntegralExpr::Quad(Arc::new(QuadNode::new(integrand, t0)?)))
    }

    pub fn psi(node: Arc<PsiNode>, index: usize, part: Part) -> Self {
        IntegralExpr::Psi(node, index, part)
    }

    pub fn exp(self) -> Self {
        match self {
            IntegralExpr::Scalar(s) => IntegralExpr::Scalar(s.exp()),
            other => IntegralExpr::Exp(Arc::new(other)),
        }
    }

    pub fn ln(self) -> Self {
        IntegralExpr::Ln(Arc::new(self))
    }

    pub fn abs(self) -> Self {
        IntegralExpr::Abs(Arc::new(self))
    }

    pub fn sin(self) -> Self {
        match self {
            IntegralExpr::Scalar(s) => IntegralExpr::Scalar(s.sin()),
            other => IntegralExpr::Sin(Arc::new(other)),
        }
    }

    pub fn cos(self) -> Self {
        match self {
            IntegralExpr::Scalar(s) => IntegralExpr::Scalar(s.cos()),
            other => IntegralExpr::Cos(Arc::new(other)),
        }
    }

    pub fn pow(self, h: Exponent) -> Self {
        match h.as_integer() {
            Some(1) => self,
            Some(0) => IntegralExpr::constant(1.0),
            _ => IntegralExpr::Pow(Arc::new(self), h),
        }
    }

    pub fn arctan(num: IntegralExpr, den: IntegralExpr) -> Self {
        IntegralExpr::Arctan(Arc::new(num), Arc::new(den))
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            IntegralExpr::Scalar(s) => s.as_const(),
            _ => None,
        }
    }

    /// True when the tree never reads the state vector.
    pub fn is_x_free(&self) -> bool {
        use IntegralExpr::*;
        match self {
            Scalar(_) | Quad(_) => true,
            Lin(_) | Psi(..) => false,
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Arctan(a, b) => {
                a.is_x_free() && b.is_x_free()
            }
            Neg(a) | Pow(a, _) | Exp(a) | Ln(a) | Abs(a) | Sin(a) | Cos(a) => a.is_x_free(),
        }
    }

    /// Evaluate at `(t, x)`. Quadrature nodes are resolved to `quad_tol`.
    pub fn eval(&self, t: f64, x: &[f64], quad_tol: f64) -> Result<f64> {
        use IntegralExpr::*;
        let v = match self {
            Scalar(s) => s.eval(t)?,
            Lin(l) => l.eval(t, x)?,
            Add(a, b) => a.eval(t, x, quad_tol)? + b.eval(t, x, quad_tol)?,
            Sub(a, b) => a.eval(t, x, quad_tol)? - b.eval(t, x, quad_tol)?,
            Mul(a, b) => a.eval(t, x, quad_tol)? * b.eval(t, x, quad_tol)?,
            Div(a, b) => {
                let num = a.eval(t, x, quad_tol)?;
                let den = b.eval(t, x, quad_tol)?;
                if den == 0.0 {
                    return Err(FintError::domain(format!("division by zero in `{b}`")));
                }
                num / den
            }
            Neg(a) => -a.eval(t, x, quad_tol)?,
            Pow(a, h) => {
                let base = a.eval(t, x, quad_tol)?;
                let hv = h.value();
                if base == 0.0 {
                    if hv >= 1.0 {
                        0.0
                    } else {
                        return Err(FintError::domain(format!(
                            "power {hv} of `{a}` at its zero set"
                        )));
                    }
                } else if let Some(k) = h.as_integer() {
                    if k.unsigned_abs() <= i32::MAX as u64 {
                        base.powi(k as i32)
                    } else {
                        base.powf(hv)
                    }
                } else if base < 0.0 {
                    return Err(FintError::domain(format!(
                        "non-integer power of negative value of `{a}`"
                    )));
                } else {
                    base.powf(hv)
                }
            }
            Exp(a) => a.eval(t, x, quad_tol)?.exp(),
            Ln(a) => {
                let v = a.eval(t, x, quad_tol)?;
                if v <= 0.0 {
                    return Err(FintError::domain(format!("ln of non-positive `{a}`")));
                }
                v.ln()
            }
            Abs(a) => a.eval(t, x, quad_tol)?.abs(),
            Sin(a) => a.eval(t, x, quad_tol)?.sin(),
            Cos(a) => a.eval(t, x, quad_tol)?.cos(),
            Arctan(n, d) => {
                let num = n.eval(t, x, quad_tol)?;
                let den = d.eval(t, x, quad_tol)?;
                if den == 0.0 || den.abs() <= DENOMINATOR_BAND * num.abs() {
                    return Err(FintError::domain(format!(
                        "arctan denominator `{d}` vanishes"
                    )));
                }
                (num / den).atan()
            }
            Quad(q) => q.value(t, quad_tol)?,
            Psi(node, k, part) => {
                let values = node.solve(t, x)?;
                let z = values.get(k - 1).copied().ok_or_else(|| {
                    FintError::domain(format!(
                        "Ψ index {k} outside a chain of length {}",
                        node.len()
                    ))
                })?;
                match part {
                    Part::Re => z.re,
                    Part::Im => z.im,
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(FintError::domain(format!("non-finite value of `{self}`")))
        }
    }

    pub fn eval_at(&self, p: &EvalPoint, quad_tol: f64) -> Result<f64> {
        self.eval(p.t, &p.x, quad_tol)
    }

    /// Expressions whose zero sets bound the domain: quotient and arctan
    /// denominators, logarithm arguments, bases of powers below one and the
    /// leading forms of Ψ systems.
    pub fn singular_exprs(&self) -> Vec<IntegralExpr> {
        let mut out: Vec<IntegralExpr> = Vec::new();
        let mut seen: Vec<String> = Vec::new();
        self.collect_singular(&mut out, &mut seen);
        out
    }

    fn collect_singular(&self, out: &mut Vec<IntegralExpr>, seen: &mut Vec<String>) {
        use IntegralExpr::*;
        fn push(e: IntegralExpr, out: &mut Vec<IntegralExpr>, seen: &mut Vec<String>) {
            if e.is_x_free() {
                return;
            }
            let key = e.to_string();
            if !seen.contains(&key) {
                seen.push(key);
                out.push(e);
            }
        }
        match self {
            Scalar(_) | Lin(_) | Quad(_) => {}
            Add(a, b) | Sub(a, b) | Mul(a, b) => {
                a.collect_singular(out, seen);
                b.collect_singular(out, seen);
            }
            Div(a, b) | Arctan(a, b) => {
                a.collect_singular(out, seen);
                b.collect_singular(out, seen);
                push((**b).clone(), out, seen);
            }
            Neg(a) | Exp(a) | Abs(a) | Sin(a) | Cos(a) => a.collect_singular(out, seen),
            Ln(a) => {
                a.collect_singular(out, seen);
                push((**a).clone(), out, seen);
            }
            Pow(a, h) => {
                a.collect_singular(out, seen);
                if h.value() < 1.0 {
                    let inner = match &**a {
                        Abs(b) => (**b).clone(),
                        other => other.clone(),
                    };
                    push(inner, out, seen);
                }
            }
            Psi(node, _, _) => {
                let lead = &node.chain[0];
                let re = IntegralExpr::lin_with(
                    lead.iter().map(|z| z.re).collect(),
                    node.transform.clone(),
                );
                if lead.iter().all(|z| z.im == 0.0) {
                    push(re, out, seen);
                } else {
                    let im = IntegralExpr::lin_with(
                        lead.iter().map(|z| z.im).collect(),
                        node.transform.clone(),
                    );
                    push(re.clone() * re + im.clone() * im, out, seen);
                }
            }
        }
    }

    /// Copy of the tree with `delta` added to the first coefficient of the
    /// first linear form met in evaluation order.
    pub fn perturb_first_linform(&self, delta: f64) -> Option<IntegralExpr> {
        use IntegralExpr::*;
        fn bin(
            a: &Arc<IntegralExpr>,
            b: &Arc<IntegralExpr>,
            delta: f64,
            mk: fn(Arc<IntegralExpr>, Arc<IntegralExpr>) -> IntegralExpr,
        ) -> Option<IntegralExpr> {
            if let Some(pa) = a.perturb_first_linform(delta) {
                return Some(mk(Arc::new(pa), b.clone()));
            }
            b.perturb_first_linform(delta)
                .map(|pb| mk(a.clone(), Arc::new(pb)))
        }
        match self {
            Scalar(_) | Quad(_) | Psi(..) => None,
            Lin(l) => {
                let mut l2 = (**l).clone();
                if let Some(c) = l2.coeffs.first_mut() {
                    *c += delta;
                }
                Some(Lin(Arc::new(l2)))
            }
            Add(a, b) => bin(a, b, delta, Add),
            Sub(a, b) => bin(a, b, delta, Sub),
            Mul(a, b) => bin(a, b, delta, Mul),
            Div(a, b) => bin(a, b, delta, Div),
            Arctan(a, b) => bin(a, b, delta, Arctan),
            Neg(a) => a.perturb_first_linform(delta).map(|p| Neg(Arc::new(p))),
            Pow(a, h) => a.perturb_first_linform(delta).map(|p| Pow(Arc::new(p), *h)),
            Exp(a) => a.perturb_first_linform(delta).map(|p| Exp(Arc::new(p))),
            Ln(a) => a.perturb_first_linform(delta).map(|p| Ln(Arc::new(p))),
            Abs(a) => a.perturb_first_linform(delta).map(|p| Abs(Arc::new(p))),
            Sin(a) => a.perturb_first_linform(delta).map(|p| Sin(Arc::new(p))),
            Cos(a) => a.perturb_first_linform(delta).map(|p| Cos(Arc::new(p))),
        }
    }

    /// Dimension of the state read by the tree, if any linear form is present.
    pub fn state_dim(&self) -> Option<usize> {
        use IntegralExpr::*;
        match self {
            Scalar(_) | Quad(_) => None,
            Lin(l) => Some(l.dim()),
            Psi(node, _, _) => node.chain.first().map(|v| v.len()),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Arctan(a, b) => {
                a.state_dim().or_else(|| b.state_dim())
            }
            Neg(a) | Pow(a, _) | Exp(a) | Ln(a) | Abs(a) | Sin(a) | Cos(a) => a.state_dim(),
        }
    }

    fn level(&self) -> u8 {
        use IntegralExpr::*;
        match self {
            Scalar(s) => s.level(),
            Lin(l) => l.level(),
            Add(..) | Sub(..) | Quad(_) => 1,
            Mul(..) | Div(..) => 2,
            Neg(_) => 3,
            Pow(..) => 4,
            _ => 5,
        }
    }

    /// Render; `depth` selects the time variable name (`t`, then `τ`, `σ`…
    /// inside nested quadratures).
    pub fn render(&self, depth: usize) -> String {
        let mut out = String::new();
        self.write(&mut out, depth);
        out
    }

    fn write_child(&self, out: &mut String, min: u8, depth: usize) {
        if self.level() < min {
            out.push('(');
            self.write(out, depth);
            out.push(')');
        } else {
            self.write(out, depth);
        }
    }

    /// Right operands never start with a sign, so `a-(-b)` stays readable.
    fn write_right(&self, out: &mut String, min: u8, depth: usize) {
        let min = if self.level() == 3 { 4 } else { min };
        let mut inner = String::new();
        self.write_child(&mut inner, min, depth);
        if inner.starts_with('-') {
            out.push('(');
            out.push_str(&inner);
            out.push(')');
        } else {
            out.push_str(&inner);
        }
    }

    fn write(&self, out: &mut String, depth: usize) {
        use IntegralExpr::*;
        let var = VAR_NAMES[depth.min(VAR_NAMES.len() - 1)];
        match self {
            Scalar(s) => out.push_str(&s.render(var)),
            Lin(l) => out.push_str(&l.render()),
            Add(a, b) => {
                a.write_child(out, 1, depth);
                out.push('+');
                b.write_right(out, 2, depth);
            }
            Sub(a, b) => {
                a.write_child(out, 1, depth);
                out.push('-');
                b.write_right(out, 2, depth);
            }
            Mul(a, b) => {
                a.write_child(out, 2, depth);
                out.push('*');
                b.write_right(out, 3, depth);
            }
            Div(a, b) => {
                a.write_child(out, 2, depth);
                out.push('/');
                b.write_right(out, 3, depth);
            }
            Neg(a) => {
                out.push('-');
                a.write_child(out, 3, depth);
            }
            Pow(a, h) => {
                a.write_child(out, 5, depth);
                out.push('^');
                out.push_str(&h.render());
            }
            Exp(a) => write_call(out, "exp", a, depth),
            Ln(a) => write_call(out, "ln", a, depth),
            Abs(a) => write_call(out, "abs", a, depth),
            Sin(a) => write_call(out, "sin", a, depth),
            Cos(a) => write_call(out, "cos", a, depth),
            Arctan(n, d) => {
                out.push_str("atan((");
                n.write(out, depth);
                out.push_str(")/(");
                d.write(out, depth);
                out.push_str("))");
            }
            Quad(q) => {
                let inner = VAR_NAMES[(depth + 1).min(VAR_NAMES.len() - 1)];
                out.push_str(&format!("∫[{},{}] ", format_number(q.t0), var));
                q.integrand.write(out, depth + 1);
                out.push_str(&format!(" d{inner}"));
            }
            Psi(node, k, part) => {
                let forms: Vec<String> =
                    node.chain.iter().map(|v| render_complex_form(v)).collect();
                let name = format!("Ψ{k}[{}]", forms.join("; "));
                let real = node.chain.iter().flatten().all(|z| z.im == 0.0);
                match (part, real) {
                    (Part::Re, true) => out.push_str(&name),
                    (Part::Re, false) => out.push_str(&format!("re({name})")),
                    (Part::Im, _) => out.push_str(&format!("im({name})")),
                }
            }
        }
    }

    /// Machine representation; scalar sub-expressions are stored as text
    /// accepted by the scalar parser.
    pub fn to_json(&self) -> Value {
        use IntegralExpr::*;
        let un = |op: &str, a: &IntegralExpr| json!({"op": op, "arg": a.to_json()});
        let bin = |op: &str, a: &IntegralExpr, b: &IntegralExpr| json!({"op": op, "args": [a.to_json(), b.to_json()]});
        match self {
            Scalar(s) => json!({"op": "scalar", "expr": s.to_string()}),
            Lin(l) => {
                let mut v = json!({"op": "lin", "coeffs": l.coeffs});
                if let Some(g) = &l.transform {
                    let rows: Vec<Vec<String>> =
                        g.g.iter()
                            .map(|r| r.iter().map(|e| e.to_string()).collect())
                            .collect();
                    v["g"] = json!(rows);
                }
                v
            }
            Add(a, b) => bin("add", a, b),
            Sub(a, b) => bin("sub", a, b),
            Mul(a, b) => bin("mul", a, b),
            Div(a, b) => bin("div", a, b),
            Neg(a) => un("neg", a),
            Pow(a, h) => {
                let e = match h {
                    Exponent::Rational(p, q) => json!({"num": p, "den": q}),
                    Exponent::Real(v) => json!(v),
                };
                json!({"op": "pow", "base": a.to_json(), "exponent": e})
            }
            Exp(a) => un("exp", a),
            Ln(a) => un("ln", a),
            Abs(a) => un("abs", a),
            Sin(a) => un("sin", a),
            Cos(a) => un("cos", a),
            Arctan(n, d) => json!({"op": "atan", "num": n.to_json(), "den": d.to_json()}),
            Quad(q) => json!({"op": "quad", "t0": q.t0, "integrand": q.integrand.to_json()}),
            Psi(node, k, part) => {
                let chain: Vec<Vec<[f64; 2]>> = node
                    .chain
                    .iter()
                    .map(|v| v.iter().map(|z| [z.re, z.im]).collect())
                    .collect();
                let mut v = json!({
                    "op": "psi",
                    "index": k,
                    "part": match part { Part::Re => "re", Part::Im => "im" },
                    "chain": chain,
                });
                if let Some(g) = &node.transform {
                    let rows: Vec<Vec<String>> =
                        g.g.iter()
                            .map(|r| r.iter().map(|e| e.to_string()).collect())
                            .collect();
                    v["g"] = json!(rows);
                }
                v
            }
        }
    }
}

fn write_call(out: &mut String, name: &str, a: &IntegralExpr, depth: usize) {
    out.push_str(name);
    out.push('(');
    a.write(out, depth);
    out.push(')');
}

fn render_complex_form(v: &[Complex64]) -> String {
    let mut out = String::new();
    for (i, z) in v.iter().enumerate() {
        if *z == Complex64::new(0.0, 0.0) {
            continue;
        }
        let var = format!("x{}", i + 1);
        let term = if z.im == 0.0 {
            match z.re {
                r if r == 1.0 => var,
                r if r == -1.0 => format!("-{var}"),
                r => format!("{}*{var}", format_number(r)),
            }
        } else if z.re == 0.0 {
            format!("{}i*{var}", format_number(z.im))
        } else {
            let sign = if z.im < 0.0 { "-" } else { "+" };
            format!(
                "({}{}{}i)*{var}",
                format_number(z.re),
                sign,
                format_number(z.im.abs())
            )
        };
        if !out.is_empty() && !term.starts_with('-') {
            out.push('+');
        }
        out.push_str(&term);
    }
    if out.is_empty() {
        out.push('0');
    }
    out
}

impl fmt::Display for IntegralExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(0))
    }
}

/// Canonical infix rendering.
pub fn format_integral(f: &IntegralExpr) -> String {
    f.to_string()
}

pub fn eval_integral(f: &IntegralExpr, p: &EvalPoint, quad_tol: f64) -> Result<f64> {
    f.eval_at(p, quad_tol)
}

/// Central difference with step `ε^(1/3)·(1+|coordinate|)`.
pub fn numeric_partial(f: &IntegralExpr, p: &EvalPoint, var: Var, quad_tol: f64) -> Result<f64> {
    let coord = match var {
        Var::T => p.t,
        Var::X(i) => {
            *p.x.get(i)
                .ok_or_else(|| FintError::Input(format!("no coordinate x{}", i + 1)))?
        }
    };
    let h = f64::EPSILON.cbrt() * (1.0 + coord.abs());
    let shifted = |delta: f64| -> Result<f64> {
        match var {
            Var::T => f.eval(p.t + delta, &p.x, quad_tol),
            Var::X(i) => {
                let mut x = p.x.clone();
                x[i] += delta;
                f.eval(p.t, &x, quad_tol)
            }
        }
    };
    let plus = shifted(h)?;
    let minus = shifted(-h)?;
    Ok((plus - minus) / (2.0 * h))
}

// ---------------------------------------------------------------------------
// Operators with light constant folding
// ---------------------------------------------------------------------------

impl ops::Add for IntegralExpr {
    type Output = IntegralExpr;
    fn add(self, rhs: IntegralExpr) -> IntegralExpr {
        match (self, rhs) {
            (IntegralExpr::Scalar(a), IntegralExpr::Scalar(b)) => IntegralExpr::Scalar(a + b),
            (a, b) if a.as_const() == Some(0.0) => b,
            (a, b) if b.as_const() == Some(0.0) => a,
            (a, IntegralExpr::Neg(b)) => IntegralExpr::Sub(Arc::new(a), b),
            (a, IntegralExpr::Scalar(ScalarExpr::Neg(b))) => {
                IntegralExpr::Sub(Arc::new(a), Arc::new(IntegralExpr::Scalar(*b)))
            }
            (a, IntegralExpr::Scalar(ScalarExpr::Const(c))) if c < 0.0 => {
                IntegralExpr::Sub(Arc::new(a), Arc::new(IntegralExpr::constant(-c)))
            }
            (a, b) => IntegralExpr::Add(Arc::new(a), Arc::new(b)),
        }
    }
}

impl ops::Sub for IntegralExpr {
    type Output = IntegralExpr;
    fn sub(self, rhs: IntegralExpr) -> IntegralExpr {
        match (self, rhs) {
            (IntegralExpr::Scalar(a), IntegralExpr::Scalar(b)) => IntegralExpr::Scalar(a - b),
            (a, b) if b.as_const() == Some(0.0) => a,
            (a, b) if a.as_const() == Some(0.0) => -b,
            (a, IntegralExpr::Neg(b)) => IntegralExpr::Add(Arc::new(a), b),
            (a, IntegralExpr::Scalar(ScalarExpr::Const(c))) if c < 0.0 => {
                IntegralExpr::Add(Arc::new(a), Arc::new(IntegralExpr::constant(-c)))
            }
            (a, b) => IntegralExpr::Sub(Arc::new(a), Arc::new(b)),
        }
    }
}

impl ops::Mul for IntegralExpr {
    type Output = IntegralExpr;
    fn mul(self, rhs: IntegralExpr) -> IntegralExpr {
        match (self, rhs) {
            (IntegralExpr::Scalar(a), IntegralExpr::Scalar(b)) => IntegralExpr::Scalar(a * b),
            (a, b) if a.as_const() == Some(0.0) || b.as_const() == Some(0.0) => {
                IntegralExpr::constant(0.0)
            }
            (a, b) if a.as_const() == Some(1.0) => b,
            (a, b) if b.as_const() == Some(1.0) => a,
            (a, b) if a.as_const() == Some(-1.0) => -b,
            (a, b) if b.as_const() == Some(-1.0) => -a,
            (IntegralExpr::Neg(a), b) => -((*a).clone() * b),
            (a, IntegralExpr::Neg(b)) => -(a * (*b).clone()),
            (a, IntegralExpr::Scalar(ScalarExpr::Neg(b)))
                if !matches!(a, IntegralExpr::Scalar(_)) =>
            {
                -(a * IntegralExpr::Scalar(*b))
            }
            (a, b) => IntegralExpr::Mul(Arc::new(a), Arc::new(b)),
        }
    }
}

impl ops::Div for IntegralExpr {
    type Output = IntegralExpr;
    fn div(self, rhs: IntegralExpr) -> IntegralExpr {
        match (self, rhs) {
            (IntegralExpr::Scalar(a), IntegralExpr::Scalar(b)) if !b.is_zero() => {
                IntegralExpr::Scalar(a / b)
            }
            (a, b) if b.as_const() == Some(1.0) => a,
            (a, b) => IntegralExpr::Div(Arc::new(a), Arc::new(b)),
        }
    }
}

impl ops::Neg for IntegralExpr {
    type Output = IntegralExpr;
    fn neg(self) -> IntegralExpr {
        match self {
            IntegralExpr::Scalar(s) => IntegralExpr::Scalar(-s),
            IntegralExpr::Neg(a) => (*a).clone(),
            other => IntegralExpr::Neg(Arc::new(other)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::scalar::parse_scalar;
    use proptest::prelude::*;

    const TOL: f64 = 1e-10;

    fn at(t: f64, x: &[f64]) -> EvalPoint {
        EvalPoint::new(t, x.to_vec())
    }

    #[test]
    fn kernel_form_vanishes_on_ones() {
        let f = IntegralExpr::lin(vec![-1.0, 1.0, -1.0, 1.0]);
        assert_eq!(eval_integral(&f, &at(0.3, &[1.0; 4]), TOL).unwrap(), 0.0);
    }

    #[test]
    fn exp_of_zero() {
        let f = IntegralExpr::Exp(Arc::new(IntegralExpr::constant(0.0)));
        assert_eq!(f.eval(1.0, &[2.0], TOL).unwrap(), 1.0);
        assert_eq!(format_integral(&f), "exp(0)");
    }

    #[test]
    fn transformed_form_at_origin_time() {
        let g = Transform::new(vec![
            vec![parse_scalar("-t").unwrap(), parse_scalar("1+t^2").unwrap()],
            vec![parse_scalar("1").unwrap(), parse_scalar("-t").unwrap()],
        ]);
        let p = IntegralExpr::lin_with(vec![1.0, 0.0], Some(Arc::new(g)));
        let f = p * IntegralExpr::scalar(parse_scalar("exp(-t)").unwrap());
        assert_eq!(f.eval(0.0, &[2.0, 3.0], TOL).unwrap(), 3.0);
        assert_eq!(format_integral(&f), "(-t*x1+(1+t^2)*x2)*exp(-t)");
    }

    #[test]
    fn formats() {
        assert_eq!(
            IntegralExpr::lin(vec![2.0, 2.0, 1.0, 1.0]).to_string(),
            "2*x1+2*x2+x3+x4"
        );
        let a = IntegralExpr::arctan(
            IntegralExpr::lin(vec![0.0, 1.0]),
            IntegralExpr::lin(vec![1.0, 0.0]),
        );
        assert_eq!(a.to_string(), "atan((x2)/(x1))");
        let q =
            IntegralExpr::quad(IntegralExpr::scalar(parse_scalar("sin(t)").unwrap()), 0.0).unwrap();
        assert_eq!(q.to_string(), "∫[0,t] sin(τ) dτ");
        let p = IntegralExpr::lin(vec![1.0, -1.0]).pow(Exponent::int(2))
            / IntegralExpr::lin(vec![0.0, 2.0]);
        assert_eq!(p.to_string(), "(x1-x2)^2/(2*x2)");
    }

    #[test]
    fn partial_of_linear_form() {
        let f = IntegralExpr::lin(vec![3.0, -2.0]);
        let d = numeric_partial(&f, &at(0.0, &[0.4, 0.7]), Var::X(0), TOL).unwrap();
        assert!((d - 3.0).abs() < 1e-8);
    }

    #[test]
    fn partial_of_quadrature_in_time() {
        let q =
            IntegralExpr::quad(IntegralExpr::scalar(parse_scalar("sin(t)").unwrap()), 0.0).unwrap();
        let d = numeric_partial(&q, &at(std::f64::consts::PI, &[]), Var::T, TOL).unwrap();
        assert!(d.abs() < 1e-6);
    }

    #[test]
    fn partial_of_ratio() {
        // (2x₁+2x₂+x₃+x₄)/(x₁+x₃); by hand ∂/∂x₂ = 2/(x₁+x₃) = 2 at e₁.
        let f = IntegralExpr::lin(vec![2.0, 2.0, 1.0, 1.0])
            / IntegralExpr::lin(vec![1.0, 0.0, 1.0, 0.0]);
        let d = numeric_partial(&f, &at(0.0, &[1.0, 0.0, 0.0, 0.0]), Var::X(1), TOL).unwrap();
        assert!((d - 2.0).abs() < 1e-6);
    }

    #[test]
    fn quadratic_partials_match_symbolic() {
        let f = IntegralExpr::lin(vec![1.0, 2.0]) * IntegralExpr::lin(vec![3.0, -1.0]);
        let x = [0.7, -0.2];
        let d = numeric_partial(&f, &at(0.0, &x), Var::X(0), TOL).unwrap();
        let want = 3.0 * (x[0] + 2.0 * x[1]) + (3.0 * x[0] - x[1]);
        assert!((d - want).abs() <= 1e-9 * want.abs().max(1.0));
    }

    #[test]
    fn powers_at_zero_locus() {
        let base = IntegralExpr::lin(vec![1.0]).abs();
        assert_eq!(
            base.clone()
                .pow(Exponent::Rational(3, 2))
                .eval(0.0, &[0.0], TOL)
                .unwrap(),
            0.0
        );
        assert!(base
            .pow(Exponent::Rational(1, 2))
            .eval(0.0, &[0.0], TOL)
            .is_err());
        let inv = IntegralExpr::lin(vec![1.0]).pow(Exponent::int(-1));
        assert!(inv.eval(0.0, &[0.0], TOL).is_err());
    }

    #[test]
    fn arctan_refuses_vanishing_denominator() {
        let a = IntegralExpr::arctan(
            IntegralExpr::lin(vec![0.0, 1.0]),
            IntegralExpr::lin(vec![1.0, 0.0]),
        );
        assert!(a.eval(0.0, &[0.0, 1.0], TOL).is_err());
        assert_eq!(a.singular_exprs().len(), 1);
    }

    #[test]
    fn psi_of_three_chain() {
        // chain (1,−1,1), (1,0,−1), (0,0,2)
        let c = |v: [f64; 3]| {
            v.iter()
                .map(|&r| Complex64::new(r, 0.0))
                .collect::<Vec<_>>()
        };
        let node = Arc::new(PsiNode::new(
            vec![c([1.0, -1.0, 1.0]), c([1.0, 0.0, -1.0]), c([0.0, 0.0, 2.0])],
            None,
        ));
        let psi2 = IntegralExpr::psi(node.clone(), 2, Part::Re);
        let x = [0.3, -0.4, 0.9];
        let p0 = x[0] - x[1] + x[2];
        let p1 = x[0] - x[2];
        let want = (2.0 * x[2] * p0 - p1 * p1) / (p0 * p0);
        assert!((psi2.eval(0.0, &x, TOL).unwrap() - want).abs() < 1e-14);
        let psi1 = IntegralExpr::psi(node, 1, Part::Re);
        assert!((psi1.eval(0.0, &x, TOL).unwrap() - p1 / p0).abs() < 1e-14);
        assert!(psi2.eval(0.0, &[1.0, 1.0, 0.0], TOL).is_err());
    }

    #[test]
    fn quadrature_memo_is_order_independent() {
        let integrand = IntegralExpr::scalar(parse_scalar("exp(t)*cos(3*t)").unwrap());
        let a = IntegralExpr::quad(integrand.clone(), 0.0).unwrap();
        let b = IntegralExpr::quad(integrand, 0.0).unwrap();
        let ts = [0.9, 0.1, 1.7, -0.6, 0.45];
        let va: Vec<f64> = ts.iter().map(|&t| a.eval(t, &[], TOL).unwrap()).collect();
        let vb: Vec<f64> = ts
            .iter()
            .rev()
            .map(|&t| b.eval(t, &[], TOL).unwrap())
            .collect();
        for (x, y) in va.iter().zip(vb.iter().rev()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        let closed = |t: f64| (t.exp() * ((3.0 * t).cos() + 3.0 * (3.0 * t).sin()) - 1.0) / 10.0;
        for (&t, v) in ts.iter().zip(&va) {
            assert!((v - closed(t)).abs() < 1e-9);
        }
    }

    #[test]
    fn quadrature_rejects_state_dependence() {
        assert!(IntegralExpr::quad(IntegralExpr::lin(vec![1.0]), 0.0).is_err());
    }

    #[test]
    fn concurrent_evaluation_agrees() {
        let integrand = IntegralExpr::scalar(parse_scalar("1/(1+t^2)").unwrap());
        let q = Arc::new(IntegralExpr::quad(integrand, 0.0).unwrap());
        let handles: Vec<_> = (0..4)
            .map(|k| {
                let q = q.clone();
                std::thread::spawn(move || {
                    let mut ts: Vec<f64> = (0..40).map(|i| 0.05 * i as f64).collect();
                    if k % 2 == 1 {
                        ts.reverse();
                    }
                    let mut v: Vec<(u64, u64)> = ts
                        .iter()
                        .map(|&t| (t.to_bits(), q.eval(t, &[], TOL).unwrap().to_bits()))
                        .collect();
                    v.sort();
                    v
                })
            })
            .collect();
        let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        for r in &results[1..] {
            assert_eq!(r, &results[0]);
        }
    }

    proptest! {
        #[test]
        fn linear_forms_are_linear(
            nu in proptest::collection::vec(-3i32..4, 3),
            x in proptest::collection::vec(-2.0f64..2.0, 3),
            y in proptest::collection::vec(-2.0f64..2.0, 3),
            a in -2.0f64..2.0,
            b in -2.0f64..2.0,
        ) {
            let f = IntegralExpr::lin(nu.iter().map(|&k| k as f64).collect());
            let z: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let lhs = f.eval(0.0, &z, TOL).unwrap();
            let rhs = a * f.eval(0.0, &x, TOL).unwrap() + b * f.eval(0.0, &y, TOL).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }

        #[test]
        fn quadrature_is_additive(t1 in -1.5f64..1.5, t2 in -1.5f64..1.5, w in 0.5f64..3.0) {
            let integrand = IntegralExpr::scalar(parse_scalar(&format!("cos({w}*t)*exp(-t^2)")).unwrap());
            let from0 = IntegralExpr::quad(integrand.clone(), 0.0).unwrap();
            let from1 = IntegralExpr::quad(integrand, t1).unwrap();
            let whole = from0.eval(t2, &[], TOL).unwrap();
            let split = from0.eval(t1, &[], TOL).unwrap() + from1.eval(t2, &[], TOL).unwrap();
            prop_assert!((whole - split).abs() <= 2e-10 * (1.0 + whole.abs()));
        }
    }
}
