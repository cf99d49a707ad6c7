//! First integrals of constant-coefficient systems `x' = Ax (+ f(t))`.
//!
//! Every builder works in a [`Frame`]: an optional transformation `y = g(t)x`
//! and a clock `s(t)`. The identity frame covers constant systems; reducible
//! systems reuse the same builders with their own frame.

use std::sync::Arc;

use num_complex::Complex64;
use num_integer::Integer;
use num_rational::Rational64;
use num_traits::Zero;

use crate::basis::{BasisResult, Mode};
use crate::error::{FintError, Result};
use crate::expr::integral::binomial;
use crate::expr::{CExpr, Exponent, IntegralExpr, Part, PsiNode, ScalarExpr, Transform};
use crate::numerics::independence_rank;
use crate::spectral::{spectrum_of_transpose, EigenChain, SpectralData, DEFAULT_TOL};
use crate::system::{SystemClass, SystemSpec, TimeScale};
use crate::EvalPoint;

/// Transformation and clock shared by a family of constructions.
#[derive(Debug, Clone)]
pub struct Frame {
    pub transform: Option<Arc<Transform>>,
    pub time_scale: TimeScale,
    /// Anchor of every quadrature.
    pub t0: f64,
}

impl Frame {
    pub fn identity(t0: f64) -> Self {
        Frame {
            transform: None,
            time_scale: TimeScale::Identity,
            t0,
        }
    }

    pub fn clock(&self) -> ScalarExpr {
        self.time_scale.clock()
    }

    pub fn rate(&self) -> ScalarExpr {
        self.time_scale.clock_rate()
    }

    pub fn lin(&self, v: Vec<f64>) -> IntegralExpr {
        IntegralExpr::lin_with(v, self.transform.clone())
    }

    pub fn clin(&self, v: &[Complex64]) -> CExpr {
        CExpr::lin(v, self.transform.clone())
    }

    fn psi(&self, chain: &EigenChain) -> Arc<PsiNode> {
        Arc::new(PsiNode::new(chain.vectors.clone(), self.transform.clone()))
    }

    fn is_transformed(&self) -> bool {
        self.transform.is_some() || self.time_scale != TimeScale::Identity
    }
}

/// `p(x) = ν⁰x` with `𝔄p = λp`.
#[derive(Debug, Clone)]
pub struct PartialIntegral {
    pub form: CExpr,
    pub lambda: Complex64,
}

pub fn linear_partial_integral(chain: &EigenChain) -> PartialIntegral {
    PartialIntegral {
        form: CExpr::lin(chain.eigenvector(), None),
        lambda: chain.lambda,
    }
}

fn real_lin(frame: &Frame, chain: &EigenChain, k: usize) -> IntegralExpr {
    frame.lin(chain.real_vector(k))
}

/// `ν*y` and `ν̃y` of a complex form.
fn parts(frame: &Frame, chain: &EigenChain, k: usize) -> (IntegralExpr, IntegralExpr) {
    let c = frame.clin(&chain.vectors[k]);
    let im = c.im_or_zero();
    (c.re, im)
}

/// `(ν*y)² + (ν̃y)²`.
fn modulus_sq(frame: &Frame, chain: &EigenChain) -> IntegralExpr {
    let (re, im) = parts(frame, chain, 0);
    re.clone().pow(Exponent::int(2)) + im.clone().pow(Exponent::int(2))
}

/// `arctan(ν̃y / ν*y)`.
fn theta(frame: &Frame, chain: &EigenChain) -> IntegralExpr {
    let (re, im) = parts(frame, chain, 0);
    IntegralExpr::arctan(im, re)
}

/// `ν¹y / ν⁰y` for a real chain.
fn psi1_real(frame: &Frame, chain: &EigenChain) -> IntegralExpr {
    real_lin(frame, chain, 1) / real_lin(frame, chain, 0)
}

fn psi_part(frame: &Frame, chain: &EigenChain, k: usize, part: Part) -> IntegralExpr {
    IntegralExpr::psi(frame.psi(chain), k, part)
}

fn konst(v: f64) -> IntegralExpr {
    IntegralExpr::constant(v)
}

/// Reduced integer exponents for `λ₁h₁ + λ₂h₂ = 0`, when both are rational.
fn rational_exponents(l1: Rational64, l2: Rational64) -> (i64, i64) {
    let (h1, h2) = (l2, -l1);
    let den = h1.denom().lcm(h2.denom());
    let (a, b) = ((h1 * den).to_integer(), (h2 * den).to_integer());
    let g = a.gcd(&b);
    if g == 0 {
        (a, b)
    } else {
        (a / g, b / g)
    }
}

/// `∏ pᵢ^{hᵢ}` with integer exponents as a quotient of plain powers.
fn monomial(factors: Vec<(IntegralExpr, i64)>) -> IntegralExpr {
    let mut num = konst(1.0);
    let mut den = konst(1.0);
    for (p, h) in factors {
        match h.signum() {
            1 => num = num * p.pow(Exponent::int(h)),
            -1 => den = den * p.pow(Exponent::int(-h)),
            _ => {}
        }
    }
    if den.as_const() == Some(1.0) {
        num
    } else {
        num / den
    }
}

fn weighted_product_in(frame: &Frame, c1: &EigenChain, c2: &EigenChain) -> Result<IntegralExpr> {
    if !c1.is_real() || !c2.is_real() {
        return Err(FintError::construction(
            "Theorem 1.1",
            "both eigenvectors must be real",
        ));
    }
    let (l1, l2) = (c1.lambda.re, c2.lambda.re);
    let (p1, p2) = (real_lin(frame, c1, 0), real_lin(frame, c2, 0));
    if l1 == 0.0 && l2 == 0.0 {
        let v1 = c1.real_vector(0);
        let v2 = c2.real_vector(0);
        let proportional = crate::numerics::matrix_rank(&[v1, v2], 1e-12) < 2;
        if proportional {
            return Err(FintError::construction(
                "Corollary 1.1",
                "both eigenvalues vanish and the eigenvectors are proportional",
            ));
        }
    }
    if l1 == 0.0 {
        return Ok(p1);
    }
    if l1 == l2 {
        return Ok(p1 / p2);
    }
    if let (Some((q1, z1)), Some((q2, z2))) = (c1.exact_lambda, c2.exact_lambda) {
        if z1.is_zero() && z2.is_zero() {
            let (h1, h2) = rational_exponents(q1, q2);
            return Ok(monomial(vec![(p1, h1), (p2, h2)]));
        }
    }
    Ok(p1.abs().pow(Exponent::Real(l2)) * p2.abs().pow(Exponent::Real(-l1)))
}

/// Integral built from two real eigenvectors: `ν¹x` when `λ₁ = 0`, the
/// quotient when `λ₁ = λ₂`, otherwise `|ν¹x|^{h₁}|ν²x|^{h₂}`.
pub fn weighted_product_integral(c1: &EigenChain, c2: &EigenChain) -> Result<IntegralExpr> {
    weighted_product_in(&Frame::identity(0.0), c1, c2)
}

fn single_complex(frame: &Frame, c: &EigenChain) -> IntegralExpr {
    let (a, b) = (c.lambda.re, c.lambda.im);
    let p = modulus_sq(frame, c);
    if a == 0.0 {
        p
    } else {
        p * (konst(-2.0 * a / b) * theta(frame, c)).exp()
    }
}

/// Integrals from complex eigenvectors: one chain gives the modulus form,
/// a complex and a real chain give the mixed form, two complex chains the
/// arctan combination.
pub fn complex_autonomous_integrals(chains: &[&EigenChain]) -> Result<Vec<IntegralExpr>> {
    let frame = Frame::identity(0.0);
    match chains {
        [c] if c.lambda.im != 0.0 => Ok(vec![single_complex(&frame, c)]),
        [c1, c2] => {
            let (cx, other) = match (c1.lambda.im != 0.0, c2.lambda.im != 0.0) {
                (true, _) => (*c1, *c2),
                (false, true) => (*c2, *c1),
                _ => {
                    return Err(FintError::construction(
                        "Theorem 1.2",
                        "no complex eigenvalue given",
                    ));
                }
            };
            if other.lambda.im == 0.0 {
                let g = Generator::Lin(other.clone());
                let h = Generator::Theta(cx.clone());
                return Ok(vec![pair(&frame, &g, &h)?.0]);
            }
            if (cx.lambda - other.lambda.conj()).norm() < 1e-12 * (1.0 + cx.lambda.norm()) {
                return Err(FintError::construction(
                    "Theorem 1.4",
                    "the eigenvalues are complex conjugates and carry no new information",
                ));
            }
            let g = Generator::Theta(cx.clone());
            let h = Generator::Theta(other.clone());
            Ok(vec![pair(&frame, &g, &h)?.0])
        }
        _ => Err(FintError::construction(
            "Theorem 1.2",
            "expected one or two chains with a complex eigenvalue",
        )),
    }
}

/// Integrals from a chain of length `m ≥ 2`, optionally combined with a
/// second chain or eigenvector.
pub fn chain_autonomous_integrals(
    primary: &EigenChain,
    other: Option<&EigenChain>,
) -> Result<Vec<IntegralExpr>> {
    if primary.m() < 2 {
        return Err(FintError::construction(
            "Theorem 1.5",
            "the chain has length below 2",
        ));
    }
    let frame = Frame::identity(0.0);
    let mut out = Vec::new();
    match other {
        None => {
            if primary.is_real() {
                if primary.lambda.re == 0.0 {
                    return Err(FintError::construction(
                        "Theorem 1.5",
                        "the eigenvalue vanishes",
                    ));
                }
                out.push(thm_1_5(&frame, primary));
            } else {
                out.extend(
                    complex_chain_head(&frame, primary)
                        .into_iter()
                        .map(|(e, _)| e),
                );
            }
        }
        Some(o) => {
            let a = psi1_generator(primary);
            let b = if o.m() >= 2 {
                psi1_generator(o)
            } else if o.lambda.im != 0.0 {
                Generator::Theta(o.clone())
            } else {
                Generator::Lin(o.clone())
            };
            out.push(pair(&frame, &a, &b)?.0);
        }
    }
    Ok(out)
}

fn thm_1_5(frame: &Frame, c: &EigenChain) -> IntegralExpr {
    real_lin(frame, c, 0) * (konst(-c.lambda.re) * psi1_real(frame, c)).exp()
}

/// Complex chain of length ≥ 2: the two real parts of
/// `ν⁰y·exp(−λΨ₁)` and the imaginary part of `Ψ₁`.
fn complex_chain_head(frame: &Frame, c: &EigenChain) -> Vec<(IntegralExpr, &'static str)> {
    let (a, b) = (c.lambda.re, c.lambda.im);
    let re1 = psi_part(frame, c, 1, Part::Re);
    let im1 = psi_part(frame, c, 1, Part::Im);
    let f1 =
        modulus_sq(frame, c) * (konst(-2.0 * a) * re1.clone() + konst(2.0 * b) * im1.clone()).exp();
    let f2 = theta(frame, c) - konst(b) * re1 - konst(a) * im1.clone();
    vec![
        (f1, "Corollary 1.3"),
        (f2, "Corollary 1.3"),
        (im1, "Theorem 1.10"),
    ]
}

/// `Ψ₂ … Ψ_{m−1}` of a chain; complex chains give real and imaginary parts.
pub fn psi_evaluators(chain: &EigenChain) -> Result<Vec<IntegralExpr>> {
    if chain.m() < 3 {
        return Err(FintError::construction(
            "Theorem 1.8",
            "the chain has length below 3",
        ));
    }
    Ok(psi_tail(&Frame::identity(0.0), chain))
}

fn psi_tail(frame: &Frame, chain: &EigenChain) -> Vec<IntegralExpr> {
    let mut out = Vec::new();
    for k in 2..chain.m() {
        out.push(psi_part(frame, chain, k, Part::Re));
        if !chain.is_real() {
            out.push(psi_part(frame, chain, k, Part::Im));
        }
    }
    out
}

/// Time-anchored integrals of one chain: `νy·e^{−λs}` (real), the modulus
/// and argument forms (complex), `Ψ₁ − s` for chains of length ≥ 2.
pub fn time_anchored_integral(chain: &EigenChain) -> Vec<IntegralExpr> {
    time_anchored_in(&Frame::identity(0.0), chain)
        .into_iter()
        .map(|(e, _)| e)
        .collect()
}

fn time_anchored_in(frame: &Frame, chain: &EigenChain) -> Vec<(IntegralExpr, &'static str)> {
    let s = frame.clock();
    let reduced = frame.is_transformed();
    let (tag_real, tag_complex, tag_chain) = if reduced {
        ("Theorem 3.1", "Theorem 3.2", "Theorem 3.3")
    } else {
        ("Theorem 1.9", "Corollary 1.5", "Theorem 1.10")
    };
    let mut out = Vec::new();
    if chain.m() >= 2 {
        if chain.is_real() {
            out.push((psi1_real(frame, chain) - IntegralExpr::scalar(s), tag_chain));
        } else {
            out.push((
                psi_part(frame, chain, 1, Part::Re) - IntegralExpr::scalar(s),
                tag_chain,
            ));
        }
        return out;
    }
    if chain.is_real() {
        let decay = IntegralExpr::scalar((ScalarExpr::Const(-chain.lambda.re) * s).exp());
        out.push((real_lin(frame, chain, 0) * decay, tag_real));
    } else {
        out.push((
            theta(frame, chain) - IntegralExpr::scalar(ScalarExpr::Const(chain.lambda.im) * s),
            tag_complex,
        ));
    }
    out
}

/// Full time-anchored set for a reducible frame: `m` integrals per real
/// chain and `2m` per complex pair.
pub(crate) fn anchored_chain_set(
    frame: &Frame,
    chain: &EigenChain,
) -> Vec<(IntegralExpr, &'static str)> {
    let s = frame.clock();
    let reduced = frame.is_transformed();
    let tag_real = if reduced {
        "Theorem 3.1"
    } else {
        "Theorem 1.9"
    };
    let tag_complex = if reduced {
        "Theorem 3.2"
    } else {
        "Corollary 1.5"
    };
    let tag_psi1 = if reduced {
        "Theorem 3.3"
    } else {
        "Theorem 1.10"
    };
    let tag_psi = if reduced {
        "Theorem 3.4"
    } else {
        "Theorem 1.8"
    };
    let mut out = Vec::new();
    let (a, b) = (chain.lambda.re, chain.lambda.im);
    if chain.is_real() {
        let decay = IntegralExpr::scalar((ScalarExpr::Const(-a) * s.clone()).exp());
        out.push((real_lin(frame, chain, 0) * decay, tag_real));
    } else {
        let decay = IntegralExpr::scalar((ScalarExpr::Const(-2.0 * a) * s.clone()).exp());
        out.push((modulus_sq(frame, chain) * decay, tag_complex));
        out.push((
            theta(frame, chain) - IntegralExpr::scalar(ScalarExpr::Const(b) * s.clone()),
            tag_complex,
        ));
    }
    if chain.m() >= 2 {
        if chain.is_real() {
            out.push((psi1_real(frame, chain) - IntegralExpr::scalar(s), tag_psi1));
        } else {
            out.push((
                psi_part(frame, chain, 1, Part::Re) - IntegralExpr::scalar(s),
                tag_psi1,
            ));
            out.push((psi_part(frame, chain, 1, Part::Im), tag_psi1));
        }
        for e in psi_tail(frame, chain) {
            out.push((e, tag_psi));
        }
    }
    out
}

/// Reduced forcing `ν·φ(t)` where `φ = g(t)f(t)` in a transformed frame.
fn forcing_projection(
    frame: &Frame,
    nu: &[Complex64],
    f: &[ScalarExpr],
) -> (ScalarExpr, ScalarExpr) {
    let phi: Vec<ScalarExpr> = match &frame.transform {
        None => f.to_vec(),
        Some(g) => {
            g.g.iter()
                .map(|row| {
                    row.iter()
                        .zip(f)
                        .fold(ScalarExpr::Const(0.0), |acc, (gij, fj)| {
                            acc + gij.clone() * fj.clone()
                        })
                })
                .collect()
        }
    };
    let mut re = ScalarExpr::Const(0.0);
    let mut im = ScalarExpr::Const(0.0);
    for (z, p) in nu.iter().zip(&phi) {
        if z.re != 0.0 {
            re = re + ScalarExpr::Const(z.re) * p.clone();
        }
        if z.im != 0.0 {
            im = im + ScalarExpr::Const(z.im) * p.clone();
        }
    }
    (re, im)
}

/// Complex forced recursion `F₁ … F_m` of one chain, before splitting.
fn forced_chain_complex(frame: &Frame, chain: &EigenChain, f: &[ScalarExpr]) -> Result<Vec<CExpr>> {
    let s = frame.clock();
    let rate = frame.rate();
    let decay = CExpr::exp_neg(chain.lambda, &s);
    let mut fs: Vec<CExpr> = Vec::with_capacity(chain.m());
    let mut c_prev: Option<CExpr> = None;
    for k in 0..chain.m() {
        let (fr, fi) = forcing_projection(frame, &chain.vectors[k], f);
        let source = CExpr::scalar(fr, fi) * decay.clone();
        let mut integrand = source;
        if let Some(c) = &c_prev {
            integrand = integrand
                + CExpr::real(IntegralExpr::scalar(
                    rate.clone() * ScalarExpr::Const(k as f64),
                )) * c.clone();
        }
        let c_k = integrand.quad(frame.t0)?;
        let g_k = frame.clin(&chain.vectors[k]) * decay.clone();
        let mut f_next = g_k - c_k.clone();
        for (tau, f_tau) in fs.iter().enumerate() {
            let weight = ScalarExpr::Const(binomial(k, tau))
                * s.clone().pow(ScalarExpr::Const((k - tau) as f64));
            f_next = f_next - CExpr::real(IntegralExpr::scalar(weight)) * f_tau.clone();
        }
        fs.push(f_next);
        c_prev = Some(c_k);
    }
    Ok(fs)
}

/// Forced integrals of a simple chain: `νy·e^{−λs} − ∫ ν·φ e^{−λs}`; complex
/// eigenvalues give the real and imaginary parts.
pub fn forced_integral(chain: &EigenChain, f: &[ScalarExpr], t0: f64) -> Result<Vec<IntegralExpr>> {
    let frame = Frame::identity(t0);
    let single = EigenChain {
        lambda: chain.lambda,
        vectors: vec![chain.vectors[0].clone()],
        exact_lambda: chain.exact_lambda,
    };
    Ok(forced_in(&frame, &single, f)?
        .into_iter()
        .map(|(e, _)| e)
        .collect())
}

/// Forced integrals `F₁ … F_m` of a chain of length `m ≥ 2`.
pub fn forced_chain_integrals(
    chain: &EigenChain,
    f: &[ScalarExpr],
    t0: f64,
) -> Result<Vec<IntegralExpr>> {
    if chain.m() < 2 {
        return Err(FintError::construction(
            "Theorem 1.12",
            "the chain has length below 2",
        ));
    }
    Ok(forced_in(&Frame::identity(t0), chain, f)?
        .into_iter()
        .map(|(e, _)| e)
        .collect())
}

pub(crate) fn forced_in(
    frame: &Frame,
    chain: &EigenChain,
    f: &[ScalarExpr],
) -> Result<Vec<(IntegralExpr, &'static str)>> {
    let reduced = frame.is_transformed();
    let tag = match (reduced, chain.is_real(), chain.m() >= 2) {
        (false, true, false) => "Theorem 1.11",
        (false, true, true) => "Theorem 1.12",
        (false, false, false) => "Corollary 1.6",
        (false, false, true) => "Corollary 1.7",
        (true, true, false) => "Theorem 3.5",
        (true, false, false) => "Corollary 3.1",
        (true, true, true) => "Theorem 3.6",
        (true, false, true) => "Corollary 3.2",
    };
    let fs = forced_chain_complex(frame, chain, f)?;
    let mut out = Vec::new();
    for c in fs {
        let real = chain.is_real();
        out.push((c.re, tag));
        if !real {
            if let Some(im) = c.im {
                out.push((im, tag));
            } else {
                return Err(FintError::construction(
                    tag,
                    "imaginary part vanished identically",
                ));
            }
        }
    }
    Ok(out)
}

/// Function with a constant Lie derivative ("rate") along the flow.
#[derive(Debug, Clone)]
enum Generator {
    /// `ln|νy|`, rate `λ`.
    Lin(EigenChain),
    /// `arctan(ν̃y/ν*y)`, rate `Im λ`.
    Theta(EigenChain),
    /// `Ψ₁` of a real chain, rate 1.
    Psi1(EigenChain),
    /// `Re Ψ₁` of a complex chain, rate 1.
    RePsi1(EigenChain),
}

fn psi1_generator(c: &EigenChain) -> Generator {
    if c.is_real() {
        Generator::Psi1(c.clone())
    } else {
        Generator::RePsi1(c.clone())
    }
}

impl Generator {
    fn psi_expr(&self, frame: &Frame) -> Option<IntegralExpr> {
        match self {
            Generator::Psi1(c) => Some(psi1_real(frame, c)),
            Generator::RePsi1(c) => Some(psi_part(frame, c, 1, Part::Re)),
            _ => None,
        }
    }
}

/// Integral from two generators with nonzero rates.
fn pair(frame: &Frame, a: &Generator, b: &Generator) -> Result<(IntegralExpr, &'static str)> {
    use Generator::*;
    Ok(match (a, b) {
        (Lin(c1), Lin(c2)) => (weighted_product_in(frame, c1, c2)?, "Theorem 1.1"),
        (Lin(c), p) | (p, Lin(c)) if p.psi_expr(frame).is_some() => {
            let psi = p.psi_expr(frame).unwrap();
            (
                real_lin(frame, c, 0) * (konst(-c.lambda.re) * psi).exp(),
                "Theorem 1.6",
            )
        }
        (Lin(c), Theta(z)) | (Theta(z), Lin(c)) => {
            let ratio = c.lambda.re / z.lambda.im;
            (
                real_lin(frame, c, 0) * (konst(-ratio) * theta(frame, z)).exp(),
                "Theorem 1.3",
            )
        }
        (Theta(z1), Theta(z2)) => (
            konst(z1.lambda.im) * theta(frame, z2) - konst(z2.lambda.im) * theta(frame, z1),
            "Theorem 1.4",
        ),
        (Theta(z), p) | (p, Theta(z)) => {
            let psi = p.psi_expr(frame).expect("remaining generators are Ψ-type");
            (theta(frame, z) - konst(z.lambda.im) * psi, "Corollary 1.4")
        }
        (p, q) => (
            p.psi_expr(frame).expect("Ψ-type") - q.psi_expr(frame).expect("Ψ-type"),
            "Theorem 1.7",
        ),
    })
}

/// Ordered autonomous integrals of a homogeneous constant system, and the
/// pivot generator used for the time-anchored completion.
fn autonomous_set(
    data: &SpectralData,
) -> Result<(Vec<(IntegralExpr, &'static str)>, Option<Generator>)> {
    let frame = Frame::identity(0.0);
    let reps = data.representatives();
    let mut kernel = Vec::new();
    let mut ratios = Vec::new();
    let mut chains_out = Vec::new();
    let mut complex_out = Vec::new();
    let mut residuals: Vec<Generator> = Vec::new();

    let same = |a: Complex64, b: Complex64| a == b;
    let mut simple_rep: Vec<&EigenChain> = Vec::new();
    for c in &reps {
        let c = *c;
        let real = c.lambda.im == 0.0;
        if c.m() == 1 {
            if real && c.lambda.re == 0.0 {
                kernel.push((real_lin(&frame, c, 0), "Corollary 1.1"));
                continue;
            }
            if let Some(rep) = simple_rep.iter().find(|r| same(r.lambda, c.lambda)) {
                if real {
                    ratios.push((
                        real_lin(&frame, c, 0) / real_lin(&frame, rep, 0),
                        "Corollary 1.2",
                    ));
                } else {
                    complex_out.push((
                        modulus_sq(&frame, c) / modulus_sq(&frame, rep),
                        "Corollary 1.2",
                    ));
                    complex_out.push((theta(&frame, c) - theta(&frame, rep), "Theorem 1.4"));
                }
                continue;
            }
            simple_rep.push(c);
            if real {
                residuals.push(Generator::Lin(c.clone()));
            } else {
                complex_out.push((single_complex(&frame, c), "Theorem 1.2"));
                residuals.push(Generator::Theta(c.clone()));
            }
            continue;
        }
        // chains of length ≥ 2
        if real {
            if c.lambda.re == 0.0 {
                kernel.push((real_lin(&frame, c, 0), "Corollary 1.1"));
            } else {
                chains_out.push((thm_1_5(&frame, c), "Theorem 1.5"));
            }
        } else {
            chains_out.extend(complex_chain_head(&frame, c));
        }
        for e in psi_tail(&frame, c) {
            chains_out.push((e, "Theorem 1.8"));
        }
        residuals.push(psi1_generator(c));
    }

    let mut cross = Vec::new();
    let pivot = residuals.first().cloned();
    if let Some(p) = &pivot {
        for g in &residuals[1..] {
            cross.push(pair(&frame, p, g)?);
        }
    }
    let mut all = kernel;
    all.extend(ratios);
    all.extend(chains_out);
    all.extend(cross);
    all.extend(complex_out);
    Ok((all, pivot))
}

fn anchored_for(frame: &Frame, g: &Generator) -> (IntegralExpr, &'static str) {
    let s = IntegralExpr::scalar(frame.clock());
    match g {
        Generator::Lin(c) => {
            let decay =
                IntegralExpr::scalar((ScalarExpr::Const(-c.lambda.re) * frame.clock()).exp());
            (real_lin(frame, c, 0) * decay, "Theorem 1.9")
        }
        Generator::Theta(c) => (theta(frame, c) - konst(c.lambda.im) * s, "Corollary 1.5"),
        Generator::Psi1(_) | Generator::RePsi1(_) => {
            (g.psi_expr(frame).unwrap() - s, "Theorem 1.10")
        }
    }
}

/// Generic point for the independence check.
fn generic_point(n: usize, t: f64) -> EvalPoint {
    let x = (0..n)
        .map(|i| {
            let k = (i + 1) as f64;
            (0.37 * k * k + 0.11 * k).sin() * 0.8 + 0.05 * k
        })
        .collect();
    EvalPoint::new(t, x)
}

/// Confirm numeric independence at a few generic points; the best rank is
/// used so that one unlucky point does not fail the check.
pub(crate) fn check_independence(result: &BasisResult, t: f64, quad_tol: f64) -> Result<()> {
    let exprs = result.exprs();
    if exprs.is_empty() {
        return Ok(());
    }
    let mut best = 0;
    for shift in 0..4 {
        let mut p = generic_point(result.n, t);
        for (i, v) in p.x.iter_mut().enumerate() {
            *v += 0.13 * shift as f64 * ((i + shift) as f64).cos();
        }
        if let Ok(r) = independence_rank(&exprs, &p, quad_tol) {
            best = best.max(r);
        }
        if best == exprs.len() {
            return Ok(());
        }
    }
    let tags: Vec<String> = result
        .integrals
        .iter()
        .map(|i| format!("{} [{}]", i.expr, i.theorem))
        .collect();
    Err(FintError::construction(
        "independence check",
        format!(
            "numeric rank {best} below {} for {{{}}}",
            exprs.len(),
            tags.join("; ")
        ),
    ))
}

/// Basis of first integrals of a constant-coefficient system.
///
/// Autonomous mode gives `n − 1` time-free integrals (kernel forms, ratios
/// within an eigenvalue, chain integrals, cross-eigenvalue products, complex
/// forms); full mode adds one time-anchored integral; forced mode builds
/// `n` integrals from the forced recursions.
pub fn basis(spec: &SystemSpec, mode: Mode) -> Result<BasisResult> {
    let a = spec.constant_matrix().ok_or_else(|| {
        FintError::construction(
            "constant coefficients",
            "the system is not constant-coefficient",
        )
    })?;
    let data = spectrum_of_transpose(&a, DEFAULT_TOL)?;
    basis_from_spectrum(spec, &data, mode)
}

pub fn basis_from_spectrum(
    spec: &SystemSpec,
    data: &SpectralData,
    mode: Mode,
) -> Result<BasisResult> {
    let n = spec.n;
    let mut result = BasisResult::new(n, SystemClass::Constant, mode);
    if mode != Mode::Forced && spec.has_forcing() {
        return Err(FintError::construction(
            "homogeneity",
            format!("{mode} mode needs f ≡ 0; use forced mode for this system"),
        ));
    }
    match mode {
        Mode::Autonomous | Mode::Full => {
            let (set, pivot) = autonomous_set(data)?;
            let frame = Frame::identity(spec.anchor());
            match pivot {
                None => {
                    let keep = if mode == Mode::Autonomous { n - 1 } else { n };
                    for (e, tag) in set.into_iter().take(keep) {
                        result.push(e, tag);
                    }
                }
                Some(p) => {
                    for (e, tag) in set {
                        result.push(e, tag);
                    }
                    if mode == Mode::Full {
                        let (e, tag) = anchored_for(&frame, &p);
                        result.push(e, tag);
                    }
                }
            }
            if n == 1 && mode == Mode::Autonomous {
                result
                    .notes
                    .push("a scalar equation has no autonomous first integral".into());
            }
        }
        Mode::Forced => {
            let frame = Frame::identity(spec.anchor());
            let f = spec.forcing_exprs();
            for c in data.representatives() {
                for (e, tag) in forced_in(&frame, c, &f)? {
                    result.push(e, tag);
                }
            }
        }
    }
    if result.len() != result.expected_len() {
        return Err(FintError::construction(
            "basis selection",
            format!(
                "built {} integrals, expected {}",
                result.len(),
                result.expected_len()
            ),
        ));
    }
    check_independence(&result, spec.anchor(), 1e-10)?;
    Ok(result)
}
