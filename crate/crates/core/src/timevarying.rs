//! First integrals of time-varying systems `x' = Σ αⱼ(t)Aⱼx + f(t)`:
//! algebraic reducible systems (constant eigenvectors of `A(t)ᵀ`),
//! upper-triangular systems, and Lappo-Danilevskii systems (commuting `Aⱼ`).

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_integer::Integer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basis::{BasisResult, Mode};
use crate::error::{FintError, Result};
use crate::expr::integral::binomial;
use crate::expr::{
    numeric_partial, CExpr, EvalPoint, Exponent, IntegralExpr, Part, PsiNode, ScalarExpr, Var,
};
use crate::numerics::{matrix_rank, sample_unit_ball};
use crate::spectral::{
    common_eigenvectors, commutator_defect, spectrum_of_transpose, CommonVector, EigenChain,
    DEFAULT_TOL,
};
use crate::system::{SystemClass, SystemSpec};

const QUAD_TOL: f64 = 1e-10;
/// Tolerance of the constant-coefficient checks on `𝔞ⱼΨ_θ`.
const MU_TOL: f64 = 1e-6;
/// Relative tolerance of the frozen-field check.
pub const FROZEN_TOL: f64 = 1e-5;

/// `∫[t₀,t] e dτ`, in closed form when `e` is constant.
fn quad_scalar(e: ScalarExpr, t0: f64) -> Result<IntegralExpr> {
    if let Some(c) = e.as_const() {
        let span = ScalarExpr::Time - ScalarExpr::Const(t0);
        return Ok(IntegralExpr::scalar(ScalarExpr::Const(c) * span));
    }
    IntegralExpr::quad(IntegralExpr::scalar(e), t0)
}

fn quad_expr(e: IntegralExpr, t0: f64) -> Result<IntegralExpr> {
    if e.as_const() == Some(0.0) {
        return Ok(e);
    }
    IntegralExpr::quad(e, t0)
}

/// `Σⱼ cⱼ αⱼ(t)`, dropping zero weights.
fn weighted_alpha(spec: &SystemSpec, c: impl Iterator<Item = f64>) -> ScalarExpr {
    spec.terms
        .iter()
        .zip(c)
        .fold(ScalarExpr::Const(0.0), |acc, (term, w)| {
            if w == 0.0 {
                acc
            } else {
                acc + ScalarExpr::Const(w) * term.alpha.clone()
            }
        })
}

/// Eigenfunction `λ(t) = Σ λʲαⱼ(t)` split into real and imaginary parts.
fn eigenfunction(spec: &SystemSpec, lambdas: &[Complex64]) -> (ScalarExpr, ScalarExpr) {
    (
        weighted_alpha(spec, lambdas.iter().map(|l| l.re)),
        weighted_alpha(spec, lambdas.iter().map(|l| l.im)),
    )
}

/// `exp(−∫λ)` for `λ = a + ib` as a complex expression of `t`.
fn decay(a: &ScalarExpr, b: &ScalarExpr, t0: f64) -> Result<CExpr> {
    let qa = quad_scalar(a.clone(), t0)?;
    let modulus = if qa.as_const() == Some(0.0) {
        IntegralExpr::constant(1.0)
    } else {
        (-qa).exp()
    };
    if b.is_zero() {
        return Ok(CExpr::real(modulus));
    }
    let qb = quad_scalar(b.clone(), t0)?;
    Ok(CExpr::new(
        modulus.clone() * qb.clone().cos(),
        -(modulus * qb.sin()),
    ))
}

/// `ν·f(t)` split into real and imaginary parts.
fn project(nu: &[Complex64], f: &[ScalarExpr]) -> (ScalarExpr, ScalarExpr) {
    let mut re = ScalarExpr::Const(0.0);
    let mut im = ScalarExpr::Const(0.0);
    for (z, fi) in nu.iter().zip(f) {
        if fi.is_zero() {
            continue;
        }
        if z.re != 0.0 {
            re = re + ScalarExpr::Const(z.re) * fi.clone();
        }
        if z.im != 0.0 {
            im = im + ScalarExpr::Const(z.im) * fi.clone();
        }
    }
    (re, im)
}

/// Tags for the eigenvector integrals of one family.
#[derive(Clone, Copy)]
struct Tags {
    real: &'static str,
    complex_homogeneous: &'static str,
    complex_forced: &'static str,
    real_forced: &'static str,
}

const ALGEBRAIC_TAGS: Tags = Tags {
    real: "Corollary 2.1",
    real_forced: "Theorem 2.1",
    complex_homogeneous: "Theorem 2.3",
    complex_forced: "Theorem 2.2",
};

const LD_TAGS: Tags = Tags {
    real: "Theorem 2.5",
    real_forced: "Theorem 2.12",
    complex_homogeneous: "Theorem 2.6",
    complex_forced: "Theorem 2.13",
};

/// Integrals from one constant eigenvector: `νx·φ − ∫νfφ` with
/// `φ = exp(−∫λ)`; complex vectors give two real integrals.
fn eigenvector_integrals(
    spec: &SystemSpec,
    v: &CommonVector,
    forced: bool,
    tags: Tags,
) -> Result<Vec<(IntegralExpr, &'static str)>> {
    let t0 = spec.anchor();
    let (a, b) = eigenfunction(spec, &v.lambdas);
    let real = v.is_real();
    if !real && !forced {
        let p = CExpr::lin(&v.nu, None);
        let (re, im) = (p.re.clone(), p.im_or_zero());
        let modulus = re.clone().pow(Exponent::int(2)) + im.clone().pow(Exponent::int(2));
        let qa = quad_scalar(a.clone() * ScalarExpr::Const(2.0), t0)?;
        let first = if qa.as_const() == Some(0.0) {
            modulus
        } else {
            modulus * (-qa).exp()
        };
        let second = IntegralExpr::arctan(im, re) - quad_scalar(b, t0)?;
        return Ok(vec![
            (first, tags.complex_homogeneous),
            (second, tags.complex_homogeneous),
        ]);
    }
    let phi = decay(&a, &b, t0)?;
    let mut g = CExpr::lin(&v.nu, None) * phi.clone();
    if forced {
        let (fr, fi) = project(&v.nu, &spec.forcing_exprs());
        let c = (CExpr::scalar(fr, fi) * phi).quad(t0)?;
        g = g - c;
    }
    if real {
        let tag = if forced { tags.real_forced } else { tags.real };
        return Ok(vec![(g.re, tag)]);
    }
    let im = g
        .im
        .ok_or_else(|| FintError::construction(tags.complex_forced, "imaginary part vanished"))?;
    Ok(vec![(g.re, tags.complex_forced), (im, tags.complex_forced)])
}

/// Real span contributed by a complex vector: its real and imaginary parts.
fn real_parts(nu: &[Complex64]) -> Vec<Vec<f64>> {
    let re: Vec<f64> = nu.iter().map(|z| z.re).collect();
    if nu.iter().all(|z| z.im == 0.0) {
        return vec![re];
    }
    vec![re, nu.iter().map(|z| z.im).collect()]
}

/// Representatives whose real spans are independent, in order.
fn independent_vectors<'a>(
    candidates: &[&'a CommonVector],
    mut span: Vec<Vec<f64>>,
) -> (Vec<&'a CommonVector>, Vec<Vec<f64>>) {
    let mut chosen = Vec::new();
    for v in candidates {
        let parts = real_parts(&v.nu);
        let before = matrix_rank(&span, 1e-9);
        let mut trial = span.clone();
        trial.extend(parts.iter().cloned());
        if matrix_rank(&trial, 1e-9) == before + parts.len() {
            span = trial;
            chosen.push(*v);
        }
    }
    (chosen, span)
}

fn transposed_terms(spec: &SystemSpec) -> Vec<DMatrix<f64>> {
    spec.terms.iter().map(|t| t.a.transpose()).collect()
}

fn representatives(vectors: &[CommonVector]) -> Vec<&CommonVector> {
    vectors
        .iter()
        .filter(|v| v.is_real() || v.is_upper())
        .collect()
}

fn check_mode(spec: &SystemSpec, mode: Mode, theorem: &str) -> Result<bool> {
    match mode {
        Mode::Autonomous => Err(FintError::construction(
            theorem,
            "this class has no autonomous construction; use full or forced mode",
        )),
        Mode::Full if spec.has_forcing() => Err(FintError::construction(
            "homogeneity",
            "full mode needs f ≡ 0; use forced mode for this system",
        )),
        Mode::Full => Ok(false),
        Mode::Forced => Ok(true),
    }
}

/// Basis from constant eigenvectors of `A(t)ᵀ` with eigenfunctions
/// `λ(t) = Σ λʲαⱼ(t)`.
pub fn algebraic_reducible_integrals(spec: &SystemSpec, mode: Mode) -> Result<BasisResult> {
    let forced = check_mode(spec, mode, "Theorem 2.1")?;
    let (vectors, _) = common_eigenvectors(&transposed_terms(spec), DEFAULT_TOL)?;
    let reps = representatives(&vectors);
    let (chosen, span) = independent_vectors(&reps, Vec::new());
    if span.len() < spec.n {
        return Err(FintError::construction(
            "Theorem 2.1",
            format!(
                "only {} of {} independent constant eigenvectors",
                span.len(),
                spec.n
            ),
        ));
    }
    let mut result = BasisResult::new(spec.n, SystemClass::AlgebraicReducible, mode);
    for v in chosen {
        for (e, tag) in eigenvector_integrals(spec, v, forced, ALGEBRAIC_TAGS)? {
            result.push(e, tag);
        }
    }
    Ok(result)
}

/// True when every `Aⱼ` is upper triangular.
pub fn is_upper_triangular(spec: &SystemSpec) -> bool {
    spec.terms
        .iter()
        .all(|t| (0..spec.n).all(|i| (0..i).all(|j| t.a[(i, j)] == 0.0)))
}

/// Quadrature-built basis of an upper-triangular system, solved from the
/// last coordinate upwards. `F_τ` involves `x_{n+1−τ}` and the earlier
/// integrals; every quadrature is anchored at `t₀`, so `F_τ(t₀, x) = x_{n+1−τ}`.
pub fn triangular_integrals(spec: &SystemSpec, mode: Mode) -> Result<BasisResult> {
    let theorem = if spec.has_forcing() {
        "Theorem 2.4"
    } else {
        "Corollary 2.2"
    };
    let forced = check_mode(spec, mode, theorem)?;
    if !is_upper_triangular(spec) {
        return Err(FintError::construction(
            theorem,
            "the coefficient matrix is not upper triangular",
        ));
    }
    let n = spec.n;
    let t0 = spec.anchor();
    let f = if forced {
        spec.forcing_exprs()
    } else {
        vec![ScalarExpr::Const(0.0); n]
    };
    let a = |i: usize, j: usize| spec.coefficient_entry(i, j);

    // φᵢ = exp(−∫aᵢᵢ), ψᵢ = 1/φᵢ
    let mut phi = Vec::with_capacity(n);
    let mut psi = Vec::with_capacity(n);
    for i in 0..n {
        let q = quad_scalar(a(i, i), t0)?;
        if q.as_const() == Some(0.0) {
            phi.push(IntegralExpr::constant(1.0));
            psi.push(IntegralExpr::constant(1.0));
        } else {
            phi.push((-q.clone()).exp());
            psi.push(q.exp());
        }
    }

    // coefficient tables indexed by τ − 1
    let mut big_a: Vec<Vec<IntegralExpr>> = Vec::with_capacity(n);
    let mut big_b: Vec<IntegralExpr> = Vec::with_capacity(n);
    let mut fs: Vec<IntegralExpr> = Vec::with_capacity(n);
    let one = IntegralExpr::constant(1.0);
    for tau in 1..=n {
        let i = n - tau;
        let mut row = Vec::with_capacity(tau);
        for xi in 1..tau {
            let mut integrand = IntegralExpr::constant(0.0);
            for k in 1..=(tau - xi) {
                let aik = a(i, i + k);
                if aik.is_zero() {
                    continue;
                }
                let prev = &big_a[tau - k - 1][xi - 1];
                integrand =
                    integrand + IntegralExpr::scalar(aik) * psi[i + k].clone() * prev.clone();
            }
            row.push(quad_expr(phi[i].clone() * integrand, t0)?);
        }
        row.push(one.clone());
        let mut integrand = IntegralExpr::scalar(f[i].clone());
        for k in 1..tau {
            let aik = a(i, i + k);
            if aik.is_zero() {
                continue;
            }
            integrand = integrand
                + IntegralExpr::scalar(aik) * psi[i + k].clone() * big_b[tau - k - 1].clone();
        }
        let b_tau = quad_expr(phi[i].clone() * integrand, t0)?;

        let mut unit = vec![0.0; n];
        unit[i] = 1.0;
        let mut f_tau = IntegralExpr::lin(unit) * phi[i].clone();
        for xi in 1..tau {
            f_tau = f_tau - row[xi - 1].clone() * fs[xi - 1].clone();
        }
        f_tau = f_tau - b_tau.clone();
        big_a.push(row);
        big_b.push(b_tau);
        fs.push(f_tau);
    }
    let mut result = BasisResult::new(n, SystemClass::Triangular, mode);
    for e in fs {
        result.push(e, theorem);
    }
    Ok(result)
}

/// Chain of the designated matrix together with the constants
/// `μ_θʲ` of `(Bⱼ − λʲE)ν^θ = Σ_ρ C(θ,ρ) μ_ρʲ ν^{θ−ρ}`.
#[derive(Debug, Clone)]
pub struct LdChain {
    pub chain: EigenChain,
    /// `λʲ` per matrix.
    pub lambdas: Vec<Complex64>,
    /// `mu[θ − 1][j]` for `θ = 1 … m − 1`.
    pub mu: Vec<Vec<Complex64>>,
}

impl LdChain {
    fn is_real(&self) -> bool {
        self.chain.is_real()
    }

    fn node(&self) -> Arc<PsiNode> {
        Arc::new(PsiNode::new(self.chain.vectors.clone(), None))
    }

    /// `μ_θ(t) = Σⱼ μ_θʲ αⱼ(t)`.
    fn mu_fn(&self, spec: &SystemSpec, theta: usize) -> (ScalarExpr, ScalarExpr) {
        eigenfunction(spec, &self.mu[theta - 1])
    }
}

fn cmat_vec(m: &DMatrix<f64>, v: &[Complex64]) -> Vec<Complex64> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| v[j] * m[(i, j)]).sum())
        .collect()
}

fn cnorm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Structure constants of a chain under every matrix of the family, or
/// `None` when some `Bⱼ` does not act on the chain in the required form.
pub fn chain_constants(mats: &[DMatrix<f64>], chain: &EigenChain, tol: f64) -> Option<LdChain> {
    let nu = &chain.vectors;
    let head = &nu[0];
    let hh = head.iter().map(|z| z.norm_sqr()).sum::<f64>();
    let mut lambdas = Vec::with_capacity(mats.len());
    let mut mu = vec![Vec::with_capacity(mats.len()); chain.m().saturating_sub(1)];
    for b in mats {
        let scale = b.amax().max(1.0);
        let bv = cmat_vec(b, head);
        let lambda: Complex64 = bv
            .iter()
            .zip(head)
            .map(|(x, y)| x * y.conj())
            .sum::<Complex64>()
            / hh;
        let resid: Vec<Complex64> = bv.iter().zip(head).map(|(x, y)| x - lambda * y).collect();
        if cnorm(&resid) > tol * scale * cnorm(head) {
            return None;
        }
        lambdas.push(lambda);
        let mut mu_j: Vec<Complex64> = Vec::new();
        for theta in 1..chain.m() {
            let mut r: Vec<Complex64> = cmat_vec(b, &nu[theta])
                .iter()
                .zip(&nu[theta])
                .map(|(x, y)| x - lambda * y)
                .collect();
            for rho in 1..theta {
                let w = mu_j[rho - 1] * binomial(theta, rho);
                for (ri, v) in r.iter_mut().zip(&nu[theta - rho]) {
                    *ri -= w * v;
                }
            }
            let m_theta: Complex64 = r
                .iter()
                .zip(head)
                .map(|(x, y)| x * y.conj())
                .sum::<Complex64>()
                / hh;
            let rest: Vec<Complex64> = r.iter().zip(head).map(|(x, y)| x - m_theta * y).collect();
            let size = nu[..=theta].iter().map(|v| cnorm(v)).fold(0.0, f64::max);
            if cnorm(&rest) > tol * scale * size {
                return None;
            }
            mu_j.push(m_theta);
        }
        for (theta, m) in mu_j.into_iter().enumerate() {
            mu[theta].push(m);
        }
    }
    Some(LdChain {
        chain: chain.clone(),
        lambdas,
        mu,
    })
}

fn snap(z: Complex64) -> Complex64 {
    let r = |v: f64| {
        let k = v.round();
        if (v - k).abs() < 1e-12 * (1.0 + v.abs()) {
            k
        } else {
            v
        }
    };
    Complex64::new(r(z.re), r(z.im))
}

/// Numeric check that `𝔞ⱼΨ_θ = μ_θʲ` at a few random points; returns the
/// worst deviation.
pub fn check_psi_constants(
    spec: &SystemSpec,
    ld: &LdChain,
    points: usize,
    seed: u64,
) -> Result<f64> {
    let node = ld.node();
    let mats: Vec<&DMatrix<f64>> = spec.terms.iter().map(|t| &t.a).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let head: Vec<f64> = ld.chain.vectors[0].iter().map(|z| z.norm()).collect();
    let mut done = 0;
    let mut attempts = 0;
    while done < points && attempts < 50 * points {
        attempts += 1;
        let x = sample_unit_ball(&mut rng, spec.n);
        let p0 = CExpr::lin(&ld.chain.vectors[0], None);
        let re = p0.re.eval(0.0, &x, QUAD_TOL)?;
        let im = p0.im_or_zero().eval(0.0, &x, QUAD_TOL)?;
        if (re * re + im * im).sqrt() < 0.1 * head.iter().cloned().fold(0.0, f64::max) {
            continue;
        }
        let p = EvalPoint::new(0.0, x.clone());
        for theta in 1..ld.chain.m() {
            for part in [Part::Re, Part::Im] {
                if part == Part::Im && ld.is_real() {
                    continue;
                }
                let psi = IntegralExpr::psi(node.clone(), theta, part);
                for (j, a) in mats.iter().enumerate() {
                    let ax: Vec<f64> = (0..spec.n)
                        .map(|i| (0..spec.n).map(|k| a[(i, k)] * x[k]).sum())
                        .collect();
                    let mut d = 0.0;
                    for (i, v) in ax.iter().enumerate() {
                        d += numeric_partial(&psi, &p, Var::X(i), QUAD_TOL)? * v;
                    }
                    let want = match part {
                        Part::Re => ld.mu[theta - 1][j].re,
                        Part::Im => ld.mu[theta - 1][j].im,
                    };
                    worst = worst.max((d - want).abs() / (1.0 + want.abs()));
                }
            }
        }
        done += 1;
    }
    Ok(worst)
}

/// Selected Lappo-Danilevskii structure: accepted chains of the
/// designated matrix plus extra common eigenvectors.
#[derive(Debug, Clone)]
pub struct LdPlan {
    pub designated: usize,
    pub chains: Vec<LdChain>,
    pub vectors: Vec<CommonVector>,
    /// Real dimension covered by the selection.
    pub span: usize,
    pub notes: Vec<String>,
}

/// Commutation test of the family `Aⱼ`.
pub fn is_commuting(spec: &SystemSpec, tol: f64) -> bool {
    let mats: Vec<DMatrix<f64>> = spec.terms.iter().map(|t| t.a.clone()).collect();
    commutator_defect(&mats) <= tol
}

/// Gram-matrix test of the linear independence of `αⱼ` on the window.
fn alpha_gram_note(spec: &SystemSpec) -> Option<String> {
    let m = spec.terms.len();
    if m < 2 {
        return None;
    }
    let (lo, hi) = spec.window;
    let samples: Vec<Vec<f64>> = spec
        .terms
        .iter()
        .map(|t| {
            (0..50)
                .map(|k| {
                    t.alpha
                        .eval(lo + (hi - lo) * (k as f64 + 0.5) / 50.0)
                        .unwrap_or(f64::NAN)
                })
                .collect()
        })
        .collect();
    if samples.iter().flatten().any(|v| !v.is_finite()) {
        return Some("weights could not be sampled on the whole window".into());
    }
    let gram = DMatrix::from_fn(m, m, |i, j| {
        samples[i]
            .iter()
            .zip(&samples[j])
            .map(|(a, b)| a * b)
            .sum::<f64>()
    });
    let sv = gram.singular_values();
    let max = sv.max();
    let min = sv.min();
    (min <= 1e-10 * max).then(|| {
        "weights αⱼ look linearly dependent on the window (near-singular Gram matrix)".into()
    })
}

/// Designated matrix, accepted chains and extra common eigenvectors of a
/// commuting family.
pub fn ld_plan(spec: &SystemSpec) -> Result<LdPlan> {
    if !is_commuting(spec, DEFAULT_TOL) {
        return Err(FintError::construction(
            "Lappo-Danilevskii",
            "the matrices Aⱼ do not commute",
        ));
    }
    let mats = transposed_terms(spec);
    let mut designated = 0;
    let mut best = 0;
    let mut best_chains = Vec::new();
    for (j, a) in spec.terms.iter().enumerate() {
        let data = spectrum_of_transpose(&a.a, DEFAULT_TOL)?;
        let longest = data.chains.iter().map(|c| c.m()).max().unwrap_or(0);
        if longest > best {
            best = longest;
            designated = j;
            best_chains = data.chains;
        }
    }
    let mut notes = Vec::new();
    let mut chains = Vec::new();
    let mut span: Vec<Vec<f64>> = Vec::new();
    for c in best_chains
        .iter()
        .filter(|c| c.m() >= 2 && c.lambda.im >= 0.0)
    {
        let Some(mut ld) = chain_constants(&mats, c, 1e-8) else {
            notes.push(format!(
                "chain of length {} at λ = {} is not invariant under the family; its Ψ integrals are withheld",
                c.m(),
                crate::spectral::format_complex(c.lambda)
            ));
            continue;
        };
        for row in ld.mu.iter_mut() {
            for z in row.iter_mut() {
                *z = snap(*z);
            }
        }
        let worst = check_psi_constants(spec, &ld, 5, 17)?;
        if worst > MU_TOL {
            notes.push(format!(
                "Ψ functions of the chain at λ = {} have non-constant derivatives (deviation {worst:.1e}); withheld",
                crate::spectral::format_complex(c.lambda)
            ));
            continue;
        }
        let mut parts = Vec::new();
        for v in &c.vectors {
            parts.extend(real_parts(v));
        }
        let mut trial = span.clone();
        trial.extend(parts.iter().cloned());
        if matrix_rank(&trial, 1e-9) == span.len() + parts.len() {
            span = trial;
            chains.push(ld);
        }
    }
    let (vectors, _) = common_eigenvectors(&mats, DEFAULT_TOL)?;
    let reps = representatives(&vectors);
    let (chosen, span) = independent_vectors(&reps, span);
    if let Some(note) = alpha_gram_note(spec) {
        notes.push(note);
    }
    Ok(LdPlan {
        designated,
        chains,
        vectors: chosen.into_iter().cloned().collect(),
        span: span.len(),
        notes,
    })
}

/// Integrals of one accepted chain: `m` (real) or `2m` (complex).
fn ld_chain_integrals(
    spec: &SystemSpec,
    ld: &LdChain,
    forced: bool,
) -> Result<Vec<(IntegralExpr, &'static str)>> {
    let t0 = spec.anchor();
    let real = ld.is_real();
    let split =
        |c: CExpr, tag: &'static str, out: &mut Vec<(IntegralExpr, &'static str)>| -> Result<()> {
            out.push((c.re, tag));
            if !real {
                let im =
                    c.im.ok_or_else(|| FintError::construction(tag, "imaginary part vanished"))?;
                out.push((im, tag));
            }
            Ok(())
        };
    let mut out = Vec::new();
    let head = CommonVector {
        nu: ld.chain.vectors[0].clone(),
        lambdas: ld.lambdas.clone(),
        exact_lambdas: None,
    };
    if !forced {
        out.extend(eigenvector_integrals(spec, &head, false, LD_TAGS)?);
        let node = ld.node();
        for theta in 1..ld.chain.m() {
            let (mr, mi) = ld.mu_fn(spec, theta);
            out.push((
                IntegralExpr::psi(node.clone(), theta, Part::Re) - quad_scalar(mr, t0)?,
                "Theorem 2.7",
            ));
            if !real {
                out.push((
                    IntegralExpr::psi(node.clone(), theta, Part::Im) - quad_scalar(mi, t0)?,
                    "Theorem 2.7",
                ));
            }
        }
        return Ok(out);
    }

    // G_θ = ν^θx·φ = Σ_k K^θ_k F_k + C_θ
    let (a, b) = eigenfunction(spec, &ld.lambdas);
    let phi = decay(&a, &b, t0)?;
    let f = spec.forcing_exprs();
    let m = ld.chain.m();
    let mu_t: Vec<CExpr> = (1..m)
        .map(|theta| {
            let (r, i) = ld.mu_fn(spec, theta);
            CExpr::scalar(r, i)
        })
        .collect();
    let mut k_table: Vec<Vec<CExpr>> = Vec::with_capacity(m);
    let mut c_table: Vec<CExpr> = Vec::with_capacity(m);
    let mut fs: Vec<CExpr> = Vec::with_capacity(m);
    for theta in 0..m {
        let mut row = Vec::with_capacity(theta + 1);
        for k in 0..theta {
            let mut integrand = CExpr::zero();
            for rho in 1..=(theta - k) {
                let w = CExpr::constant(Complex64::new(binomial(theta, rho), 0.0));
                integrand = integrand + w * mu_t[rho - 1].clone() * k_table[theta - rho][k].clone();
            }
            row.push(integrand.quad(t0)?);
        }
        row.push(CExpr::constant(Complex64::new(1.0, 0.0)));
        let (fr, fi) = project(&ld.chain.vectors[theta], &f);
        let mut integrand = CExpr::scalar(fr, fi) * phi.clone();
        for rho in 1..=theta {
            let w = CExpr::constant(Complex64::new(binomial(theta, rho), 0.0));
            integrand = integrand + w * mu_t[rho - 1].clone() * c_table[theta - rho].clone();
        }
        let c_theta = integrand.quad(t0)?;
        let mut f_theta =
            CExpr::lin(&ld.chain.vectors[theta], None) * phi.clone() - c_theta.clone();
        for k in 0..theta {
            f_theta = f_theta - row[k].clone() * fs[k].clone();
        }
        k_table.push(row);
        c_table.push(c_theta);
        fs.push(f_theta);
    }
    for c in fs {
        split(c, "Theorem 2.14", &mut out)?;
    }
    Ok(out)
}

/// Basis of a Lappo-Danilevskii system from common eigenvectors and the
/// chains of the designated matrix.
pub fn ld_nonautonomous_integrals(spec: &SystemSpec, mode: Mode) -> Result<BasisResult> {
    let forced = check_mode(spec, mode, "Theorem 2.5")?;
    let plan = ld_plan(spec)?;
    let mut result = BasisResult::new(spec.n, SystemClass::LappoDanilevskii, mode);
    result.notes.extend(plan.notes.iter().cloned());
    for ld in &plan.chains {
        for (e, tag) in ld_chain_integrals(spec, ld, forced)? {
            result.push(e, tag);
        }
    }
    for v in &plan.vectors {
        for (e, tag) in eigenvector_integrals(spec, v, forced, LD_TAGS)? {
            result.push(e, tag);
        }
    }
    if plan.span < spec.n {
        return Err(FintError::construction(
            "Theorem 2.5",
            format!(
                "common eigenvectors and admissible chains cover only {} of {} dimensions",
                plan.span, spec.n
            ),
        ));
    }
    Ok(result)
}

/// Function with a constant-coefficient derivative `𝔞ⱼG = rⱼ` along each
/// operator of the family.
#[derive(Debug, Clone)]
enum LdGen {
    /// `ln|νx|`.
    Lin(Vec<f64>),
    /// `ln((ν*x)² + (ν̃x)²)`.
    LnP(Vec<Complex64>),
    /// `arctan(ν̃x/ν*x)`.
    Theta(Vec<Complex64>),
    Psi(Arc<PsiNode>, usize, Part),
}

impl LdGen {
    fn kind(&self) -> u8 {
        match self {
            LdGen::Lin(_) => 0,
            LdGen::LnP(_) | LdGen::Theta(_) => 1,
            LdGen::Psi(..) => 2,
        }
    }

    fn modulus(nu: &[Complex64]) -> IntegralExpr {
        let p = CExpr::lin(nu, None);
        p.re.clone().pow(Exponent::int(2)) + p.im_or_zero().pow(Exponent::int(2))
    }

    /// Additive form (what the rate refers to).
    fn additive(&self) -> IntegralExpr {
        match self {
            LdGen::Lin(v) => IntegralExpr::lin(v.clone()).abs().ln(),
            LdGen::LnP(nu) => Self::modulus(nu).ln(),
            LdGen::Theta(nu) => {
                let p = CExpr::lin(nu, None);
                IntegralExpr::arctan(p.im_or_zero(), p.re)
            }
            LdGen::Psi(node, k, part) => IntegralExpr::psi(node.clone(), *k, *part),
        }
    }
}

struct RatedGen {
    gen: LdGen,
    rates: Vec<f64>,
}

fn generators(plan: &LdPlan) -> Vec<RatedGen> {
    let mut out = Vec::new();
    let push_vector = |nu: &[Complex64], lambdas: &[Complex64], out: &mut Vec<RatedGen>| {
        if nu.iter().all(|z| z.im == 0.0) && lambdas.iter().all(|l| l.im == 0.0) {
            out.push(RatedGen {
                gen: LdGen::Lin(nu.iter().map(|z| z.re).collect()),
                rates: lambdas.iter().map(|l| l.re).collect(),
            });
        } else {
            out.push(RatedGen {
                gen: LdGen::LnP(nu.to_vec()),
                rates: lambdas.iter().map(|l| 2.0 * l.re).collect(),
            });
            out.push(RatedGen {
                gen: LdGen::Theta(nu.to_vec()),
                rates: lambdas.iter().map(|l| l.im).collect(),
            });
        }
    };
    for ld in &plan.chains {
        push_vector(&ld.chain.vectors[0], &ld.lambdas, &mut out);
        let node = ld.node();
        for theta in 1..ld.chain.m() {
            out.push(RatedGen {
                gen: LdGen::Psi(node.clone(), theta, Part::Re),
                rates: ld.mu[theta - 1].iter().map(|z| z.re).collect(),
            });
            if !ld.is_real() {
                out.push(RatedGen {
                    gen: LdGen::Psi(node.clone(), theta, Part::Im),
                    rates: ld.mu[theta - 1].iter().map(|z| z.im).collect(),
                });
            }
        }
    }
    for v in &plan.vectors {
        push_vector(&v.nu, &v.lambdas, &mut out);
    }
    out
}

/// Integer exponents proportional to `h`, when small ones exist.
fn snap_integers(h: &[f64]) -> Option<Vec<i64>> {
    let scale = h
        .iter()
        .map(|v| v.abs())
        .filter(|&v| v > 1e-12)
        .fold(f64::INFINITY, f64::min);
    if !scale.is_finite() {
        return None;
    }
    for k in 1..=24 {
        let v: Vec<f64> = h.iter().map(|x| x / scale * k as f64).collect();
        if v.iter()
            .all(|x| (x - x.round()).abs() < 1e-9 * (1.0 + x.abs()))
        {
            let ints: Vec<i64> = v.iter().map(|x| x.round() as i64).collect();
            let g = ints.iter().fold(0i64, |acc, x| acc.gcd(x));
            return Some(ints.iter().map(|x| x / g.max(1)).collect());
        }
    }
    None
}

/// Null vector of the rate columns in `subset`, when it is one-dimensional.
fn subset_kernel(gens: &[RatedGen], subset: &[usize]) -> Option<Vec<f64>> {
    let m = gens[0].rates.len();
    let rows: Vec<Vec<f64>> = (0..m)
        .map(|j| subset.iter().map(|&k| gens[k].rates[j]).collect())
        .collect();
    let scale = rows
        .iter()
        .flatten()
        .fold(0.0f64, |a, v| a.max(v.abs()))
        .max(1.0);
    let ker = crate::spectral::float_nullspace(&rows, 1e-10 * scale);
    (ker.len() == 1).then(|| ker[0].clone())
}

fn subsets(k: usize, size: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, k: usize, size: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for i in start..k {
            cur.push(i);
            rec(i + 1, k, size, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, k, size, &mut Vec::new(), &mut out);
    out
}

/// `exp(Σ hG)` for the chosen generators, with products and quotients of
/// plain powers when every factor is linear with integer exponent.
fn combine(gens: &[RatedGen], subset: &[usize], h: &[f64], ints: Option<&[i64]>) -> IntegralExpr {
    let all_lin = subset.iter().all(|&k| gens[k].gen.kind() == 0);
    if let (true, Some(ints)) = (all_lin, ints) {
        let mut num = IntegralExpr::constant(1.0);
        let mut den = IntegralExpr::constant(1.0);
        for (&k, &e) in subset.iter().zip(ints) {
            let LdGen::Lin(v) = &gens[k].gen else {
                unreachable!()
            };
            let p = IntegralExpr::lin(v.clone());
            match e.signum() {
                1 => num = num * p.pow(Exponent::int(e)),
                -1 => den = den * p.pow(Exponent::int(-e)),
                _ => {}
            }
        }
        return if den.as_const() == Some(1.0) {
            num
        } else {
            num / den
        };
    }
    let mut factor = IntegralExpr::constant(1.0);
    let mut exponent = IntegralExpr::constant(0.0);
    for (&k, &w) in subset.iter().zip(h) {
        let w_exp = match ints {
            Some(ints) => Exponent::int(ints[subset.iter().position(|&s| s == k).unwrap()]),
            None => Exponent::Real(w),
        };
        match &gens[k].gen {
            LdGen::Lin(v) => {
                let p = IntegralExpr::lin(v.clone());
                factor = factor
                    * if matches!(w_exp, Exponent::Rational(..)) {
                        p.pow(w_exp)
                    } else {
                        p.abs().pow(w_exp)
                    };
            }
            LdGen::LnP(nu) => factor = factor * LdGen::modulus(nu).pow(w_exp),
            g => exponent = exponent + IntegralExpr::constant(w_exp.value()) * g.additive(),
        }
    }
    if exponent.as_const() == Some(0.0) {
        factor
    } else {
        factor * exponent.exp()
    }
}

/// Largest relative directional derivative `|∇F·Aⱼx| / (‖∇F‖‖Aⱼx‖)` over
/// the matrices and points.
pub fn frozen_field_residual(
    f: &IntegralExpr,
    mats: &[DMatrix<f64>],
    points: &[Vec<f64>],
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for x in points {
        let p = EvalPoint::new(0.0, x.clone());
        let grad: Vec<f64> = (0..x.len())
            .map(|i| numeric_partial(f, &p, Var::X(i), QUAD_TOL))
            .collect::<Result<_>>()?;
        let gnorm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
        for a in mats {
            let ax: Vec<f64> = (0..x.len())
                .map(|i| (0..x.len()).map(|k| a[(i, k)] * x[k]).sum())
                .collect();
            let anorm = ax.iter().map(|v| v * v).sum::<f64>().sqrt();
            if gnorm == 0.0 || anorm == 0.0 {
                continue;
            }
            let d: f64 = grad.iter().zip(&ax).map(|(g, v)| g * v).sum();
            worst = worst.max(d.abs() / (gnorm * anorm));
        }
    }
    Ok(worst)
}

/// Random points away from the singular sets of `fs`.
pub fn generic_points(fs: &[IntegralExpr], n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut attempts = 0;
    while out.len() < count && attempts < 1000 * count {
        attempts += 1;
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ok = fs.iter().flat_map(|f| f.singular_exprs()).all(|d| {
            d.eval(0.0, &x, QUAD_TOL)
                .map(|v| v.abs() > 0.1)
                .unwrap_or(false)
        }) && fs.iter().all(|f| f.eval(0.0, &x, QUAD_TOL).is_ok());
        if ok {
            out.push(x);
        }
    }
    out
}

/// Exponents from Cramer's rule for `m + 1` eigenvalue vectors of length
/// `m`: returns `Δ` and `Δ₁ … Δ_m`, where `Δ_k` replaces column `k` by the
/// last vector. The exponents are `(Δ₁, …, Δ_m, −Δ)`.
pub fn cramer_exponents(lambdas: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
    let m = lambdas
        .len()
        .checked_sub(1)
        .filter(|&m| m > 0)
        .ok_or_else(|| {
            FintError::construction("Corollary 2.3", "need at least two eigenvalue vectors")
        })?;
    if lambdas.iter().any(|l| l.len() != m) {
        return Err(FintError::construction(
            "Corollary 2.3",
            "eigenvalue vectors must have one entry per matrix",
        ));
    }
    let det = |cols: &[&Vec<f64>]| DMatrix::from_fn(m, m, |i, j| cols[j][i]).determinant();
    let base: Vec<&Vec<f64>> = lambdas[..m].iter().collect();
    let delta = det(&base);
    let mut deltas = Vec::with_capacity(m);
    for k in 0..m {
        let mut cols = base.clone();
        cols[k] = &lambdas[m];
        deltas.push(det(&cols));
    }
    if delta.abs() < 1e-12 {
        return Err(FintError::construction(
            "Corollary 2.3",
            "the main determinant vanishes",
        ));
    }
    Ok((delta, deltas))
}

/// Autonomous integrals of a Lappo-Danilevskii system: combinations
/// `Σ h_k G_k` of generators whose rate vectors cancel, found over subsets in
/// order of size and then lexicographically.
pub fn ld_autonomous_integrals(spec: &SystemSpec) -> Result<BasisResult> {
    if spec.has_forcing() {
        return Err(FintError::construction(
            "homogeneity",
            "autonomous mode needs f ≡ 0; use forced mode for this system",
        ));
    }
    let plan = ld_plan(spec)?;
    let gens = generators(&plan);
    let mut result = BasisResult::new(spec.n, SystemClass::LappoDanilevskii, Mode::Autonomous);
    result.notes.extend(plan.notes.iter().cloned());
    if gens.is_empty() {
        return Ok(result);
    }
    let k = gens.len();
    let m = gens[0].rates.len();
    let rate_rows: Vec<Vec<f64>> = (0..m)
        .map(|j| gens.iter().map(|g| g.rates[j]).collect())
        .collect();
    let rank = matrix_rank(&rate_rows, 1e-10);
    let target = k - rank;
    let mut chosen: Vec<Vec<f64>> = Vec::new();
    let mats: Vec<DMatrix<f64>> = spec.terms.iter().map(|t| t.a.clone()).collect();
    'outer: for size in 1..=k {
        for subset in subsets(k, size) {
            if chosen.len() == target {
                break 'outer;
            }
            let Some(mut h) = subset_kernel(&gens, &subset) else {
                continue;
            };
            if h.iter().any(|v| v.abs() < 1e-9) {
                continue;
            }
            let first = h[0];
            h.iter_mut().for_each(|v| *v /= first);
            let mut full = vec![0.0; k];
            for (&i, &v) in subset.iter().zip(&h) {
                full[i] = v;
            }
            let mut trial = chosen.clone();
            trial.push(full.clone());
            if matrix_rank(&trial, 1e-9) <= chosen.len() {
                continue;
            }
            let ints = snap_integers(&h);
            let f = combine(&gens, &subset, &h, ints.as_deref());
            // ∇F = F·∇ln F, so the scaled residual of the additive form is the same
            let additive = subset
                .iter()
                .zip(&h)
                .fold(IntegralExpr::constant(0.0), |acc, (&i, &w)| {
                    acc + IntegralExpr::constant(w) * gens[i].gen.additive()
                });
            let points = generic_points(std::slice::from_ref(&f), spec.n, 20, 23);
            let worst = frozen_field_residual(&additive, &mats, &points)?;
            if worst > FROZEN_TOL {
                return Err(FintError::construction(
                    "Lemma 2.6",
                    format!("frozen-field check failed for {f} (residual {worst:.1e})"),
                ));
            }
            let tag = match subset.iter().map(|&i| gens[i].gen.kind()).max() {
                Some(0) => "Theorem 2.8",
                Some(1) => "Theorem 2.9",
                _ => "Theorem 2.11",
            };
            result.push(f, tag);
            chosen = trial;
        }
    }
    if result.is_empty() {
        result
            .notes
            .push("the exponent system has only the trivial solution".into());
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_scalar;
    use crate::numerics::{integrate_trajectory, verify_constancy};
    use crate::system::{matrix_from_rows, Term};

    fn spec_from(terms: &[(&str, &[&[f64]])], window: (f64, f64)) -> SystemSpec {
        let mut spec = SystemSpec::from_rows(terms[0].1);
        spec.terms = terms
            .iter()
            .map(|(alpha, rows)| Term {
                alpha: parse_scalar(alpha).unwrap(),
                a: matrix_from_rows(rows),
            })
            .collect();
        spec.window = window;
        spec
    }

    fn max_drift(spec: &SystemSpec, basis: &BasisResult, x0: &[f64]) -> f64 {
        let traj = integrate_trajectory(spec, x0, spec.window, 1e-11).unwrap();
        basis
            .integrals
            .iter()
            .map(|i| {
                verify_constancy(&i.expr, &traj, 1e-11)
                    .unwrap()
                    .relative_drift
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn diagonal_triangular_is_scaled_coordinates() {
        // x' = diag(t, 2)x
        let spec = spec_from(
            &[
                ("t", &[&[1.0, 0.0], &[0.0, 0.0]]),
                ("2", &[&[0.0, 0.0], &[0.0, 1.0]]),
            ],
            (0.0, 1.0),
        );
        let b = triangular_integrals(&spec, Mode::Full).unwrap();
        assert_eq!(b.len(), 2);
        let (t, x) = (0.7, [0.3, -0.4]);
        let f1 = b.integrals[0].expr.eval(t, &x, 1e-12).unwrap();
        assert!((f1 - x[1] * (-2.0 * t).exp()).abs() < 1e-10);
        let f2 = b.integrals[1].expr.eval(t, &x, 1e-12).unwrap();
        assert!((f2 - x[0] * (-t * t / 2.0).exp()).abs() < 1e-10);
    }

    #[test]
    fn triangular_anchor_identity() {
        let spec = spec_from(
            &[
                ("1/t", &[&[1.0, 1.0], &[0.0, 2.0]]),
                ("exp(t)", &[&[0.0, 1.0], &[0.0, 0.0]]),
            ],
            (1.0, 2.0),
        )
        .with_forcing(&["t", "1"])
        .unwrap();
        let b = triangular_integrals(&spec, Mode::Forced).unwrap();
        let x = [0.4, -1.2];
        for (tau, i) in b.integrals.iter().enumerate() {
            let v = i.expr.eval(1.0, &x, 1e-12).unwrap();
            assert!((v - x[1 - tau]).abs() < 1e-12);
        }
        assert!(max_drift(&spec, &b, &[0.5, 0.2]) < 1e-8);
    }

    #[test]
    fn lower_triangular_is_rejected() {
        let spec = spec_from(&[("t", &[&[0.0, 0.0], &[1.0, 0.0]])], (0.0, 1.0));
        assert!(triangular_integrals(&spec, Mode::Full).is_err());
    }

    #[test]
    fn cramer_on_three_vectors() {
        let (d, ds) =
            cramer_exponents(&[vec![-2.0, -1.0], vec![1.0, 1.0], vec![2.0, 1.0]]).unwrap();
        assert!((d + 1.0).abs() < 1e-12);
        assert!((ds[0] - 1.0).abs() < 1e-12);
        assert!(ds[1].abs() < 1e-12);
    }

    #[test]
    fn integer_snapping() {
        assert_eq!(snap_integers(&[0.5, 1.0, 0.5]), Some(vec![1, 2, 1]));
        assert_eq!(snap_integers(&[1.0, -2.0 / 3.0]), Some(vec![3, -2]));
        assert_eq!(snap_integers(&[1.0, std::f64::consts::SQRT_2]), None);
    }

    #[test]
    fn rotation_family_is_ld() {
        // A(t) = t·I + cos t·J with J the rotation generator
        let spec = spec_from(
            &[
                ("t", &[&[1.0, 0.0], &[0.0, 1.0]]),
                ("cos(t)", &[&[0.0, 1.0], &[-1.0, 0.0]]),
            ],
            (0.0, 2.0),
        );
        let b = ld_nonautonomous_integrals(&spec, Mode::Full).unwrap();
        assert_eq!(b.len(), 2);
        assert!(max_drift(&spec, &b, &[0.6, -0.3]) < 1e-8);
        let auto = ld_autonomous_integrals(&spec).unwrap();
        assert!(auto.is_empty());
    }

    #[test]
    fn non_commuting_family_is_refused() {
        let spec = spec_from(
            &[
                ("t", &[&[0.0, 1.0], &[0.0, 0.0]]),
                ("1", &[&[0.0, 0.0], &[1.0, 0.0]]),
            ],
            (0.0, 1.0),
        );
        assert!(ld_plan(&spec).is_err());
    }
}
