//! Eigenvalues, Jordan chains and common eigenvectors of transposed
//! coefficient matrices.

mod chains;
pub mod exact;

use std::fmt;

use nalgebra::DMatrix;
use num_complex::{Complex, Complex64};
use num_rational::{BigRational, Rational64};
use num_traits::{ToPrimitive, Zero};

use crate::error::{FintError, Result};
pub(crate) use chains::float_nullspace;
use chains::{float_engine, jordan_chains, ExactEngine, Mat};
use exact::GQ;

/// Default relative tolerance of the floating-point path.
pub const DEFAULT_TOL: f64 = 1e-8;

/// Eigenvalue with an exact rational real and imaginary part.
pub type ExactLambda = (Rational64, Rational64);

/// Jordan chain `ν⁰ … ν^{m−1}` of `B` with `(B − λE)ν^k = k·ν^{k−1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenChain {
    pub lambda: Complex64,
    pub vectors: Vec<Vec<Complex64>>,
    pub exact_lambda: Option<ExactLambda>,
}

impl EigenChain {
    /// Length of the chain (multiplicity of its elementary divisor).
    pub fn m(&self) -> usize {
        self.vectors.len()
    }

    pub fn eigenvector(&self) -> &[Complex64] {
        &self.vectors[0]
    }

    pub fn is_real(&self) -> bool {
        self.lambda.im == 0.0 && self.vectors.iter().flatten().all(|z| z.im == 0.0)
    }

    pub fn real_vector(&self, k: usize) -> Vec<f64> {
        self.vectors[k].iter().map(|z| z.re).collect()
    }

    pub fn conj(&self) -> EigenChain {
        EigenChain {
            lambda: self.lambda.conj(),
            vectors: self
                .vectors
                .iter()
                .map(|v| v.iter().map(|z| z.conj()).collect())
                .collect(),
            exact_lambda: self.exact_lambda.map(|(re, im)| (re, -im)),
        }
    }

    /// Largest `‖(B − λE)ν^k − k·ν^{k−1}‖∞` over the chain.
    pub fn residual(&self, b: &DMatrix<f64>) -> f64 {
        let n = b.nrows();
        let mut worst: f64 = 0.0;
        for (k, v) in self.vectors.iter().enumerate() {
            for i in 0..n {
                let mut acc = -self.lambda * v[i];
                for j in 0..n {
                    acc += b[(i, j)] * v[j];
                }
                if k > 0 {
                    acc -= self.vectors[k - 1][i] * k as f64;
                }
                worst = worst.max(acc.norm());
            }
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralData {
    /// Sorted by `(Re λ, Im λ, m)`.
    pub chains: Vec<EigenChain>,
    /// `det(λE − A)` coefficients, leading first.
    pub char_poly: Vec<f64>,
    pub exact: bool,
}

impl SpectralData {
    /// Distinct eigenvalues with algebraic multiplicity, in chain order.
    pub fn eigenvalues(&self) -> Vec<(Complex64, usize)> {
        let mut out: Vec<(Complex64, usize)> = Vec::new();
        for c in &self.chains {
            match out.iter_mut().find(|(l, _)| *l == c.lambda) {
                Some(e) => e.1 += c.m(),
                None => out.push((c.lambda, c.m())),
            }
        }
        out
    }

    /// Elementary divisors `(λ, m)`, one per chain.
    pub fn divisors(&self) -> Vec<(Complex64, usize)> {
        self.chains.iter().map(|c| (c.lambda, c.m())).collect()
    }

    /// Real chains and the `Im λ > 0` member of each conjugate pair.
    pub fn representatives(&self) -> Vec<&EigenChain> {
        self.chains.iter().filter(|c| c.lambda.im >= 0.0).collect()
    }
}

pub fn format_complex(z: Complex64) -> String {
    use crate::expr::format_number;
    let clean = |v: f64| if v.abs() < 1e-14 { 0.0 } else { v };
    let (re, im) = (clean(z.re), clean(z.im));
    if im == 0.0 {
        return format_number(re);
    }
    let imag = match im.abs() {
        v if v == 1.0 => "i".to_string(),
        v => format!("{}i", format_number(v)),
    };
    if re == 0.0 {
        return if im < 0.0 { format!("-{imag}") } else { imag };
    }
    format!(
        "{}{}{}",
        format_number(re),
        if im < 0.0 { "-" } else { "+" },
        imag
    )
}

/// `λ − λ₀` rendered for divisor listings.
pub fn format_divisor(lambda: Complex64, m: usize, var: &str) -> String {
    let base = if lambda.norm() < 1e-14 {
        var.to_string()
    } else if lambda.im == 0.0 && lambda.re < 0.0 {
        format!("{var}+{}", format_complex(-lambda))
    } else if lambda.im == 0.0 {
        format!("{var}−{}", format_complex(lambda))
    } else {
        format!("{var}−({})", format_complex(lambda))
    };
    match m {
        1 => base,
        _ if lambda.norm() < 1e-14 => format!("{base}{}", superscript(m)),
        _ => format!("({base}){}", superscript(m)),
    }
}

pub fn superscript(k: usize) -> String {
    const DIGITS: [char; 10] = ['⁰', '¹', '²', '³', '⁴', '⁵', '⁶', '⁷', '⁸', '⁹'];
    k.to_string()
        .chars()
        .map(|c| DIGITS[c.to_digit(10).unwrap() as usize])
        .collect()
}

impl fmt::Display for SpectralData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let eig: Vec<String> = self
            .eigenvalues()
            .iter()
            .map(|(l, m)| match m {
                1 => format_complex(*l),
                _ => format!("{} (×{m})", format_complex(*l)),
            })
            .collect();
        let div: Vec<String> = self
            .divisors()
            .iter()
            .map(|(l, m)| format_divisor(*l, *m, "λ"))
            .collect();
        write!(
            f,
            "eigenvalues: {}; divisors: {}",
            eig.join(", "),
            div.join(", ")
        )
    }
}

fn rational64(q: &BigRational) -> Option<Rational64> {
    Some(Rational64::new(q.numer().to_i64()?, q.denom().to_i64()?))
}

fn exact_lambda(z: &GQ) -> Option<ExactLambda> {
    Some((rational64(&z.re)?, rational64(&z.im)?))
}

fn sort_chains(chains: &mut [EigenChain]) {
    chains.sort_by(|a, b| {
        a.lambda
            .re
            .total_cmp(&b.lambda.re)
            .then(a.lambda.im.total_cmp(&b.lambda.im))
            .then(a.m().cmp(&b.m()))
    });
}

/// Index of the last entry that is not negligible.
fn trailing_index(v: &[Complex64], rel: f64) -> Option<usize> {
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return None;
    }
    v.iter().rposition(|z| z.norm() > rel * max)
}

/// Scale a chain (one factor for all vectors) so the last significant
/// entry of `ν⁰` is 1; tiny components are flushed to zero.
fn normalize_float(vectors: &mut [Vec<Complex64>]) {
    let Some(i) = trailing_index(&vectors[0], 1e-8) else {
        return;
    };
    let pivot = vectors[0][i];
    let scale = vectors
        .iter()
        .flatten()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
        / pivot.norm();
    for v in vectors.iter_mut() {
        for z in v.iter_mut() {
            *z /= pivot;
            if z.re.abs() <= 1e-14 * scale {
                z.re = 0.0;
            }
            if z.im.abs() <= 1e-14 * scale {
                z.im = 0.0;
            }
        }
    }
}

fn gq_chain_to_float(chain: &[Vec<GQ>]) -> Vec<Vec<Complex64>> {
    chain
        .iter()
        .map(|v| v.iter().map(exact::gq_to_c64).collect())
        .collect()
}

fn exact_spectrum(a: &DMatrix<f64>) -> Option<Result<SpectralData>> {
    let q = exact::rational_matrix(a)?;
    let roots = exact::exact_roots(&q)?;
    let n = a.nrows();
    let b: Mat<GQ> = exact::transpose(&q)
        .into_iter()
        .map(|r| r.into_iter().map(exact::gq).collect())
        .collect();
    let mut chains = Vec::new();
    for (lambda, mult) in &roots.roots {
        if lambda.im < BigRational::zero() {
            continue;
        }
        let n_mat = exact::shift(&b, lambda);
        let found = match jordan_chains(&ExactEngine, &n_mat, *mult) {
            Ok(c) => c,
            Err(e) => return Some(Err(e)),
        };
        for mut chain in found {
            let Some(i) = chain[0].iter().rposition(|z| !z.is_zero()) else {
                return Some(Err(FintError::Spectral("zero eigenvector".into())));
            };
            let pivot = chain[0][i].clone();
            exact::normalize_integer(&mut chain, &pivot);
            let c = EigenChain {
                lambda: exact::gq_to_c64(lambda),
                vectors: gq_chain_to_float(&chain),
                exact_lambda: exact_lambda(lambda),
            };
            if !lambda.im.is_zero() {
                chains.push(c.conj());
            }
            chains.push(c);
        }
    }
    debug_assert_eq!(chains.iter().map(|c| c.m()).sum::<usize>(), n);
    sort_chains(&mut chains);
    Some(Ok(SpectralData {
        chains,
        char_poly: roots
            .char_poly
            .iter()
            .map(|c| c.to_f64().unwrap_or(f64::NAN))
            .collect(),
        exact: true,
    }))
}

fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Single-linkage clusters of eigenvalues within `radius`.
fn cluster(values: &[Complex64], radius: f64) -> Vec<Vec<Complex64>> {
    let n = values.len();
    let mut label: Vec<usize> = (0..n).collect();
    fn find(l: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while l[r] != r {
            r = l[r];
        }
        l[i] = r;
        r
    }
    for i in 0..n {
        for j in i + 1..n {
            if (values[i] - values[j]).norm() <= radius {
                let (a, b) = (find(&mut label, i), find(&mut label, j));
                label[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: Vec<(usize, Vec<Complex64>)> = Vec::new();
    for i in 0..n {
        let r = find(&mut label, i);
        match groups.iter_mut().find(|(k, _)| *k == r) {
            Some(g) => g.1.push(values[i]),
            None => groups.push((r, vec![values[i]])),
        }
    }
    groups.into_iter().map(|(_, g)| g).collect()
}

fn float_char_poly(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut coeffs = vec![1.0];
    let mut mk = DMatrix::<f64>::zeros(n, n);
    for k in 1..=n {
        mk = a * &mk + DMatrix::identity(n, n) * coeffs[k - 1];
        let c = -(a * &mk).trace() / k as f64;
        coeffs.push(c);
    }
    coeffs
}

fn float_chains_at(
    b: &DMatrix<f64>,
    lambda: Complex64,
    mult: usize,
    tol: f64,
    scale: f64,
) -> Result<Vec<Vec<Vec<Complex64>>>> {
    let n = b.nrows();
    let raw: Vec<Vec<Vec<Complex64>>> = if lambda.im == 0.0 {
        let n_mat: Mat<f64> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| b[(i, j)] - if i == j { lambda.re } else { 0.0 })
                    .collect()
            })
            .collect();
        let en = float_engine::<f64>(tol, scale);
        jordan_chains(&en, &n_mat, mult)?
            .into_iter()
            .map(|c| {
                c.into_iter()
                    .map(|v| v.into_iter().map(|x| Complex64::new(x, 0.0)).collect())
                    .collect()
            })
            .collect()
    } else {
        let n_mat: Mat<Complex64> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        Complex64::new(b[(i, j)], 0.0)
                            - if i == j { lambda } else { Complex64::zero() }
                    })
                    .collect()
            })
            .collect();
        let en = float_engine::<Complex64>(tol, scale);
        jordan_chains(&en, &n_mat, mult)?
    };
    Ok(raw
        .into_iter()
        .map(|mut c| {
            normalize_float(&mut c);
            for z in c.iter_mut().flatten() {
                *z = Complex64::new(snap_rational(z.re, 1e-12), snap_rational(z.im, 1e-12));
            }
            c
        })
        .collect())
}

/// Nearest `p/q` with `q ≤ 12` when within `tol·max(1, |v|)`, else `v`.
fn snap_rational(v: f64, tol: f64) -> f64 {
    let slack = tol * v.abs().max(1.0);
    (1..=12)
        .map(|q| (v * q as f64).round() / q as f64)
        .find(|r| (v - r).abs() <= slack)
        .unwrap_or(v)
}

const SCHUR_MAX_ITER: usize = 10_000;

/// Eigenvalues from a capped Schur iteration. Exactly defective matrices
/// can stall the unshifted iteration, so a few diagonal shifts are tried.
pub(crate) fn eigenvalues(a: &DMatrix<f64>) -> Option<Vec<Complex64>> {
    let n = a.nrows();
    let norm = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for shift in [0.0, 0.618_033_988_75, -1.324_717_957_24] {
        let sigma = shift * norm;
        let m = a + DMatrix::identity(n, n) * sigma;
        let Some(schur) = nalgebra::linalg::Schur::try_new(m, f64::EPSILON, SCHUR_MAX_ITER) else {
            continue;
        };
        let eig: Vec<Complex64> = schur
            .complex_eigenvalues()
            .iter()
            .map(|z| z - sigma)
            .collect();
        if eig.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Some(eig);
        }
    }
    None
}

fn float_spectrum(a: &DMatrix<f64>, tol: f64) -> Result<SpectralData> {
    let n = a.nrows();
    let b = a.transpose();
    let norm = spectral_norm(a);
    let eig = eigenvalues(a)
        .ok_or_else(|| FintError::Spectral("eigenvalue computation did not converge".into()))?;
    let mut last_err = None;
    for radius_factor in [tol, tol.sqrt(), tol.powf(0.25)] {
        let radius = radius_factor * norm;
        match float_spectrum_at(&b, &eig, radius, tol, norm) {
            Ok(chains) => {
                debug_assert_eq!(chains.iter().map(|c| c.m()).sum::<usize>(), n);
                return Ok(SpectralData {
                    chains,
                    char_poly: float_char_poly(a),
                    exact: false,
                });
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or_else(|| FintError::Spectral("no consistent clustering".into())))
}

fn float_spectrum_at(
    b: &DMatrix<f64>,
    eig: &[Complex64],
    radius: f64,
    tol: f64,
    norm: f64,
) -> Result<Vec<EigenChain>> {
    let groups = cluster(eig, radius);
    let mut chains = Vec::new();
    let mut uppers = 0usize;
    let mut lowers = 0usize;
    for g in &groups {
        let mean = g.iter().sum::<Complex64>() / g.len() as f64;
        let mean = Complex64::new(
            snap_rational(mean.re, 1e-10 * norm.max(1.0)),
            snap_rational(mean.im, 1e-10 * norm.max(1.0)),
        );
        let real = mean.im.abs() <= radius.max(1e-14 * norm);
        if !real && mean.im < 0.0 {
            lowers += g.len();
            continue;
        }
        let lambda = if real {
            Complex64::new(mean.re, 0.0)
        } else {
            uppers += g.len();
            mean
        };
        for vectors in float_chains_at(b, lambda, g.len(), tol, norm + lambda.norm())? {
            let c = EigenChain {
                lambda,
                vectors,
                exact_lambda: None,
            };
            if !real {
                chains.push(c.conj());
            }
            chains.push(c);
        }
    }
    if uppers != lowers {
        return Err(FintError::Spectral(
            "complex eigenvalues do not pair into conjugates".into(),
        ));
    }
    sort_chains(&mut chains);
    Ok(chains)
}

/// Jordan decomposition of `B = Aᵀ`.
///
/// Rational matrices whose eigenvalues are Gaussian rationals take the
/// exact path; everything else is computed in floating point with
/// eigenvalue clustering at `tol·‖A‖`.
pub fn spectrum_of_transpose(a: &DMatrix<f64>, tol: f64) -> Result<SpectralData> {
    if !a.is_square() || a.nrows() == 0 {
        return Err(FintError::Input(
            "spectral analysis needs a non-empty square matrix".into(),
        ));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(FintError::Input("matrix has non-finite entries".into()));
    }
    if let Some(result) = exact_spectrum(a) {
        return result;
    }
    float_spectrum(a, tol)
}

/// A chain of length `m` of `B` at `λ`.
pub fn build_chain(b: &DMatrix<f64>, lambda: Complex64, m: usize, tol: f64) -> Result<EigenChain> {
    let data = spectrum_of_transpose(&b.transpose(), tol)?;
    let scale = spectral_norm(b).max(1.0);
    data.chains
        .iter()
        .filter(|c| (c.lambda - lambda).norm() <= tol * scale.max(lambda.norm()) && c.m() >= m)
        .max_by_key(|c| c.m())
        .map(|c| EigenChain {
            lambda: c.lambda,
            vectors: c.vectors[..m].to_vec(),
            exact_lambda: c.exact_lambda,
        })
        .ok_or_else(|| {
            FintError::Spectral(format!(
                "no chain of length {m} at λ = {}",
                format_complex(lambda)
            ))
        })
}

/// Simultaneous eigenvector `Bⱼν = λʲν` of a family.
#[derive(Debug, Clone, PartialEq)]
pub struct CommonVector {
    pub nu: Vec<Complex64>,
    pub lambdas: Vec<Complex64>,
    pub exact_lambdas: Option<Vec<ExactLambda>>,
}

impl CommonVector {
    pub fn is_real(&self) -> bool {
        self.nu.iter().all(|z| z.im == 0.0) && self.lambdas.iter().all(|z| z.im == 0.0)
    }

    /// True for the member of a conjugate pair whose first non-real
    /// eigenvalue has positive imaginary part.
    pub fn is_upper(&self) -> bool {
        match self.lambdas.iter().find(|z| z.im != 0.0) {
            Some(z) => z.im > 0.0,
            None => self
                .nu
                .iter()
                .find(|z| z.im != 0.0)
                .is_none_or(|z| z.im > 0.0),
        }
    }

    pub fn real_vector(&self) -> Vec<f64> {
        self.nu.iter().map(|z| z.re).collect()
    }
}

#[derive(Debug, Clone)]
pub struct CommonSpectrum {
    pub vectors: Vec<CommonVector>,
    /// Index of the matrix whose chains are attached.
    pub designated: usize,
    pub chains: Vec<EigenChain>,
    pub exact: bool,
}

impl CommonSpectrum {
    /// Real vectors and one member of each conjugate pair.
    pub fn representatives(&self) -> Vec<&CommonVector> {
        self.vectors
            .iter()
            .filter(|v| v.is_real() || v.is_upper())
            .collect()
    }
}

fn matrix_scale(m: &DMatrix<f64>) -> f64 {
    spectral_norm(m).max(1.0)
}

/// Largest commutator norm of the family, relative to the product of norms.
pub fn commutator_defect(mats: &[DMatrix<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..mats.len() {
        for j in i + 1..mats.len() {
            let c = &mats[i] * &mats[j] - &mats[j] * &mats[i];
            worst = worst.max(c.amax() / (matrix_scale(&mats[i]) * matrix_scale(&mats[j])));
        }
    }
    worst
}

fn tuples<T: Clone>(lists: &[Vec<T>]) -> Vec<Vec<T>> {
    let mut out: Vec<Vec<T>> = vec![Vec::new()];
    for list in lists {
        let mut next = Vec::new();
        for prefix in &out {
            for item in list {
                let mut p = prefix.clone();
                p.push(item.clone());
                next.push(p);
            }
        }
        out = next;
    }
    out
}

fn exact_common(mats: &[DMatrix<f64>]) -> Option<Vec<CommonVector>> {
    let mut qs = Vec::new();
    let mut roots = Vec::new();
    for m in mats {
        let q = exact::rational_matrix(m)?;
        roots.push(
            exact::exact_roots(&q)?
                .roots
                .into_iter()
                .map(|(r, _)| r)
                .collect::<Vec<_>>(),
        );
        qs.push(
            q.into_iter()
                .map(|r| r.into_iter().map(exact::gq).collect::<Vec<GQ>>())
                .collect::<Vec<_>>(),
        );
    }
    let mut out = Vec::new();
    for tuple in tuples(&roots) {
        let mut stacked: Mat<GQ> = Vec::new();
        for (q, l) in qs.iter().zip(&tuple) {
            stacked.extend(exact::shift(q, l));
        }
        for mut v in exact::nullspace(&stacked) {
            let i = v.iter().rposition(|z| !z.is_zero())?;
            let pivot = v[i].clone();
            exact::normalize_integer(std::slice::from_mut(&mut v), &pivot);
            out.push(CommonVector {
                nu: v.iter().map(exact::gq_to_c64).collect(),
                lambdas: tuple.iter().map(exact::gq_to_c64).collect(),
                exact_lambdas: tuple.iter().map(exact_lambda).collect(),
            });
        }
    }
    Some(out)
}

fn float_common(mats: &[DMatrix<f64>], tol: f64) -> Result<Vec<CommonVector>> {
    let n = mats[0].nrows();
    let mut distinct = Vec::new();
    for m in mats {
        let data = spectrum_of_transpose(&m.transpose(), tol)?;
        distinct.push(
            data.eigenvalues()
                .into_iter()
                .map(|(l, _)| l)
                .collect::<Vec<_>>(),
        );
    }
    let scale: f64 = mats.iter().map(matrix_scale).fold(0.0, f64::max);
    let mut out = Vec::new();
    for tuple in tuples(&distinct) {
        let real = tuple.iter().all(|z| z.im == 0.0);
        let threshold = tol * scale * 10.0;
        let vectors: Vec<Vec<Complex64>> = if real {
            let mut stacked: Mat<f64> = Vec::new();
            for (m, l) in mats.iter().zip(&tuple) {
                for i in 0..n {
                    stacked.push(
                        (0..n)
                            .map(|j| m[(i, j)] - if i == j { l.re } else { 0.0 })
                            .collect(),
                    );
                }
            }
            float_nullspace(&stacked, threshold)
                .into_iter()
                .map(|v| v.into_iter().map(|x| Complex64::new(x, 0.0)).collect())
                .collect()
        } else {
            let mut stacked: Mat<Complex64> = Vec::new();
            for (m, l) in mats.iter().zip(&tuple) {
                for i in 0..n {
                    stacked.push(
                        (0..n)
                            .map(|j| {
                                Complex64::new(m[(i, j)], 0.0)
                                    - if i == j { *l } else { Complex64::zero() }
                            })
                            .collect(),
                    );
                }
            }
            float_nullspace(&stacked, threshold)
        };
        for mut v in vectors {
            normalize_float(std::slice::from_mut(&mut v));
            out.push(CommonVector {
                nu: v,
                lambdas: tuple.clone(),
                exact_lambdas: None,
            });
        }
    }
    Ok(out)
}

/// Simultaneous eigenvectors of a family of matrices (no commutation
/// requirement): the intersections `∩ⱼ ker(Bⱼ − λʲE)` over all tuples of
/// eigenvalues.
pub fn common_eigenvectors(mats: &[DMatrix<f64>], tol: f64) -> Result<(Vec<CommonVector>, bool)> {
    if mats.is_empty() {
        return Err(FintError::Input("empty matrix family".into()));
    }
    let n = mats[0].nrows();
    if mats.iter().any(|m| m.nrows() != n || m.ncols() != n) {
        return Err(FintError::Input(
            "matrix family has inconsistent dimensions".into(),
        ));
    }
    if let Some(v) = exact_common(mats) {
        return Ok((v, true));
    }
    Ok((float_common(mats, tol)?, false))
}

/// Common eigenstructure of a commuting family `B₁ … B_m`, with the
/// Jordan chains of the matrix having the longest chain attached.
pub fn common_spectrum(mats: &[DMatrix<f64>], tol: f64) -> Result<CommonSpectrum> {
    let defect = commutator_defect(mats);
    if defect > tol {
        return Err(FintError::Spectral(format!(
            "family does not commute (relative commutator {defect:.2e})"
        )));
    }
    let (vectors, exact) = common_eigenvectors(mats, tol)?;
    if vectors.is_empty() {
        return Err(FintError::Spectral("empty common eigenspace".into()));
    }
    let mut designated = 0;
    let mut best_chains = Vec::new();
    let mut best_len = 0;
    for (j, m) in mats.iter().enumerate() {
        let data = spectrum_of_transpose(&m.transpose(), tol)?;
        let longest = data.chains.iter().map(|c| c.m()).max().unwrap_or(0);
        if longest > best_len {
            best_len = longest;
            designated = j;
            best_chains = data.chains;
        }
    }
    Ok(CommonSpectrum {
        vectors,
        designated,
        chains: best_chains,
        exact,
    })
}

/// `Complex<BigRational>` helper re-exported for callers needing exact data.
pub type GaussianRational = Complex<BigRational>;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::matrix_from_rows;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn zero_matrix_has_three_simple_divisors() {
        let data = spectrum_of_transpose(&DMatrix::zeros(3, 3), DEFAULT_TOL).unwrap();
        assert!(data.exact);
        assert_eq!(data.chains.len(), 3);
        assert!(data
            .chains
            .iter()
            .all(|ch| ch.m() == 1 && ch.lambda == c(0.0)));
        let span = DMatrix::from_fn(3, 3, |i, j| data.chains[j].vectors[0][i].re);
        assert_eq!(span.rank(1e-12), 3);
    }

    #[test]
    fn scalar_chain() {
        let b = matrix_from_rows(&[&[5.0]]);
        let chain = build_chain(&b, c(5.0), 1, DEFAULT_TOL).unwrap();
        assert_eq!(chain.vectors, vec![vec![c(1.0)]]);
    }

    #[test]
    fn chain_of_nilpotent_block_is_k_scaled() {
        // B = J₃(0)ᵀ
        let a = matrix_from_rows(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &[0.0, 0.0, 0.0]]);
        let data = spectrum_of_transpose(&a, DEFAULT_TOL).unwrap();
        assert_eq!(data.chains.len(), 1);
        assert_eq!(data.chains[0].m(), 3);
        assert_eq!(data.chains[0].residual(&a.transpose()), 0.0);
    }

    #[test]
    fn rotation_is_conjugate_pair() {
        let a = matrix_from_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]);
        let data = spectrum_of_transpose(&a, DEFAULT_TOL).unwrap();
        assert!(data.exact);
        assert_eq!(data.chains.len(), 2);
        assert_eq!(data.chains[0].lambda, Complex64::new(0.0, -1.0));
        assert_eq!(data.chains[1].lambda, Complex64::new(0.0, 1.0));
        assert_eq!(data.chains[0], data.chains[1].conj());
    }

    #[test]
    fn irrational_spectrum_uses_float_path() {
        let a = matrix_from_rows(&[&[2.0, 1.0], &[1.0, 0.0]]);
        let data = spectrum_of_transpose(&a, DEFAULT_TOL).unwrap();
        assert!(!data.exact);
        for ch in &data.chains {
            assert!(ch.residual(&a.transpose()) < 1e-12);
            assert_eq!(ch.vectors[0][1], c(1.0));
        }
    }

    #[test]
    fn defective_irrational_block() {
        // B with a double eigenvalue √2 and one Jordan block
        let s = std::f64::consts::SQRT_2;
        let a = matrix_from_rows(&[&[s, 0.0], &[1.0, s]]);
        let data = spectrum_of_transpose(&a, DEFAULT_TOL).unwrap();
        assert_eq!(data.chains.len(), 1);
        assert_eq!(data.chains[0].m(), 2);
        assert!(data.chains[0].residual(&a.transpose()) < 1e-10);
    }

    #[test]
    fn non_commuting_family_is_rejected() {
        let a = matrix_from_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        let b = matrix_from_rows(&[&[0.0, 0.0], &[1.0, 0.0]]);
        assert!(common_spectrum(&[a, b], DEFAULT_TOL).is_err());
    }

    #[test]
    fn divisor_formatting() {
        assert_eq!(format_divisor(c(0.0), 1, "λ"), "λ");
        assert_eq!(format_divisor(c(2.0), 3, "λ"), "(λ−2)³");
        assert_eq!(format_divisor(c(-1.0), 1, "λ"), "λ+1");
    }
}
