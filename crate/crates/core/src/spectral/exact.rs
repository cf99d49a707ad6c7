//! Exact arithmetic over the Gaussian rationals.

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_complex::Complex;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Gaussian rational `a + bi`.
pub type GQ = Complex<BigRational>;
/// Gaussian integer.
pub type GZ = Complex<BigInt>;

const MAX_DENOMINATOR: i64 = 1_000_000;
const DIVISOR_SEARCH_LIMIT: i64 = 1_000_000;

/// Continued-fraction recovery of a small-denominator rational whose
/// nearest double is exactly `v`.
pub fn to_rational(v: f64) -> Option<BigRational> {
    if !v.is_finite() {
        return None;
    }
    if v == v.trunc() && v.abs() < 9.0e15 {
        return Some(BigRational::from_integer(BigInt::from(v as i64)));
    }
    let (mut p0, mut q0, mut p1, mut q1) = (0i128, 1i128, 1i128, 0i128);
    let mut x = v.abs();
    for _ in 0..64 {
        let a = x.floor();
        if a > 1e18 {
            break;
        }
        let a = a as i128;
        let (p2, q2) = (a * p1 + p0, a * q1 + q0);
        if q2 > MAX_DENOMINATOR as i128 {
            break;
        }
        if (p2 as f64) / (q2 as f64) == v.abs() {
            let r = BigRational::new(BigInt::from(p2), BigInt::from(q2));
            return Some(if v < 0.0 { -r } else { r });
        }
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
        let frac = x - x.floor();
        if frac == 0.0 {
            break;
        }
        x = 1.0 / frac;
    }
    None
}

pub fn gq(re: BigRational) -> GQ {
    Complex::new(re, BigRational::zero())
}

pub fn gq_to_c64(z: &GQ) -> num_complex::Complex64 {
    num_complex::Complex64::new(
        z.re.to_f64().unwrap_or(f64::NAN),
        z.im.to_f64().unwrap_or(f64::NAN),
    )
}

pub fn rational_matrix(a: &DMatrix<f64>) -> Option<Vec<Vec<BigRational>>> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| to_rational(a[(i, j)])).collect())
        .collect()
}

pub fn transpose<T: Clone>(m: &[Vec<T>]) -> Vec<Vec<T>> {
    let rows = m.len();
    let cols = m.first().map_or(0, |r| r.len());
    (0..cols)
        .map(|j| (0..rows).map(|i| m[i][j].clone()).collect())
        .collect()
}

pub fn mat_mul(a: &[Vec<GQ>], b: &[Vec<GQ>]) -> Vec<Vec<GQ>> {
    let n = a.len();
    let k = b.len();
    let m = b.first().map_or(0, |r| r.len());
    let mut out = vec![vec![GQ::zero(); m]; n];
    for i in 0..n {
        for l in 0..k {
            if a[i][l].is_zero() {
                continue;
            }
            for j in 0..m {
                if !b[l][j].is_zero() {
                    out[i][j] = &out[i][j] + &a[i][l] * &b[l][j];
                }
            }
        }
    }
    out
}

pub fn mat_vec(a: &[Vec<GQ>], v: &[GQ]) -> Vec<GQ> {
    a.iter()
        .map(|row| {
            row.iter()
                .zip(v)
                .fold(GQ::zero(), |acc, (x, y)| acc + x * y)
        })
        .collect()
}

/// `m − λI`.
pub fn shift(m: &[Vec<GQ>], lambda: &GQ) -> Vec<Vec<GQ>> {
    let mut out = m.to_vec();
    for (i, row) in out.iter_mut().enumerate() {
        row[i] = &row[i] - lambda;
    }
    out
}

/// Reduced row echelon form in place; returns the pivot columns.
pub fn rref(m: &mut [Vec<GQ>]) -> Vec<usize> {
    let rows = m.len();
    let cols = m.first().map_or(0, |r| r.len());
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let Some(p) = (r..rows).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(r, p);
        let inv = GQ::one() / &m[r][c];
        for j in c..cols {
            m[r][j] = &m[r][j] * &inv;
        }
        for i in 0..rows {
            if i != r && !m[i][c].is_zero() {
                let factor = m[i][c].clone();
                for j in c..cols {
                    let delta = &factor * &m[r][j];
                    m[i][j] = &m[i][j] - delta;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    pivots
}

pub fn rank(m: &[Vec<GQ>]) -> usize {
    rref(&mut m.to_vec()).len()
}

/// Basis of the right null space, one vector per free column.
pub fn nullspace(m: &[Vec<GQ>]) -> Vec<Vec<GQ>> {
    let cols = m.first().map_or(0, |r| r.len());
    let mut r = m.to_vec();
    let pivots = rref(&mut r);
    (0..cols)
        .filter(|c| !pivots.contains(c))
        .map(|free| {
            let mut v = vec![GQ::zero(); cols];
            v[free] = GQ::one();
            for (row, &pc) in pivots.iter().enumerate() {
                v[pc] = -r[row][free].clone();
            }
            v
        })
        .collect()
}

/// Coefficients `[1, c₁, …, cₙ]` of `det(λE − M)` by Faddeev–LeVerrier.
pub fn char_poly(m: &[Vec<BigRational>]) -> Vec<BigRational> {
    let n = m.len();
    let mut coeffs = vec![BigRational::one()];
    let mut mk = vec![vec![BigRational::zero(); n]; n];
    for k in 1..=n {
        let mut next = vec![vec![BigRational::zero(); n]; n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = BigRational::zero();
                for l in 0..n {
                    if !m[i][l].is_zero() && !mk[l][j].is_zero() {
                        acc += &m[i][l] * &mk[l][j];
                    }
                }
                next[i][j] = acc;
            }
            next[i][i] += &coeffs[k - 1];
        }
        let mut trace = BigRational::zero();
        for i in 0..n {
            for l in 0..n {
                trace += &m[i][l] * &next[l][i];
            }
        }
        coeffs.push(-trace / BigRational::from_integer(BigInt::from(k)));
        mk = next;
    }
    coeffs
}

fn horner(p: &[GZ], r: &GZ) -> GZ {
    p.iter().fold(GZ::zero(), |acc, c| acc * r + c)
}

fn deflate(p: &[GZ], r: &GZ) -> Vec<GZ> {
    let mut out = Vec::with_capacity(p.len() - 1);
    let mut acc = GZ::zero();
    for c in &p[..p.len() - 1] {
        acc = acc * r + c;
        out.push(acc.clone());
    }
    out
}

/// Exact eigenvalue data of a rational matrix.
#[derive(Debug, Clone)]
pub struct ExactRoots {
    /// Common denominator `D` of the matrix entries.
    pub scale: BigInt,
    /// Distinct eigenvalues with algebraic multiplicities.
    pub roots: Vec<(GQ, usize)>,
    /// `det(λE − A)` coefficients, leading first.
    pub char_poly: Vec<BigRational>,
}

/// All eigenvalues of `a` when they are Gaussian rationals, found by
/// exact verification of rounded numeric candidates and divisors of the
/// constant term.
pub fn exact_roots(a: &[Vec<BigRational>]) -> Option<ExactRoots> {
    let n = a.len();
    let mut scale = BigInt::one();
    for row in a {
        for v in row {
            scale = scale.lcm(v.denom());
        }
    }
    let d = BigRational::from_integer(scale.clone());
    let scaled: Vec<Vec<BigRational>> = a
        .iter()
        .map(|r| r.iter().map(|v| v * &d).collect())
        .collect();
    let poly_q = char_poly(&scaled);
    if poly_q.iter().any(|c| !c.is_integer()) {
        return None;
    }
    let mut poly: Vec<GZ> = poly_q
        .iter()
        .map(|c| GZ::new(c.to_integer(), BigInt::zero()))
        .collect();

    let mut candidates: Vec<GZ> = vec![GZ::zero()];
    let float = DMatrix::from_fn(n, n, |i, j| scaled[i][j].to_f64().unwrap_or(f64::NAN));
    if float.iter().all(|v| v.is_finite()) {
        for z in super::eigenvalues(&float).unwrap_or_default().iter() {
            if z.re.abs() < 1e15 && z.im.abs() < 1e15 {
                let c = GZ::new(
                    BigInt::from(z.re.round() as i64),
                    BigInt::from(z.im.round() as i64),
                );
                if !candidates.contains(&c) {
                    candidates.push(c);
                }
            }
        }
    }
    let mut roots: Vec<(GZ, usize)> = Vec::new();
    let try_root = |r: &GZ, poly: &mut Vec<GZ>, roots: &mut Vec<(GZ, usize)>| {
        while poly.len() > 1 && horner(poly, r).is_zero() {
            *poly = deflate(poly, r);
            match roots.iter_mut().find(|(x, _)| x == r) {
                Some(entry) => entry.1 += 1,
                None => roots.push((r.clone(), 1)),
            }
        }
    };
    for c in &candidates {
        try_root(c, &mut poly, &mut roots);
    }
    if poly.len() > 1 {
        let c0 = poly.last().unwrap();
        if c0.im.is_zero() {
            if let Some(c0) = c0.re.abs().to_i64() {
                if c0 > 0 && c0 <= DIVISOR_SEARCH_LIMIT {
                    for k in 1..=c0 {
                        if c0 % k == 0 {
                            for s in [k, -k] {
                                try_root(
                                    &GZ::new(BigInt::from(s), BigInt::zero()),
                                    &mut poly,
                                    &mut roots,
                                );
                            }
                        }
                    }
                }
            }
        }
    }
    if poly.len() > 1 {
        return None;
    }
    let roots = roots
        .into_iter()
        .map(|(r, m)| {
            (
                Complex::new(
                    BigRational::new(r.re, scale.clone()),
                    BigRational::new(r.im, scale.clone()),
                ),
                m,
            )
        })
        .collect();
    let char_poly = poly_q
        .iter()
        .enumerate()
        .map(|(k, c)| c / BigRational::from_integer(num_traits::pow(scale.clone(), k)))
        .collect();
    Some(ExactRoots {
        scale,
        roots,
        char_poly,
    })
}

/// Scale a set of vectors by one common complex factor so the given entry
/// becomes 1, then clear denominators and divide by the integer gcd.
pub fn normalize_integer(vectors: &mut [Vec<GQ>], pivot: &GQ) {
    let inv = GQ::one() / pivot;
    for v in vectors.iter_mut() {
        for z in v.iter_mut() {
            *z = &*z * &inv;
        }
    }
    let mut lcm = BigInt::one();
    for v in vectors.iter() {
        for z in v {
            lcm = lcm.lcm(z.re.denom()).lcm(z.im.denom());
        }
    }
    let l = BigRational::from_integer(lcm);
    let mut gcd = BigInt::zero();
    for v in vectors.iter_mut() {
        for z in v.iter_mut() {
            *z = Complex::new(&z.re * &l, &z.im * &l);
            gcd = gcd.gcd(&z.re.to_integer()).gcd(&z.im.to_integer());
        }
    }
    if !gcd.is_zero() && !gcd.is_one() {
        let g = BigRational::from_integer(gcd);
        for v in vectors.iter_mut() {
            for z in v.iter_mut() {
                *z = Complex::new(&z.re / &g, &z.im / &g);
            }
        }
    }
}
