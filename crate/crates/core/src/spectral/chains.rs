//! Jordan chain extraction shared by the exact and floating-point paths.

use nalgebra::{ComplexField, DMatrix};
use num_complex::Complex64;
use num_traits::Zero;

use super::exact::{self, GQ};
use crate::error::{FintError, Result};

pub(crate) type Mat<E> = Vec<Vec<E>>;

/// Arithmetic backend for the chain algorithm.
pub(crate) trait Engine {
    type E: Clone;

    fn mul(&self, a: &Mat<Self::E>, b: &Mat<Self::E>) -> Mat<Self::E>;
    fn apply(&self, a: &Mat<Self::E>, v: &[Self::E]) -> Vec<Self::E>;
    /// Basis of `ker a`, where `a` is the `power`-th power of the shifted
    /// matrix.
    fn nullspace(&self, a: &Mat<Self::E>, power: usize) -> Vec<Vec<Self::E>>;
    /// True when `v` is outside `span(base)`.
    fn independent(&self, base: &[Vec<Self::E>], v: &[Self::E]) -> bool;
    fn scale(&self, v: &[Self::E], k: f64) -> Vec<Self::E>;
    /// Extra acceptance test on the finished chains of one eigenvalue.
    fn check_conditioning(&self, _vectors: &[Vec<Self::E>]) -> Result<()> {
        Ok(())
    }
}

pub(crate) struct ExactEngine;

impl Engine for ExactEngine {
    type E = GQ;

    fn mul(&self, a: &Mat<GQ>, b: &Mat<GQ>) -> Mat<GQ> {
        exact::mat_mul(a, b)
    }

    fn apply(&self, a: &Mat<GQ>, v: &[GQ]) -> Vec<GQ> {
        exact::mat_vec(a, v)
    }

    fn nullspace(&self, a: &Mat<GQ>, _power: usize) -> Vec<Vec<GQ>> {
        exact::nullspace(a)
    }

    fn independent(&self, base: &[Vec<GQ>], v: &[GQ]) -> bool {
        if v.iter().all(|z| z.is_zero()) {
            return false;
        }
        let mut rows = base.to_vec();
        let before = exact::rank(&rows);
        rows.push(v.to_vec());
        exact::rank(&rows) > before
    }

    fn scale(&self, v: &[GQ], k: f64) -> Vec<GQ> {
        let factor = exact::gq(exact::to_rational(k).expect("integer factor"));
        v.iter().map(|z| z * &factor).collect()
    }
}

/// SVD-based backend over `f64` or `Complex64`.
pub(crate) struct FloatEngine {
    pub tol: f64,
    /// `‖B‖ + |λ|`, the natural size of the shifted matrix.
    pub scale: f64,
}

fn to_dmatrix<T: ComplexField<RealField = f64> + Copy>(rows: &[Vec<T>]) -> DMatrix<T> {
    let r = rows.len();
    let c = rows.first().map_or(0, |x| x.len());
    DMatrix::from_fn(r, c, |i, j| rows[i][j])
}

fn singular_values<T: ComplexField<RealField = f64> + Copy>(rows: &[Vec<T>]) -> Vec<f64> {
    if rows.is_empty() {
        return Vec::new();
    }
    to_dmatrix(rows).singular_values().iter().copied().collect()
}

pub(crate) fn float_rank<T: ComplexField<RealField = f64> + Copy>(
    rows: &[Vec<T>],
    tol: f64,
) -> usize {
    let normalized: Vec<Vec<T>> = rows
        .iter()
        .filter_map(|r| {
            let norm = r.iter().map(|z| z.modulus_squared()).sum::<f64>().sqrt();
            (norm > 0.0).then(|| r.iter().map(|z| z.unscale(norm)).collect())
        })
        .collect();
    let sv = singular_values(&normalized);
    let max = sv.iter().copied().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > tol * max).count()
}

/// Null space basis from the SVD: right singular vectors whose singular
/// values fall below `threshold`.
pub(crate) fn float_nullspace<T: ComplexField<RealField = f64> + Copy>(
    rows: &[Vec<T>],
    threshold: f64,
) -> Vec<Vec<T>> {
    let m = to_dmatrix(rows);
    let n = m.ncols();
    let (r, c) = m.shape();
    // pad to square so the SVD returns a full set of right singular vectors
    let padded = if r < c {
        let mut p = DMatrix::zeros(c, c);
        p.view_mut((0, 0), (r, c)).copy_from(&m);
        p
    } else {
        m
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut out = Vec::new();
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s <= threshold {
            out.push((0..n).map(|j| v_t[(i, j)].conjugate()).collect());
        }
    }
    out
}

impl FloatEngine {
    fn threshold(&self, power: usize) -> f64 {
        self.tol * self.scale.max(1e-300).powi(power as i32)
    }
}

macro_rules! float_engine {
    ($t:ty) => {
        impl Engine for (FloatEngine, std::marker::PhantomData<$t>) {
            type E = $t;

            fn mul(&self, a: &Mat<$t>, b: &Mat<$t>) -> Mat<$t> {
                let p = to_dmatrix(a) * to_dmatrix(b);
                (0..p.nrows())
                    .map(|i| p.row(i).iter().copied().collect())
                    .collect()
            }

            fn apply(&self, a: &Mat<$t>, v: &[$t]) -> Vec<$t> {
                a.iter()
                    .map(|row| {
                        row.iter()
                            .zip(v)
                            .fold(<$t>::zero(), |acc, (x, y)| acc + *x * *y)
                    })
                    .collect()
            }

            fn nullspace(&self, a: &Mat<$t>, power: usize) -> Vec<Vec<$t>> {
                float_nullspace(a, self.0.threshold(power))
            }

            fn independent(&self, base: &[Vec<$t>], v: &[$t]) -> bool {
                let mut rows = base.to_vec();
                let before = float_rank(&rows, self.0.tol);
                rows.push(v.to_vec());
                float_rank(&rows, self.0.tol) > before
            }

            fn scale(&self, v: &[$t], k: f64) -> Vec<$t> {
                v.iter().map(|z| z.scale(k)).collect()
            }

            fn check_conditioning(&self, vectors: &[Vec<$t>]) -> Result<()> {
                let normalized: Vec<Vec<$t>> = vectors
                    .iter()
                    .map(|r| {
                        let norm = r.iter().map(|z| z.modulus_squared()).sum::<f64>().sqrt();
                        r.iter().map(|z| z.unscale(norm)).collect()
                    })
                    .collect();
                let sv = singular_values(&normalized);
                let max = sv.iter().copied().fold(0.0, f64::max);
                let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
                if !(min > self.0.tol * max) {
                    return Err(FintError::Spectral(format!(
                        "Jordan structure is ill-conditioned (σmin/σmax = {:.2e})",
                        min / max
                    )));
                }
                Ok(())
            }
        }
    };
}

float_engine!(f64);
float_engine!(Complex64);

pub(crate) fn float_engine<T>(tol: f64, scale: f64) -> (FloatEngine, std::marker::PhantomData<T>) {
    (FloatEngine { tol, scale }, std::marker::PhantomData)
}

/// Chains of `n_mat = B − λE` for an eigenvalue of algebraic multiplicity
/// `mult`, in the k-scaled convention `N·ν^k = k·ν^{k−1}`.
///
/// Longest chains come first; within one length the order follows the
/// kernel basis.
pub(crate) fn jordan_chains<En: Engine>(
    en: &En,
    n_mat: &Mat<En::E>,
    mult: usize,
) -> Result<Vec<Vec<Vec<En::E>>>> {
    let mut kernels: Vec<Vec<Vec<En::E>>> = vec![Vec::new()];
    let mut power = n_mat.clone();
    loop {
        let k = kernels.len();
        let ker = en.nullspace(&power, k);
        let d = ker.len();
        let prev = kernels.last().map_or(0, |v| v.len());
        kernels.push(ker);
        if d == mult {
            break;
        }
        if d > mult {
            return Err(FintError::Spectral(format!(
                "kernel of dimension {d} exceeds the multiplicity {mult}"
            )));
        }
        if d == prev || k >= mult {
            return Err(FintError::Spectral(format!(
                "generalized eigenspace stalls at dimension {d} of {mult}"
            )));
        }
        power = en.mul(n_mat, &power);
    }
    let depth = kernels.len() - 1;
    let dims: Vec<usize> = kernels.iter().map(|k| k.len()).collect();
    let mut tops: Vec<(Vec<En::E>, usize)> = Vec::new();
    for size in (1..=depth).rev() {
        let at_least = dims[size] - dims[size - 1];
        let longer = if size < depth {
            dims[size + 1] - dims[size]
        } else {
            0
        };
        let need = at_least
            .checked_sub(longer)
            .ok_or_else(|| FintError::Spectral("inconsistent kernel dimensions".into()))?;
        let mut base = kernels[size - 1].clone();
        for (u, s) in &tops {
            let mut v = u.clone();
            for _ in 0..(s - size) {
                v = en.apply(n_mat, &v);
            }
            base.push(v);
        }
        let mut accepted = 0;
        for cand in &kernels[size] {
            if accepted == need {
                break;
            }
            if en.independent(&base, cand) {
                base.push(cand.clone());
                tops.push((cand.clone(), size));
                accepted += 1;
            }
        }
        if accepted < need {
            return Err(FintError::Spectral(format!(
                "found {accepted} of {need} chains of length {size}"
            )));
        }
    }
    let mut chains = Vec::with_capacity(tops.len());
    let mut all = Vec::new();
    for (u, s) in tops {
        let mut w = vec![u; s];
        for j in (1..s).rev() {
            w[j - 1] = en.apply(n_mat, &w[j]);
        }
        let mut factorial = 1.0;
        let chain: Vec<Vec<En::E>> = w
            .iter()
            .enumerate()
            .map(|(j, v)| {
                if j > 0 {
                    factorial *= j as f64;
                }
                en.scale(v, factorial)
            })
            .collect();
        all.extend(chain.iter().cloned());
        chains.push(chain);
    }
    en.check_conditioning(&all)?;
    Ok(chains)
}
