//! Numeric functional independence.

use crate::error::{FintError, Result};
use crate::expr::{numeric_partial, EvalPoint, IntegralExpr, Var};

/// Relative pivot threshold of the rank decision.
pub const RANK_THRESHOLD: f64 = 1e-6;

/// `k×(n+1)` Jacobian `[∂F/∂t, ∂F/∂x]` by central differences.
pub fn jacobian(fs: &[IntegralExpr], p: &EvalPoint, quad_tol: f64) -> Result<Vec<Vec<f64>>> {
    fs.iter()
        .map(|f| {
            let mut row = Vec::with_capacity(p.x.len() + 1);
            row.push(numeric_partial(f, p, Var::T, quad_tol)?);
            for i in 0..p.x.len() {
                row.push(numeric_partial(f, p, Var::X(i), quad_tol)?);
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| match e {
            FintError::Domain(m) => {
                FintError::domain(format!("rank point too close to a singular set: {m}"))
            }
            other => other,
        })
}

/// Rank of a dense matrix by full-pivot elimination; rows are normalized
/// first and pivots below `threshold × largest pivot` count as zero.
pub fn matrix_rank(rows: &[Vec<f64>], threshold: f64) -> usize {
    let mut m: Vec<Vec<f64>> = rows
        .iter()
        .filter_map(|r| {
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            (norm > 0.0 && norm.is_finite()).then(|| r.iter().map(|v| v / norm).collect())
        })
        .collect();
    let rows_n = m.len();
    let cols = m.first().map_or(0, |r| r.len());
    let mut rank = 0;
    let mut first_pivot = 0.0;
    for step in 0..rows_n.min(cols) {
        let (mut pr, mut pc, mut best) = (step, step, 0.0);
        for (i, row) in m.iter().enumerate().skip(step) {
            for (j, v) in row.iter().enumerate().skip(step) {
                if v.abs() > best {
                    best = v.abs();
                    pr = i;
                    pc = j;
                }
            }
        }
        if step == 0 {
            first_pivot = best;
        }
        if best == 0.0 || best <= threshold * first_pivot {
            break;
        }
        m.swap(step, pr);
        for row in m.iter_mut() {
            row.swap(step, pc);
        }
        let pivot_row = m[step].clone();
        for row in m.iter_mut().skip(step + 1) {
            let factor = row[step] / pivot_row[step];
            for (v, p) in row.iter_mut().zip(&pivot_row).skip(step) {
                *v -= factor * p;
            }
        }
        rank += 1;
    }
    rank
}

/// Numeric rank of the Jacobian of `fs` at `p`.
pub fn independence_rank(fs: &[IntegralExpr], p: &EvalPoint, quad_tol: f64) -> Result<usize> {
    if fs.is_empty() {
        return Ok(0);
    }
    Ok(matrix_rank(&jacobian(fs, p, quad_tol)?, RANK_THRESHOLD))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dependent_triple() {
        let fs = vec![
            IntegralExpr::lin(vec![1.0, 0.0]),
            IntegralExpr::lin(vec![0.0, 1.0]),
            IntegralExpr::lin(vec![1.0, 1.0]),
        ];
        let p = EvalPoint::new(0.0, vec![0.3, 0.4]);
        assert_eq!(independence_rank(&fs, &p, 1e-10).unwrap(), 2);
    }

    #[test]
    fn constant_has_rank_zero() {
        let fs = vec![IntegralExpr::constant(4.0)];
        assert_eq!(
            independence_rank(&fs, &EvalPoint::new(0.0, vec![1.0]), 1e-10).unwrap(),
            0
        );
    }

    #[test]
    fn nonlinear_dependence_is_detected() {
        let u = IntegralExpr::lin(vec![1.0, 2.0]);
        let fs = vec![u.clone(), u.clone() * u];
        assert_eq!(
            independence_rank(&fs, &EvalPoint::new(0.0, vec![0.5, 0.1]), 1e-10).unwrap(),
            1
        );
    }
}
