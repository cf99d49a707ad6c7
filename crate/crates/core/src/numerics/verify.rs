//! Trajectory-based verification of constructed integrals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::ode::{integrate_trajectory, Trajectory};
use super::rank::independence_rank;
use crate::basis::BasisResult;
use crate::error::{FintError, Result};
use crate::expr::{numeric_partial, EvalPoint, IntegralExpr, Var};
use crate::system::SystemSpec;

/// Half-width of the excluded band around a vanishing denominator,
/// relative to the denominator's scale along the trajectory.
pub const SINGULAR_BAND: f64 = 1e-6;

/// Minimum `|denominator|` of sampled initial states.
pub const SAMPLE_CLEARANCE: f64 = 0.1;

const MAX_SAMPLE_TRIES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftStats {
    pub max_drift: f64,
    pub relative_drift: f64,
    pub segments: usize,
    pub crossings: usize,
    /// Samples that entered the computation.
    pub samples: usize,
}

/// Drift of `f` along `traj`, measured per maximal segment that stays out
/// of the band around every denominator of `f`.
pub fn verify_constancy(f: &IntegralExpr, traj: &Trajectory, quad_tol: f64) -> Result<DriftStats> {
    let dens = f.singular_exprs();
    let len = traj.len();
    let mut den_values: Vec<Vec<Option<f64>>> = Vec::with_capacity(dens.len());
    let mut scales = Vec::with_capacity(dens.len());
    for d in &dens {
        let vals: Vec<Option<f64>> = (0..len)
            .map(|i| d.eval(traj.times[i], &traj.states[i], quad_tol).ok())
            .collect();
        let scale = vals.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        den_values.push(vals);
        scales.push(scale);
    }

    let mut stats = DriftStats {
        max_drift: 0.0,
        relative_drift: 0.0,
        segments: 0,
        crossings: 0,
        samples: 0,
    };
    let mut reference: Option<f64> = None;
    let mut prev_signs: Vec<f64> = Vec::new();
    for i in 0..len {
        let mut inside = false;
        let mut signs = Vec::with_capacity(dens.len());
        for (vals, &scale) in den_values.iter().zip(&scales) {
            match vals[i] {
                Some(v) if v.abs() > SINGULAR_BAND * scale && v != 0.0 => signs.push(v.signum()),
                _ => inside = true,
            }
        }
        let value = if inside {
            None
        } else {
            f.eval(traj.times[i], &traj.states[i], quad_tol).ok()
        };
        let Some(value) = value else {
            reference = None;
            continue;
        };
        let crossed = reference.is_some() && signs != prev_signs;
        if crossed {
            stats.crossings += 1;
        }
        if reference.is_none() || crossed {
            reference = Some(value);
            stats.segments += 1;
        }
        prev_signs = signs;
        let f0 = reference.unwrap();
        let drift = (value - f0).abs();
        stats.max_drift = stats.max_drift.max(drift);
        stats.relative_drift = stats.relative_drift.max(drift / (1.0 + f0.abs()));
        stats.samples += 1;
    }
    if stats.samples == 0 {
        return Err(FintError::Verification(format!(
            "trajectory lies entirely in the singular band of `{f}`"
        )));
    }
    Ok(stats)
}

/// Scaled Lie derivative `|∂ₜF + (A(t)x+f)·∇F| / (1 + |∂ₜF| + Σ|∂ᵢF·ẋᵢ|)`.
pub fn lie_residual(
    f: &IntegralExpr,
    spec: &SystemSpec,
    p: &EvalPoint,
    quad_tol: f64,
) -> Result<f64> {
    let mut v = vec![0.0; spec.n];
    spec.rhs(p.t, &p.x, &mut v)?;
    let dt = numeric_partial(f, p, Var::T, quad_tol)?;
    let mut total = dt;
    let mut scale = 1.0 + dt.abs();
    for (i, vi) in v.iter().enumerate() {
        let term = numeric_partial(f, p, Var::X(i), quad_tol)? * vi;
        total += term;
        scale += term.abs();
    }
    Ok(total.abs() / scale)
}

/// Uniform point of the unit ball in `ℝⁿ`.
pub fn sample_unit_ball<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    if n <= 6 {
        loop {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let r2: f64 = x.iter().map(|v| v * v).sum();
            if r2 > 0.0 && r2 <= 1.0 {
                return x;
            }
        }
    }
    let g: Vec<f64> = (0..n).map(|_| gaussian(rng)).collect();
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let r = rng.random::<f64>().powf(1.0 / n as f64);
    g.iter().map(|v| v / norm * r).collect()
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Initial state in the unit ball with every denominator above
/// [`SAMPLE_CLEARANCE`] at `t0`.
pub fn sample_initial_state<R: Rng>(
    rng: &mut R,
    n: usize,
    dens: &[IntegralExpr],
    t0: f64,
    quad_tol: f64,
) -> Result<Vec<f64>> {
    for _ in 0..MAX_SAMPLE_TRIES {
        let x = sample_unit_ball(rng, n);
        let clear = dens.iter().all(|d| {
            d.eval(t0, &x, quad_tol)
                .map(|v| v.abs() > SAMPLE_CLEARANCE)
                .unwrap_or(false)
        });
        if clear {
            return Ok(x);
        }
    }
    Err(FintError::Verification(format!(
        "no initial state with all denominators above {SAMPLE_CLEARANCE} after {MAX_SAMPLE_TRIES} draws"
    )))
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub trajectories: usize,
    /// Gate on the relative drift.
    pub tol: f64,
    pub seed: u64,
    pub rk_tol: f64,
    pub quad_tol: f64,
    /// Overrides the spec window.
    pub window: Option<(f64, f64)>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            trajectories: 20,
            tol: 1e-7,
            seed: 0,
            rk_tol: 1e-10,
            quad_tol: 1e-10,
            window: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IntegralReport {
    pub index: usize,
    pub expr: String,
    pub provenance: String,
    pub max_drift: f64,
    pub relative_drift: f64,
    pub lie_residual: f64,
    pub crossings: usize,
    pub segments: usize,
    pub skipped_trajectories: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub integrals: Vec<IntegralReport>,
    pub rank: usize,
    pub expected_rank: usize,
    pub rank_point_t: f64,
    pub rank_point_x: Vec<f64>,
    pub trajectories: usize,
    pub window: (f64, f64),
    pub tol: f64,
    pub pass: bool,
}

impl VerificationReport {
    pub fn offenders(&self) -> Vec<&IntegralReport> {
        self.integrals.iter().filter(|r| !r.pass).collect()
    }
}

/// Integrate random trajectories and measure drift of every integral, plus
/// the numeric rank at the first sampled point.
pub fn verify_basis(
    spec: &SystemSpec,
    basis: &BasisResult,
    opts: &VerifyOptions,
) -> Result<VerificationReport> {
    let window = opts.window.unwrap_or(spec.window);
    let exprs = basis.exprs();
    let mut dens: Vec<IntegralExpr> = Vec::new();
    let mut seen: Vec<String> = Vec::new();
    for integral in &basis.integrals {
        for d in &integral.singular.exprs {
            let key = d.to_string();
            if !seen.contains(&key) {
                seen.push(key);
                dens.push(d.clone());
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let count = opts.trajectories.max(1);
    let starts = (0..count)
        .map(|_| sample_initial_state(&mut rng, spec.n, &dens, window.0, opts.quad_tol))
        .collect::<Result<Vec<_>>>()?;

    let per_traj: Vec<Vec<Option<DriftStats>>> = starts
        .par_iter()
        .map(|x0| {
            let traj = integrate_trajectory(spec, x0, window, opts.rk_tol)?;
            Ok(exprs
                .iter()
                .map(|f| verify_constancy(f, &traj, opts.quad_tol).ok())
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;

    let rank_point = EvalPoint::new(window.0, starts[0].clone());
    let rank = independence_rank(&exprs, &rank_point, opts.quad_tol)?;

    let mut reports = Vec::with_capacity(exprs.len());
    for (k, integral) in basis.integrals.iter().enumerate() {
        let mut r = IntegralReport {
            index: k + 1,
            expr: integral.expr.to_string(),
            provenance: integral.theorem.clone(),
            max_drift: 0.0,
            relative_drift: 0.0,
            lie_residual: 0.0,
            crossings: 0,
            segments: 0,
            skipped_trajectories: 0,
            pass: true,
        };
        for stats in per_traj.iter().map(|row| row[k]) {
            match stats {
                Some(s) => {
                    r.max_drift = r.max_drift.max(s.max_drift);
                    r.relative_drift = r.relative_drift.max(s.relative_drift);
                    r.crossings += s.crossings;
                    r.segments += s.segments;
                }
                None => r.skipped_trajectories += 1,
            }
        }
        r.lie_residual = starts
            .iter()
            .take(5)
            .filter_map(|x0| {
                lie_residual(
                    &integral.expr,
                    spec,
                    &EvalPoint::new(window.0, x0.clone()),
                    opts.quad_tol,
                )
                .ok()
            })
            .fold(0.0, f64::max);
        r.pass = r.skipped_trajectories < count && r.relative_drift <= opts.tol;
        reports.push(r);
    }
    let pass = reports.iter().all(|r| r.pass) && rank == exprs.len();
    Ok(VerificationReport {
        integrals: reports,
        rank,
        expected_rank: exprs.len(),
        rank_point_t: rank_point.t,
        rank_point_x: rank_point.x,
        trajectories: count,
        window,
        tol: opts.tol,
        pass,
    })
}
