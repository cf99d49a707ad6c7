//! Dormand–Prince 5(4) integration with output at uniform sample times.

use crate::error::{FintError, Result};
use crate::system::SystemSpec;

/// Minimum number of output samples.
pub const MIN_SAMPLES: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub steps: usize,
    pub rejected: usize,
    /// Largest accepted scaled local error estimate.
    pub max_error: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Fifth-order weights minus fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrate `x' = rhs(t, x)` from `t0` to `t1` and record the state at
/// `samples` (at least [`MIN_SAMPLES`]) equally spaced times.
pub fn dopri5<F>(
    mut rhs: F,
    x0: &[f64],
    t0: f64,
    t1: f64,
    samples: usize,
    tol: f64,
) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    if !(t1 > t0) {
        return Err(FintError::Integration(format!(
            "empty interval [{t0}, {t1}]"
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(FintError::Integration("non-finite initial state".into()));
    }
    let n = x0.len();
    let count = samples.max(MIN_SAMPLES);
    let span = t1 - t0;
    let sample_time = |k: usize| {
        if k + 1 == count {
            t1
        } else {
            t0 + span * k as f64 / (count - 1) as f64
        }
    };

    let mut traj = Trajectory {
        times: vec![t0],
        states: vec![x0.to_vec()],
        steps: 0,
        rejected: 0,
        max_error: 0.0,
    };
    let mut t = t0;
    let mut x = x0.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut stage = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    rhs(t, &x, &mut k[0])?;
    let mut h = span / (count - 1) as f64;

    for target_index in 1..count {
        let target = sample_time(target_index);
        while t < target {
            let remaining = target - t;
            let clamped = h >= remaining;
            let step = if clamped { remaining } else { h };
            if step <= 1e-14 * (1.0 + t.abs()) && !clamped {
                return Err(FintError::Integration(format!(
                    "step size collapsed at t = {t}"
                )));
            }
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = x[i];
                    for (j, kj) in k.iter().enumerate().take(s) {
                        acc += step * A[s][j] * kj[i];
                    }
                    stage[i] = acc;
                }
                rhs(t + C[s] * step, &stage, &mut k[s])?;
            }
            // the last stage is evaluated at the fifth-order solution
            x_new.copy_from_slice(&stage);
            let mut err = 0.0;
            for i in 0..n {
                let mut e = 0.0;
                for (j, kj) in k.iter().enumerate() {
                    e += E[j] * kj[i];
                }
                let scale = tol + tol * x[i].abs().max(x_new[i].abs());
                err += (step * e / scale).powi(2);
            }
            let err = if n == 0 { 0.0 } else { (err / n as f64).sqrt() };
            if !err.is_finite() {
                return Err(FintError::Integration(format!(
                    "non-finite state near t = {t}"
                )));
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if err <= 1.0 {
                t = if clamped { target } else { t + step };
                x.copy_from_slice(&x_new);
                let last = k[6].clone();
                k[0] = last;
                traj.steps += 1;
                traj.max_error = traj.max_error.max(err);
                if !clamped || factor < 1.0 {
                    h = step * factor;
                }
            } else {
                traj.rejected += 1;
                h = step * factor;
            }
        }
        traj.times.push(target);
        traj.states.push(x.clone());
    }
    Ok(traj)
}

/// Trajectory of the system from `x0` over `window`.
pub fn integrate_trajectory(
    spec: &SystemSpec,
    x0: &[f64],
    window: (f64, f64),
    tol: f64,
) -> Result<Trajectory> {
    if x0.len() != spec.n {
        return Err(FintError::Input(format!(
            "initial state has length {}, expected {}",
            x0.len(),
            spec.n
        )));
    }
    dopri5(
        |t, x, out| spec.rhs(t, x, out),
        x0,
        window.0,
        window.1,
        MIN_SAMPLES,
        tol,
    )
}
