//! Test-side oracles shared by the integration tests. The RK4 path, drift
//! and eigenvalue helpers do not call into the library's integrator,
//! quadrature or spectral code.

#![allow(dead_code)]

use fint_core::numerics::{verify_basis, VerifyOptions};
use fint_core::{BasisResult, DMatrix, IntegralExpr, SystemSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn spec_path(name: &str) -> String {
    format!("{}/../../specs/{name}.json", env!("CARGO_MANIFEST_DIR"))
}

pub fn load(name: &str) -> SystemSpec {
    let path = spec_path(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"));
    SystemSpec::from_json(&text).unwrap_or_else(|e| panic!("{path}: {e}"))
}

/// Classical fixed-step RK4 on `x' = A(t)x + f(t)`.
pub struct Rk4Path {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

fn field(spec: &SystemSpec, t: f64, x: &[f64]) -> Vec<f64> {
    let a = spec.coefficient(t).unwrap();
    let f = spec.forcing_at(t).unwrap();
    (0..spec.n)
        .map(|i| (0..spec.n).map(|j| a[(i, j)] * x[j]).sum::<f64>() + f[i])
        .collect()
}

fn axpy(x: &[f64], h: f64, k: &[f64]) -> Vec<f64> {
    x.iter().zip(k).map(|(a, b)| a + h * b).collect()
}

pub fn rk4(spec: &SystemSpec, x0: &[f64], window: (f64, f64), steps: usize) -> Rk4Path {
    let h = (window.1 - window.0) / steps as f64;
    let mut times = vec![window.0];
    let mut states = vec![x0.to_vec()];
    let mut x = x0.to_vec();
    for s in 0..steps {
        let t = window.0 + s as f64 * h;
        let k1 = field(spec, t, &x);
        let k2 = field(spec, t + h / 2.0, &axpy(&x, h / 2.0, &k1));
        let k3 = field(spec, t + h / 2.0, &axpy(&x, h / 2.0, &k2));
        let k4 = field(spec, t + h, &axpy(&x, h, &k3));
        for i in 0..x.len() {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        times.push(t + h);
        states.push(x.clone());
    }
    Rk4Path { times, states }
}

/// Largest `|F(t, x(t)) − F(t₀, x₀)| / (1 + |F(t₀, x₀)|)` along the path.
/// Samples near a zero of a denominator are skipped and the reference is
/// reset when a denominator changes sign.
pub fn path_drift(f: &IntegralExpr, path: &Rk4Path) -> f64 {
    let dens = f.singular_exprs();
    let mut worst: f64 = 0.0;
    let mut reference: Option<f64> = None;
    let mut signs: Vec<bool> = Vec::new();
    for (t, x) in path.times.iter().zip(&path.states) {
        let dv: Vec<f64> = dens.iter().map(|d| d.eval(*t, x, 1e-12).unwrap()).collect();
        if dv.iter().any(|v| v.abs() < 1e-3) {
            reference = None;
            continue;
        }
        let s: Vec<bool> = dv.iter().map(|v| *v > 0.0).collect();
        let value = f.eval(*t, x, 1e-12).unwrap();
        match reference {
            Some(r) if s == signs => worst = worst.max((value - r).abs() / (1.0 + r.abs())),
            _ => reference = Some(value),
        }
        signs = s;
    }
    worst
}

/// Random start in the unit ball, at least `clearance` away from every
/// denominator of `fs` at `t0`.
pub fn start_point(
    rng: &mut ChaCha8Rng,
    n: usize,
    fs: &[IntegralExpr],
    t0: f64,
    clearance: f64,
) -> Vec<f64> {
    let dens: Vec<IntegralExpr> = fs.iter().flat_map(|f| f.singular_exprs()).collect();
    loop {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        if x.iter().map(|v| v * v).sum::<f64>() > 1.0 {
            continue;
        }
        if dens.iter().all(|d| {
            d.eval(t0, &x, 1e-12)
                .map(|v| v.abs() >= clearance)
                .unwrap_or(false)
        }) {
            return x;
        }
    }
}

/// Worst RK4 drift of every integral over `count` random starts.
pub fn worst_drift(
    spec: &SystemSpec,
    fs: &[IntegralExpr],
    count: usize,
    seed: u64,
    steps: usize,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let x0 = start_point(&mut rng, spec.n, fs, spec.window.0, 0.1);
        let path = rk4(spec, &x0, spec.window, steps);
        for f in fs {
            worst = worst.max(path_drift(f, &path));
        }
    }
    worst
}

/// Library verification and the RK4 oracle must both see drift below `tol`
/// and the library must report full rank.
pub fn assert_conserved(spec: &SystemSpec, b: &BasisResult, tol: f64) {
    let opts = VerifyOptions {
        tol,
        ..VerifyOptions::default()
    };
    let r = verify_basis(spec, b, &opts).unwrap();
    assert!(r.pass, "verification failed: {:#?}", r.offenders());
    assert_eq!(r.rank, b.len());
    let oracle = worst_drift(spec, &b.exprs(), 5, 17, 2000);
    assert!(oracle < tol, "RK4 oracle drift {oracle:e}");
}

pub fn tags(b: &BasisResult) -> Vec<&str> {
    b.integrals.iter().map(|i| i.theorem.as_str()).collect()
}

pub fn rendered(b: &BasisResult) -> Vec<String> {
    b.integrals.iter().map(|i| i.expr.to_string()).collect()
}

/// Derivative of `F` along the frozen field `x ↦ Mx` by central differences,
/// relative to `‖∇F‖·‖Mx‖` estimated the same way.
pub fn frozen_derivative(f: &dyn Fn(&[f64]) -> f64, m: &DMatrix<f64>, x: &[f64]) -> f64 {
    let n = x.len();
    let v: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| m[(i, j)] * x[j]).sum())
        .collect();
    let h = 1e-5;
    let along = (f(&axpy(x, h, &v)) - f(&axpy(x, -h, &v))) / (2.0 * h);
    let mut grad2 = 0.0;
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        let d = (f(&axpy(x, h, &e)) - f(&axpy(x, -h, &e))) / (2.0 * h);
        grad2 += d * d;
    }
    let scale = grad2.sqrt() * v.iter().map(|a| a * a).sum::<f64>().sqrt();
    along.abs() / scale.max(1e-300)
}

/// Integer kernel vector of a 2×3 integer matrix via the cross product.
pub fn cross_kernel(r1: [i64; 3], r2: [i64; 3]) -> [i64; 3] {
    [
        r1[1] * r2[2] - r1[2] * r2[1],
        r1[2] * r2[0] - r1[0] * r2[2],
        r1[0] * r2[1] - r1[1] * r2[0],
    ]
}

pub fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Kernel vector divided by the gcd of its entries, sign fixed so the
/// first nonzero entry is positive.
pub fn primitive(v: [i64; 3]) -> [i64; 3] {
    let g = v.iter().fold(0, |g, &a| gcd(g, a)).max(1);
    let sign = v.iter().find(|a| **a != 0).map_or(1, |a| a.signum());
    [v[0] / g * sign, v[1] / g * sign, v[2] / g * sign]
}

/// Random integer matrix with entries in `-r..=r`.
pub fn integer_matrix(rng: &mut ChaCha8Rng, n: usize, r: i64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| rng.random_range(-r..=r) as f64)
}

/// Unimodular integer matrix as a product of unit lower and unit upper
/// triangular factors, together with its integer inverse.
pub fn unimodular(rng: &mut ChaCha8Rng, n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut l = DMatrix::<f64>::identity(n, n);
    let mut u = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for j in 0..i {
            l[(i, j)] = rng.random_range(-1..=1) as f64;
            u[(j, i)] = rng.random_range(-1..=1) as f64;
        }
    }
    let p = &l * &u;
    let inv = unit_triangular_inverse(&u, false) * unit_triangular_inverse(&l, true);
    (p, inv)
}

/// Inverse of a unit triangular integer matrix by substitution.
fn unit_triangular_inverse(m: &DMatrix<f64>, lower: bool) -> DMatrix<f64> {
    let n = m.nrows();
    let mut inv = DMatrix::<f64>::identity(n, n);
    for col in 0..n {
        let rows: Vec<usize> = if lower {
            (0..n).collect()
        } else {
            (0..n).rev().collect()
        };
        for &i in &rows {
            let mut acc = if i == col { 1.0 } else { 0.0 };
            for k in 0..n {
                let before = if lower { k < i } else { k > i };
                if before {
                    acc -= m[(i, k)] * inv[(k, col)];
                }
            }
            inv[(i, col)] = acc;
        }
    }
    inv
}

/// Minimum pairwise distance between the roots of `det(λE − A)`.
pub fn eigen_gap(a: &DMatrix<f64>) -> f64 {
    let roots = char_roots(a);
    let mut gap = f64::INFINITY;
    for i in 0..roots.len() {
        for j in 0..i {
            gap = gap.min((roots[i] - roots[j]).norm());
        }
    }
    gap
}

fn char_poly(a: &DMatrix<f64>) -> Vec<f64> {
    // Faddeev–LeVerrier: c₀ = 1, M₁ = E, cₖ = −tr(AMₖ)/k, Mₖ₊₁ = AMₖ + cₖE
    let n = a.nrows();
    let mut coeffs = vec![1.0];
    let mut m = DMatrix::<f64>::identity(n, n);
    for k in 1..=n {
        let am = a * &m;
        let c = -am.trace() / k as f64;
        coeffs.push(c);
        m = am + DMatrix::<f64>::identity(n, n) * c;
    }
    coeffs
}

/// Durand–Kerner on the Faddeev–LeVerrier coefficients.
pub fn char_roots(a: &DMatrix<f64>) -> Vec<num_complex::Complex64> {
    use num_complex::Complex64;
    let p = char_poly(a);
    let n = p.len() - 1;
    let eval = |z: Complex64| {
        p.iter()
            .fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c)
    };
    let seed = Complex64::new(0.4, 0.9);
    let mut z: Vec<Complex64> = (0..n).map(|k| seed.powu(k as u32)).collect();
    for _ in 0..2000 {
        let mut moved: f64 = 0.0;
        for i in 0..n {
            let mut den = Complex64::new(1.0, 0.0);
            for j in 0..n {
                if j != i {
                    den *= z[i] - z[j];
                }
            }
            let step = eval(z[i]) / den;
            z[i] -= step;
            moved = moved.max(step.norm());
        }
        if moved < 1e-14 {
            break;
        }
    }
    z
}
