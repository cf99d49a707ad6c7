//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Library results are cross-checked against the oracles in
//! `common` wherever one exists.

mod common;

use std::panic;
use std::process::ExitCode;
use std::time::Instant;

use common::*;
use fint_core::numerics::{verify_basis, VerificationReport, VerifyOptions};
use fint_core::spectral::spectrum_of_transpose;
use fint_core::{
    analyze, check_reduction, construct, frozen_field_residual, BasisResult, DMatrix, Integral,
    Mode, SystemSpec,
};
use num_rational::Rational64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn verify(spec: &SystemSpec, b: &BasisResult, tol: f64) -> Result<VerificationReport, String> {
    let opts = VerifyOptions {
        trajectories: 20,
        tol,
        ..VerifyOptions::default()
    };
    ok(verify_basis(spec, b, &opts))
}

fn worst(r: &VerificationReport) -> f64 {
    r.integrals
        .iter()
        .map(|i| i.relative_drift)
        .fold(0.0, f64::max)
}

fn tags(b: &BasisResult) -> Vec<&str> {
    b.integrals.iter().map(|i| i.theorem.as_str()).collect()
}

/// Verification gate plus the RK4 oracle at the same tolerance.
fn drift_gate(
    spec: &SystemSpec,
    b: &BasisResult,
    tol: f64,
    steps: usize,
) -> Result<(f64, f64, usize), String> {
    let r = verify(spec, b, tol)?;
    let oracle = worst_drift(spec, &b.exprs(), 20, 11, steps);
    ensure(
        r.pass,
        format!(
            "verification failed: worst drift {:.1e}, rank {}/{}",
            worst(&r),
            r.rank,
            r.expected_rank
        ),
    )?;
    ensure(
        oracle < tol,
        format!("RK4 oracle drift {oracle:.1e} ≥ {tol:e}"),
    )?;
    Ok((worst(&r), oracle, r.rank))
}

fn simple_divisors() -> Outcome {
    let spec = load("constant_simple4");
    let start = Instant::now();
    let text = ok(analyze(&spec))?.to_string();
    let b = ok(construct(&spec, Some(Mode::Autonomous)))?;
    let r = verify(&spec, &b, 1e-7)?;
    let elapsed = start.elapsed().as_secs_f64();
    ensure(
        text.contains("eigenvalues: 0, 1 (×2), 2; divisors: λ, λ−1, λ−1, λ−2"),
        format!("unexpected analysis:\n{text}"),
    )?;
    ensure(b.len() == 3, format!("{} integrals", b.len()))?;
    ensure(
        r.pass && r.rank == 3,
        format!("drift {:.1e}, rank {}", worst(&r), r.rank),
    )?;
    let oracle = worst_drift(&spec, &b.exprs(), 20, 1, 2000);
    ensure(oracle < 1e-7, format!("RK4 oracle drift {oracle:.1e}"))?;
    ensure(elapsed < 1.0, format!("took {elapsed:.2} s"))?;
    Ok(format!(
        "drift {:.1e} (oracle {oracle:.1e}), rank 3, {elapsed:.2} s",
        worst(&r)
    ))
}

fn exact(v: f64) -> Result<Rational64, String> {
    let q = Rational64::approximate_float(v).ok_or("entry is not representable")?;
    ensure(
        *q.numer() as f64 / *q.denom() as f64 == v,
        format!("{v} is not a small rational"),
    )?;
    Ok(q)
}

fn jordan_chain() -> Outcome {
    let spec = load("constant_jordan3");
    let a = spec.constant_matrix().ok_or("weights are not constant")?;
    let data = ok(spectrum_of_transpose(&a, 1e-8))?;
    ensure(data.exact, "exact path not taken")?;
    let divs = data.divisors();
    ensure(
        divs.len() == 1 && divs[0].1 == 3 && divs[0].0 == 2.0.into(),
        format!("divisors {divs:?}"),
    )?;
    let chain = &data.chains[0];
    // (B − 2E)ν^k − k·ν^{k−1} over the rationals
    let b: Vec<Vec<Rational64>> = (0..3)
        .map(|i| (0..3).map(|j| exact(a[(j, i)])).collect::<Result<_, _>>())
        .collect::<Result<_, _>>()?;
    let vs: Vec<Vec<Rational64>> = chain
        .vectors
        .iter()
        .map(|v| {
            v.iter()
                .map(|z| {
                    if z.im == 0.0 {
                        exact(z.re)
                    } else {
                        Err("complex entry".into())
                    }
                })
                .collect::<Result<_, _>>()
        })
        .collect::<Result<_, _>>()?;
    let two = Rational64::from_integer(2);
    for (k, v) in vs.iter().enumerate() {
        for i in 0..3 {
            let mut acc = -two * v[i];
            for j in 0..3 {
                acc += b[i][j] * v[j];
            }
            if k > 0 {
                acc -= Rational64::from_integer(k as i64) * vs[k - 1][i];
            }
            ensure(
                acc == Rational64::from_integer(0),
                format!("chain residual {acc} at ν{k}"),
            )?;
        }
    }
    let auto = ok(construct(&spec, Some(Mode::Autonomous)))?;
    let t = tags(&auto);
    ensure(
        t.contains(&"Theorem 1.5") && t.contains(&"Theorem 1.8"),
        format!("tags {t:?}"),
    )?;
    let (d, o, _) = drift_gate(&spec, &auto, 1e-7, 2000)?;
    let full = ok(construct(&spec, Some(Mode::Full)))?;
    ensure(
        tags(&full).contains(&"Theorem 1.10"),
        format!("full tags {:?}", tags(&full)),
    )?;
    let (_, _, rank) = drift_gate(&spec, &full, 1e-7, 2000)?;
    ensure(rank == 3, format!("full rank {rank}"))?;
    Ok(format!(
        "(λ−2)³, chain residual 0, drift {d:.1e} (oracle {o:.1e}), full rank 3"
    ))
}

fn forced_chain() -> Outcome {
    let spec = load("forced_jordan3");
    let b = ok(construct(&spec, None))?;
    ensure(
        tags(&b) == ["Theorem 1.12"; 3],
        format!("tags {:?}", tags(&b)),
    )?;
    let (d, o, _) = drift_gate(&spec, &b, 1e-6, 2000)?;
    Ok(format!("3 integrals, drift {d:.1e} (oracle {o:.1e})"))
}

fn triangular() -> Outcome {
    let spec = load("triangular3");
    ensure(spec.window == (1.0, 2.0), "window is not [1, 2]")?;
    let b = ok(construct(&spec, None))?;
    ensure(
        tags(&b) == ["Theorem 2.4"; 3],
        format!("tags {:?}", tags(&b)),
    )?;
    let (d, o, _) = drift_gate(&spec, &b, 1e-6, 2000)?;
    let t0 = spec.anchor();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut anchor_err: f64 = 0.0;
    for _ in 0..20 {
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        for (tau, i) in b.integrals.iter().enumerate() {
            // φ(t₀) = 1 at the anchor
            let v = ok(i.expr.eval(t0, &x, 1e-12))?;
            anchor_err = anchor_err.max((v - x[2 - tau]).abs());
        }
    }
    ensure(
        anchor_err <= 1e-12,
        format!("anchor identity error {anchor_err:.1e}"),
    )?;
    Ok(format!(
        "drift {d:.1e} (oracle {o:.1e}), anchor error {anchor_err:.1e}"
    ))
}

fn irrational_common_vectors() -> Outcome {
    let spec = load("ld_irrational2");
    let analysis = ok(analyze(&spec))?;
    let mut found: Vec<f64> = Vec::new();
    let mut residual: f64 = 0.0;
    for c in &analysis.common {
        ensure(c.nu.iter().all(|z| z.im == 0.0), "complex common vector")?;
        let nu: Vec<f64> = c.nu.iter().map(|z| z.re / c.nu[1].re).collect();
        found.push(nu[0]);
        for term in &spec.terms {
            let bt = term.a.transpose();
            let lambda = (0..2).map(|j| bt[(1, j)] * nu[j]).sum::<f64>() / nu[1];
            for i in 0..2 {
                let r = (0..2).map(|j| bt[(i, j)] * nu[j]).sum::<f64>() - lambda * nu[i];
                residual = residual.max(r.abs());
            }
        }
    }
    found.sort_by(f64::total_cmp);
    let want = [1.0 - 2f64.sqrt(), 1.0 + 2f64.sqrt()];
    ensure(
        found.len() == 2 && found.iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-10),
        format!("common vectors {found:?}"),
    )?;
    ensure(residual < 1e-10, format!("eigen residual {residual:.1e}"))?;
    let b = ok(construct(&spec, None))?;
    ensure(
        tags(&b) == ["Theorem 2.5"; 2],
        format!("tags {:?}", tags(&b)),
    )?;
    let (d, o, _) = drift_gate(&spec, &b, 1e-7, 4000)?;
    Ok(format!(
        "ν = (1∓√2, 1), residual {residual:.1e}, drift {d:.1e} (oracle {o:.1e})"
    ))
}

fn exponent_system() -> Outcome {
    let spec = load("ld_exponents3");
    // common eigenvectors of Bⱼ = Aⱼᵀ with integer eigenvalues
    let nus: [[i64; 3]; 3] = [[1, -1, -1], [0, 1, -1], [1, 1, 1]];
    let mut lambdas = [[0i64; 2]; 3];
    for (k, nu) in nus.iter().enumerate() {
        for (j, term) in spec.terms.iter().enumerate() {
            let bnu: Vec<i64> = (0..3)
                .map(|i| (0..3).map(|l| term.a[(l, i)] as i64 * nu[l]).sum())
                .collect();
            let p = nu.iter().position(|v| *v != 0).unwrap();
            let lambda = bnu[p] / nu[p];
            ensure(
                (0..3).all(|i| bnu[i] == lambda * nu[i]),
                format!("ν{} is not an eigenvector of B{}", k + 1, j + 1),
            )?;
            lambdas[k][j] = lambda;
        }
    }
    let h = primitive(cross_kernel(
        [lambdas[0][0], lambdas[1][0], lambdas[2][0]],
        [lambdas[0][1], lambdas[1][1], lambdas[2][1]],
    ));
    ensure(h == [1, 2, 1], format!("oracle exponents {h:?}"))?;
    let oracle_f = |x: &[f64]| -> f64 {
        nus.iter()
            .zip(h)
            .map(|(nu, hk)| {
                (0..3)
                    .map(|i| nu[i] as f64 * x[i])
                    .sum::<f64>()
                    .powi(hk as i32)
            })
            .product()
    };

    let auto = ok(construct(&spec, Some(Mode::Autonomous)))?;
    ensure(
        auto.len() == 1 && auto.integrals[0].theorem == "Theorem 2.8",
        format!("tags {:?}", tags(&auto)),
    )?;
    let f = auto.integrals[0].expr.clone();
    let lib_f = |x: &[f64]| f.eval(0.0, x, 1e-12).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let points: Vec<Vec<f64>> = (0..20)
        .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let ratios: Vec<f64> = points.iter().map(|x| lib_f(x) / oracle_f(x)).collect();
    let spread = ratios
        .iter()
        .map(|r| (r - ratios[0]).abs())
        .fold(0.0, f64::max);
    ensure(
        spread < 1e-9 * ratios[0].abs(),
        format!("F is not a multiple of the oracle product: {ratios:?}"),
    )?;

    let mats: Vec<DMatrix<f64>> = spec.terms.iter().map(|t| t.a.clone()).collect();
    let mut frozen: f64 = 0.0;
    for x in &points {
        for m in &mats {
            frozen = frozen.max(frozen_derivative(&lib_f, m, x));
        }
    }
    let lib_frozen = ok(frozen_field_residual(&f, &mats, &points))?;
    ensure(
        frozen < 1e-5 && lib_frozen < 1e-5,
        format!("frozen-field {frozen:.1e} / {lib_frozen:.1e}"),
    )?;
    let (d, o, _) = drift_gate(&spec, &auto, 1e-7, 2000)?;
    Ok(format!(
        "h = (1,2,1), F = {:.0}·(x1²−(x2+x3)²)(x2−x3)², frozen {frozen:.1e}, drift {d:.1e} (oracle {o:.1e})",
        ratios[0]
    ))
}

fn reducible() -> Outcome {
    let spec = load("reducible_polynomial2");
    let red = spec.reduction.as_ref().ok_or("no reduction")?;
    let check = ok(check_reduction(&spec, red))?;
    ensure(
        check.max_residual < 1e-8,
        format!("library residual {:.1e}", check.max_residual),
    )?;
    // g' + gA − Bg with the derivative of g written out by hand
    let mut oracle_res: f64 = 0.0;
    for k in 0..50 {
        let t = (k as f64 + 0.5) / 50.0;
        let g = DMatrix::from_row_slice(2, 2, &[-t, 1.0 + t * t, 1.0, -t]);
        let dg = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0 * t, 0.0, -1.0]);
        let r = &dg + &g * ok(spec.coefficient(t))? - &red.b * &g;
        oracle_res = oracle_res.max(r.amax());
    }
    ensure(
        oracle_res < 1e-8,
        format!("oracle residual {oracle_res:.1e}"),
    )?;

    let b = ok(construct(&spec, None))?;
    ensure(
        tags(&b) == ["Theorem 3.1"; 2],
        format!("tags {:?}", tags(&b)),
    )?;
    let closed = [
        |t: f64, x: &[f64]| (-t * x[0] + (1.0 + t * t) * x[1]) * (-t).exp(),
        |t: f64, x: &[f64]| (x[0] - t * x[1]) * (-2.0 * t).exp(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10 {
        let t: f64 = rng.random_range(0.0..1.0);
        let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        for (i, want) in b.integrals.iter().zip(closed) {
            let got = ok(i.expr.eval(t, &x, 1e-12))?;
            ensure(
                (got - want(t, &x)).abs() < 1e-12,
                format!("{} differs from the closed form", i.expr),
            )?;
        }
    }
    let (d, o, _) = drift_gate(&spec, &b, 1e-8, 2000)?;
    Ok(format!(
        "residual {:.1e} (oracle {oracle_res:.1e}), drift {d:.1e} (oracle {o:.1e})",
        check.max_residual
    ))
}

fn full_basis_gate(spec: &SystemSpec) -> Result<f64, String> {
    let b = ok(construct(spec, Some(Mode::Full)))?;
    ensure(
        b.len() == spec.n,
        format!("{} integrals for n = {}", b.len(), spec.n),
    )?;
    let r = verify(spec, &b, 1e-6)?;
    ensure(
        r.pass && r.rank == spec.n,
        format!("drift {:.1e}, rank {}", worst(&r), r.rank),
    )?;
    let oracle = worst_drift(spec, &b.exprs(), 4, 3, 2000);
    ensure(oracle < 1e-6, format!("RK4 oracle drift {oracle:.1e}"))?;
    Ok(worst(&r).max(oracle))
}

fn property_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_simple: f64 = 0.0;
    let mut accepted = 0;
    while accepted < 50 {
        let n = 2 + accepted % 4;
        let a = integer_matrix(&mut rng, n, 3);
        if eigen_gap(&a) < 0.05 {
            continue;
        }
        let spec = SystemSpec::constant(a.clone());
        worst_simple =
            worst_simple.max(full_basis_gate(&spec).map_err(|e| format!("{e} for A = {a}"))?);
        accepted += 1;
    }

    let mut worst_jordan: f64 = 0.0;
    for k in 0..20 {
        let n = 3 + k % 3;
        let m = 2 + k % 2;
        let lambda = rng.random_range(-2..=2) as f64;
        let mut j = DMatrix::<f64>::zeros(n, n);
        for i in 0..m {
            j[(i, i)] = lambda;
            if i + 1 < m {
                j[(i, i + 1)] = 1.0;
            }
        }
        for i in m..n {
            j[(i, i)] = lambda + (i - m + 1) as f64 * if k % 2 == 0 { 1.0 } else { -1.0 };
        }
        let (p, p_inv) = unimodular(&mut rng, n);
        ensure(
            (&p * &p_inv - DMatrix::<f64>::identity(n, n)).amax() == 0.0,
            "P·P⁻¹ ≠ E",
        )?;
        let a = &p * &j * &p_inv;
        let data = ok(spectrum_of_transpose(&a, 1e-8))?;
        ensure(
            data.chains.iter().any(|c| c.m() == m),
            format!("no chain of length {m} for A = {a}"),
        )?;
        let spec = SystemSpec::constant(a.clone());
        worst_jordan =
            worst_jordan.max(full_basis_gate(&spec).map_err(|e| format!("{e} for A = {a}"))?);
    }
    Ok(format!(
        "50 simple spectra (worst {worst_simple:.1e}), 20 Jordan blocks (worst {worst_jordan:.1e})"
    ))
}

fn negative_control() -> Outcome {
    let spec = load("constant_simple4");
    let mut b = ok(construct(&spec, Some(Mode::Autonomous)))?;
    let perturbed = b.integrals[0]
        .expr
        .perturb_first_linform(1e-3)
        .ok_or("no linear form to perturb")?;
    let oracle = worst_drift(&spec, std::slice::from_ref(&perturbed), 20, 9, 2000);
    b.integrals[0] = Integral::new(perturbed, "perturbed");
    let r = verify(&spec, &b, 1e-7)?;
    let d = r.integrals[0].relative_drift;
    ensure(!r.pass, "perturbed basis passed verification")?;
    ensure(
        d > 1e-4 && oracle > 1e-4,
        format!("drift {d:.1e} (oracle {oracle:.1e}) is too small"),
    )?;
    Ok(format!(
        "FAIL detected, drift {d:.1e} (oracle {oracle:.1e})"
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("constant system with simple divisors", simple_divisors),
        ("Jordan chain of length 3", jordan_chain),
        ("forced Jordan chain", forced_chain),
        ("triangular system", triangular),
        (
            "commuting family with irrational vectors",
            irrational_common_vectors,
        ),
        (
            "autonomous integral from the exponent system",
            exponent_system,
        ),
        ("reducible system", reducible),
        ("random matrix properties", property_suite),
        ("negative control", negative_control),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {} ({name}): PASS  {detail}", k + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} ({name}): FAIL  {why}", k + 1);
            }
        }
    }
    println!(
        "{}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
