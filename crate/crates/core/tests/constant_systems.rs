mod common;

use common::*;
use fint_core::numerics::independence_rank;
use fint_core::{
    analyze, construct, default_mode, EvalPoint, Exponent, IntegralExpr, Mode, SystemClass,
};

#[test]
fn simple_spectrum_analysis() {
    let text = analyze(&load("constant_simple4")).unwrap().to_string();
    assert!(text.starts_with("class: constant\n"));
    assert!(text.contains("A: eigenvalues: 0, 1 (×2), 2; divisors: λ, λ−1, λ−1, λ−2\n"));
    assert!(text.contains("λ=0: ν⁰=(-1, 1, -1, 1)"));
}

#[test]
fn simple_spectrum_autonomous_basis() {
    let spec = load("constant_simple4");
    let b = construct(&spec, Some(Mode::Autonomous)).unwrap();
    assert_eq!(
        rendered(&b),
        [
            "-x1+x2-x3+x4",
            "(x1+2*x2+x4)/(x1+x3)",
            "(x1+x3)^2/(2*x2+x4)"
        ]
    );
    assert_eq!(tags(&b), ["Corollary 1.1", "Corollary 1.2", "Theorem 1.1"]);
    assert_conserved(&spec, &b, 1e-7);
}

#[test]
fn simple_spectrum_matches_published_integrals() {
    let b = construct(&load("constant_simple4"), Some(Mode::Autonomous)).unwrap();
    // published: (2x₁+2x₂+x₃+x₄)/(x₁+x₃) and (2x₁+2x₂+x₃+x₄)²/(2x₂+x₄)
    let p = IntegralExpr::lin(vec![2.0, 2.0, 1.0, 1.0]);
    let f23 = p.clone() / IntegralExpr::lin(vec![1.0, 0.0, 1.0, 0.0]);
    let f24 = p.pow(Exponent::int(2)) / IntegralExpr::lin(vec![0.0, 2.0, 0.0, 1.0]);
    for x in [[0.3, -0.2, 0.5, 0.1], [-0.7, 0.4, 0.2, 0.9]] {
        let ours = b.integrals[1].expr.eval(0.0, &x, 1e-12).unwrap();
        let theirs = f23.eval(0.0, &x, 1e-12).unwrap();
        assert!((ours - (theirs - 1.0)).abs() < 1e-12);
        let mut with_f24 = b.exprs();
        with_f24.push(f24.clone());
        let p = EvalPoint::new(0.0, x.to_vec());
        assert_eq!(independence_rank(&with_f24, &p, 1e-12).unwrap(), 3);
    }
}

#[test]
fn simple_spectrum_full_basis_adds_time_factor() {
    let spec = load("constant_simple4");
    let b = construct(&spec, Some(Mode::Full)).unwrap();
    assert_eq!(b.len(), 4);
    assert_eq!(b.integrals[3].expr.to_string(), "(x1+x3)*exp(-t)");
    assert_eq!(b.integrals[3].theorem, "Theorem 1.9");
    assert_conserved(&spec, &b, 1e-7);
}

#[test]
fn jordan_block_chain_and_integrals() {
    let spec = load("constant_jordan3");
    let text = analyze(&spec).unwrap().to_string();
    assert!(text.contains("divisors: (λ−2)³"));
    assert!(text.contains("λ=2: ν⁰=(1, -1, 1) ν¹=(2, -1, 0) ν²=(2, 0, 0)"));
    let auto = construct(&spec, Some(Mode::Autonomous)).unwrap();
    assert_eq!(
        rendered(&auto),
        [
            "(x1-x2+x3)*exp(-2*((2*x1-x2)/(x1-x2+x3)))",
            "Ψ2[x1-x2+x3; 2*x1-x2; 2*x1]"
        ]
    );
    assert_eq!(tags(&auto), ["Theorem 1.5", "Theorem 1.8"]);
    assert_conserved(&spec, &auto, 1e-7);
    let full = construct(&spec, Some(Mode::Full)).unwrap();
    assert_eq!(full.integrals[2].expr.to_string(), "(2*x1-x2)/(x1-x2+x3)-t");
    assert_conserved(&spec, &full, 1e-7);
}

#[test]
fn zero_eigenvalue_chain_with_kernel() {
    let spec = load("constant_chain_kernel3");
    let b = construct(&spec, Some(Mode::Full)).unwrap();
    assert_eq!(tags(&b), ["Corollary 1.1", "Theorem 1.6", "Theorem 1.10"]);
    assert_eq!(b.integrals[0].expr.to_string(), "x1-2*x2+x3");
    assert_conserved(&spec, &b, 1e-7);
}

#[test]
fn complex_pair_with_real_eigenvalue() {
    let spec = load("constant_complex3");
    let text = analyze(&spec).unwrap().to_string();
    assert!(text.contains("eigenvalues: 2, 3-i, 3+i"));
    let b = construct(&spec, Some(Mode::Autonomous)).unwrap();
    assert_eq!(tags(&b), ["Theorem 1.3", "Theorem 1.2"]);
    assert_conserved(&spec, &b, 1e-7);
    let full = construct(&spec, Some(Mode::Full)).unwrap();
    assert_eq!(
        full.integrals[2].expr.to_string(),
        "(-3*x1+x2+x3)*exp(-2*t)"
    );
    assert_conserved(&spec, &full, 1e-7);
}

#[test]
fn two_purely_imaginary_pairs() {
    let spec = load("constant_complex4");
    let b = construct(&spec, Some(Mode::Full)).unwrap();
    assert_eq!(
        tags(&b),
        ["Theorem 1.4", "Theorem 1.2", "Theorem 1.2", "Corollary 1.5"]
    );
    assert_eq!(
        b.integrals[1].expr.to_string(),
        "(x1-x2+2*x4)^2+(-x1+2*x2+2*x3)^2"
    );
    assert_conserved(&spec, &b, 1e-7);
}

#[test]
fn jordan_block_next_to_complex_pair() {
    let spec = load("constant_mixed5");
    let text = analyze(&spec).unwrap().to_string();
    assert!(text.contains("divisors: (λ+1)³, λ−(1-i), λ−(1+i)"));
    let b = construct(&spec, Some(Mode::Autonomous)).unwrap();
    assert_eq!(
        tags(&b),
        ["Theorem 1.5", "Theorem 1.8", "Corollary 1.4", "Theorem 1.2"]
    );
    assert_conserved(&spec, &b, 1e-7);
}

#[test]
fn forced_systems_default_to_forced_mode() {
    for (name, expected) in [
        (
            "forced_complex3",
            vec!["Theorem 1.11", "Corollary 1.6", "Corollary 1.6"],
        ),
        ("forced_complex4", vec!["Corollary 1.7"; 4]),
        ("forced_jordan3", vec!["Theorem 1.12"; 3]),
    ] {
        let spec = load(name);
        assert_eq!(default_mode(&spec, SystemClass::Constant), Mode::Forced);
        let b = construct(&spec, None).unwrap();
        assert_eq!(tags(&b), expected, "{name}");
        assert_conserved(&spec, &b, 1e-6);
    }
}

#[test]
fn forced_jordan_leading_integral() {
    let b = construct(&load("forced_jordan3"), None).unwrap();
    assert_eq!(
        b.integrals[0].expr.to_string(),
        "(x1-x2+x3)*exp(-2*t)-(∫[0,t] (exp(3*τ)-8*τ+4)*exp(-2*τ) dτ)"
    );
}

#[test]
fn forced_system_refuses_homogeneous_modes() {
    let spec = load("forced_jordan3");
    assert_eq!(
        construct(&spec, Some(Mode::Autonomous))
            .unwrap_err()
            .exit_code(),
        4
    );
    assert_eq!(
        construct(&spec, Some(Mode::Full)).unwrap_err().exit_code(),
        4
    );
}

#[test]
fn zero_matrix_has_coordinate_integrals() {
    let spec = load("zero3");
    let text = analyze(&spec).unwrap().to_string();
    assert!(text.contains("eigenvalues: 0 (×3); divisors: λ, λ, λ"));
    assert_eq!(
        rendered(&construct(&spec, Some(Mode::Autonomous)).unwrap()),
        ["x1", "x2"]
    );
    assert_eq!(
        rendered(&construct(&spec, Some(Mode::Full)).unwrap()),
        ["x1", "x2", "x3"]
    );
}

#[test]
fn scalar_equation() {
    let spec = load("scalar1");
    let auto = construct(&spec, Some(Mode::Autonomous)).unwrap();
    assert!(auto.is_empty());
    assert!(!auto.notes.is_empty());
    let full = construct(&spec, Some(Mode::Full)).unwrap();
    assert_eq!(rendered(&full), ["x1*exp(-2*t)"]);
    assert_conserved(&spec, &full, 1e-7);
}
