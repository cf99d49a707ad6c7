//! Class detection and dispatch to the constructors.

use std::fmt;

use num_complex::Complex64;
use serde_json::{json, Value};

use crate::autonomous::{self, check_independence};
use crate::basis::{BasisResult, Mode};
use crate::error::{FintError, Result};
use crate::reducible::{check_reduction, reducible_integrals, ReductionCheck};
use crate::spectral::{
    common_eigenvectors, commutator_defect, format_complex, format_divisor, spectrum_of_transpose,
    superscript, CommonVector, SpectralData, DEFAULT_TOL,
};
use crate::system::{SystemClass, SystemSpec};
use crate::timevarying::{
    algebraic_reducible_integrals, is_upper_triangular, ld_autonomous_integrals,
    ld_nonautonomous_integrals, ld_plan, triangular_integrals,
};

/// Detected class with the evidence behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub class: SystemClass,
    pub evidence: Vec<String>,
}

fn transposed(spec: &SystemSpec) -> Vec<nalgebra::DMatrix<f64>> {
    spec.terms.iter().map(|t| t.a.transpose()).collect()
}

/// Real dimension spanned by the constant common eigenvectors of `Bⱼ = Aⱼᵀ`.
fn common_span(spec: &SystemSpec) -> Result<usize> {
    let (vectors, _) = common_eigenvectors(&transposed(spec), DEFAULT_TOL)?;
    let rows: Vec<Vec<f64>> = vectors
        .iter()
        .flat_map(|v| {
            [
                v.nu.iter().map(|z| z.re).collect(),
                v.nu.iter().map(|z| z.im).collect(),
            ]
        })
        .collect();
    Ok(crate::numerics::matrix_rank(&rows, 1e-9))
}

/// Test the hypotheses of one class, returning evidence when they hold.
fn test_class(spec: &SystemSpec, class: SystemClass, tol: f64) -> Result<Option<String>> {
    Ok(match class {
        SystemClass::Reducible => match &spec.reduction {
            None => None,
            Some(red) => {
                let check = check_reduction(spec, red)?;
                check.passes().then(|| {
                    format!(
                        "reduction residual {:.1e} on a 50-point grid, min |det g| = {:.3e}",
                        check.max_residual, check.min_det
                    )
                })
            }
        },
        SystemClass::Constant => spec
            .constant_matrix()
            .map(|_| "all weights are constant".to_string()),
        SystemClass::LappoDanilevskii => {
            let mats: Vec<_> = spec.terms.iter().map(|t| t.a.clone()).collect();
            let defect = commutator_defect(&mats);
            if defect > tol {
                None
            } else {
                let plan = ld_plan(spec)?;
                (plan.span == spec.n).then(|| {
                    format!(
                        "matrices commute (defect {defect:.1e}); designated matrix A{} with {} chain(s) and {} common vector(s)",
                        plan.designated + 1,
                        plan.chains.len(),
                        plan.vectors.len()
                    )
                })
            }
        }
        SystemClass::Triangular => {
            is_upper_triangular(spec).then(|| "every Aⱼ is upper triangular".to_string())
        }
        SystemClass::AlgebraicReducible => {
            let span = common_span(spec)?;
            (span == spec.n).then(|| format!("{span} independent constant eigenvectors of A(t)ᵀ"))
        }
    })
}

const ORDER: [SystemClass; 5] = [
    SystemClass::Reducible,
    SystemClass::Constant,
    SystemClass::LappoDanilevskii,
    SystemClass::Triangular,
    SystemClass::AlgebraicReducible,
];

/// Most specific class whose hypotheses hold, honoring `class_hint`.
pub fn classify_system(spec: &SystemSpec, tol: f64) -> Result<Classification> {
    if let Some(hint) = spec.class_hint {
        return match test_class(spec, hint, tol)? {
            Some(e) => Ok(Classification {
                class: hint,
                evidence: vec![format!("class_hint {}: {e}", hint.name())],
            }),
            None => Err(FintError::Classification(format!(
                "the system does not satisfy the hypotheses of the hinted class {}",
                hint.name()
            ))),
        };
    }
    let mut rejected = Vec::new();
    for class in ORDER {
        match test_class(spec, class, tol)? {
            Some(e) => {
                let mut evidence = rejected;
                evidence.push(e);
                return Ok(Classification { class, evidence });
            }
            None if class == SystemClass::Reducible && spec.reduction.is_some() => {
                rejected.push("the supplied reduction fails the residual check".into());
            }
            None => {}
        }
    }
    Err(FintError::Classification(
        "no class matches: weights are not constant, the matrices neither commute with a full eigenstructure nor are upper triangular, and there are too few constant eigenvectors".into(),
    ))
}

/// Mode used when none is requested.
pub fn default_mode(spec: &SystemSpec, class: SystemClass) -> Mode {
    match (class, spec.has_forcing()) {
        (_, true) => Mode::Forced,
        (SystemClass::Constant, false) => Mode::Autonomous,
        (_, false) => Mode::Full,
    }
}

/// Classify and build a basis in the requested (or default) mode.
pub fn construct(spec: &SystemSpec, mode: Option<Mode>) -> Result<BasisResult> {
    let classification = classify_system(spec, DEFAULT_TOL)?;
    construct_as(spec, &classification, mode)
}

pub fn construct_as(
    spec: &SystemSpec,
    classification: &Classification,
    mode: Option<Mode>,
) -> Result<BasisResult> {
    let class = classification.class;
    let mode = mode.unwrap_or_else(|| default_mode(spec, class));
    let mut result = match (class, mode) {
        (SystemClass::Constant, _) => autonomous::basis(spec, mode)?,
        (SystemClass::Reducible, _) => reducible_integrals(spec, mode)?,
        (SystemClass::LappoDanilevskii, Mode::Autonomous) => ld_autonomous_integrals(spec)?,
        (SystemClass::LappoDanilevskii, _) => ld_nonautonomous_integrals(spec, mode)?,
        (SystemClass::Triangular, _) => triangular_integrals(spec, mode)?,
        (SystemClass::AlgebraicReducible, _) => algebraic_reducible_integrals(spec, mode)?,
    };
    if mode != Mode::Autonomous && result.len() != spec.n {
        return Err(FintError::construction(
            "basis selection",
            format!("built {} integrals, expected {}", result.len(), spec.n),
        ));
    }
    let (lo, hi) = spec.window;
    check_independence(&result, lo + 0.37 * (hi - lo), 1e-10)?;
    result.class = class;
    Ok(result)
}

/// Spectral data of one matrix, labelled for reports.
#[derive(Debug, Clone)]
pub struct LabelledSpectrum {
    /// Matrix name, e.g. `A` or `A2`.
    pub label: String,
    /// Eigenvalue symbol used for divisors, e.g. `λ` or `λ²`.
    pub symbol: String,
    pub data: SpectralData,
}

/// Everything `analyze` reports about a system.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub n: usize,
    pub classification: Classification,
    pub spectra: Vec<LabelledSpectrum>,
    pub common: Vec<CommonVector>,
    pub reduction: Option<ReductionCheck>,
}

/// Classify a system and collect its spectral data.
pub fn analyze(spec: &SystemSpec) -> Result<Analysis> {
    let classification = classify_system(spec, DEFAULT_TOL)?;
    let mut spectra = Vec::new();
    let mut common = Vec::new();
    let mut reduction = None;
    match classification.class {
        SystemClass::Constant => {
            let a = spec
                .constant_matrix()
                .ok_or_else(|| FintError::Classification("weights are not constant".into()))?;
            spectra.push(LabelledSpectrum {
                label: "A".into(),
                symbol: "λ".into(),
                data: spectrum_of_transpose(&a, DEFAULT_TOL)?,
            });
        }
        SystemClass::Reducible => {
            let red = spec
                .reduction
                .as_ref()
                .ok_or_else(|| FintError::Classification("no reduction".into()))?;
            reduction = Some(check_reduction(spec, red)?);
            spectra.push(LabelledSpectrum {
                label: "B".into(),
                symbol: "λ".into(),
                data: spectrum_of_transpose(&red.b, DEFAULT_TOL)?,
            });
        }
        SystemClass::LappoDanilevskii | SystemClass::AlgebraicReducible => {
            for (j, term) in spec.terms.iter().enumerate() {
                spectra.push(LabelledSpectrum {
                    label: format!("A{}", j + 1),
                    symbol: format!("λ{}", superscript(j + 1)),
                    data: spectrum_of_transpose(&term.a, DEFAULT_TOL)?,
                });
            }
            common = common_eigenvectors(&transposed(spec), DEFAULT_TOL)?.0;
        }
        SystemClass::Triangular => {}
    }
    Ok(Analysis {
        n: spec.n,
        classification,
        spectra,
        common,
        reduction,
    })
}

fn format_cvec(v: &[Complex64]) -> String {
    let parts: Vec<String> = v.iter().map(|z| format_complex(*z)).collect();
    format!("({})", parts.join(", "))
}

impl LabelledSpectrum {
    fn eigenvalue_list(&self) -> Vec<String> {
        self.data
            .eigenvalues()
            .iter()
            .map(|(l, m)| match m {
                1 => format_complex(*l),
                _ => format!("{} (×{m})", format_complex(*l)),
            })
            .collect()
    }

    fn divisor_list(&self) -> Vec<String> {
        self.data
            .divisors()
            .iter()
            .map(|(l, m)| format_divisor(*l, *m, &self.symbol))
            .collect()
    }
}

impl fmt::Display for Analysis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "class: {}", self.classification.class.name())?;
        for e in &self.classification.evidence {
            writeln!(f, "  {e}")?;
        }
        if let Some(r) = &self.reduction {
            writeln!(
                f,
                "reduction residual: {:.3e}; min |det g|: {:.3e}",
                r.max_residual, r.min_det
            )?;
        }
        for s in &self.spectra {
            writeln!(
                f,
                "{}: eigenvalues: {}; divisors: {}{}",
                s.label,
                s.eigenvalue_list().join(", "),
                s.divisor_list().join(", "),
                if s.data.exact {
                    ""
                } else {
                    " (floating point)"
                }
            )?;
            for c in &s.data.chains {
                let vs: Vec<String> = c
                    .vectors
                    .iter()
                    .enumerate()
                    .map(|(k, v)| format!("ν{}={}", superscript(k), format_cvec(v)))
                    .collect();
                writeln!(
                    f,
                    "  {}={}: {}",
                    s.symbol,
                    format_complex(c.lambda),
                    vs.join(" ")
                )?;
            }
        }
        if !self.common.is_empty() {
            writeln!(f, "common eigenvectors:")?;
            for v in &self.common {
                let ls: Vec<String> = v.lambdas.iter().map(|l| format_complex(*l)).collect();
                writeln!(
                    f,
                    "  ν={} with eigenvalues ({})",
                    format_cvec(&v.nu),
                    ls.join(", ")
                )?;
            }
        }
        Ok(())
    }
}

fn complex_json(z: Complex64) -> Value {
    json!([z.re, z.im])
}

impl Analysis {
    pub fn to_json(&self) -> Value {
        let spectra: Vec<Value> = self
            .spectra
            .iter()
            .map(|s| {
                json!({
                    "matrix": s.label,
                    "exact": s.data.exact,
                    "eigenvalues": s.data.eigenvalues().iter().map(|(l, m)| json!({"value": complex_json(*l), "multiplicity": m})).collect::<Vec<_>>(),
                    "divisors": s.divisor_list(),
                    "chains": s.data.chains.iter().map(|c| json!({
                        "lambda": complex_json(c.lambda),
                        "vectors": c.vectors.iter().map(|v| v.iter().map(|z| complex_json(*z)).collect::<Vec<_>>()).collect::<Vec<_>>(),
                    })).collect::<Vec<_>>(),
                })
            })
            .collect();
        json!({
            "n": self.n,
            "class": self.classification.class.name(),
            "evidence": self.classification.evidence,
            "spectra": spectra,
            "common_eigenvectors": self.common.iter().map(|v| json!({
                "nu": v.nu.iter().map(|z| complex_json(*z)).collect::<Vec<_>>(),
                "lambdas": v.lambdas.iter().map(|z| complex_json(*z)).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
            "reduction": self.reduction.as_ref().map(|r| json!({"max_residual": r.max_residual, "min_det": r.min_det})),
        })
    }
}
