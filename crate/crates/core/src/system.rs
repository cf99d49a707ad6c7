//! System descriptions and the JSON spec schema.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{FintError, Result};
use crate::expr::{parse_scalar, ScalarExpr};

/// One coefficient term `α(t)·A`.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub alpha: ScalarExpr,
    pub a: DMatrix<f64>,
}

/// Clock used by time-anchored factors of reducible systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeScale {
    #[default]
    Identity,
    Log,
}

impl TimeScale {
    /// The clock `s(t)`: `t` or `ln t`.
    pub fn clock(self) -> ScalarExpr {
        match self {
            TimeScale::Identity => ScalarExpr::Time,
            TimeScale::Log => ScalarExpr::Time.ln(),
        }
    }

    /// `s'(t)`.
    pub fn clock_rate(self) -> ScalarExpr {
        match self {
            TimeScale::Identity => ScalarExpr::Const(1.0),
            TimeScale::Log => ScalarExpr::Const(1.0) / ScalarExpr::Time,
        }
    }
}

/// `y = g(t)x` taking the system to `y' = By` (in the chosen clock).
#[derive(Debug, Clone, PartialEq)]
pub struct Reduction {
    pub g: Vec<Vec<ScalarExpr>>,
    pub b: DMatrix<f64>,
    pub time_scale: TimeScale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemClass {
    Constant,
    AlgebraicReducible,
    Triangular,
    LappoDanilevskii,
    Reducible,
}

impl SystemClass {
    pub fn name(self) -> &'static str {
        match self {
            SystemClass::Constant => "constant",
            SystemClass::AlgebraicReducible => "algebraic_reducible",
            SystemClass::Triangular => "triangular",
            SystemClass::LappoDanilevskii => "lappo_danilevskii",
            SystemClass::Reducible => "reducible",
        }
    }
}

impl fmt::Display for SystemClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SystemClass {
    type Err = FintError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(SystemClass::Constant),
            "algebraic_reducible" => Ok(SystemClass::AlgebraicReducible),
            "triangular" => Ok(SystemClass::Triangular),
            "lappo_danilevskii" => Ok(SystemClass::LappoDanilevskii),
            "reducible" => Ok(SystemClass::Reducible),
            other => Err(FintError::Input(format!("unknown class `{other}`"))),
        }
    }
}

/// `x' = Σ αⱼ(t)Aⱼ x + f(t)` on a verification window.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub n: usize,
    pub terms: Vec<Term>,
    pub forcing: Option<Vec<ScalarExpr>>,
    pub reduction: Option<Reduction>,
    pub window: (f64, f64),
    pub class_hint: Option<SystemClass>,
    pub t0: Option<f64>,
}

impl SystemSpec {
    /// Constant-coefficient homogeneous system on `[0, 1]`.
    pub fn constant(a: DMatrix<f64>) -> Self {
        SystemSpec {
            n: a.nrows(),
            terms: vec![Term {
                alpha: ScalarExpr::Const(1.0),
                a,
            }],
            forcing: None,
            reduction: None,
            window: (0.0, 1.0),
            class_hint: None,
            t0: None,
        }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        Self::constant(matrix_from_rows(rows))
    }

    pub fn with_forcing(mut self, f: &[&str]) -> Result<Self> {
        self.forcing = Some(f.iter().map(|s| parse_scalar(s)).collect::<Result<_>>()?);
        Ok(self)
    }

    pub fn with_window(mut self, lo: f64, hi: f64) -> Self {
        self.window = (lo, hi);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        if n == 0 {
            return Err(FintError::Input("dimension must be positive".into()));
        }
        if self.terms.is_empty() {
            return Err(FintError::Input(
                "at least one coefficient term is required".into(),
            ));
        }
        for (j, term) in self.terms.iter().enumerate() {
            if term.a.nrows() != n || term.a.ncols() != n {
                return Err(FintError::Input(format!(
                    "term {} matrix is {}x{}, expected {n}x{n}",
                    j + 1,
                    term.a.nrows(),
                    term.a.ncols()
                )));
            }
            if term.a.iter().any(|v| !v.is_finite()) {
                return Err(FintError::Input(format!(
                    "term {} has non-finite entries",
                    j + 1
                )));
            }
        }
        if let Some(f) = &self.forcing {
            if f.len() != n {
                return Err(FintError::Input(format!(
                    "forcing has length {}, expected {n}",
                    f.len()
                )));
            }
        }
        if let Some(r) = &self.reduction {
            if r.g.len() != n || r.g.iter().any(|row| row.len() != n) {
                return Err(FintError::Input(format!("reduction g must be {n}x{n}")));
            }
            if r.b.nrows() != n || r.b.ncols() != n {
                return Err(FintError::Input(format!("reduction B must be {n}x{n}")));
            }
        }
        let (lo, hi) = self.window;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(FintError::Input(format!("window [{lo}, {hi}] is empty")));
        }
        if let Some(t0) = self.t0 {
            if !t0.is_finite() {
                return Err(FintError::Input("t0 must be finite".into()));
            }
        }
        Ok(())
    }

    /// Anchor of every quadrature: `t0` if given, else the window start.
    pub fn anchor(&self) -> f64 {
        self.t0.unwrap_or(self.window.0)
    }

    /// `A` when every weight is constant.
    pub fn constant_matrix(&self) -> Option<DMatrix<f64>> {
        self.terms
            .iter()
            .try_fold(DMatrix::zeros(self.n, self.n), |acc, term| {
                term.alpha.as_const().map(|c| acc + &term.a * c)
            })
    }

    pub fn coefficient(&self, t: f64) -> Result<DMatrix<f64>> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for term in &self.terms {
            let w = term.alpha.eval(t)?;
            if w != 0.0 {
                a += &term.a * w;
            }
        }
        Ok(a)
    }

    /// Scalar expression for entry `(i, j)` of `A(t)`.
    pub fn coefficient_entry(&self, i: usize, j: usize) -> ScalarExpr {
        let mut acc = ScalarExpr::Const(0.0);
        for term in &self.terms {
            let a = term.a[(i, j)];
            if a != 0.0 {
                acc = acc + ScalarExpr::Const(a) * term.alpha.clone();
            }
        }
        acc
    }

    /// Forcing components, zero when absent.
    pub fn forcing_exprs(&self) -> Vec<ScalarExpr> {
        self.forcing
            .clone()
            .unwrap_or_else(|| vec![ScalarExpr::Const(0.0); self.n])
    }

    pub fn forcing_at(&self, t: f64) -> Result<Vec<f64>> {
        match &self.forcing {
            None => Ok(vec![0.0; self.n]),
            Some(f) => f.iter().map(|e| e.eval(t)).collect(),
        }
    }

    /// True when a forcing vector is present and not identically zero.
    pub fn has_forcing(&self) -> bool {
        self.forcing
            .as_ref()
            .is_some_and(|f| f.iter().any(|e| !e.is_zero()))
    }

    /// `A(t)x + f(t)`.
    pub fn rhs(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        out.iter_mut().for_each(|v| *v = 0.0);
        for term in &self.terms {
            let w = term.alpha.eval(t)?;
            if w == 0.0 {
                continue;
            }
            for i in 0..self.n {
                let mut acc = 0.0;
                for j in 0..self.n {
                    acc += term.a[(i, j)] * x[j];
                }
                out[i] += w * acc;
            }
        }
        if let Some(f) = &self.forcing {
            for (o, e) in out.iter_mut().zip(f) {
                *o += e.eval(t)?;
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SpecFile = serde_json::from_str(text)
            .map_err(|e| FintError::Input(format!("spec schema: {e}")))?;
        file.into_spec()
    }
}

pub fn matrix_from_rows(rows: &[&[f64]]) -> DMatrix<f64> {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    DMatrix::from_fn(n, m, |i, j| rows[i][j])
}

/// On-disk JSON schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    pub n: usize,
    pub terms: Vec<TermFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forcing: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reduction: Option<ReductionFile>,
    pub window: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_hint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermFile {
    pub alpha: String,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReductionFile {
    pub g: Vec<Vec<String>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(default)]
    pub time_scale: TimeScale,
}

fn square(rows: &[Vec<f64>], n: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(FintError::Input(format!("{what} must be {n}x{n}")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl SpecFile {
    pub fn into_spec(self) -> Result<SystemSpec> {
        let n = self.n;
        let terms = self
            .terms
            .iter()
            .enumerate()
            .map(|(j, t)| {
                Ok(Term {
                    alpha: parse_scalar(&t.alpha)?,
                    a: square(&t.a, n, &format!("terms[{j}].A"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let forcing = self
            .forcing
            .map(|f| {
                f.iter()
                    .map(|s| parse_scalar(s))
                    .collect::<Result<Vec<_>>>()
            })
            .transpose()?;
        let reduction = self
            .reduction
            .map(|r| -> Result<Reduction> {
                if r.g.len() != n || r.g.iter().any(|row| row.len() != n) {
                    return Err(FintError::Input(format!("reduction.g must be {n}x{n}")));
                }
                let g =
                    r.g.iter()
                        .map(|row| row.iter().map(|s| parse_scalar(s)).collect())
                        .collect::<Result<Vec<Vec<_>>>>()?;
                Ok(Reduction {
                    g,
                    b: square(&r.b, n, "reduction.B")?,
                    time_scale: r.time_scale,
                })
            })
            .transpose()?;
        let class_hint = self.class_hint.as_deref().map(str::parse).transpose()?;
        let spec = SystemSpec {
            n,
            terms,
            forcing,
            reduction,
            window: (self.window[0], self.window[1]),
            class_hint,
            t0: self.t0,
        };
        spec.validate()?;
        Ok(spec)
    }
}
