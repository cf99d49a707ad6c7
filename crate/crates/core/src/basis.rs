//! Output of the constructors: integrals with provenance and singular sets.

use std::fmt;
use std::str::FromStr;

use serde_json::{json, Value};

use crate::error::{FintError, Result};
use crate::expr::{EvalPoint, IntegralExpr};
use crate::system::SystemClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Autonomous,
    Full,
    Forced,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Autonomous => "autonomous",
            Mode::Full => "full",
            Mode::Forced => "forced",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = FintError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "autonomous" => Ok(Mode::Autonomous),
            "full" => Ok(Mode::Full),
            "forced" => Ok(Mode::Forced),
            other => Err(FintError::Input(format!("unknown mode `{other}`"))),
        }
    }
}

/// Zero sets outside of which an integral is defined.
#[derive(Debug, Clone)]
pub struct SingularSet {
    pub exprs: Vec<IntegralExpr>,
}

impl SingularSet {
    pub fn of(f: &IntegralExpr) -> Self {
        SingularSet {
            exprs: f.singular_exprs(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.exprs.is_empty()
    }

    pub fn describe(&self) -> String {
        if self.exprs.is_empty() {
            return "none".into();
        }
        self.exprs
            .iter()
            .map(|e| format!("{e} = 0"))
            .collect::<Vec<_>>()
            .join(" or ")
    }

    /// Smallest `|expr|` over the set at a point; infinite when empty.
    pub fn clearance(&self, p: &EvalPoint, quad_tol: f64) -> Result<f64> {
        let mut best = f64::INFINITY;
        for e in &self.exprs {
            best = best.min(e.eval_at(p, quad_tol)?.abs());
        }
        Ok(best)
    }
}

/// One constructed first integral.
#[derive(Debug, Clone)]
pub struct Integral {
    pub expr: IntegralExpr,
    /// Name of the result the construction follows.
    pub theorem: String,
    pub singular: SingularSet,
}

impl Integral {
    pub fn new(expr: IntegralExpr, theorem: impl Into<String>) -> Self {
        let singular = SingularSet::of(&expr);
        Integral {
            expr,
            theorem: theorem.into(),
            singular,
        }
    }

    pub fn to_json(&self) -> Value {
        json!({
            "expr": self.expr.to_string(),
            "provenance": self.theorem,
            "singular_set": self.singular.describe(),
            "singular_exprs": self.singular.exprs.iter().map(|e| e.to_json()).collect::<Vec<_>>(),
            "tree": self.expr.to_json(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct BasisResult {
    pub n: usize,
    pub class: SystemClass,
    pub mode: Mode,
    pub integrals: Vec<Integral>,
    pub notes: Vec<String>,
}

impl BasisResult {
    pub fn new(n: usize, class: SystemClass, mode: Mode) -> Self {
        BasisResult {
            n,
            class,
            mode,
            integrals: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, expr: IntegralExpr, theorem: impl Into<String>) {
        self.integrals.push(Integral::new(expr, theorem));
    }

    pub fn len(&self) -> usize {
        self.integrals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.integrals.is_empty()
    }

    pub fn exprs(&self) -> Vec<IntegralExpr> {
        self.integrals.iter().map(|i| i.expr.clone()).collect()
    }

    /// Count required by the mode: `n − 1` autonomous, `n` otherwise.
    pub fn expected_len(&self) -> usize {
        match self.mode {
            Mode::Autonomous => self.n - 1,
            Mode::Full | Mode::Forced => self.n,
        }
    }

    pub fn to_json(&self) -> Value {
        json!({
            "n": self.n,
            "class": self.class.name(),
            "mode": self.mode.name(),
            "integrals": self.integrals.iter().map(Integral::to_json).collect::<Vec<_>>(),
            "notes": self.notes,
        })
    }
}
