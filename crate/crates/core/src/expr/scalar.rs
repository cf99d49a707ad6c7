//! Scalar functions of time: the coefficients αⱼ(t), forcing components and
//! transformation entries that appear in system specifications.

use std::fmt;
use std::ops;

use crate::error::{FintError, Result};

/// Elementary functions accepted by the parser.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sinh,
    Cosh,
    Tanh,
    Atan,
    Sqrt,
    Abs,
}

impl Func {
    pub const ALL: [Func; 11] = [
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Exp,
        Func::Ln,
        Func::Sinh,
        Func::Cosh,
        Func::Tanh,
        Func::Atan,
        Func::Sqrt,
        Func::Abs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Tanh => "tanh",
            Func::Atan => "atan",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.iter().copied().find(|f| f.name() == name)
    }

    fn apply(self, v: f64) -> Result<f64> {
        let out = match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Tan => {
                if v.cos().abs() < 1e-15 {
                    return Err(FintError::domain(format!("tan pole at {v}")));
                }
                v.tan()
            }
            Func::Exp => v.exp(),
            Func::Ln => {
                if v <= 0.0 {
                    return Err(FintError::domain(format!("ln of non-positive value {v}")));
                }
                v.ln()
            }
            Func::Sinh => v.sinh(),
            Func::Cosh => v.cosh(),
            Func::Tanh => v.tanh(),
            Func::Atan => v.atan(),
            Func::Sqrt => {
                if v < 0.0 {
                    return Err(FintError::domain(format!("sqrt of negative value {v}")));
                }
                v.sqrt()
            }
            Func::Abs => v.abs(),
        };
        Ok(out)
    }
}

/// Expression tree in the single variable `t`.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarExpr {
    Const(f64),
    Time,
    Add(Box<ScalarExpr>, Box<ScalarExpr>),
    Sub(Box<ScalarExpr>, Box<ScalarExpr>),
    Mul(Box<ScalarExpr>, Box<ScalarExpr>),
    Div(Box<ScalarExpr>, Box<ScalarExpr>),
    Neg(Box<ScalarExpr>),
    Pow(Box<ScalarExpr>, Box<ScalarExpr>),
    Call(Func, Box<ScalarExpr>),
}

impl ScalarExpr {
    pub fn constant(v: f64) -> Self {
        ScalarExpr::Const(v)
    }

    pub fn time() -> Self {
        ScalarExpr::Time
    }

    pub fn call(f: Func, arg: ScalarExpr) -> Self {
        ScalarExpr::Call(f, Box::new(arg))
    }

    pub fn exp(self) -> Self {
        Self::call(Func::Exp, self)
    }

    pub fn ln(self) -> Self {
        Self::call(Func::Ln, self)
    }

    pub fn sin(self) -> Self {
        Self::call(Func::Sin, self)
    }

    pub fn cos(self) -> Self {
        Self::call(Func::Cos, self)
    }

    /// `self ^ e` with trivial exponents folded.
    pub fn pow(self, e: ScalarExpr) -> Self {
        match (&self, &e) {
            (_, ScalarExpr::Const(c)) if *c == 1.0 => self,
            (_, ScalarExpr::Const(c)) if *c == 0.0 => ScalarExpr::Const(1.0),
            (ScalarExpr::Const(a), ScalarExpr::Const(b)) => ScalarExpr::Const(a.powf(*b)),
            _ => ScalarExpr::Pow(Box::new(self), Box::new(e)),
        }
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            ScalarExpr::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    /// Evaluate at `t`. Singular points raise a domain error instead of
    /// returning a non-finite value.
    pub fn eval(&self, t: f64) -> Result<f64> {
        let v = match self {
            ScalarExpr::Const(c) => *c,
            ScalarExpr::Time => t,
            ScalarExpr::Add(a, b) => a.eval(t)? + b.eval(t)?,
            ScalarExpr::Sub(a, b) => a.eval(t)? - b.eval(t)?,
            ScalarExpr::Mul(a, b) => a.eval(t)? * b.eval(t)?,
            ScalarExpr::Div(a, b) => {
                let num = a.eval(t)?;
                let den = b.eval(t)?;
                if den == 0.0 {
                    return Err(FintError::domain(format!("division by zero at t={t}")));
                }
                num / den
            }
            ScalarExpr::Neg(a) => -a.eval(t)?,
            ScalarExpr::Pow(a, b) => a.eval(t)?.powf(b.eval(t)?),
            ScalarExpr::Call(f, a) => f.apply(a.eval(t)?)?,
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(FintError::domain(format!(
                "non-finite value in `{self}` at t={t}"
            )))
        }
    }

    /// Render with a chosen name for the time variable.
    pub fn render(&self, var: &str) -> String {
        let mut out = String::new();
        write_scalar(&mut out, self, var);
        out
    }

    pub(crate) fn level(&self) -> u8 {
        match self {
            ScalarExpr::Add(..) | ScalarExpr::Sub(..) => 1,
            ScalarExpr::Mul(..) | ScalarExpr::Div(..) => 2,
            ScalarExpr::Neg(_) => 3,
            ScalarExpr::Const(c) if c.is_sign_negative() && *c != 0.0 => 3,
            ScalarExpr::Pow(..) => 4,
            _ => 5,
        }
    }
}

/// Shortest decimal rendering that parses back to the same double.
pub fn format_number(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else if v.abs() >= 1e-4 && v.abs() < 1e15 {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn write_child(out: &mut String, e: &ScalarExpr, min: u8, var: &str) {
    if e.level() < min {
        out.push('(');
        write_scalar(out, e, var);
        out.push(')');
    } else {
        write_scalar(out, e, var);
    }
}

// Right operands of binary operators never start with a bare minus sign.
fn write_right(out: &mut String, e: &ScalarExpr, min: u8, var: &str) {
    let min = if e.level() == 3 { 4 } else { min };
    write_child(out, e, min, var);
}

fn write_scalar(out: &mut String, e: &ScalarExpr, var: &str) {
    match e {
        ScalarExpr::Const(c) => out.push_str(&format_number(*c)),
        ScalarExpr::Time => out.push_str(var),
        ScalarExpr::Add(a, b) => {
            write_child(out, a, 1, var);
            out.push('+');
            write_right(out, b, 2, var);
        }
        ScalarExpr::Sub(a, b) => {
            write_child(out, a, 1, var);
            out.push('-');
            write_right(out, b, 2, var);
        }
        ScalarExpr::Mul(a, b) => {
            write_child(out, a, 2, var);
            out.push('*');
            write_right(out, b, 3, var);
        }
        ScalarExpr::Div(a, b) => {
            write_child(out, a, 2, var);
            out.push('/');
            write_right(out, b, 3, var);
        }
        ScalarExpr::Neg(a) => {
            out.push('-');
            write_child(out, a, 3, var);
        }
        ScalarExpr::Pow(a, b) => {
            write_child(out, a, 5, var);
            out.push('^');
            write_child(out, b, 3, var);
        }
        ScalarExpr::Call(f, a) => {
            out.push_str(f.name());
            out.push('(');
            write_scalar(out, a, var);
            out.push(')');
        }
    }
}

impl fmt::Display for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render("t"))
    }
}

/// `−e` without a sign, when `e` is a product with a negative leading factor.
pub(crate) fn negated(e: &ScalarExpr) -> Option<ScalarExpr> {
    match e {
        ScalarExpr::Const(c) if *c < 0.0 => Some(ScalarExpr::Const(-c)),
        ScalarExpr::Neg(a) => Some((**a).clone()),
        ScalarExpr::Mul(a, b) => negated(a).map(|a| ScalarExpr::Mul(Box::new(a), b.clone())),
        _ => None,
    }
}

impl ops::Add for ScalarExpr {
    type Output = ScalarExpr;
    fn add(self, rhs: ScalarExpr) -> ScalarExpr {
        if let (ScalarExpr::Mul(..), Some(pos)) = (&rhs, negated(&rhs)) {
            if self.as_const() != Some(0.0) {
                return ScalarExpr::Sub(Box::new(self), Box::new(pos));
            }
        }
        match (&self, &rhs) {
            (ScalarExpr::Const(a), ScalarExpr::Const(b)) => ScalarExpr::Const(a + b),
            (ScalarExpr::Const(a), _) if *a == 0.0 => rhs,
            (_, ScalarExpr::Const(b)) if *b == 0.0 => self,
            (_, ScalarExpr::Const(b)) if *b < 0.0 => {
                ScalarExpr::Sub(Box::new(self), Box::new(ScalarExpr::Const(-b)))
            }
            (_, ScalarExpr::Neg(b)) => ScalarExpr::Sub(Box::new(self), b.clone()),
            _ => ScalarExpr::Add(Box::new(self), Box::new(rhs)),
        }
    }
}

impl ops::Sub for ScalarExpr {
    type Output = ScalarExpr;
    fn sub(self, rhs: ScalarExpr) -> ScalarExpr {
        if let (ScalarExpr::Mul(..), Some(pos)) = (&rhs, negated(&rhs)) {
            if self.as_const() != Some(0.0) {
                return ScalarExpr::Add(Box::new(self), Box::new(pos));
            }
        }
        match (&self, &rhs) {
            (ScalarExpr::Const(a), ScalarExpr::Const(b)) => ScalarExpr::Const(a - b),
            (ScalarExpr::Const(a), _) if *a == 0.0 => -rhs,
            (_, ScalarExpr::Const(b)) if *b == 0.0 => self,
            (_, ScalarExpr::Const(b)) if *b < 0.0 => {
                ScalarExpr::Add(Box::new(self), Box::new(ScalarExpr::Const(-b)))
            }
            (_, ScalarExpr::Neg(b)) => ScalarExpr::Add(Box::new(self), b.clone()),
            _ => ScalarExpr::Sub(Box::new(self), Box::new(rhs)),
        }
    }
}

impl ops::Mul for ScalarExpr {
    type Output = ScalarExpr;
    fn mul(self, rhs: ScalarExpr) -> ScalarExpr {
        match (&self, &rhs) {
            (ScalarExpr::Const(a), ScalarExpr::Const(b)) => ScalarExpr::Const(a * b),
            (ScalarExpr::Const(a), _) | (_, ScalarExpr::Const(a)) if *a == 0.0 => {
                ScalarExpr::Const(0.0)
            }
            (ScalarExpr::Const(a), _) if *a == 1.0 => rhs,
            (_, ScalarExpr::Const(b)) if *b == 1.0 => self,
            (ScalarExpr::Const(a), _) if *a == -1.0 => -rhs,
            (_, ScalarExpr::Const(b)) if *b == -1.0 => -self,
            (ScalarExpr::Const(a), ScalarExpr::Neg(b)) => ScalarExpr::Const(-a) * (**b).clone(),
            (_, ScalarExpr::Neg(b)) => -(self * (**b).clone()),
            _ => ScalarExpr::Mul(Box::new(self), Box::new(rhs)),
        }
    }
}

impl ops::Div for ScalarExpr {
    type Output = ScalarExpr;
    fn div(self, rhs: ScalarExpr) -> ScalarExpr {
        match (&self, &rhs) {
            (ScalarExpr::Const(a), ScalarExpr::Const(b)) if *b != 0.0 => ScalarExpr::Const(a / b),
            (ScalarExpr::Const(a), _) if *a == 0.0 => ScalarExpr::Const(0.0),
            (_, ScalarExpr::Const(b)) if *b == 1.0 => self,
            _ => ScalarExpr::Div(Box::new(self), Box::new(rhs)),
        }
    }
}

impl ops::Neg for ScalarExpr {
    type Output = ScalarExpr;
    fn neg(self) -> ScalarExpr {
        match self {
            ScalarExpr::Const(c) => ScalarExpr::Const(-c),
            ScalarExpr::Neg(a) => *a,
            ScalarExpr::Mul(a, b) if matches!(*a, ScalarExpr::Const(_)) => {
                ScalarExpr::Mul(Box::new(-*a), b)
            }
            other => ScalarExpr::Neg(Box::new(other)),
        }
    }
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let lit = &text[start..i];
                let v: f64 = lit.parse().map_err(|_| FintError::Syntax {
                    offset: start,
                    message: format!("malformed number `{lit}`"),
                })?;
                toks.push((Tok::Num(v), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                toks.push((Tok::Ident(text[start..i].to_string()), start));
                continue;
            }
            _ => {
                let ch = text[start..].chars().next().unwrap_or('?');
                return Err(FintError::Syntax {
                    offset: start,
                    message: format!("unexpected character `{ch}`"),
                });
            }
        };
        toks.push((tok, start));
        i += 1;
    }
    toks.push((Tok::End, text.len()));
    Ok(toks)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, message: impl Into<String>) -> FintError {
        FintError::Syntax {
            offset: self.offset(),
            message: message.into(),
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<()> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.err(format!("expected {what}")))
        }
    }

    fn expr(&mut self) -> Result<ScalarExpr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = ScalarExpr::Add(Box::new(lhs), Box::new(rhs));
                }
                Tok::Minus => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = ScalarExpr::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<ScalarExpr> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    let rhs = self.unary()?;
                    lhs = ScalarExpr::Mul(Box::new(lhs), Box::new(rhs));
                }
                Tok::Slash => {
                    self.bump();
                    let rhs = self.unary()?;
                    lhs = ScalarExpr::Div(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<ScalarExpr> {
        if *self.peek() == Tok::Minus {
            self.bump();
            let inner = self.unary()?;
            return Ok(ScalarExpr::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<ScalarExpr> {
        let base = self.atom()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let exp = self.unary()?;
            return Ok(ScalarExpr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<ScalarExpr> {
        let at = self.offset();
        match self.bump() {
            Tok::Num(v) => Ok(ScalarExpr::Const(v)),
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                if name == "t" {
                    return Ok(ScalarExpr::Time);
                }
                let func = Func::from_name(&name)
                    .ok_or(FintError::UnknownFunction { offset: at, name })?;
                self.expect(Tok::LParen, "`(` after function name")?;
                let arg = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(ScalarExpr::Call(func, Box::new(arg)))
            }
            Tok::End => Err(FintError::Syntax {
                offset: at,
                message: "unexpected end of input".into(),
            }),
            other => Err(FintError::Syntax {
                offset: at,
                message: format!("unexpected token {other:?}"),
            }),
        }
    }
}

/// Parse a scalar expression in `t`.
///
/// Precedence from tightest: `^` (right associative), unary minus, `* /`,
/// then `+ -`.
pub fn parse_scalar(text: &str) -> Result<ScalarExpr> {
    if text.trim().is_empty() {
        return Err(FintError::Syntax {
            offset: 0,
            message: "empty expression".into(),
        });
    }
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.err("trailing input"));
    }
    Ok(e)
}

pub fn eval_scalar(e: &ScalarExpr, t: f64) -> Result<f64> {
    e.eval(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t() -> Box<ScalarExpr> {
        Box::new(ScalarExpr::Time)
    }

    #[test]
    fn parses_function_call() {
        assert_eq!(
            parse_scalar("sin(t)").unwrap(),
            ScalarExpr::Call(Func::Sin, t())
        );
    }

    #[test]
    fn parses_polynomial_entry() {
        let e = parse_scalar("1+t^2").unwrap();
        let want = ScalarExpr::Add(
            Box::new(ScalarExpr::Const(1.0)),
            Box::new(ScalarExpr::Pow(t(), Box::new(ScalarExpr::Const(2.0)))),
        );
        assert_eq!(e, want);
    }

    #[test]
    fn product_tree_value() {
        let e = parse_scalar("2*t*exp(t^2)").unwrap();
        let want = 2.0 * 1f64.exp();
        assert!((e.eval(1.0).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(parse_scalar("-t^2").unwrap().eval(3.0).unwrap(), -9.0);
        assert_eq!(parse_scalar("2^3^2").unwrap().eval(0.0).unwrap(), 512.0);
        assert_eq!(parse_scalar("8/4/2").unwrap().eval(0.0).unwrap(), 1.0);
        assert_eq!(parse_scalar("2^-1").unwrap().eval(0.0).unwrap(), 0.5);
        assert_eq!(parse_scalar("1-2-3").unwrap().eval(0.0).unwrap(), -4.0);
        assert_eq!(parse_scalar("1.5e2*t").unwrap().eval(2.0).unwrap(), 300.0);
    }

    #[test]
    fn constants_and_odd_functions() {
        assert_eq!(ScalarExpr::Const(5.0).eval(3.0).unwrap(), 5.0);
        assert_eq!(
            parse_scalar("tanh(t)+3*t^2").unwrap().eval(0.0).unwrap(),
            0.0
        );
    }

    #[test]
    fn singular_nodes_raise() {
        assert!(matches!(
            parse_scalar("1/t").unwrap().eval(0.0),
            Err(FintError::Domain(_))
        ));
        assert!(parse_scalar("ln(t)").unwrap().eval(-1.0).is_err());
        assert!(parse_scalar("sqrt(t)").unwrap().eval(-1.0).is_err());
        assert!(parse_scalar("t^(-1)").unwrap().eval(0.0).is_err());
    }

    #[test]
    fn errors_carry_offsets() {
        match parse_scalar("1+foo(t)") {
            Err(FintError::UnknownFunction { offset, name }) => {
                assert_eq!(offset, 2);
                assert_eq!(name, "foo");
            }
            other => panic!("unexpected {other:?}"),
        }
        match parse_scalar("1+*t") {
            Err(FintError::Syntax { offset, .. }) => assert_eq!(offset, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_scalar("(t").is_err());
        assert!(parse_scalar("t t").is_err());
        assert!(parse_scalar("").is_err());
        assert!(parse_scalar("x").is_err());
    }

    #[test]
    fn formatting_is_minimal() {
        let cases = [
            "1+t^2",
            "-t^2",
            "2*t*exp(t^2)",
            "(t+1)*(t-1)",
            "t-(t-1)",
            "sin(t)/(1+t)",
        ];
        for c in cases {
            assert_eq!(parse_scalar(c).unwrap().to_string(), c);
        }
        assert_eq!(
            ScalarExpr::Const(-2.0).pow(ScalarExpr::Time).to_string(),
            "(-2)^t"
        );
    }

    fn arb_scalar() -> impl Strategy<Value = ScalarExpr> {
        let leaf = prop_oneof![
            (-5.0f64..5.0).prop_map(ScalarExpr::Const),
            (0i32..6).prop_map(|k| ScalarExpr::Const(k as f64)),
            Just(ScalarExpr::Time),
        ];
        leaf.prop_recursive(4, 24, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| ScalarExpr::Add(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| ScalarExpr::Sub(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| ScalarExpr::Mul(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| ScalarExpr::Div(Box::new(a), Box::new(b))),
                inner.clone().prop_map(|a| ScalarExpr::Neg(Box::new(a))),
                (inner.clone(), 0i32..4).prop_map(|(a, k)| ScalarExpr::Pow(
                    Box::new(a),
                    Box::new(ScalarExpr::Const(k as f64))
                )),
                (inner, 0usize..11).prop_map(|(a, k)| ScalarExpr::Call(Func::ALL[k], Box::new(a))),
            ]
        })
    }

    proptest! {
        #[test]
        fn format_parse_round_trip(e in arb_scalar(), ts in proptest::collection::vec(-3.0f64..3.0, 100)) {
            let text = e.to_string();
            let back = parse_scalar(&text).unwrap();
            for t in ts {
                match (e.eval(t), back.eval(t)) {
                    (Ok(a), Ok(b)) => {
                        let scale = a.abs().max(1.0);
                        prop_assert!((a - b).abs() <= 4.0 * f64::EPSILON * scale, "{} vs {} for {}", a, b, text);
                    }
                    (Err(_), Err(_)) => {}
                    (a, b) => prop_assert!(false, "{:?} vs {:?} for {}", a, b, text),
                }
            }
        }
    }
}
