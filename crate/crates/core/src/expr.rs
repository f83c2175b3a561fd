//! A small real-valued expression language over the variables `t`, `x`, `u`.
//!
//! Grammar, lowest precedence first:
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?
//! primary := number | variable | 'pi' | name '(' sum ')' | '(' sum ')'
//! ```
//!
//! A minus sign written directly in front of a numeric literal (and not
//! followed by `^`) is folded into a negative constant. The printer relies on
//! this: negative constants print as `(-c)`, negated non-negative constants
//! as `-(c)`, so `parse(print(e)) == e` for every tree.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    T,
    X,
    U,
}

impl Var {
    pub const ALL: [Var; 3] = [Var::T, Var::X, Var::U];

    fn name(self) -> &'static str {
        match self {
            Var::T => "t",
            Var::X => "x",
            Var::U => "u",
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Ln,
    Sin,
    Cos,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Call(Func, Box<Expr>),
}

/// Variable bindings for [`Expr::eval`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Env {
    pub t: f64,
    pub x: f64,
    pub u: f64,
}

impl Env {
    pub fn new(t: f64, x: f64, u: f64) -> Self {
        Self { t, x, u }
    }

    fn get(&self, v: Var) -> f64 {
        match v {
            Var::T => self.t,
            Var::X => self.x,
            Var::U => self.u,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("syntax error at byte {offset}: found {found}, expected one of {}", .expected.join(", "))]
pub struct SyntaxError {
    pub offset: usize,
    pub found: String,
    pub expected: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum EvalFault {
    #[error("ln of non-positive value {0}")]
    LnNonPositive(f64),
    #[error("division by zero")]
    DivisionByZero,
    #[error("sqrt of negative value {0}")]
    SqrtNegative(f64),
    #[error("{base}^{exponent} is undefined over the reals")]
    PowDomain { base: f64, exponent: f64 },
    #[error("non-finite result")]
    NonFinite,
}

/// Evaluation failure; `path` lists child indices from the root to the
/// failing node.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{fault} at node {path:?} ({node})")]
pub struct EvalError {
    pub fault: EvalFault,
    pub path: Vec<u8>,
    pub node: String,
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, SyntaxError> {
        Self::parse_with(src, &Var::ALL)
    }

    /// Parses while only accepting the listed variables.
    pub fn parse_with(src: &str, allowed: &[Var]) -> Result<Expr, SyntaxError> {
        let mut p = Parser {
            src,
            pos: 0,
            allowed,
        };
        p.skip_ws();
        if p.pos == src.len() {
            return Err(p.error(&["expression"]));
        }
        let e = p.sum()?;
        p.skip_ws();
        if p.pos != src.len() {
            return Err(p.error(&["operator", "end of input"]));
        }
        Ok(e)
    }

    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    pub fn is_const(&self) -> Option<f64> {
        match *self {
            Expr::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn depends_on(&self, v: Var) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(w) => *w == v,
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => a.depends_on(v) || b.depends_on(v),
            Expr::Neg(a) | Expr::Call(_, a) => a.depends_on(v),
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Expr::Const(_) => "const",
            Expr::Var(_) => "var",
            Expr::Add(..) => "add",
            Expr::Sub(..) => "sub",
            Expr::Mul(..) => "mul",
            Expr::Div(..) => "div",
            Expr::Pow(..) => "pow",
            Expr::Neg(_) => "neg",
            Expr::Call(f, _) => f.name(),
        }
    }

    pub fn eval(&self, env: &Env) -> Result<f64, EvalError> {
        let fail = |fault| {
            Err(EvalError {
                fault,
                path: Vec::new(),
                node: self.kind().to_string(),
            })
        };
        let child = |i: u8, e: &Expr| {
            e.eval(env).map_err(|mut err| {
                err.path.insert(0, i);
                err
            })
        };
        let v = match self {
            Expr::Const(c) => *c,
            Expr::Var(v) => env.get(*v),
            Expr::Add(a, b) => child(0, a)? + child(1, b)?,
            Expr::Sub(a, b) => child(0, a)? - child(1, b)?,
            Expr::Mul(a, b) => child(0, a)? * child(1, b)?,
            Expr::Div(a, b) => {
                let (n, d) = (child(0, a)?, child(1, b)?);
                if d == 0.0 {
                    return fail(EvalFault::DivisionByZero);
                }
                n / d
            }
            Expr::Pow(a, b) => {
                let (base, exponent) = (child(0, a)?, child(1, b)?);
                if exponent.fract() == 0.0 && exponent.abs() < 2f64.powi(31) {
                    if base == 0.0 && exponent < 0.0 {
                        return fail(EvalFault::DivisionByZero);
                    }
                    base.powi(exponent as i32)
                } else if base > 0.0 || (base == 0.0 && exponent > 0.0) {
                    base.powf(exponent)
                } else {
                    return fail(EvalFault::PowDomain { base, exponent });
                }
            }
            Expr::Neg(a) => -child(0, a)?,
            Expr::Call(f, a) => {
                let x = child(0, a)?;
                match f {
                    Func::Exp => x.exp(),
                    Func::Ln if x <= 0.0 => return fail(EvalFault::LnNonPositive(x)),
                    Func::Ln => x.ln(),
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Sqrt if x < 0.0 => return fail(EvalFault::SqrtNegative(x)),
                    Func::Sqrt => x.sqrt(),
                }
            }
        };
        if !v.is_finite() {
            return fail(EvalFault::NonFinite);
        }
        Ok(v)
    }

    /// Exact symbolic partial derivative with constant folding.
    pub fn diff(&self, v: Var) -> Expr {
        use Expr::*;
        if !self.depends_on(v) {
            return Const(0.0);
        }
        match self {
            Const(_) => Const(0.0),
            Var(w) => Const(if *w == v { 1.0 } else { 0.0 }),
            Add(a, b) => add(a.diff(v), b.diff(v)),
            Sub(a, b) => sub(a.diff(v), b.diff(v)),
            Mul(a, b) => add(mul(a.diff(v), (**b).clone()), mul((**a).clone(), b.diff(v))),
            Div(a, b) => div(
                sub(mul(a.diff(v), (**b).clone()), mul((**a).clone(), b.diff(v))),
                pow((**b).clone(), Const(2.0)),
            ),
            Pow(a, b) => match b.is_const() {
                Some(c) => mul(mul(Const(c), pow((**a).clone(), Const(c - 1.0))), a.diff(v)),
                None if !a.depends_on(v) => {
                    mul(mul(self.clone(), call(Func::Ln, (**a).clone())), b.diff(v))
                }
                None => mul(
                    self.clone(),
                    add(
                        mul(b.diff(v), call(Func::Ln, (**a).clone())),
                        div(mul((**b).clone(), a.diff(v)), (**a).clone()),
                    ),
                ),
            },
            Neg(a) => neg(a.diff(v)),
            Call(f, a) => {
                let inner = a.diff(v);
                let a = (**a).clone();
                match f {
                    Func::Exp => mul(call(Func::Exp, a), inner),
                    Func::Ln => div(inner, a),
                    Func::Sin => mul(call(Func::Cos, a), inner),
                    Func::Cos => neg(mul(call(Func::Sin, a), inner)),
                    Func::Sqrt => div(inner, mul(Const(2.0), call(Func::Sqrt, a))),
                }
            }
        }
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (a.is_const(), b.is_const()) {
        (Some(x), Some(y)) => Expr::Const(x + y),
        (Some(0.0), _) => b,
        (_, Some(0.0)) => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (a.is_const(), b.is_const()) {
        (Some(x), Some(y)) => Expr::Const(x - y),
        (_, Some(0.0)) => a,
        (Some(0.0), _) => neg(b),
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (a.is_const(), b.is_const()) {
        (Some(x), Some(y)) => Expr::Const(x * y),
        (Some(x), _) | (_, Some(x)) if x == 0.0 => Expr::Const(0.0),
        (Some(1.0), _) => b,
        (_, Some(1.0)) => a,
        (Some(-1.0), _) => neg(b),
        (_, Some(-1.0)) => neg(a),
        (None, Some(_)) => mul(b, a),
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (a.is_const(), b.is_const()) {
        (Some(x), Some(y)) if y != 0.0 => Expr::Const(x / y),
        (Some(0.0), _) => Expr::Const(0.0),
        (_, Some(1.0)) => a,
        _ => Expr::Div(Box::new(a), Box::new(b)),
    }
}

fn pow(a: Expr, b: Expr) -> Expr {
    match b.is_const() {
        Some(1.0) => a,
        Some(0.0) => Expr::Const(1.0),
        _ => Expr::Pow(Box::new(a), Box::new(b)),
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Neg(inner) => *inner,
        Expr::Mul(l, r) if l.is_const().is_some() => {
            Expr::Mul(Box::new(Expr::Const(-l.is_const().unwrap())), r)
        }
        other => Expr::Neg(Box::new(other)),
    }
}

fn call(f: Func, a: Expr) -> Expr {
    Expr::Call(f, Box::new(a))
}

// Binding strength used by the printer.
const PREC_SUM: u8 = 1;
const PREC_PRODUCT: u8 = 2;
const PREC_UNARY: u8 = 3;
const PREC_ATOM: u8 = 5;

impl Expr {
    fn prec(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => PREC_SUM,
            Expr::Mul(..) | Expr::Div(..) => PREC_PRODUCT,
            Expr::Neg(_) => PREC_UNARY,
            Expr::Pow(..) => 4,
            Expr::Const(_) | Expr::Var(_) | Expr::Call(..) => PREC_ATOM,
        }
    }

    fn write_at(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        if self.prec() < min {
            f.write_str("(")?;
            self.write_at(f, 0)?;
            return f.write_str(")");
        }
        match self {
            Expr::Const(c) if c.is_sign_negative() => write!(f, "(-{})", -c),
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Add(a, b) => binary(f, a, " + ", b, PREC_SUM, PREC_PRODUCT),
            Expr::Sub(a, b) => binary(f, a, " - ", b, PREC_SUM, PREC_PRODUCT),
            Expr::Mul(a, b) => binary(f, a, "*", b, PREC_PRODUCT, PREC_UNARY),
            Expr::Div(a, b) => binary(f, a, "/", b, PREC_PRODUCT, PREC_UNARY),
            Expr::Pow(a, b) => binary(f, a, "^", b, PREC_ATOM, PREC_UNARY),
            Expr::Neg(a) => {
                f.write_str("-")?;
                match **a {
                    Expr::Const(c) if !c.is_sign_negative() => write!(f, "({c})"),
                    _ => a.write_at(f, PREC_UNARY),
                }
            }
            Expr::Call(func, a) => {
                write!(f, "{}(", func.name())?;
                a.write_at(f, 0)?;
                f.write_str(")")
            }
        }
    }
}

fn binary(
    f: &mut fmt::Formatter<'_>,
    a: &Expr,
    op: &str,
    b: &Expr,
    left: u8,
    right: u8,
) -> fmt::Result {
    a.write_at(f, left)?;
    f.write_str(op)?;
    b.write_at(f, right)
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_at(f, 0)
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    allowed: &'a [Var],
}

impl<'a> Parser<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.rest().chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn error(&self, expected: &[&str]) -> SyntaxError {
        let found = match self.rest().chars().next() {
            None => String::from("end of input"),
            Some(c) => format!("'{c}'"),
        };
        SyntaxError {
            offset: self.pos,
            found,
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn sum(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.product()?;
        loop {
            if self.eat('+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.product()?));
            } else if self.eat('-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.product()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn product(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, SyntaxError> {
        if !self.eat('-') {
            return self.power();
        }
        let save = self.pos;
        if matches!(self.peek(), Some(c) if c.is_ascii_digit() || c == '.') {
            let value = self.number()?;
            if self.peek() != Some('^') {
                return Ok(Expr::Const(-value));
            }
            self.pos = save;
        }
        Ok(Expr::Neg(Box::new(self.unary()?)))
    }

    fn power(&mut self) -> Result<Expr, SyntaxError> {
        let base = self.primary()?;
        if self.eat('^') {
            return Ok(Expr::Pow(Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn number(&mut self) -> Result<f64, SyntaxError> {
        self.skip_ws();
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut end = start;
        while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
            end += 1;
        }
        if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
            let mut k = end + 1;
            if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                k += 1;
            }
            if k < bytes.len() && bytes[k].is_ascii_digit() {
                while k < bytes.len() && bytes[k].is_ascii_digit() {
                    k += 1;
                }
                end = k;
            }
        }
        match self.src[start..end].parse::<f64>() {
            Ok(v) if v.is_finite() => {
                self.pos = end;
                Ok(v)
            }
            _ => Err(self.error(&["number"])),
        }
    }

    fn primary(&mut self) -> Result<Expr, SyntaxError> {
        const EXPECTED: [&str; 5] = ["number", "variable", "function", "'('", "'-'"];
        match self.peek() {
            Some(c) if c.is_ascii_digit() || c == '.' => Ok(Expr::Const(self.number()?)),
            Some('(') => {
                self.pos += 1;
                let inner = self.sum()?;
                if !self.eat(')') {
                    return Err(self.error(&["')'", "operator"]));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                let len = self
                    .rest()
                    .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
                    .unwrap_or(self.rest().len());
                let name = &self.src[start..start + len];
                self.pos += len;
                if let Some(func) = Func::from_name(name) {
                    if !self.eat('(') {
                        return Err(self.error(&["'('"]));
                    }
                    let arg = self.sum()?;
                    if !self.eat(')') {
                        return Err(self.error(&["')'", "operator"]));
                    }
                    return Ok(call(func, arg));
                }
                if name == "pi" {
                    return Ok(Expr::Const(core::f64::consts::PI));
                }
                match self.allowed.iter().find(|v| v.name() == name) {
                    Some(v) => Ok(Expr::Var(*v)),
                    None => {
                        self.pos = start;
                        let mut expected: Vec<String> =
                            self.allowed.iter().map(|v| format!("'{v}'")).collect();
                        expected.extend(["function", "'pi'"].iter().map(|s| s.to_string()));
                        Err(SyntaxError {
                            offset: start,
                            found: format!("'{name}'"),
                            expected,
                        })
                    }
                }
            }
            _ => Err(self.error(&EXPECTED)),
        }
    }
}
