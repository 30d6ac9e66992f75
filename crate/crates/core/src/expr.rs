//! Scalar expressions in the two planar variables `x` and `y`.
//!
//! Every field component and switching function in the toolkit is an [`Expr`].
//! Expressions are parsed from standard infix text, evaluated in `f64`, and
//! differentiated symbolically. The printer emits fully parenthesized infix
//! that re-parses to an expression with identical evaluation.
//!
//! Grammar (highest precedence first):
//!
//! ```text
//! primary := number | x | y | pi | func '(' expr ')' | '(' expr ')'
//! power   := primary ('^' unary)?        exponent must fold to a constant
//! unary   := '-' unary | '+' unary | power
//! term    := unary (('*' | '/') unary)*
//! expr    := term (('+' | '-') term)*
//! ```
//!
//! Implicit multiplication is rejected.

use std::collections::BTreeMap;
use std::fmt;
use std::ops;
use std::str::FromStr;

use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    X,
    Y,
}

impl Var {
    pub fn name(self) -> &'static str {
        match self {
            Var::X => "x",
            Var::Y => "y",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
    Abs,
    /// Sign function, `sign(0) = 0`. Produced by differentiating `abs`.
    Sign,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Sign => "sign",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "sign" => Func::Sign,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }

    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => a / b,
        }
    }
}

/// Immutable expression tree.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    /// Power with a constant exponent.
    Pow(Box<Expr>, f64),
    Call(Func, Box<Expr>),
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("empty expression")]
    Empty,
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("exponent at offset {offset} is not a constant")]
    NonConstantExponent { offset: usize },
}

impl ParseError {
    /// Byte offset into the source text, when the error has one.
    pub fn offset(&self) -> Option<usize> {
        match self {
            ParseError::Empty => None,
            ParseError::Syntax { offset, .. }
            | ParseError::UnknownIdentifier { offset, .. }
            | ParseError::NonConstantExponent { offset } => Some(*offset),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DomainKind {
    DivisionByZero,
    LogOfNonPositive,
    SqrtOfNegative,
    FractionalPowerOfNegative,
}

impl fmt::Display for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DomainKind::DivisionByZero => "division by zero",
            DomainKind::LogOfNonPositive => "logarithm of a non-positive value",
            DomainKind::SqrtOfNegative => "square root of a negative value",
            DomainKind::FractionalPowerOfNegative => "fractional power of a negative value",
        })
    }
}

/// Evaluation left the domain of some subexpression.
#[derive(Clone, Debug, PartialEq, Error)]
#[error("{kind} in `{subexpr}`")]
pub struct EvalError {
    pub kind: DomainKind,
    pub subexpr: String,
}

// ---------------------------------------------------------------------------
// Construction

impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    pub fn x() -> Expr {
        Expr::Var(Var::X)
    }

    pub fn y() -> Expr {
        Expr::Var(Var::Y)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    fn is_one(&self) -> bool {
        self.as_const() == Some(1.0)
    }

    /// Binary node, folding only when both operands are constants.
    fn binary_folded(op: BinOp, a: Expr, b: Expr) -> Expr {
        if let (Some(u), Some(v)) = (a.as_const(), b.as_const()) {
            let r = op.apply(u, v);
            if r.is_finite() {
                return Expr::Const(r);
            }
        }
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    fn neg_folded(a: Expr) -> Expr {
        match a {
            Expr::Const(c) => Expr::Const(-c),
            other => Expr::Neg(Box::new(other)),
        }
    }

    fn pow_folded(base: Expr, e: f64) -> Expr {
        if let Some(b) = base.as_const() {
            let r = b.powf(e);
            if r.is_finite() {
                return Expr::Const(r);
            }
        }
        Expr::Pow(Box::new(base), e)
    }

    fn call_folded(func: Func, arg: Expr) -> Expr {
        if let Some(a) = arg.as_const() {
            let r = apply_func(func, a);
            if r.is_finite() && func_defined(func, a) {
                return Expr::Const(r);
            }
        }
        Expr::Call(func, Box::new(arg))
    }

    pub fn call(func: Func, arg: Expr) -> Expr {
        Expr::call_folded(func, arg)
    }

    /// `self ^ e` with light simplification.
    pub fn powf(self, e: f64) -> Expr {
        if e == 1.0 {
            self
        } else if e == 0.0 {
            Expr::Const(1.0)
        } else {
            Expr::pow_folded(self, e)
        }
    }

    pub fn sqrt(self) -> Expr {
        Expr::call_folded(Func::Sqrt, self)
    }
}

fn func_defined(func: Func, a: f64) -> bool {
    match func {
        Func::Ln => a > 0.0,
        Func::Sqrt => a >= 0.0,
        _ => true,
    }
}

fn apply_func(func: Func, a: f64) -> f64 {
    match func {
        Func::Sin => a.sin(),
        Func::Cos => a.cos(),
        Func::Tan => a.tan(),
        Func::Exp => a.exp(),
        Func::Ln => a.ln(),
        Func::Sqrt => a.sqrt(),
        Func::Abs => a.abs(),
        Func::Sign => {
            if a > 0.0 {
                1.0
            } else if a < 0.0 {
                -1.0
            } else {
                0.0
            }
        }
    }
}

impl ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        if self.is_zero() {
            rhs
        } else if rhs.is_zero() {
            self
        } else {
            Expr::binary_folded(BinOp::Add, self, rhs)
        }
    }
}

impl ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        if rhs.is_zero() {
            self
        } else if self.is_zero() {
            -rhs
        } else {
            Expr::binary_folded(BinOp::Sub, self, rhs)
        }
    }
}

impl ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        if self.is_zero() || rhs.is_zero() {
            Expr::Const(0.0)
        } else if self.is_one() {
            rhs
        } else if rhs.is_one() {
            self
        } else {
            Expr::binary_folded(BinOp::Mul, self, rhs)
        }
    }
}

impl ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        if rhs.is_one() {
            self
        } else if self.is_zero() && rhs.as_const().is_some_and(|c| c != 0.0) {
            Expr::Const(0.0)
        } else {
            Expr::binary_folded(BinOp::Div, self, rhs)
        }
    }
}

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        match self {
            Expr::Neg(inner) => *inner,
            other => Expr::neg_folded(other),
        }
    }
}

impl ops::Mul<Expr> for f64 {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::Const(self) * rhs
    }
}

// ---------------------------------------------------------------------------
// Evaluation

impl Expr {
    pub fn eval(&self, x: f64, y: f64) -> Result<f64, EvalError> {
        match self {
            Expr::Const(c) => Ok(*c),
            Expr::Var(Var::X) => Ok(x),
            Expr::Var(Var::Y) => Ok(y),
            Expr::Neg(a) => Ok(-a.eval(x, y)?),
            Expr::Binary(op, a, b) => {
                let u = a.eval(x, y)?;
                let v = b.eval(x, y)?;
                if *op == BinOp::Div && v == 0.0 {
                    return Err(self.domain(DomainKind::DivisionByZero));
                }
                Ok(op.apply(u, v))
            }
            Expr::Pow(a, e) => {
                let b = a.eval(x, y)?;
                let e = *e;
                if e.fract() == 0.0 && e.abs() < 2_147_483_647.0 {
                    if b == 0.0 && e < 0.0 {
                        return Err(self.domain(DomainKind::DivisionByZero));
                    }
                    Ok(b.powi(e as i32))
                } else if b < 0.0 {
                    Err(self.domain(DomainKind::FractionalPowerOfNegative))
                } else if b == 0.0 && e < 0.0 {
                    Err(self.domain(DomainKind::DivisionByZero))
                } else {
                    Ok(b.powf(e))
                }
            }
            Expr::Call(func, a) => {
                let v = a.eval(x, y)?;
                match func {
                    Func::Ln if v <= 0.0 => Err(self.domain(DomainKind::LogOfNonPositive)),
                    Func::Sqrt if v < 0.0 => Err(self.domain(DomainKind::SqrtOfNegative)),
                    _ => Ok(apply_func(*func, v)),
                }
            }
        }
    }

    fn domain(&self, kind: DomainKind) -> EvalError {
        EvalError {
            kind,
            subexpr: self.to_string(),
        }
    }
}

// ---------------------------------------------------------------------------
// Differentiation and substitution

impl Expr {
    /// Exact symbolic partial derivative. `abs` differentiates to `sign`,
    /// which is zero at zero.
    pub fn differentiate(&self, var: Var) -> Expr {
        match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Var(v) => Expr::Const(if *v == var { 1.0 } else { 0.0 }),
            Expr::Neg(a) => -a.differentiate(var),
            Expr::Binary(op, a, b) => {
                let da = a.differentiate(var);
                let db = b.differentiate(var);
                let (a, b) = ((**a).clone(), (**b).clone());
                match op {
                    BinOp::Add => da + db,
                    BinOp::Sub => da - db,
                    BinOp::Mul => da * b + a * db,
                    BinOp::Div => {
                        if db.is_zero() {
                            da / b
                        } else {
                            (da * b.clone() - a * db) / b.powf(2.0)
                        }
                    }
                }
            }
            Expr::Pow(a, e) => {
                let da = a.differentiate(var);
                Expr::Const(*e) * (**a).clone().powf(e - 1.0) * da
            }
            Expr::Call(func, a) => {
                let da = a.differentiate(var);
                if da.is_zero() {
                    return Expr::Const(0.0);
                }
                let a = (**a).clone();
                let outer = match func {
                    Func::Sin => Expr::call(Func::Cos, a),
                    Func::Cos => -Expr::call(Func::Sin, a),
                    Func::Tan => Expr::Const(1.0) / Expr::call(Func::Cos, a).powf(2.0),
                    Func::Exp => Expr::call(Func::Exp, a),
                    Func::Ln => return da / a,
                    Func::Sqrt => return da / (Expr::Const(2.0) * Expr::call(Func::Sqrt, a)),
                    Func::Abs => Expr::call(Func::Sign, a),
                    Func::Sign => return Expr::Const(0.0),
                };
                outer * da
            }
        }
    }

    pub fn gradient(&self) -> [Expr; 2] {
        [self.differentiate(Var::X), self.differentiate(Var::Y)]
    }

    /// Replace every occurrence of `var` by `value`, folding constants.
    pub fn substitute(&self, var: Var, value: &Expr) -> Expr {
        match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Var(v) if *v == var => value.clone(),
            Expr::Var(v) => Expr::Var(*v),
            Expr::Neg(a) => -a.substitute(var, value),
            Expr::Binary(op, a, b) => {
                let (a, b) = (a.substitute(var, value), b.substitute(var, value));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                }
            }
            Expr::Pow(a, e) => Expr::pow_folded(a.substitute(var, value), *e),
            Expr::Call(func, a) => Expr::call_folded(*func, a.substitute(var, value)),
        }
    }

    pub fn depends_on(&self, var: Var) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(v) => *v == var,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.depends_on(var),
            Expr::Binary(_, a, b) => a.depends_on(var) || b.depends_on(var),
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => 1 + a.node_count(),
            Expr::Binary(_, a, b) => 1 + a.node_count() + b.node_count(),
        }
    }
}

// ---------------------------------------------------------------------------
// Polynomial normal form

/// Bivariate polynomial keyed by `(deg_x, deg_y)`; zero coefficients are dropped.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Polynomial {
    terms: BTreeMap<(u32, u32), f64>,
}

impl Polynomial {
    pub fn constant(c: f64) -> Self {
        let mut p = Polynomial::default();
        p.insert((0, 0), c);
        p
    }

    fn monomial(var: Var) -> Self {
        let mut p = Polynomial::default();
        match var {
            Var::X => p.insert((1, 0), 1.0),
            Var::Y => p.insert((0, 1), 1.0),
        }
        p
    }

    fn insert(&mut self, key: (u32, u32), c: f64) {
        let entry = self.terms.entry(key).or_insert(0.0);
        *entry += c;
        if *entry == 0.0 {
            self.terms.remove(&key);
        }
    }

    pub fn coefficient(&self, deg_x: u32, deg_y: u32) -> f64 {
        self.terms.get(&(deg_x, deg_y)).copied().unwrap_or(0.0)
    }

    pub fn terms(&self) -> impl Iterator<Item = ((u32, u32), f64)> + '_ {
        self.terms.iter().map(|(k, v)| (*k, *v))
    }

    fn as_constant(&self) -> Option<f64> {
        match self.terms.len() {
            0 => Some(0.0),
            1 => self.terms.get(&(0, 0)).copied(),
            _ => None,
        }
    }

    fn scale(&self, s: f64) -> Self {
        let mut out = Polynomial::default();
        for (k, v) in &self.terms {
            out.insert(*k, v * s);
        }
        out
    }

    fn add(&self, other: &Self, sign: f64) -> Self {
        let mut out = self.clone();
        for (k, v) in &other.terms {
            out.insert(*k, sign * v);
        }
        out
    }

    fn mul(&self, other: &Self) -> Self {
        let mut out = Polynomial::default();
        for ((ax, ay), a) in &self.terms {
            for ((bx, by), b) in &other.terms {
                out.insert((ax + bx, ay + by), a * b);
            }
        }
        out
    }

    /// Coefficient-wise comparison with absolute tolerance.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        let keys: std::collections::BTreeSet<_> = self
            .terms
            .keys()
            .chain(other.terms.keys())
            .copied()
            .collect();
        keys.into_iter()
            .all(|(i, j)| (self.coefficient(i, j) - other.coefficient(i, j)).abs() <= tol)
    }
}

impl Expr {
    /// Expand into polynomial normal form, if the expression is a polynomial
    /// (sums, products, constant divisors, non-negative integer powers).
    pub fn to_polynomial(&self) -> Option<Polynomial> {
        match self {
            Expr::Const(c) => Some(Polynomial::constant(*c)),
            Expr::Var(v) => Some(Polynomial::monomial(*v)),
            Expr::Neg(a) => Some(a.to_polynomial()?.scale(-1.0)),
            Expr::Binary(op, a, b) => {
                let pa = a.to_polynomial()?;
                let pb = b.to_polynomial()?;
                match op {
                    BinOp::Add => Some(pa.add(&pb, 1.0)),
                    BinOp::Sub => Some(pa.add(&pb, -1.0)),
                    BinOp::Mul => Some(pa.mul(&pb)),
                    BinOp::Div => {
                        let c = pb.as_constant()?;
                        (c != 0.0).then(|| pa.scale(1.0 / c))
                    }
                }
            }
            Expr::Pow(a, e) => {
                if e.fract() != 0.0 || *e < 0.0 || *e > 64.0 {
                    return None;
                }
                let base = a.to_polynomial()?;
                let mut out = Polynomial::constant(1.0);
                for _ in 0..(*e as u32) {
                    out = out.mul(&base);
                }
                Some(out)
            }
            Expr::Call(..) => None,
        }
    }
}

// ---------------------------------------------------------------------------
// Printing

fn write_number(f: &mut fmt::Formatter<'_>, c: f64) -> fmt::Result {
    if c.is_sign_negative() {
        write!(f, "({c:?})")
    } else {
        write!(f, "{c:?}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write_number(f, *c),
            Expr::Var(v) => f.write_str(v.name()),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Pow(a, e) => {
                write!(f, "({a}^")?;
                write_number(f, *e)?;
                f.write_str(")")
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Clone, Debug, PartialEq)]
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

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(n) => format!("number {n}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn tokenize(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
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
                let value: f64 = lit.parse().map_err(|_| ParseError::Syntax {
                    offset: start,
                    message: format!("malformed number `{lit}`"),
                })?;
                if !value.is_finite() {
                    return Err(ParseError::Syntax {
                        offset: start,
                        message: format!("number `{lit}` out of range"),
                    });
                }
                out.push((Tok::Num(value), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(text[start..i].to_string()), start));
                continue;
            }
            _ => {
                let ch = text[start..].chars().next().unwrap_or('?');
                return Err(ParseError::Syntax {
                    offset: start,
                    message: format!("unexpected character `{ch}`"),
                });
            }
        };
        out.push((tok, start));
        i += 1;
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    depth: usize,
}

const MAX_DEPTH: usize = 256;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self) -> ParseError {
        ParseError::Syntax {
            offset: self.offset(),
            message: format!("unexpected {}", self.peek().describe()),
        }
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(ParseError::Syntax {
                offset: self.offset(),
                message: "expression nested too deeply".into(),
            });
        }
        Ok(())
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.enter()?;
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => break,
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::binary_folded(op, lhs, rhs);
        }
        self.depth -= 1;
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => break,
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::binary_folded(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        self.enter()?;
        let out = match self.peek() {
            Tok::Minus => {
                self.bump();
                Expr::neg_folded(self.unary()?)
            }
            Tok::Plus => {
                self.bump();
                self.unary()?
            }
            _ => self.power()?,
        };
        self.depth -= 1;
        Ok(out)
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if *self.peek() != Tok::Caret {
            return Ok(base);
        }
        self.bump();
        let at = self.offset();
        let exponent = self.unary()?;
        match exponent.as_const() {
            Some(e) => Ok(Expr::pow_folded(base, e)),
            None => Err(ParseError::NonConstantExponent { offset: at }),
        }
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let (tok, at) = self.bump();
        match tok {
            Tok::Num(v) => Ok(Expr::Const(v)),
            Tok::LParen => {
                let inner = self.expr()?;
                if *self.peek() != Tok::RParen {
                    return Err(ParseError::Syntax {
                        offset: self.offset(),
                        message: format!("expected `)`, found {}", self.peek().describe()),
                    });
                }
                self.bump();
                Ok(inner)
            }
            Tok::Ident(name) => match name.as_str() {
                "x" => Ok(Expr::Var(Var::X)),
                "y" => Ok(Expr::Var(Var::Y)),
                "pi" => Ok(Expr::Const(std::f64::consts::PI)),
                _ => {
                    let Some(func) = Func::from_name(&name) else {
                        return Err(ParseError::UnknownIdentifier { name, offset: at });
                    };
                    if *self.peek() != Tok::LParen {
                        return Err(ParseError::Syntax {
                            offset: self.offset(),
                            message: format!("expected `(` after `{name}`"),
                        });
                    }
                    self.bump();
                    let arg = self.expr()?;
                    if *self.peek() != Tok::RParen {
                        return Err(ParseError::Syntax {
                            offset: self.offset(),
                            message: format!("expected `)`, found {}", self.peek().describe()),
                        });
                    }
                    self.bump();
                    Ok(Expr::call_folded(func, arg))
                }
            },
            other => Err(ParseError::Syntax {
                offset: at,
                message: format!("unexpected {}", other.describe()),
            }),
        }
    }
}

/// Parse infix text into an expression.
pub fn parse(text: &str) -> Result<Expr, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let toks = tokenize(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        depth: 0,
    };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.unexpected());
    }
    Ok(e)
}

impl FromStr for Expr {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Expr {
        parse(s).unwrap()
    }

    #[test]
    fn parses_linear_combination() {
        let e = p("x + y - 1");
        assert_eq!(e.to_string(), "((x + y) - 1.0)");
        assert_eq!(e.eval(2.0, 3.0).unwrap(), 4.0);
    }

    #[test]
    fn rational_literals_fold() {
        let e = p("-x^2 + (3/2)*x - 1/2");
        assert_eq!(e.to_string(), "(((-(x^2.0)) + (1.5 * x)) - 0.5)");
        assert_eq!(e.eval(0.5, 0.0).unwrap(), 0.0);
        assert_eq!(e.eval(1.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn syntax_error_offset() {
        let err = parse("x + * y").unwrap_err();
        assert_eq!(err.offset(), Some(4));
        assert!(matches!(err, ParseError::Syntax { .. }));
    }

    #[test]
    fn empty_and_unknown() {
        assert_eq!(parse("   ").unwrap_err(), ParseError::Empty);
        assert!(matches!(
            parse("x + z").unwrap_err(),
            ParseError::UnknownIdentifier { offset: 4, .. }
        ));
        assert!(matches!(
            parse("2x").unwrap_err(),
            ParseError::Syntax { offset: 1, .. }
        ));
        assert!(matches!(
            parse("x(y)").unwrap_err(),
            ParseError::Syntax { offset: 1, .. }
        ));
        assert!(matches!(
            parse("x^y").unwrap_err(),
            ParseError::NonConstantExponent { offset: 2 }
        ));
        assert!(matches!(
            parse("(x").unwrap_err(),
            ParseError::Syntax { offset: 2, .. }
        ));
        assert!(matches!(
            parse("sin x").unwrap_err(),
            ParseError::Syntax { .. }
        ));
    }

    #[test]
    fn precedence() {
        // ^ binds tighter than unary minus
        assert_eq!(p("-x^2").eval(3.0, 0.0).unwrap(), -9.0);
        assert_eq!(p("2^3^2").eval(0.0, 0.0).unwrap(), 512.0);
        assert_eq!(p("x^-1").eval(4.0, 0.0).unwrap(), 0.25);
        assert_eq!(p("1 - 2 - 3").eval(0.0, 0.0).unwrap(), -4.0);
        assert_eq!(p("8 / 4 / 2").eval(0.0, 0.0).unwrap(), 1.0);
        assert_eq!(p("2 * -x").eval(3.0, 0.0).unwrap(), -6.0);
    }

    #[test]
    fn eval_examples() {
        let h = p("(x-1)^2*(x+3/2)");
        assert_eq!(h.eval(0.5, 0.0).unwrap(), 0.5);
        assert_eq!(p("x").eval(3.0, 7.0).unwrap(), 3.0);
        let err = p("1/x").eval(0.0, 0.0).unwrap_err();
        assert_eq!(err.kind, DomainKind::DivisionByZero);
        assert_eq!(err.subexpr, "(1.0 / x)");
        assert_eq!(
            p("ln(x)").eval(-1.0, 0.0).unwrap_err().kind,
            DomainKind::LogOfNonPositive
        );
        assert_eq!(
            p("sqrt(y)").eval(0.0, -1.0).unwrap_err().kind,
            DomainKind::SqrtOfNegative
        );
        assert_eq!(
            p("x^0.5").eval(-1.0, 0.0).unwrap_err().kind,
            DomainKind::FractionalPowerOfNegative
        );
    }

    #[test]
    fn derivative_examples() {
        assert_eq!(p("x+y-1").differentiate(Var::X), Expr::Const(1.0));
        assert_eq!(p("x").differentiate(Var::Y), Expr::Const(0.0));
        let d = p("-x^2 + (3/2)*x - 1/2").differentiate(Var::X);
        for &x in &[-2.0, -0.3, 0.0, 0.7, 1.9] {
            assert!((d.eval(x, 0.0).unwrap() - (-2.0 * x + 1.5)).abs() < 1e-14);
        }
    }

    #[test]
    fn abs_derivative_convention() {
        let d = p("abs(x)").differentiate(Var::X);
        assert_eq!(d.eval(0.0, 0.0).unwrap(), 0.0);
        assert_eq!(d.eval(-2.0, 0.0).unwrap(), -1.0);
        assert_eq!(d.eval(2.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn print_round_trip() {
        for s in [
            "-x^2 + (3/2)*x - 1/2",
            "sin(x)*exp(-y)/(2+cos(x*y))",
            "abs(x-1e-12)",
            "x^(-3)",
        ] {
            let e = p(s);
            let again = p(&e.to_string());
            assert_eq!(e.to_string(), again.to_string());
            assert_eq!(e.eval(0.3, -0.7).unwrap(), again.eval(0.3, -0.7).unwrap());
        }
    }

    #[test]
    fn substitution_and_polynomials() {
        let e = p("x + y - 1").substitute(Var::X, &Expr::Const(0.0));
        assert_eq!(e.to_string(), "(y - 1.0)");
        let poly = p("(x+y)^2 - 2*x*y").to_polynomial().unwrap();
        assert!(poly.approx_eq(&p("x^2 + y^2").to_polynomial().unwrap(), 1e-15));
        assert!(p("sin(x)").to_polynomial().is_none());
        assert!(p("1/x").to_polynomial().is_none());
    }

    #[test]
    fn deep_nesting_is_rejected_not_overflowed() {
        let s = "(".repeat(10_000) + "x" + &")".repeat(10_000);
        assert!(parse(&s).is_err());
        let s = "-".repeat(10_000) + "x";
        assert!(parse(&s).is_err());
    }
}
