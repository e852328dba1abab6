//! A small expression language for kernels, functions and ε-nets.
//!
//! Grammar (EBNF), lowest to highest precedence:
//!
//! ```text
//! expr    = term { ("+" | "-") term } ;
//! term    = unary { ("*" | "/") unary } ;
//! unary   = "-" unary | power ;
//! power   = primary [ "^" unary ] ;          (* right-associative *)
//! primary = number | variable | func "(" expr ")" | "(" expr ")" ;
//! func    = "sin" | "cos" | "exp" | "log" | "sqrt" | "abs" | "bump" ;
//! variable = "x" | "y" | "xi" | "t" | "eps" | "logeps"
//!          | "x" digit | "y" digit | "xi" digit ;   (* components, 1-based *)
//! number  = digits [ "." digits ] [ ("e" | "E") [ "+" | "-" ] digits ]
//!         | "." digits [ exponent ] ;
//! ```
//!
//! Unary minus binds looser than `^`, so `-2^2` is `-4` and `2^-1` is `0.5`.
//! `logeps` is `ln(1/eps)`. `bump(s)` is the unnormalized mollifier shape
//! `exp(-1/(1-s^2))` for `|s| < 1` and `0` otherwise.

use std::fmt;

use thiserror::Error;

const MAX_DEPTH: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {position}: expected {expected}")]
    Syntax { position: usize, expected: String },
    #[error("unknown variable `{name}` at byte {position}")]
    UnknownVariable { name: String, position: usize },
    #[error("unknown function `{name}` at byte {position}")]
    UnknownFunction { name: String, position: usize },
}

impl ParseError {
    pub fn position(&self) -> usize {
        match self {
            ParseError::Syntax { position, .. }
            | ParseError::UnknownVariable { position, .. }
            | ParseError::UnknownFunction { position, .. } => *position,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("domain error in {function} at argument {argument}")]
    DomainError { function: &'static str, argument: f64 },
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
}

/// Which variable families an expression may mention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarKind {
    X,
    Y,
    Xi,
    T,
    Eps,
}

impl VarKind {
    pub const ALL: [VarKind; 5] = [VarKind::X, VarKind::Y, VarKind::Xi, VarKind::T, VarKind::Eps];
}

/// A resolved variable reference. Component indices are zero-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Var {
    X(usize),
    Y(usize),
    Xi(usize),
    T,
    Eps,
    LogEps,
}

impl Var {
    fn kind(self) -> VarKind {
        match self {
            Var::X(_) => VarKind::X,
            Var::Y(_) => VarKind::Y,
            Var::Xi(_) => VarKind::Xi,
            Var::T => VarKind::T,
            Var::Eps | Var::LogEps => VarKind::Eps,
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::X(i) => write!(f, "x{}", i + 1),
            Var::Y(i) => write!(f, "y{}", i + 1),
            Var::Xi(i) => write!(f, "xi{}", i + 1),
            Var::T => f.write_str("t"),
            Var::Eps => f.write_str("eps"),
            Var::LogEps => f.write_str("logeps"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Abs,
    Bump,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "bump" => Func::Bump,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Bump => "bump",
        }
    }
}

/// Expression tree. Numeric literals are finite and non-negative; a leading
/// minus is always a [`Expr::Neg`] node.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

/// Unnormalized mollifier shape.
pub fn bump(s: f64) -> f64 {
    if s.abs() < 1.0 {
        (-1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

/// Variable bindings for [`Expr::eval`]. `logeps` is derived from `eps`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Env<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub xi: &'a [f64],
    pub t: Option<f64>,
    pub eps: Option<f64>,
}

impl Expr {
    pub fn eval(&self, env: &Env<'_>) -> Result<f64, EvalError> {
        match self {
            Expr::Num(v) => Ok(*v),
            Expr::Var(v) => lookup(*v, env),
            Expr::Neg(e) => Ok(-e.eval(env)?),
            Expr::Bin(op, a, b) => {
                let a = a.eval(env)?;
                let b = b.eval(env)?;
                match op {
                    BinOp::Add => Ok(a + b),
                    BinOp::Sub => Ok(a - b),
                    BinOp::Mul => Ok(a * b),
                    BinOp::Div => {
                        if b == 0.0 {
                            Err(EvalError::DomainError { function: "/", argument: b })
                        } else {
                            Ok(a / b)
                        }
                    }
                    BinOp::Pow => {
                        if a == 0.0 && b < 0.0 {
                            Err(EvalError::DomainError { function: "^", argument: b })
                        } else if a < 0.0 && b.fract() != 0.0 {
                            Err(EvalError::DomainError { function: "^", argument: a })
                        } else {
                            Ok(a.powf(b))
                        }
                    }
                }
            }
            Expr::Call(func, a) => {
                let v = a.eval(env)?;
                match func {
                    Func::Sin => Ok(v.sin()),
                    Func::Cos => Ok(v.cos()),
                    Func::Exp => Ok(v.exp()),
                    Func::Log if v <= 0.0 => Err(EvalError::DomainError { function: "log", argument: v }),
                    Func::Log => Ok(v.ln()),
                    Func::Sqrt if v < 0.0 => Err(EvalError::DomainError { function: "sqrt", argument: v }),
                    Func::Sqrt => Ok(v.sqrt()),
                    Func::Abs => Ok(v.abs()),
                    Func::Bump => Ok(bump(v)),
                }
            }
        }
    }

    /// Calls `visit` on every variable occurrence.
    pub fn visit_vars(&self, visit: &mut impl FnMut(Var)) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => visit(*v),
            Expr::Neg(e) | Expr::Call(_, e) => e.visit_vars(visit),
            Expr::Bin(_, a, b) => {
                a.visit_vars(visit);
                b.visit_vars(visit);
            }
        }
    }

    pub fn mentions_eps(&self) -> bool {
        let mut found = false;
        self.visit_vars(&mut |v| found |= matches!(v, Var::Eps | Var::LogEps));
        found
    }
}

fn lookup(v: Var, env: &Env<'_>) -> Result<f64, EvalError> {
    let unbound = || EvalError::UnboundVariable(v.to_string());
    match v {
        Var::X(i) => env.x.get(i).copied().ok_or_else(unbound),
        Var::Y(i) => env.y.get(i).copied().ok_or_else(unbound),
        Var::Xi(i) => env.xi.get(i).copied().ok_or_else(unbound),
        Var::T => env.t.ok_or_else(unbound),
        Var::Eps => env.eps.ok_or_else(unbound),
        Var::LogEps => env.eps.map(|e| (1.0 / e).ln()).ok_or_else(unbound),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(v) => format!("number {v}"),
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Op(c) => format!("`{c}`"),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::End => "end of input".into(),
    }
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        match c {
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                out.push((Tok::Op(c as char), start));
                i += 1;
            }
            b'(' => {
                out.push((Tok::LParen, start));
                i += 1;
            }
            b')' => {
                out.push((Tok::RParen, start));
                i += 1;
            }
            b'0'..=b'9' | b'.' => {
                let mut j = i;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                let int_digits = j - i;
                let mut frac_digits = 0;
                if j < bytes.len() && bytes[j] == b'.' {
                    j += 1;
                    let f0 = j;
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    frac_digits = j - f0;
                }
                if int_digits + frac_digits == 0 {
                    return Err(ParseError::Syntax { position: start, expected: "digit".into() });
                }
                if j < bytes.len() && (bytes[j] == b'e' || bytes[j] == b'E') {
                    let mut k = j + 1;
                    if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                        k += 1;
                    }
                    let d0 = k;
                    while k < bytes.len() && bytes[k].is_ascii_digit() {
                        k += 1;
                    }
                    if k > d0 {
                        j = k;
                    }
                }
                let text = &src[start..j];
                let value: f64 = text.parse().map_err(|_| ParseError::Syntax {
                    position: start,
                    expected: "number".into(),
                })?;
                if !value.is_finite() {
                    return Err(ParseError::Syntax { position: start, expected: "finite number".into() });
                }
                out.push((Tok::Num(value), start));
                i = j;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                    j += 1;
                }
                out.push((Tok::Ident(src[start..j].to_string()), start));
                i = j;
            }
            _ => {
                return Err(ParseError::Syntax { position: start, expected: "operator, operand or parenthesis".into() });
            }
        }
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    depth: usize,
    dim: usize,
    allowed: &'a [VarKind],
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump_tok(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn fail<T>(&self, expected: &str) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            position: self.offset(),
            expected: format!("{expected}, found {}", describe(self.peek())),
        })
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(ParseError::Syntax {
                position: self.offset(),
                expected: format!("nesting depth at most {MAX_DEPTH}"),
            });
        }
        Ok(())
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.enter()?;
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => break,
            };
            self.bump_tok();
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        self.depth -= 1;
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => break,
            };
            self.bump_tok();
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if matches!(self.peek(), Tok::Op('-')) {
            self.bump_tok();
            self.enter()?;
            let inner = self.unary()?;
            self.depth -= 1;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if matches!(self.peek(), Tok::Op('^')) {
            self.bump_tok();
            self.enter()?;
            let exponent = self.unary()?;
            self.depth -= 1;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump_tok();
                Ok(Expr::Num(v))
            }
            Tok::LParen => {
                self.bump_tok();
                let e = self.expr()?;
                if !matches!(self.peek(), Tok::RParen) {
                    return self.fail("`)`");
                }
                self.bump_tok();
                Ok(e)
            }
            Tok::Ident(name) => {
                let (_, at) = self.bump_tok();
                if matches!(self.peek(), Tok::LParen) {
                    let Some(func) = Func::from_name(&name) else {
                        return Err(ParseError::UnknownFunction { name, position: at });
                    };
                    self.bump_tok();
                    let arg = self.expr()?;
                    if !matches!(self.peek(), Tok::RParen) {
                        return self.fail("`)`");
                    }
                    self.bump_tok();
                    return Ok(Expr::Call(func, Box::new(arg)));
                }
                if Func::from_name(&name).is_some() {
                    return self.fail("`(`");
                }
                let var = resolve_var(&name, self.dim)
                    .filter(|v| self.allowed.contains(&v.kind()))
                    .ok_or(ParseError::UnknownVariable { name, position: at })?;
                Ok(Expr::Var(var))
            }
            _ => self.fail("operand"),
        }
    }
}

fn resolve_var(name: &str, dim: usize) -> Option<Var> {
    match name {
        "t" => return Some(Var::T),
        "eps" => return Some(Var::Eps),
        "logeps" => return Some(Var::LogEps),
        "x" if dim == 1 => return Some(Var::X(0)),
        "y" if dim == 1 => return Some(Var::Y(0)),
        "xi" if dim == 1 => return Some(Var::Xi(0)),
        _ => {}
    }
    let (stem, digits) = name.split_at(name.find(|c: char| c.is_ascii_digit())?);
    let idx: usize = digits.parse().ok()?;
    if idx == 0 || idx > dim || digits.starts_with('0') {
        return None;
    }
    match stem {
        "x" => Some(Var::X(idx - 1)),
        "y" => Some(Var::Y(idx - 1)),
        "xi" => Some(Var::Xi(idx - 1)),
        _ => None,
    }
}

/// Parses `source` for points of dimension `dim`, accepting only variables
/// whose family is listed in `allowed`.
pub fn parse(source: &str, dim: usize, allowed: &[VarKind]) -> Result<Expr, ParseError> {
    let toks = lex(source)?;
    let mut p = Parser { toks, pos: 0, depth: 0, dim, allowed };
    let e = p.expr()?;
    if !matches!(p.peek(), Tok::End) {
        return p.fail("operator or end of input");
    }
    Ok(e)
}
