//! A small arithmetic expression language.
//!
//! Expressions define operators `f(x1, ..., xk)`, custom distances `d(u, v)`
//! and comparison functions `phi(t)` textually. The grammar, in EBNF:
//!
//! ```text
//! expr     = term , { ("+" | "-") , term } ;
//! term     = unary , { ("*" | "/") , unary } ;
//! unary    = "-" , unary | power ;
//! power    = primary , [ "^" , exponent ] ;
//! exponent = "-" , exponent | power ;
//! primary  = number | variable | call | "(" , expr , ")" ;
//! call     = func , "(" , expr , { "," , expr } , ")" ;
//! func     = "abs" | "sqrt" | "exp" | "log" | "min" | "max" ;
//! number   = digits , [ "." , digits ] , [ ("e" | "E") , [ "+" | "-" ] , digits ] ;
//! variable = "x" , index , [ "_" , index ]     (operator context)
//!          | ("u" | "v") , index               (metric context)
//!          | "t" ;                             (phi context)
//! ```
//!
//! Binding strength is `^` > unary `-` > `* /` > `+ -`. Binary operators are
//! left-associative except `^`, which is right-associative, so `-x1^2` is
//! `-(x1^2)` and `2^3^2` is `2^(3^2)`. Whitespace (including newlines) is
//! ignored between tokens.
//!
//! In operator context `xi` is coordinate `c` of the `i`-th argument, where
//! `c` is the output coordinate being computed; `xi_j` names coordinate `j`
//! explicitly. Indices are 1-based.
//!
//! Evaluation never yields NaN or infinity: domain violations and overflow
//! surface as [`EvalError`].

use std::fmt;

use thiserror::Error;

/// Where an expression will be evaluated; fixes which variables are legal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Context {
    /// Operator `f(x1..xk)` producing one coordinate of an `dim`-vector.
    Operator { arity: usize, dim: usize },
    /// Distance `d(u, v)` between two `dim`-vectors.
    Metric { dim: usize },
    /// Scalar function of `t`.
    Phi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    /// Argument `arg` (0-based), coordinate `coord` or the current output coordinate.
    X {
        arg: usize,
        coord: Option<usize>,
    },
    U(usize),
    V(usize),
    T,
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Var::X { arg, coord: None } => write!(f, "x{}", arg + 1),
            Var::X { arg, coord: Some(c) } => write!(f, "x{}_{}", arg + 1, c + 1),
            Var::U(i) => write!(f, "u{}", i + 1),
            Var::V(i) => write!(f, "v{}", i + 1),
            Var::T => f.write_str("t"),
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
    Abs,
    Sqrt,
    Exp,
    Log,
    Min,
    Max,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "abs" => Func::Abs,
            "sqrt" => Func::Sqrt,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Abs => "abs",
            Func::Sqrt => "sqrt",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    fn is_variadic(self) -> bool {
        matches!(self, Func::Min | Func::Max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DslErrorKind {
    #[error("empty expression")]
    Empty,
    #[error("unexpected character '{0}'")]
    UnexpectedChar(char),
    #[error("malformed number '{0}'")]
    BadNumber(String),
    #[error("unexpected end of input, expected {0}")]
    UnexpectedEnd(&'static str),
    #[error("unexpected '{found}', expected {expected}")]
    UnexpectedToken { found: String, expected: &'static str },
    #[error("unknown identifier '{0}'")]
    UnknownIdentifier(String),
    #[error("variable '{name}' out of range (limit {limit})")]
    VariableOutOfRange { name: String, limit: usize },
    #[error("{func} expects {expected} argument(s), got {found}")]
    WrongArgCount {
        func: &'static str,
        expected: &'static str,
        found: usize,
    },
}

/// A parse failure with its 1-based source position.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}, column {column}: {kind}")]
pub struct DslError {
    pub kind: DslErrorKind,
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("log of non-positive value {0}")]
    LogDomain(f64),
    #[error("sqrt of negative value {0}")]
    SqrtDomain(f64),
    #[error("{base}^{exponent} is not a real number")]
    PowDomain { base: f64, exponent: f64 },
    #[error("overflow in '{0}'")]
    Overflow(&'static str),
    #[error("variable '{0}' is unbound")]
    Unbound(Var),
}

/// Supplies variable values during evaluation.
pub trait Bindings {
    fn lookup(&self, var: Var) -> Option<f64>;
}

/// Scalar arguments: `xi` is `values[i-1]`.
pub struct Scalars<'a>(pub &'a [f64]);

impl Bindings for Scalars<'_> {
    fn lookup(&self, var: Var) -> Option<f64> {
        match var {
            Var::X {
                arg,
                coord: None | Some(0),
            } => self.0.get(arg).copied(),
            _ => None,
        }
    }
}

/// A window of vector arguments evaluated at output coordinate `coord`.
pub struct Window<'a> {
    pub args: &'a [&'a [f64]],
    pub coord: usize,
}

impl Bindings for Window<'_> {
    fn lookup(&self, var: Var) -> Option<f64> {
        match var {
            Var::X { arg, coord } => self
                .args
                .get(arg)
                .and_then(|a| a.get(coord.unwrap_or(self.coord)).copied()),
            _ => None,
        }
    }
}

/// The two points of a distance evaluation.
pub struct Pair<'a> {
    pub u: &'a [f64],
    pub v: &'a [f64],
}

impl Bindings for Pair<'_> {
    fn lookup(&self, var: Var) -> Option<f64> {
        match var {
            Var::U(i) => self.u.get(i).copied(),
            Var::V(i) => self.v.get(i).copied(),
            _ => None,
        }
    }
}

/// The single variable `t`.
pub struct Scalar(pub f64);

impl Bindings for Scalar {
    fn lookup(&self, var: Var) -> Option<f64> {
        (var == Var::T).then_some(self.0)
    }
}

fn finite(v: f64, op: &'static str) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::Overflow(op))
    }
}

impl Expr {
    pub fn parse(source: &str, context: Context) -> Result<Expr, DslError> {
        let tokens = lex(source)?;
        let mut parser = Parser {
            tokens,
            pos: 0,
            context,
        };
        if parser.peek().tok == Tok::End {
            return Err(parser.error_here(DslErrorKind::Empty));
        }
        let expr = parser.expr()?;
        let next = parser.peek();
        if next.tok != Tok::End {
            return Err(parser.unexpected("an operator or end of input"));
        }
        Ok(expr)
    }

    pub fn eval(&self, env: &dyn Bindings) -> Result<f64, EvalError> {
        match self {
            Expr::Num(v) => Ok(*v),
            Expr::Var(var) => env.lookup(*var).ok_or(EvalError::Unbound(*var)),
            Expr::Neg(e) => Ok(-e.eval(env)?),
            Expr::Binary(op, l, r) => {
                let a = l.eval(env)?;
                let b = r.eval(env)?;
                match op {
                    BinOp::Add => finite(a + b, "+"),
                    BinOp::Sub => finite(a - b, "-"),
                    BinOp::Mul => finite(a * b, "*"),
                    BinOp::Div => {
                        if b == 0.0 {
                            Err(EvalError::DivisionByZero)
                        } else {
                            finite(a / b, "/")
                        }
                    }
                    BinOp::Pow => {
                        let v = a.powf(b);
                        if v.is_nan() {
                            Err(EvalError::PowDomain { base: a, exponent: b })
                        } else if a == 0.0 && b < 0.0 {
                            Err(EvalError::DivisionByZero)
                        } else {
                            finite(v, "^")
                        }
                    }
                }
            }
            Expr::Call(func, args) => {
                let first = args[0].eval(env)?;
                match func {
                    Func::Abs => Ok(first.abs()),
                    Func::Sqrt if first < 0.0 => Err(EvalError::SqrtDomain(first)),
                    Func::Sqrt => Ok(first.sqrt()),
                    Func::Exp => finite(first.exp(), "exp"),
                    Func::Log if first <= 0.0 => Err(EvalError::LogDomain(first)),
                    Func::Log => Ok(first.ln()),
                    Func::Min | Func::Max => {
                        let mut acc = first;
                        for a in &args[1..] {
                            let v = a.eval(env)?;
                            acc = if *func == Func::Min { acc.min(v) } else { acc.max(v) };
                        }
                        Ok(acc)
                    }
                }
            }
        }
    }

    /// Largest argument index referenced, plus one (0 if none).
    pub fn arity_used(&self) -> usize {
        match self {
            Expr::Num(_) => 0,
            Expr::Var(Var::X { arg, .. }) => arg + 1,
            Expr::Var(_) => 0,
            Expr::Neg(e) => e.arity_used(),
            Expr::Binary(_, l, r) => l.arity_used().max(r.arity_used()),
            Expr::Call(_, args) => args.iter().map(Expr::arity_used).max().unwrap_or(0),
        }
    }
}

impl fmt::Display for Expr {
    /// Canonical fully parenthesized rendering.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(var) => write!(f, "{var}"),
            Expr::Neg(e) => write!(f, "-{e}"),
            Expr::Binary(BinOp::Pow, l, r) => {
                // A negated base must keep its own parentheses: `(-x)^2` is not `-x^2`.
                let negative_base = match l.as_ref() {
                    Expr::Neg(_) => true,
                    Expr::Num(v) => v.is_sign_negative(),
                    _ => false,
                };
                if negative_base {
                    write!(f, "(({l})^{r})")
                } else {
                    write!(f, "({l}^{r})")
                }
            }
            Expr::Binary(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// Canonical text of an expression.
pub fn format(e: &Expr) -> String {
    e.to_string()
}

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
    Comma,
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(v) => write!(f, "{v}"),
            Tok::Ident(s) => f.write_str(s),
            Tok::Plus => f.write_str("+"),
            Tok::Minus => f.write_str("-"),
            Tok::Star => f.write_str("*"),
            Tok::Slash => f.write_str("/"),
            Tok::Caret => f.write_str("^"),
            Tok::LParen => f.write_str("("),
            Tok::RParen => f.write_str(")"),
            Tok::Comma => f.write_str(","),
            Tok::End => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(source: &str) -> Result<Vec<Token>, DslError> {
    let chars: Vec<char> = source.chars().collect();
    let mut out = Vec::new();
    let (mut line, mut column) = (1, 1);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, column);
        if c == '\n' {
            line += 1;
            column = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            column += 1;
            i += 1;
            continue;
        }
        let start = i;
        let tok = if c.is_ascii_digit() || c == '.' {
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            match text.parse::<f64>() {
                Ok(v) if v.is_finite() => Tok::Num(v),
                _ => {
                    return Err(DslError {
                        kind: DslErrorKind::BadNumber(text),
                        line: tl,
                        column: tc,
                    })
                }
            }
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            Tok::Ident(chars[start..i].iter().collect())
        } else {
            i += 1;
            match c {
                '+' => Tok::Plus,
                '-' => Tok::Minus,
                '*' => Tok::Star,
                '/' => Tok::Slash,
                '^' => Tok::Caret,
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ',' => Tok::Comma,
                other => {
                    return Err(DslError {
                        kind: DslErrorKind::UnexpectedChar(other),
                        line: tl,
                        column: tc,
                    })
                }
            }
        };
        column += i - start;
        out.push(Token {
            tok,
            line: tl,
            column: tc,
        });
    }
    out.push(Token {
        tok: Tok::End,
        line,
        column,
    });
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    context: Context,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if t.tok != Tok::End {
            self.pos += 1;
        }
        t
    }

    fn error_here(&self, kind: DslErrorKind) -> DslError {
        let t = self.peek();
        DslError {
            kind,
            line: t.line,
            column: t.column,
        }
    }

    fn unexpected(&self, expected: &'static str) -> DslError {
        let kind = match &self.peek().tok {
            Tok::End => DslErrorKind::UnexpectedEnd(expected),
            other => DslErrorKind::UnexpectedToken {
                found: other.to_string(),
                expected,
            },
        };
        self.error_here(kind)
    }

    fn expect(&mut self, tok: Tok, expected: &'static str) -> Result<(), DslError> {
        if self.peek().tok == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(expected))
        }
    }

    fn expr(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().tok {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek().tok {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, DslError> {
        if self.peek().tok == Tok::Minus {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, DslError> {
        let base = self.primary()?;
        if self.peek().tok != Tok::Caret {
            return Ok(base);
        }
        self.bump();
        let exponent = self.exponent()?;
        Ok(Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exponent)))
    }

    fn exponent(&mut self) -> Result<Expr, DslError> {
        if self.peek().tok == Tok::Minus {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.exponent()?)));
        }
        self.power()
    }

    fn primary(&mut self) -> Result<Expr, DslError> {
        let token = self.peek().clone();
        match &token.tok {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Num(*v))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                if let Some(func) = Func::from_name(name) {
                    return self.call(func, &token);
                }
                let var = self.variable(name).map_err(|kind| DslError {
                    kind,
                    line: token.line,
                    column: token.column,
                })?;
                Ok(Expr::Var(var))
            }
            _ => Err(self.unexpected("a number, variable, function or '('")),
        }
    }

    fn call(&mut self, func: Func, at: &Token) -> Result<Expr, DslError> {
        self.expect(Tok::LParen, "'(' after function name")?;
        let mut args = vec![self.expr()?];
        while self.peek().tok == Tok::Comma {
            self.bump();
            args.push(self.expr()?);
        }
        self.expect(Tok::RParen, "',' or ')'")?;
        let ok = if func.is_variadic() {
            args.len() >= 2
        } else {
            args.len() == 1
        };
        if !ok {
            return Err(DslError {
                kind: DslErrorKind::WrongArgCount {
                    func: func.name(),
                    expected: if func.is_variadic() { "at least 2" } else { "1" },
                    found: args.len(),
                },
                line: at.line,
                column: at.column,
            });
        }
        Ok(Expr::Call(func, args))
    }

    fn variable(&self, name: &str) -> Result<Var, DslErrorKind> {
        let unknown = || DslErrorKind::UnknownIdentifier(name.to_string());
        let out_of_range = |limit| DslErrorKind::VariableOutOfRange {
            name: name.to_string(),
            limit,
        };
        let index = |s: &str| -> Option<usize> {
            if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
                return None;
            }
            s.parse::<usize>().ok()
        };
        match self.context {
            Context::Phi => {
                if name == "t" {
                    Ok(Var::T)
                } else {
                    Err(unknown())
                }
            }
            Context::Metric { dim } => {
                let (head, rest) = name.split_at(1);
                let i = index(rest).ok_or_else(unknown)?;
                if head != "u" && head != "v" {
                    return Err(unknown());
                }
                if i == 0 || i > dim {
                    return Err(out_of_range(dim));
                }
                Ok(if head == "u" { Var::U(i - 1) } else { Var::V(i - 1) })
            }
            Context::Operator { arity, dim } => {
                let rest = name.strip_prefix('x').ok_or_else(unknown)?;
                let (arg, coord) = match rest.split_once('_') {
                    Some((a, c)) => (index(a).ok_or_else(unknown)?, Some(index(c).ok_or_else(unknown)?)),
                    None => (index(rest).ok_or_else(unknown)?, None),
                };
                if arg == 0 || arg > arity {
                    return Err(out_of_range(arity));
                }
                match coord {
                    Some(c) if c == 0 || c > dim => Err(out_of_range(dim)),
                    Some(c) => Ok(Var::X {
                        arg: arg - 1,
                        coord: Some(c - 1),
                    }),
                    None => Ok(Var::X {
                        arg: arg - 1,
                        coord: None,
                    }),
                }
            }
        }
    }
}
