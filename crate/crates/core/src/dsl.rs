//! A small arithmetic expression language for right-hand sides and exact
//! solutions in problem files.
//!
//! Grammar, loosest to tightest binding:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?          right-associative
//! atom    := number | ident | ident '(' args ')' | '(' expr ')'
//! ```
//!
//! so `-u^2` is `-(u^2)` and `u^2^3` is `u^(2^3)`. The identifiers `pi` and
//! `e` are constants.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DslError {
    #[error("illegal character {ch:?} at offset {pos}")]
    IllegalCharacter { ch: char, pos: usize },
    #[error("malformed number {lexeme:?} at offset {pos}")]
    MalformedNumber { lexeme: String, pos: usize },
    #[error("unexpected {found} at offset {pos}")]
    UnexpectedToken { found: String, pos: usize },
    #[error("unexpected end of input at offset {pos}")]
    UnexpectedEnd { pos: usize },
    #[error("unbalanced parenthesis at offset {pos}")]
    UnbalancedParen { pos: usize },
    #[error("trailing input {found:?} at offset {pos}")]
    TrailingInput { found: String, pos: usize },
    #[error("unknown function {name:?} at offset {pos}")]
    UnknownFunction { name: String, pos: usize },
    #[error("function {name} expects {expected} argument(s), got {got} at offset {pos}")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
        pos: usize,
    },
    #[error("nthroot degree must be a positive integer literal at offset {pos}")]
    RootDegree { pos: usize },
    #[error("unbound variable {0:?}")]
    UnboundVariable(String),
    #[error("domain error in {expr} with arguments {args:?}")]
    Domain { expr: String, args: Vec<f64> },
    #[error("non-finite result {value} from {expr}")]
    NonFinite { expr: String, value: f64 },
    #[error("unknown variable(s): {}", format_unknown(.0))]
    UnknownVariables(Vec<(String, usize)>),
}

fn format_unknown(vars: &[(String, usize)]) -> String {
    vars.iter()
        .map(|(name, pos)| format!("{name} at offset {pos}"))
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Number,
    Identifier,
    Operator,
    Paren,
    Comma,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub lexeme: String,
    pub pos: usize,
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, DslError> {
    let bytes = src.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let kind = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'0'..=b'9' | b'.' => {
                i = scan_number(bytes, i)?;
                TokenKind::Number
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                TokenKind::Identifier
            }
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                i += 1;
                TokenKind::Operator
            }
            b'(' | b')' => {
                i += 1;
                TokenKind::Paren
            }
            b',' => {
                i += 1;
                TokenKind::Comma
            }
            _ => {
                let ch = src[i..].chars().next().unwrap_or('\u{fffd}');
                return Err(DslError::IllegalCharacter { ch, pos: i });
            }
        };
        tokens.push(Token {
            kind,
            lexeme: src[start..i].to_string(),
            pos: start,
        });
    }
    Ok(tokens)
}

/// Scan `digits [. digits] [(e|E) [+-] digits]`, returning the end offset.
fn scan_number(bytes: &[u8], start: usize) -> Result<usize, DslError> {
    let digits = |mut i: usize| {
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        i
    };
    let mut i = digits(start);
    let int_digits = i - start;
    let mut frac_digits = 0;
    if i < bytes.len() && bytes[i] == b'.' {
        let after = digits(i + 1);
        frac_digits = after - (i + 1);
        i = after;
    }
    if int_digits + frac_digits == 0 {
        return Err(DslError::IllegalCharacter {
            ch: '.',
            pos: start,
        });
    }
    if i < bytes.len() && bytes[i] == b'.' {
        return Err(DslError::IllegalCharacter { ch: '.', pos: i });
    }
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        let mut j = i + 1;
        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
            j += 1;
        }
        let end = digits(j);
        if end == j {
            let lexeme = String::from_utf8_lossy(&bytes[start..end.max(i + 1)]).into_owned();
            return Err(DslError::MalformedNumber { lexeme, pos: start });
        }
        i = end;
    }
    Ok(i)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
            BinaryOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Function {
    Sin,
    Cos,
    Tan,
    Tanh,
    Exp,
    Log,
    Sqrt,
    Abs,
}

impl Function {
    pub const ALL: [Function; 8] = [
        Function::Sin,
        Function::Cos,
        Function::Tan,
        Function::Tanh,
        Function::Exp,
        Function::Log,
        Function::Sqrt,
        Function::Abs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Function::Sin => "sin",
            Function::Cos => "cos",
            Function::Tan => "tan",
            Function::Tanh => "tanh",
            Function::Exp => "exp",
            Function::Log => "log",
            Function::Sqrt => "sqrt",
            Function::Abs => "abs",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }

    pub fn apply(self, x: f64) -> Option<f64> {
        match self {
            Function::Sin => Some(x.sin()),
            Function::Cos => Some(x.cos()),
            Function::Tan => Some(x.tan()),
            Function::Tanh => Some(x.tanh()),
            Function::Exp => Some(x.exp()),
            Function::Log => (x > 0.0).then(|| x.ln()),
            Function::Sqrt => (x >= 0.0).then(|| x.sqrt()),
            Function::Abs => Some(x.abs()),
        }
    }
}

/// Variable reference. Equality ignores the source offset.
#[derive(Debug, Clone)]
pub struct Variable {
    pub name: String,
    pub pos: usize,
}

impl PartialEq for Variable {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Variable),
    Neg(Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Call(Function, Box<Expr>),
    NthRoot(Box<Expr>, u32),
}

pub fn binary(op: BinaryOp, lhs: Expr, rhs: Expr) -> Expr {
    Expr::Binary(op, Box::new(lhs), Box::new(rhs))
}

/// Fully parenthesized rendering; parsing it back yields an equal tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(v) => {
                if v.is_sign_negative() {
                    write!(f, "(-{})", -v)
                } else {
                    write!(f, "{v}")
                }
            }
            Expr::Var(v) => f.write_str(&v.name),
            Expr::Neg(inner) => write!(f, "(-{inner})"),
            Expr::Binary(op, lhs, rhs) => write!(f, "({lhs} {} {rhs})", op.symbol()),
            Expr::Call(func, arg) => write!(f, "{}({arg})", func.name()),
            Expr::NthRoot(arg, k) => write!(f, "nthroot({arg}, {k})"),
        }
    }
}

/// Source of variable values during evaluation.
pub trait Env {
    fn lookup(&self, name: &str) -> Option<f64>;
}

impl Env for HashMap<String, f64> {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl Env for HashMap<&str, f64> {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

/// Parallel slices of names and values; linear lookup, cheap for a handful
/// of variables.
pub struct Bindings<'a> {
    pub names: &'a [String],
    pub values: &'a [f64],
}

impl Env for Bindings<'_> {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.values[i])
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, DslError> {
        parse_expression(&tokenize(src)?)
    }

    pub fn eval(&self, env: &dyn Env) -> Result<f64, DslError> {
        let value = self.eval_inner(env)?;
        if !value.is_finite() {
            return Err(DslError::NonFinite {
                expr: self.to_string(),
                value,
            });
        }
        Ok(value)
    }

    fn eval_inner(&self, env: &dyn Env) -> Result<f64, DslError> {
        match self {
            Expr::Const(v) => Ok(*v),
            Expr::Var(v) => env
                .lookup(&v.name)
                .ok_or_else(|| DslError::UnboundVariable(v.name.clone())),
            Expr::Neg(inner) => Ok(-inner.eval_inner(env)?),
            Expr::Binary(op, lhs, rhs) => {
                let x = lhs.eval_inner(env)?;
                let y = rhs.eval_inner(env)?;
                match op {
                    BinaryOp::Add => Ok(x + y),
                    BinaryOp::Sub => Ok(x - y),
                    BinaryOp::Mul => Ok(x * y),
                    BinaryOp::Div => Ok(x / y),
                    BinaryOp::Pow => power(x, y).ok_or_else(|| self.domain(vec![x, y])),
                }
            }
            Expr::Call(func, arg) => {
                let x = arg.eval_inner(env)?;
                func.apply(x).ok_or_else(|| self.domain(vec![x]))
            }
            Expr::NthRoot(arg, k) => {
                let x = arg.eval_inner(env)?;
                nth_root(x, *k).ok_or_else(|| self.domain(vec![x, f64::from(*k)]))
            }
        }
    }

    fn domain(&self, args: Vec<f64>) -> DslError {
        DslError::Domain {
            expr: self.to_string(),
            args,
        }
    }

    /// Free variables with the offset of their first occurrence.
    pub fn free_vars(&self) -> Vec<(String, usize)> {
        let mut out: Vec<(String, usize)> = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut Vec<(String, usize)>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => {
                if !out.iter().any(|(n, _)| *n == v.name) {
                    out.push((v.name.clone(), v.pos));
                }
            }
            Expr::Neg(inner) | Expr::Call(_, inner) | Expr::NthRoot(inner, _) => {
                inner.collect_vars(out)
            }
            Expr::Binary(_, lhs, rhs) => {
                lhs.collect_vars(out);
                rhs.collect_vars(out);
            }
        }
    }
}

/// Real power; a negative base needs an integer exponent.
pub fn power(x: f64, y: f64) -> Option<f64> {
    if x < 0.0 && y.fract() != 0.0 {
        return None;
    }
    Some(x.powf(y))
}

/// Real `k`-th root: odd roots keep the sign, even roots reject negatives.
pub fn nth_root(x: f64, k: u32) -> Option<f64> {
    if k == 0 {
        return None;
    }
    if x < 0.0 {
        if k.is_multiple_of(2) {
            return None;
        }
        return Some(-nth_root(-x, k)?);
    }
    match k {
        1 => Some(x),
        2 => Some(x.sqrt()),
        3 => Some(x.cbrt()),
        _ => Some(x.powf(1.0 / f64::from(k))),
    }
}

pub fn eval_expr(e: &Expr, env: &dyn Env) -> Result<f64, DslError> {
    e.eval(env)
}

fn constant_value(e: &Expr) -> Option<f64> {
    match e {
        Expr::Const(v) => Some(*v),
        Expr::Neg(inner) => constant_value(inner).map(|v| -v),
        _ => None,
    }
}

/// Write `e` as `coeff * x + rest`, where `x` is any variable named in
/// `names`. Looks through sums, differences, negation, and multiplication or
/// division by constants; every other subtree stays in `rest` unchanged.
/// `rest` is `None` when nothing but the linear term remains.
pub fn split_linear(e: &Expr, names: &[&str]) -> (f64, Option<Expr>) {
    let keep = || (0.0, Some(e.clone()));
    let scale = |inner: &Expr, k: f64, op: BinaryOp, const_first: bool| {
        let (coeff, rest) = split_linear(inner, names);
        if coeff == 0.0 {
            return keep();
        }
        let coeff = if op == BinaryOp::Mul {
            k * coeff
        } else {
            coeff / k
        };
        let rest = rest.map(|r| {
            if const_first {
                binary(op, Expr::Const(k), r)
            } else {
                binary(op, r, Expr::Const(k))
            }
        });
        (coeff, rest)
    };
    match e {
        Expr::Var(v) if names.contains(&v.name.as_str()) => (1.0, None),
        Expr::Neg(inner) => {
            let (coeff, rest) = split_linear(inner, names);
            if coeff == 0.0 {
                return keep();
            }
            (-coeff, rest.map(|r| Expr::Neg(Box::new(r))))
        }
        Expr::Binary(op @ (BinaryOp::Add | BinaryOp::Sub), lhs, rhs) => {
            let (c1, r1) = split_linear(lhs, names);
            let (c2, r2) = split_linear(rhs, names);
            if c1 == 0.0 && c2 == 0.0 {
                return keep();
            }
            let rest = match (r1, r2) {
                (Some(a), Some(b)) => Some(binary(*op, a, b)),
                (Some(a), None) => Some(a),
                (None, Some(b)) if *op == BinaryOp::Sub => Some(Expr::Neg(Box::new(b))),
                (None, b) => b,
            };
            let coeff = if *op == BinaryOp::Add {
                c1 + c2
            } else {
                c1 - c2
            };
            (coeff, rest)
        }
        Expr::Binary(BinaryOp::Mul, lhs, rhs) => match (constant_value(lhs), constant_value(rhs)) {
            (Some(k), _) => scale(rhs, k, BinaryOp::Mul, true),
            (None, Some(k)) => scale(lhs, k, BinaryOp::Mul, false),
            _ => keep(),
        },
        Expr::Binary(BinaryOp::Div, lhs, rhs) => match constant_value(rhs) {
            Some(k) if k != 0.0 => scale(lhs, k, BinaryOp::Div, false),
            _ => keep(),
        },
        _ => keep(),
    }
}

/// Check that every free variable of `e` is in `allowed`.
pub fn validate_vars(e: &Expr, allowed: &BTreeSet<String>) -> Result<(), DslError> {
    let unknown: Vec<_> = e
        .free_vars()
        .into_iter()
        .filter(|(name, _)| !allowed.contains(name))
        .collect();
    if unknown.is_empty() {
        Ok(())
    } else {
        Err(DslError::UnknownVariables(unknown))
    }
}

pub fn parse_expression(tokens: &[Token]) -> Result<Expr, DslError> {
    let mut parser = Parser {
        tokens,
        idx: 0,
        open_parens: Vec::new(),
    };
    if tokens.is_empty() {
        return Err(DslError::UnexpectedEnd { pos: 0 });
    }
    let expr = parser.expr(0)?;
    if let Some(tok) = parser.peek() {
        if tok.lexeme == ")" {
            return Err(DslError::UnbalancedParen { pos: tok.pos });
        }
        return Err(DslError::TrailingInput {
            found: tok.lexeme.clone(),
            pos: tok.pos,
        });
    }
    Ok(expr)
}

struct Parser<'a> {
    tokens: &'a [Token],
    idx: usize,
    open_parens: Vec<usize>,
}

// binding powers: additive 1, multiplicative 2, unary minus 3, power 4
const UNARY_BP: u8 = 3;

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.tokens.get(self.idx)
    }

    fn end_pos(&self) -> usize {
        self.tokens
            .last()
            .map(|t| t.pos + t.lexeme.len())
            .unwrap_or(0)
    }

    fn next(&mut self) -> Result<&'a Token, DslError> {
        let tok = self
            .tokens
            .get(self.idx)
            .ok_or_else(|| match self.open_parens.last() {
                Some(&pos) => DslError::UnbalancedParen { pos },
                None => DslError::UnexpectedEnd {
                    pos: self.end_pos(),
                },
            })?;
        self.idx += 1;
        Ok(tok)
    }

    fn infix(tok: &Token) -> Option<(BinaryOp, u8)> {
        if tok.kind != TokenKind::Operator {
            return None;
        }
        match tok.lexeme.as_str() {
            "+" => Some((BinaryOp::Add, 1)),
            "-" => Some((BinaryOp::Sub, 1)),
            "*" => Some((BinaryOp::Mul, 2)),
            "/" => Some((BinaryOp::Div, 2)),
            "^" => Some((BinaryOp::Pow, 4)),
            _ => None,
        }
    }

    /// Precedence climbing: parse operators binding tighter than `min_bp`.
    fn expr(&mut self, min_bp: u8) -> Result<Expr, DslError> {
        let mut lhs = self.prefix()?;
        while let Some(tok) = self.peek() {
            let Some((op, bp)) = Self::infix(tok) else {
                break;
            };
            if bp <= min_bp {
                break;
            }
            self.idx += 1;
            let rhs = if op == BinaryOp::Pow {
                // right operand may carry its own unary minus: 2^-1
                self.expr(UNARY_BP - 1)?
            } else {
                self.expr(bp)?
            };
            lhs = binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn prefix(&mut self) -> Result<Expr, DslError> {
        let tok = self.next()?;
        match tok.kind {
            TokenKind::Operator if tok.lexeme == "-" => {
                let inner = self.expr(UNARY_BP)?;
                Ok(Expr::Neg(Box::new(inner)))
            }
            TokenKind::Number => {
                tok.lexeme
                    .parse::<f64>()
                    .map(Expr::Const)
                    .map_err(|_| DslError::MalformedNumber {
                        lexeme: tok.lexeme.clone(),
                        pos: tok.pos,
                    })
            }
            TokenKind::Identifier => self.identifier(tok),
            TokenKind::Paren if tok.lexeme == "(" => {
                self.open_parens.push(tok.pos);
                let inner = self.expr(0)?;
                self.expect_close(tok.pos)?;
                Ok(inner)
            }
            _ => Err(DslError::UnexpectedToken {
                found: format!("{:?}", tok.lexeme),
                pos: tok.pos,
            }),
        }
    }

    fn expect_close(&mut self, open_pos: usize) -> Result<(), DslError> {
        match self.peek() {
            Some(t) if t.lexeme == ")" => {
                self.idx += 1;
                self.open_parens.pop();
                Ok(())
            }
            Some(t) => Err(DslError::UnexpectedToken {
                found: format!("{:?}", t.lexeme),
                pos: t.pos,
            }),
            None => Err(DslError::UnbalancedParen { pos: open_pos }),
        }
    }

    fn identifier(&mut self, tok: &'a Token) -> Result<Expr, DslError> {
        let is_call = matches!(self.peek(), Some(t) if t.lexeme == "(");
        if !is_call {
            return Ok(match tok.lexeme.as_str() {
                "pi" => Expr::Const(std::f64::consts::PI),
                "e" => Expr::Const(std::f64::consts::E),
                name => Expr::Var(Variable {
                    name: name.to_string(),
                    pos: tok.pos,
                }),
            });
        }
        let open = self.next()?;
        self.open_parens.push(open.pos);
        let mut arg_pos = vec![self.peek().map_or(open.pos + 1, |t| t.pos)];
        let mut args = vec![self.expr(0)?];
        while matches!(self.peek(), Some(t) if t.kind == TokenKind::Comma) {
            self.idx += 1;
            arg_pos.push(self.peek().map_or(open.pos + 1, |t| t.pos));
            args.push(self.expr(0)?);
        }
        self.expect_close(open.pos)?;

        if tok.lexeme == "nthroot" {
            if args.len() != 2 {
                return Err(DslError::Arity {
                    name: tok.lexeme.clone(),
                    expected: 2,
                    got: args.len(),
                    pos: tok.pos,
                });
            }
            let degree = args.pop().expect("two arguments");
            let k = match degree {
                Expr::Const(v) if v >= 1.0 && v.fract() == 0.0 && v <= f64::from(u32::MAX) => {
                    v as u32
                }
                _ => return Err(DslError::RootDegree { pos: arg_pos[1] }),
            };
            let arg = args.pop().expect("one argument");
            return Ok(Expr::NthRoot(Box::new(arg), k));
        }
        let func = Function::from_name(&tok.lexeme).ok_or_else(|| DslError::UnknownFunction {
            name: tok.lexeme.clone(),
            pos: tok.pos,
        })?;
        if args.len() != 1 {
            return Err(DslError::Arity {
                name: tok.lexeme.clone(),
                expected: 1,
                got: args.len(),
                pos: tok.pos,
            });
        }
        Ok(Expr::Call(
            func,
            Box::new(args.pop().expect("one argument")),
        ))
    }
}
