//! Scalar expression language for vector fields and forcing profiles.
//!
//! Grammar, lowest to highest precedence: `+ -`, `* /`, unary `-`, `^`
//! (right-associative). Functions: `exp ln sin cos tanh sech sqrt abs`.
//! The constant `pi` is built in; every other identifier is a free variable.
//!
//! Evaluation is generic over [`Scalar`], so the same tree gives values,
//! exact forward-mode first derivatives ([`Dual`]) and second derivatives
//! ([`Jet`]).

mod scalar;

pub use scalar::{Dual, Jet, Scalar};

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown function `{name}` at byte {offset}")]
    UnknownFunction { name: String, offset: usize },
    #[error("function `{name}` takes {expected} argument(s), got {found} (byte {offset})")]
    Arity {
        name: String,
        expected: usize,
        found: usize,
        offset: usize,
    },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. }
            | ParseError::UnknownFunction { offset, .. }
            | ParseError::Arity { offset, .. } => *offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("domain error in `{op}` at argument {arg}")]
    Domain { op: &'static str, arg: f64 },
    #[error("unbound variable `{0}`")]
    Unbound(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Ln,
    Sin,
    Cos,
    Tanh,
    Sech,
    Sqrt,
    Abs,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tanh" => Func::Tanh,
            "sech" => Func::Sech,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tanh => "tanh",
            Func::Sech => "sech",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
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
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

/// Syntax tree node. Variables index into the owning [`Expr`]'s name table.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// A parsed expression together with its sorted free-variable names.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    vars: Vec<String>,
}

/// Parse `src` into an [`Expr`].
pub fn parse(src: &str) -> Result<Expr, ParseError> {
    Expr::parse(src)
}

/// Evaluate `e` with every free variable taken from `env`.
pub fn eval(e: &Expr, env: &HashMap<String, f64>) -> Result<f64, EvalError> {
    e.eval(env)
}

/// Exact partial derivative `∂e/∂var` at `env`.
pub fn deriv(e: &Expr, var: &str, env: &HashMap<String, f64>) -> Result<f64, EvalError> {
    e.deriv(var, env)
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ParseError> {
        let tokens = tokenize(src)?;
        let mut p = Parser {
            tokens,
            pos: 0,
            vars: Vec::new(),
            src_len: src.len(),
        };
        let root = p.expr()?;
        if let Some(tok) = p.peek() {
            return Err(ParseError::Syntax {
                offset: tok.offset,
                message: format!("unexpected {}", tok.kind.describe()),
            });
        }
        // canonical ordering of the variable table
        let mut sorted = p.vars.clone();
        sorted.sort();
        let remap: Vec<usize> = p
            .vars
            .iter()
            .map(|v| sorted.iter().position(|s| s == v).unwrap())
            .collect();
        let root = remap_vars(root, &remap);
        Ok(Expr { root, vars: sorted })
    }

    /// A literal constant expression.
    pub fn constant(v: f64) -> Expr {
        Expr {
            root: Node::Num(v),
            vars: Vec::new(),
        }
    }

    pub fn free_vars(&self) -> &[String] {
        &self.vars
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn eval(&self, env: &HashMap<String, f64>) -> Result<f64, EvalError> {
        let values = self.lookup(env)?;
        eval_node(&self.root, &|i| values[i])
    }

    pub fn deriv(&self, var: &str, env: &HashMap<String, f64>) -> Result<f64, EvalError> {
        let values = self.lookup(env)?;
        let dir = self.vars.iter().position(|v| v == var);
        let r = eval_node(&self.root, &|i| {
            Dual::new(values[i], if Some(i) == dir { 1.0 } else { 0.0 })
        })?;
        Ok(r.d)
    }

    fn lookup(&self, env: &HashMap<String, f64>) -> Result<Vec<f64>, EvalError> {
        self.vars
            .iter()
            .map(|v| env.get(v).copied().ok_or_else(|| EvalError::Unbound(v.clone())))
            .collect()
    }

    /// Resolve free variables against a slot layout for repeated evaluation.
    pub fn bind(&self, layout: &[String]) -> Result<BoundExpr, EvalError> {
        let slots = self
            .vars
            .iter()
            .map(|v| {
                layout
                    .iter()
                    .position(|l| l == v)
                    .ok_or_else(|| EvalError::Unbound(v.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(BoundExpr {
            root: self.root.clone(),
            slots,
        })
    }
}

impl std::str::FromStr for Expr {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Expr::parse(s)
    }
}

/// An expression whose variables are resolved to positions in a value slice.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundExpr {
    root: Node,
    slots: Vec<usize>,
}

impl BoundExpr {
    pub fn eval<S: Scalar>(&self, values: &[S]) -> Result<S, EvalError> {
        eval_node(&self.root, &|i| values[self.slots[i]])
    }

    /// True when the expression reads slot `slot`.
    pub fn uses_slot(&self, slot: usize) -> bool {
        self.slots.contains(&slot)
    }
}

fn remap_vars(node: Node, map: &[usize]) -> Node {
    match node {
        Node::Var(i) => Node::Var(map[i]),
        Node::Num(v) => Node::Num(v),
        Node::Neg(a) => Node::Neg(Box::new(remap_vars(*a, map))),
        Node::Bin(op, a, b) => Node::Bin(
            op,
            Box::new(remap_vars(*a, map)),
            Box::new(remap_vars(*b, map)),
        ),
        Node::Call(f, a) => Node::Call(f, Box::new(remap_vars(*a, map))),
    }
}

fn checked<S: Scalar>(r: S, op: &'static str, arg: f64) -> Result<S, EvalError> {
    if r.all_finite() {
        Ok(r)
    } else {
        Err(EvalError::Domain { op, arg })
    }
}

fn eval_node<S: Scalar, F: Fn(usize) -> S>(node: &Node, var: &F) -> Result<S, EvalError> {
    match node {
        Node::Num(v) => Ok(S::constant(*v)),
        Node::Var(i) => Ok(var(*i)),
        Node::Neg(a) => Ok(-eval_node(a, var)?),
        Node::Bin(op, a, b) => {
            let x = eval_node(a, var)?;
            let y = eval_node(b, var)?;
            match op {
                BinOp::Add => checked(x + y, "+", x.value()),
                BinOp::Sub => checked(x - y, "-", x.value()),
                BinOp::Mul => checked(x * y, "*", x.value()),
                BinOp::Div => {
                    if y.value() == 0.0 {
                        return Err(EvalError::Domain {
                            op: "/",
                            arg: y.value(),
                        });
                    }
                    checked(x / y, "/", y.value())
                }
                BinOp::Pow => pow(x, y),
            }
        }
        Node::Call(f, a) => {
            let x = eval_node(a, var)?;
            let xv = x.value();
            let r = match f {
                Func::Exp => x.exp(),
                Func::Ln => {
                    if xv <= 0.0 {
                        return Err(EvalError::Domain { op: "ln", arg: xv });
                    }
                    x.ln()
                }
                Func::Sin => x.sin(),
                Func::Cos => x.cos(),
                Func::Tanh => x.tanh(),
                Func::Sech => x.sech(),
                Func::Sqrt => {
                    if xv < 0.0 {
                        return Err(EvalError::Domain { op: "sqrt", arg: xv });
                    }
                    x.sqrt()
                }
                Func::Abs => x.abs(),
            };
            checked(r, f.name(), xv)
        }
    }
}

fn pow<S: Scalar>(base: S, exponent: S) -> Result<S, EvalError> {
    let b = base.value();
    let e = exponent.value();
    if exponent.is_constant() {
        if b < 0.0 && e.fract() != 0.0 {
            return Err(EvalError::Domain { op: "^", arg: b });
        }
        checked(base.powc(e), "^", b)
    } else {
        if b <= 0.0 {
            return Err(EvalError::Domain { op: "^", arg: b });
        }
        checked((exponent * base.ln()).exp(), "^", b)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(&self.root, &self.vars, f)
    }
}

fn write_node(node: &Node, vars: &[String], f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match node {
        Node::Num(v) => {
            if *v < 0.0 {
                write!(f, "(-{:?})", -v)
            } else {
                write!(f, "{v:?}")
            }
        }
        Node::Var(i) => write!(f, "{}", vars[*i]),
        Node::Neg(a) => {
            write!(f, "(-")?;
            write_node(a, vars, f)?;
            write!(f, ")")
        }
        Node::Bin(op, a, b) => {
            write!(f, "(")?;
            write_node(a, vars, f)?;
            write!(f, " {} ", op.symbol())?;
            write_node(b, vars, f)?;
            write!(f, ")")
        }
        Node::Call(func, a) => {
            write!(f, "{}(", func.name())?;
            write_node(a, vars, f)?;
            write!(f, ")")
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokKind {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

impl TokKind {
    fn describe(&self) -> String {
        match self {
            TokKind::Num(v) => format!("number {v}"),
            TokKind::Ident(s) => format!("identifier `{s}`"),
            TokKind::Op(c) => format!("operator `{c}`"),
            TokKind::LParen => "`(`".into(),
            TokKind::RParen => "`)`".into(),
            TokKind::Comma => "`,`".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokKind,
    offset: usize,
}

fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == '.' {
            while i < bytes.len() && ((bytes[i] as char).is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let v: f64 = text.parse().map_err(|_| ParseError::Syntax {
                offset: start,
                message: format!("malformed number `{text}`"),
            })?;
            out.push(Token {
                kind: TokKind::Num(v),
                offset: start,
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
            {
                i += 1;
            }
            out.push(Token {
                kind: TokKind::Ident(src[start..i].to_string()),
                offset: start,
            });
            continue;
        }
        let kind = match c {
            '+' | '-' | '*' | '/' | '^' => TokKind::Op(c),
            '(' => TokKind::LParen,
            ')' => TokKind::RParen,
            ',' => TokKind::Comma,
            _ => {
                return Err(ParseError::Syntax {
                    offset: start,
                    message: format!("unexpected character `{}`", &src[start..].chars().next().unwrap()),
                })
            }
        };
        out.push(Token {
            kind,
            offset: start,
        });
        i += 1;
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    vars: Vec<String>,
    src_len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn peek_op(&self) -> Option<char> {
        match self.peek() {
            Some(Token {
                kind: TokKind::Op(c),
                ..
            }) => Some(*c),
            _ => None,
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        while let Some(c @ ('+' | '-')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.term()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(c @ ('*' | '/')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.unary()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        match self.peek_op() {
            Some('-') => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.primary()?;
        if self.peek_op() == Some('^') {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node, ParseError> {
        let end = self.src_len;
        let tok = self.next().ok_or(ParseError::Syntax {
            offset: end,
            message: "unexpected end of input".into(),
        })?;
        match tok.kind {
            TokKind::Num(v) => Ok(Node::Num(v)),
            TokKind::LParen => {
                let inner = self.expr()?;
                self.expect_rparen(tok.offset)?;
                Ok(inner)
            }
            TokKind::Ident(name) => {
                if matches!(self.peek().map(|t| &t.kind), Some(TokKind::LParen)) {
                    self.pos += 1;
                    let func = Func::from_name(&name).ok_or(ParseError::UnknownFunction {
                        name: name.clone(),
                        offset: tok.offset,
                    })?;
                    let mut args = vec![self.expr()?];
                    while matches!(self.peek().map(|t| &t.kind), Some(TokKind::Comma)) {
                        self.pos += 1;
                        args.push(self.expr()?);
                    }
                    self.expect_rparen(tok.offset)?;
                    if args.len() != 1 {
                        return Err(ParseError::Arity {
                            name,
                            expected: 1,
                            found: args.len(),
                            offset: tok.offset,
                        });
                    }
                    return Ok(Node::Call(func, Box::new(args.pop().unwrap())));
                }
                if name == "pi" {
                    return Ok(Node::Num(std::f64::consts::PI));
                }
                let idx = match self.vars.iter().position(|v| *v == name) {
                    Some(i) => i,
                    None => {
                        self.vars.push(name);
                        self.vars.len() - 1
                    }
                };
                Ok(Node::Var(idx))
            }
            other => Err(ParseError::Syntax {
                offset: tok.offset,
                message: format!("unexpected {}", other.describe()),
            }),
        }
    }

    fn expect_rparen(&mut self, open: usize) -> Result<(), ParseError> {
        match self.next() {
            Some(Token {
                kind: TokKind::RParen,
                ..
            }) => Ok(()),
            Some(t) => Err(ParseError::Syntax {
                offset: t.offset,
                message: format!("expected `)`, found {}", t.kind.describe()),
            }),
            None => Err(ParseError::Syntax {
                offset: self.src_len,
                message: format!("unclosed `(` opened at byte {open}"),
            }),
        }
    }
}
