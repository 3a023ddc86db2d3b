//! A small arithmetic expression language for user-defined densities and
//! field value maps.
//!
//! Grammar (whitespace insensitive):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?              right associative
//! atom    := number | ident | ident '[' int (',' int)? ']'
//!          | func '(' args ')' | '(' expr ')'
//! func    := abs | sqrt | min | max | norm
//! ```
//!
//! Identifiers are the vector arguments `x`, `u`, `b`, `xi` and the constants
//! `p` (the growth exponent) and `pi`. Indices are 1-based; `xi[i,j]` is
//! the entry `∂u_i/∂x_j`. A bare vector name is a scalar only when the vector
//! has length one. Inside `norm(...)` a bare vector name contributes all of
//! its components, so `norm(xi)` is the Frobenius norm and `norm(b, 1)` is
//! `sqrt(|b|² + 1)`. `min` and `max` take one or more arguments.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    X,
    U,
    B,
    Xi,
}

impl Var {
    fn name(self) -> &'static str {
        match self {
            Var::X => "x",
            Var::U => "u",
            Var::B => "b",
            Var::Xi => "xi",
        }
    }
}

/// Lengths of the vector arguments visible to an expression. A length of
/// zero hides the variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarDims {
    pub x: usize,
    pub u: usize,
    pub b: usize,
    /// Columns of `xi` (the space dimension N); `xi` has `u * xi_cols` entries.
    pub xi_cols: usize,
}

impl VarDims {
    pub fn density(n: usize, d: usize, m: usize) -> Self {
        VarDims { x: n, u: d, b: m, xi_cols: n }
    }

    /// Only `x` is visible: used for field value maps.
    pub fn spatial(n: usize) -> Self {
        VarDims { x: n, u: 0, b: 0, xi_cols: 0 }
    }

    fn len(&self, v: Var) -> usize {
        match v {
            Var::X => self.x,
            Var::U => self.u,
            Var::B => self.b,
            Var::Xi => self.u * self.xi_cols,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    Abs,
    Sqrt,
    Min,
    Max,
    Norm,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    P,
    Var(Var, usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Vec<Arg>),
}

#[derive(Debug, Clone, PartialEq)]
enum Arg {
    Scalar(Node),
    Whole(Var),
}

/// Argument values for evaluation.
#[derive(Debug, Clone, Copy)]
pub struct Env<'a> {
    pub x: &'a [f64],
    pub u: &'a [f64],
    pub b: &'a [f64],
    pub xi: &'a [f64],
    pub p: f64,
}

impl<'a> Env<'a> {
    pub fn spatial(x: &'a [f64]) -> Self {
        Env { x, u: &[], b: &[], xi: &[], p: f64::NAN }
    }

    #[inline]
    fn get(&self, v: Var) -> &'a [f64] {
        match v {
            Var::X => self.x,
            Var::U => self.u,
            Var::B => self.b,
            Var::Xi => self.xi,
        }
    }
}

/// A parsed expression, checked against the variable dimensions it was
/// compiled for.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
    dims: VarDims,
}

impl Expr {
    pub fn parse(source: &str, dims: VarDims) -> Result<Expr> {
        let tokens = tokenize(source)?;
        let mut parser = Parser { tokens, pos: 0, dims };
        let root = parser.expr()?;
        if parser.pos != parser.tokens.len() {
            return Err(Error::Expression(format!(
                "unexpected token {:?} in `{source}`",
                parser.tokens[parser.pos]
            )));
        }
        Ok(Expr { source: source.to_string(), root, dims })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn dims(&self) -> VarDims {
        self.dims
    }

    pub fn eval(&self, env: &Env<'_>) -> f64 {
        eval(&self.root, env)
    }

    /// Whether the expression reads variable `v` at all.
    pub fn uses(&self, v: Var) -> bool {
        uses(&self.root, v)
    }
}

fn uses(node: &Node, v: Var) -> bool {
    match node {
        Node::Num(_) | Node::P => false,
        Node::Var(w, _) => *w == v,
        Node::Neg(a) => uses(a, v),
        Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
            uses(a, v) || uses(b, v)
        }
        Node::Call(_, args) => args.iter().any(|a| match a {
            Arg::Scalar(n) => uses(n, v),
            Arg::Whole(w) => *w == v,
        }),
    }
}

fn eval(node: &Node, env: &Env<'_>) -> f64 {
    match node {
        Node::Num(c) => *c,
        Node::P => env.p,
        Node::Var(v, i) => env.get(*v)[*i],
        Node::Neg(a) => -eval(a, env),
        Node::Add(a, b) => eval(a, env) + eval(b, env),
        Node::Sub(a, b) => eval(a, env) - eval(b, env),
        Node::Mul(a, b) => eval(a, env) * eval(b, env),
        Node::Div(a, b) => eval(a, env) / eval(b, env),
        Node::Pow(a, b) => {
            let base = eval(a, env);
            let e = eval(b, env);
            if e == 2.0 {
                base * base
            } else {
                base.powf(e)
            }
        }
        Node::Call(f, args) => match f {
            Func::Abs => scalar_arg(&args[0], env).abs(),
            Func::Sqrt => scalar_arg(&args[0], env).sqrt(),
            Func::Min => args.iter().map(|a| scalar_arg(a, env)).fold(f64::INFINITY, f64::min),
            Func::Max => args.iter().map(|a| scalar_arg(a, env)).fold(f64::NEG_INFINITY, f64::max),
            Func::Norm => {
                let mut s = 0.0;
                for a in args {
                    match a {
                        Arg::Scalar(n) => {
                            let v = eval(n, env);
                            s += v * v;
                        }
                        Arg::Whole(v) => s += env.get(*v).iter().map(|c| c * c).sum::<f64>(),
                    }
                }
                s.sqrt()
            }
        },
    }
}

#[inline]
fn scalar_arg(a: &Arg, env: &Env<'_>) -> f64 {
    match a {
        Arg::Scalar(n) => eval(n, env),
        // only produced for length-one vectors
        Arg::Whole(v) => env.get(*v)[0],
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn tokenize(src: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
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
            let v = text
                .parse::<f64>()
                .map_err(|_| Error::Expression(format!("bad number `{text}`")))?;
            out.push(Tok::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^(),[]".contains(c) {
            out.push(Tok::Op(c));
            i += 1;
        } else {
            return Err(Error::Expression(format!("unexpected character `{c}`")));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Tok>,
    pos: usize,
    dims: VarDims,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Op(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(Error::Expression(format!("expected `{c}` at token {}", self.pos)))
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat('-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.eat('^') {
            let exp = self.unary()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn index(&mut self) -> Result<usize> {
        match self.tokens.get(self.pos) {
            Some(Tok::Num(v)) if *v >= 1.0 && v.fract() == 0.0 => {
                self.pos += 1;
                Ok(*v as usize - 1)
            }
            other => Err(Error::Expression(format!("expected a 1-based index, found {other:?}"))),
        }
    }

    fn variable(&mut self, v: Var) -> Result<Node> {
        let len = self.dims.len(v);
        if len == 0 {
            return Err(Error::Expression(format!("variable `{}` is not available here", v.name())));
        }
        if self.eat('[') {
            let i = self.index()?;
            let flat = if v == Var::Xi {
                self.expect(',')?;
                let j = self.index()?;
                if i >= self.dims.u || j >= self.dims.xi_cols {
                    return Err(Error::Expression(format!("index xi[{},{}] out of range", i + 1, j + 1)));
                }
                i * self.dims.xi_cols + j
            } else {
                if i >= len {
                    return Err(Error::Expression(format!("index {}[{}] out of range", v.name(), i + 1)));
                }
                i
            };
            self.expect(']')?;
            return Ok(Node::Var(v, flat));
        }
        if len != 1 {
            return Err(Error::Expression(format!(
                "`{}` has {len} components; index it or wrap it in norm()",
                v.name()
            )));
        }
        Ok(Node::Var(v, 0))
    }

    fn atom(&mut self) -> Result<Node> {
        match self.tokens.get(self.pos).cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Node::Num(v))
            }
            Some(Tok::Op('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                match name.as_str() {
                    "x" => self.variable(Var::X),
                    "u" => self.variable(Var::U),
                    "b" => self.variable(Var::B),
                    "xi" => self.variable(Var::Xi),
                    "p" => Ok(Node::P),
                    "pi" => Ok(Node::Num(std::f64::consts::PI)),
                    "abs" | "sqrt" | "min" | "max" | "norm" => self.call(&name),
                    _ => Err(Error::Expression(format!("unknown identifier `{name}`"))),
                }
            }
            other => Err(Error::Expression(format!("unexpected token {other:?}"))),
        }
    }

    fn call(&mut self, name: &str) -> Result<Node> {
        let func = match name {
            "abs" => Func::Abs,
            "sqrt" => Func::Sqrt,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => Func::Norm,
        };
        self.expect('(')?;
        let mut args = Vec::new();
        loop {
            args.push(self.arg(func)?);
            if !self.eat(',') {
                break;
            }
        }
        self.expect(')')?;
        let arity_ok = match func {
            Func::Abs | Func::Sqrt => args.len() == 1,
            _ => !args.is_empty(),
        };
        if !arity_ok {
            return Err(Error::Expression(format!("wrong number of arguments to `{name}`")));
        }
        Ok(Node::Call(func, args))
    }

    fn arg(&mut self, func: Func) -> Result<Arg> {
        // A bare vector name directly followed by ',' or ')' inside norm().
        if func == Func::Norm {
            if let Some(Tok::Ident(name)) = self.tokens.get(self.pos) {
                let v = match name.as_str() {
                    "x" => Some(Var::X),
                    "u" => Some(Var::U),
                    "b" => Some(Var::B),
                    "xi" => Some(Var::Xi),
                    _ => None,
                };
                let next = self.tokens.get(self.pos + 1);
                if let Some(v) = v {
                    if matches!(next, Some(Tok::Op(',')) | Some(Tok::Op(')'))) {
                        if self.dims.len(v) == 0 {
                            return Err(Error::Expression(format!(
                                "variable `{}` is not available here",
                                v.name()
                            )));
                        }
                        self.pos += 1;
                        return Ok(Arg::Whole(v));
                    }
                }
            }
        }
        Ok(Arg::Scalar(self.expr()?))
    }
}
