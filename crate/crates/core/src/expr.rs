//! Closed-form field expressions used by configuration files.
//!
//! Grammar (whitespace is insignificant):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | '+' unary | power
//! power   := primary ('^' unary)?
//! primary := number | 'x' | 't' | 'i' | 'pi' | 'e'
//!          | ('sin' | 'cos' | 'exp') '(' expr ')' | '(' expr ')'
//! ```
//!
//! Values are complex; `x` is the spatial coordinate, `t` the time.

use crate::{Error, Result, C64};
use std::fmt;

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Number(f64),
    X,
    T,
    I,
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Func {
    Sin,
    Cos,
    Exp,
}

/// A parsed expression in `x` and `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
}

impl Expr {
    pub fn parse(source: &str) -> Result<Self> {
        let tokens = tokenize(source)?;
        let mut p = Parser { tokens: &tokens, pos: 0, len: source.len() };
        let root = p.expr()?;
        if let Some((col, tok)) = p.peek_full() {
            return Err(Error::Expression { column: col + 1, message: format!("unexpected `{tok}`") });
        }
        Ok(Self { source: source.to_string(), root })
    }

    pub fn constant(value: f64) -> Self {
        Self { source: format!("{value}"), root: Node::Number(value) }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, x: f64, t: f64) -> C64 {
        eval(&self.root, x, t)
    }

    /// Real part, for coefficient fields; `None` if the value is not real.
    pub fn eval_real(&self, x: f64, t: f64) -> Option<f64> {
        let v = self.eval(x, t);
        (v.im.abs() <= 1e-14 * (1.0 + v.re.abs())).then_some(v.re)
    }

    pub fn depends_on_x(&self) -> bool {
        mentions(&self.root, &Node::X)
    }

    pub fn depends_on_t(&self) -> bool {
        mentions(&self.root, &Node::T)
    }

    /// True when the expression is the literal zero.
    pub fn is_zero(&self) -> bool {
        matches!(self.root, Node::Number(v) if v == 0.0)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl std::str::FromStr for Expr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Expr::parse(s)
    }
}

fn mentions(node: &Node, var: &Node) -> bool {
    match node {
        Node::X | Node::T => node == var,
        Node::Number(_) | Node::I => false,
        Node::Neg(a) | Node::Call(_, a) => mentions(a, var),
        Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
            mentions(a, var) || mentions(b, var)
        }
    }
}

fn eval(node: &Node, x: f64, t: f64) -> C64 {
    match node {
        Node::Number(v) => C64::new(*v, 0.0),
        Node::X => C64::new(x, 0.0),
        Node::T => C64::new(t, 0.0),
        Node::I => C64::i(),
        Node::Neg(a) => -eval(a, x, t),
        Node::Add(a, b) => eval(a, x, t) + eval(b, x, t),
        Node::Sub(a, b) => eval(a, x, t) - eval(b, x, t),
        Node::Mul(a, b) => eval(a, x, t) * eval(b, x, t),
        Node::Div(a, b) => eval(a, x, t) / eval(b, x, t),
        Node::Pow(a, b) => {
            let base = eval(a, x, t);
            let exp = eval(b, x, t);
            if exp.im == 0.0 && exp.re.fract() == 0.0 && exp.re.abs() < 64.0 {
                base.powi(exp.re as i32)
            } else {
                base.powc(exp)
            }
        }
        Node::Call(f, a) => {
            let v = eval(a, x, t);
            match f {
                Func::Sin => v.sin(),
                Func::Cos => v.cos(),
                Func::Exp => v.exp(),
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(v) => write!(f, "{v}"),
            Tok::Ident(s) => f.write_str(s),
            Tok::Op(c) => write!(f, "{c}"),
        }
    }
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut k = i + 1;
                if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                    k += 1;
                }
                if k < bytes.len() && bytes[k].is_ascii_digit() {
                    i = k;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let v = text.parse::<f64>().map_err(|_| Error::Expression {
                column: start + 1,
                message: format!("bad number `{text}`"),
            })?;
            out.push((start, Tok::Num(v)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
        } else if "+-*/^()".contains(c) {
            out.push((i, Tok::Op(c)));
            i += 1;
        } else {
            return Err(Error::Expression { column: i + 1, message: format!("unexpected character `{c}`") });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: &'a [(usize, Tok)],
    pos: usize,
    len: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn peek_full(&self) -> Option<(usize, &Tok)> {
        self.tokens.get(self.pos).map(|(c, t)| (*c, t))
    }

    fn column(&self) -> usize {
        self.tokens.get(self.pos).map(|(c, _)| c + 1).unwrap_or(self.len + 1)
    }

    fn eat(&mut self, op: char) -> bool {
        if self.peek() == Some(&Tok::Op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, op: char) -> Result<()> {
        if self.eat(op) {
            Ok(())
        } else {
            Err(Error::Expression { column: self.column(), message: format!("expected `{op}`") })
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
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.primary()?;
        if self.eat('^') {
            return Ok(Node::Pow(Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node> {
        let column = self.column();
        let Some((_, tok)) = self.tokens.get(self.pos).cloned() else {
            return Err(Error::Expression { column, message: "unexpected end of expression".into() });
        };
        self.pos += 1;
        match tok {
            Tok::Num(v) => Ok(Node::Number(v)),
            Tok::Op('(') => {
                let inner = self.expr()?;
                self.expect(')')?;
                Ok(inner)
            }
            Tok::Ident(name) => match name.as_str() {
                "x" => Ok(Node::X),
                "t" => Ok(Node::T),
                "i" => Ok(Node::I),
                "pi" => Ok(Node::Number(std::f64::consts::PI)),
                "e" => Ok(Node::Number(std::f64::consts::E)),
                "sin" | "cos" | "exp" => {
                    let f = match name.as_str() {
                        "sin" => Func::Sin,
                        "cos" => Func::Cos,
                        _ => Func::Exp,
                    };
                    self.expect('(')?;
                    let arg = self.expr()?;
                    self.expect(')')?;
                    Ok(Node::Call(f, Box::new(arg)))
                }
                other => Err(Error::Expression { column, message: format!("unknown identifier `{other}`") }),
            },
            Tok::Op(c) => Err(Error::Expression { column, message: format!("unexpected `{c}`") }),
        }
    }
}
