//! Minimal arithmetic expression grammar for radial coefficient functions.
//!
//! Accepts numbers, the variable `r`, the operators `+ - * / ^`, parentheses
//! and the functions `sin cos sinh cosh exp log sqrt`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    Sin,
    Cos,
    Sinh,
    Cosh,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Sinh => x.sinh(),
            Func::Cosh => x.cosh(),
            Func::Exp => x.exp(),
            Func::Log => x.ln(),
            Func::Sqrt => x.sqrt(),
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Num(f64),
    Var,
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

impl Node {
    fn eval(&self, r: f64) -> f64 {
        match self {
            Node::Num(v) => *v,
            Node::Var => r,
            Node::Neg(a) => -a.eval(r),
            Node::Add(a, b) => a.eval(r) + b.eval(r),
            Node::Sub(a, b) => a.eval(r) - b.eval(r),
            Node::Mul(a, b) => a.eval(r) * b.eval(r),
            Node::Div(a, b) => a.eval(r) / b.eval(r),
            Node::Pow(a, b) => a.eval(r).powf(b.eval(r)),
            Node::Call(f, a) => f.apply(a.eval(r)),
        }
    }
}

/// A parsed closed-form expression in the variable `r`.
#[derive(Debug, Clone)]
pub struct Expr {
    root: Node,
    source: String,
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let mut p = Parser {
            bytes: src.as_bytes(),
            pos: 0,
        };
        p.skip_ws();
        let root = p.expr()?;
        p.skip_ws();
        if p.pos != p.bytes.len() {
            return Err(Error::Parse(format!(
                "unexpected input at byte {} in expression `{}`",
                p.pos, src
            )));
        }
        Ok(Expr {
            root,
            source: src.to_string(),
        })
    }

    pub fn eval(&self, r: f64) -> f64 {
        self.root.eval(r)
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.pos += 1;
                    lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.factor()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    lhs = Node::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Some(b'/') => {
                    self.pos += 1;
                    lhs = Node::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Node> {
        self.skip_ws();
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Node::Neg(Box::new(self.factor()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        self.skip_ws();
        if self.peek() == Some(b'^') {
            self.pos += 1;
            // right associative; exponent may carry a unary minus
            let exp = self.factor()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        self.skip_ws();
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.skip_ws();
                if self.peek() != Some(b')') {
                    return Err(Error::Parse("missing closing parenthesis".into()));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            _ => Err(Error::Parse(format!(
                "unexpected character at byte {}",
                self.pos
            ))),
        }
    }

    fn number(&mut self) -> Result<Node> {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() || c == b'.' {
                self.pos += 1;
            } else if (c == b'e' || c == b'E') && self.pos > start {
                let save = self.pos;
                self.pos += 1;
                if matches!(self.peek(), Some(b'+') | Some(b'-')) {
                    self.pos += 1;
                }
                if !matches!(self.peek(), Some(d) if d.is_ascii_digit()) {
                    self.pos = save;
                    break;
                }
            } else {
                break;
            }
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap();
        text.parse::<f64>()
            .map(Node::Num)
            .map_err(|_| Error::Parse(format!("invalid number `{text}`")))
    }

    fn ident(&mut self) -> Result<Node> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric()) {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap();
        if name == "r" {
            return Ok(Node::Var);
        }
        if let Some(f) = Func::from_name(name) {
            self.skip_ws();
            if self.peek() != Some(b'(') {
                return Err(Error::Parse(format!("function `{name}` needs `(`")));
            }
            self.pos += 1;
            let arg = self.expr()?;
            self.skip_ws();
            if self.peek() != Some(b')') {
                return Err(Error::Parse(format!("unclosed call of `{name}`")));
            }
            self.pos += 1;
            return Ok(Node::Call(f, Box::new(arg)));
        }
        Err(Error::Parse(format!("unknown identifier `{name}`")))
    }
}
