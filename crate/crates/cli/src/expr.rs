//! Arithmetic expressions in `x`, `y`, `t` and `lambda` for custom problems.
//!
//! Grammar, lowest precedence first:
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?
//! atom    := number | name | name '(' sum ')' | '(' sum ')'
//! ```
//!
//! `^` is right associative and binds tighter than unary minus on its left,
//! so `-x^2` is `-(x^2)`.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    Y,
    T,
    Lambda,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Sinh,
    Cosh,
    Tanh,
}

impl Func {
    fn lookup(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "ln" | "log" => Func::Ln,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            "tanh" => Func::Tanh,
            _ => return None,
        })
    }

    fn apply(self, a: f64) -> f64 {
        match self {
            Func::Sin => a.sin(),
            Func::Cos => a.cos(),
            Func::Tan => a.tan(),
            Func::Exp => a.exp(),
            Func::Ln => a.ln(),
            Func::Sqrt => a.sqrt(),
            Func::Abs => a.abs(),
            Func::Sinh => a.sinh(),
            Func::Cosh => a.cosh(),
            Func::Tanh => a.tanh(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Bin(char, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// A parsed expression together with its source text.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "column {}: {}", self.column, self.message)
    }
}

impl std::error::Error for ParseError {}

/// Values bound to the free variables during evaluation.
#[derive(Debug, Clone, Copy, Default)]
pub struct Bindings {
    pub x: f64,
    pub y: f64,
    pub t: f64,
    pub lambda: f64,
}

impl Expr {
    /// Parses `text`, accepting only the variables in `allowed`.
    pub fn parse(text: &str, allowed: &[Var]) -> Result<Self, ParseError> {
        let mut p = Parser {
            src: text.as_bytes(),
            pos: 0,
            allowed,
        };
        let root = p.sum()?;
        p.skip_ws();
        if p.pos < p.src.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(Self {
            source: text.trim().to_string(),
            root,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, b: &Bindings) -> f64 {
        eval(&self.root, b)
    }
}

fn eval(n: &Node, b: &Bindings) -> f64 {
    match n {
        Node::Num(v) => *v,
        Node::Var(Var::X) => b.x,
        Node::Var(Var::Y) => b.y,
        Node::Var(Var::T) => b.t,
        Node::Var(Var::Lambda) => b.lambda,
        Node::Neg(a) => -eval(a, b),
        Node::Call(f, a) => f.apply(eval(a, b)),
        Node::Bin(op, l, r) => {
            let (l, r) = (eval(l, b), eval(r, b));
            match op {
                '+' => l + r,
                '-' => l - r,
                '*' => l * r,
                '/' => l / r,
                _ => l.powf(r),
            }
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    allowed: &'a [Var],
}

impl Parser<'_> {
    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError {
            column: self.pos + 1,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn sum(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => '+',
                Some(b'-') => '-',
                _ => return Ok(lhs),
            };
            self.pos += 1;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.product()?));
        }
    }

    fn product(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => '*',
                Some(b'/') => '/',
                _ => return Ok(lhs),
            };
            self.pos += 1;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        if self.eat(b'-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.atom()?;
        if self.eat(b'^') {
            return Ok(Node::Bin('^', Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ParseError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.sum()?;
                if !self.eat(b')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.name(),
            Some(c) => Err(self.error(format!("unexpected `{}`", c as char))),
            None => Err(self.error("unexpected end of expression")),
        }
    }

    fn number(&mut self) -> Result<Node, ParseError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            while p.pos < p.src.len() && (p.src[p.pos].is_ascii_digit() || p.src[p.pos] == b'.') {
                p.pos += 1;
            }
        };
        digits(self);
        if self.pos < self.src.len() && matches!(self.src[self.pos], b'e' | b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.src.len() && matches!(self.src[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            if self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                digits(self);
            } else {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or_default();
        text.parse().map(Node::Num).map_err(|_| ParseError {
            column: start + 1,
            message: format!("malformed number `{text}`"),
        })
    }

    fn name(&mut self) -> Result<Node, ParseError> {
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or_default();
        let at = |message: String| ParseError {
            column: start + 1,
            message,
        };
        if let Some(f) = Func::lookup(name) {
            if !self.eat(b'(') {
                return Err(at(format!("function `{name}` needs a parenthesised argument")));
            }
            let arg = self.sum()?;
            if !self.eat(b')') {
                return Err(self.error("expected `)`"));
            }
            return Ok(Node::Call(f, Box::new(arg)));
        }
        let var = match name {
            "pi" => return Ok(Node::Num(std::f64::consts::PI)),
            "e" => return Ok(Node::Num(std::f64::consts::E)),
            "x" => Var::X,
            "y" => Var::Y,
            "t" => Var::T,
            "lambda" => Var::Lambda,
            _ => return Err(at(format!("unknown name `{name}`"))),
        };
        if !self.allowed.contains(&var) {
            return Err(at(format!("`{name}` is not available here")));
        }
        Ok(Node::Var(var))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL: &[Var] = &[Var::X, Var::Y, Var::T, Var::Lambda];

    fn ev(s: &str, b: Bindings) -> f64 {
        Expr::parse(s, ALL).unwrap().eval(&b)
    }

    #[test]
    fn precedence_and_associativity() {
        let b = Bindings::default();
        assert_eq!(ev("1 + 2 * 3", b), 7.0);
        assert_eq!(ev("(1 + 2) * 3", b), 9.0);
        assert_eq!(ev("2 ^ 3 ^ 2", b), 512.0);
        assert_eq!(ev("-2 ^ 2", b), -4.0);
        assert_eq!(ev("8 / 4 / 2", b), 1.0);
        assert_eq!(ev("10 - 4 - 3", b), 3.0);
        assert_eq!(ev("2 ^ -1", b), 0.5);
        assert_eq!(ev("1.5e2 + 2E-1", b), 150.2);
    }

    #[test]
    fn variables_and_functions() {
        let b = Bindings {
            x: 0.5,
            y: 1.0,
            t: 0.0,
            lambda: 2.0,
        };
        let v = ev("exp(-t) * sin(pi * x) * cos(pi * y) + lambda", b);
        assert!((v - 1.0).abs() < 1e-15);
        assert!((ev("sqrt(abs(-4)) + ln(e)", b) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn errors_carry_columns() {
        let e = Expr::parse("x + * y", ALL).unwrap_err();
        assert_eq!(e.column, 5);
        assert!(Expr::parse("sin x", ALL).is_err());
        assert!(Expr::parse("(x + 1", ALL).is_err());
        assert!(Expr::parse("x y", ALL).is_err());
        let e = Expr::parse("foo(x)", ALL).unwrap_err();
        assert!(e.message.contains("foo"));
        let e = Expr::parse("t + x", &[Var::X, Var::Y]).unwrap_err();
        assert_eq!(e.column, 1);
    }
}
