//! Closed-form coefficient expressions.
//!
//! Config files describe coefficient functions (exponents, weights, data
//! functions) as strings in a deliberately small grammar: `+ - * /`, the
//! functions `pow, exp, log, abs, sin, cos`, numeric literals, the
//! coordinates `x1..xn`, and the scalar argument `u`. `log` is the natural
//! logarithm.
//! Anything outside that set is a parse error, not a silent extension.

use std::fmt;

use serde::{Deserialize, Serialize};

/// A parsed expression. Keeps its source string so configs round-trip
/// byte-for-byte through reports.
#[derive(Clone, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Expr {
    src: String,
    root: Node,
}

#[derive(Clone, Debug)]
enum Node {
    Num(f64),
    Coord(usize),
    U,
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Exp(Box<Node>),
    Log(Box<Node>),
    Abs(Box<Node>),
    Sin(Box<Node>),
    Cos(Box<Node>),
}

/// Parse failure with a byte offset into the source string.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("expression error at byte {pos}: {msg} (in `{src}`)")]
pub struct ExprError {
    pub pos: usize,
    pub msg: String,
    pub src: String,
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ExprError> {
        let mut p = Parser { src, bytes: src.as_bytes(), pos: 0 };
        p.skip_ws();
        let root = p.expr()?;
        p.skip_ws();
        if p.pos != p.bytes.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(Expr { src: src.to_owned(), root })
    }

    /// Constant expression whose source is the shortest round-trip literal.
    pub fn constant(v: f64) -> Expr {
        let src = if v < 0.0 { format!("({v:?})") } else { format!("{v:?}") };
        Expr::parse(&src).expect("float literals are valid expressions")
    }

    pub fn zero() -> Expr {
        Expr::constant(0.0)
    }

    pub fn src(&self) -> &str {
        &self.src
    }

    /// Largest coordinate index referenced (1-based); 0 if none.
    pub fn max_coord(&self) -> usize {
        fn walk(n: &Node) -> usize {
            match n {
                Node::Coord(i) => *i,
                Node::Num(_) | Node::U => 0,
                Node::Neg(a)
                | Node::Exp(a)
                | Node::Log(a)
                | Node::Abs(a)
                | Node::Sin(a)
                | Node::Cos(a) => walk(a),
                Node::Add(a, b)
                | Node::Sub(a, b)
                | Node::Mul(a, b)
                | Node::Div(a, b)
                | Node::Pow(a, b) => walk(a).max(walk(b)),
            }
        }
        walk(&self.root)
    }

    /// Whether the expression mentions the solution slot u.
    pub fn references_u(&self) -> bool {
        fn walk(n: &Node) -> bool {
            match n {
                Node::U => true,
                Node::Num(_) | Node::Coord(_) => false,
                Node::Neg(a)
                | Node::Exp(a)
                | Node::Log(a)
                | Node::Abs(a)
                | Node::Sin(a)
                | Node::Cos(a) => walk(a),
                Node::Add(a, b)
                | Node::Sub(a, b)
                | Node::Mul(a, b)
                | Node::Div(a, b)
                | Node::Pow(a, b) => walk(a) || walk(b),
            }
        }
        walk(&self.root)
    }

    /// Evaluate at coordinates `x` and scalar `u`. Pure f64 arithmetic:
    /// domain violations surface as inf/NaN and are caught by callers that
    /// require finite values.
    pub fn eval(&self, x: &[f64], u: f64) -> f64 {
        fn ev(n: &Node, x: &[f64], u: f64) -> f64 {
            match n {
                Node::Num(v) => *v,
                Node::Coord(i) => x.get(*i - 1).copied().unwrap_or(f64::NAN),
                Node::U => u,
                Node::Neg(a) => -ev(a, x, u),
                Node::Add(a, b) => ev(a, x, u) + ev(b, x, u),
                Node::Sub(a, b) => ev(a, x, u) - ev(b, x, u),
                Node::Mul(a, b) => ev(a, x, u) * ev(b, x, u),
                Node::Div(a, b) => ev(a, x, u) / ev(b, x, u),
                Node::Pow(a, b) => ev(a, x, u).powf(ev(b, x, u)),
                Node::Exp(a) => ev(a, x, u).exp(),
                Node::Log(a) => ev(a, x, u).ln(),
                Node::Abs(a) => ev(a, x, u).abs(),
                Node::Sin(a) => ev(a, x, u).sin(),
                Node::Cos(a) => ev(a, x, u).cos(),
            }
        }
        ev(&self.root, x, u)
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({})", self.src)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.src)
    }
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.src == other.src
    }
}

impl TryFrom<String> for Expr {
    type Error = ExprError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Expr::parse(&s)
    }
}

impl From<Expr> for String {
    fn from(e: Expr) -> String {
        e.src
    }
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, msg: &str) -> ExprError {
        ExprError { pos: self.pos, msg: msg.to_owned(), src: self.src.to_owned() }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t' | b'\n' | b'\r')) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        loop {
            self.skip_ws();
            if self.eat(b'+') {
                lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            self.skip_ws();
            if self.eat(b'*') {
                lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        self.skip_ws();
        if self.eat(b'-') {
            Ok(Node::Neg(Box::new(self.unary()?)))
        } else if self.eat(b'+') {
            self.unary()
        } else {
            self.primary()
        }
    }

    fn primary(&mut self) -> Result<Node, ExprError> {
        self.skip_ws();
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.skip_ws();
                if !self.eat(b')') {
                    return Err(self.err("expected `)`"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            _ => Err(self.err("expected a number, identifier, or `(`")),
        }
    }

    fn number(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.eat(b'.') {
            while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                self.pos += 1;
            }
        }
        if matches!(self.peek(), Some(b'e' | b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                    self.pos += 1;
                }
            } else {
                // `2e` with no digits: the `e` was not an exponent marker.
                self.pos = mark;
            }
        }
        let text = &self.src[start..self.pos];
        text.parse::<f64>()
            .map(Node::Num)
            .map_err(|_| self.err("malformed number"))
    }

    fn ident(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric()) {
            self.pos += 1;
        }
        let name = &self.src[start..self.pos];
        match name {
            "u" => Ok(Node::U),
            "pow" => {
                let (a, b) = self.two_args()?;
                Ok(Node::Pow(Box::new(a), Box::new(b)))
            }
            "exp" => Ok(Node::Exp(Box::new(self.one_arg()?))),
            "log" => Ok(Node::Log(Box::new(self.one_arg()?))),
            "abs" => Ok(Node::Abs(Box::new(self.one_arg()?))),
            "sin" => Ok(Node::Sin(Box::new(self.one_arg()?))),
            "cos" => Ok(Node::Cos(Box::new(self.one_arg()?))),
            _ => {
                if let Some(digits) = name.strip_prefix('x') {
                    if !digits.is_empty() && digits.bytes().all(|c| c.is_ascii_digit()) {
                        let i: usize = digits
                            .parse()
                            .map_err(|_| self.err("coordinate index out of range"))?;
                        if i == 0 {
                            return Err(self.err("coordinates are 1-based (x1, x2, ...)"));
                        }
                        return Ok(Node::Coord(i));
                    }
                }
                Err(self.err(&format!("unknown identifier `{name}`")))
            }
        }
    }

    fn one_arg(&mut self) -> Result<Node, ExprError> {
        self.skip_ws();
        if !self.eat(b'(') {
            return Err(self.err("expected `(` after function name"));
        }
        let a = self.expr()?;
        self.skip_ws();
        if !self.eat(b')') {
            return Err(self.err("expected `)`"));
        }
        Ok(a)
    }

    fn two_args(&mut self) -> Result<(Node, Node), ExprError> {
        self.skip_ws();
        if !self.eat(b'(') {
            return Err(self.err("expected `(` after function name"));
        }
        let a = self.expr()?;
        self.skip_ws();
        if !self.eat(b',') {
            return Err(self.err("expected `,` (pow takes two arguments)"));
        }
        let b = self.expr()?;
        self.skip_ws();
        if !self.eat(b')') {
            return Err(self.err("expected `)`"));
        }
        Ok((a, b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, x: &[f64], u: f64) -> f64 {
        Expr::parse(src).unwrap().eval(x, u)
    }

    #[test]
    fn literals_and_precedence() {
        assert_eq!(ev("2+3*4", &[], 0.0), 14.0);
        assert_eq!(ev("(2+3)*4", &[], 0.0), 20.0);
        assert_eq!(ev("2-3-4", &[], 0.0), -5.0);
        assert_eq!(ev("12/3/2", &[], 0.0), 2.0);
        assert_eq!(ev("-2*3", &[], 0.0), -6.0);
        assert_eq!(ev("1.5e2", &[], 0.0), 150.0);
        assert_eq!(ev("1e-4", &[], 0.0), 1e-4);
    }

    #[test]
    fn coordinates_and_u() {
        assert_eq!(ev("x1*x2", &[3.0, 4.0], 0.0), 12.0);
        assert_eq!(ev("x2 - u", &[1.0, 10.0], 4.0), 6.0);
        assert_eq!(ev("1 + abs(u)", &[], -2.5), 3.5);
    }

    #[test]
    fn functions() {
        assert_eq!(ev("pow(2, 10)", &[], 0.0), 1024.0);
        assert!((ev("exp(1)", &[], 0.0) - std::f64::consts::E).abs() < 1e-15);
        assert!((ev("log(exp(3))", &[], 0.0) - 3.0).abs() < 1e-15);
        assert_eq!(ev("abs(-7)", &[], 0.0), 7.0);
        assert_eq!(ev("pow(abs(u), 3)", &[], -2.0), 8.0);
        assert!((ev("sin(x1)*cos(x2)", &[0.5, 0.25], 0.0) - 0.5f64.sin() * 0.25f64.cos()).abs() < 1e-15);
    }

    #[test]
    fn parse_errors() {
        for bad in ["2 +", "tan(x1)", "x0", "pow(1)", "2 3", "(1", "y", ""] {
            assert!(Expr::parse(bad).is_err(), "expected parse error for `{bad}`");
        }
    }

    #[test]
    fn out_of_range_coordinate_is_nan() {
        assert!(ev("x3", &[1.0, 2.0], 0.0).is_nan());
        assert_eq!(Expr::parse("x3+x1").unwrap().max_coord(), 3);
    }

    #[test]
    fn constant_round_trips() {
        for v in [0.0, 1.0, -2.5, 2.0 * std::f64::consts::PI * std::f64::consts::PI, 1e-300] {
            let e = Expr::constant(v);
            assert_eq!(e.eval(&[], 0.0), v, "constant {v} failed to round-trip");
        }
    }

    #[test]
    fn serde_round_trip() {
        let e: Expr = serde_json::from_str("\"1 + x1*x1\"").unwrap();
        assert_eq!(e.eval(&[2.0], 0.0), 5.0);
        assert_eq!(serde_json::to_string(&e).unwrap(), "\"1 + x1*x1\"");
        assert!(serde_json::from_str::<Expr>("\"tan(x1)\"").is_err());
    }
}
