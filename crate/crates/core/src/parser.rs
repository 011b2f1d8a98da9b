//! Text form of expressions.
//!
//! Grammar (loosest to tightest): `+ -`, `* /`, unary `-`, right-associative
//! `^`. Identifiers `x u p q` are jet coordinates; other identifiers are
//! parameters. `ln exp cbrt sqrt` are functions. Decimal literals are read
//! as exact rationals. Implicit multiplication is rejected.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::expr::{Expr, Node, VarId};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseDiagnostic {
    pub offset: usize,
    pub message: String,
    pub expected: Option<String>,
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at byte {}: {}", self.offset, self.message)?;
        if let Some(e) = &self.expected {
            write!(f, " (expected {e})")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(BigRational),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

struct Lexer<'a> {
    src: &'a str,
    toks: Vec<(Tok, usize)>,
}

fn diag(offset: usize, message: impl Into<String>, expected: Option<&str>) -> Error {
    Error::Parse(ParseDiagnostic {
        offset,
        message: message.into(),
        expected: expected.map(str::to_string),
    })
}

impl<'a> Lexer<'a> {
    fn run(src: &'a str) -> Result<Vec<(Tok, usize)>> {
        let mut lx = Lexer { src, toks: Vec::new() };
        let bytes = src.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i] as char;
            if c.is_ascii_whitespace() {
                i += 1;
            } else if c.is_ascii_digit() || (c == '.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let int_part = &src[start..i];
                let mut frac_part = "";
                if i < bytes.len() && bytes[i] == b'.' {
                    i += 1;
                    let fs = i;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                    frac_part = &src[fs..i];
                    if int_part.is_empty() && frac_part.is_empty() {
                        return Err(diag(start, "malformed number", Some("digit")));
                    }
                }
                let digits = format!("{int_part}{frac_part}");
                let n: BigInt = digits.parse().map_err(|_| diag(start, "malformed number", Some("digit")))?;
                let d = num_traits::pow(BigInt::from(10), frac_part.len());
                lx.toks.push((Tok::Num(BigRational::new(n, d)), start));
            } else if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                lx.toks.push((Tok::Ident(src[start..i].to_string()), start));
            } else {
                let t = match c {
                    '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    _ => {
                        let ch = lx.src[i..].chars().next().unwrap();
                        return Err(diag(i, format!("unexpected character `{ch}`"), Some("operator, operand or parenthesis")));
                    }
                };
                lx.toks.push((t, i));
                i += 1;
            }
        }
        lx.toks.push((Tok::End, src.len()));
        Ok(lx.toks)
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

const FUNCTIONS: &[&str] = &["ln", "exp", "cbrt", "sqrt"];

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

    fn expect_rparen(&mut self, open: usize) -> Result<()> {
        match self.peek() {
            Tok::RParen => {
                self.bump();
                Ok(())
            }
            Tok::End => Err(diag(self.offset(), format!("unclosed parenthesis opened at byte {open}"), Some("`)`"))),
            _ => Err(diag(self.offset(), "unexpected token", Some("`)` or operator"))),
        }
    }

    fn expr(&mut self, min_bp: u8) -> Result<Expr> {
        let mut lhs = self.prefix()?;
        loop {
            let (op, l_bp, r_bp) = match self.peek() {
                Tok::Op('+') => ('+', 1, 2),
                Tok::Op('-') => ('-', 1, 2),
                Tok::Op('*') => ('*', 3, 4),
                Tok::Op('/') => ('/', 3, 4),
                Tok::Op('^') => ('^', 7, 6),
                Tok::End | Tok::RParen => break,
                Tok::Num(_) | Tok::Ident(_) | Tok::LParen => {
                    return Err(diag(
                        self.offset(),
                        "implicit multiplication is not supported",
                        Some("an operator such as `*`"),
                    ))
                }
                Tok::Op(c) => return Err(diag(self.offset(), format!("unexpected operator `{c}`"), None)),
            };
            if l_bp < min_bp {
                break;
            }
            self.bump();
            let rhs = self.expr(r_bp)?;
            lhs = match op {
                '+' => lhs + rhs,
                '-' => lhs - rhs,
                '*' => lhs * rhs,
                '/' => lhs / rhs,
                _ => lhs.pow_expr(&rhs),
            };
        }
        Ok(lhs)
    }

    fn prefix(&mut self) -> Result<Expr> {
        let (tok, at) = self.bump();
        match tok {
            Tok::Num(q) => Ok(Expr::rational(q)),
            Tok::Op('-') => {
                let e = self.expr(5)?;
                Ok(-e)
            }
            Tok::Op('+') => self.expr(5),
            Tok::LParen => {
                let e = self.expr(0)?;
                self.expect_rparen(at)?;
                Ok(e)
            }
            Tok::Ident(name) => self.ident(name, at),
            Tok::End => Err(diag(at, if at == 0 { "empty input" } else { "unexpected end of input" }, Some("operand"))),
            Tok::RParen => Err(diag(at, "unexpected `)`", Some("operand"))),
            Tok::Op(c) => Err(diag(at, format!("unexpected operator `{c}`"), Some("operand"))),
        }
    }

    fn ident(&mut self, name: String, at: usize) -> Result<Expr> {
        if FUNCTIONS.contains(&name.as_str()) {
            if *self.peek() != Tok::LParen {
                return Err(diag(self.offset(), format!("function `{name}` needs an argument"), Some("`(`")));
            }
            let (_, open) = self.bump();
            let arg = self.expr(0)?;
            self.expect_rparen(open)?;
            return Ok(match name.as_str() {
                "ln" => arg.ln(),
                "exp" => arg.exp(),
                "cbrt" => arg.cbrt(),
                _ => arg.sqrt(),
            });
        }
        if name == "J" {
            return Err(diag(at, "`J` is reserved for the internal cube-root symbol", Some("variable or parameter")));
        }
        if let Some(v) = VarId::jet(&name) {
            return Ok(Expr::var(v));
        }
        VarId::param(&name)
            .map(Expr::var)
            .map_err(|_| diag(at, format!("invalid parameter name `{name}`"), Some("identifier")))
    }
}

/// Parses user text into an expression tree.
pub fn parse(text: &str) -> Result<Expr> {
    let toks = Lexer::run(text)?;
    let mut p = Parser { toks, pos: 0 };
    let e = p.expr(0)?;
    match p.peek() {
        Tok::End => Ok(e),
        Tok::RParen => Err(diag(p.offset(), "unmatched `)`", Some("end of input"))),
        _ => Err(diag(p.offset(), "unexpected token", Some("end of input"))),
    }
}

const P_SUM: u8 = 1;
const P_PROD: u8 = 2;
const P_NEG: u8 = 3;
const P_POW: u8 = 4;
const P_ATOM: u8 = 5;

/// Renders an expression so that `parse` reads it back to an equal tree
/// up to normalization.
pub fn to_text(e: &Expr) -> String {
    render(e).0
}

fn wrap(r: (String, u8), min: u8) -> String {
    if r.1 < min {
        format!("({})", r.0)
    } else {
        r.0
    }
}

fn rational_text(q: &BigRational) -> (String, u8) {
    if q.is_integer() {
        let s = q.to_integer().to_string();
        let p = if q.is_negative() { P_NEG } else { P_ATOM };
        (s, p)
    } else {
        let p = if q.is_negative() { P_NEG } else { P_PROD };
        (format!("{}/{}", q.numer(), q.denom()), p)
    }
}

/// If `e` is syntactically negative, returns its negation.
fn negated(e: &Expr) -> Option<Expr> {
    match e.node() {
        Node::Int(n) if n.is_negative() => Some(Expr::new(Node::Int(-n))),
        Node::Rational(q) if q.is_negative() => Some(Expr::rational(-q)),
        Node::Product(fs) if !fs.is_empty() => {
            let first = fs[0].as_rational().filter(|_| matches!(fs[0].node(), Node::Int(_) | Node::Rational(_)))?;
            if !first.is_negative() {
                return None;
            }
            let mut rest: Vec<Expr> = fs[1..].to_vec();
            if first != -BigRational::one() {
                rest.insert(0, Expr::rational(-first));
            }
            Some(Expr::product(rest))
        }
        Node::Quotient(a, b) => negated(a).map(|a| Expr::quotient(a, b.clone())),
        _ => None,
    }
}

fn render(e: &Expr) -> (String, u8) {
    match e.node() {
        Node::Int(n) => rational_text(&BigRational::from_integer(n.clone())),
        Node::Rational(q) => rational_text(q),
        Node::Var(v) => (v.name().to_string(), P_ATOM),
        Node::J => ("J".to_string(), P_ATOM),
        Node::Sum(ts) => {
            if ts.is_empty() {
                return ("0".into(), P_ATOM);
            }
            let mut s = String::new();
            for (i, t) in ts.iter().enumerate() {
                // Addition is associative, so a nested sum in a `+` slot
                // needs no parentheses.
                let flat = if matches!(t.node(), Node::Sum(_)) { P_SUM } else { P_PROD };
                if i == 0 {
                    s.push_str(&wrap(render(t), flat));
                } else if let Some(pos) = negated(t) {
                    s.push_str(" - ");
                    s.push_str(&wrap(render(&pos), P_PROD));
                } else {
                    s.push_str(" + ");
                    s.push_str(&wrap(render(t), flat));
                }
            }
            (s, P_SUM)
        }
        Node::Product(fs) => render_product(fs),
        Node::Quotient(a, b) => {
            let num = wrap(render(a), P_PROD);
            let den = wrap(render(b), P_NEG + 1);
            (format!("{num}/{den}"), P_PROD)
        }
        Node::Pow(b, r) => {
            let base = wrap(render(b), P_ATOM);
            let ex = if r.is_integer() && !r.is_negative() {
                r.to_integer().to_string()
            } else if r.is_integer() {
                format!("({})", r.to_integer())
            } else {
                format!("({}/{})", r.numer(), r.denom())
            };
            (format!("{base}^{ex}"), P_POW)
        }
        Node::PowExpr(b, x) => {
            let base = wrap(render(b), P_ATOM);
            let ex = wrap(render(x), P_ATOM);
            (format!("{base}^{ex}"), P_POW)
        }
        Node::Ln(a) => (format!("ln({})", render(a).0), P_ATOM),
        Node::Exp(a) => (format!("exp({})", render(a).0), P_ATOM),
    }
}

fn render_product(fs: &[Expr]) -> (String, u8) {
    if fs.is_empty() {
        return ("1".into(), P_ATOM);
    }
    let coeff = match fs[0].node() {
        Node::Int(n) => Some(BigRational::from_integer(n.clone())),
        Node::Rational(q) => Some(q.clone()),
        _ => None,
    };
    let (coeff, rest) = match coeff {
        Some(c) if fs.len() > 1 => (c, &fs[1..]),
        _ => (BigRational::one(), fs),
    };
    let plain = coeff.is_one();
    let mut negative = coeff.is_negative();
    let body: Vec<String> = rest
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let r = render(f);
            // Products and quotients re-associate without changing value.
            if r.1 == P_PROD && !matches!(f.node(), Node::Sum(_)) {
                r.0
            } else if i == 0 && plain && r.1 == P_NEG {
                negative = true;
                r.0.trim_start_matches('-').to_string()
            } else {
                wrap(r, P_POW)
            }
        })
        .collect();
    let mut s = body.join("*");
    let c = coeff.abs();
    if !c.numer().is_one() {
        s = format!("{}*{s}", c.numer());
    }
    if !c.denom().is_one() {
        s = format!("{s}/{}", c.denom());
    }
    if c.is_zero() {
        s = "0".into();
    }
    if negative {
        (format!("-{s}"), P_NEG)
    } else {
        (s, P_PROD)
    }
}
