//! Operator builder expressions.
//!
//! ```text
//! expr    := call | name | string | scalar
//! call    := name '(' [expr (',' expr)*] ')'
//! scalar  := term (('+' | '-') term)*
//! term    := ['+' | '-'] (number ['/' number] ['i'] | 'i')
//! ```
//!
//! Decimal literals are read as exact rationals, so `0.1` is `1/10`.

use std::fmt;

use num_rational::Rational64;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Complex scalar with exact rational parts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Scalar {
    pub re: Rational64,
    pub im: Rational64,
}

impl Scalar {
    pub fn real(re: Rational64) -> Self {
        Self {
            re,
            im: Rational64::zero(),
        }
    }

    pub fn is_real(&self) -> bool {
        self.im.is_zero()
    }

    pub fn to_c64(self) -> num_complex::Complex64 {
        num_complex::Complex64::new(
            self.re.to_f64().unwrap_or(f64::NAN),
            self.im.to_f64().unwrap_or(f64::NAN),
        )
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let imag = |f: &mut fmt::Formatter<'_>, im: Rational64| {
            if im.is_one() {
                write!(f, "i")
            } else {
                write!(f, "{}i", rational_literal(im))
            }
        };
        match (self.re.is_zero(), self.im.is_zero()) {
            (_, true) => write!(f, "{}", rational_literal(self.re)),
            (true, false) if self.im == -Rational64::one() => write!(f, "-i"),
            (true, false) => imag(f, self.im),
            (false, false) => {
                write!(f, "{}", rational_literal(self.re))?;
                if self.im.is_negative() {
                    write!(f, "-")?;
                } else {
                    write!(f, "+")?;
                }
                imag(f, self.im.abs())
            }
        }
    }
}

/// Shortest exact decimal when the denominator is `2^a 5^b`, otherwise
/// `p/q`.
pub fn rational_literal(r: Rational64) -> String {
    let (mut n, d) = (i128::from(*r.numer()), i128::from(*r.denom()));
    if d == 1 {
        return n.to_string();
    }
    let mut rest = d;
    let (mut twos, mut fives) = (0u32, 0u32);
    while rest % 2 == 0 {
        rest /= 2;
        twos += 1;
    }
    while rest % 5 == 0 {
        rest /= 5;
        fives += 1;
    }
    let digits = twos.max(fives);
    if rest != 1 || digits > 18 {
        return format!("{}/{}", r.numer(), r.denom());
    }
    let negative = n < 0;
    n = n.abs() * 10i128.pow(digits) / d;
    let s = format!("{:0>width$}", n, width = digits as usize + 1);
    let (int, frac) = s.split_at(s.len() - digits as usize);
    let sign = if negative { "-" } else { "" };
    format!("{sign}{int}.{frac}")
}

#[derive(Clone, Debug)]
pub enum ExprKind {
    Call { name: String, args: Vec<Expr> },
    Name(String),
    Str(String),
    Scalar(Scalar),
}

/// Expression node with the byte offset where it starts.
#[derive(Clone, Debug)]
pub struct Expr {
    pub kind: ExprKind,
    pub offset: usize,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        match (&self.kind, &other.kind) {
            (ExprKind::Call { name: a, args: x }, ExprKind::Call { name: b, args: y }) => {
                a == b && x == y
            }
            (ExprKind::Name(a), ExprKind::Name(b)) => a == b,
            (ExprKind::Str(a), ExprKind::Str(b)) => a == b,
            (ExprKind::Scalar(a), ExprKind::Scalar(b)) => a == b,
            _ => false,
        }
    }
}

impl Expr {
    pub fn call(name: &str, args: Vec<Expr>) -> Self {
        Self::at(
            ExprKind::Call {
                name: name.to_string(),
                args,
            },
            0,
        )
    }

    pub fn name(name: &str) -> Self {
        Self::at(ExprKind::Name(name.to_string()), 0)
    }

    pub fn string(s: &str) -> Self {
        Self::at(ExprKind::Str(s.to_string()), 0)
    }

    pub fn scalar(s: Scalar) -> Self {
        Self::at(ExprKind::Scalar(s), 0)
    }

    fn at(kind: ExprKind, offset: usize) -> Self {
        Self { kind, offset }
    }

    /// Names referenced anywhere in the expression.
    pub fn references(&self) -> Vec<(&str, usize)> {
        let mut out = Vec::new();
        self.collect_references(&mut out);
        out
    }

    fn collect_references<'a>(&'a self, out: &mut Vec<(&'a str, usize)>) {
        match &self.kind {
            ExprKind::Name(n) => out.push((n, self.offset)),
            ExprKind::Call { args, .. } => {
                for a in args {
                    a.collect_references(out);
                }
            }
            _ => {}
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ExprKind::Call { name, args } => {
                write!(f, "{name}(")?;
                for (k, a) in args.iter().enumerate() {
                    if k > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
            ExprKind::Name(n) => write!(f, "{n}"),
            ExprKind::Str(s) => write!(f, "\"{s}\""),
            ExprKind::Scalar(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{message}")]
pub struct ParseError {
    /// Byte offset into the expression text.
    pub offset: usize,
    pub message: String,
}

fn error<T>(offset: usize, message: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError {
        offset,
        message: message.into(),
    })
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Ident(String),
    Number(Rational64),
    Str(String),
    LParen,
    RParen,
    Comma,
    Plus,
    Minus,
    Slash,
    End,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Ident(s) => write!(f, "`{s}`"),
            Token::Number(_) => write!(f, "number"),
            Token::Str(_) => write!(f, "string"),
            Token::LParen => write!(f, "`(`"),
            Token::RParen => write!(f, "`)`"),
            Token::Comma => write!(f, "`,`"),
            Token::Plus => write!(f, "`+`"),
            Token::Minus => write!(f, "`-`"),
            Token::Slash => write!(f, "`/`"),
            Token::End => write!(f, "end of expression"),
        }
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

fn lex(src: &str) -> Result<Vec<(Token, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut k = 0;
    while k < bytes.len() {
        let c = bytes[k] as char;
        let start = k;
        match c {
            ' ' | '\t' | '\n' | '\r' => {
                k += 1;
                continue;
            }
            '(' => out.push((Token::LParen, start)),
            ')' => out.push((Token::RParen, start)),
            ',' => out.push((Token::Comma, start)),
            '+' => out.push((Token::Plus, start)),
            '-' => out.push((Token::Minus, start)),
            '/' => out.push((Token::Slash, start)),
            '"' => {
                let end = src[k + 1..]
                    .find('"')
                    .map(|e| k + 1 + e)
                    .ok_or(ParseError {
                        offset: start,
                        message: "unterminated string".into(),
                    })?;
                out.push((Token::Str(src[k + 1..end].to_string()), start));
                k = end + 1;
                continue;
            }
            c if c.is_ascii_digit() || c == '.' => {
                let mut e = k;
                while e < bytes.len() && (bytes[e].is_ascii_digit() || bytes[e] == b'.') {
                    e += 1;
                }
                if e < bytes.len() && (bytes[e] == b'e' || bytes[e] == b'E') {
                    let mut x = e + 1;
                    if x < bytes.len() && (bytes[x] == b'+' || bytes[x] == b'-') {
                        x += 1;
                    }
                    if x < bytes.len() && bytes[x].is_ascii_digit() {
                        while x < bytes.len() && bytes[x].is_ascii_digit() {
                            x += 1;
                        }
                        e = x;
                    }
                }
                out.push((Token::Number(parse_decimal(&src[k..e], start)?), start));
                k = e;
                continue;
            }
            c if is_ident_start(c) => {
                let mut e = k;
                while e < bytes.len() && is_ident_char(bytes[e] as char) {
                    e += 1;
                }
                out.push((Token::Ident(src[k..e].to_string()), start));
                k = e;
                continue;
            }
            other => return error(start, format!("unexpected character {other:?}")),
        }
        k += 1;
    }
    out.push((Token::End, src.len()));
    Ok(out)
}

/// Exact value of a decimal literal such as `12`, `0.25` or `1.5e-3`.
pub fn parse_decimal(text: &str, offset: usize) -> Result<Rational64, ParseError> {
    let overflow = || ParseError {
        offset,
        message: format!("number {text} is out of range"),
    };
    let (mantissa, exponent) = match text.find(['e', 'E']) {
        Some(p) => (&text[..p], &text[p + 1..]),
        None => (text, ""),
    };
    let exponent: i32 = if exponent.is_empty() {
        0
    } else {
        exponent.parse().map_err(|_| overflow())?
    };
    let (int, frac) = match mantissa.split_once('.') {
        Some((a, b)) => (a, b),
        None => (mantissa, ""),
    };
    if int.is_empty() && frac.is_empty() || frac.contains('.') {
        return error(offset, format!("malformed number {text:?}"));
    }
    let digits = format!("{int}{frac}");
    let mut numer: i128 = digits.parse().map_err(|_| overflow())?;
    let shift = exponent - frac.len() as i32;
    let mut denom: i128 = 1;
    if shift >= 0 {
        numer = numer
            .checked_mul(10i128.checked_pow(shift as u32).ok_or_else(overflow)?)
            .ok_or_else(overflow)?;
    } else {
        denom = 10i128.checked_pow((-shift) as u32).ok_or_else(overflow)?;
    }
    let g = gcd(numer, denom);
    let (n, d) = (numer / g, denom / g);
    Ok(Rational64::new(
        i64::try_from(n).map_err(|_| overflow())?,
        i64::try_from(d).map_err(|_| overflow())?,
    ))
}

fn gcd(mut a: i128, mut b: i128) -> i128 {
    a = a.abs();
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos].0
    }

    fn peek_at(&self, k: usize) -> &Token {
        &self.tokens[(self.pos + k).min(self.tokens.len() - 1)].0
    }

    fn offset(&self) -> usize {
        self.tokens[self.pos].1
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].0.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Token) -> Result<(), ParseError> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            error(
                self.offset(),
                format!("expected {want}, found {}", self.peek()),
            )
        }
    }

    fn is_imaginary_unit(&self, k: usize) -> bool {
        matches!(self.peek_at(k), Token::Ident(s) if s == "i")
            && *self.peek_at(k + 1) != Token::LParen
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let offset = self.offset();
        match self.peek().clone() {
            Token::Str(s) => {
                self.bump();
                Ok(Expr::at(ExprKind::Str(s), offset))
            }
            Token::Ident(_) if self.is_imaginary_unit(0) => self.scalar(),
            Token::Ident(name) => {
                self.bump();
                if *self.peek() != Token::LParen {
                    return Ok(Expr::at(ExprKind::Name(name), offset));
                }
                self.bump();
                let mut args = Vec::new();
                if *self.peek() != Token::RParen {
                    loop {
                        args.push(self.expr()?);
                        if *self.peek() == Token::Comma {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                }
                self.expect(Token::RParen)?;
                Ok(Expr::at(ExprKind::Call { name, args }, offset))
            }
            Token::Number(_) | Token::Plus | Token::Minus => self.scalar(),
            other => error(offset, format!("expected an expression, found {other}")),
        }
    }

    fn scalar(&mut self) -> Result<Expr, ParseError> {
        let offset = self.offset();
        let mut value = self.term()?;
        while matches!(self.peek(), Token::Plus | Token::Minus) {
            let t = self.term()?;
            value.re += t.re;
            value.im += t.im;
        }
        Ok(Expr::at(ExprKind::Scalar(value), offset))
    }

    fn term(&mut self) -> Result<Scalar, ParseError> {
        let mut sign = Rational64::one();
        match self.peek() {
            Token::Plus => {
                self.bump();
            }
            Token::Minus => {
                self.bump();
                sign = -sign;
            }
            _ => {}
        }
        let offset = self.offset();
        let magnitude = match self.peek().clone() {
            Token::Number(n) => {
                self.bump();
                if *self.peek() == Token::Slash {
                    self.bump();
                    let at = self.offset();
                    match self.bump() {
                        Token::Number(d) if !d.is_zero() => n / d,
                        Token::Number(_) => return error(at, "division by zero"),
                        other => {
                            return error(at, format!("expected a denominator, found {other}"))
                        }
                    }
                } else {
                    n
                }
            }
            Token::Ident(_) if self.is_imaginary_unit(0) => {
                self.bump();
                return Ok(Scalar {
                    re: Rational64::zero(),
                    im: sign,
                });
            }
            other => return error(offset, format!("expected a number, found {other}")),
        };
        if self.is_imaginary_unit(0) {
            self.bump();
            Ok(Scalar {
                re: Rational64::zero(),
                im: sign * magnitude,
            })
        } else {
            Ok(Scalar::real(sign * magnitude))
        }
    }
}

/// Parse one expression; trailing input is an error.
pub fn parse(src: &str) -> Result<Expr, ParseError> {
    let mut p = Parser {
        tokens: lex(src)?,
        pos: 0,
    };
    let e = p.expr()?;
    if *p.peek() != Token::End {
        return error(
            p.offset(),
            format!("unexpected {} after expression", p.peek()),
        );
    }
    Ok(e)
}
