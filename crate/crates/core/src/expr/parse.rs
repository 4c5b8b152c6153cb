//! Recursive-descent parser for the expression grammar.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' exponent)?
//! exponent:= ['-'] integer | '(' ['-'] integer ')'
//! atom    := number | 'i' | var | param | call | '(' expr ')'
//! var     := 'z' digits | 'zb' digits
//! call    := ('exp' | 'log') '(' expr ')'
//!          | ('bump' | 'ballgap') '(' radius (',' center)* ')'
//! ```
//!
//! Subtrees made only of literals are folded to a single constant; nothing
//! else is rewritten, so `parse(print(e))` reproduces `e` exactly.

use super::{Ball, Expr, Kind, Param, C64};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("arity error at offset {offset}: `{name}` expects {expected} argument(s), found {found}")]
    Arity { offset: usize, name: String, expected: &'static str, found: usize },
    #[error("invalid argument at offset {offset}: {message}")]
    Argument { offset: usize, message: String },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. } | ParseError::Arity { offset, .. } | ParseError::Argument { offset, .. } => *offset,
        }
    }

    pub(crate) fn syntax(offset: usize, message: impl Into<String>) -> Self {
        ParseError::Syntax { offset, message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum TokenKind {
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

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub kind: TokenKind,
    pub offset: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let single = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => Some(TokenKind::Plus),
            b'-' => Some(TokenKind::Minus),
            b'*' => Some(TokenKind::Star),
            b'/' => Some(TokenKind::Slash),
            b'^' => Some(TokenKind::Caret),
            b'(' => Some(TokenKind::LParen),
            b')' => Some(TokenKind::RParen),
            b',' => Some(TokenKind::Comma),
            _ => None,
        };
        if let Some(kind) = single {
            out.push(Token { kind, offset: start });
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == b'.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let lit = &text[start..i];
            let v: f64 = lit.parse().map_err(|_| ParseError::syntax(start, format!("malformed number `{lit}`")))?;
            out.push(Token { kind: TokenKind::Num(v), offset: start });
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token { kind: TokenKind::Ident(text[start..i].to_string()), offset: start });
            continue;
        }
        let ch = text[start..].chars().next().unwrap_or('?');
        return Err(ParseError::syntax(start, format!("unexpected character `{ch}`")));
    }
    out.push(Token { kind: TokenKind::End, offset: text.len() });
    Ok(out)
}

/// Parses `z<k>` / `zb<k>` (1-based) into a zero-based index.
pub(crate) fn split_indexed(name: &str, prefix: &str) -> Option<usize> {
    let rest = name.strip_prefix(prefix)?;
    if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) || rest.starts_with('0') {
        return None;
    }
    let k: usize = rest.parse().ok()?;
    Some(k - 1)
}

pub(crate) struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    pub(crate) fn new(text: &str) -> Result<Self, ParseError> {
        Ok(Parser { tokens: lex(text)?, pos: 0 })
    }

    pub(crate) fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    pub(crate) fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    pub(crate) fn expect_end(&self) -> Result<(), ParseError> {
        let t = self.peek();
        match t.kind {
            TokenKind::End => Ok(()),
            TokenKind::RParen => Err(ParseError::syntax(t.offset, "unmatched `)`")),
            _ => Err(ParseError::syntax(t.offset, "unexpected trailing input")),
        }
    }

    fn expect(&mut self, kind: TokenKind, what: &str) -> Result<Token, ParseError> {
        let t = self.peek().clone();
        if t.kind == kind {
            Ok(self.advance())
        } else {
            Err(ParseError::syntax(t.offset, format!("expected {what}")))
        }
    }

    pub(crate) fn parse_sum(&mut self) -> Result<Expr, ParseError> {
        let mut terms = vec![self.parse_term()?];
        loop {
            match self.peek().kind {
                TokenKind::Plus => {
                    self.advance();
                    terms.push(self.parse_term()?);
                }
                TokenKind::Minus => {
                    self.advance();
                    let t = self.parse_term()?;
                    terms.push(negate(t));
                }
                _ => break,
            }
        }
        Ok(build(terms, true))
    }

    pub(crate) fn parse_term(&mut self) -> Result<Expr, ParseError> {
        let mut factors = vec![self.parse_unary()?];
        loop {
            match self.peek().kind {
                TokenKind::Star => {
                    self.advance();
                    factors.push(self.parse_unary()?);
                }
                TokenKind::Slash => {
                    self.advance();
                    let d = self.parse_unary()?;
                    factors.push(power(d, -1));
                }
                _ => break,
            }
        }
        Ok(build(factors, false))
    }

    pub(crate) fn parse_unary(&mut self) -> Result<Expr, ParseError> {
        if self.peek().kind == TokenKind::Minus {
            self.advance();
            let inner = self.parse_unary()?;
            return Ok(negate(inner));
        }
        self.parse_power()
    }

    fn parse_power(&mut self) -> Result<Expr, ParseError> {
        let base = self.parse_atom()?;
        if self.peek().kind != TokenKind::Caret {
            return Ok(base);
        }
        self.advance();
        let k = self.parse_exponent()?;
        if self.peek().kind == TokenKind::Caret {
            return Err(ParseError::syntax(self.peek().offset, "chained `^` is ambiguous; use parentheses"));
        }
        Ok(power(base, k))
    }

    fn parse_exponent(&mut self) -> Result<i32, ParseError> {
        let paren = self.peek().kind == TokenKind::LParen;
        if paren {
            self.advance();
        }
        let neg = self.peek().kind == TokenKind::Minus;
        if neg {
            self.advance();
        }
        let t = self.advance();
        let k = match t.kind {
            TokenKind::Num(v) if v.fract() == 0.0 && v.abs() <= i32::MAX as f64 => v as i32,
            _ => return Err(ParseError::syntax(t.offset, "exponent must be an integer literal")),
        };
        if paren {
            self.expect(TokenKind::RParen, "`)` after exponent")?;
        }
        Ok(if neg { -k } else { k })
    }

    fn parse_atom(&mut self) -> Result<Expr, ParseError> {
        let t = self.advance();
        match t.kind {
            TokenKind::Num(v) => Ok(Expr::real(v)),
            TokenKind::LParen => {
                let e = self.parse_sum()?;
                self.expect(TokenKind::RParen, "`)`")?;
                Ok(e)
            }
            TokenKind::Ident(name) => self.parse_ident(&name, t.offset),
            TokenKind::End => Err(ParseError::syntax(t.offset, "unexpected end of input")),
            _ => Err(ParseError::syntax(t.offset, "expected an operand")),
        }
    }

    fn parse_ident(&mut self, name: &str, offset: usize) -> Result<Expr, ParseError> {
        if let Some(k) = split_indexed(name, "zb") {
            return Ok(Expr::var_conj(k));
        }
        if let Some(k) = split_indexed(name, "z") {
            return Ok(Expr::var(k));
        }
        match name {
            "i" => Ok(Expr::constant(C64::new(0.0, 1.0))),
            "lambda" => Ok(Expr::param(Param::Lambda)),
            "tau" => Ok(Expr::param(Param::Tau)),
            "lambdab" => Ok(Expr::raw(Kind::Param { param: Param::Lambda, conj: true })),
            "taub" => Ok(Expr::raw(Kind::Param { param: Param::Tau, conj: true })),
            "exp" | "log" | "bump" | "ballgap" => {
                let args = self.parse_args(name, offset)?;
                match name {
                    "exp" | "log" => {
                        if args.len() != 1 {
                            return Err(ParseError::Arity { offset, name: name.into(), expected: "1", found: args.len() });
                        }
                        let a = args.into_iter().next().unwrap();
                        Ok(Expr::raw(if name == "exp" { Kind::Exp(a) } else { Kind::Log(a) }))
                    }
                    _ => {
                        if args.is_empty() {
                            return Err(ParseError::Arity { offset, name: name.into(), expected: "at least 1", found: 0 });
                        }
                        let mut consts = Vec::with_capacity(args.len());
                        for a in &args {
                            match a.as_const() {
                                Some(c) => consts.push(c),
                                None => {
                                    return Err(ParseError::Argument {
                                        offset,
                                        message: format!("`{name}` arguments must be numeric literals"),
                                    })
                                }
                            }
                        }
                        let r = consts[0];
                        if r.im != 0.0 || !(r.re > 0.0) || !r.re.is_finite() {
                            return Err(ParseError::Argument { offset, message: format!("`{name}` radius must be a positive real") });
                        }
                        let ball = Ball { radius: r.re, center: consts[1..].to_vec() };
                        Ok(if name == "bump" { Expr::bump(ball) } else { Expr::ball_gap(ball) })
                    }
                }
            }
            _ if name.starts_with("dz") || name == "vol" => {
                Err(ParseError::syntax(offset, format!("form basis `{name}` is not allowed in a scalar expression")))
            }
            _ => Err(ParseError::syntax(offset, format!("unknown identifier `{name}`"))),
        }
    }

    fn parse_args(&mut self, name: &str, offset: usize) -> Result<Vec<Expr>, ParseError> {
        if self.peek().kind != TokenKind::LParen {
            return Err(ParseError::Arity { offset, name: name.into(), expected: "a parenthesized list of", found: 0 });
        }
        self.advance();
        let mut args = Vec::new();
        if self.peek().kind == TokenKind::RParen {
            self.advance();
            return Ok(args);
        }
        loop {
            args.push(self.parse_sum()?);
            match self.peek().kind {
                TokenKind::Comma => {
                    self.advance();
                }
                TokenKind::RParen => {
                    self.advance();
                    return Ok(args);
                }
                _ => return Err(ParseError::syntax(self.peek().offset, "expected `,` or `)`")),
            }
        }
    }
}

fn all_const(v: &[Expr]) -> Option<Vec<C64>> {
    v.iter().map(|e| e.as_const()).collect()
}

fn build(items: Vec<Expr>, sum: bool) -> Expr {
    if items.len() == 1 {
        return items.into_iter().next().unwrap();
    }
    if let Some(cs) = all_const(&items) {
        let v = if sum { cs.iter().sum() } else { cs.iter().product() };
        return Expr::constant(v);
    }
    Expr::raw(if sum { Kind::Sum(items) } else { Kind::Product(items) })
}

fn negate(e: Expr) -> Expr {
    match e.as_const() {
        Some(c) => Expr::constant(-c),
        None => Expr::raw(Kind::Product(vec![Expr::real(-1.0), e])),
    }
}

fn power(base: Expr, k: i32) -> Expr {
    match base.as_const() {
        Some(c) if c != C64::new(0.0, 0.0) || k >= 0 => Expr::constant(c.powi(k)),
        _ => Expr::raw(Kind::Pow(base, k)),
    }
}

/// Parse one scalar expression.
pub fn parse(text: &str) -> Result<Expr, ParseError> {
    let mut p = Parser::new(text)?;
    let e = p.parse_sum()?;
    p.expect_end()?;
    Ok(e)
}
