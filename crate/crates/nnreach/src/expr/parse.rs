//! Recursive-descent parser for the expression grammar.
//!
//! Precedence, loosest to tightest: `+ -`, then `* /`, then unary `-`, then
//! `^`. Binary operators associate left; `^` takes a single non-negative
//! integer literal exponent. Function application requires parentheses and
//! there is no implicit multiplication.

use super::{Expr, Func};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("parse error at byte {offset}: expected {expected}, found `{found}`")]
pub struct ParseError {
    pub offset: usize,
    pub expected: String,
    pub found: String,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(n) => format!("{n}"),
            Tok::Ident(s) => s.clone(),
            Tok::Plus => "+".into(),
            Tok::Minus => "-".into(),
            Tok::Star => "*".into(),
            Tok::Slash => "/".into(),
            Tok::Caret => "^".into(),
            Tok::LParen => "(".into(),
            Tok::RParen => ")".into(),
            Tok::End => "end of input".into(),
        }
    }
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str) -> Result<Vec<(usize, Tok)>, ParseError> {
        let mut lx = Lexer { src, pos: 0 };
        let mut out = Vec::new();
        loop {
            lx.skip_ws();
            let start = lx.pos;
            let Some(c) = lx.peek() else {
                out.push((start, Tok::End));
                return Ok(out);
            };
            let tok = match c {
                '+' => {
                    lx.pos += 1;
                    Tok::Plus
                }
                '-' => {
                    lx.pos += 1;
                    Tok::Minus
                }
                '*' => {
                    lx.pos += 1;
                    Tok::Star
                }
                '/' => {
                    lx.pos += 1;
                    Tok::Slash
                }
                '^' => {
                    lx.pos += 1;
                    Tok::Caret
                }
                '(' => {
                    lx.pos += 1;
                    Tok::LParen
                }
                ')' => {
                    lx.pos += 1;
                    Tok::RParen
                }
                c if c.is_ascii_digit() || c == '.' => lx.number(start)?,
                c if c.is_ascii_alphabetic() || c == '_' => lx.ident(),
                other => {
                    return Err(ParseError {
                        offset: start,
                        expected: "a token".into(),
                        found: other.to_string(),
                    })
                }
            };
            out.push((start, tok));
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn number(&mut self, start: usize) -> Result<Tok, ParseError> {
        let bytes = self.src.as_bytes();
        let mut end = self.pos;
        while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
            end += 1;
        }
        // Optional exponent: e / E, optional sign, digits.
        if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
            let mut cursor = end + 1;
            if cursor < bytes.len() && (bytes[cursor] == b'+' || bytes[cursor] == b'-') {
                cursor += 1;
            }
            if cursor < bytes.len() && bytes[cursor].is_ascii_digit() {
                while cursor < bytes.len() && bytes[cursor].is_ascii_digit() {
                    cursor += 1;
                }
                end = cursor;
            }
        }
        let text = &self.src[start..end];
        let value: f64 = text.parse().map_err(|_| ParseError {
            offset: start,
            expected: "a numeric literal".into(),
            found: text.into(),
        })?;
        self.pos = end;
        Ok(Tok::Num(value))
    }

    fn ident(&mut self) -> Tok {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut end = start;
        while end < bytes.len()
            && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_')
        {
            end += 1;
        }
        self.pos = end;
        Tok::Ident(self.src[start..end].to_string())
    }
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    cursor: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.cursor].1
    }

    fn offset(&self) -> usize {
        self.toks[self.cursor].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.cursor].1.clone();
        if self.cursor + 1 < self.toks.len() {
            self.cursor += 1;
        }
        t
    }

    fn error(&self, expected: &str) -> ParseError {
        ParseError {
            offset: self.offset(),
            expected: expected.into(),
            found: self.peek().describe(),
        }
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.error(expected))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    lhs = lhs + self.term()?;
                }
                Tok::Minus => {
                    self.bump();
                    lhs = lhs - self.term()?;
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    lhs = lhs * self.factor()?;
                }
                Tok::Slash => {
                    self.bump();
                    lhs = lhs.div(self.factor()?);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            let inner = self.factor()?;
            // Fold a negated literal so printing round-trips structurally.
            return Ok(match inner {
                Expr::Const(c) => Expr::Const(-c),
                other => -other,
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let off = self.offset();
            match self.bump() {
                Tok::Num(n) if n >= 0.0 && n.fract() == 0.0 && n <= u32::MAX as f64 => {
                    Ok(base.pow(n as u32))
                }
                other => Err(ParseError {
                    offset: off,
                    expected: "a non-negative integer exponent".into(),
                    found: other.describe(),
                }),
            }
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Num(n) => {
                self.bump();
                Ok(Expr::Const(n))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                let off = self.offset();
                self.bump();
                if *self.peek() == Tok::LParen {
                    let func = Func::from_name(&name).ok_or(ParseError {
                        offset: off,
                        expected: "one of cos, sin, tan, exp, sigmoid, tanh".into(),
                        found: name.clone(),
                    })?;
                    self.bump();
                    let arg = self.expr()?;
                    self.expect(Tok::RParen, "`)`")?;
                    Ok(Expr::apply(func, arg))
                } else {
                    Ok(Expr::var(name))
                }
            }
            _ => Err(self.error("a number, variable, function call, or `(`")),
        }
    }
}

/// Parses a complete expression; trailing input is an error.
pub fn parse(src: &str) -> Result<Expr, ParseError> {
    let toks = Lexer::tokens(src)?;
    let mut p = Parser { toks, cursor: 0 };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.error("an operator or end of input"));
    }
    Ok(e)
}
