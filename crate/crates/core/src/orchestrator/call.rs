//! Spatial-operator call expressions.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! call := ident '(' arg (',' arg)* ')'
//! arg  := 'objs' | call | number | quoted-string
//! ```
//!
//! Parsing also checks operator names, arity and argument types against the
//! operator registry, so every successfully parsed call is well typed.

use std::fmt;

use thiserror::Error;

use crate::spatial::{Operator, Param, ValueKind};

#[derive(Debug, Clone, PartialEq)]
pub enum Arg {
    Objs,
    Call(CallExpr),
    Int(i64),
    Float(f64),
    Str(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CallExpr {
    pub name: String,
    pub args: Vec<Arg>,
}

impl CallExpr {
    pub fn new(name: impl Into<String>, args: Vec<Arg>) -> Self {
        Self {
            name: name.into(),
            args,
        }
    }

    pub fn operator(&self) -> Option<Operator> {
        Operator::from_name(&self.name)
    }

    pub fn depth(&self) -> usize {
        1 + self
            .args
            .iter()
            .map(|a| match a {
                Arg::Call(c) => c.depth(),
                _ => 0,
            })
            .max()
            .unwrap_or(0)
    }
}

impl fmt::Display for Arg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arg::Objs => f.write_str("objs"),
            Arg::Call(c) => write!(f, "{c}"),
            Arg::Int(v) => write!(f, "{v}"),
            // Debug keeps a '.' or exponent so the value reads back as a float
            Arg::Float(v) => write!(f, "{v:?}"),
            Arg::Str(s) => {
                f.write_str("\"")?;
                for ch in s.chars() {
                    match ch {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")
            }
        }
    }
}

impl fmt::Display for CallExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.name)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax,
    UnknownOperator,
    Arity,
    Type,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{message} (at byte {offset})")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub offset: usize,
    pub message: String,
}

struct Parser<'s> {
    src: &'s str,
    pos: usize,
}

fn err(kind: ParseErrorKind, offset: usize, message: impl Into<String>) -> ParseError {
    ParseError {
        kind,
        offset,
        message: message.into(),
    }
}

impl<'s> Parser<'s> {
    fn peek(&self) -> Option<u8> {
        self.src.as_bytes().get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b) if b.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn expect(&mut self, ch: u8) -> Result<(), ParseError> {
        self.skip_ws();
        match self.peek() {
            Some(b) if b == ch => {
                self.pos += 1;
                Ok(())
            }
            Some(b) => Err(err(
                ParseErrorKind::Syntax,
                self.pos,
                format!("expected '{}', found '{}'", ch as char, b as char),
            )),
            None => Err(err(
                ParseErrorKind::Syntax,
                self.pos,
                format!("expected '{}', found end of input", ch as char),
            )),
        }
    }

    fn ident(&mut self) -> Option<&'s str> {
        let start = self.pos;
        match self.peek() {
            Some(b) if b.is_ascii_alphabetic() || b == b'_' => self.pos += 1,
            _ => return None,
        }
        while matches!(self.peek(), Some(b) if b.is_ascii_alphanumeric() || b == b'_') {
            self.pos += 1;
        }
        Some(&self.src[start..self.pos])
    }

    /// Parses a call starting at the current position and returns it with
    /// the kind of value it produces.
    fn call(&mut self) -> Result<(CallExpr, ValueKind), ParseError> {
        self.skip_ws();
        let start = self.pos;
        let name = self
            .ident()
            .ok_or_else(|| err(ParseErrorKind::Syntax, start, "expected an operator name"))?;
        self.expect(b'(')?;
        let op = Operator::from_name(name)
            .ok_or_else(|| err(ParseErrorKind::UnknownOperator, start, format!("unknown operator `{name}`")))?;
        let mut args = Vec::new();
        let mut arg_offsets = Vec::new();
        loop {
            self.skip_ws();
            arg_offsets.push(self.pos);
            args.push(self.arg()?);
            self.skip_ws();
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b')') => {
                    self.pos += 1;
                    break;
                }
                Some(b) => {
                    return Err(err(
                        ParseErrorKind::Syntax,
                        self.pos,
                        format!("expected ',' or ')', found '{}'", b as char),
                    ))
                }
                None => return Err(err(ParseErrorKind::Syntax, self.pos, "unclosed '('")),
            }
        }
        let spec = op.spec();
        if args.len() != spec.params.len() {
            let names: Vec<&str> = spec.params.iter().map(|(n, _)| *n).collect();
            return Err(err(
                ParseErrorKind::Arity,
                start,
                format!(
                    "{name} expects {} args ({}), got {}",
                    spec.params.len(),
                    names.join(", "),
                    args.len()
                ),
            ));
        }
        let args = args
            .into_iter()
            .zip(arg_offsets)
            .zip(spec.params)
            .map(|(((arg, kind), offset), (pname, param))| {
                if accepts(*param, &arg, kind) {
                    Ok(arg)
                } else {
                    Err(err(
                        ParseErrorKind::Type,
                        offset,
                        format!("{name}: argument `{pname}` expects a {param}, got {}", describe(&arg, kind)),
                    ))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok((CallExpr::new(name, args), spec.returns))
    }

    fn arg(&mut self) -> Result<(Arg, Option<ValueKind>), ParseError> {
        let start = self.pos;
        match self.peek() {
            Some(b) if b.is_ascii_alphabetic() || b == b'_' => {
                let name = self.ident().expect("checked first byte");
                self.skip_ws();
                if self.peek() == Some(b'(') {
                    self.pos = start;
                    let (call, kind) = self.call()?;
                    Ok((Arg::Call(call), Some(kind)))
                } else if name == "objs" {
                    Ok((Arg::Objs, Some(ValueKind::Objects)))
                } else {
                    Err(err(
                        ParseErrorKind::Syntax,
                        start,
                        format!("unexpected identifier `{name}`; only `objs` or a call may appear here"),
                    ))
                }
            }
            Some(b'-' | b'+' | b'0'..=b'9' | b'.') => self.number().map(|a| (a, None)),
            Some(q @ (b'"' | b'\'')) => self.string(q).map(|a| (a, None)),
            Some(b) => Err(err(ParseErrorKind::Syntax, start, format!("unexpected '{}'", b as char))),
            None => Err(err(ParseErrorKind::Syntax, start, "expected an argument, found end of input")),
        }
    }

    fn number(&mut self) -> Result<Arg, ParseError> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut end = self.pos;
        if matches!(bytes.get(end), Some(b'-' | b'+')) {
            end += 1;
        }
        let mut is_float = false;
        while let Some(&b) = bytes.get(end) {
            match b {
                b'0'..=b'9' => end += 1,
                b'.' => {
                    is_float = true;
                    end += 1;
                }
                b'e' | b'E' => {
                    is_float = true;
                    end += 1;
                    if matches!(bytes.get(end), Some(b'-' | b'+')) {
                        end += 1;
                    }
                }
                _ => break,
            }
        }
        let text = &self.src[start..end];
        self.pos = end;
        let bad = || err(ParseErrorKind::Syntax, start, format!("invalid number `{text}`"));
        if is_float {
            let v: f64 = text.parse().map_err(|_| bad())?;
            if !v.is_finite() {
                return Err(bad());
            }
            Ok(Arg::Float(v))
        } else {
            text.parse::<i64>().map(Arg::Int).map_err(|_| bad())
        }
    }

    fn string(&mut self, quote: u8) -> Result<Arg, ParseError> {
        let start = self.pos;
        self.pos += 1;
        let mut out = String::new();
        let mut chars = self.src[self.pos..].char_indices();
        while let Some((i, ch)) = chars.next() {
            match ch {
                '\\' => match chars.next() {
                    Some((_, esc)) => out.push(esc),
                    None => break,
                },
                c if c as u32 == quote as u32 => {
                    self.pos += i + 1;
                    return Ok(Arg::Str(out));
                }
                c => out.push(c),
            }
        }
        Err(err(ParseErrorKind::Syntax, start, "unterminated string"))
    }
}

fn accepts(param: Param, arg: &Arg, kind: Option<ValueKind>) -> bool {
    match param {
        Param::Objects => matches!(arg, Arg::Objs) || (matches!(arg, Arg::Call(_)) && kind == Some(ValueKind::Objects)),
        Param::Id | Param::Count => matches!(arg, Arg::Int(_)),
        Param::Meters => matches!(arg, Arg::Int(_) | Arg::Float(_)),
    }
}

fn describe(arg: &Arg, kind: Option<ValueKind>) -> String {
    match arg {
        Arg::Objs => "objs".into(),
        Arg::Call(c) => format!("a call to {} returning a {}", c.name, kind.map_or("value".into(), |k| k.to_string())),
        Arg::Int(v) => format!("the integer {v}"),
        Arg::Float(v) => format!("the number {v:?}"),
        Arg::Str(s) => format!("the string {s:?}"),
    }
}

/// Parses and type-checks one call expression.
pub fn parse_call(text: &str) -> Result<CallExpr, ParseError> {
    let mut p = Parser { src: text, pos: 0 };
    let (call, _) = p.call()?;
    p.skip_ws();
    if p.pos != text.len() {
        return Err(err(ParseErrorKind::Syntax, p.pos, "unexpected text after the call"));
    }
    Ok(call)
}
