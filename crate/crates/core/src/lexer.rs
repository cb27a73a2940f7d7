//! Line tokenizer shared by the package, genesis and transaction formats.

use std::fmt;

use primitive_types::U256;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}, column {col}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

impl ParseError {
    pub fn new(line: usize, col: usize, msg: impl Into<String>) -> Self {
        ParseError { line, col, msg: msg.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Num(String),
    Sym(&'static str),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) | Tok::Num(s) => f.write_str(s),
            Tok::Sym(s) => f.write_str(s),
        }
    }
}

const SYMBOLS: [&str; 16] = ["::", "->", "<", ">", ",", "(", ")", ":", "&", "[", "]", "{", "}", "@", ".", "="];

/// Splits one line into tokens with their 1-based columns. `#` starts a comment.
pub fn tokenize(line: &str, line_no: usize) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = line.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c == '#' {
            break;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(line[start..i].to_string()), start + 1));
            continue;
        }
        if c.is_ascii_digit() {
            while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Num(line[start..i].to_string()), start + 1));
            continue;
        }
        match SYMBOLS.iter().find(|s| line[i..].starts_with(*s)) {
            Some(s) => {
                out.push((Tok::Sym(s), start + 1));
                i += s.len();
            }
            None => return Err(ParseError::new(line_no, start + 1, format!("unexpected character `{c}`"))),
        }
    }
    Ok(out)
}

/// Parses a decimal or `0x` hexadecimal unsigned integer, `_` separators allowed.
pub fn parse_u256(s: &str) -> Option<U256> {
    let clean: String = s.chars().filter(|c| *c != '_').collect();
    if let Some(hex) = clean.strip_prefix("0x").or_else(|| clean.strip_prefix("0X")) {
        if hex.is_empty() || hex.len() > 64 {
            return None;
        }
        U256::from_str_radix(hex, 16).ok()
    } else {
        if clean.is_empty() || !clean.chars().all(|c| c.is_ascii_digit()) {
            return None;
        }
        U256::from_dec_str(&clean).ok()
    }
}

pub struct Cursor<'a> {
    toks: &'a [(Tok, usize)],
    pos: usize,
    pub line: usize,
}

impl<'a> Cursor<'a> {
    pub fn new(toks: &'a [(Tok, usize)], line: usize) -> Self {
        Cursor { toks, pos: 0, line }
    }

    pub fn peek(&self) -> Option<&'a Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    pub fn peek_at(&self, k: usize) -> Option<&'a Tok> {
        self.toks.get(self.pos + k).map(|(t, _)| t)
    }

    pub fn col(&self) -> usize {
        self.toks.get(self.pos).map(|(_, c)| *c).unwrap_or_else(|| self.toks.last().map(|(_, c)| c + 1).unwrap_or(1))
    }

    pub fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError::new(self.line, self.col(), msg)
    }

    pub fn next(&mut self) -> Option<&'a Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    pub fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    pub fn eat_sym(&mut self, s: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Sym(x)) if *x == s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub fn expect_sym(&mut self, s: &str) -> Result<(), ParseError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{s}`")))
        }
    }

    pub fn eat_keyword(&mut self, kw: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Ident(x)) if x == kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub fn ident(&mut self) -> Result<&'a str, ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.err("expected identifier")),
        }
    }

    pub fn number(&mut self) -> Result<U256, ParseError> {
        match self.peek() {
            Some(Tok::Num(s)) => {
                let v = parse_u256(s).ok_or_else(|| self.err(format!("invalid number `{s}`")))?;
                self.pos += 1;
                Ok(v)
            }
            _ => Err(self.err("expected number")),
        }
    }

    pub fn expect_end(&self) -> Result<(), ParseError> {
        match self.peek() {
            None => Ok(()),
            Some(t) => Err(self.err(format!("unexpected `{t}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizes_generic_types_and_comments() {
        let toks = tokenize("call pool::loan<coin::Coin<u8>> r0.1 # trailing", 1).unwrap();
        let text: Vec<String> = toks.iter().map(|(t, _)| t.to_string()).collect();
        assert_eq!(
            text,
            ["call", "pool", "::", "loan", "<", "coin", "::", "Coin", "<", "u8", ">", ">", "r0", ".", "1"]
        );
    }

    #[test]
    fn numbers_in_both_radices() {
        assert_eq!(parse_u256("1_000"), Some(U256::from(1000)));
        assert_eq!(parse_u256("0xFF00"), Some(U256::from(0xFF00)));
        assert_eq!(parse_u256("12a"), None);
    }

    #[test]
    fn rejects_unknown_characters() {
        let err = tokenize("ld_const u8 $", 7).unwrap_err();
        assert_eq!((err.line, err.col), (7, 13));
    }
}
