use crate::error::QueryError;

use super::CmpOp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Keyword {
    Select,
    From,
    Join,
    On,
    Where,
    And,
    Limit,
    Count,
}

impl Keyword {
    pub fn lookup(word: &str) -> Option<Keyword> {
        const TABLE: [(&str, Keyword); 8] = [
            ("SELECT", Keyword::Select),
            ("FROM", Keyword::From),
            ("JOIN", Keyword::Join),
            ("ON", Keyword::On),
            ("WHERE", Keyword::Where),
            ("AND", Keyword::And),
            ("LIMIT", Keyword::Limit),
            ("COUNT", Keyword::Count),
        ];
        TABLE
            .iter()
            .find(|(text, _)| text.eq_ignore_ascii_case(word))
            .map(|(_, kw)| *kw)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Keyword::Select => "SELECT",
            Keyword::From => "FROM",
            Keyword::Join => "JOIN",
            Keyword::On => "ON",
            Keyword::Where => "WHERE",
            Keyword::And => "AND",
            Keyword::Limit => "LIMIT",
            Keyword::Count => "COUNT",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    Keyword(Keyword),
    /// Bare or backquoted identifier; backquotes are stripped.
    Ident(String),
    Str(String),
    Number(u64),
    Star,
    Comma,
    LParen,
    RParen,
    Dot,
    Semicolon,
    Op(CmpOp),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    /// Byte offset of the token's first character.
    pub position: usize,
}

fn is_ident_start(c: u8) -> bool {
    c.is_ascii_alphabetic() || c == b'_'
}

fn is_ident_char(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_'
}

/// Splits `text` into tokens. Keywords match case-insensitively;
/// identifiers keep their case.
pub fn tokenize(text: &str) -> Result<Vec<Token>, QueryError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let kind = match c {
            b' ' | b'\t' | b'\r' | b'\n' => {
                i += 1;
                continue;
            }
            b'*' => {
                i += 1;
                TokenKind::Star
            }
            b',' => {
                i += 1;
                TokenKind::Comma
            }
            b'(' => {
                i += 1;
                TokenKind::LParen
            }
            b')' => {
                i += 1;
                TokenKind::RParen
            }
            b'.' => {
                i += 1;
                TokenKind::Dot
            }
            b';' => {
                i += 1;
                TokenKind::Semicolon
            }
            b'=' => {
                i += 1;
                TokenKind::Op(CmpOp::Eq)
            }
            b'!' if bytes.get(i + 1) == Some(&b'=') => {
                i += 2;
                TokenKind::Op(CmpOp::Ne)
            }
            b'<' => match bytes.get(i + 1) {
                Some(b'=') => {
                    i += 2;
                    TokenKind::Op(CmpOp::Le)
                }
                Some(b'>') => {
                    i += 2;
                    TokenKind::Op(CmpOp::Ne)
                }
                _ => {
                    i += 1;
                    TokenKind::Op(CmpOp::Lt)
                }
            },
            b'>' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    i += 2;
                    TokenKind::Op(CmpOp::Ge)
                } else {
                    i += 1;
                    TokenKind::Op(CmpOp::Gt)
                }
            }
            b'\'' => {
                let mut value = String::new();
                i += 1;
                let mut seg = i;
                loop {
                    match bytes.get(i) {
                        None => {
                            return Err(QueryError::syntax("unterminated string literal", start))
                        }
                        Some(b'\'') if bytes.get(i + 1) == Some(&b'\'') => {
                            value.push_str(&text[seg..=i]);
                            i += 2;
                            seg = i;
                        }
                        Some(b'\'') => {
                            value.push_str(&text[seg..i]);
                            i += 1;
                            break;
                        }
                        Some(_) => i += 1,
                    }
                }
                TokenKind::Str(value)
            }
            b'`' => {
                i += 1;
                let begin = i;
                while i < bytes.len() && bytes[i] != b'`' {
                    i += 1;
                }
                if i == bytes.len() {
                    return Err(QueryError::syntax("unterminated quoted identifier", start));
                }
                if i == begin {
                    return Err(QueryError::syntax("empty quoted identifier", start));
                }
                let name = text[begin..i].to_string();
                i += 1;
                TokenKind::Ident(name)
            }
            c if c.is_ascii_digit() => {
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let n = text[start..i]
                    .parse::<u64>()
                    .map_err(|_| QueryError::syntax("number out of range", start))?;
                TokenKind::Number(n)
            }
            c if is_ident_start(c) => {
                while i < bytes.len() && is_ident_char(bytes[i]) {
                    i += 1;
                }
                let word = &text[start..i];
                match Keyword::lookup(word) {
                    Some(kw) => TokenKind::Keyword(kw),
                    None => TokenKind::Ident(word.to_string()),
                }
            }
            _ => {
                let ch = text[start..].chars().next().unwrap_or('?');
                return Err(QueryError::syntax(
                    format!("illegal character {ch:?}"),
                    start,
                ));
            }
        };
        tokens.push(Token {
            kind,
            position: start,
        });
    }
    Ok(tokens)
}
