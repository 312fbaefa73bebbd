//! Tokenizer for the SQLite dialect subset understood by the diagnoser.

use super::ast::Span;
use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    /// Bare word: keyword or unquoted identifier. Original spelling is kept.
    Word(String),
    /// Quoted identifier with its quote character (`"`, `` ` `` or `[`).
    QuotedIdent(String, char),
    /// Single-quoted string literal, unescaped.
    String(String),
    Number(String),
    /// `X'..'` blob literal; holds the hex digits.
    Blob(String),
    /// `?`, `?NNN`, `:name`, `@name`, `$name`.
    Param(String),
    LParen,
    RParen,
    Comma,
    Dot,
    Semicolon,
    Star,
    Plus,
    Minus,
    Slash,
    Percent,
    Concat,
    Eq,
    EqEq,
    NotEq,
    LtGt,
    Lt,
    LtEq,
    Gt,
    GtEq,
    Amp,
    Pipe,
    ShiftL,
    ShiftR,
    Tilde,
    Arrow,
    LongArrow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Span,
}

impl Token {
    pub fn is_word(&self, kw: &str) -> bool {
        matches!(&self.kind, TokenKind::Word(w) if w.eq_ignore_ascii_case(kw))
    }
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' | 0x0c => {
                i += 1;
                continue;
            }
            b'-' if bytes.get(i + 1) == Some(&b'-') => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
                continue;
            }
            b'/' if bytes.get(i + 1) == Some(&b'*') => {
                i += 2;
                while i < bytes.len() && !(bytes[i] == b'*' && bytes.get(i + 1) == Some(&b'/')) {
                    i += 1;
                }
                // unterminated block comments run to end of input, as in SQLite
                i = (i + 2).min(bytes.len());
                continue;
            }
            _ => {}
        }

        let kind = match c {
            b'\'' => {
                let (value, end) = read_quoted(src, i, b'\'')?;
                i = end;
                TokenKind::String(value)
            }
            b'"' | b'`' => {
                let (value, end) = read_quoted(src, i, c)?;
                i = end;
                TokenKind::QuotedIdent(value, c as char)
            }
            b'[' => {
                let close = src[i + 1..]
                    .find(']')
                    .ok_or_else(|| ParseError::new("unterminated [identifier]", i))?;
                let value = src[i + 1..i + 1 + close].to_string();
                i = i + 1 + close + 1;
                TokenKind::QuotedIdent(value, '[')
            }
            b'x' | b'X' if bytes.get(i + 1) == Some(&b'\'') => {
                let (value, end) = read_quoted(src, i + 1, b'\'')?;
                if !value.bytes().all(|b| b.is_ascii_hexdigit()) || value.len() % 2 != 0 {
                    return Err(ParseError::new("malformed blob literal", i));
                }
                i = end;
                TokenKind::Blob(value)
            }
            b'0'..=b'9' => {
                i = read_number(bytes, i);
                TokenKind::Number(src[start..i].to_string())
            }
            b'.' if bytes.get(i + 1).is_some_and(u8::is_ascii_digit) => {
                i = read_number(bytes, i);
                TokenKind::Number(src[start..i].to_string())
            }
            b'?' => {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                TokenKind::Param(src[start..i].to_string())
            }
            b':' | b'@' | b'$' if bytes.get(i + 1).is_some_and(|b| is_ident_byte(*b)) => {
                i += 1;
                while i < bytes.len() && is_ident_byte(bytes[i]) {
                    i += 1;
                }
                TokenKind::Param(src[start..i].to_string())
            }
            _ if is_ident_start(c) => {
                while i < bytes.len() && is_ident_byte(bytes[i]) {
                    i += 1;
                }
                TokenKind::Word(src[start..i].to_string())
            }
            _ => {
                let two = bytes.get(i + 1).copied();
                let (kind, len) = match (c, two) {
                    (b'(', _) => (TokenKind::LParen, 1),
                    (b')', _) => (TokenKind::RParen, 1),
                    (b',', _) => (TokenKind::Comma, 1),
                    (b'.', _) => (TokenKind::Dot, 1),
                    (b';', _) => (TokenKind::Semicolon, 1),
                    (b'*', _) => (TokenKind::Star, 1),
                    (b'+', _) => (TokenKind::Plus, 1),
                    (b'-', Some(b'>')) => {
                        if bytes.get(i + 2) == Some(&b'>') {
                            (TokenKind::LongArrow, 3)
                        } else {
                            (TokenKind::Arrow, 2)
                        }
                    }
                    (b'-', _) => (TokenKind::Minus, 1),
                    (b'/', _) => (TokenKind::Slash, 1),
                    (b'%', _) => (TokenKind::Percent, 1),
                    (b'|', Some(b'|')) => (TokenKind::Concat, 2),
                    (b'|', _) => (TokenKind::Pipe, 1),
                    (b'=', Some(b'=')) => (TokenKind::EqEq, 2),
                    (b'=', _) => (TokenKind::Eq, 1),
                    (b'!', Some(b'=')) => (TokenKind::NotEq, 2),
                    (b'<', Some(b'>')) => (TokenKind::LtGt, 2),
                    (b'<', Some(b'=')) => (TokenKind::LtEq, 2),
                    (b'<', Some(b'<')) => (TokenKind::ShiftL, 2),
                    (b'<', _) => (TokenKind::Lt, 1),
                    (b'>', Some(b'=')) => (TokenKind::GtEq, 2),
                    (b'>', Some(b'>')) => (TokenKind::ShiftR, 2),
                    (b'>', _) => (TokenKind::Gt, 1),
                    (b'&', _) => (TokenKind::Amp, 1),
                    (b'~', _) => (TokenKind::Tilde, 1),
                    _ => {
                        let ch = src[i..].chars().next().unwrap_or('?');
                        return Err(ParseError::new(format!("unexpected character {ch:?}"), i));
                    }
                };
                i += len;
                kind
            }
        };
        out.push(Token {
            kind,
            span: Span::new(start, i),
        });
    }
    Ok(out)
}

fn is_ident_start(b: u8) -> bool {
    b.is_ascii_alphabetic() || b == b'_' || b >= 0x80
}

fn is_ident_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b == b'$' || b >= 0x80
}

/// Reads a quoted run starting at `start` (which holds the quote byte). A doubled
/// quote is an escaped quote. Returns the unescaped value and the end offset.
fn read_quoted(src: &str, start: usize, quote: u8) -> Result<(String, usize), ParseError> {
    let bytes = src.as_bytes();
    let mut i = start + 1;
    let mut value = String::new();
    let mut seg_start = i;
    loop {
        match bytes.get(i) {
            None => return Err(ParseError::new("unterminated quoted token", start)),
            Some(&b) if b == quote => {
                value.push_str(&src[seg_start..i]);
                if bytes.get(i + 1) == Some(&quote) {
                    value.push(quote as char);
                    i += 2;
                    seg_start = i;
                } else {
                    return Ok((value, i + 1));
                }
            }
            Some(_) => i += 1,
        }
    }
}

fn read_number(bytes: &[u8], mut i: usize) -> usize {
    if bytes[i] == b'0' && matches!(bytes.get(i + 1), Some(b'x' | b'X')) {
        i += 2;
        while i < bytes.len() && bytes[i].is_ascii_hexdigit() {
            i += 1;
        }
        return i;
    }
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    if i < bytes.len() && bytes[i] == b'.' {
        i += 1;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
    }
    if i < bytes.len() && matches!(bytes[i], b'e' | b'E') {
        let mut j = i + 1;
        if j < bytes.len() && matches!(bytes[j], b'+' | b'-') {
            j += 1;
        }
        if j < bytes.len() && bytes[j].is_ascii_digit() {
            i = j;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
        }
    }
    i
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<TokenKind> {
        tokenize(src).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn backtick_identifier_with_spaces() {
        let k = kinds("f.`Percent (%) Eligible Free (K-12)` > 0.1");
        assert_eq!(k[0], TokenKind::Word("f".into()));
        assert_eq!(k[1], TokenKind::Dot);
        assert_eq!(
            k[2],
            TokenKind::QuotedIdent("Percent (%) Eligible Free (K-12)".into(), '`')
        );
        assert_eq!(k[3], TokenKind::Gt);
        assert_eq!(k[4], TokenKind::Number("0.1".into()));
    }

    #[test]
    fn string_escapes_and_comments() {
        let k = kinds("SELECT 'it''s' -- trailing\n/* block */ , x'0aFF'");
        assert_eq!(
            k,
            vec![
                TokenKind::Word("SELECT".into()),
                TokenKind::String("it's".into()),
                TokenKind::Comma,
                TokenKind::Blob("0aFF".into()),
            ]
        );
    }

    #[test]
    fn unterminated_string_reports_position() {
        let err = tokenize("SELECT 'abc").unwrap_err();
        assert_eq!(err.position, 7);
    }

    #[test]
    fn numbers() {
        assert_eq!(
            kinds("1 2.5 .5 1e10 3E-2 0x1F"),
            ["1", "2.5", ".5", "1e10", "3E-2", "0x1F"]
                .iter()
                .map(|s| TokenKind::Number(s.to_string()))
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn spans_cover_source() {
        let toks = tokenize("SELECT  a").unwrap();
        assert_eq!(toks[1].span, Span::new(8, 9));
        assert_eq!((toks[1].span.start, toks[1].span.end), (8, 9));
    }
}
