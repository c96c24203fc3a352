//! Tokens of the equation language.

use crate::diag::{FrontResult, FrontendError, Span};

#[derive(Clone, Debug, PartialEq)]
pub enum Tok {
    Ident(String),
    /// Numeric literal, kept as written.
    Number(String),
    Str(String),
    Set,
    Init,
    On,
    Do,
    Output,
    True,
    False,
    Prime,
    Semi,
    Comma,
    Assign,
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    Lt,
    Le,
    Gt,
    Ge,
    AndAnd,
    OrOr,
    Bang,
    Eof,
}

impl Tok {
    /// How the token is named in "expected ..." lists.
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Number(s) => format!("number `{s}`"),
            Tok::Str(_) => "string".into(),
            Tok::Eof => "end of input".into(),
            other => format!("`{}`", other.text()),
        }
    }

    pub fn text(&self) -> &str {
        match self {
            Tok::Ident(s) | Tok::Number(s) | Tok::Str(s) => s,
            Tok::Set => "set",
            Tok::Init => "init",
            Tok::On => "on",
            Tok::Do => "do",
            Tok::Output => "output",
            Tok::True => "true",
            Tok::False => "false",
            Tok::Prime => "'",
            Tok::Semi => ";",
            Tok::Comma => ",",
            Tok::Assign => "=",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::Caret => "^",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            Tok::AndAnd => "&&",
            Tok::OrOr => "||",
            Tok::Bang => "!",
            Tok::Eof => "",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

fn keyword(word: &str) -> Option<Tok> {
    Some(match word {
        "set" => Tok::Set,
        "init" => Tok::Init,
        "on" => Tok::On,
        "do" => Tok::Do,
        "output" => Tok::Output,
        "true" => Tok::True,
        "false" => Tok::False,
        _ => return None,
    })
}

/// Split `text` into tokens. Comments run from `//` or `#` to the end of
/// the line, or between `/*` and `*/`. The last token is always `Eof`.
pub fn lex(text: &str) -> FrontResult<Vec<Token>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |start: usize, end: usize, found: &str, expected: &[&str]| FrontendError::Syntax {
        span: Span::new(text, start, end),
        found: found.to_string(),
        expected: expected.iter().map(|s| s.to_string()).collect(),
    };
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == b'#' || text[i..].starts_with("//") {
            i = text[i..].find('\n').map_or(bytes.len(), |k| i + k);
            continue;
        }
        if text[i..].starts_with("/*") {
            match text[i + 2..].find("*/") {
                Some(k) => i += k + 4,
                None => return Err(err(start, bytes.len(), "unterminated comment", &["`*/`"])),
            }
            continue;
        }
        let tok = if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            let word = &text[start..i];
            keyword(word).unwrap_or_else(|| Tok::Ident(word.to_string()))
        } else if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'.' {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
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
                } else {
                    return Err(err(start, j, "malformed number", &["exponent digits"]));
                }
            }
            Tok::Number(text[start..i].to_string())
        } else if c == b'"' {
            let mut s = String::new();
            i += 1;
            let mut chars = text[i..].char_indices();
            loop {
                match chars.next() {
                    None => return Err(err(start, bytes.len(), "unterminated string", &["`\"`"])),
                    Some((k, '"')) => {
                        i += k + 1;
                        break;
                    }
                    Some((k, '\\')) => match chars.next() {
                        Some((_, 'n')) => s.push('\n'),
                        Some((_, 't')) => s.push('\t'),
                        Some((_, '"')) => s.push('"'),
                        Some((_, '\\')) => s.push('\\'),
                        Some((m, other)) => {
                            return Err(err(i + k, i + m + other.len_utf8(), "unknown escape", &["`\\n`", "`\\t`", "`\\\"`", "`\\\\`"]))
                        }
                        None => return Err(err(start, bytes.len(), "unterminated string", &["`\"`"])),
                    },
                    Some((_, ch)) => s.push(ch),
                }
            }
            Tok::Str(s)
        } else {
            let two = text.get(i..i + 2).unwrap_or("");
            let (tok, len) = match two {
                "<=" => (Tok::Le, 2),
                ">=" => (Tok::Ge, 2),
                "&&" => (Tok::AndAnd, 2),
                "||" => (Tok::OrOr, 2),
                _ => (
                    match c {
                        b'\'' => Tok::Prime,
                        b';' => Tok::Semi,
                        b',' => Tok::Comma,
                        b'=' => Tok::Assign,
                        b'(' => Tok::LParen,
                        b')' => Tok::RParen,
                        b'[' => Tok::LBracket,
                        b']' => Tok::RBracket,
                        b'{' => Tok::LBrace,
                        b'}' => Tok::RBrace,
                        b'+' => Tok::Plus,
                        b'-' => Tok::Minus,
                        b'*' => Tok::Star,
                        b'/' => Tok::Slash,
                        b'^' => Tok::Caret,
                        b'<' => Tok::Lt,
                        b'>' => Tok::Gt,
                        b'!' => Tok::Bang,
                        _ => {
                            let ch = text[i..].chars().next().unwrap();
                            return Err(err(start, start + ch.len_utf8(), &format!("character `{ch}`"), &["a token"]));
                        }
                    },
                    1,
                ),
            };
            i += len;
            tok
        };
        out.push(Token { tok, span: Span::new(text, start, i) });
    }
    out.push(Token { tok: Tok::Eof, span: Span::new(text, text.len(), text.len()) });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        lex(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn flow_statement() {
        assert_eq!(
            toks("theta' = dtheta;"),
            vec![Tok::Ident("theta".into()), Tok::Prime, Tok::Assign, Tok::Ident("dtheta".into()), Tok::Semi, Tok::Eof]
        );
    }

    #[test]
    fn numbers_keep_their_text() {
        assert_eq!(toks("1. 1.05 .5 2e-3"), vec![
            Tok::Number("1.".into()),
            Tok::Number("1.05".into()),
            Tok::Number(".5".into()),
            Tok::Number("2e-3".into()),
            Tok::Eof
        ]);
    }

    #[test]
    fn strings_and_escapes() {
        assert_eq!(toks(r#"print("Bouncing!\n")"#)[2], Tok::Str("Bouncing!\n".into()));
    }

    #[test]
    fn comments_are_skipped() {
        assert_eq!(toks("# a\n// b\n/* c */ on"), vec![Tok::On, Tok::Eof]);
    }

    #[test]
    fn bad_character_has_span() {
        let e = lex("x = 1 @ 2;").unwrap_err();
        let s = e.span().unwrap();
        assert_eq!((s.start, s.end), (6, 7));
    }
}
