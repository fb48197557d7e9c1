//! Tokenizer for the surface syntax.
//!
//! Line comments are skipped except for `//@ ...` pragma comments, which are
//! kept as tokens so the parser can attach them to the following loop.

use crate::ast::Int;
use crate::frontend::SourceError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Num(Int),
    /// Contents of a `//@ ...` comment, with the marker stripped.
    Pragma(String),
    KwParam,
    KwInt,
    KwBuf,
    KwRarr,
    KwWarr,
    KwFor,
    KwIf,
    KwElse,
    KwKernel,
    KwFn,
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Semi,
    Comma,
    Dot,
    Assign,
    PlusEq,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    Lt,
    Le,
    Gt,
    Ge,
    EqEq,
    Ne,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Num(n) => format!("number `{n}`"),
            Tok::Pragma(_) => "pragma comment".to_string(),
            Tok::KwParam => "`param`".to_string(),
            Tok::KwInt => "`int`".to_string(),
            Tok::KwBuf => "`buf`".to_string(),
            Tok::KwRarr => "`rarr`".to_string(),
            Tok::KwWarr => "`warr`".to_string(),
            Tok::KwFor => "`for`".to_string(),
            Tok::KwIf => "`if`".to_string(),
            Tok::KwElse => "`else`".to_string(),
            Tok::KwKernel => "`kernel`".to_string(),
            Tok::KwFn => "`fn`".to_string(),
            Tok::LParen => "`(`".to_string(),
            Tok::RParen => "`)`".to_string(),
            Tok::LBrace => "`{`".to_string(),
            Tok::RBrace => "`}`".to_string(),
            Tok::LBracket => "`[`".to_string(),
            Tok::RBracket => "`]`".to_string(),
            Tok::Semi => "`;`".to_string(),
            Tok::Comma => "`,`".to_string(),
            Tok::Dot => "`.`".to_string(),
            Tok::Assign => "`=`".to_string(),
            Tok::PlusEq => "`+=`".to_string(),
            Tok::Plus => "`+`".to_string(),
            Tok::Minus => "`-`".to_string(),
            Tok::Star => "`*`".to_string(),
            Tok::Slash => "`/`".to_string(),
            Tok::Percent => "`%`".to_string(),
            Tok::Lt => "`<`".to_string(),
            Tok::Le => "`<=`".to_string(),
            Tok::Gt => "`>`".to_string(),
            Tok::Ge => "`>=`".to_string(),
            Tok::EqEq => "`==`".to_string(),
            Tok::Ne => "`!=`".to_string(),
            Tok::Eof => "end of input".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

pub fn lex(src: &str) -> Result<Vec<Token>, SourceError> {
    let mut toks = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0usize;
    let mut line = 1usize;
    let mut col = 1usize;

    macro_rules! push {
        ($t:expr, $l:expr, $c:expr) => {
            toks.push(Token { tok: $t, line: $l, col: $c })
        };
    }

    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            ' ' | '\t' | '\r' => {
                i += 1;
                col += 1;
            }
            '/' if chars.get(i + 1) == Some(&'/') => {
                let mut j = i + 2;
                let pragma = chars.get(j) == Some(&'@');
                if pragma {
                    j += 1;
                }
                let start = j;
                while j < chars.len() && chars[j] != '\n' {
                    j += 1;
                }
                if pragma {
                    let text: String = chars[start..j].iter().collect();
                    push!(Tok::Pragma(text.trim().to_string()), tl, tc);
                }
                col += j - i;
                i = j;
            }
            '0'..='9' => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                let n: Int = text.parse().expect("digit run parses as integer");
                push!(Tok::Num(n), tl, tc);
                col += i - start;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                let tok = match text.as_str() {
                    "param" => Tok::KwParam,
                    "int" => Tok::KwInt,
                    "buf" => Tok::KwBuf,
                    "rarr" => Tok::KwRarr,
                    "warr" => Tok::KwWarr,
                    "for" => Tok::KwFor,
                    "if" => Tok::KwIf,
                    "else" => Tok::KwElse,
                    "kernel" => Tok::KwKernel,
                    "fn" => Tok::KwFn,
                    _ => Tok::Ident(text),
                };
                push!(tok, tl, tc);
                col += i - start;
            }
            _ => {
                let two: Option<Tok> = match (c, chars.get(i + 1)) {
                    ('+', Some('=')) => Some(Tok::PlusEq),
                    ('=', Some('=')) => Some(Tok::EqEq),
                    ('!', Some('=')) => Some(Tok::Ne),
                    ('<', Some('=')) => Some(Tok::Le),
                    ('>', Some('=')) => Some(Tok::Ge),
                    _ => None,
                };
                if let Some(t) = two {
                    push!(t, tl, tc);
                    i += 2;
                    col += 2;
                    continue;
                }
                let one = match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    ';' => Tok::Semi,
                    ',' => Tok::Comma,
                    '.' => Tok::Dot,
                    '=' => Tok::Assign,
                    '+' => Tok::Plus,
                    '-' => Tok::Minus,
                    '*' => Tok::Star,
                    '/' => Tok::Slash,
                    '%' => Tok::Percent,
                    '<' => Tok::Lt,
                    '>' => Tok::Gt,
                    other => {
                        return Err(SourceError::at(
                            tl,
                            tc,
                            format!("unexpected character `{other}`"),
                        ));
                    }
                };
                push!(one, tl, tc);
                i += 1;
                col += 1;
            }
        }
    }
    toks.push(Token { tok: Tok::Eof, line, col });
    Ok(toks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<Tok> {
        lex(src).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn lexes_statement_tokens() {
        assert_eq!(
            kinds("x = a[i + 1];"),
            vec![
                Tok::Ident("x".into()),
                Tok::Assign,
                Tok::Ident("a".into()),
                Tok::LBracket,
                Tok::Ident("i".into()),
                Tok::Plus,
                Tok::Num(1.into()),
                Tok::RBracket,
                Tok::Semi,
                Tok::Eof,
            ]
        );
    }

    #[test]
    fn distinguishes_compound_operators() {
        assert_eq!(
            kinds("+= == != <= >= < > ="),
            vec![
                Tok::PlusEq,
                Tok::EqEq,
                Tok::Ne,
                Tok::Le,
                Tok::Ge,
                Tok::Lt,
                Tok::Gt,
                Tok::Assign,
                Tok::Eof,
            ]
        );
    }

    #[test]
    fn keeps_pragma_comments_and_drops_plain_ones() {
        let toks = kinds("// plain\n//@ invariant x <= y\nfor");
        assert_eq!(
            toks,
            vec![Tok::Pragma("invariant x <= y".into()), Tok::KwFor, Tok::Eof]
        );
    }

    #[test]
    fn tracks_line_and_column() {
        let toks = lex("x\n  y").unwrap();
        assert_eq!((toks[0].line, toks[0].col), (1, 1));
        assert_eq!((toks[1].line, toks[1].col), (2, 3));
    }

    #[test]
    fn rejects_unknown_characters() {
        assert!(lex("x ? y").is_err());
    }
}
