//! Tokenizer for model files. `//` starts a line comment.

use std::fmt;

use super::{FrontError, Pos};

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Real(f64),
    // keywords
    Type,
    Distinct,
    Random,
    Fixed,
    Obs,
    Query,
    If,
    Then,
    Else,
    Case,
    In,
    True,
    False,
    // punctuation
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Tilde,
    Assign,
    Arrow,
    Hash,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    Plus,
    Minus,
    Star,
    Slash,
    Bang,
    And,
    Or,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tok::Ident(s) => return write!(f, "identifier `{s}`"),
            Tok::Int(i) => return write!(f, "integer {i}"),
            Tok::Real(x) => return write!(f, "number {x}"),
            Tok::Type => "type",
            Tok::Distinct => "distinct",
            Tok::Random => "random",
            Tok::Fixed => "fixed",
            Tok::Obs => "obs",
            Tok::Query => "query",
            Tok::If => "if",
            Tok::Then => "then",
            Tok::Else => "else",
            Tok::Case => "case",
            Tok::In => "in",
            Tok::True => "true",
            Tok::False => "false",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::Comma => ",",
            Tok::Semi => ";",
            Tok::Tilde => "~",
            Tok::Assign => "=",
            Tok::Arrow => "->",
            Tok::Hash => "#",
            Tok::EqEq => "==",
            Tok::NotEq => "!=",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::Bang => "!",
            Tok::And => "&",
            Tok::Or => "|",
        };
        write!(f, "`{s}`")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

fn keyword(s: &str) -> Option<Tok> {
    Some(match s {
        "type" => Tok::Type,
        "distinct" => Tok::Distinct,
        "random" => Tok::Random,
        "fixed" => Tok::Fixed,
        "obs" => Tok::Obs,
        "query" => Tok::Query,
        "if" => Tok::If,
        "then" => Tok::Then,
        "else" => Tok::Else,
        "case" => Tok::Case,
        "in" => Tok::In,
        "true" => Tok::True,
        "false" => Tok::False,
        _ => return None,
    })
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, FrontError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            keyword(&s).unwrap_or(Tok::Ident(s))
        } else if c.is_ascii_digit() {
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let mut real = false;
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                real = true;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    real = true;
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s: String = chars[start..i].iter().collect();
            if real {
                Tok::Real(s.parse().map_err(|_| FrontError::lex(pos, format!("bad number `{s}`")))?)
            } else {
                Tok::Int(s.parse().map_err(|_| FrontError::lex(pos, format!("integer `{s}` out of range")))?)
            }
        } else {
            let next = chars.get(i + 1).copied();
            let (t, len) = match (c, next) {
                ('-', Some('>')) => (Tok::Arrow, 2),
                ('=', Some('=')) => (Tok::EqEq, 2),
                ('!', Some('=')) => (Tok::NotEq, 2),
                ('<', Some('=')) => (Tok::Le, 2),
                ('>', Some('=')) => (Tok::Ge, 2),
                ('&', Some('&')) => (Tok::And, 2),
                ('|', Some('|')) => (Tok::Or, 2),
                ('(', _) => (Tok::LParen, 1),
                (')', _) => (Tok::RParen, 1),
                ('{', _) => (Tok::LBrace, 1),
                ('}', _) => (Tok::RBrace, 1),
                ('[', _) => (Tok::LBracket, 1),
                (']', _) => (Tok::RBracket, 1),
                (',', _) => (Tok::Comma, 1),
                (';', _) => (Tok::Semi, 1),
                ('~', _) => (Tok::Tilde, 1),
                ('=', _) => (Tok::Assign, 1),
                ('#', _) => (Tok::Hash, 1),
                ('<', _) => (Tok::Lt, 1),
                ('>', _) => (Tok::Gt, 1),
                ('+', _) => (Tok::Plus, 1),
                ('-', _) => (Tok::Minus, 1),
                ('*', _) => (Tok::Star, 1),
                ('/', _) => (Tok::Slash, 1),
                ('!', _) => (Tok::Bang, 1),
                ('&', _) => (Tok::And, 1),
                ('|', _) => (Tok::Or, 1),
                _ => return Err(FrontError::lex(pos, format!("illegal character `{c}`"))),
            };
            i += len;
            t
        };
        col += (i - start) as u32;
        out.push(Token { tok, pos });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn random_declaration() {
        assert_eq!(
            toks("random Real x ~ Gaussian(0,1);"),
            vec![
                Tok::Random,
                Tok::Ident("Real".into()),
                Tok::Ident("x".into()),
                Tok::Tilde,
                Tok::Ident("Gaussian".into()),
                Tok::LParen,
                Tok::Int(0),
                Tok::Comma,
                Tok::Int(1),
                Tok::RParen,
                Tok::Semi
            ]
        );
    }

    #[test]
    fn number_variable() {
        assert_eq!(toks("#Ball"), vec![Tok::Hash, Tok::Ident("Ball".into())]);
    }

    #[test]
    fn empty_and_comments() {
        assert!(toks("").is_empty());
        assert!(toks("// nothing here\n   // or here").is_empty());
    }

    #[test]
    fn positions_and_numbers() {
        let t = tokenize("a\n  1.5e-3 -> 2").unwrap();
        assert_eq!(t[1].pos, Pos { line: 2, col: 3 });
        assert_eq!(t[1].tok, Tok::Real(1.5e-3));
        assert_eq!(t[2].tok, Tok::Arrow);
        assert_eq!(t[3].pos, Pos { line: 2, col: 13 });
    }

    #[test]
    fn illegal_character_reports_position() {
        let e = tokenize("type A;\n  $").unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
    }
}
