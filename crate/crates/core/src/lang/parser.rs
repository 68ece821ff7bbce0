//! Lexer and parser for `.mvv` reconfiguration scripts.
//!
//! The grammar is a plain s-expression surface: lists in parentheses,
//! whitespace-separated atoms, double-quoted strings with `\"` and `\\`
//! escapes, and `;` comments running to the end of the line.

use std::fmt;

use thiserror::Error;

use super::ast::AstNode;

/// Ordered top-level forms of a script.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Script {
    pub forms: Vec<AstNode>,
}

impl Script {
    pub fn len(&self) -> usize {
        self.forms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forms.is_empty()
    }
}

impl fmt::Display for Script {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for form in &self.forms {
            writeln!(f, "{form}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    /// A `(` that is never closed.
    UnclosedList,
    /// A `)` without a matching `(`.
    UnexpectedClose,
    UnterminatedString,
    InvalidEscape(char),
    IntegerOutOfRange,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {}", describe(.kind))]
pub struct ParseError {
    pub kind: ParseErrorKind,
    /// 1-based.
    pub line: usize,
    /// 1-based, counted in characters.
    pub column: usize,
}

fn describe(kind: &ParseErrorKind) -> String {
    match kind {
        ParseErrorKind::UnclosedList => "unbalanced parentheses: unclosed '('".into(),
        ParseErrorKind::UnexpectedClose => "unbalanced parentheses: unexpected ')'".into(),
        ParseErrorKind::UnterminatedString => "unterminated string".into(),
        ParseErrorKind::InvalidEscape(c) => format!("invalid escape '\\{c}' in string"),
        ParseErrorKind::IntegerOutOfRange => "integer literal out of 64-bit range".into(),
    }
}

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    column: usize,
}

impl<'a> Cursor<'a> {
    fn new(source: &'a str) -> Self {
        Cursor {
            chars: source.chars().peekable(),
            line: 1,
            column: 1,
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn pos(&self) -> (usize, usize) {
        (self.line, self.column)
    }
}

fn err(kind: ParseErrorKind, (line, column): (usize, usize)) -> ParseError {
    ParseError { kind, line, column }
}

/// Parses a whole script. Empty input (or only comments) yields an empty
/// script.
pub fn parse(source: &str) -> Result<Script, ParseError> {
    let mut cur = Cursor::new(source);
    let mut top = Vec::new();
    // Open lists: position of their '(' and the children collected so far.
    let mut stack: Vec<((usize, usize), Vec<AstNode>)> = Vec::new();

    while let Some(c) = cur.peek() {
        let pos = cur.pos();
        let node = match c {
            c if c.is_whitespace() => {
                cur.bump();
                continue;
            }
            ';' => {
                while let Some(c) = cur.bump() {
                    if c == '\n' {
                        break;
                    }
                }
                continue;
            }
            '(' => {
                cur.bump();
                stack.push((pos, Vec::new()));
                continue;
            }
            ')' => {
                cur.bump();
                match stack.pop() {
                    Some((_, children)) => AstNode::List(children),
                    None => return Err(err(ParseErrorKind::UnexpectedClose, pos)),
                }
            }
            '"' => {
                cur.bump();
                read_string(&mut cur, pos)?
            }
            _ => {
                let mut token = String::new();
                while let Some(c) = cur.peek() {
                    if c.is_whitespace() || matches!(c, '(' | ')' | '"' | ';') {
                        break;
                    }
                    token.push(c);
                    cur.bump();
                }
                classify_atom(token, pos)?
            }
        };
        match stack.last_mut() {
            Some((_, children)) => children.push(node),
            None => top.push(node),
        }
    }

    if let Some((pos, _)) = stack.pop() {
        return Err(err(ParseErrorKind::UnclosedList, pos));
    }
    Ok(Script { forms: top })
}

/// Parses source that must contain exactly one form. Used by the REPL.
pub fn parse_one(source: &str) -> Result<Option<AstNode>, ParseError> {
    let mut script = parse(source)?;
    Ok(if script.forms.is_empty() {
        None
    } else {
        Some(script.forms.remove(0))
    })
}

fn read_string(cur: &mut Cursor<'_>, start: (usize, usize)) -> Result<AstNode, ParseError> {
    let mut value = String::new();
    loop {
        let pos = cur.pos();
        match cur.bump() {
            None => return Err(err(ParseErrorKind::UnterminatedString, start)),
            Some('"') => return Ok(AstNode::Str(value)),
            Some('\\') => match cur.bump() {
                Some(c @ ('"' | '\\')) => value.push(c),
                Some(other) => return Err(err(ParseErrorKind::InvalidEscape(other), pos)),
                None => return Err(err(ParseErrorKind::UnterminatedString, start)),
            },
            Some(c) => value.push(c),
        }
    }
}

fn classify_atom(token: String, pos: (usize, usize)) -> Result<AstNode, ParseError> {
    let unsigned = token.strip_prefix(['+', '-']).unwrap_or(&token);
    let all_digits = |s: &str| s.bytes().all(|b| b.is_ascii_digit());

    if !unsigned.is_empty() && all_digits(unsigned) {
        return token
            .parse::<i64>()
            .map(AstNode::Int)
            .map_err(|_| err(ParseErrorKind::IntegerOutOfRange, pos));
    }
    if let Some((whole, frac)) = unsigned.split_once('.') {
        if all_digits(whole) && all_digits(frac) && !(whole.is_empty() && frac.is_empty()) {
            if let Ok(f) = token.parse::<f64>() {
                return Ok(AstNode::Float(f));
            }
        }
    }
    Ok(AstNode::Symbol(token))
}
