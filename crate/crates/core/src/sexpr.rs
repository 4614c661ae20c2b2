//! S-expression reader and printer.
//!
//! Symbols are case-normalized to upper case on read. `'x` is reader sugar
//! for `(QUOTE x)` and prints back the same way.

use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

/// An upper-cased identifier.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Symbol(Arc<str>);

impl Symbol {
    pub fn new(name: &str) -> Self {
        Symbol(Arc::from(name.to_uppercase().as_str()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_keyword(&self) -> bool {
        self.0.starts_with(':') && self.0.len() > 1
    }

    /// `T`, `NIL` and keywords evaluate to themselves.
    pub fn is_self_evaluating(&self) -> bool {
        self.is_keyword() || &*self.0 == "T" || &*self.0 == "NIL"
    }
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Symbol {
    fn from(s: &str) -> Self {
        Symbol::new(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SExpr {
    Sym(Symbol),
    Int(i64),
    Str(String),
    List(Vec<SExpr>),
}

impl SExpr {
    pub fn sym(name: &str) -> Self {
        SExpr::Sym(Symbol::new(name))
    }

    pub fn nil() -> Self {
        SExpr::sym("NIL")
    }

    pub fn t() -> Self {
        SExpr::sym("T")
    }

    pub fn quote(value: SExpr) -> Self {
        SExpr::List(alloc::vec![SExpr::sym("QUOTE"), value])
    }

    pub fn is_nil(&self) -> bool {
        match self {
            SExpr::Sym(s) => s.as_str() == "NIL",
            SExpr::List(items) => items.is_empty(),
            _ => false,
        }
    }

    pub fn as_symbol(&self) -> Option<&Symbol> {
        match self {
            SExpr::Sym(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_symbol(&self, name: &str) -> bool {
        matches!(self, SExpr::Sym(s) if s.as_str() == name)
    }

    pub fn as_list(&self) -> Option<&[SExpr]> {
        match self {
            SExpr::List(items) => Some(items),
            SExpr::Sym(s) if s.as_str() == "NIL" => Some(&[]),
            _ => None,
        }
    }

    /// The quoted value if this is `(QUOTE x)`.
    pub fn as_quoted(&self) -> Option<&SExpr> {
        match self {
            SExpr::List(items) if items.len() == 2 && items[0].is_symbol("QUOTE") => Some(&items[1]),
            _ => None,
        }
    }

    /// Strips one level of `(QUOTE x)` if present.
    pub fn unquote(&self) -> &SExpr {
        self.as_quoted().unwrap_or(self)
    }
}

impl fmt::Display for SExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SExpr::Sym(s) => write!(f, "{s}"),
            SExpr::Int(n) => write!(f, "{n}"),
            SExpr::Str(s) => {
                f.write_str("\"")?;
                for c in s.chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")
            }
            SExpr::List(items) => {
                if let Some(q) = self.as_quoted() {
                    return write!(f, "'{q}");
                }
                f.write_str("(")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{line}:{column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

struct Reader<'a> {
    chars: core::iter::Peekable<core::str::CharIndices<'a>>,
    line: usize,
    column: usize,
}

impl<'a> Reader<'a> {
    fn new(text: &'a str) -> Self {
        Reader { chars: text.char_indices().peekable(), line: 1, column: 1 }
    }

    fn error(&self, message: &str) -> ParseError {
        ParseError { line: self.line, column: self.column, message: message.to_string() }
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().map(|&(_, c)| c)
    }

    fn bump(&mut self) -> Option<char> {
        let (_, c) = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn skip_trivia(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == ';' {
                while let Some(c) = self.bump() {
                    if c == '\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn at_end(&mut self) -> bool {
        self.skip_trivia();
        self.peek().is_none()
    }

    fn read(&mut self) -> Result<SExpr, ParseError> {
        self.skip_trivia();
        let Some(c) = self.peek() else {
            return Err(self.error("unexpected end of input"));
        };
        match c {
            '(' => {
                self.bump();
                let mut items = Vec::new();
                loop {
                    self.skip_trivia();
                    match self.peek() {
                        None => return Err(self.error("unclosed parenthesis")),
                        Some(')') => {
                            self.bump();
                            break;
                        }
                        Some(_) => items.push(self.read()?),
                    }
                }
                Ok(SExpr::List(items))
            }
            ')' => Err(self.error("unexpected ')'")),
            '\'' => {
                self.bump();
                let quoted = self.read()?;
                Ok(SExpr::quote(quoted))
            }
            '"' => {
                self.bump();
                let mut s = String::new();
                loop {
                    match self.bump() {
                        None => return Err(self.error("unterminated string")),
                        Some('"') => break,
                        Some('\\') => match self.bump() {
                            Some(c) => s.push(c),
                            None => return Err(self.error("unterminated string")),
                        },
                        Some(c) => s.push(c),
                    }
                }
                Ok(SExpr::Str(s))
            }
            _ => {
                let mut token = String::new();
                while let Some(c) = self.peek() {
                    if c.is_whitespace() || matches!(c, '(' | ')' | '\'' | '"' | ';') {
                        break;
                    }
                    token.push(c);
                    self.bump();
                }
                if let Some(n) = parse_integer(&token) {
                    Ok(SExpr::Int(n))
                } else {
                    Ok(SExpr::Sym(Symbol::new(&token)))
                }
            }
        }
    }
}

fn parse_integer(token: &str) -> Option<i64> {
    let digits = token.strip_prefix(['-', '+']).unwrap_or(token);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    token.parse().ok()
}

/// Parses exactly one s-expression (surrounding whitespace and comments allowed).
pub fn parse(text: &str) -> Result<SExpr, ParseError> {
    let mut reader = Reader::new(text);
    let form = reader.read()?;
    if !reader.at_end() {
        return Err(reader.error("trailing input after form"));
    }
    Ok(form)
}

/// Parses a sequence of s-expressions.
pub fn parse_all(text: &str) -> Result<Vec<SExpr>, ParseError> {
    let mut reader = Reader::new(text);
    let mut forms = Vec::new();
    while !reader.at_end() {
        forms.push(reader.read()?);
    }
    Ok(forms)
}

/// Splits a command stream into commands. A command ends at the end of a
/// line once its parentheses balance; `;` starts a comment.
pub fn split_commands(text: &str) -> Vec<String> {
    let mut commands = Vec::new();
    let mut current = String::new();
    let mut depth: i64 = 0;
    for line in text.lines() {
        let mut in_string = false;
        let mut escaped = false;
        let mut code = String::new();
        for c in line.chars() {
            if in_string {
                if escaped {
                    escaped = false;
                } else if c == '\\' {
                    escaped = true;
                } else if c == '"' {
                    in_string = false;
                }
            } else if c == ';' {
                break;
            } else if c == '"' {
                in_string = true;
            } else if c == '(' {
                depth += 1;
            } else if c == ')' {
                depth -= 1;
            }
            code.push(c);
        }
        let code = code.trim_end();
        if code.trim().is_empty() {
            continue;
        }
        if !current.is_empty() {
            current.push('\n');
        }
        current.push_str(code);
        if depth <= 0 {
            commands.push(core::mem::take(&mut current).trim().to_string());
            depth = 0;
        }
    }
    if !current.trim().is_empty() {
        commands.push(current.trim().to_string());
    }
    commands
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::vec;

    #[test]
    fn parses_simple_list() {
        let s = parse("(rev x)").unwrap();
        assert_eq!(s, SExpr::List(vec![SExpr::sym("REV"), SExpr::sym("X")]));
    }

    #[test]
    fn quote_sugar() {
        let s = parse("'nil").unwrap();
        assert_eq!(s, SExpr::List(vec![SExpr::sym("QUOTE"), SExpr::sym("NIL")]));
        assert_eq!(format!("{s}"), "'NIL");
    }

    #[test]
    fn lambda_form_keeps_quote() {
        let s = parse("(ALWAYS$ '(LAMBDA (LOOP$-IVAR) (ATOM LOOP$-IVAR)) (NATS N))").unwrap();
        let items = s.as_list().unwrap();
        assert_eq!(items.len(), 3);
        assert!(items[1].as_quoted().is_some());
        assert_eq!(
            format!("{s}"),
            "(ALWAYS$ '(LAMBDA (LOOP$-IVAR) (ATOM LOOP$-IVAR)) (NATS N))"
        );
    }

    #[test]
    fn integers_strings_and_comments() {
        let forms = parse_all("; header\n(f -3 \"a\\\"b\") ; trailing\n 12").unwrap();
        assert_eq!(forms.len(), 2);
        assert_eq!(
            forms[0],
            SExpr::List(vec![SExpr::sym("F"), SExpr::Int(-3), SExpr::Str("a\"b".into())])
        );
        assert_eq!(format!("{}", forms[0]), "(F -3 \"a\\\"b\")");
        assert_eq!(forms[1], SExpr::Int(12));
        assert_eq!(parse("-").unwrap(), SExpr::sym("-"));
    }

    #[test]
    fn errors_carry_position() {
        let err = parse("(f\n  (g x)").unwrap_err();
        assert_eq!(err.line, 2);
        let err = parse("(f) )").unwrap_err();
        assert_eq!((err.line, err.column), (1, 5));
        assert!(parse(")").is_err());
        assert!(parse("\"abc").is_err());
    }

    #[test]
    fn splits_multiline_commands() {
        let cmds = split_commands(":eval\n(thm (implies (r v)\n   (p (f u v)))) ; go\n\n; only a comment\n:go");
        assert_eq!(cmds, vec![":eval", "(thm (implies (r v)\n   (p (f u v))))", ":go"]);
    }
}
