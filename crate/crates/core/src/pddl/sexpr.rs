use super::error::{ParseError, ParseErrorKind};

/// Line/column of a token, both 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

#[derive(Debug, Clone)]
pub enum SExpr {
    Atom(String, Pos),
    List(Vec<SExpr>, Pos),
}

impl SExpr {
    pub fn pos(&self) -> Pos {
        match self {
            SExpr::Atom(_, p) | SExpr::List(_, p) => *p,
        }
    }

    pub fn as_atom(&self) -> Option<&str> {
        match self {
            SExpr::Atom(s, _) => Some(s),
            SExpr::List(..) => None,
        }
    }

    pub fn as_list(&self) -> Option<&[SExpr]> {
        match self {
            SExpr::List(items, _) => Some(items),
            SExpr::Atom(..) => None,
        }
    }

    /// First element of a list if it is a symbol, e.g. `and` in `(and ...)`.
    pub fn head(&self) -> Option<&str> {
        self.as_list().and_then(|l| l.first()).and_then(SExpr::as_atom)
    }
}

enum Tok {
    Open(Pos),
    Close(Pos),
    Sym(String, Pos),
}

fn lex(text: &str, file: &str) -> Result<Vec<Tok>, ParseError> {
    let mut toks = Vec::new();
    let mut line = 1;
    let mut col = 1;
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        let here = Pos { line, col };
        match c {
            '\n' => {
                chars.next();
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                chars.next();
                col += 1;
            }
            ';' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                }
            }
            '(' => {
                chars.next();
                col += 1;
                toks.push(Tok::Open(here));
            }
            ')' => {
                chars.next();
                col += 1;
                toks.push(Tok::Close(here));
            }
            c if is_symbol_char(c) => {
                let mut sym = String::new();
                while let Some(&c) = chars.peek() {
                    if !is_symbol_char(c) {
                        break;
                    }
                    sym.extend(c.to_lowercase());
                    chars.next();
                    col += 1;
                }
                toks.push(Tok::Sym(sym, here));
            }
            other => {
                return Err(ParseError::new(
                    file,
                    here,
                    ParseErrorKind::Lexical(format!("unexpected character {other:?}")),
                ))
            }
        }
    }
    Ok(toks)
}

fn is_symbol_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '-' | '_' | '?' | ':' | '.' | '=' | '+' | '*' | '/' | '<' | '>')
}

/// Parses exactly one top-level s-expression.
pub fn parse_one(text: &str, file: &str) -> Result<SExpr, ParseError> {
    let toks = lex(text, file)?;
    let mut it = toks.into_iter().peekable();
    let expr = match it.next() {
        None => {
            return Err(ParseError::new(
                file,
                Pos { line: 1, col: 1 },
                ParseErrorKind::Syntax("empty input".into()),
            ))
        }
        Some(t) => build(t, &mut it, file)?,
    };
    if let Some(t) = it.next() {
        let p = match t {
            Tok::Open(p) | Tok::Close(p) | Tok::Sym(_, p) => p,
        };
        return Err(ParseError::new(
            file,
            p,
            ParseErrorKind::Syntax("trailing input after top-level expression".into()),
        ));
    }
    Ok(expr)
}

/// Parses a sequence of top-level s-expressions (used for plan files).
pub fn parse_many(text: &str, file: &str) -> Result<Vec<SExpr>, ParseError> {
    let toks = lex(text, file)?;
    let mut it = toks.into_iter().peekable();
    let mut out = Vec::new();
    while let Some(t) = it.next() {
        out.push(build(t, &mut it, file)?);
    }
    Ok(out)
}

fn build(
    first: Tok,
    it: &mut std::iter::Peekable<std::vec::IntoIter<Tok>>,
    file: &str,
) -> Result<SExpr, ParseError> {
    match first {
        Tok::Sym(s, p) => Ok(SExpr::Atom(s, p)),
        Tok::Close(p) => Err(ParseError::new(
            file,
            p,
            ParseErrorKind::Syntax("unbalanced `)`".into()),
        )),
        Tok::Open(p) => {
            let mut items = Vec::new();
            loop {
                match it.next() {
                    None => {
                        return Err(ParseError::new(
                            file,
                            p,
                            ParseErrorKind::Syntax("unclosed `(`".into()),
                        ))
                    }
                    Some(Tok::Close(_)) => return Ok(SExpr::List(items, p)),
                    Some(t) => items.push(build(t, it, file)?),
                }
            }
        }
    }
}
