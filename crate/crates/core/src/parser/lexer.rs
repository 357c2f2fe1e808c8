// Copyright 2026 the immucheck authors
// SPDX-License-Identifier: Apache-2.0

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Keyword(&'static str),
    /// Operator or punctuation, e.g. `(`, `=>`, `<:`, `+`.
    Sym(String),
    Literal,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Keyword(k) => write!(f, "`{k}`"),
            Tok::Sym(s) => write!(f, "`{s}`"),
            Tok::Literal => f.write_str("literal"),
            Tok::Eof => f.write_str("end of file"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub column: usize,
    /// First token on its source line.
    pub line_start: bool,
}

impl Token {
    pub fn is_sym(&self, s: &str) -> bool {
        matches!(&self.tok, Tok::Sym(x) if x == s)
    }

    pub fn is_kw(&self, k: &str) -> bool {
        matches!(&self.tok, Tok::Keyword(x) if *x == k)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

const KEYWORDS: &[&str] = &[
    "abstract",
    "case",
    "class",
    "def",
    "extends",
    "final",
    "implicit",
    "import",
    "lazy",
    "new",
    "object",
    "override",
    "package",
    "private",
    "protected",
    "sealed",
    "trait",
    "type",
    "val",
    "var",
    "with",
];

const OP_CHARS: &str = "+-*/%<>=!&|^~?:\\#@";

struct Lexer<'s> {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    column: usize,
    last_line: usize,
    tokens: Vec<Token>,
    errors: Vec<LexError>,
    _src: &'s str,
}

/// Splits `text` into tokens. Lexical errors are collected and the offending
/// character skipped, so one pass reports every error.
pub fn tokenize(text: &str) -> (Vec<Token>, Vec<LexError>) {
    let mut lx = Lexer {
        chars: text.chars().collect(),
        pos: 0,
        line: 1,
        column: 1,
        last_line: 0,
        tokens: Vec::new(),
        errors: Vec::new(),
        _src: text,
    };
    lx.run();
    let (line, column) = (lx.line, lx.column);
    lx.tokens.push(Token {
        tok: Tok::Eof,
        line,
        column,
        line_start: true,
    });
    (lx.tokens, lx.errors)
}

impl Lexer<'_> {
    fn peek(&self, ahead: usize) -> Option<char> {
        self.chars.get(self.pos + ahead).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.pos).copied()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn push(&mut self, tok: Tok, line: usize, column: usize) {
        let line_start = self.last_line != line;
        // multi-line literals end on a later line
        self.last_line = self.line;
        self.tokens.push(Token {
            tok,
            line,
            column,
            line_start,
        });
    }

    fn error(&mut self, line: usize, column: usize, message: String) {
        self.errors.push(LexError {
            line,
            column,
            message,
        });
    }

    fn run(&mut self) {
        while let Some(c) = self.peek(0) {
            let (line, column) = (self.line, self.column);
            if c.is_whitespace() {
                self.bump();
            } else if c == '/' && self.peek(1) == Some('/') {
                while let Some(c) = self.peek(0) {
                    if c == '\n' {
                        break;
                    }
                    self.bump();
                }
            } else if c == '/' && self.peek(1) == Some('*') {
                self.block_comment(line, column);
            } else if c.is_alphabetic() || c == '_' || c == '$' {
                let word = self.take_while(|c| c.is_alphanumeric() || c == '_' || c == '$');
                let tok = match KEYWORDS.iter().find(|k| **k == word) {
                    Some(k) => Tok::Keyword(k),
                    None => Tok::Ident(word),
                };
                self.push(tok, line, column);
            } else if c == '`' {
                self.bump();
                let word = self.take_while(|c| c != '`' && c != '\n');
                if self.peek(0) == Some('`') {
                    self.bump();
                    self.push(Tok::Ident(word), line, column);
                } else {
                    self.error(line, column, "unterminated quoted identifier".into());
                }
            } else if c.is_ascii_digit() {
                self.take_while(|c| c.is_ascii_alphanumeric() || c == '_');
                if self.peek(0) == Some('.') && self.peek(1).is_some_and(|c| c.is_ascii_digit()) {
                    self.bump();
                    self.take_while(|c| c.is_ascii_alphanumeric() || c == '_');
                }
                self.push(Tok::Literal, line, column);
            } else if c == '"' {
                self.string(line, column);
            } else if c == '\'' {
                self.quote(line, column);
            } else if "()[]{},;.".contains(c) {
                self.bump();
                self.push(Tok::Sym(c.to_string()), line, column);
            } else if OP_CHARS.contains(c) {
                let op = self.take_while(|c| OP_CHARS.contains(c));
                self.push(Tok::Sym(op), line, column);
            } else {
                self.bump();
                self.error(line, column, format!("unexpected character {c:?}"));
            }
        }
    }

    fn take_while(&mut self, f: impl Fn(char) -> bool) -> String {
        let mut out = String::new();
        while let Some(c) = self.peek(0) {
            if !f(c) {
                break;
            }
            out.push(c);
            self.bump();
        }
        out
    }

    fn block_comment(&mut self, line: usize, column: usize) {
        self.bump();
        self.bump();
        let mut depth = 1;
        while depth > 0 {
            match (self.peek(0), self.peek(1)) {
                (Some('*'), Some('/')) => {
                    self.bump();
                    self.bump();
                    depth -= 1;
                }
                (Some('/'), Some('*')) => {
                    self.bump();
                    self.bump();
                    depth += 1;
                }
                (Some(_), _) => {
                    self.bump();
                }
                (None, _) => {
                    self.error(line, column, "unterminated block comment".into());
                    return;
                }
            }
        }
    }

    fn string(&mut self, line: usize, column: usize) {
        if self.peek(1) == Some('"') && self.peek(2) == Some('"') {
            for _ in 0..3 {
                self.bump();
            }
            loop {
                match self.peek(0) {
                    Some('"') if self.peek(1) == Some('"') && self.peek(2) == Some('"') => {
                        for _ in 0..3 {
                            self.bump();
                        }
                        while self.peek(0) == Some('"') {
                            self.bump();
                        }
                        break;
                    }
                    Some(_) => {
                        self.bump();
                    }
                    None => {
                        self.error(line, column, "unterminated string literal".into());
                        return;
                    }
                }
            }
        } else {
            self.bump();
            loop {
                match self.peek(0) {
                    Some('"') => {
                        self.bump();
                        break;
                    }
                    Some('\\') => {
                        self.bump();
                        self.bump();
                    }
                    Some('\n') | None => {
                        self.error(line, column, "unterminated string literal".into());
                        return;
                    }
                    Some(_) => {
                        self.bump();
                    }
                }
            }
        }
        self.push(Tok::Literal, line, column);
    }

    /// Character literal `'a'` / `'\n'`, or symbol literal `'name`.
    fn quote(&mut self, line: usize, column: usize) {
        self.bump();
        match (self.peek(0), self.peek(1)) {
            (Some('\\'), _) => {
                self.bump();
                self.take_while(|c| c != '\'' && c != '\n');
                if self.peek(0) == Some('\'') {
                    self.bump();
                } else {
                    self.error(line, column, "unterminated character literal".into());
                    return;
                }
            }
            (Some(c), Some('\'')) if c != '\n' => {
                self.bump();
                self.bump();
            }
            (Some(c), _) if c.is_alphabetic() || c == '_' => {
                self.take_while(|c| c.is_alphanumeric() || c == '_');
            }
            _ => {
                self.error(line, column, "malformed character literal".into());
                return;
            }
        }
        self.push(Tok::Literal, line, column);
    }
}
