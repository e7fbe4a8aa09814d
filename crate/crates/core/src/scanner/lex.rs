//! Just enough C lexing for pattern matching: blank out comments, string and
//! character literals, and preprocessor directives, then split the rest into
//! tokens that remember their line.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Ident,
    Number,
    Punct,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub line: usize,
}

impl Token {
    pub fn is(&self, text: &str) -> bool {
        self.text == text
    }

    pub fn is_ident(&self) -> bool {
        self.kind == TokenKind::Ident
    }
}

/// Replaces comments, literals and directives with spaces. Newlines are
/// kept so that line numbers survive.
pub fn strip(source: &str) -> String {
    #[derive(Clone, Copy, PartialEq)]
    enum State {
        Code,
        LineComment,
        BlockComment,
        Str,
        Char,
        Directive,
    }

    let chars: Vec<char> = source.chars().collect();
    let mut out = String::with_capacity(source.len());
    let mut state = State::Code;
    let mut at_line_start = true;
    let mut i = 0;

    let blank = |c: char| if c == '\n' { '\n' } else { ' ' };

    while i < chars.len() {
        let c = chars[i];
        let next = chars.get(i + 1).copied();
        match state {
            State::Code => {
                if c == '/' && next == Some('/') {
                    state = State::LineComment;
                    out.push_str("  ");
                    i += 2;
                    continue;
                }
                if c == '/' && next == Some('*') {
                    state = State::BlockComment;
                    out.push_str("  ");
                    i += 2;
                    continue;
                }
                if c == '#' && at_line_start {
                    state = State::Directive;
                    out.push(' ');
                    i += 1;
                    continue;
                }
                match c {
                    '"' => {
                        state = State::Str;
                        out.push(' ');
                    }
                    '\'' => {
                        state = State::Char;
                        out.push(' ');
                    }
                    _ => out.push(c),
                }
                if c == '\n' {
                    at_line_start = true;
                } else if !c.is_whitespace() {
                    at_line_start = false;
                }
            }
            State::LineComment | State::Directive => {
                if c == '\\' && next == Some('\n') {
                    out.push_str(" \n");
                    i += 2;
                    continue;
                }
                if c == '\n' {
                    state = State::Code;
                    at_line_start = true;
                    out.push('\n');
                } else if state == State::Directive && c == '/' && next == Some('*') {
                    // A block comment inside a directive may span lines.
                    state = State::BlockComment;
                    out.push_str("  ");
                    i += 2;
                    continue;
                } else {
                    out.push(' ');
                }
            }
            State::BlockComment => {
                if c == '*' && next == Some('/') {
                    state = State::Code;
                    out.push_str("  ");
                    i += 2;
                    continue;
                }
                out.push(blank(c));
            }
            State::Str | State::Char => {
                let close = if state == State::Str { '"' } else { '\'' };
                if c == '\\' {
                    out.push(' ');
                    if let Some(n) = next {
                        out.push(blank(n));
                    }
                    i += 2;
                    continue;
                }
                if c == close {
                    state = State::Code;
                    out.push(' ');
                } else if c == '\n' {
                    // Unterminated literal; resynchronize on the next line.
                    state = State::Code;
                    at_line_start = true;
                    out.push('\n');
                } else {
                    out.push(' ');
                }
            }
        }
        i += 1;
    }
    out
}

const PUNCT3: [&str; 3] = ["<<=", ">>=", "..."];
const PUNCT2: [&str; 19] = [
    "->", "++", "--", "==", "!=", "<=", ">=", "&&", "||", "<<", ">>", "+=", "-=", "*=", "/=",
    "%=", "&=", "|=", "^=",
];

/// Tokenizes already-stripped source.
pub fn tokenize(stripped: &str) -> Vec<Token> {
    let bytes = stripped.as_bytes();
    let mut tokens = Vec::new();
    let mut line = 1;
    let mut i = 0;

    while i < bytes.len() {
        let c = bytes[i];
        if c == b'\n' {
            line += 1;
            i += 1;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let kind = if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            TokenKind::Ident
        } else if c.is_ascii_digit() {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'.') {
                i += 1;
            }
            TokenKind::Number
        } else if !c.is_ascii() {
            // Skip a whole UTF-8 sequence; none of it matters to the patterns.
            i += 1;
            while i < bytes.len() && (bytes[i] & 0xC0) == 0x80 {
                i += 1;
            }
            continue;
        } else {
            let rest = &stripped[i..];
            let len = PUNCT3
                .iter()
                .chain(PUNCT2.iter())
                .find(|p| rest.starts_with(**p))
                .map_or(1, |p| p.len());
            i += len;
            TokenKind::Punct
        };
        tokens.push(Token {
            kind,
            text: stripped[start..i].to_string(),
            line,
        });
    }
    tokens
}
