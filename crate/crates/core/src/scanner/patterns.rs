//! Token-level matchers for the four refcount pattern families.
//!
//! Matching happens per function body. "Later in the body" stands in for a
//! control-flow path, and macros are taken as written.

use std::ops::Range;

use super::lex::{Token, TokenKind};
use super::{Confidence, Pattern, PatternConfig};

const ADD_UNLESS: [&str; 3] = ["atomic_add_unless", "atomic_long_add_unless", "atomic64_add_unless"];
const ADD_RETURN: [&str; 3] = ["atomic_add_return", "atomic_long_add_return", "atomic64_add_return"];

/// A finding before it is attached to a file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawFinding {
    pub pattern: Pattern,
    pub decl_line: usize,
    pub release_line: Option<usize>,
    pub confidence: Confidence,
}

/// Token ranges of every top-level function body, braces excluded.
///
/// A body is a top-level `{` that directly follows the `)` closing a
/// parameter list. Other top-level braces (struct definitions, initializers)
/// are skipped whole.
pub fn function_bodies(tokens: &[Token]) -> Vec<Range<usize>> {
    let mut bodies = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if tokens[i].is("{") {
            let close = matching(tokens, i, "{", "}").unwrap_or(tokens.len());
            if i > 0 && tokens[i - 1].is(")") {
                bodies.push(i + 1..close);
            }
            i = close + 1;
        } else {
            i += 1;
        }
    }
    bodies
}

/// Index of the bracket closing the one at `open`.
fn matching(tokens: &[Token], open: usize, left: &str, right: &str) -> Option<usize> {
    let mut depth = 0usize;
    for (offset, tok) in tokens[open..].iter().enumerate() {
        if tok.is(left) {
            depth += 1;
        } else if tok.is(right) {
            depth -= 1;
            if depth == 0 {
                return Some(open + offset);
            }
        }
    }
    None
}

/// Splits the argument list of the call whose `(` is at `open`.
/// Returns the argument token ranges and the index of the closing `)`.
fn call_args(tokens: &[Token], open: usize, end: usize) -> Option<(Vec<Range<usize>>, usize)> {
    let mut depth = 0usize;
    let mut args = Vec::new();
    let mut start = open + 1;
    for i in open..end {
        match tokens[i].text.as_str() {
            "(" | "[" | "{" => depth += 1,
            ")" | "]" | "}" => {
                depth -= 1;
                if depth == 0 {
                    if i > start || !args.is_empty() {
                        args.push(start..i);
                    }
                    return Some((args, i));
                }
            }
            "," if depth == 1 => {
                args.push(start..i);
                start = i + 1;
            }
            _ => {}
        }
    }
    None
}

/// Drops parentheses that wrap the whole expression.
fn unparen(tokens: &[Token], mut range: Range<usize>) -> Range<usize> {
    while range.len() >= 2
        && tokens[range.start].is("(")
        && matching(tokens, range.start, "(", ")") == Some(range.end - 1)
    {
        range = range.start + 1..range.end - 1;
    }
    range
}

fn same_tokens(tokens: &[Token], a: &Range<usize>, b: &Range<usize>) -> bool {
    a.len() == b.len()
        && tokens[a.clone()]
            .iter()
            .zip(&tokens[b.clone()])
            .all(|(x, y)| x.text == y.text)
}

fn int_literal(tokens: &[Token], range: Range<usize>) -> Option<i64> {
    let range = unparen(tokens, range);
    let toks = &tokens[range];
    let (negative, digits) = match toks {
        [minus, number] if minus.is("-") => (true, number),
        [number] => (false, number),
        _ => return None,
    };
    if digits.kind != TokenKind::Number {
        return None;
    }
    let value: i64 = digits
        .text
        .trim_end_matches(['u', 'U', 'l', 'L'])
        .parse()
        .ok()?;
    Some(if negative { -value } else { value })
}

/// The counter argument of a decrement call: the object expression when it
/// has the `&obj->field` shape, and how closely it matches that shape.
fn counter_object(tokens: &[Token], arg: Range<usize>) -> Option<(Option<Range<usize>>, Confidence)> {
    let arg = unparen(tokens, arg);
    if arg.is_empty() || !tokens[arg.start].is("&") {
        return None;
    }
    let inner = unparen(tokens, arg.start + 1..arg.end);
    let mut depth = 0usize;
    let mut last_arrow = None;
    for i in inner.clone() {
        match tokens[i].text.as_str() {
            "(" | "[" => depth += 1,
            ")" | "]" => depth = depth.saturating_sub(1),
            "->" if depth == 0 => last_arrow = Some(i),
            _ => {}
        }
    }
    match last_arrow {
        Some(arrow) if arrow > inner.start => {
            let object = unparen(tokens, inner.start..arrow);
            let exact = arrow + 2 == inner.end && tokens[arrow + 1].is_ident();
            let confidence = if exact { Confidence::High } else { Confidence::Low };
            Some((Some(object), confidence))
        }
        _ => Some((None, Confidence::Low)),
    }
}

/// A call used as a whole statement: `name(args);`.
struct CallStatement {
    name_index: usize,
    args: Vec<Range<usize>>,
}

fn call_statement(tokens: &[Token], i: usize, body_start: usize, end: usize) -> Option<CallStatement> {
    if !tokens[i].is_ident() || !tokens.get(i + 1).is_some_and(|t| t.is("(")) {
        return None;
    }
    let statement_start = i == body_start
        || matches!(tokens[i - 1].text.as_str(), ";" | "{" | "}" | ")" | "else" | ":");
    if !statement_start {
        return None;
    }
    let (args, close) = call_args(tokens, i + 1, end)?;
    tokens.get(close + 1).filter(|t| t.is(";"))?;
    Some(CallStatement { name_index: i, args })
}

/// Whether `name = object;` appears anywhere in the body before `limit`.
fn aliased(tokens: &[Token], body: &Range<usize>, name: &str, object: &Range<usize>, limit: usize) -> bool {
    (body.start..limit).any(|i| {
        let rhs = i + 2..i + 2 + object.len();
        tokens[i].is(name)
            && (i == body.start || !matches!(tokens[i - 1].text.as_str(), "." | "->"))
            && tokens.get(i + 1).is_some_and(|t| t.is("="))
            && rhs.end < limit
            && same_tokens(tokens, &rhs, object)
            && tokens[rhs.end].is(";")
    })
}

pub fn match_body(tokens: &[Token], body: Range<usize>, config: &PatternConfig) -> Vec<RawFinding> {
    let mut findings = Vec::new();
    for i in body.clone() {
        let tok = &tokens[i];
        if !tok.is_ident() || !tokens.get(i + 1).is_some_and(|t| t.is("(")) {
            continue;
        }
        let name = tok.text.as_str();
        if config.is_decrement(name) {
            findings.extend(match_release(tokens, &body, i, config));
        } else if ADD_UNLESS.contains(&name) {
            findings.extend(match_add_unless(tokens, &body, i));
        } else if ADD_RETURN.contains(&name) {
            findings.extend(match_add_return(tokens, &body, i));
        }
    }
    findings
}

/// Decrement-and-test on `&obj->field` followed by a release: either a free
/// of `obj` itself (or of an alias assigned from it), or any call in the
/// destroy/del/work/rcu name classes.
fn match_release(tokens: &[Token], body: &Range<usize>, at: usize, config: &PatternConfig) -> Option<RawFinding> {
    let (args, close) = call_args(tokens, at + 1, body.end)?;
    let (object, confidence) = counter_object(tokens, args.first()?.clone())?;
    let decl_line = tokens[at].line;

    let mut alias_release = None;
    for i in close + 1..body.end {
        let Some(call) = call_statement(tokens, i, body.start, body.end) else {
            continue;
        };
        let name = tokens[call.name_index].text.as_str();
        if config.is_decrement(name) {
            continue;
        }
        let first_arg = call.args.first().map(|a| unparen(tokens, a.clone()));
        if config.is_object_release(name) {
            let frees_object = match (&object, &first_arg) {
                (Some(object), Some(arg)) => same_tokens(tokens, object, arg),
                (None, _) => true,
                _ => false,
            };
            if frees_object {
                return Some(RawFinding {
                    pattern: Pattern::DecAndTestThenFree,
                    decl_line,
                    release_line: Some(tokens[i].line),
                    confidence,
                });
            }
            if alias_release.is_none() {
                if let (Some(object), Some(arg)) = (&object, &first_arg) {
                    if arg.len() == 1
                        && tokens[arg.start].is_ident()
                        && aliased(tokens, body, &tokens[arg.start].text, object, i)
                    {
                        alias_release = Some(tokens[i].line);
                    }
                }
            }
        }
        if config.is_any_release(name) {
            return Some(RawFinding {
                pattern: Pattern::DecAndTestThenFree,
                decl_line,
                release_line: Some(tokens[i].line),
                confidence,
            });
        }
    }
    alias_release.map(|line| RawFinding {
        pattern: Pattern::DecAndTestAliasThenFree,
        decl_line,
        release_line: Some(line),
        confidence,
    })
}

/// `atomic_add_unless(&obj->field, -1, 1)`.
fn match_add_unless(tokens: &[Token], body: &Range<usize>, at: usize) -> Option<RawFinding> {
    let (args, _) = call_args(tokens, at + 1, body.end)?;
    let [counter, delta, unless] = args.as_slice() else {
        return None;
    };
    if int_literal(tokens, delta.clone()) != Some(-1) || int_literal(tokens, unless.clone()) != Some(1) {
        return None;
    }
    let (object, confidence) = counter_object(tokens, counter.clone())?;
    Some(RawFinding {
        pattern: Pattern::AddUnlessMinusOneOne,
        decl_line: tokens[at].line,
        release_line: None,
        confidence: if object.is_some() { confidence } else { Confidence::Low },
    })
}

/// `x = atomic_add_return(-1, ...);`.
fn match_add_return(tokens: &[Token], body: &Range<usize>, at: usize) -> Option<RawFinding> {
    if at < body.start + 2 || !tokens[at - 1].is("=") || !tokens[at - 2].is_ident() {
        return None;
    }
    let (args, close) = call_args(tokens, at + 1, body.end)?;
    if int_literal(tokens, args.first()?.clone()) != Some(-1) {
        return None;
    }
    tokens.get(close + 1).filter(|t| t.is(";"))?;
    Some(RawFinding {
        pattern: Pattern::AddReturnMinusOne,
        decl_line: tokens[at].line,
        release_line: None,
        confidence: Confidence::High,
    })
}
