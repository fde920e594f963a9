use std::fmt::Write as _;
use std::sync::OnceLock;

use regex::Regex;

use super::{FunctionLibrary, PseudoCall, PseudoProgram, ValueLiteral};

fn number_literal() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^-?[0-9]+(\.[0-9]+)?([eE][+-]?[0-9]+)?$").unwrap())
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

pub fn render_value(value: &ValueLiteral) -> String {
    match value {
        ValueLiteral::Quantity(s) | ValueLiteral::Text(s) => quote(s),
        ValueLiteral::BareNumber(n) if number_literal().is_match(n) => n.clone(),
        ValueLiteral::BareNumber(n) => quote(n),
        ValueLiteral::Ident(name) => name.clone(),
        ValueLiteral::ListOf(items) => {
            let inner: Vec<String> = items.iter().map(render_value).collect();
            format!("[{}]", inner.join(", "))
        }
    }
}

/// Renders one call on a single line, without a trailing newline.
pub fn render_call(call: &PseudoCall) -> String {
    let mut out = String::new();
    if let Some(result) = &call.result_name {
        let _ = write!(out, "{result} = ");
    }
    out.push_str(&call.callee);
    out.push('(');
    for (i, arg) in call.args.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "{}={}", arg.name, render_value(&arg.value));
    }
    out.push(')');
    if let Some(comment) = call.comment.as_deref().map(str::trim) {
        if !comment.is_empty() {
            let _ = write!(out, "  # {comment}");
        }
    }
    out
}

/// Canonical program text: one call per line, LF separated, no trailing newline.
pub fn render_program(program: &PseudoProgram) -> String {
    program.calls.iter().map(render_call).collect::<Vec<_>>().join("\n")
}

pub fn render_library(library: &FunctionLibrary) -> String {
    let mut lines = Vec::new();
    for sig in &library.signatures {
        let params: Vec<String> = sig
            .params
            .iter()
            .map(|p| match &p.description {
                Some(d) => format!("{}: {}", p.name, quote(d)),
                None => p.name.clone(),
            })
            .collect();
        lines.push(format!("def {}({}):", sig.name, params.join(", ")));
        if !sig.description.is_empty() {
            lines.push(format!("    {}", quote(&sig.description)));
        }
    }
    lines.join("\n")
}
