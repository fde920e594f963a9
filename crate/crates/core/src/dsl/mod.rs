//! The restricted pseudocode language.
//!
//! A program is a flat sequence of keyword-argument calls, one per line:
//!
//! ```text
//! pellet = Centrifuge(speed="full speed", time="30 minutes")  # spin down
//! Resuspend(sample=pellet, buffer="TE", volume="50 uL")
//! ```
//!
//! A library is a list of `def` signatures, each optionally followed by an
//! indented docstring line. There is no control flow, no positional
//! arguments and no expressions.

mod lexer;
mod parser;
mod render;
mod validate;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use parser::{parse_program, parse_signatures, parse_single_call};
pub use render::{render_call, render_library, render_program, render_value};
pub use validate::{validate, ValidationPolicy};

/// An argument value.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ValueLiteral {
    /// Text with both a number and a unit-like token, e.g. `"10 mL"`.
    Quantity(String),
    /// A number without a unit. Holds the literal text (`30`, `1.5`, `1/10`).
    BareNumber(String),
    /// A free string with no numeric content.
    Text(String),
    /// A reference to the result of an earlier call.
    Ident(String),
    /// A non-empty bracketed list.
    ListOf(Vec<ValueLiteral>),
}

impl ValueLiteral {
    /// Classifies the content of a quoted string.
    pub fn from_quoted(content: &str) -> Self {
        let has_digit = content.chars().any(|c| c.is_ascii_digit());
        let has_unit_like = content.chars().any(|c| c.is_alphabetic() || c == '%' || c == '°');
        match (has_digit, has_unit_like) {
            (true, true) => ValueLiteral::Quantity(content.to_string()),
            (true, false) => ValueLiteral::BareNumber(content.trim().to_string()),
            _ => ValueLiteral::Text(content.to_string()),
        }
    }

    /// Plain text form used by the value metrics. Lists are joined with `", "`.
    pub fn as_text(&self) -> String {
        match self {
            ValueLiteral::Quantity(s)
            | ValueLiteral::BareNumber(s)
            | ValueLiteral::Text(s)
            | ValueLiteral::Ident(s) => s.clone(),
            ValueLiteral::ListOf(items) => items.iter().map(ValueLiteral::as_text).collect::<Vec<_>>().join(", "),
        }
    }

    /// Checks the per-variant invariants.
    pub fn is_well_formed(&self) -> bool {
        match self {
            ValueLiteral::ListOf(items) => !items.is_empty() && items.iter().all(ValueLiteral::is_well_formed),
            ValueLiteral::Ident(name) => is_identifier(name),
            ValueLiteral::BareNumber(s) => {
                s.chars().any(|c| c.is_ascii_digit())
                    && ValueLiteral::from_quoted(s) == ValueLiteral::BareNumber(s.clone())
            }
            ValueLiteral::Quantity(s) | ValueLiteral::Text(s) => ValueLiteral::from_quoted(s) == *self,
        }
    }

    fn contains_bare_number(&self) -> bool {
        match self {
            ValueLiteral::BareNumber(_) => true,
            ValueLiteral::ListOf(items) => items.iter().any(ValueLiteral::contains_bare_number),
            _ => false,
        }
    }
}

/// `name=value` inside a call.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ArgumentBinding {
    pub name: String,
    pub value: ValueLiteral,
}

impl ArgumentBinding {
    pub fn new(name: impl Into<String>, value: ValueLiteral) -> Self {
        Self {
            name: name.into(),
            value,
        }
    }
}

/// One statement of a program.
///
/// Equality ignores `line`: two calls are equal when they say the same thing.
#[derive(Debug, Clone)]
pub struct PseudoCall {
    pub callee: String,
    pub args: Vec<ArgumentBinding>,
    pub result_name: Option<String>,
    pub comment: Option<String>,
    pub line: usize,
}

impl PseudoCall {
    pub fn new(callee: impl Into<String>, args: Vec<ArgumentBinding>) -> Self {
        Self {
            callee: callee.into(),
            args,
            result_name: None,
            comment: None,
            line: 1,
        }
    }

    pub fn with_result(mut self, name: impl Into<String>) -> Self {
        self.result_name = Some(name.into());
        self
    }

    pub fn arg(&self, name: &str) -> Option<&ValueLiteral> {
        self.args.iter().find(|a| a.name == name).map(|a| &a.value)
    }
}

impl PartialEq for PseudoCall {
    fn eq(&self, other: &Self) -> bool {
        self.callee == other.callee
            && self.args == other.args
            && self.result_name == other.result_name
            && self.comment == other.comment
    }
}

impl Eq for PseudoCall {}

/// An ordered list of calls.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PseudoProgram {
    pub calls: Vec<PseudoCall>,
}

impl PseudoProgram {
    pub fn new(calls: Vec<PseudoCall>) -> Self {
        Self { calls }
    }

    pub fn len(&self) -> usize {
        self.calls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.calls.is_empty()
    }

    /// Callee names in program order.
    pub fn callee_names(&self) -> Vec<&str> {
        self.calls.iter().map(|c| c.callee.as_str()).collect()
    }
}

/// A parameter in a signature.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Param {
    pub name: String,
    pub description: Option<String>,
}

impl Param {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            description: None,
        }
    }
}

/// A pseudofunction: a named action with keyword parameters.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FunctionSignature {
    pub name: String,
    pub params: Vec<Param>,
    pub description: String,
}

impl FunctionSignature {
    pub fn new(name: impl Into<String>, params: &[&str], description: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            params: params.iter().map(|p| Param::new(*p)).collect(),
            description: description.into(),
        }
    }
}

/// The admissible set of pseudofunctions for a protocol.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FunctionLibrary {
    pub signatures: Vec<FunctionSignature>,
}

impl FunctionLibrary {
    pub fn new(signatures: Vec<FunctionSignature>) -> Self {
        Self { signatures }
    }

    pub fn get(&self, name: &str) -> Option<&FunctionSignature> {
        self.signatures.iter().find(|s| s.name == name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    pub fn names(&self) -> Vec<&str> {
        self.signatures.iter().map(|s| s.name.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.signatures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signatures.is_empty()
    }

    /// Appends signatures whose names are not yet present; existing entries win.
    pub fn merge(&mut self, other: &FunctionLibrary) {
        for sig in &other.signatures {
            if !self.contains(&sig.name) {
                self.signatures.push(sig.clone());
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DiagnosticCode {
    #[serde(rename = "E_SYNTAX")]
    Syntax,
    #[serde(rename = "E_UNDEFINED_FUNCTION")]
    UndefinedFunction,
    #[serde(rename = "E_NO_FUNCTIONS")]
    NoFunctions,
    #[serde(rename = "E_NO_ARGS")]
    NoArgs,
    #[serde(rename = "E_MISSING_UNITS")]
    MissingUnits,
}

impl DiagnosticCode {
    pub const ALL: [DiagnosticCode; 5] = [
        DiagnosticCode::Syntax,
        DiagnosticCode::UndefinedFunction,
        DiagnosticCode::NoFunctions,
        DiagnosticCode::NoArgs,
        DiagnosticCode::MissingUnits,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DiagnosticCode::Syntax => "E_SYNTAX",
            DiagnosticCode::UndefinedFunction => "E_UNDEFINED_FUNCTION",
            DiagnosticCode::NoFunctions => "E_NO_FUNCTIONS",
            DiagnosticCode::NoArgs => "E_NO_ARGS",
            DiagnosticCode::MissingUnits => "E_MISSING_UNITS",
        }
    }
}

impl fmt::Display for DiagnosticCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub code: DiagnosticCode,
    pub line: usize,
    pub message: String,
}

impl Diagnostic {
    pub fn new(code: DiagnosticCode, line: usize, message: impl Into<String>) -> Self {
        Self {
            code,
            line,
            message: message.into(),
        }
    }

    pub(crate) fn syntax(line: usize, message: impl Into<String>) -> Self {
        Self::new(DiagnosticCode::Syntax, line, message)
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (line {}): {}", self.code, self.line, self.message)
    }
}

/// Letters, digits and underscores, not starting with a digit.
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Pulls code out of a model reply.
///
/// Fenced blocks are concatenated in order; a reply without fences is
/// returned whole.
pub fn extract_code(reply: &str) -> String {
    let mut blocks = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in reply.lines() {
        if line.trim_start().starts_with("```") {
            match current.take() {
                Some(block) => blocks.push(block.join("\n")),
                None => current = Some(Vec::new()),
            }
        } else if let Some(block) = current.as_mut() {
            block.push(line);
        }
    }
    // an unterminated fence still counts
    if let Some(block) = current {
        blocks.push(block.join("\n"));
    }
    if blocks.is_empty() {
        reply.trim().to_string()
    } else {
        blocks.join("\n")
    }
}

/// Splits a combined reply into `(signature text, program text)`.
///
/// `def` lines and their indented bodies go to the first part, everything
/// else to the second. Lines moved to the other part are blanked, so
/// diagnostics from either parser keep the line numbers of `code`.
pub fn split_definitions(code: &str) -> (String, String) {
    let mut defs = Vec::new();
    let mut program = Vec::new();
    let mut in_def = false;
    for line in code.lines() {
        let indented = line.starts_with(' ') || line.starts_with('\t');
        let is_def = line.trim_start().starts_with("def ");
        if is_def && !indented {
            in_def = true;
        } else if !indented && !line.trim().is_empty() {
            in_def = false;
        }
        if in_def {
            defs.push(line);
            program.push("");
        } else {
            defs.push("");
            program.push(line);
        }
    }
    (defs.join("\n"), program.join("\n"))
}
