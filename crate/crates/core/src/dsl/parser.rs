use std::collections::HashSet;

use super::lexer::{lex_line, LexedLine, Tok};
use super::{
    ArgumentBinding, Diagnostic, DiagnosticCode, FunctionLibrary, FunctionSignature, Param, PseudoCall, PseudoProgram,
    ValueLiteral,
};

/// Bare words that are never treated as result references.
const LITERAL_WORDS: [&str; 3] = ["True", "False", "None"];

/// Parses a whole program.
///
/// A bare identifier used as a value becomes [`ValueLiteral::Ident`] only if
/// an earlier call bound it as a result name; otherwise it is read as
/// [`ValueLiteral::Text`]. Comment-only lines are dropped, trailing comments
/// are attached to their statement.
pub fn parse_program(text: &str) -> Result<PseudoProgram, Vec<Diagnostic>> {
    let mut calls = Vec::new();
    let mut errors = Vec::new();
    let mut defined = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        match parse_statement_line(line, line_no, &defined) {
            Ok(Some(call)) => {
                if let Some(name) = &call.result_name {
                    defined.insert(name.clone());
                }
                calls.push(call);
            }
            Ok(None) => {}
            Err(d) => errors.push(d),
        }
    }
    if errors.is_empty() {
        Ok(PseudoProgram { calls })
    } else {
        Err(errors)
    }
}

/// Parses text that must hold exactly one statement.
pub fn parse_single_call(text: &str) -> Result<PseudoCall, Diagnostic> {
    let program = parse_program(text).map_err(|mut errs| errs.remove(0))?;
    let mut calls = program.calls.into_iter();
    match (calls.next(), calls.next()) {
        (Some(call), None) => Ok(call),
        (None, _) => Err(Diagnostic::syntax(1, "expected one call, found none")),
        (Some(_), Some(extra)) => Err(Diagnostic::syntax(extra.line, "expected one call, found more than one")),
    }
}

/// Parses `def` signatures into a library.
pub fn parse_signatures(text: &str) -> Result<FunctionLibrary, Vec<Diagnostic>> {
    let mut signatures: Vec<FunctionSignature> = Vec::new();
    let mut errors = Vec::new();
    // whether the current definition may still take a docstring line
    let mut open_def: Option<bool> = None;
    let mut seen = HashSet::new();

    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let lexed = match lex_line(line) {
            Ok(l) => l,
            Err(msg) => {
                errors.push(Diagnostic::syntax(line_no, msg));
                continue;
            }
        };
        if lexed.tokens.is_empty() {
            continue;
        }
        let indented = line.starts_with(' ') || line.starts_with('\t');
        if indented {
            let Some(may_doc) = open_def else {
                errors.push(Diagnostic::syntax(line_no, "indented line outside a definition"));
                continue;
            };
            match lexed.tokens.as_slice() {
                [Tok::Str(doc)] if may_doc => {
                    if let Some(sig) = signatures.last_mut() {
                        sig.description = doc.clone();
                    }
                    open_def = Some(false);
                }
                [Tok::Ident(w)] if w == "pass" => open_def = Some(false),
                [Tok::Ellipsis] => open_def = Some(false),
                _ => errors.push(Diagnostic::syntax(
                    line_no,
                    "a definition body may only hold a quoted description",
                )),
            }
            continue;
        }
        match parse_def(&lexed.tokens) {
            Ok((sig, has_body)) => {
                if !seen.insert(sig.name.clone()) {
                    errors.push(Diagnostic::syntax(
                        line_no,
                        format!("function `{}` is defined twice", sig.name),
                    ));
                    open_def = None;
                    continue;
                }
                signatures.push(sig);
                open_def = Some(!has_body);
            }
            Err(msg) => {
                errors.push(Diagnostic::syntax(line_no, msg));
                open_def = None;
            }
        }
    }

    if !errors.is_empty() {
        return Err(errors);
    }
    if signatures.is_empty() {
        return Err(vec![Diagnostic::new(
            DiagnosticCode::NoFunctions,
            1,
            "no pseudofunctions are defined",
        )]);
    }
    Ok(FunctionLibrary { signatures })
}

fn parse_statement_line(
    line: &str,
    line_no: usize,
    defined: &HashSet<String>,
) -> Result<Option<PseudoCall>, Diagnostic> {
    let LexedLine { tokens, comment } = lex_line(line).map_err(|msg| Diagnostic::syntax(line_no, msg))?;
    if tokens.is_empty() {
        return Ok(None);
    }
    let mut cursor = Cursor {
        tokens: &tokens,
        pos: 0,
        defined,
    };
    let mut call = cursor.statement().map_err(|msg| Diagnostic::syntax(line_no, msg))?;
    call.comment = comment;
    call.line = line_no;
    Ok(Some(call))
}

struct Cursor<'a> {
    tokens: &'a [Tok],
    pos: usize,
    defined: &'a HashSet<String>,
}

impl Cursor<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn peek_at(&self, offset: usize) -> Option<&Tok> {
        self.tokens.get(self.pos + offset)
    }

    fn bump(&mut self) -> Option<&Tok> {
        let tok = self.tokens.get(self.pos);
        self.pos += 1;
        tok
    }

    fn expect(&mut self, want: &Tok, context: &str) -> Result<(), String> {
        match self.bump() {
            Some(t) if t == want => Ok(()),
            Some(t) => Err(format!(
                "expected {} {context}, found {}",
                want.describe(),
                t.describe()
            )),
            None => Err(format!("expected {} {context}, found end of line", want.describe())),
        }
    }

    fn ident(&mut self, context: &str) -> Result<String, String> {
        match self.bump() {
            Some(Tok::Ident(s)) => Ok(s.clone()),
            Some(t) => Err(format!("expected identifier {context}, found {}", t.describe())),
            None => Err(format!("expected identifier {context}, found end of line")),
        }
    }

    fn statement(&mut self) -> Result<PseudoCall, String> {
        let result_name = match (self.peek(), self.peek_at(1)) {
            (Some(Tok::Ident(name)), Some(Tok::Eq)) => {
                let name = name.clone();
                self.pos += 2;
                Some(name)
            }
            _ => None,
        };
        let callee = self.ident("as function name")?;
        if callee == "def" {
            return Err("function definitions are not allowed in pseudocode".to_string());
        }
        self.expect(&Tok::LParen, "after function name")?;
        let mut args: Vec<ArgumentBinding> = Vec::new();
        loop {
            match self.peek() {
                Some(Tok::RParen) => {
                    self.pos += 1;
                    break;
                }
                None => return Err("unclosed parenthesis".to_string()),
                _ => {}
            }
            let binding = self.kwarg()?;
            if args.iter().any(|a| a.name == binding.name) {
                return Err(format!("argument `{}` given twice", binding.name));
            }
            args.push(binding);
            match self.bump() {
                Some(Tok::Comma) => {}
                Some(Tok::RParen) => break,
                Some(t) => return Err(format!("expected `,` or `)`, found {}", t.describe())),
                None => return Err("unclosed parenthesis".to_string()),
            }
        }
        if let Some(t) = self.peek() {
            return Err(format!("unexpected {} after call", t.describe()));
        }
        Ok(PseudoCall {
            callee,
            args,
            result_name,
            comment: None,
            line: 1,
        })
    }

    fn kwarg(&mut self) -> Result<ArgumentBinding, String> {
        match (self.peek(), self.peek_at(1)) {
            (Some(Tok::Ident(name)), Some(Tok::Eq)) => {
                let name = name.clone();
                self.pos += 2;
                let value = self.literal()?;
                Ok(ArgumentBinding { name, value })
            }
            (Some(Tok::Ident(_)), Some(Tok::LParen)) => Err("nested calls are not allowed".to_string()),
            (Some(_), _) => Err("positional arguments are not allowed; use name=value".to_string()),
            (None, _) => Err("unclosed parenthesis".to_string()),
        }
    }

    fn literal(&mut self) -> Result<ValueLiteral, String> {
        let tok = self.bump().cloned();
        match tok {
            Some(Tok::Str(s)) => Ok(ValueLiteral::from_quoted(&s)),
            Some(Tok::Number(n)) => Ok(ValueLiteral::BareNumber(n)),
            Some(Tok::Ident(name)) => {
                if self.peek() == Some(&Tok::LParen) {
                    return Err("nested calls are not allowed".to_string());
                }
                if self.defined.contains(&name) && !LITERAL_WORDS.contains(&name.as_str()) {
                    Ok(ValueLiteral::Ident(name))
                } else {
                    Ok(ValueLiteral::Text(name))
                }
            }
            Some(Tok::LBracket) => {
                let mut items = Vec::new();
                loop {
                    if self.peek() == Some(&Tok::RBracket) {
                        self.pos += 1;
                        break;
                    }
                    items.push(self.literal()?);
                    match self.bump() {
                        Some(Tok::Comma) => {}
                        Some(Tok::RBracket) => break,
                        Some(t) => return Err(format!("expected `,` or `]`, found {}", t.describe())),
                        None => return Err("unclosed bracket".to_string()),
                    }
                }
                if items.is_empty() {
                    return Err("empty lists are not allowed".to_string());
                }
                Ok(ValueLiteral::ListOf(items))
            }
            Some(t) => Err(format!("expected a value, found {}", t.describe())),
            None => Err("expected a value, found end of line".to_string()),
        }
    }
}

/// Returns the signature and whether the body was given inline (`: ...`).
fn parse_def(tokens: &[Tok]) -> Result<(FunctionSignature, bool), String> {
    let empty = HashSet::new();
    let mut c = Cursor {
        tokens,
        pos: 0,
        defined: &empty,
    };
    match c.bump() {
        Some(Tok::Ident(kw)) if kw == "def" => {}
        _ => return Err("expected a `def` signature".to_string()),
    }
    let name = c.ident("after `def`")?;
    c.expect(&Tok::LParen, "after function name")?;
    let mut params: Vec<Param> = Vec::new();
    loop {
        if c.peek() == Some(&Tok::RParen) {
            c.pos += 1;
            break;
        }
        let pname = c.ident("as parameter name")?;
        let mut description = None;
        if c.peek() == Some(&Tok::Colon) {
            c.pos += 1;
            match c.bump() {
                Some(Tok::Str(s)) => description = Some(s.clone()),
                Some(Tok::Ident(_)) => {}
                _ => return Err(format!("bad annotation for parameter `{pname}`")),
            }
        }
        if params.iter().any(|p| p.name == pname) {
            return Err(format!("parameter `{pname}` declared twice"));
        }
        params.push(Param {
            name: pname,
            description,
        });
        match c.bump() {
            Some(Tok::Comma) => {}
            Some(Tok::RParen) => break,
            Some(t) => return Err(format!("expected `,` or `)`, found {}", t.describe())),
            None => return Err("unclosed parenthesis".to_string()),
        }
    }
    if c.peek() == Some(&Tok::Arrow) {
        c.pos += 1;
        c.ident("as return annotation")?;
    }
    c.expect(&Tok::Colon, "at end of signature")?;
    let inline_body = match c.bump() {
        None => false,
        Some(Tok::Ellipsis) => true,
        Some(Tok::Ident(w)) if w == "pass" => true,
        Some(t) => return Err(format!("unexpected {} after signature", t.describe())),
    };
    if let Some(t) = c.peek() {
        return Err(format!("unexpected {} after signature", t.describe()));
    }
    Ok((
        FunctionSignature {
            name,
            params,
            description: String::new(),
        },
        inline_body,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_assignment_call() {
        let p = parse_program(r#"x = Mix(volume="10 mL", speed="500 rpm")"#).unwrap();
        assert_eq!(p.calls.len(), 1);
        let call = &p.calls[0];
        assert_eq!(call.callee, "Mix");
        assert_eq!(call.args.len(), 2);
        assert_eq!(call.result_name.as_deref(), Some("x"));
        assert_eq!(call.args[0].name, "volume");
        assert_eq!(call.args[1].name, "speed");
    }

    #[test]
    fn unclosed_call_is_syntax_error() {
        let errs = parse_program("Mix(").unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].code, DiagnosticCode::Syntax);
        assert_eq!(errs[0].line, 1);
    }

    #[test]
    fn comments_and_blanks_only() {
        let p = parse_program("# note\n\n   \n# another").unwrap();
        assert!(p.is_empty());
    }

    #[test]
    fn rejects_positional_nested_and_trailing() {
        for bad in [
            r#"Mix("10 mL")"#,
            r#"Mix(volume=Measure(x="1 mL"))"#,
            r#"Mix(volume="1 mL") extra"#,
            r#"Mix(volume="1 mL", volume="2 mL")"#,
            r#"Mix(volume=[])"#,
            r#"for x in y:"#,
        ] {
            let errs = parse_program(bad).unwrap_err();
            assert_eq!(errs[0].code, DiagnosticCode::Syntax, "{bad}");
        }
    }

    #[test]
    fn reports_every_bad_line() {
        let errs = parse_program("Mix(\nDry(time=\"1 h\")\nSpin(").unwrap_err();
        let lines: Vec<usize> = errs.iter().map(|d| d.line).collect();
        assert_eq!(lines, vec![1, 3]);
    }

    #[test]
    fn resolves_result_references() {
        let p = parse_program("s = Mix(a=\"1 mL\")\nSpin(sample=s, other=t, flag=True)").unwrap();
        let spin = &p.calls[1];
        assert_eq!(spin.arg("sample"), Some(&ValueLiteral::Ident("s".into())));
        assert_eq!(spin.arg("other"), Some(&ValueLiteral::Text("t".into())));
        assert_eq!(spin.arg("flag"), Some(&ValueLiteral::Text("True".into())));
        assert_eq!(spin.line, 2);
    }

    #[test]
    fn attaches_trailing_comments() {
        let p = parse_program("Mix(a=\"1 mL\")  # gently\n").unwrap();
        assert_eq!(p.calls[0].comment.as_deref(), Some("gently"));
    }

    #[test]
    fn single_call_contract() {
        let call =
            parse_single_call(r#"Centrifuge(speed="full speed", time="30 minutes", temperature="4 C")"#).unwrap();
        assert_eq!(call.args.len(), 3);
        assert_eq!(parse_single_call("").unwrap_err().code, DiagnosticCode::Syntax);
        let two = "Mix(a=\"1 mL\")\nDry(t=\"1 h\")";
        let err = parse_single_call(two).unwrap_err();
        assert_eq!(err.code, DiagnosticCode::Syntax);
        assert_eq!(err.line, 2);
    }

    #[test]
    fn parses_signatures() {
        let lib = parse_signatures("def Mix(volume, speed):\n    \"Mix the sample.\"").unwrap();
        assert_eq!(lib.len(), 1);
        assert_eq!(lib.signatures[0].params.len(), 2);
        assert_eq!(lib.signatures[0].description, "Mix the sample.");

        let lib =
            parse_signatures("def Dry(time: \"how long\", method: str) -> None:\n    pass\ndef Spin(): ...").unwrap();
        assert_eq!(lib.signatures[0].params[0].description.as_deref(), Some("how long"));
        assert_eq!(lib.signatures[0].params[1].description, None);
        assert_eq!(lib.names(), vec!["Dry", "Spin"]);
    }

    #[test]
    fn empty_signatures_have_no_functions() {
        let errs = parse_signatures("").unwrap_err();
        assert_eq!(errs[0].code, DiagnosticCode::NoFunctions);
        let errs = parse_signatures("\n# just a comment\n").unwrap_err();
        assert_eq!(errs[0].code, DiagnosticCode::NoFunctions);
    }

    #[test]
    fn duplicate_definition_flagged_on_second() {
        let errs = parse_signatures("def Mix(a):\ndef Dry(t):\ndef Mix(b):").unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].code, DiagnosticCode::Syntax);
        assert_eq!(errs[0].line, 3);
    }

    #[test]
    fn signature_syntax_errors() {
        for bad in [
            "def Mix(a, a):",
            "def Mix(a)",
            "Mix(a=1)",
            "    \"orphan doc\"",
            "def Mix(a):\n    \"one\"\n    \"two\"",
            "def Mix(a=1):",
        ] {
            let errs = parse_signatures(bad).unwrap_err();
            assert_eq!(errs[0].code, DiagnosticCode::Syntax, "{bad}");
        }
    }
}
