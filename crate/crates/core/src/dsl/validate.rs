use serde::{Deserialize, Serialize};

use super::{Diagnostic, DiagnosticCode, FunctionLibrary, PseudoProgram};

/// Which checks `validate` runs and how units are judged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationPolicy {
    pub require_args: bool,
    pub check_units: bool,
    /// Parameter names whose values are dimensionless counts.
    pub unitless_params: Vec<String>,
    /// Unit tokens. A parameter named with one as its last `_` segment
    /// (`volume_ml`, `time_min`) carries its unit in the name.
    pub unit_tokens: Vec<String>,
}

impl Default for ValidationPolicy {
    fn default() -> Self {
        Self {
            require_args: true,
            check_units: true,
            unitless_params: ["count", "cycles", "replicates", "n"]
                .into_iter()
                .map(String::from)
                .collect(),
            unit_tokens: [
                "l", "ml", "ul", "nl", "g", "mg", "ug", "ng", "kg", "m", "mm", "um", "nm", "cm", "mol", "mmol", "umol",
                "nmol", "molar", "s", "sec", "secs", "seconds", "min", "mins", "minutes", "h", "hr", "hrs", "hours",
                "days", "c", "degc", "celsius", "k", "rpm", "rcf", "xg", "v", "kv", "mv", "w", "pct", "percent", "bp",
                "kb",
            ]
            .into_iter()
            .map(String::from)
            .collect(),
        }
    }
}

impl ValidationPolicy {
    /// Only undefined functions (plus the empty-library check); syntax is
    /// checked by the parser before this runs.
    pub fn names_only() -> Self {
        Self {
            require_args: false,
            check_units: false,
            ..Self::default()
        }
    }

    fn exempt_from_units(&self, param: &str) -> bool {
        let lower = param.to_ascii_lowercase();
        if self.unitless_params.iter().any(|p| p.eq_ignore_ascii_case(&lower)) {
            return true;
        }
        match lower.rsplit_once('_') {
            Some((_, suffix)) => self.unit_tokens.iter().any(|u| u.eq_ignore_ascii_case(suffix)),
            None => false,
        }
    }
}

/// Checks a parsed program against its library.
///
/// Returns one diagnostic per violation, in program order. An empty library
/// yields a single `E_NO_FUNCTIONS` in place of per-call undefined-function
/// errors.
pub fn validate(program: &PseudoProgram, library: &FunctionLibrary, policy: &ValidationPolicy) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if library.is_empty() {
        out.push(Diagnostic::new(
            DiagnosticCode::NoFunctions,
            1,
            "no pseudofunctions are defined",
        ));
    }
    for call in &program.calls {
        if !library.is_empty() && !library.contains(&call.callee) {
            out.push(Diagnostic::new(
                DiagnosticCode::UndefinedFunction,
                call.line,
                format!("`{}` is not an admissible pseudofunction", call.callee),
            ));
        }
        if policy.require_args && call.args.is_empty() {
            out.push(Diagnostic::new(
                DiagnosticCode::NoArgs,
                call.line,
                format!("call to `{}` has no arguments", call.callee),
            ));
        }
        if policy.check_units {
            for arg in &call.args {
                if arg.value.contains_bare_number() && !policy.exempt_from_units(&arg.name) {
                    out.push(Diagnostic::new(
                        DiagnosticCode::MissingUnits,
                        call.line,
                        format!("numeric value for `{}` in `{}` has no unit", arg.name, call.callee),
                    ));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::{parse_program, FunctionSignature};
    use super::*;

    fn lib(names: &[&str]) -> FunctionLibrary {
        FunctionLibrary::new(names.iter().map(|n| FunctionSignature::new(*n, &["x"], "")).collect())
    }

    fn codes(src: &str, library: &FunctionLibrary) -> Vec<DiagnosticCode> {
        let p = parse_program(src).unwrap();
        validate(&p, library, &ValidationPolicy::default())
            .into_iter()
            .map(|d| d.code)
            .collect()
    }

    #[test]
    fn undefined_function() {
        assert_eq!(
            codes(r#"Foo(x="1 mL")"#, &lib(&["Mix"])),
            vec![DiagnosticCode::UndefinedFunction]
        );
    }

    #[test]
    fn missing_units() {
        assert_eq!(
            codes("Incubate(time=30)", &lib(&["Incubate"])),
            vec![DiagnosticCode::MissingUnits]
        );
        assert_eq!(
            codes(r#"Incubate(time="30")"#, &lib(&["Incubate"])),
            vec![DiagnosticCode::MissingUnits]
        );
        assert_eq!(
            codes("Incubate(time=[30, \"5 min\"])", &lib(&["Incubate"])),
            vec![DiagnosticCode::MissingUnits]
        );
    }

    #[test]
    fn unit_exemptions() {
        let l = lib(&["Repeat"]);
        assert!(codes("Repeat(cycles=3, N=2)", &l).is_empty());
        assert!(codes("Repeat(time_min=30, volume_uL=5)", &l).is_empty());
        assert_eq!(codes("Repeat(time_of=30)", &l), vec![DiagnosticCode::MissingUnits]);
    }

    #[test]
    fn no_args_and_no_functions() {
        assert_eq!(codes("Dry()", &lib(&["Dry"])), vec![DiagnosticCode::NoArgs]);
        assert_eq!(
            codes(r#"Dry(time="5 min")"#, &FunctionLibrary::default()),
            vec![DiagnosticCode::NoFunctions]
        );
        let p = parse_program("Dry()\nIncubate(time=30)").unwrap();
        assert!(validate(&p, &lib(&["Dry", "Incubate"]), &ValidationPolicy::names_only()).is_empty());
    }

    #[test]
    fn clean_program() {
        let l = lib(&["Mix", "Spin"]);
        assert!(codes("s = Mix(x=\"10 mL\")\nSpin(x=s, speed=\"full speed\")", &l).is_empty());
    }

    #[test]
    fn diagnostics_carry_call_lines() {
        let p = parse_program("Mix(x=\"1 mL\")\n\nFoo(x=\"1 mL\")").unwrap();
        let diags = validate(&p, &lib(&["Mix"]), &ValidationPolicy::default());
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].line, 3);
    }
}
