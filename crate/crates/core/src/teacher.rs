//! Protocol translation with an automatic feedback loop, and machine-written
//! descriptions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::ProtocolRecord;
use crate::dsl::{
    extract_code, parse_program, parse_signatures, split_definitions, validate, Diagnostic, DiagnosticCode,
    FunctionLibrary, PseudoProgram, ValidationPolicy,
};
use crate::gateway::{GatewayError, Message, ModelHandle};
use crate::prompts::{numbered, TemplateError, Templates};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TeacherError {
    #[error("protocol has no steps")]
    EmptySteps,
    #[error("translation failed after {} round(s)", history.len())]
    TranslationFailed { history: Vec<Vec<Diagnostic>> },
    #[error("model returned an empty description")]
    EmptyDescription,
    #[error(transparent)]
    Model(#[from] GatewayError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

impl TeacherError {
    /// Diagnostics of the last round, for a failed translation.
    pub fn final_diagnostics(&self) -> &[Diagnostic] {
        match self {
            TeacherError::TranslationFailed { history } => history.last().map_or(&[], Vec::as_slice),
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TranslationPolicy {
    /// Total attempts, including the first.
    pub max_feedback_rounds: u32,
    pub validation: ValidationPolicy,
    pub include_self_check: bool,
}

impl Default for TranslationPolicy {
    fn default() -> Self {
        Self {
            max_feedback_rounds: 3,
            validation: ValidationPolicy::default(),
            include_self_check: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum SelfCheck {
    Skipped,
    Accepted,
    /// The revision did not validate; the earlier answer was kept.
    Reverted {
        diagnostics: Vec<Diagnostic>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranslationResult {
    pub library: FunctionLibrary,
    pub program: PseudoProgram,
    pub rounds_used: u32,
    /// One list per round; the last is always empty.
    pub diagnostics_history: Vec<Vec<Diagnostic>>,
    pub self_check: SelfCheck,
}

/// The fixed feedback text for each diagnostic code.
pub fn feedback_message(code: DiagnosticCode) -> &'static str {
    match code {
        DiagnosticCode::Syntax => {
            "The code is not valid pseudocode. Write one call per line as `Function(arg=\"value\")` \
             or `name = Function(arg=\"value\")` with keyword arguments only, and define each \
             function as `def Name(param):`."
        }
        DiagnosticCode::UndefinedFunction => {
            "The pseudocode calls functions that are not defined. Define every function you call \
             with a `def` line."
        }
        DiagnosticCode::NoFunctions => {
            "No pseudofunctions are defined. Start with a `def` line for every function the \
             protocol needs."
        }
        DiagnosticCode::NoArgs => {
            "Some pseudofunctions or calls have no arguments. Give every function parameters and \
             pass them as keyword arguments."
        }
        DiagnosticCode::MissingUnits => {
            "Some numerical values have no units. Write measured quantities as strings with units, \
             such as \"10 mL\" or \"30 min\"."
        }
    }
}

/// One bullet per distinct code, in code order, with the affected lines.
pub fn format_feedback(diagnostics: &[Diagnostic], message: fn(DiagnosticCode) -> &'static str) -> String {
    let mut bullets = Vec::new();
    for code in DiagnosticCode::ALL {
        let mut lines: Vec<usize> = diagnostics.iter().filter(|d| d.code == code).map(|d| d.line).collect();
        if lines.is_empty() {
            continue;
        }
        lines.sort_unstable();
        lines.dedup();
        let lines: Vec<String> = lines.iter().map(ToString::to_string).collect();
        let label = if lines.len() == 1 { "line" } else { "lines" };
        bullets.push(format!("- {} ({label} {})", message(code), lines.join(", ")));
    }
    bullets.join("\n")
}

/// Reads a library and program out of a teacher reply.
pub fn parse_translation(
    reply: &str,
    policy: &ValidationPolicy,
) -> Result<(FunctionLibrary, PseudoProgram), Vec<Diagnostic>> {
    let code = extract_code(reply);
    let (defs, body) = split_definitions(&code);
    let mut diagnostics = Vec::new();
    let library = match parse_signatures(&defs) {
        Ok(lib) => lib,
        // leave the empty-library report to the validator
        Err(d) if d.iter().all(|d| d.code == DiagnosticCode::NoFunctions) => FunctionLibrary::default(),
        Err(d) => {
            diagnostics.extend(d);
            FunctionLibrary::default()
        }
    };
    let program = match parse_program(&body) {
        Ok(p) if p.is_empty() => {
            diagnostics.push(Diagnostic::new(DiagnosticCode::Syntax, 1, "no pseudocode statements"));
            p
        }
        Ok(p) => p,
        Err(d) => {
            diagnostics.extend(d);
            PseudoProgram::default()
        }
    };
    if diagnostics.is_empty() {
        diagnostics = validate(&program, &library, policy);
    }
    if diagnostics.is_empty() {
        Ok((library, program))
    } else {
        Err(diagnostics)
    }
}

pub fn translate_protocol(
    title: &str,
    description: &str,
    steps: &[String],
    chat: ModelHandle<'_>,
    policy: &TranslationPolicy,
    templates: &Templates,
) -> Result<TranslationResult, TeacherError> {
    if steps.is_empty() {
        return Err(TeacherError::EmptySteps);
    }
    let prompt = templates.render(
        "teacher_translate",
        &[
            ("title", title),
            ("description", description),
            ("steps", &numbered(steps)),
        ],
    )?;
    let mut messages = vec![Message::system(templates.raw("teacher_system")?), Message::user(prompt)];
    let max_rounds = policy.max_feedback_rounds.max(1);
    let mut history = Vec::new();
    let mut accepted = None;
    for round in 1..=max_rounds {
        let reply = chat.ask(&messages)?;
        match parse_translation(&reply, &policy.validation) {
            Ok(parsed) => {
                history.push(Vec::new());
                messages.push(Message::assistant(reply));
                accepted = Some(parsed);
                break;
            }
            Err(diagnostics) => {
                log::debug!("round {round}: {} diagnostic(s)", diagnostics.len());
                let errors = format_feedback(&diagnostics, feedback_message);
                history.push(diagnostics);
                if round == max_rounds {
                    return Err(TeacherError::TranslationFailed { history });
                }
                messages.push(Message::assistant(reply));
                messages.push(Message::user(
                    templates.render("teacher_feedback", &[("errors", &errors)])?,
                ));
            }
        }
    }
    let (mut library, mut program) = accepted.expect("loop either accepts or returns");
    let rounds_used = history.len() as u32;

    let self_check = if policy.include_self_check {
        messages.push(Message::user(templates.raw("teacher_self_check")?));
        let reply = chat.ask(&messages)?;
        match parse_translation(&reply, &policy.validation) {
            Ok((lib, prog)) => {
                library = lib;
                program = prog;
                SelfCheck::Accepted
            }
            Err(diagnostics) => SelfCheck::Reverted { diagnostics },
        }
    } else {
        SelfCheck::Skipped
    };

    Ok(TranslationResult {
        library,
        program,
        rounds_used,
        diagnostics_history: history,
        self_check,
    })
}

pub fn generate_description(
    steps: &[String],
    chat: ModelHandle<'_>,
    templates: &Templates,
) -> Result<String, TeacherError> {
    if steps.is_empty() {
        return Err(TeacherError::EmptySteps);
    }
    let prompt = templates.render("describe", &[("steps", &numbered(steps))])?;
    let reply = chat.ask(&[Message::user(prompt)])?;
    let text = reply.trim();
    if text.is_empty() {
        return Err(TeacherError::EmptyDescription);
    }
    Ok(text.to_string())
}

/// Fills `generated_description`; the record is untouched on error.
pub fn describe_record(
    record: &mut ProtocolRecord,
    chat: ModelHandle<'_>,
    templates: &Templates,
) -> Result<(), TeacherError> {
    let text = generate_description(&record.steps, chat, templates)?;
    record.generated_description = Some(text);
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::dataset::ReviewStatus;
    use crate::dsl::parse_signatures;
    use crate::gateway::scripted::ScriptedChat;
    use crate::gateway::{CassetteMode, ChatModel, Gateway};

    const VALID: &str =
        "```\ndef Spin(speed, time):\n    \"Centrifuge.\"\nSpin(speed=\"500 rpm\", time=\"5 min\")\n```";
    const NO_UNITS: &str = "```\ndef Spin(speed, time):\n    \"Centrifuge.\"\nSpin(speed=\"500 rpm\", time=5)\n```";

    fn gateway(replies: &[&str]) -> (Gateway, Arc<ScriptedChat>) {
        let backend = Arc::new(ScriptedChat::new(replies.iter().copied()));
        let gw = Gateway::builder(CassetteMode::Passthrough)
            .chat_backend(backend.clone())
            .build()
            .unwrap();
        (gw, backend)
    }

    fn steps() -> Vec<String> {
        vec!["Spin the tube at 500 rpm for 5 minutes.".into()]
    }

    fn translate(gw: &Gateway, policy: &TranslationPolicy) -> Result<TranslationResult, TeacherError> {
        translate_protocol(
            "T",
            "D",
            &steps(),
            ModelHandle::new(gw, "teacher"),
            policy,
            &Templates::builtin(),
        )
    }

    fn no_self_check(rounds: u32) -> TranslationPolicy {
        TranslationPolicy {
            max_feedback_rounds: rounds,
            include_self_check: false,
            ..Default::default()
        }
    }

    #[test]
    fn valid_first_try() {
        let (gw, backend) = gateway(&[VALID]);
        let r = translate(&gw, &no_self_check(3)).unwrap();
        assert_eq!(r.rounds_used, 1);
        assert_eq!(r.diagnostics_history, vec![Vec::<Diagnostic>::new()]);
        assert_eq!(r.self_check, SelfCheck::Skipped);
        assert_eq!(r.program.len(), 1);
        assert_eq!(backend.calls(), 1);
    }

    #[test]
    fn missing_units_then_fixed() {
        let (gw, _) = gateway(&[NO_UNITS, VALID]);
        let r = translate(&gw, &no_self_check(3)).unwrap();
        assert_eq!(r.rounds_used, 2);
        assert_eq!(r.diagnostics_history.len(), 2);
        let codes: Vec<DiagnosticCode> = r.diagnostics_history[0].iter().map(|d| d.code).collect();
        assert_eq!(codes, [DiagnosticCode::MissingUnits]);
        assert!(r.diagnostics_history[1].is_empty());
    }

    #[test]
    fn feedback_uses_fixed_messages() {
        let backend = Arc::new(ScriptedChat::from_fn(|req, n| {
            if n == 0 {
                return Ok(NO_UNITS.to_string());
            }
            let last = &req.messages.last().unwrap().content;
            assert!(last.contains(feedback_message(DiagnosticCode::MissingUnits)));
            assert!(last.contains("(line 3)"));
            Ok(VALID.to_string())
        }));
        let gw = Gateway::builder(CassetteMode::Passthrough)
            .chat_backend(backend)
            .build()
            .unwrap();
        assert_eq!(translate(&gw, &no_self_check(3)).unwrap().rounds_used, 2);
    }

    #[test]
    fn always_invalid_fails_after_max_rounds() {
        let backend = Arc::new(ScriptedChat::constant("Spin(speed=5)"));
        let gw = Gateway::builder(CassetteMode::Passthrough)
            .chat_backend(backend.clone())
            .build()
            .unwrap();
        let err = translate(&gw, &no_self_check(3)).unwrap_err();
        let TeacherError::TranslationFailed { history } = &err else {
            panic!("{err:?}")
        };
        assert_eq!(history.len(), 3);
        assert!(history.iter().all(|h| !h.is_empty()));
        assert_eq!(err.final_diagnostics()[0].code, DiagnosticCode::NoFunctions);
        assert_eq!(backend.calls(), 3);
    }

    #[test]
    fn self_check_accepts_valid_revision_and_reverts_invalid_one() {
        let revised = VALID.replace("5 min", "10 min");
        let (gw, _) = gateway(&[VALID, &revised]);
        let r = translate(&gw, &TranslationPolicy::default()).unwrap();
        assert_eq!(r.self_check, SelfCheck::Accepted);
        assert_eq!(r.rounds_used, 1);
        assert_eq!(r.program.calls[0].arg("time").unwrap().as_text(), "10 min");

        let (gw, _) = gateway(&[VALID, "Mix("]);
        let r = translate(&gw, &TranslationPolicy::default()).unwrap();
        assert!(matches!(r.self_check, SelfCheck::Reverted { .. }));
        assert_eq!(r.program.calls[0].arg("time").unwrap().as_text(), "5 min");
        assert!(validate(&r.program, &r.library, &ValidationPolicy::default()).is_empty());
    }

    #[test]
    fn parse_translation_reports_each_problem() {
        let p = ValidationPolicy::default();
        let codes =
            |r: &str| -> Vec<DiagnosticCode> { parse_translation(r, &p).unwrap_err().iter().map(|d| d.code).collect() };
        assert_eq!(codes("Spin(speed=\"1 rpm\")"), [DiagnosticCode::NoFunctions]);
        assert_eq!(
            codes("def Spin(speed):\nMix(speed=\"1 rpm\")"),
            [DiagnosticCode::UndefinedFunction]
        );
        assert_eq!(codes("def Spin(speed):\nSpin()"), [DiagnosticCode::NoArgs]);
        assert_eq!(codes("def Spin(speed):\nSpin(speed=1"), [DiagnosticCode::Syntax]);
        assert_eq!(codes("def Spin(speed):\n"), [DiagnosticCode::Syntax]);
    }

    #[test]
    fn format_feedback_groups_by_code() {
        let d = vec![
            Diagnostic::new(DiagnosticCode::MissingUnits, 4, "x"),
            Diagnostic::new(DiagnosticCode::Syntax, 2, "y"),
            Diagnostic::new(DiagnosticCode::MissingUnits, 3, "z"),
        ];
        let text = format_feedback(&d, feedback_message);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("- The code is not valid"));
        assert!(lines[1].ends_with("(lines 3, 4)"));
    }

    fn record() -> ProtocolRecord {
        ProtocolRecord {
            id: "p".into(),
            title: "T".into(),
            description: "Original.".into(),
            generated_description: None,
            steps: steps(),
            library: parse_signatures("def Spin(speed):").unwrap(),
            gold_program: PseudoProgram::default(),
            review_status: ReviewStatus::Unreviewed,
            edit_count: 0,
        }
    }

    #[test]
    fn description_is_stored_verbatim_and_never_replaces_original() {
        let (gw, _) = gateway(&["  Pellets cells.  "]);
        let mut r = record();
        describe_record(&mut r, ModelHandle::new(&gw, "m"), &Templates::builtin()).unwrap();
        assert_eq!(r.generated_description.as_deref(), Some("Pellets cells."));
        assert_eq!(r.description, "Original.");

        let (gw, _) = gateway(&["   "]);
        let mut r = record();
        let before = r.clone();
        let err = describe_record(&mut r, ModelHandle::new(&gw, "m"), &Templates::builtin()).unwrap_err();
        assert_eq!(err, TeacherError::EmptyDescription);
        assert_eq!(r, before);
        assert_eq!(
            generate_description(&[], ModelHandle::new(&gw as &dyn ChatModel, "m"), &Templates::builtin()),
            Err(TeacherError::EmptySteps)
        );
    }
}
