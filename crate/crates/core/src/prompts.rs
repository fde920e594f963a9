//! Prompt templates with `{name}` placeholders.
//!
//! The built-in texts live in `templates/`; a directory of `<name>.txt` files
//! can replace any of them.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemplateError {
    #[error("unknown template `{0}`")]
    Unknown(String),
    #[error("template `{template}` has no value for `{{{placeholder}}}`")]
    MissingValue { template: String, placeholder: String },
    #[error("reading templates: {0}")]
    Io(String),
}

const BUILTIN: &[(&str, &str)] = &[
    ("teacher_system", include_str!("../templates/teacher_system.txt")),
    ("teacher_translate", include_str!("../templates/teacher_translate.txt")),
    ("teacher_feedback", include_str!("../templates/teacher_feedback.txt")),
    (
        "teacher_self_check",
        include_str!("../templates/teacher_self_check.txt"),
    ),
    ("describe", include_str!("../templates/describe.txt")),
    ("student_system", include_str!("../templates/student_system.txt")),
    ("next_step", include_str!("../templates/next_step.txt")),
    ("generate", include_str!("../templates/generate.txt")),
    ("generate_feedback", include_str!("../templates/generate_feedback.txt")),
    ("retrieve", include_str!("../templates/retrieve.txt")),
    ("judge", include_str!("../templates/judge.txt")),
    ("agent_system", include_str!("../templates/agent_system.txt")),
    ("agent_goal", include_str!("../templates/agent_goal.txt")),
    ("agent_results", include_str!("../templates/agent_results.txt")),
    ("agent_repair", include_str!("../templates/agent_repair.txt")),
];

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([a-z_]+)\}").unwrap())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    texts: BTreeMap<String, String>,
}

impl Default for Templates {
    fn default() -> Self {
        Self::builtin()
    }
}

impl Templates {
    pub fn builtin() -> Self {
        Self {
            texts: BUILTIN
                .iter()
                .map(|(k, v)| (k.to_string(), v.trim_end().to_string()))
                .collect(),
        }
    }

    /// Built-ins, replaced by any `<name>.txt` found in `dir`.
    pub fn with_overrides(dir: &Path) -> Result<Self, TemplateError> {
        let mut t = Self::builtin();
        for (name, _) in BUILTIN {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                let text =
                    fs::read_to_string(&path).map_err(|e| TemplateError::Io(format!("{}: {e}", path.display())))?;
                t.texts.insert(name.to_string(), text.trim_end().to_string());
            }
        }
        Ok(t)
    }

    pub fn raw(&self, name: &str) -> Result<&str, TemplateError> {
        self.texts
            .get(name)
            .map(String::as_str)
            .ok_or_else(|| TemplateError::Unknown(name.to_string()))
    }

    /// Substitutes every `{placeholder}`; values are inserted verbatim and
    /// are not themselves scanned for placeholders.
    pub fn render(&self, name: &str, vars: &[(&str, &str)]) -> Result<String, TemplateError> {
        let text = self.raw(name)?;
        let mut out = String::with_capacity(text.len());
        let mut last = 0;
        for caps in placeholder_re().captures_iter(text) {
            let whole = caps.get(0).unwrap();
            let key = &caps[1];
            let value =
                vars.iter()
                    .find(|(k, _)| *k == key)
                    .map(|(_, v)| *v)
                    .ok_or_else(|| TemplateError::MissingValue {
                        template: name.to_string(),
                        placeholder: key.to_string(),
                    })?;
            out.push_str(&text[last..whole.start()]);
            out.push_str(value);
            last = whole.end();
        }
        out.push_str(&text[last..]);
        Ok(out)
    }
}

/// Steps as a numbered list, one per line.
pub fn numbered(steps: &[String]) -> String {
    steps
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{}. {}", i + 1, s.trim()))
        .collect::<Vec<_>>()
        .join("\n")
}
