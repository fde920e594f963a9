//! Protocol records: loading, filtering and corpus statistics.
//!
//! On disk a protocol is a JSON object with the fields `id`, `title`,
//! `description`, `generated_description`, `steps`, `pseudofunctions`,
//! `pseudocode`, `review_status` and `edit_count`. The last two fields hold
//! canonical DSL text. A file holds one object or an array of them.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::dsl::{
    parse_program, parse_signatures, render_library, render_program, validate, FunctionLibrary, PseudoProgram,
    ValidationPolicy,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: invalid JSON: {message}")]
    Json { path: PathBuf, message: String },
    #[error("record `{record}`: field `{field}`: {message}")]
    Schema {
        record: String,
        field: String,
        message: String,
    },
    #[error("duplicate protocol id `{0}`")]
    DuplicateId(String),
    #[error("no records to summarize")]
    EmptyCorpus,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReviewStatus {
    #[default]
    Unreviewed,
    Verified,
    Edited,
}

/// A protocol as stored, before any DSL parsing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawProtocol {
    pub id: String,
    pub title: String,
    #[serde(default)]
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_description: Option<String>,
    pub steps: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pseudofunctions: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pseudocode: Option<String>,
    #[serde(default)]
    pub review_status: ReviewStatus,
    #[serde(default)]
    pub edit_count: u32,
    #[serde(default, skip_serializing_if = "is_false")]
    pub has_linked_files: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub has_images: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub has_tables: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// A protocol with a parsed, validated gold library and program.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolRecord {
    pub id: String,
    pub title: String,
    pub description: String,
    pub generated_description: Option<String>,
    pub steps: Vec<String>,
    pub library: FunctionLibrary,
    pub gold_program: PseudoProgram,
    pub review_status: ReviewStatus,
    pub edit_count: u32,
}

impl ProtocolRecord {
    pub fn to_raw(&self) -> RawProtocol {
        RawProtocol {
            id: self.id.clone(),
            title: self.title.clone(),
            description: self.description.clone(),
            generated_description: self.generated_description.clone(),
            steps: self.steps.clone(),
            pseudofunctions: Some(render_library(&self.library)),
            pseudocode: Some(render_program(&self.gold_program)),
            review_status: self.review_status,
            edit_count: self.edit_count,
            has_linked_files: false,
            has_images: false,
            has_tables: false,
        }
    }
}

/// A record left out of a loaded dataset, with every reason found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub id: String,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub records: Vec<ProtocolRecord>,
    pub excluded: Vec<Exclusion>,
}

pub const MIN_STEPS: usize = 3;

const REQUIRED_STRINGS: [&str; 5] = ["id", "title", "description", "pseudofunctions", "pseudocode"];

fn schema(record: &str, field: impl Into<String>, message: impl Into<String>) -> DatasetError {
    DatasetError::Schema {
        record: record.to_string(),
        field: field.into(),
        message: message.into(),
    }
}

/// Checks the shape of one stored object, naming the record and the field
/// on failure. `require_dsl` demands the description and DSL fields.
fn check_shape(value: &Value, fallback_name: &str, require_dsl: bool) -> Result<(), DatasetError> {
    let Some(obj) = value.as_object() else {
        return Err(schema(fallback_name, "", "expected an object"));
    };
    let name = obj
        .get("id")
        .and_then(Value::as_str)
        .unwrap_or(fallback_name)
        .to_string();
    for field in REQUIRED_STRINGS {
        let optional = !require_dsl && matches!(field, "description" | "pseudofunctions" | "pseudocode");
        match obj.get(field) {
            Some(Value::String(_)) => {}
            None | Some(Value::Null) if optional => {}
            None => return Err(schema(&name, field, "missing")),
            Some(_) => return Err(schema(&name, field, "expected a string")),
        }
    }
    match obj.get("steps") {
        Some(Value::Array(items)) => {
            for (i, item) in items.iter().enumerate() {
                if !item.is_string() {
                    return Err(schema(&name, format!("steps[{i}]"), "expected a string"));
                }
            }
        }
        None => return Err(schema(&name, "steps", "missing")),
        Some(_) => return Err(schema(&name, "steps", "expected an array of strings")),
    }
    match obj.get("generated_description") {
        None | Some(Value::Null) | Some(Value::String(_)) => {}
        Some(_) => return Err(schema(&name, "generated_description", "expected a string or null")),
    }
    match obj.get("review_status") {
        None => {}
        Some(Value::String(s)) if ["unreviewed", "verified", "edited"].contains(&s.as_str()) => {}
        Some(_) => {
            return Err(schema(
                &name,
                "review_status",
                "expected unreviewed, verified or edited",
            ))
        }
    }
    match obj.get("edit_count") {
        None => {}
        Some(v) if v.as_u64().is_some_and(|n| n <= u64::from(u32::MAX)) => {}
        Some(_) => return Err(schema(&name, "edit_count", "expected a non-negative integer")),
    }
    for flag in ["has_linked_files", "has_images", "has_tables"] {
        match obj.get(flag) {
            None | Some(Value::Bool(_)) => {}
            Some(_) => return Err(schema(&name, flag, "expected a boolean")),
        }
    }
    Ok(())
}

fn json_files(path: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let io = |e: std::io::Error| DatasetError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    if path.is_dir() {
        let mut files = Vec::new();
        for entry in fs::read_dir(path).map_err(io)? {
            let p = entry.map_err(io)?.path();
            if p.is_file() && p.extension().is_some_and(|e| e == "json") {
                files.push(p);
            }
        }
        files.sort();
        Ok(files)
    } else if path.exists() {
        Ok(vec![path.to_path_buf()])
    } else {
        Err(DatasetError::Io {
            path: path.to_path_buf(),
            message: "no such file or directory".into(),
        })
    }
}

fn read_raw(path: &Path, require_dsl: bool) -> Result<Vec<RawProtocol>, DatasetError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for file in json_files(path)? {
        let text = fs::read_to_string(&file).map_err(|e| DatasetError::Io {
            path: file.clone(),
            message: e.to_string(),
        })?;
        let value: Value = serde_json::from_str(&text).map_err(|e| DatasetError::Json {
            path: file.clone(),
            message: e.to_string(),
        })?;
        let items = match value {
            Value::Array(items) => items,
            other => vec![other],
        };
        let stem = file
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        for (i, item) in items.into_iter().enumerate() {
            check_shape(&item, &format!("{stem}#{i}"), require_dsl)?;
            let raw: RawProtocol =
                serde_json::from_value(item).map_err(|e| schema(&format!("{stem}#{i}"), "", e.to_string()))?;
            if !seen.insert(raw.id.clone()) {
                return Err(DatasetError::DuplicateId(raw.id));
            }
            out.push(raw);
        }
    }
    Ok(out)
}

/// Reads stored protocols without parsing their DSL fields, which may be
/// absent. Used for scraped records awaiting filtering or translation.
pub fn load_raw(path: &Path) -> Result<Vec<RawProtocol>, DatasetError> {
    read_raw(path, false)
}

/// Parses and validates one stored protocol; `Err` lists every problem.
pub fn parse_record(raw: &RawProtocol, policy: &ValidationPolicy) -> Result<ProtocolRecord, Vec<String>> {
    let mut reasons = Vec::new();
    if raw.steps.len() < MIN_STEPS {
        reasons.push(FilterRule::TooFewSteps.to_string());
    }
    let library = match parse_signatures(raw.pseudofunctions.as_deref().unwrap_or("")) {
        Ok(lib) => Some(lib),
        Err(diags) => {
            reasons.extend(diags.iter().map(|d| format!("pseudofunctions: {d}")));
            None
        }
    };
    let program = match parse_program(raw.pseudocode.as_deref().unwrap_or("")) {
        Ok(p) if p.is_empty() => {
            reasons.push("pseudocode: empty program".into());
            None
        }
        Ok(p) => Some(p),
        Err(diags) => {
            reasons.extend(diags.iter().map(|d| format!("pseudocode: {d}")));
            None
        }
    };
    if let (Some(lib), Some(prog)) = (&library, &program) {
        reasons.extend(validate(prog, lib, policy).iter().map(|d| format!("pseudocode: {d}")));
    }
    if !reasons.is_empty() {
        return Err(reasons);
    }
    Ok(ProtocolRecord {
        id: raw.id.clone(),
        title: raw.title.clone(),
        description: raw.description.clone(),
        generated_description: raw.generated_description.clone(),
        steps: raw.steps.clone(),
        library: library.unwrap_or_default(),
        gold_program: program.unwrap_or_default(),
        review_status: raw.review_status,
        edit_count: raw.edit_count,
    })
}

/// Loads a dataset with the default validation policy.
pub fn load_dataset(path: &Path) -> Result<Dataset, DatasetError> {
    load_dataset_with(path, &ValidationPolicy::default())
}

/// Loads every record; records whose gold program does not validate are
/// excluded with a warning and listed in [`Dataset::excluded`].
pub fn load_dataset_with(path: &Path, policy: &ValidationPolicy) -> Result<Dataset, DatasetError> {
    let mut dataset = Dataset::default();
    for raw in read_raw(path, true)? {
        match parse_record(&raw, policy) {
            Ok(record) => dataset.records.push(record),
            Err(reasons) => {
                log::warn!("excluding protocol `{}`: {}", raw.id, reasons.join("; "));
                dataset.excluded.push(Exclusion { id: raw.id, reasons });
            }
        }
    }
    Ok(dataset)
}

/// Writes records as one JSON array, pretty-printed.
pub fn save_raw(records: &[RawProtocol], path: &Path) -> Result<(), DatasetError> {
    let text = serde_json::to_string_pretty(records).expect("records serialize");
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| DatasetError::Io {
            path: dir.to_path_buf(),
            message: e.to_string(),
        })?;
    }
    fs::write(path, text + "\n").map_err(|e| DatasetError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterRule {
    MissingDescription,
    LinkedFiles,
    Images,
    Tables,
    TooFewSteps,
}

impl fmt::Display for FilterRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FilterRule::MissingDescription => "no description",
            FilterRule::LinkedFiles => "contains linked files",
            FilterRule::Images => "contains images",
            FilterRule::Tables => "contains tables",
            FilterRule::TooFewSteps => "fewer than three steps",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub id: String,
    pub rules: Vec<FilterRule>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterOutcome {
    pub kept: Vec<RawProtocol>,
    pub rejected: Vec<Rejection>,
}

/// Rules a record breaks, in a fixed order.
pub fn violated_rules(raw: &RawProtocol) -> Vec<FilterRule> {
    let mut rules = Vec::new();
    if raw.description.trim().is_empty() {
        rules.push(FilterRule::MissingDescription);
    }
    if raw.has_linked_files {
        rules.push(FilterRule::LinkedFiles);
    }
    if raw.has_images {
        rules.push(FilterRule::Images);
    }
    if raw.has_tables {
        rules.push(FilterRule::Tables);
    }
    if raw.steps.len() < MIN_STEPS {
        rules.push(FilterRule::TooFewSteps);
    }
    rules
}

pub fn filter_protocols(raw: Vec<RawProtocol>) -> FilterOutcome {
    let mut out = FilterOutcome::default();
    for record in raw {
        let rules = violated_rules(&record);
        if rules.is_empty() {
            out.kept.push(record);
        } else {
            out.rejected.push(Rejection { id: record.id, rules });
        }
    }
    out
}

/// Counts tokens in a text.
pub trait Tokenizer {
    fn count(&self, text: &str) -> usize;
}

impl<F: Fn(&str) -> usize> Tokenizer for F {
    fn count(&self, text: &str) -> usize {
        self(text)
    }
}

/// Word runs and single punctuation marks.
#[derive(Debug, Clone, Copy, Default)]
pub struct RegexTokenizer;

impl Tokenizer for RegexTokenizer {
    fn count(&self, text: &str) -> usize {
        static RE: OnceLock<Regex> = OnceLock::new();
        RE.get_or_init(|| Regex::new(r"\w+|[^\w\s]").unwrap())
            .find_iter(text)
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub protocol_count: usize,
    pub avg_steps: f64,
    /// Tokens over all steps of a protocol.
    pub avg_protocol_tokens: f64,
    pub avg_tokens_per_step: f64,
    pub avg_tokens_original_description: f64,
    /// Over records that have a generated description; `None` if none do.
    pub avg_tokens_generated_description: Option<f64>,
    pub avg_pseudofunctions_per_protocol: f64,
    pub avg_pseudofunctions_per_step: f64,
    pub avg_pseudocode_lines: f64,
}

/// Corpus means. Per-step figures divide corpus totals by the total step
/// count, so every step weighs the same.
pub fn compute_stats(records: &[ProtocolRecord], tokenizer: &dyn Tokenizer) -> Result<DatasetStats, DatasetError> {
    if records.is_empty() {
        return Err(DatasetError::EmptyCorpus);
    }
    // Integer totals keep the result independent of record order.
    let n = records.len();
    let mut steps = 0usize;
    let mut step_tokens = 0usize;
    let mut desc_tokens = 0usize;
    let mut gen_tokens = 0usize;
    let mut gen_count = 0usize;
    let mut functions = 0usize;
    let mut lines = 0usize;
    for r in records {
        steps += r.steps.len();
        step_tokens += r.steps.iter().map(|s| tokenizer.count(s)).sum::<usize>();
        desc_tokens += tokenizer.count(&r.description);
        if let Some(g) = &r.generated_description {
            gen_tokens += tokenizer.count(g);
            gen_count += 1;
        }
        functions += r.library.len();
        lines += r.gold_program.len();
    }
    let per = |total: usize, by: usize| if by == 0 { 0.0 } else { total as f64 / by as f64 };
    Ok(DatasetStats {
        protocol_count: n,
        avg_steps: per(steps, n),
        avg_protocol_tokens: per(step_tokens, n),
        avg_tokens_per_step: per(step_tokens, steps),
        avg_tokens_original_description: per(desc_tokens, n),
        avg_tokens_generated_description: (gen_count > 0).then(|| per(gen_tokens, gen_count)),
        avg_pseudofunctions_per_protocol: per(functions, n),
        avg_pseudofunctions_per_step: per(functions, steps),
        avg_pseudocode_lines: per(lines, n),
    })
}
