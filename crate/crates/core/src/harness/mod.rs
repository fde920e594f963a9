//! Evaluation of student models on next-step prediction, full generation,
//! function retrieval and pairwise judging, repeated over seeded runs.

mod render;
pub mod student;
pub mod tasks;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::ProtocolRecord;
use crate::embedding::Embedder;
use crate::gateway::ModelHandle;
use crate::metrics::{aggregate, mean_present, MeanStd};
use crate::prompts::Templates;
use crate::retrieval::EmbeddingIndex;

pub use render::{fmt_mean_std, render_markdown};
pub use student::{LiveStudent, OracleStudent, RandomStudent, Student, StudentError};
pub use tasks::{
    generation_task, next_step_task, pairwise_judge_task, parse_choice, retrieval_task, GenerationOutcome,
    JudgeOutcome, NextStepOutcome, Preference, RetrievalOutcome, TaskError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dataset has no protocols")]
    EmptyDataset,
    #[error("report has no results to render")]
    EmptyReport,
    #[error("{0}")]
    Io(String),
}

/// Seed for one random decision, from the run seed and what it is for.
pub fn derive_seed(seed: u64, run: u32, protocol: &str, purpose: &str) -> u64 {
    let digest = Sha256::digest(format!("{seed}\u{1f}{run}\u{1f}{protocol}\u{1f}{purpose}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

pub fn derive_rng(seed: u64, run: u32, protocol: &str, purpose: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, run, protocol, purpose))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DescriptionSource {
    #[default]
    Original,
    Generated,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistractorMode {
    #[default]
    Random,
    Nearest,
}

macro_rules! lowercase_enum_str {
    ($t:ty { $($v:ident => $s:literal),* $(,)? }) => {
        impl FromStr for $t {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($s => Ok(<$t>::$v),)*
                    other => Err(format!("unknown value `{other}`")),
                }
            }
        }
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(<$t>::$v => $s,)* })
            }
        }
    };
}

lowercase_enum_str!(DescriptionSource { Original => "original", Generated => "generated" });
lowercase_enum_str!(DistractorMode { Random => "random", Nearest => "nearest" });

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskConfig {
    pub shuffle: bool,
    pub feedback: bool,
    pub description_source: DescriptionSource,
    pub distractor_mode: DistractorMode,
    /// Number of distractor protocols in the retrieval task.
    pub distractors: usize,
    pub runs: u32,
    pub rng_seed: u64,
    /// Total attempts in the generation task when feedback is on.
    pub feedback_max_rounds: u32,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            shuffle: false,
            feedback: false,
            description_source: DescriptionSource::Original,
            distractor_mode: DistractorMode::Random,
            distractors: 3,
            runs: 5,
            rng_seed: 0,
            feedback_max_rounds: 3,
        }
    }
}

impl TaskConfig {
    pub fn check(&self) -> Result<(), HarnessError> {
        if self.runs == 0 {
            return Err(HarnessError::Config("runs must be at least 1".into()));
        }
        if self.distractors == 0 {
            return Err(HarnessError::Config("distractor count must be at least 1".into()));
        }
        if self.feedback_max_rounds == 0 {
            return Err(HarnessError::Config("feedback_max_rounds must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    NextStep,
    Generation,
    Retrieval,
    Judge,
}

impl Task {
    pub fn key(self) -> &'static str {
        match self {
            Task::NextStep => "next_step",
            Task::Generation => "generation",
            Task::Retrieval => "retrieval",
            Task::Judge => "judge",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    /// The student's output could not be used.
    Unparseable,
    /// The model provider or cassette failed.
    Provider,
    /// The protocol or configuration does not allow the task.
    Precondition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub run: u32,
    pub protocol: String,
    pub task: Task,
    pub kind: FailureKind,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProtocolResult {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub next_step: Option<NextStepOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generation: Option<GenerationOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub retrieval: Option<RetrievalOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub judge: Option<JudgeOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run: u32,
    pub protocols: Vec<ProtocolResult>,
    /// Mean over protocols of each metric, keyed `task.metric`; absent
    /// values are left out of the mean.
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub model: String,
    pub tasks: Vec<Task>,
    pub config: TaskConfig,
    pub protocol_ids: Vec<String>,
    pub cassette: Option<String>,
    pub runs: Vec<RunResult>,
    /// Mean and sample std across runs of each run-level metric.
    pub summary: BTreeMap<String, MeanStd>,
    pub failures: Vec<Failure>,
}

impl RunReport {
    pub fn has_provider_failures(&self) -> bool {
        self.failures.iter().any(|f| f.kind == FailureKind::Provider)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn write(&self, path: &Path) -> Result<(), HarnessError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| HarnessError::Io(format!("{}: {e}", dir.display())))?;
        }
        fs::write(path, self.to_json()).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Io(format!("{}: malformed report: {e}", path.display())))
    }
}

pub struct SuiteInputs<'a> {
    pub records: &'a [ProtocolRecord],
    pub tasks: &'a [Task],
    pub student: &'a dyn Student,
    pub config: &'a TaskConfig,
    pub embedder: &'a dyn Embedder,
    pub templates: &'a Templates,
    /// Needed for nearest-neighbour distractors.
    pub index: Option<&'a EmbeddingIndex>,
    /// Needed for the judge task.
    pub judge: Option<ModelHandle<'a>>,
    /// Recorded in the report as given.
    pub cassette: Option<String>,
    /// Protocols evaluated at once within a run.
    pub parallelism: usize,
}

impl<'a> SuiteInputs<'a> {
    pub fn new(
        records: &'a [ProtocolRecord],
        tasks: &'a [Task],
        student: &'a dyn Student,
        config: &'a TaskConfig,
        embedder: &'a dyn Embedder,
        templates: &'a Templates,
    ) -> Self {
        Self {
            records,
            tasks,
            student,
            config,
            embedder,
            templates,
            index: None,
            judge: None,
            cassette: None,
            parallelism: 1,
        }
    }
}

fn failure(run: u32, protocol: &str, task: Task, err: &TaskError) -> Failure {
    let kind = if err.is_provider() {
        FailureKind::Provider
    } else if matches!(err, TaskError::Precondition(_)) {
        FailureKind::Precondition
    } else {
        FailureKind::Unparseable
    };
    Failure {
        run,
        protocol: protocol.to_string(),
        task,
        kind,
        message: err.to_string(),
    }
}

type Evaluated = (ProtocolResult, Vec<Failure>);

fn evaluate_protocol(inputs: &SuiteInputs<'_>, record: &ProtocolRecord, run: u32) -> Evaluated {
    let cfg = inputs.config;
    let wants = |t: Task| inputs.tasks.contains(&t);
    let mut result = ProtocolResult {
        id: record.id.clone(),
        ..Default::default()
    };
    let mut failures = Vec::new();

    if wants(Task::NextStep) {
        match next_step_task(record, inputs.student, cfg, run, inputs.embedder, inputs.templates) {
            Ok(o) => {
                if o.unparseable > 0 {
                    failures.push(Failure {
                        run,
                        protocol: record.id.clone(),
                        task: Task::NextStep,
                        kind: FailureKind::Unparseable,
                        message: format!("{} of {} predictions unparseable", o.unparseable, o.predictions.len()),
                    });
                }
                result.next_step = Some(o);
            }
            Err(e) => failures.push(failure(run, &record.id, Task::NextStep, &e)),
        }
    }
    if wants(Task::Generation) || wants(Task::Judge) {
        match generation_task(record, inputs.student, cfg, run, inputs.embedder, inputs.templates) {
            Ok(o) => {
                if o.flagged {
                    let detail: Vec<String> = o.diagnostics.iter().map(ToString::to_string).collect();
                    failures.push(Failure {
                        run,
                        protocol: record.id.clone(),
                        task: Task::Generation,
                        kind: FailureKind::Unparseable,
                        message: format!("no usable program after {} round(s): {}", o.rounds, detail.join("; ")),
                    });
                }
                if wants(Task::Judge) {
                    if let (Some(judge), Some(text)) = (inputs.judge, &o.predicted_program) {
                        let program = crate::dsl::parse_program(text).expect("canonical text parses");
                        match pairwise_judge_task(record, &program, judge, cfg, run, inputs.templates) {
                            Ok(j) => result.judge = Some(j),
                            Err(e) => failures.push(failure(run, &record.id, Task::Judge, &e)),
                        }
                    }
                }
                if wants(Task::Generation) {
                    result.generation = Some(o);
                }
            }
            Err(e) => failures.push(failure(run, &record.id, Task::Generation, &e)),
        }
    }
    if wants(Task::Retrieval) {
        match retrieval_task(
            record,
            inputs.records,
            inputs.student,
            cfg,
            run,
            inputs.index,
            inputs.embedder,
            inputs.templates,
        ) {
            Ok(o) => result.retrieval = Some(o),
            Err(e) => failures.push(failure(run, &record.id, Task::Retrieval, &e)),
        }
    }
    (result, failures)
}

/// Per-protocol metric values, keyed as in [`RunResult::metrics`].
fn protocol_metrics(p: &ProtocolResult) -> Vec<(&'static str, Option<f64>)> {
    let mut out = Vec::new();
    if let Some(n) = &p.next_step {
        let s = &n.score;
        out.extend([
            ("next_step.function_accuracy", Some(s.function_accuracy)),
            ("next_step.arg_name_precision", s.arg_name_precision),
            ("next_step.arg_name_recall", s.arg_name_recall),
            ("next_step.arg_value_bleu", s.arg_value_bleu),
            ("next_step.arg_value_embedscore", s.arg_value_embedscore),
        ]);
    }
    if let Some(g) = &p.generation {
        let s = &g.score;
        out.extend([
            ("generation.function_precision", Some(s.function_precision)),
            ("generation.function_recall", Some(s.function_recall)),
            ("generation.levenshtein_normalized", Some(s.levenshtein_normalized)),
            ("generation.arg_name_precision", s.arg_name_precision),
            ("generation.arg_name_recall", s.arg_name_recall),
            ("generation.arg_value_bleu", s.arg_value_bleu),
            ("generation.arg_value_embedscore", s.arg_value_embedscore),
        ]);
    }
    if let Some(r) = &p.retrieval {
        out.extend([
            ("retrieval.precision", Some(r.score.precision)),
            ("retrieval.recall", Some(r.score.recall)),
        ]);
    }
    out
}

fn run_metrics(protocols: &[ProtocolResult]) -> BTreeMap<String, f64> {
    let mut columns: BTreeMap<&str, Vec<Option<f64>>> = BTreeMap::new();
    for p in protocols {
        for (k, v) in protocol_metrics(p) {
            columns.entry(k).or_default().push(v);
        }
    }
    let mut out: BTreeMap<String, f64> = columns
        .into_iter()
        .filter_map(|(k, vs)| mean_present(vs).map(|m| (k.to_string(), m)))
        .collect();
    let verdicts: Vec<Preference> = protocols
        .iter()
        .filter_map(|p| p.judge.as_ref().map(|j| j.preference))
        .collect();
    let decided = verdicts.iter().filter(|v| **v != Preference::Abstain).count();
    if decided > 0 {
        let predicted = verdicts.iter().filter(|v| **v == Preference::Predicted).count();
        out.insert(
            "judge.predicted_preference_rate".into(),
            predicted as f64 / decided as f64,
        );
    }
    out
}

/// Runs every requested task on every protocol, `config.runs` times.
///
/// Failures are recorded per protocol and never stop the suite. All
/// randomness derives from `config.rng_seed`, the run index and the
/// protocol id, so results do not depend on `parallelism`.
pub fn run_suite(inputs: &SuiteInputs<'_>) -> Result<RunReport, HarnessError> {
    let cfg = inputs.config;
    cfg.check()?;
    if inputs.records.is_empty() {
        return Err(HarnessError::EmptyDataset);
    }
    if inputs.tasks.is_empty() {
        return Err(HarnessError::Config("no tasks selected".into()));
    }
    if inputs.tasks.contains(&Task::Judge) && inputs.judge.is_none() {
        return Err(HarnessError::Config("the judge task needs a judge model".into()));
    }
    if inputs.tasks.contains(&Task::Retrieval)
        && cfg.distractor_mode == DistractorMode::Nearest
        && inputs.index.is_none()
    {
        return Err(HarnessError::Config(
            "nearest distractors need an embedding index".into(),
        ));
    }
    let mut tasks = inputs.tasks.to_vec();
    tasks.sort();
    tasks.dedup();

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for run in 0..cfg.runs {
        let n = inputs.records.len();
        let slots: Mutex<Vec<Option<Evaluated>>> = Mutex::new(vec![None; n]);
        let next = AtomicUsize::new(0);
        let workers = inputs.parallelism.clamp(1, n);
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= n {
                        break;
                    }
                    let out = evaluate_protocol(inputs, &inputs.records[i], run);
                    slots.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(out);
                });
            }
        });
        let mut protocols = Vec::with_capacity(n);
        for slot in slots.into_inner().unwrap_or_else(|e| e.into_inner()) {
            let (p, f) = slot.expect("every protocol evaluated");
            protocols.push(p);
            failures.extend(f);
        }
        runs.push(RunResult {
            run,
            metrics: run_metrics(&protocols),
            protocols,
        });
    }

    let mut keys: Vec<&String> = runs.iter().flat_map(|r| r.metrics.keys()).collect();
    keys.sort();
    keys.dedup();
    let mut summary = BTreeMap::new();
    for key in keys {
        let values: Vec<f64> = runs.iter().filter_map(|r| r.metrics.get(key).copied()).collect();
        if let Ok(ms) = aggregate(&values) {
            summary.insert(key.clone(), ms);
        }
    }

    Ok(RunReport {
        model: inputs.student.name(),
        tasks,
        config: cfg.clone(),
        protocol_ids: inputs.records.iter().map(|r| r.id.clone()).collect(),
        cassette: inputs.cassette.clone(),
        runs,
        summary,
        failures,
    })
}
