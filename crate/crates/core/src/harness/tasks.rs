//! The evaluation tasks, one protocol at a time.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::ProtocolRecord;
use crate::dsl::{
    extract_code, parse_program, parse_single_call, render_library, render_program, split_definitions, validate,
    Diagnostic, DiagnosticCode, FunctionLibrary, PseudoCall, PseudoProgram, ValidationPolicy,
};
use crate::embedding::Embedder;
use crate::gateway::{GatewayError, Message, ModelHandle};
use crate::metrics::{
    argument_name_pr, argument_value_bleu, argument_value_embedscore, argument_value_pairs, function_accuracy,
    generation_argument_pairs, levenshtein_normalized, mean_present, multiset_function_pr, retrieval_pr,
    GenerationScore, MetricError, NextStepScore, RetrievalScore,
};
use crate::prompts::{TemplateError, Templates};
use crate::retrieval::EmbeddingIndex;
use crate::teacher::format_feedback;

use super::student::{GenerationContext, NextStepContext, RetrievalContext, Student, StudentError};
use super::{derive_rng, derive_seed, DescriptionSource, DistractorMode, TaskConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaskError {
    #[error(transparent)]
    Student(#[from] StudentError),
    #[error(transparent)]
    Judge(#[from] GatewayError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("{0}")]
    Precondition(String),
}

impl TaskError {
    /// True for failures of the model provider or cassette.
    pub fn is_provider(&self) -> bool {
        matches!(self, TaskError::Judge(_) | TaskError::Student(StudentError::Model(_)))
    }
}

/// The description shown to students, by source. A missing generated
/// description falls back to the original.
pub fn description_for(record: &ProtocolRecord, source: DescriptionSource) -> &str {
    match source {
        DescriptionSource::Original => &record.description,
        DescriptionSource::Generated => record.generated_description.as_deref().unwrap_or(&record.description),
    }
}

/// The gold library in presentation order: shuffled when configured, with a
/// permutation fresh for each protocol and run.
pub fn presented_library(record: &ProtocolRecord, cfg: &TaskConfig, run: u32) -> FunctionLibrary {
    let mut lib = record.library.clone();
    if cfg.shuffle {
        lib.signatures
            .shuffle(&mut derive_rng(cfg.rng_seed, run, &record.id, "library"));
    }
    lib
}

fn check_gold(record: &ProtocolRecord) -> Result<(), TaskError> {
    if record.gold_program.is_empty() {
        return Err(TaskError::Precondition(format!(
            "protocol `{}` has an empty gold program",
            record.id
        )));
    }
    Ok(())
}

/// Reads one call from a reply: the whole code text if it is a single call,
/// else its first line that is.
pub fn parse_student_call(reply: &str) -> Option<PseudoCall> {
    let code = extract_code(reply);
    if let Ok(call) = parse_single_call(&code) {
        return Some(call);
    }
    code.lines().find_map(|l| parse_single_call(l).ok())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextStepOutcome {
    pub score: NextStepScore,
    /// Parsed predictions in canonical form; `None` where unparseable.
    pub predictions: Vec<Option<String>>,
    pub unparseable: usize,
}

pub fn next_step_task(
    record: &ProtocolRecord,
    student: &dyn Student,
    cfg: &TaskConfig,
    run: u32,
    embedder: &dyn Embedder,
    templates: &Templates,
) -> Result<NextStepOutcome, TaskError> {
    check_gold(record)?;
    let library = presented_library(record, cfg, run);
    let functions = render_library(&library);
    let description = description_for(record, cfg.description_source);
    let system = templates.raw("student_system")?;
    let gold = &record.gold_program.calls;

    let mut predicted: Vec<Option<PseudoCall>> = Vec::with_capacity(gold.len());
    for step in 0..gold.len() {
        let prefix = &gold[..step];
        let prefix_text = if prefix.is_empty() {
            "(none yet)".to_string()
        } else {
            render_program(&PseudoProgram::new(prefix.to_vec()))
        };
        let prompt = templates.render(
            "next_step",
            &[
                ("title", &record.title),
                ("description", description),
                ("functions", &functions),
                ("prefix", &prefix_text),
            ],
        )?;
        let ctx = NextStepContext {
            protocol_id: &record.id,
            run,
            step,
            library: &library,
            prefix,
            system,
            prompt,
            request_seed: derive_seed(cfg.rng_seed, run, &record.id, "request"),
        };
        predicted.push(parse_student_call(&student.next_call(&ctx)?));
    }

    let pred_names: Vec<Option<&str>> = predicted
        .iter()
        .map(|p| p.as_ref().map(|c| c.callee.as_str()))
        .collect();
    let gold_names: Vec<&str> = gold.iter().map(|c| c.callee.as_str()).collect();
    let accuracy = function_accuracy(&pred_names, &gold_names)?;

    let mut precisions = Vec::new();
    let mut recalls = Vec::new();
    let mut pairs = Vec::new();
    for (p, g) in predicted.iter().zip(gold) {
        let Some(p) = p.as_ref().filter(|p| p.callee == g.callee) else {
            continue;
        };
        let pr = argument_name_pr(p, g)?;
        precisions.push(Some(pr.precision));
        recalls.push(Some(pr.recall));
        pairs.extend(argument_value_pairs(p, g));
    }
    Ok(NextStepOutcome {
        score: NextStepScore {
            function_accuracy: accuracy,
            arg_name_precision: mean_present(precisions),
            arg_name_recall: mean_present(recalls),
            arg_value_bleu: argument_value_bleu(&pairs),
            arg_value_embedscore: argument_value_embedscore(&pairs, embedder)?,
        },
        unparseable: predicted.iter().filter(|p| p.is_none()).count(),
        predictions: predicted
            .iter()
            .map(|p| p.as_ref().map(crate::dsl::render_call))
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationOutcome {
    pub score: GenerationScore,
    pub predicted_program: Option<String>,
    pub rounds: u32,
    /// Set when no usable program was produced; the score is then the
    /// fixed failure score.
    pub flagged: bool,
    /// Diagnostics of the last attempt, if it was rejected.
    pub diagnostics: Vec<Diagnostic>,
}

/// Feedback text for students: like the teacher's, but students must stay
/// within the given functions.
pub fn student_feedback_message(code: DiagnosticCode) -> &'static str {
    match code {
        DiagnosticCode::UndefinedFunction => {
            "The pseudocode calls functions that are not in the list of available pseudofunctions. \
             Use only the functions given."
        }
        other => crate::teacher::feedback_message(other),
    }
}

/// A program from a reply; `def` blocks are ignored and an empty program is
/// an error.
pub fn parse_generated(reply: &str) -> Result<PseudoProgram, Vec<Diagnostic>> {
    let (_, body) = split_definitions(&extract_code(reply));
    let program = parse_program(&body)?;
    if program.is_empty() {
        return Err(vec![Diagnostic::new(
            DiagnosticCode::Syntax,
            1,
            "no pseudocode statements",
        )]);
    }
    Ok(program)
}

fn failure_score() -> GenerationScore {
    GenerationScore {
        function_precision: 0.0,
        function_recall: 0.0,
        levenshtein_normalized: 1.0,
        arg_name_precision: None,
        arg_name_recall: None,
        arg_value_bleu: None,
        arg_value_embedscore: None,
    }
}

pub fn score_generation(
    pred: &PseudoProgram,
    gold: &PseudoProgram,
    embedder: &dyn Embedder,
) -> Result<GenerationScore, TaskError> {
    let pr = multiset_function_pr(pred, gold);
    let ldn = levenshtein_normalized(&pred.callee_names(), &gold.callee_names())?;
    let mut precisions = Vec::new();
    let mut recalls = Vec::new();
    let mut pairs = Vec::new();
    for m in generation_argument_pairs(pred, gold) {
        let arg_pr = argument_name_pr(&pred.calls[m.pred_index], &gold.calls[m.gold_index])?;
        precisions.push(Some(arg_pr.precision));
        recalls.push(Some(arg_pr.recall));
        pairs.extend(m.value_pairs);
    }
    Ok(GenerationScore {
        function_precision: pr.precision,
        function_recall: pr.recall,
        levenshtein_normalized: ldn,
        arg_name_precision: mean_present(precisions),
        arg_name_recall: mean_present(recalls),
        arg_value_bleu: argument_value_bleu(&pairs),
        arg_value_embedscore: argument_value_embedscore(&pairs, embedder)?,
    })
}

pub fn generation_task(
    record: &ProtocolRecord,
    student: &dyn Student,
    cfg: &TaskConfig,
    run: u32,
    embedder: &dyn Embedder,
    templates: &Templates,
) -> Result<GenerationOutcome, TaskError> {
    check_gold(record)?;
    let library = presented_library(record, cfg, run);
    let prompt = templates.render(
        "generate",
        &[
            ("title", &record.title),
            ("description", description_for(record, cfg.description_source)),
            ("functions", &render_library(&library)),
        ],
    )?;
    let system = templates.raw("student_system")?;
    let attempts = if cfg.feedback {
        cfg.feedback_max_rounds.max(1)
    } else {
        1
    };
    let policy = ValidationPolicy::names_only();
    let mut history: Vec<(String, String)> = Vec::new();
    let mut accepted = None;
    let mut last_diagnostics = Vec::new();
    let mut rounds = 0;
    for round in 1..=attempts {
        rounds = round;
        let ctx = GenerationContext {
            protocol_id: &record.id,
            run,
            library: &library,
            system,
            prompt: prompt.clone(),
            history: &history,
            request_seed: derive_seed(cfg.rng_seed, run, &record.id, "request"),
        };
        let reply = student.full_program(&ctx)?;
        let diagnostics = match parse_generated(&reply) {
            Ok(program) => {
                let d = if cfg.feedback {
                    validate(&program, &library, &policy)
                } else {
                    Vec::new()
                };
                if d.is_empty() || round == attempts {
                    // out of rounds: score what we have
                    accepted = Some(program);
                    last_diagnostics = d;
                    break;
                }
                d
            }
            Err(d) => d,
        };
        if round < attempts {
            let errors = format_feedback(&diagnostics, student_feedback_message);
            history.push((reply, templates.render("generate_feedback", &[("errors", &errors)])?));
        }
        last_diagnostics = diagnostics;
    }
    match accepted {
        Some(program) => Ok(GenerationOutcome {
            score: score_generation(&program, &record.gold_program, embedder)?,
            predicted_program: Some(render_program(&program)),
            rounds,
            flagged: false,
            diagnostics: last_diagnostics,
        }),
        None => Ok(GenerationOutcome {
            score: failure_score(),
            predicted_program: None,
            rounds,
            flagged: true,
            diagnostics: last_diagnostics,
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalOutcome {
    pub score: RetrievalScore,
    pub distractor_ids: Vec<String>,
    pub candidate_count: usize,
    pub selected: Vec<String>,
    /// Selected names that were not among the candidates. They count in
    /// the precision denominator only.
    pub outside_candidates: usize,
}

fn distractors<'a>(
    record: &ProtocolRecord,
    corpus: &'a [ProtocolRecord],
    cfg: &TaskConfig,
    run: u32,
    index: Option<&EmbeddingIndex>,
    embedder: &dyn Embedder,
) -> Result<Vec<&'a ProtocolRecord>, TaskError> {
    let k = cfg.distractors;
    let mut others: Vec<&ProtocolRecord> = corpus.iter().filter(|r| r.id != record.id).collect();
    others.sort_by(|a, b| a.id.cmp(&b.id));
    if others.len() < k {
        return Err(TaskError::Precondition(format!(
            "retrieval needs {k} other protocols, corpus has {}",
            others.len()
        )));
    }
    match cfg.distractor_mode {
        DistractorMode::Random => {
            let mut rng = derive_rng(cfg.rng_seed, run, &record.id, "distractors");
            Ok(others.choose_multiple(&mut rng, k).copied().collect())
        }
        DistractorMode::Nearest => {
            let index =
                index.ok_or_else(|| TaskError::Precondition("nearest distractors need an embedding index".into()))?;
            let query = match index.entries.iter().find(|e| e.id == record.id) {
                Some(e) => e.vector.clone(),
                None => embedder
                    .embed(std::slice::from_ref(&record.description))
                    .map_err(|e| TaskError::Precondition(format!("embedding query: {e}")))?
                    .into_iter()
                    .next()
                    .unwrap_or_default(),
            };
            let hits = index
                .nearest_to_vector(&query, index.len())
                .map_err(|e| TaskError::Precondition(e.to_string()))?;
            let picked: Vec<&ProtocolRecord> = hits
                .iter()
                .filter_map(|h| others.iter().find(|r| r.id == h.id).copied())
                .take(k)
                .collect();
            if picked.len() < k {
                return Err(TaskError::Precondition(format!(
                    "index holds only {} other protocols of this corpus",
                    picked.len()
                )));
            }
            Ok(picked)
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn retrieval_task(
    record: &ProtocolRecord,
    corpus: &[ProtocolRecord],
    student: &dyn Student,
    cfg: &TaskConfig,
    run: u32,
    index: Option<&EmbeddingIndex>,
    embedder: &dyn Embedder,
    templates: &Templates,
) -> Result<RetrievalOutcome, TaskError> {
    let chosen = distractors(record, corpus, cfg, run, index, embedder)?;
    let mut candidates = record.library.clone();
    for d in &chosen {
        candidates.merge(&d.library);
    }
    candidates
        .signatures
        .shuffle(&mut derive_rng(cfg.rng_seed, run, &record.id, "candidates"));
    let prompt = templates.render(
        "retrieve",
        &[
            ("title", &record.title),
            ("description", description_for(record, cfg.description_source)),
            ("functions", &render_library(&candidates)),
        ],
    )?;
    let ctx = RetrievalContext {
        protocol_id: &record.id,
        run,
        candidates: &candidates,
        system: templates.raw("student_system")?,
        prompt,
        request_seed: derive_seed(cfg.rng_seed, run, &record.id, "request"),
    };
    let selected: BTreeSet<String> = student.select_functions(&ctx)?.into_iter().collect();
    let gold: BTreeSet<String> = record.library.names().into_iter().map(str::to_string).collect();
    Ok(RetrievalOutcome {
        score: retrieval_pr(&selected, &gold),
        distractor_ids: chosen.iter().map(|r| r.id.clone()).collect(),
        candidate_count: candidates.len(),
        outside_candidates: selected.iter().filter(|n| !candidates.contains(n)).count(),
        selected: selected.into_iter().collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preference {
    Gold,
    Predicted,
    Abstain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeOutcome {
    pub preference: Preference,
    /// Whether the gold program was shown as A.
    pub gold_first: bool,
    pub answer: String,
}

fn patterns() -> &'static (Regex, Regex) {
    static RE: OnceLock<(Regex, Regex)> = OnceLock::new();
    RE.get_or_init(|| {
        (
            Regex::new(r"(?i)\bprogram\s+([ab])\b").unwrap(),
            Regex::new(r"\b([AB])\b").unwrap(),
        )
    })
}

/// The label a judge chose, or `None` when it names neither or both.
pub fn parse_choice(answer: &str) -> Option<char> {
    let (named, bare) = patterns();
    let single = |found: BTreeSet<char>| (found.len() == 1).then(|| *found.iter().next().unwrap());
    let labelled: BTreeSet<char> = named
        .captures_iter(answer)
        .map(|c| c[1].chars().next().unwrap().to_ascii_uppercase())
        .collect();
    if let Some(c) = single(labelled) {
        return Some(c);
    }
    let letters: BTreeSet<char> = bare
        .captures_iter(answer)
        .map(|c| c[1].chars().next().unwrap())
        .collect();
    if let Some(c) = single(letters) {
        return Some(c);
    }
    match answer.trim().to_ascii_uppercase().as_str() {
        "A" => Some('A'),
        "B" => Some('B'),
        _ => None,
    }
}

/// Shows the gold and predicted programs as A and B in a seeded random
/// order and asks which fits the description better.
pub fn pairwise_judge_task(
    record: &ProtocolRecord,
    predicted: &PseudoProgram,
    judge: ModelHandle<'_>,
    cfg: &TaskConfig,
    run: u32,
    templates: &Templates,
) -> Result<JudgeOutcome, TaskError> {
    let gold_first = derive_rng(cfg.rng_seed, run, &record.id, "judge").random_bool(0.5);
    let gold_text = render_program(&record.gold_program);
    let pred_text = render_program(predicted);
    let (a, b) = if gold_first {
        (&gold_text, &pred_text)
    } else {
        (&pred_text, &gold_text)
    };
    let prompt = templates.render(
        "judge",
        &[
            ("description", description_for(record, cfg.description_source)),
            ("functions", &render_library(&record.library)),
            ("program_a", a),
            ("program_b", b),
        ],
    )?;
    let seed = derive_seed(cfg.rng_seed, run, &record.id, "request");
    let answer = judge.with_seed(Some(seed)).ask(&[Message::user(prompt)])?;
    let preference = match (parse_choice(&answer), gold_first) {
        (Some('A'), true) | (Some('B'), false) => Preference::Gold,
        (Some(_), _) => Preference::Predicted,
        (None, _) => Preference::Abstain,
    };
    Ok(JudgeOutcome {
        preference,
        gold_first,
        answer,
    })
}
