//! Nearest-neighbour index over protocol descriptions and an agent that
//! composes new protocols from the pseudofunctions it retrieves.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::ProtocolRecord;
use crate::dsl::{
    extract_code, parse_program, render_library, render_program, split_definitions, validate, Diagnostic,
    DiagnosticCode, FunctionLibrary, PseudoProgram, ValidationPolicy,
};
use crate::embedding::{cosine, Embedder};
use crate::gateway::{GatewayError, Message, ModelHandle};
use crate::prompts::{TemplateError, Templates};
use crate::teacher::format_feedback;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RetrievalError {
    #[error("index is empty")]
    EmptyIndex,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("duplicate protocol id `{0}` in index")]
    DuplicateId(String),
    #[error("embedding failed: {0}")]
    Embed(String),
    #[error("vector for `{id}` has dimension {got}, index has {want}")]
    Dimension { id: String, got: usize, want: usize },
    #[error("zero-norm embedding for `{0}`")]
    ZeroNorm(String),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    pub description: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingIndex {
    pub dimension: usize,
    pub entries: Vec<IndexEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: String,
    pub cosine: f64,
}

fn embed_err(e: impl ToString) -> RetrievalError {
    RetrievalError::Embed(e.to_string())
}

/// One entry per record, embedding its original description.
pub fn build_index(records: &[ProtocolRecord], embedder: &dyn Embedder) -> Result<EmbeddingIndex, RetrievalError> {
    if records.is_empty() {
        return Err(RetrievalError::EmptyIndex);
    }
    let mut seen = HashSet::new();
    for r in records {
        if !seen.insert(r.id.as_str()) {
            return Err(RetrievalError::DuplicateId(r.id.clone()));
        }
    }
    let texts: Vec<String> = records.iter().map(|r| r.description.clone()).collect();
    let vectors = embedder.embed(&texts).map_err(embed_err)?;
    if vectors.len() != records.len() {
        return Err(embed_err(format!(
            "expected {} vectors, got {}",
            records.len(),
            vectors.len()
        )));
    }
    let dimension = vectors[0].len();
    let mut entries = Vec::with_capacity(records.len());
    for (r, vector) in records.iter().zip(vectors) {
        if vector.len() != dimension {
            return Err(RetrievalError::Dimension {
                id: r.id.clone(),
                got: vector.len(),
                want: dimension,
            });
        }
        entries.push(IndexEntry {
            id: r.id.clone(),
            description: r.description.clone(),
            vector,
        });
    }
    Ok(EmbeddingIndex { dimension, entries })
}

impl EmbeddingIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn save(&self, path: &Path) -> Result<(), RetrievalError> {
        let text = serde_json::to_string_pretty(self).expect("index serializes");
        fs::write(path, text + "\n").map_err(|e| RetrievalError::Io(format!("{}: {e}", path.display())))
    }

    /// Loads and checks that ids are unique and dimensions agree.
    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        let text = fs::read_to_string(path).map_err(|e| RetrievalError::Io(format!("{}: {e}", path.display())))?;
        let index: Self = serde_json::from_str(&text)
            .map_err(|e| RetrievalError::Io(format!("{}: malformed index: {e}", path.display())))?;
        let mut seen = HashSet::new();
        for e in &index.entries {
            if !seen.insert(e.id.as_str()) {
                return Err(RetrievalError::DuplicateId(e.id.clone()));
            }
            if e.vector.len() != index.dimension {
                return Err(RetrievalError::Dimension {
                    id: e.id.clone(),
                    got: e.vector.len(),
                    want: index.dimension,
                });
            }
        }
        Ok(index)
    }

    /// Top `k` entries by cosine to `query`, best first; ties go to the
    /// smaller id.
    pub fn nearest_to_vector(&self, query: &[f64], k: usize) -> Result<Vec<Neighbor>, RetrievalError> {
        if k == 0 {
            return Err(RetrievalError::ZeroK);
        }
        if self.entries.is_empty() {
            return Err(RetrievalError::EmptyIndex);
        }
        if query.len() != self.dimension {
            return Err(RetrievalError::Dimension {
                id: "<query>".into(),
                got: query.len(),
                want: self.dimension,
            });
        }
        let mut scored = Vec::with_capacity(self.entries.len());
        for e in &self.entries {
            let c = cosine(query, &e.vector).ok_or_else(|| {
                let zero_query = query.iter().all(|x| *x == 0.0);
                RetrievalError::ZeroNorm(if zero_query { "<query>".into() } else { e.id.clone() })
            })?;
            scored.push(Neighbor {
                id: e.id.clone(),
                cosine: c,
            });
        }
        scored.sort_by(|a, b| b.cosine.total_cmp(&a.cosine).then_with(|| a.id.cmp(&b.id)));
        scored.truncate(k);
        Ok(scored)
    }
}

pub fn nearest(
    index: &EmbeddingIndex,
    query: &str,
    k: usize,
    embedder: &dyn Embedder,
) -> Result<Vec<Neighbor>, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::ZeroK);
    }
    if index.is_empty() {
        return Err(RetrievalError::EmptyIndex);
    }
    let v = embedder.embed(&[query.to_string()]).map_err(embed_err)?;
    let v = v.into_iter().next().ok_or_else(|| embed_err("no vector returned"))?;
    index.nearest_to_vector(&v, k)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("goal text is empty")]
    EmptyGoal,
    #[error("tool budget must be at least 1")]
    ZeroBudget,
    #[error("agent failed: {reason}")]
    AgentFailed {
        reason: String,
        diagnostics: Vec<Diagnostic>,
        trace: Box<AgentTrace>,
    },
    #[error(transparent)]
    Model(#[from] GatewayError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tool", rename_all = "snake_case")]
pub enum ToolCall {
    Search { query: String },
    Final,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentStep {
    pub thought: String,
    pub call: ToolCall,
    pub result: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTrace {
    pub goal: String,
    pub steps: Vec<AgentStep>,
    /// Canonical DSL text of the accepted program; empty on failure.
    pub final_program: String,
    /// Canonical signature text of the union of retrieved libraries.
    pub library: String,
    pub source_ids: Vec<String>,
    pub repaired: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentConfig {
    pub max_tool_calls: usize,
    /// Protocols returned per search.
    pub results_per_search: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            max_tool_calls: 5,
            results_per_search: 3,
        }
    }
}

enum Reply {
    Search { thought: String, query: String },
    Final { thought: String, code: String },
}

/// Finds the first `SEARCH:` or `FINAL:` marker line. A reply with neither
/// is read as a final answer in full.
fn parse_reply(reply: &str) -> Reply {
    let mut thought = Vec::new();
    for (i, line) in reply.lines().enumerate() {
        let t = line.trim_start();
        let upper = t.to_ascii_uppercase();
        if let Some(rest) = upper.strip_prefix("SEARCH:").map(|_| &t[7..]) {
            return Reply::Search {
                thought: thought.join("\n").trim().to_string(),
                query: rest.trim().to_string(),
            };
        }
        if upper.starts_with("FINAL:") {
            let after: Vec<&str> = std::iter::once(&t[6..]).chain(reply.lines().skip(i + 1)).collect();
            return Reply::Final {
                thought: thought.join("\n").trim().to_string(),
                code: extract_code(&after.join("\n")),
            };
        }
        thought.push(line);
    }
    Reply::Final {
        thought: String::new(),
        code: extract_code(reply),
    }
}

fn summarize(records: &[&ProtocolRecord], hits: &[Neighbor]) -> String {
    let mut out = Vec::new();
    for (n, hit) in hits.iter().enumerate() {
        let Some(r) = records.iter().find(|r| r.id == hit.id) else {
            continue;
        };
        out.push(format!(
            "{}. [{}] {} (similarity {:.3})\n{}\nPseudofunctions:\n{}",
            n + 1,
            r.id,
            r.title,
            hit.cosine,
            r.description,
            render_library(&r.library)
        ));
    }
    if out.is_empty() {
        "No matching protocols.".into()
    } else {
        out.join("\n\n")
    }
}

fn check_final(code: &str, library: &FunctionLibrary) -> Result<PseudoProgram, Vec<Diagnostic>> {
    let (_, body) = split_definitions(code);
    let program = parse_program(&body)?;
    if program.is_empty() {
        return Err(vec![Diagnostic::new(
            DiagnosticCode::Syntax,
            1,
            "no pseudocode statements",
        )]);
    }
    let diagnostics = validate(&program, library, &ValidationPolicy::names_only());
    if diagnostics.is_empty() {
        Ok(program)
    } else {
        Err(diagnostics)
    }
}

fn agent_message(code: DiagnosticCode) -> &'static str {
    match code {
        DiagnosticCode::UndefinedFunction => "The pseudocode calls functions that did not appear in any search result.",
        DiagnosticCode::NoFunctions => "No functions have been retrieved yet; search before writing pseudocode.",
        other => crate::teacher::feedback_message(other),
    }
}

/// Runs the search-then-write loop. Searches beyond `max_tool_calls` and a
/// final program that is still invalid after one repair round both fail.
pub fn agent_generate(
    goal: &str,
    index: &EmbeddingIndex,
    records: &[ProtocolRecord],
    chat: ModelHandle<'_>,
    embedder: &dyn Embedder,
    templates: &Templates,
    config: AgentConfig,
) -> Result<AgentTrace, AgentError> {
    if goal.trim().is_empty() {
        return Err(AgentError::EmptyGoal);
    }
    if config.max_tool_calls == 0 {
        return Err(AgentError::ZeroBudget);
    }
    let by_ref: Vec<&ProtocolRecord> = records.iter().collect();
    let mut trace = AgentTrace {
        goal: goal.to_string(),
        steps: Vec::new(),
        final_program: String::new(),
        library: String::new(),
        source_ids: Vec::new(),
        repaired: false,
    };
    let mut library = FunctionLibrary::default();
    let mut messages = vec![
        Message::system(templates.raw("agent_system")?),
        Message::user(templates.render("agent_goal", &[("goal", goal.trim())])?),
    ];
    let mut searches = 0;
    loop {
        let reply = chat.ask(&messages)?;
        messages.push(Message::assistant(reply.clone()));
        match parse_reply(&reply) {
            Reply::Search { thought, query } => {
                if searches == config.max_tool_calls {
                    trace.library = render_library(&library);
                    return Err(AgentError::AgentFailed {
                        reason: format!("tool budget of {} search(es) exhausted", config.max_tool_calls),
                        diagnostics: Vec::new(),
                        trace: Box::new(trace),
                    });
                }
                searches += 1;
                let hits = nearest(index, &query, config.results_per_search, embedder)?;
                for hit in &hits {
                    if let Some(r) = records.iter().find(|r| r.id == hit.id) {
                        if !trace.source_ids.contains(&r.id) {
                            trace.source_ids.push(r.id.clone());
                            library.merge(&r.library);
                        }
                    }
                }
                let result = summarize(&by_ref, &hits);
                messages.push(Message::user(
                    templates.render("agent_results", &[("results", &result)])?,
                ));
                trace.steps.push(AgentStep {
                    thought,
                    call: ToolCall::Search { query },
                    result,
                });
            }
            Reply::Final { thought, code } => {
                trace.library = render_library(&library);
                match check_final(&code, &library) {
                    Ok(program) => {
                        trace.final_program = render_program(&program);
                        trace.steps.push(AgentStep {
                            thought,
                            call: ToolCall::Final,
                            result: "accepted".into(),
                        });
                        return Ok(trace);
                    }
                    Err(diagnostics) => {
                        let errors = format_feedback(&diagnostics, agent_message);
                        trace.steps.push(AgentStep {
                            thought,
                            call: ToolCall::Final,
                            result: errors.clone(),
                        });
                        if trace.repaired {
                            return Err(AgentError::AgentFailed {
                                reason: "final program invalid after repair".into(),
                                diagnostics,
                                trace: Box::new(trace),
                            });
                        }
                        trace.repaired = true;
                        messages.push(Message::user(templates.render("agent_repair", &[("errors", &errors)])?));
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::dataset::ReviewStatus;
    use crate::dsl::{parse_program, parse_signatures};
    use crate::embedding::{EmbedError, HashEmbedder};
    use crate::gateway::scripted::ScriptedChat;
    use crate::gateway::{CassetteMode, Gateway};

    /// Looks vectors up by exact text.
    struct Table(Vec<(&'static str, Vec<f64>)>);

    impl Embedder for Table {
        fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
            texts
                .iter()
                .map(|t| {
                    self.0
                        .iter()
                        .find(|(k, _)| k == t)
                        .map(|(_, v)| v.clone())
                        .ok_or_else(|| EmbedError(format!("no vector for {t}")))
                })
                .collect()
        }
    }

    fn rec(id: &str, description: &str, defs: &str, program: &str) -> ProtocolRecord {
        ProtocolRecord {
            id: id.into(),
            title: format!("Title {id}"),
            description: description.into(),
            generated_description: None,
            steps: vec!["a".into(), "b".into(), "c".into()],
            library: parse_signatures(defs).unwrap(),
            gold_program: parse_program(program).unwrap(),
            review_status: ReviewStatus::Verified,
            edit_count: 0,
        }
    }

    fn corpus() -> Vec<ProtocolRecord> {
        vec![
            rec(
                "p1",
                "pellet dna",
                "def Spin(speed):\ndef Dry(time):",
                "Spin(speed=\"1 rpm\")",
            ),
            rec("p2", "pour gel", "def Pour(volume):", "Pour(volume=\"1 mL\")"),
            rec(
                "p3",
                "grow cells",
                "def Grow(time):\ndef Spin(speed, time):",
                "Grow(time=\"1 h\")",
            ),
        ]
    }

    fn stub() -> Table {
        Table(vec![
            ("pellet dna", vec![1.0, 0.0, 0.0]),
            ("pour gel", vec![0.0, 1.0, 0.0]),
            ("grow cells", vec![1.0, 1.0, 0.0]),
            ("q", vec![2.0, 1.0, 0.0]),
            ("tie", vec![1.0, 1.0, 1.0]),
        ])
    }

    #[test]
    fn builds_and_rejects_duplicates() {
        let idx = build_index(&corpus(), &stub()).unwrap();
        assert_eq!(idx.len(), 3);
        assert_eq!(idx.dimension, 3);
        assert_eq!(idx, build_index(&corpus(), &stub()).unwrap());
        let mut dup = corpus();
        dup[2].id = "p1".into();
        assert_eq!(
            build_index(&dup, &stub()),
            Err(RetrievalError::DuplicateId("p1".into()))
        );
        assert_eq!(build_index(&[], &stub()), Err(RetrievalError::EmptyIndex));
    }

    #[test]
    fn hand_computed_cosine_order() {
        let idx = build_index(&corpus(), &stub()).unwrap();
        // q = (2,1,0): p1 2/sqrt5, p3 3/sqrt10, p2 1/sqrt5
        let hits = nearest(&idx, "q", 3, &stub()).unwrap();
        let ids: Vec<&str> = hits.iter().map(|h| h.id.as_str()).collect();
        assert_eq!(ids, ["p3", "p1", "p2"]);
        assert!((hits[0].cosine - 3.0 / 10f64.sqrt()).abs() < 1e-12);
        assert!((hits[1].cosine - 2.0 / 5f64.sqrt()).abs() < 1e-12);
        assert!((hits[2].cosine - 1.0 / 5f64.sqrt()).abs() < 1e-12);
        // (1,1,1) is equally close to p1 and p2: the smaller id wins
        let tie = nearest(&idx, "tie", 2, &stub()).unwrap();
        assert_eq!(tie[0].id, "p3");
        assert_eq!(tie[1].id, "p1");
        assert_eq!(tie[1].cosine, nearest(&idx, "tie", 3, &stub()).unwrap()[2].cosine);
        assert_eq!(nearest(&idx, "q", 100, &stub()).unwrap().len(), 3);
        assert_eq!(nearest(&idx, "q", 0, &stub()), Err(RetrievalError::ZeroK));
    }

    #[test]
    fn stored_description_is_its_own_nearest() {
        let e = HashEmbedder::default();
        let idx = build_index(&corpus(), &e).unwrap();
        let hits = nearest(&idx, "pour gel", 1, &e).unwrap();
        assert_eq!(hits[0].id, "p2");
        assert_eq!(hits[0].cosine, 1.0);
    }

    #[test]
    fn persists_as_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.json");
        let idx = build_index(&corpus(), &stub()).unwrap();
        idx.save(&path).unwrap();
        assert_eq!(EmbeddingIndex::load(&path).unwrap(), idx);
    }

    fn run_agent(replies: &[&str], budget: usize) -> Result<AgentTrace, AgentError> {
        let gw = Gateway::builder(CassetteMode::Passthrough)
            .chat_backend(Arc::new(ScriptedChat::new(replies.iter().copied())))
            .build()
            .unwrap();
        let records = corpus();
        let e = stub();
        let idx = build_index(&records, &e).unwrap();
        let config = AgentConfig {
            max_tool_calls: budget,
            results_per_search: 1,
        };
        agent_generate(
            "Make a pellet",
            &idx,
            &records,
            ModelHandle::new(&gw, "m"),
            &e,
            &Templates::builtin(),
            config,
        )
    }

    #[test]
    fn one_search_then_valid_program() {
        let final_reply = "I have what I need.\nFINAL:\n```\nSpin(speed=\"13000 rpm\")\nDry(time=\"10 min\")\n```";
        let trace = run_agent(&["Need centrifuge steps.\nSEARCH: pellet dna", final_reply], 5).unwrap();
        assert_eq!(trace.steps.len(), 2);
        assert_eq!(
            trace.steps[0].call,
            ToolCall::Search {
                query: "pellet dna".into()
            }
        );
        assert_eq!(trace.steps[0].thought, "Need centrifuge steps.");
        assert!(trace.steps[0].result.contains("[p1]"));
        assert_eq!(trace.source_ids, ["p1"]);
        assert_eq!(trace.final_program, "Spin(speed=\"13000 rpm\")\nDry(time=\"10 min\")");
        assert!(!trace.repaired);
        let lib = parse_signatures(&trace.library).unwrap();
        let prog = parse_program(&trace.final_program).unwrap();
        assert!(validate(&prog, &lib, &ValidationPolicy::names_only()).is_empty());
    }

    #[test]
    fn unretrieved_function_fails_after_one_repair() {
        let bad = "FINAL:\n```\nPour(volume=\"1 mL\")\n```";
        let err = run_agent(&["SEARCH: pellet dna", bad, bad], 5).unwrap_err();
        let AgentError::AgentFailed { diagnostics, trace, .. } = err else {
            panic!()
        };
        assert_eq!(diagnostics[0].code, DiagnosticCode::UndefinedFunction);
        assert!(trace.repaired);
        assert_eq!(trace.steps.len(), 3);
    }

    #[test]
    fn repair_round_can_succeed() {
        let bad = "FINAL:\n```\nPour(volume=\"1 mL\")\n```";
        let good = "FINAL:\n```\nSpin(speed=\"1 rpm\")\n```";
        let trace = run_agent(&["SEARCH: pellet dna", bad, good], 5).unwrap();
        assert!(trace.repaired);
    }

    #[test]
    fn budget_and_preconditions() {
        let err = run_agent(&["SEARCH: q", "SEARCH: q"], 1).unwrap_err();
        assert!(matches!(err, AgentError::AgentFailed { ref reason, .. } if reason.contains("budget")));
        assert_eq!(run_agent(&[], 0).unwrap_err(), AgentError::ZeroBudget);
        let gw = Gateway::builder(CassetteMode::Passthrough).build().unwrap();
        let idx = build_index(&corpus(), &stub()).unwrap();
        let err = agent_generate(
            " ",
            &idx,
            &corpus(),
            ModelHandle::new(&gw, "m"),
            &stub(),
            &Templates::builtin(),
            AgentConfig::default(),
        );
        assert_eq!(err.unwrap_err(), AgentError::EmptyGoal);
    }

    #[test]
    fn reply_markers_are_case_insensitive() {
        assert!(matches!(parse_reply("hmm\n  search: gel"), Reply::Search { ref query, .. } if query == "gel"));
        assert!(
            matches!(parse_reply("Final: Spin(speed=\"1 rpm\")"), Reply::Final { ref code, .. } if code == "Spin(speed=\"1 rpm\")")
        );
        assert!(matches!(parse_reply("Spin(speed=\"1 rpm\")"), Reply::Final { .. }));
    }
}
