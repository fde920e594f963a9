//! Command-line front end: dataset tools, teacher translation, student
//! evaluation, retrieval index and agent, and report rendering.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use protoeval_core::dataset::{
    compute_stats, filter_protocols, load_dataset, load_raw, save_raw, ProtocolRecord, RegexTokenizer,
};
use protoeval_core::dsl::{render_library, render_program};
use protoeval_core::embedding::{EmbedError, Embedder, HashEmbedder};
use protoeval_core::gateway::{CassetteMode, Gateway, GatewayEmbedder, GatewayError, ModelHandle, OpenAiCompatible};
use protoeval_core::harness::{
    derive_seed, render_markdown, run_suite, DescriptionSource, DistractorMode, FailureKind, HarnessError, LiveStudent,
    OracleStudent, RandomStudent, RunReport, Student, SuiteInputs, Task, TaskConfig, TaskError,
};
use protoeval_core::prompts::Templates;
use protoeval_core::retrieval::{
    agent_generate, build_index, nearest, AgentConfig, AgentError, EmbeddingIndex, RetrievalError,
};
use protoeval_core::teacher::{describe_record, translate_protocol, TeacherError, TranslationPolicy};

const EXIT_FLAGGED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_PROVIDER: u8 = 3;

#[derive(Parser)]
#[command(
    name = "protoeval",
    version,
    about = "Protocol pseudocode translation and planning evaluation"
)]
struct Cli {
    #[command(flatten)]
    opts: Opts,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand. Each overrides the same key in
/// `--config`.
#[derive(Args, Debug, Default)]
struct Opts {
    /// Dataset directory or JSON file.
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    /// Output file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON file with default values for these flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Cassette mode: record, replay or passthrough.
    #[arg(long, global = true)]
    mode: Option<CassetteMode>,
    /// Cassette file (JSON lines).
    #[arg(long, global = true)]
    cassette: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    runs: Option<u32>,
    /// Present functions to the student in a random order.
    #[arg(long, global = true)]
    shuffle: bool,
    /// Give the student validator feedback in the generation task.
    #[arg(long, global = true)]
    feedback: bool,
    /// Description shown to the student: original or generated.
    #[arg(long, global = true)]
    description: Option<DescriptionSource>,
    /// Distractor selection for retrieval: random or nearest.
    #[arg(long, global = true)]
    distractors: Option<DistractorMode>,
    /// Distractor protocols in retrieval, or neighbours in index queries.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Student: live:<model>, oracle or random.
    #[arg(long, global = true)]
    student: Option<String>,
    /// Chat model for the teacher, judge and agent.
    #[arg(long, global = true)]
    model: Option<String>,
    /// Embedder: local:hash or live:<model>.
    #[arg(long, global = true)]
    embedder: Option<String>,
    /// Embedding index file.
    #[arg(long, global = true)]
    index: Option<PathBuf>,
    /// Directory of prompt templates overriding the built-in ones.
    #[arg(long, global = true)]
    templates: Option<PathBuf>,
    /// Total translation or generation attempts when feedback is used.
    #[arg(long, global = true)]
    max_rounds: Option<u32>,
    /// Protocols evaluated in parallel.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Print corpus statistics.
    Stats,
    /// Drop protocols that fail the corpus quality rules.
    Filter,
    /// Translate protocols into pseudofunctions and pseudocode.
    Translate,
    /// Write a generated description for each protocol.
    Describe,
    /// Evaluate a student model.
    Eval {
        #[command(subcommand)]
        task: EvalTask,
    },
    /// Judge generated programs against gold with a chat model.
    Judge,
    /// Embedding index over protocol descriptions.
    Index {
        #[command(subcommand)]
        action: IndexAction,
    },
    /// Search-and-compose agent.
    Agent {
        #[command(subcommand)]
        action: AgentAction,
    },
    /// Result tables.
    Report {
        #[command(subcommand)]
        action: ReportAction,
    },
}

#[derive(Subcommand, Clone, Copy)]
enum EvalTask {
    NextStep,
    Generate,
    Retrieve,
}

#[derive(Subcommand)]
enum IndexAction {
    Build,
    Query { text: String },
}

#[derive(Subcommand)]
enum AgentAction {
    Run { goal: String },
}

#[derive(Subcommand)]
enum ReportAction {
    Render {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    dataset: Option<PathBuf>,
    out: Option<PathBuf>,
    mode: Option<CassetteMode>,
    cassette: Option<PathBuf>,
    seed: Option<u64>,
    runs: Option<u32>,
    shuffle: Option<bool>,
    feedback: Option<bool>,
    description: Option<DescriptionSource>,
    distractors: Option<DistractorMode>,
    k: Option<usize>,
    student: Option<String>,
    model: Option<String>,
    embedder: Option<String>,
    index: Option<PathBuf>,
    templates: Option<PathBuf>,
    max_rounds: Option<u32>,
    jobs: Option<usize>,
}

/// Flags merged over the config file.
#[derive(Debug)]
struct Settings {
    dataset: Option<PathBuf>,
    out: Option<PathBuf>,
    mode: Option<CassetteMode>,
    cassette: Option<PathBuf>,
    seed: u64,
    runs: Option<u32>,
    shuffle: bool,
    feedback: bool,
    description: Option<DescriptionSource>,
    distractors: Option<DistractorMode>,
    k: Option<usize>,
    student: Option<String>,
    model: Option<String>,
    embedder: String,
    index: Option<PathBuf>,
    templates: Option<PathBuf>,
    max_rounds: Option<u32>,
    jobs: usize,
}

/// An error with the exit code it maps to.
#[derive(Debug)]
struct Failed {
    code: u8,
    error: anyhow::Error,
}

fn usage(error: anyhow::Error) -> Failed {
    Failed {
        code: EXIT_USAGE,
        error,
    }
}

impl<E: Into<anyhow::Error>> From<E> for Failed {
    fn from(e: E) -> Self {
        let error = e.into();
        let code = if is_provider(&error) { EXIT_PROVIDER } else { EXIT_USAGE };
        Failed { code, error }
    }
}

/// Whether an error came from a model provider or the cassette.
fn is_provider(error: &anyhow::Error) -> bool {
    error.chain().any(|e| {
        e.is::<GatewayError>()
            || e.is::<EmbedError>()
            || matches!(e.downcast_ref::<TeacherError>(), Some(TeacherError::Model(_)))
            || matches!(
                e.downcast_ref::<AgentError>(),
                Some(AgentError::Model(_) | AgentError::Retrieval(RetrievalError::Embed(_)))
            )
            || matches!(e.downcast_ref::<RetrievalError>(), Some(RetrievalError::Embed(_)))
            || e.downcast_ref::<TaskError>().is_some_and(TaskError::is_provider)
    })
}

impl Settings {
    fn resolve(opts: Opts) -> Result<Self, Failed> {
        let file = match &opts.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))
                    .map_err(usage)?;
                serde_json::from_str::<FileConfig>(&text)
                    .with_context(|| format!("parsing config {}", path.display()))
                    .map_err(usage)?
            }
            None => FileConfig::default(),
        };
        Ok(Self {
            dataset: opts.dataset.or(file.dataset),
            out: opts.out.or(file.out),
            mode: opts.mode.or(file.mode),
            cassette: opts.cassette.or(file.cassette),
            seed: opts.seed.or(file.seed).unwrap_or(0),
            runs: opts.runs.or(file.runs),
            shuffle: opts.shuffle || file.shuffle.unwrap_or(false),
            feedback: opts.feedback || file.feedback.unwrap_or(false),
            description: opts.description.or(file.description),
            distractors: opts.distractors.or(file.distractors),
            k: opts.k.or(file.k),
            student: opts.student.or(file.student),
            model: opts.model.or(file.model),
            embedder: opts.embedder.or(file.embedder).unwrap_or_else(|| "local:hash".into()),
            index: opts.index.or(file.index),
            templates: opts.templates.or(file.templates),
            max_rounds: opts.max_rounds.or(file.max_rounds),
            jobs: opts.jobs.or(file.jobs).unwrap_or(1).max(1),
        })
    }

    fn task_config(&self) -> TaskConfig {
        let d = TaskConfig::default();
        TaskConfig {
            shuffle: self.shuffle,
            feedback: self.feedback,
            description_source: self.description.unwrap_or_default(),
            distractor_mode: self.distractors.unwrap_or_default(),
            distractors: self.k.unwrap_or(d.distractors),
            runs: self.runs.unwrap_or(d.runs),
            rng_seed: self.seed,
            feedback_max_rounds: self.max_rounds.unwrap_or(d.feedback_max_rounds),
        }
    }

    fn dataset_path(&self) -> Result<&Path, Failed> {
        self.dataset
            .as_deref()
            .ok_or_else(|| usage(anyhow!("--dataset is required")))
    }

    fn out_path(&self) -> Result<&Path, Failed> {
        self.out.as_deref().ok_or_else(|| usage(anyhow!("--out is required")))
    }

    fn model_id(&self) -> Result<&str, Failed> {
        self.model
            .as_deref()
            .ok_or_else(|| usage(anyhow!("--model is required")))
    }

    fn templates(&self) -> Result<Templates, Failed> {
        match &self.templates {
            Some(dir) => Templates::with_overrides(dir).map_err(|e| usage(e.into())),
            None => Ok(Templates::builtin()),
        }
    }

    fn uses_live_models(&self, command: &Command) -> bool {
        matches!(
            command,
            Command::Translate | Command::Describe | Command::Judge | Command::Agent { .. }
        ) || self.student.as_deref().is_some_and(|s| s.starts_with("live:"))
            || self.embedder.starts_with("live:")
    }

    /// Replay when only a cassette is given, passthrough otherwise.
    fn cassette_mode(&self) -> CassetteMode {
        self.mode.unwrap_or(if self.cassette.is_some() {
            CassetteMode::Replay
        } else {
            CassetteMode::Passthrough
        })
    }

    fn gateway(&self) -> Result<Gateway, Failed> {
        let mode = self.cassette_mode();
        let mut builder = Gateway::builder(mode).max_in_flight(self.jobs.max(4));
        if let Some(path) = &self.cassette {
            builder = builder.cassette(path);
        }
        if mode != CassetteMode::Replay {
            match OpenAiCompatible::from_env() {
                Ok(http) => {
                    let http = Arc::new(http);
                    builder = builder.chat_backend(http.clone()).embed_backend(http);
                }
                Err(e) => log::warn!("no model provider configured: {e}"),
            }
        }
        builder.build().map_err(|e| Failed {
            code: EXIT_PROVIDER,
            error: e.into(),
        })
    }
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<(), Failed> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("value serializes") + "\n"
}

fn load_records(s: &Settings) -> Result<Vec<ProtocolRecord>, Failed> {
    let ds = load_dataset(s.dataset_path()?)?;
    for e in &ds.excluded {
        log::warn!("excluded `{}`: {}", e.id, e.reasons.join("; "));
    }
    if ds.records.is_empty() {
        return Err(usage(anyhow!("dataset has no usable protocols")));
    }
    Ok(ds.records)
}

fn make_embedder<'a>(choice: &str, gateway: Option<&'a Gateway>) -> Result<Box<dyn Embedder + 'a>, Failed> {
    match choice.split_once(':') {
        Some(("local", "hash")) => Ok(Box::new(HashEmbedder::default())),
        Some(("live", model)) if !model.is_empty() => {
            let gw = gateway.expect("gateway is built for live embedders");
            Ok(Box::new(GatewayEmbedder::new(gw, model)))
        }
        _ => Err(usage(anyhow!(
            "unknown embedder `{choice}`; use local:hash or live:<model>"
        ))),
    }
}

fn make_student<'a>(
    choice: &str,
    records: &[ProtocolRecord],
    seed: u64,
    gateway: Option<&'a Gateway>,
) -> Result<Box<dyn Student + 'a>, Failed> {
    match choice.split_once(':') {
        None if choice == "oracle" => Ok(Box::new(OracleStudent::new(records))),
        None if choice == "random" => Ok(Box::new(RandomStudent::new(seed))),
        Some(("live", model)) if !model.is_empty() => {
            let gw = gateway.expect("gateway is built for live students");
            Ok(Box::new(LiveStudent::new(gw, model)))
        }
        _ => Err(usage(anyhow!(
            "unknown student `{choice}`; use live:<model>, oracle or random"
        ))),
    }
}

fn load_or_build_index(
    s: &Settings,
    records: &[ProtocolRecord],
    embedder: &dyn Embedder,
) -> Result<EmbeddingIndex, Failed> {
    match &s.index {
        Some(path) => Ok(EmbeddingIndex::load(path)?),
        None => Ok(build_index(records, embedder)?),
    }
}

fn evaluate(s: &Settings, tasks: &[Task], gateway: Option<&Gateway>) -> Result<u8, Failed> {
    let records = load_records(s)?;
    let config = s.task_config();
    let templates = s.templates()?;
    let embedder = make_embedder(&s.embedder, gateway)?;
    let choice = s
        .student
        .as_deref()
        .ok_or_else(|| usage(anyhow!("--student is required")))?;
    let student = make_student(choice, &records, s.seed, gateway)?;
    let index = if tasks.contains(&Task::Retrieval) && config.distractor_mode == DistractorMode::Nearest {
        Some(load_or_build_index(s, &records, embedder.as_ref())?)
    } else {
        None
    };
    let judge_model = if tasks.contains(&Task::Judge) {
        Some(s.model_id()?)
    } else {
        None
    };

    let mut inputs = SuiteInputs::new(
        &records,
        tasks,
        student.as_ref(),
        &config,
        embedder.as_ref(),
        &templates,
    );
    inputs.index = index.as_ref();
    inputs.cassette = s.cassette.as_ref().map(|p| p.display().to_string());
    inputs.parallelism = s.jobs;
    if let (Some(model), Some(gw)) = (judge_model, gateway) {
        inputs.judge = Some(ModelHandle::new(gw, model));
    }
    let report = run_suite(&inputs).map_err(|e| usage(e.into()))?;

    match &s.out {
        Some(path) => {
            report.write(path).map_err(|e| usage(e.into()))?;
            if let Ok(md) = render_markdown(std::slice::from_ref(&report)) {
                write_or_print(Some(&path.with_extension("md")), &md)?;
            }
        }
        None => print!("{}", report.to_json()),
    }
    for f in &report.failures {
        log::warn!("run {} `{}` {}: {}", f.run, f.protocol, f.task.key(), f.message);
    }
    Ok(if report.has_provider_failures() {
        EXIT_PROVIDER
    } else if report.failures.iter().any(|f| f.kind != FailureKind::Provider) {
        EXIT_FLAGGED
    } else {
        0
    })
}

#[derive(Serialize)]
struct TranslationSummary {
    id: String,
    translated: bool,
    rounds: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    diagnostics: Vec<String>,
}

fn translate(s: &Settings, gw: &Gateway) -> Result<u8, Failed> {
    let model = s.model_id()?;
    let out = s.out_path()?;
    let templates = s.templates()?;
    let mut policy = TranslationPolicy::default();
    if let Some(n) = s.max_rounds {
        policy.max_feedback_rounds = n;
    }
    let mut kept = Vec::new();
    let mut summary = Vec::new();
    for mut raw in load_raw(s.dataset_path()?)? {
        let handle = ModelHandle::new(gw, model).with_seed(Some(derive_seed(s.seed, 0, &raw.id, "teacher")));
        match translate_protocol(&raw.title, &raw.description, &raw.steps, handle, &policy, &templates) {
            Ok(t) => {
                raw.pseudofunctions = Some(render_library(&t.library));
                raw.pseudocode = Some(render_program(&t.program));
                summary.push(TranslationSummary {
                    id: raw.id.clone(),
                    translated: true,
                    rounds: t.rounds_used as usize,
                    diagnostics: Vec::new(),
                });
                kept.push(raw);
            }
            Err(e @ (TeacherError::Model(_) | TeacherError::Template(_))) => return Err(e.into()),
            Err(e) => {
                log::warn!("`{}` not translated: {e}", raw.id);
                let rounds = match &e {
                    TeacherError::TranslationFailed { history } => history.len(),
                    _ => 0,
                };
                let diagnostics = e.final_diagnostics().iter().map(ToString::to_string).collect();
                summary.push(TranslationSummary {
                    id: raw.id.clone(),
                    translated: false,
                    rounds,
                    diagnostics,
                });
            }
        }
    }
    save_raw(&kept, out)?;
    print!("{}", to_json(&summary));
    Ok(if summary.iter().all(|t| t.translated) {
        0
    } else {
        EXIT_FLAGGED
    })
}

fn describe(s: &Settings, gw: &Gateway) -> Result<u8, Failed> {
    let model = s.model_id()?;
    let out = s.out_path()?;
    let templates = s.templates()?;
    let mut records = load_records(s)?;
    let mut flagged = 0;
    for r in &mut records {
        let handle = ModelHandle::new(gw, model).with_seed(Some(derive_seed(s.seed, 0, &r.id, "describe")));
        match describe_record(r, handle, &templates) {
            Ok(()) => {}
            Err(e @ TeacherError::EmptyDescription) => {
                log::warn!("`{}`: {e}", r.id);
                flagged += 1;
            }
            Err(e) => return Err(e.into()),
        }
    }
    let raw: Vec<_> = records.iter().map(ProtocolRecord::to_raw).collect();
    save_raw(&raw, out)?;
    Ok(if flagged > 0 { EXIT_FLAGGED } else { 0 })
}

fn run(cli: Cli) -> Result<u8, Failed> {
    let s = Settings::resolve(cli.opts)?;
    // an explicit cassette or mode is opened up front so a bad one fails fast
    let gateway = if s.uses_live_models(&cli.command) || s.mode.is_some() || s.cassette.is_some() {
        Some(s.gateway()?)
    } else {
        None
    };
    let gw = gateway.as_ref();
    let need_gw = || gw.ok_or_else(|| usage(anyhow!("no gateway")));

    match &cli.command {
        Command::Stats => {
            let records = load_records(&s)?;
            let stats = compute_stats(&records, &RegexTokenizer)?;
            write_or_print(s.out.as_deref(), &to_json(&stats))?;
            Ok(0)
        }
        Command::Filter => {
            let outcome = filter_protocols(load_raw(s.dataset_path()?)?);
            save_raw(&outcome.kept, s.out_path()?)?;
            print!(
                "{}",
                to_json(&serde_json::json!({ "kept": outcome.kept.len(), "rejected": outcome.rejected }))
            );
            Ok(0)
        }
        Command::Translate => translate(&s, need_gw()?),
        Command::Describe => describe(&s, need_gw()?),
        Command::Eval { task } => {
            let task = match task {
                EvalTask::NextStep => Task::NextStep,
                EvalTask::Generate => Task::Generation,
                EvalTask::Retrieve => Task::Retrieval,
            };
            evaluate(&s, &[task], gw)
        }
        Command::Judge => evaluate(&s, &[Task::Generation, Task::Judge], gw),
        Command::Index {
            action: IndexAction::Build,
        } => {
            let records = load_records(&s)?;
            let embedder = make_embedder(&s.embedder, gw)?;
            let index = build_index(&records, embedder.as_ref())?;
            index.save(s.out_path()?)?;
            eprintln!("indexed {} protocols, dimension {}", index.len(), index.dimension);
            Ok(0)
        }
        Command::Index {
            action: IndexAction::Query { text },
        } => {
            let path = s
                .index
                .as_deref()
                .ok_or_else(|| usage(anyhow!("--index is required")))?;
            let index = EmbeddingIndex::load(path)?;
            let embedder = make_embedder(&s.embedder, gw)?;
            let hits = nearest(&index, text, s.k.unwrap_or(3), embedder.as_ref())?;
            write_or_print(s.out.as_deref(), &to_json(&hits))?;
            Ok(0)
        }
        Command::Agent {
            action: AgentAction::Run { goal },
        } => {
            let gw = need_gw()?;
            let model = s.model_id()?;
            let records = load_records(&s)?;
            let templates = s.templates()?;
            let embedder = make_embedder(&s.embedder, Some(gw))?;
            let index = load_or_build_index(&s, &records, embedder.as_ref())?;
            let mut config = AgentConfig::default();
            if let Some(k) = s.k {
                config.results_per_search = k;
            }
            let handle = ModelHandle::new(gw, model).with_seed(Some(derive_seed(s.seed, 0, goal, "agent")));
            match agent_generate(goal, &index, &records, handle, embedder.as_ref(), &templates, config) {
                Ok(trace) => {
                    write_or_print(s.out.as_deref(), &to_json(&trace))?;
                    Ok(0)
                }
                Err(AgentError::AgentFailed { reason, trace, .. }) => {
                    write_or_print(s.out.as_deref(), &to_json(&trace))?;
                    log::warn!("agent failed: {reason}");
                    Ok(EXIT_FLAGGED)
                }
                Err(e) => Err(e.into()),
            }
        }
        Command::Report {
            action: ReportAction::Render { reports },
        } => {
            let loaded = reports
                .iter()
                .map(|p| RunReport::read(p))
                .collect::<Result<Vec<_>, HarnessError>>()
                .map_err(|e| usage(e.into()))?;
            let md = render_markdown(&loaded).map_err(|e| usage(e.into()))?;
            write_or_print(s.out.as_deref(), &md)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let level = if cli.opts.verbose {
        log::LevelFilter::Debug
    } else {
        log::LevelFilter::Warn
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failed { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn provider_errors_are_found_through_wrappers() {
        let e: anyhow::Error = TeacherError::Model(GatewayError::NoBackend("chat")).into();
        assert!(is_provider(&e));
        let e: anyhow::Error = anyhow::Error::new(GatewayError::CassetteMiss {
            fingerprint: "x".into(),
        })
        .context("eval");
        assert!(is_provider(&e));
        assert!(!is_provider(&anyhow!("bad flag")));
        assert!(!is_provider(&TeacherError::EmptySteps.into()));
    }

    #[test]
    fn flags_override_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"runs": 2, "seed": 9, "student": "random", "shuffle": true}"#).unwrap();
        let opts = Opts {
            config: Some(path.clone()),
            runs: Some(4),
            ..Default::default()
        };
        let s = Settings::resolve(opts).unwrap();
        assert_eq!(
            (s.runs, s.seed, s.student.as_deref(), s.shuffle),
            (Some(4), 9, Some("random"), true)
        );
        fs::write(&path, r#"{"rnus": 2}"#).unwrap();
        let err = Settings::resolve(Opts {
            config: Some(path),
            ..Default::default()
        })
        .unwrap_err();
        assert_eq!(err.code, EXIT_USAGE);
    }
}
