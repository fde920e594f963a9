//! Models under evaluation.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;
use thiserror::Error;

use crate::dataset::ProtocolRecord;
use crate::dsl::{is_identifier, render_call, render_program, FunctionLibrary, PseudoCall, PseudoProgram};
use crate::gateway::{ChatModel, GatewayError, Message, ModelHandle};

use super::derive_rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StudentError {
    #[error(transparent)]
    Model(#[from] GatewayError),
    #[error("no gold data for protocol `{0}`")]
    UnknownProtocol(String),
}

/// What a student sees when predicting the next call.
pub struct NextStepContext<'a> {
    pub protocol_id: &'a str,
    pub run: u32,
    /// Zero-based index of the call to predict.
    pub step: usize,
    pub library: &'a FunctionLibrary,
    pub prefix: &'a [PseudoCall],
    pub system: &'a str,
    pub prompt: String,
    pub request_seed: u64,
}

pub struct GenerationContext<'a> {
    pub protocol_id: &'a str,
    pub run: u32,
    pub library: &'a FunctionLibrary,
    pub system: &'a str,
    pub prompt: String,
    /// Earlier `(reply, feedback)` exchanges in this conversation.
    pub history: &'a [(String, String)],
    pub request_seed: u64,
}

pub struct RetrievalContext<'a> {
    pub protocol_id: &'a str,
    pub run: u32,
    pub candidates: &'a FunctionLibrary,
    pub system: &'a str,
    pub prompt: String,
    pub request_seed: u64,
}

/// An answerer. Replies are raw text; the harness parses them.
pub trait Student: Send + Sync {
    fn name(&self) -> String;
    fn next_call(&self, ctx: &NextStepContext<'_>) -> Result<String, StudentError>;
    fn full_program(&self, ctx: &GenerationContext<'_>) -> Result<String, StudentError>;
    fn select_functions(&self, ctx: &RetrievalContext<'_>) -> Result<Vec<String>, StudentError>;
}

/// A chat model prompted with the harness's messages.
pub struct LiveStudent<'a> {
    model: &'a dyn ChatModel,
    model_id: String,
}

impl<'a> LiveStudent<'a> {
    pub fn new(model: &'a dyn ChatModel, model_id: impl Into<String>) -> Self {
        Self {
            model,
            model_id: model_id.into(),
        }
    }

    fn ask(&self, messages: &[Message], seed: u64) -> Result<String, StudentError> {
        Ok(ModelHandle::new(self.model, &self.model_id)
            .with_seed(Some(seed))
            .ask(messages)?)
    }
}

/// Reads function names from a free-form list: one per line or comma
/// separated, with bullets, numbering, backticks and call parentheses
/// stripped. Pieces that are not a single identifier are ignored.
pub fn parse_name_list(reply: &str) -> Vec<String> {
    let mut names = Vec::new();
    for piece in reply.split(['\n', ',']) {
        let t = piece
            .trim()
            .trim_start_matches(|c: char| "-*•".contains(c) || c.is_ascii_digit() || c == '.' || c == ')')
            .trim()
            .trim_matches('`');
        let t = match t.find('(') {
            Some(i) if t.ends_with(')') => &t[..i],
            _ => t,
        };
        let ident = t.trim_end_matches(['.', ':', ';']).trim();
        // prose lines are skipped, not mined for words
        if is_identifier(ident) && !names.iter().any(|n| n == ident) {
            names.push(ident.to_string());
        }
    }
    names
}

impl Student for LiveStudent<'_> {
    fn name(&self) -> String {
        self.model_id.clone()
    }

    fn next_call(&self, ctx: &NextStepContext<'_>) -> Result<String, StudentError> {
        self.ask(
            &[Message::system(ctx.system), Message::user(&ctx.prompt)],
            ctx.request_seed,
        )
    }

    fn full_program(&self, ctx: &GenerationContext<'_>) -> Result<String, StudentError> {
        let mut messages = vec![Message::system(ctx.system), Message::user(&ctx.prompt)];
        for (reply, feedback) in ctx.history {
            messages.push(Message::assistant(reply));
            messages.push(Message::user(feedback));
        }
        self.ask(&messages, ctx.request_seed)
    }

    fn select_functions(&self, ctx: &RetrievalContext<'_>) -> Result<Vec<String>, StudentError> {
        let reply = self.ask(
            &[Message::system(ctx.system), Message::user(&ctx.prompt)],
            ctx.request_seed,
        )?;
        Ok(parse_name_list(&reply))
    }
}

/// Answers with the gold data of each protocol.
pub struct OracleStudent {
    gold: BTreeMap<String, (Vec<String>, PseudoProgram)>,
}

impl OracleStudent {
    pub fn new(records: &[ProtocolRecord]) -> Self {
        Self {
            gold: records
                .iter()
                .map(|r| {
                    let names = r.library.names().into_iter().map(str::to_string).collect();
                    (r.id.clone(), (names, r.gold_program.clone()))
                })
                .collect(),
        }
    }

    fn get(&self, id: &str) -> Result<&(Vec<String>, PseudoProgram), StudentError> {
        self.gold
            .get(id)
            .ok_or_else(|| StudentError::UnknownProtocol(id.to_string()))
    }
}

impl Student for OracleStudent {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn next_call(&self, ctx: &NextStepContext<'_>) -> Result<String, StudentError> {
        let (_, program) = self.get(ctx.protocol_id)?;
        program
            .calls
            .get(ctx.step)
            .map(render_call)
            .ok_or_else(|| StudentError::UnknownProtocol(format!("{} step {}", ctx.protocol_id, ctx.step)))
    }

    fn full_program(&self, ctx: &GenerationContext<'_>) -> Result<String, StudentError> {
        Ok(render_program(&self.get(ctx.protocol_id)?.1))
    }

    fn select_functions(&self, ctx: &RetrievalContext<'_>) -> Result<Vec<String>, StudentError> {
        Ok(self.get(ctx.protocol_id)?.0.clone())
    }
}

/// Picks uniformly among the presented functions, without arguments.
///
/// Every query draws from its own stream derived from the seed, run,
/// protocol and step, so answers do not depend on evaluation order.
pub struct RandomStudent {
    seed: u64,
}

impl RandomStudent {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }
}

impl Student for RandomStudent {
    fn name(&self) -> String {
        "random".into()
    }

    fn next_call(&self, ctx: &NextStepContext<'_>) -> Result<String, StudentError> {
        let mut rng = derive_rng(
            self.seed,
            ctx.run,
            ctx.protocol_id,
            &format!("random-next-{}", ctx.step),
        );
        Ok(ctx
            .library
            .names()
            .choose(&mut rng)
            .map(|n| format!("{n}()"))
            .unwrap_or_default())
    }

    fn full_program(&self, ctx: &GenerationContext<'_>) -> Result<String, StudentError> {
        let mut rng = derive_rng(
            self.seed,
            ctx.run,
            ctx.protocol_id,
            &format!("random-gen-{}", ctx.history.len()),
        );
        let names = ctx.library.names();
        let lines: Vec<String> = (0..names.len())
            .filter_map(|_| names.choose(&mut rng).map(|n| format!("{n}()")))
            .collect();
        Ok(lines.join("\n"))
    }

    fn select_functions(&self, ctx: &RetrievalContext<'_>) -> Result<Vec<String>, StudentError> {
        let mut rng = derive_rng(self.seed, ctx.run, ctx.protocol_id, "random-select");
        Ok(ctx
            .candidates
            .names()
            .into_iter()
            .filter(|_| rng.random_bool(0.5))
            .map(str::to_string)
            .collect())
    }
}
