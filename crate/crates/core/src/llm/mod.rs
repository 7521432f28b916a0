//! Chat-provider abstraction: the nine prompt templates, structured-output
//! parsers, an OpenAI-compatible HTTP client, and a deterministic scripted
//! responder used for offline runs and tests.

mod parse;
mod provider;
mod template;

pub use parse::{
    normalize_tactic, parse_edge_lines, parse_label_line, parse_quoted_assignments,
    parse_stage_reasoning, parse_summary_annotations, EdgeDirection, EdgeLine, ParsedEdges,
    SkippedLine, StagePair, SummaryAnnotations, NO_PAIRS_SENTINEL,
};
pub use provider::{
    chat_complete, ChatProvider, ChatProviderConfig, HttpChatProvider, ScriptAction,
    ScriptRule, ScriptedResponder,
};
pub use template::{
    default_temperature, render_prompt, template_placeholders, template_text, ChatRequest,
    InContextExample, TemplateId,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("missing binding for placeholder <{0}>")]
    MissingBinding(String),
    #[error("transport failure after {attempts} attempt(s): {cause}")]
    Transport { attempts: u32, cause: String },
    #[error("protocol error: status {status}")]
    Protocol { status: u16 },
    #[error("malformed endpoint response: {0}")]
    MalformedResponse(String),
    #[error("scripted failure: {0}")]
    ScriptedFailure(String),
    #[error("unmatched prompt: {0}")]
    UnmatchedPrompt(String),
    #[error("parse error: {reason}; raw text: {raw}")]
    Parse { reason: String, raw: String },
}
