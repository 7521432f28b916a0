//! Parsers for the structured output conventions the prompts impose. Every
//! parser is total over arbitrary text: it returns structured results plus
//! a skip report instead of crashing.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::LlmError;

/// Tokens extracted from a summary paragraph by bracket convention:
/// quotes are names, round brackets identifiers, curly brackets interaction
/// types, square brackets entity types.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SummaryAnnotations {
    /// Identifier -> nearest preceding quoted name.
    pub names: BTreeMap<String, String>,
    /// Identifiers in order of first appearance.
    pub ids: Vec<String>,
    pub itypes: Vec<String>,
    pub etypes: Vec<String>,
}

fn spans(text: &str, open: char, close: char) -> Vec<(usize, String)> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (pos, ch) in text.char_indices() {
        if ch == open && start.is_none() {
            start = Some(pos);
        } else if ch == close {
            if let Some(s) = start.take() {
                let inner = &text[s + open.len_utf8()..pos];
                out.push((s, inner.trim().to_string()));
            }
        }
    }
    out
}

fn quote_spans(text: &str) -> Vec<(usize, String)> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (pos, ch) in text.char_indices() {
        if ch == '"' {
            match start.take() {
                None => start = Some(pos),
                Some(s) => out.push((s, text[s + 1..pos].trim().to_string())),
            }
        }
    }
    out
}

/// Apply the Prompt-1 bracket conventions to a summary paragraph.
pub fn parse_summary_annotations(text: &str) -> SummaryAnnotations {
    let quotes = quote_spans(text);
    let rounds = spans(text, '(', ')');
    let mut annotations = SummaryAnnotations::default();
    for (pos, id) in &rounds {
        if id.is_empty() {
            continue;
        }
        if !annotations.ids.contains(id) {
            annotations.ids.push(id.clone());
        }
        let preceding = quotes
            .iter()
            .filter(|(qpos, _)| qpos < pos)
            .next_back()
            .map(|(_, name)| name.clone());
        if let Some(name) = preceding {
            if !name.is_empty() {
                annotations.names.entry(id.clone()).or_insert(name);
            }
        }
    }
    annotations.itypes = spans(text, '{', '}')
        .into_iter()
        .map(|(_, t)| t)
        .filter(|t| !t.is_empty())
        .collect();
    annotations.etypes = spans(text, '[', ']')
        .into_iter()
        .map(|(_, t)| t)
        .filter(|t| !t.is_empty())
        .collect();
    annotations
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeDirection {
    /// Left endpoint acts on the right one.
    LR,
    /// Right endpoint acts on the left one.
    RL,
}

/// One well-formed Prompt-4 output line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeLine {
    pub left_id: String,
    pub right_id: String,
    pub actions: Vec<String>,
    pub direction: EdgeDirection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp_raw: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedLine {
    pub line_no: usize,
    pub text: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedEdges {
    pub edges: Vec<EdgeLine>,
    pub skipped: Vec<SkippedLine>,
}

pub const NO_PAIRS_SENTINEL: &str = "NO MEANINGFUL PAIRS POSSIBLE";

fn edge_line_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"^\s*\(([^,()]+),\s*([^()]+)\)\s*A:\s*\[([^\]]*)\]\s*\{D=(->|<-)\}\s*(?:\(timestamp=(.*)\))?\s*$",
        )
        .expect("edge line regex")
    })
}

/// Parse Prompt-4 output into edge entries plus a skip report. The
/// "no meaningful pairs" sentinel yields an empty list without error;
/// otherwise zero well-formed lines is a parse error carrying the raw text.
pub fn parse_edge_lines(text: &str) -> Result<ParsedEdges, LlmError> {
    let mut parsed = ParsedEdges::default();
    let mut saw_sentinel = false;
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.contains(NO_PAIRS_SENTINEL) {
            saw_sentinel = true;
            continue;
        }
        let Some(caps) = edge_line_regex().captures(trimmed) else {
            if trimmed.starts_with('(') {
                parsed.skipped.push(SkippedLine {
                    line_no: idx + 1,
                    text: trimmed.to_string(),
                    reason: "does not match the edge line format".to_string(),
                });
            }
            continue;
        };
        let actions: Vec<String> = caps[3]
            .split(',')
            .map(|a| a.trim().to_string())
            .filter(|a| !a.is_empty() && a != "...")
            .collect();
        if actions.is_empty() {
            parsed.skipped.push(SkippedLine {
                line_no: idx + 1,
                text: trimmed.to_string(),
                reason: "empty action list".to_string(),
            });
            continue;
        }
        let timestamp_raw = caps.get(5).and_then(|m| {
            let value = m.as_str().trim();
            if value.is_empty() || value == "..." {
                None
            } else {
                Some(value.to_string())
            }
        });
        parsed.edges.push(EdgeLine {
            left_id: caps[1].trim().to_string(),
            right_id: caps[2].trim().to_string(),
            actions,
            direction: if &caps[4] == "->" {
                EdgeDirection::LR
            } else {
                EdgeDirection::RL
            },
            timestamp_raw,
        });
    }
    if parsed.edges.is_empty() && !saw_sentinel {
        return Err(LlmError::Parse {
            reason: "zero well-formed edge lines".to_string(),
            raw: text.to_string(),
        });
    }
    Ok(parsed)
}

const LABEL_DELIMITER: &str = " | Type: ";

/// Parse a Prompt-6 response: split on the last " | Type: "; a "NO LABEL"
/// value under any bracket wrapping maps to `None`.
pub fn parse_label_line(text: &str) -> Result<(String, Option<String>), LlmError> {
    let pos = text.rfind(LABEL_DELIMITER).ok_or_else(|| LlmError::Parse {
        reason: format!("missing delimiter {LABEL_DELIMITER:?}"),
        raw: text.to_string(),
    })?;
    let before = &text[..pos];
    let entity = before
        .rfind('\n')
        .map(|nl| &before[nl + 1..])
        .unwrap_or(before)
        .trim()
        .to_string();
    let after = &text[pos + LABEL_DELIMITER.len()..];
    let label_line = after.lines().next().unwrap_or("").trim();
    let stripped = label_line
        .trim_matches(|c| matches!(c, '<' | '>' | '[' | ']' | '`' | '*' | '"'))
        .trim();
    if stripped.eq_ignore_ascii_case("NO LABEL") || stripped.is_empty() {
        Ok((entity, None))
    } else {
        Ok((entity, Some(stripped.to_string())))
    }
}

/// One (tactic, reasoning) pair from a Prompt-8 response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StagePair {
    pub tactic: String,
    pub reasoning: String,
    /// Set when a Stage line had no following Reasoning line.
    pub flagged: bool,
}

/// Pair consecutive "Stage:"/"Reasoning:" lines in order. Reasoning text
/// accumulates until the next Stage line.
pub fn parse_stage_reasoning(text: &str) -> Vec<StagePair> {
    let mut pairs: Vec<StagePair> = Vec::new();
    let mut current: Option<StagePair> = None;
    let mut in_reasoning = false;
    for line in text.lines() {
        let trimmed = line.trim();
        if let Some(rest) = trimmed.strip_prefix("Stage:") {
            if let Some(mut pair) = current.take() {
                pair.flagged = pair.reasoning.is_empty();
                pairs.push(pair);
            }
            current = Some(StagePair {
                tactic: rest.trim().to_string(),
                reasoning: String::new(),
                flagged: false,
            });
            in_reasoning = false;
        } else if let Some(rest) = trimmed.strip_prefix("Reasoning:") {
            if let Some(pair) = current.as_mut() {
                if !pair.reasoning.is_empty() {
                    pair.reasoning.push(' ');
                }
                pair.reasoning.push_str(rest.trim());
                in_reasoning = true;
            }
        } else if in_reasoning && !trimmed.is_empty() {
            if let Some(pair) = current.as_mut() {
                pair.reasoning.push(' ');
                pair.reasoning.push_str(trimmed);
            }
        }
    }
    if let Some(mut pair) = current.take() {
        pair.flagged = pair.reasoning.is_empty();
        pairs.push(pair);
    }
    pairs
}

/// Parse lines of the form `"KEY" = "VALUE"` or `"KEY" = NONE`, as used by
/// the entity-type and entity-name output formats. A NONE value, quoted or
/// bare, becomes `None`.
pub fn parse_quoted_assignments(text: &str) -> Vec<(String, Option<String>)> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(r#"^\s*"([^"]+)"\s*=\s*(?:"([^"]*)"|(\S+))\s*$"#).expect("assignment regex")
    });
    let mut out = Vec::new();
    for line in text.lines() {
        let Some(caps) = re.captures(line) else {
            continue;
        };
        let key = caps[1].trim().to_string();
        let value = caps
            .get(2)
            .or(caps.get(3))
            .map(|m| m.as_str().trim().to_string())
            .unwrap_or_default();
        if value.eq_ignore_ascii_case("NONE") {
            out.push((key, None));
        } else {
            out.push((key, Some(value)));
        }
    }
    out
}

/// Trim + case-fold for tactic comparisons; display casing stays elsewhere.
pub fn normalize_tactic(name: &str) -> String {
    name.trim().to_lowercase()
}
