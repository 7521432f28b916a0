//! Graph assistant: linearize attack graphs into edge sentences, flag
//! entities the model does not recognize, inject functional context from
//! the functionality database, generate a narrative summary with APT-tactic
//! mappings, and judge tactic reasoning with a three-judge majority.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::AttackGraph;
use crate::enrich::FunctionalityDb;
use crate::llm::{
    chat_complete, normalize_tactic, parse_stage_reasoning, ChatProvider, ChatRequest, TemplateId,
};

#[derive(Debug, Error)]
pub enum AssistError {
    #[error("empty attack graph")]
    EmptyGraph,
    #[error("summary response missing \"Summary:\"; raw response: {0}")]
    MissingSummary(String),
    #[error("catalog parse failure at line {line}: {cause}")]
    BadCatalog { line: usize, cause: String },
    #[error("tactic {0} not present in the catalog")]
    UnknownTactic(String),
    #[error("provider failure: {0}")]
    Provider(String),
}

/// Attack graph rendered as temporally ordered edge sentences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearizedGraph {
    pub lines: Vec<String>,
    /// Display names in first-appearance order.
    pub entity_names: Vec<String>,
}

impl LinearizedGraph {
    pub fn text(&self) -> String {
        self.lines.join("\n")
    }
}

/// Render edges in time order, collapsing consecutive runs of the same
/// (source, destination, interaction) into one line with an `(xN)` count.
pub fn linearize(attack_graph: &AttackGraph, display: &BTreeMap<String, String>) -> Result<LinearizedGraph, AssistError> {
    if attack_graph.node_keys.is_empty() || attack_graph.edges.is_empty() {
        return Err(AssistError::EmptyGraph);
    }
    let name_of = |key: &str| -> String {
        display.get(key).cloned().unwrap_or_else(|| key.to_string())
    };
    let mut edges = attack_graph.edges.clone();
    edges.sort_by_key(|e| e.order_key());

    let mut entity_names: Vec<String> = Vec::new();
    let mut note = |name: &str| {
        if !entity_names.iter().any(|n| n == name) {
            entity_names.push(name.to_string());
        }
    };

    let mut lines: Vec<String> = Vec::new();
    let mut run: Option<(String, String, String, u64)> = None;
    let flush = |run: &mut Option<(String, String, String, u64)>, lines: &mut Vec<String>| {
        if let Some((src, itype, dst, count)) = run.take() {
            if count >= 2 {
                lines.push(format!("{src} --{itype}--> {dst} (x{count})"));
            } else {
                lines.push(format!("{src} --{itype}--> {dst}"));
            }
        }
    };
    for edge in &edges {
        let src = name_of(&edge.src_key);
        let dst = name_of(&edge.dst_key);
        note(&src);
        note(&dst);
        match run.as_mut() {
            Some((rsrc, ritype, rdst, count))
                if *rsrc == src && *ritype == edge.itype && *rdst == dst =>
            {
                *count += edge.count;
            }
            _ => {
                flush(&mut run, &mut lines);
                run = Some((src, edge.itype.clone(), dst, edge.count));
            }
        }
    }
    flush(&mut run, &mut lines);
    Ok(LinearizedGraph { lines, entity_names })
}

/// Display-name map for an attack graph: lexicographically smallest member
/// of each node's names set, falling back to the key.
pub fn display_names(
    attack_graph: &AttackGraph,
    graph: &crate::graph::ProvenanceGraph,
) -> BTreeMap<String, String> {
    attack_graph
        .node_keys
        .iter()
        .map(|key| {
            let display = graph
                .nodes
                .get(key)
                .map(|n| n.display_name().to_string())
                .unwrap_or_else(|| key.clone());
            (key.clone(), display)
        })
        .collect()
}

/// One Prompt-7 call per entity; a trimmed case-folded "NO" (or anything
/// other than "YES", including provider failures) marks it unknown.
pub fn flag_unknown_entities(
    provider: &dyn ChatProvider,
    entity_names: &[String],
) -> BTreeSet<String> {
    let mut unknown = BTreeSet::new();
    for name in entity_names {
        let request = ChatRequest::new(TemplateId::P7).bind("Entity Name", name.as_str());
        match chat_complete(provider, &request) {
            Ok(answer) => {
                let folded = answer.trim().to_uppercase();
                if folded != "YES" {
                    if folded != "NO" {
                        log::warn!("non-YES/NO answer {answer:?} for {name}; treating as unknown");
                    }
                    unknown.insert(name.clone());
                }
            }
            Err(e) => {
                log::warn!("unknown-entity check failed for {name}: {e}");
                unknown.insert(name.clone());
            }
        }
    }
    unknown
}

/// Pair unknown entities with their functionality-database labels. Entities
/// absent from the database are flagged with "unknown functionality".
pub fn inject_context(
    unknown: &BTreeSet<String>,
    f_db: &FunctionalityDb,
) -> Vec<(String, String)> {
    unknown
        .iter()
        .map(|name| {
            let key = crate::enrich::normalize_entity_name(name);
            let label = f_db
                .get(&key)
                .or_else(|| f_db.get(name))
                .map(|e| e.label.clone())
                .unwrap_or_else(|| {
                    log::warn!("no functionality entry for unknown entity {name}");
                    "unknown functionality".to_string()
                });
            (name.clone(), label)
        })
        .collect()
}

/// Catalog of candidate tactics and their reference descriptions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TacticCatalog {
    pub entries: Vec<(String, String)>,
}

impl TacticCatalog {
    /// The catalog bundled with the crate.
    pub fn bundled() -> Self {
        Self::parse(include_str!("../assets/tactics.tsv")).expect("bundled catalog parses")
    }

    /// Parse a `name<TAB>description` file.
    pub fn parse(text: &str) -> Result<Self, AssistError> {
        let mut entries = Vec::new();
        let mut seen = BTreeSet::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (name, description) = line.split_once('\t').ok_or(AssistError::BadCatalog {
                line: idx + 1,
                cause: "missing tab separator".to_string(),
            })?;
            let folded = normalize_tactic(name);
            if !seen.insert(folded) {
                return Err(AssistError::BadCatalog {
                    line: idx + 1,
                    cause: format!("duplicate tactic {name:?}"),
                });
            }
            entries.push((name.trim().to_string(), description.trim().to_string()));
        }
        Ok(TacticCatalog { entries })
    }

    pub fn load(path: &Path) -> Result<Self, AssistError> {
        let text = std::fs::read_to_string(path).map_err(|e| AssistError::BadCatalog {
            line: 0,
            cause: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn contains(&self, tactic: &str) -> bool {
        let folded = normalize_tactic(tactic);
        self.entries.iter().any(|(n, _)| normalize_tactic(n) == folded)
    }

    pub fn description(&self, tactic: &str) -> Option<&str> {
        let folded = normalize_tactic(tactic);
        self.entries
            .iter()
            .find(|(n, _)| normalize_tactic(n) == folded)
            .map(|(_, d)| d.as_str())
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|(n, _)| n.as_str()).collect()
    }
}

/// Narrative plus (tactic, reasoning) pairs for one attack graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackSummary {
    pub summary_text: String,
    pub tactics: Vec<(String, String)>,
    pub context_injected: Vec<(String, String)>,
}

/// Single Prompt-8 call binding the edge lines, context tuples, malicious
/// list, and candidate tactic names. Tactics outside the catalog are
/// dropped with a warning.
pub fn summarize_attack(
    provider: &dyn ChatProvider,
    linearized: &LinearizedGraph,
    context: &[(String, String)],
    malicious: &[String],
    catalog: &TacticCatalog,
) -> Result<AttackSummary, AssistError> {
    if linearized.lines.is_empty() {
        return Err(AssistError::EmptyGraph);
    }
    let metadata = if context.is_empty() {
        "(none)".to_string()
    } else {
        context
            .iter()
            .map(|(e, l)| format!("({e}, {l})"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    let request = ChatRequest::new(TemplateId::P8)
        .bind("Edge Lines", linearized.text())
        .bind("Malicious Nodes", malicious.join(", "))
        .bind("Node Metadata", metadata)
        .bind("Tactic List", catalog.names().join(", "));
    let response =
        chat_complete(provider, &request).map_err(|e| AssistError::Provider(e.to_string()))?;

    let summary_start = response
        .find("Summary:")
        .ok_or_else(|| AssistError::MissingSummary(response.clone()))?;
    let after = &response[summary_start + "Summary:".len()..];
    let summary_end = after.find("Stage:").unwrap_or(after.len());
    let summary_text = after[..summary_end].trim().to_string();

    let mut tactics = Vec::new();
    for pair in parse_stage_reasoning(&response[summary_start..]) {
        if catalog.contains(&pair.tactic) {
            tactics.push((pair.tactic, pair.reasoning));
        } else {
            log::warn!("dropping off-catalog tactic {:?}", pair.tactic);
        }
    }
    Ok(AttackSummary {
        summary_text,
        tactics,
        context_injected: context.to_vec(),
    })
}

/// Three-judge majority on one (tactic, reasoning) pair. Judge failures
/// count as a NO vote with a warning.
pub fn judge_tactic(
    judges: &[&dyn ChatProvider; 3],
    tactic: &str,
    reasoning: &str,
    catalog: &TacticCatalog,
) -> Result<bool, AssistError> {
    let description = catalog
        .description(tactic)
        .ok_or_else(|| AssistError::UnknownTactic(tactic.to_string()))?;
    let mut yes_votes = 0u32;
    for judge in judges {
        let request = ChatRequest::new(TemplateId::P9)
            .bind("Model Reasoning", reasoning)
            .bind("MITRE Reference", description);
        match chat_complete(*judge, &request) {
            Ok(answer) => {
                if answer.trim().eq_ignore_ascii_case("YES") {
                    yes_votes += 1;
                }
            }
            Err(e) => log::warn!("judge failed for tactic {tactic}: {e}"),
        }
    }
    Ok(yes_votes >= 2)
}

/// Mean of judge majorities over the summary's tactics; None when the
/// summary mapped no tactics (undefined, not zero).
pub fn tactic_correctness(
    summary: &AttackSummary,
    judges: &[&dyn ChatProvider; 3],
    catalog: &TacticCatalog,
) -> Result<Option<f64>, AssistError> {
    if summary.tactics.is_empty() {
        return Ok(None);
    }
    let mut accepted = 0usize;
    for (tactic, reasoning) in &summary.tactics {
        if judge_tactic(judges, tactic, reasoning, catalog)? {
            accepted += 1;
        }
    }
    Ok(Some(accepted as f64 / summary.tactics.len() as f64))
}
