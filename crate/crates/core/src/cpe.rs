//! Candidate provenance extractor: drives the chat provider through log
//! summarization, entity-type extraction, entity extraction, and edge
//! extraction with direction majority voting, then assembles provenance
//! records into the candidate provenance database.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::CandidateLogSet;
use crate::jsonl::{self, JsonlError};
use crate::llm::{
    chat_complete, parse_edge_lines, parse_quoted_assignments, ChatProvider, ChatRequest,
    EdgeDirection, InContextExample, LlmError, TemplateId,
};
use crate::types::{parse_timestamp, ProvenanceRecord, RecordOrigin, TimestampFormat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CpeStage {
    Summarize,
    EntityTypes,
    Entities,
    Edges,
    Assemble,
}

impl std::fmt::Display for CpeStage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            CpeStage::Summarize => "summarize",
            CpeStage::EntityTypes => "entity_types",
            CpeStage::Entities => "entities",
            CpeStage::Edges => "edges",
            CpeStage::Assemble => "assemble",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum CpeError {
    #[error("{stage} failed for log {log_id}: {cause}")]
    Stage {
        stage: CpeStage,
        log_id: String,
        cause: String,
    },
    #[error(transparent)]
    Llm(#[from] LlmError),
}

#[derive(Debug, Clone)]
pub struct CpeConfig {
    /// Platform hint bound into prompts when a log carries no source tag.
    pub platform: String,
    /// Odd number of direction-voting runs.
    pub n_votes: usize,
    pub pool_capacity: usize,
    pub pool_sample: usize,
    pub rng_seed: u64,
    pub ts_formats: Vec<TimestampFormat>,
}

impl Default for CpeConfig {
    fn default() -> Self {
        CpeConfig {
            platform: "generic system".to_string(),
            n_votes: 7,
            pool_capacity: 8,
            pool_sample: 2,
            rng_seed: 0,
            ts_formats: vec![TimestampFormat::Iso8601, TimestampFormat::UnixSeconds],
        }
    }
}

/// Bounded pool of prior (input, output) exchanges per template, sampled as
/// in-context examples. Seeded reservoir; deterministic given call order.
pub struct InContextPool {
    capacity: usize,
    sample_size: usize,
    rng: ChaCha8Rng,
    entries: BTreeMap<TemplateId, Vec<InContextExample>>,
    seen: BTreeMap<TemplateId, u64>,
}

impl InContextPool {
    pub fn new(capacity: usize, sample_size: usize, seed: u64) -> Self {
        InContextPool {
            capacity,
            sample_size,
            rng: ChaCha8Rng::seed_from_u64(seed),
            entries: BTreeMap::new(),
            seen: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, template: TemplateId, example: InContextExample) {
        let seen = self.seen.entry(template).or_insert(0);
        *seen += 1;
        let slot = self.entries.entry(template).or_default();
        if slot.len() < self.capacity {
            slot.push(example);
        } else {
            let j = self.rng.random_range(0..*seen);
            if (j as usize) < self.capacity {
                slot[j as usize] = example;
            }
        }
    }

    pub fn sample(&mut self, template: TemplateId) -> Vec<InContextExample> {
        let Some(slot) = self.entries.get(&template) else {
            return Vec::new();
        };
        let take = self.sample_size.min(slot.len());
        let picked = rand::seq::index::sample(&mut self.rng, slot.len(), take);
        let mut indices: Vec<usize> = picked.into_iter().collect();
        indices.sort_unstable();
        indices.into_iter().map(|i| slot[i].clone()).collect()
    }
}

/// One directed edge extracted from a log before record assembly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CpeEdge {
    pub sid: String,
    pub did: String,
    pub itype: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_raw: Option<String>,
}

/// Everything the extractor learned about one log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CpeOutput {
    pub log_id: String,
    pub summary: String,
    /// Identifier -> coarse type; None preserves an explicit NONE.
    pub entity_types: BTreeMap<String, Option<String>>,
    /// Identifier -> name; None preserves an explicit NONE.
    pub entity_names: BTreeMap<String, Option<String>>,
    pub pairs: Vec<(String, String)>,
    pub edges: Vec<CpeEdge>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipEntry {
    pub log_id: String,
    pub stage: CpeStage,
    pub cause: String,
}

/// The candidate provenance database: log id -> its provenance records.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateProvenanceDb {
    pub entries: BTreeMap<String, Vec<ProvenanceRecord>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CpeDbLine {
    log_id: String,
    records: Vec<ProvenanceRecord>,
}

impl CandidateProvenanceDb {
    pub fn save(&self, path: &Path) -> Result<usize, JsonlError> {
        jsonl::write_jsonl(
            path,
            self.entries.iter().map(|(log_id, records)| CpeDbLine {
                log_id: log_id.clone(),
                records: records.clone(),
            }),
        )
    }

    pub fn load(path: &Path) -> Result<Self, JsonlError> {
        let lines: Vec<CpeDbLine> = jsonl::read_jsonl(path)?;
        let mut db = CandidateProvenanceDb::default();
        for line in lines {
            db.entries.insert(line.log_id, line.records);
        }
        Ok(db)
    }

    pub fn all_records(&self) -> impl Iterator<Item = &ProvenanceRecord> {
        self.entries.values().flatten()
    }
}

fn stage_err(stage: CpeStage, log_id: &str, cause: impl ToString) -> CpeError {
    CpeError::Stage {
        stage,
        log_id: log_id.to_string(),
        cause: cause.to_string(),
    }
}

/// Prompt-1 call: natural-language summary of one log.
pub fn summarize_log(
    provider: &dyn ChatProvider,
    log_id: &str,
    raw_text: &str,
    platform: &str,
    examples: Vec<InContextExample>,
) -> Result<String, CpeError> {
    let request = ChatRequest::new(TemplateId::P1)
        .bind("Platform Name", platform)
        .bind("Log Entry", raw_text)
        .with_examples(examples);
    let response = chat_complete(provider, &request)
        .map_err(|e| stage_err(CpeStage::Summarize, log_id, e))?;
    if response.trim().is_empty() {
        return Err(stage_err(CpeStage::Summarize, log_id, "empty response"));
    }
    Ok(response)
}

/// Prompt-2 call: identifier -> coarse type map. Duplicate identifiers keep
/// their first type; conflicts are logged.
pub fn extract_entity_types(
    provider: &dyn ChatProvider,
    log_id: &str,
    raw_text: &str,
    summary: &str,
    platform: &str,
    examples: Vec<InContextExample>,
) -> Result<(BTreeMap<String, Option<String>>, String), CpeError> {
    let request = ChatRequest::new(TemplateId::P2)
        .bind("Platform Name", platform)
        .bind("Log Entry", raw_text)
        .bind("Summary", summary)
        .with_examples(examples);
    let response = chat_complete(provider, &request)
        .map_err(|e| stage_err(CpeStage::EntityTypes, log_id, e))?;
    let assignments = parse_quoted_assignments(&response);
    if assignments.is_empty() {
        return Err(stage_err(
            CpeStage::EntityTypes,
            log_id,
            "zero parsable type lines",
        ));
    }
    let mut map: BTreeMap<String, Option<String>> = BTreeMap::new();
    for (id, value) in assignments {
        if let Some(existing) = map.get(&id) {
            if *existing != value {
                log::warn!("conflicting types for {id} in {log_id}; keeping first");
            }
            continue;
        }
        map.insert(id, value);
    }
    Ok((map, response))
}

/// Prompt-3 call: interacting pairs and resolved entity names.
pub fn extract_entities(
    provider: &dyn ChatProvider,
    log_id: &str,
    raw_text: &str,
    summary: &str,
    platform: &str,
    examples: Vec<InContextExample>,
) -> Result<(Vec<(String, String)>, BTreeMap<String, Option<String>>, String), CpeError> {
    let request = ChatRequest::new(TemplateId::P3)
        .bind("Platform Name", platform)
        .bind("Log Entry", raw_text)
        .bind("Summary", summary)
        .with_examples(examples);
    let response = chat_complete(provider, &request)
        .map_err(|e| stage_err(CpeStage::Entities, log_id, e))?;

    let has_sentinel = response.contains(crate::llm::NO_PAIRS_SENTINEL);
    let pairs_header = response.find("[RELATED ENTITIES");
    if pairs_header.is_none() && !has_sentinel {
        return Err(stage_err(
            CpeStage::Entities,
            log_id,
            "missing [RELATED ENTITIES and IP ADDRESSES] section",
        ));
    }

    let mut pairs = Vec::new();
    if !has_sentinel {
        if let Some(start) = pairs_header {
            let section = &response[start..];
            let end = section.find("[ENTITY NAMES]").unwrap_or(section.len());
            for line in section[..end].lines() {
                if let Some(pair) = parse_pair_line(line) {
                    if !pairs.contains(&pair) {
                        pairs.push(pair);
                    }
                }
            }
        }
    }

    let mut names = BTreeMap::new();
    if let Some(start) = response.find("[ENTITY NAMES]") {
        for (id, value) in parse_quoted_assignments(&response[start..]) {
            names.entry(id).or_insert(value);
        }
    }
    Ok((pairs, names, response))
}

fn parse_pair_line(line: &str) -> Option<(String, String)> {
    let trimmed = line.trim();
    if !trimmed.starts_with('(') {
        return None;
    }
    let close = trimmed.find(')')?;
    let inner = &trimmed[1..close];
    let (left, right) = inner.split_once(',')?;
    let left = left.trim();
    let right = right.trim();
    if left.is_empty() || right.is_empty() {
        return None;
    }
    Some((left.to_string(), right.to_string()))
}

/// Outcome of direction voting for one log.
#[derive(Debug, Clone, Default)]
pub struct VotedEdges {
    pub edges: Vec<CpeEdge>,
    pub warnings: Vec<String>,
    /// Raw response of the first run whose output parsed, for pool reuse.
    pub first_valid_response: Option<String>,
}

/// Prompt-4 voting: issue `n_votes` independent runs and retain the most
/// frequent direction per pair. Ties after vote failures resolve
/// left-to-right with a warning.
pub fn extract_edges_voted(
    provider: &dyn ChatProvider,
    log_id: &str,
    raw_text: &str,
    summary: &str,
    pairs: &[(String, String)],
    config: &CpeConfig,
    pool: &mut InContextPool,
) -> Result<VotedEdges, CpeError> {
    assert!(config.n_votes >= 1 && config.n_votes % 2 == 1, "n_votes must be odd");
    assert!(!pairs.is_empty(), "pairs must be non-empty");

    let pair_list = pairs
        .iter()
        .map(|(l, r)| format!("({l}, {r})"))
        .collect::<Vec<_>>()
        .join("\n");

    let mut runs = Vec::new();
    let mut first_valid_response = None;
    let mut failures = 0usize;
    for _ in 0..config.n_votes {
        let request = ChatRequest::new(TemplateId::P4)
            .bind("Platform Name", &config.platform)
            .bind("Log Entry", raw_text)
            .bind("Summary", summary)
            .bind("Entity Pairs", &pair_list)
            .with_examples(pool.sample(TemplateId::P4));
        match chat_complete(provider, &request) {
            Ok(text) => match parse_edge_lines(&text) {
                Ok(parsed) => {
                    if first_valid_response.is_none() {
                        first_valid_response = Some(text);
                    }
                    runs.push(parsed);
                }
                Err(_) => failures += 1,
            },
            Err(_) => failures += 1,
        }
    }
    if runs.is_empty() {
        return Err(stage_err(
            CpeStage::Edges,
            log_id,
            format!("all {failures} voting runs failed"),
        ));
    }

    let mut warnings = Vec::new();
    // Pairs in first-appearance order across runs.
    let mut observed: Vec<(String, String)> = Vec::new();
    for run in &runs {
        for line in &run.edges {
            let key = (line.left_id.clone(), line.right_id.clone());
            if !observed.contains(&key) {
                observed.push(key);
            }
        }
    }
    for pair in pairs {
        if !observed.contains(pair) {
            warnings.push(format!(
                "pair ({}, {}) absent from every voting run; dropped",
                pair.0, pair.1
            ));
        }
    }

    let mut edges = Vec::new();
    for (left, right) in &observed {
        let mut lr = 0usize;
        let mut rl = 0usize;
        for run in &runs {
            let vote = run
                .edges
                .iter()
                .find(|e| &e.left_id == left && &e.right_id == right)
                .map(|e| e.direction);
            match vote {
                Some(EdgeDirection::LR) => lr += 1,
                Some(EdgeDirection::RL) => rl += 1,
                None => {}
            }
        }
        let winning = if lr == rl {
            warnings.push(format!(
                "direction tie ({lr}:{rl}) for pair ({left}, {right}); defaulting left-to-right"
            ));
            EdgeDirection::LR
        } else if lr > rl {
            EdgeDirection::LR
        } else {
            EdgeDirection::RL
        };

        let mut actions: Vec<String> = Vec::new();
        let mut timestamp: Option<String> = None;
        let mut timestamp_set = false;
        for run in &runs {
            for line in &run.edges {
                if &line.left_id != left || &line.right_id != right || line.direction != winning {
                    continue;
                }
                if !timestamp_set {
                    timestamp = line.timestamp_raw.clone();
                    timestamp_set = true;
                }
                for action in &line.actions {
                    if !actions.contains(action) {
                        actions.push(action.clone());
                    }
                }
            }
        }
        let (sid, did) = match winning {
            EdgeDirection::LR => (left.clone(), right.clone()),
            EdgeDirection::RL => (right.clone(), left.clone()),
        };
        for action in actions {
            edges.push(CpeEdge {
                sid: sid.clone(),
                did: did.clone(),
                itype: action,
                time_raw: timestamp.clone(),
            });
        }
    }

    Ok(VotedEdges {
        edges,
        warnings,
        first_valid_response,
    })
}

/// Combine the per-subtask outputs into provenance records, one per edge.
pub fn assemble_records(
    output: &CpeOutput,
    ts_formats: &[TimestampFormat],
) -> (Vec<ProvenanceRecord>, Vec<String>) {
    let mut warnings = Vec::new();
    let mut records = Vec::new();
    for edge in &output.edges {
        for id in [&edge.sid, &edge.did] {
            if !output.entity_types.contains_key(id) && !output.entity_names.contains_key(id) {
                warnings.push(format!(
                    "edge references {id} absent from both maps in {}",
                    output.log_id
                ));
            }
        }
        let lookup_type = |id: &str| output.entity_types.get(id).cloned().flatten();
        let lookup_name = |id: &str| output.entity_names.get(id).cloned().flatten();
        records.push(ProvenanceRecord {
            sid: edge.sid.clone(),
            stype: lookup_type(&edge.sid),
            sname: lookup_name(&edge.sid),
            did: edge.did.clone(),
            dtype: lookup_type(&edge.did),
            dname: lookup_name(&edge.did),
            itype: edge.itype.clone(),
            time: edge
                .time_raw
                .as_ref()
                .map(|raw| parse_timestamp(raw, ts_formats)),
            origin: RecordOrigin::Cpe,
            source_log_id: output.log_id.clone(),
        });
    }
    (records, warnings)
}

/// Result of a full extractor pass over a candidate log-set.
#[derive(Debug, Default)]
pub struct CpeRunOutcome {
    pub db: CandidateProvenanceDb,
    pub outputs: BTreeMap<String, CpeOutput>,
    pub skip_report: Vec<SkipEntry>,
    pub warnings: Vec<String>,
}

/// Run the four subtasks over every candidate log, feeding the in-context
/// pool after each success. Per-log failures isolate into the skip report.
pub fn run_cpe(
    provider: &dyn ChatProvider,
    candidate_set: &CandidateLogSet,
    pool: &mut InContextPool,
    config: &CpeConfig,
) -> CpeRunOutcome {
    let mut outcome = CpeRunOutcome::default();
    for entry in &candidate_set.entries {
        let log_id = entry.log_id.as_str();
        let raw = entry.raw_text.as_str();
        let platform = config.platform.as_str();

        let summary = match summarize_log(provider, log_id, raw, platform, pool.sample(TemplateId::P1)) {
            Ok(s) => s,
            Err(e) => {
                outcome.skip_report.push(SkipEntry {
                    log_id: log_id.to_string(),
                    stage: CpeStage::Summarize,
                    cause: e.to_string(),
                });
                continue;
            }
        };
        pool.add(
            TemplateId::P1,
            InContextExample {
                input: raw.to_string(),
                output: summary.clone(),
            },
        );

        let (entity_types, types_response) = match extract_entity_types(
            provider,
            log_id,
            raw,
            &summary,
            platform,
            pool.sample(TemplateId::P2),
        ) {
            Ok(v) => v,
            Err(e) => {
                outcome.skip_report.push(SkipEntry {
                    log_id: log_id.to_string(),
                    stage: CpeStage::EntityTypes,
                    cause: e.to_string(),
                });
                continue;
            }
        };
        pool.add(
            TemplateId::P2,
            InContextExample {
                input: raw.to_string(),
                output: types_response,
            },
        );

        let (pairs, entity_names, entities_response) = match extract_entities(
            provider,
            log_id,
            raw,
            &summary,
            platform,
            pool.sample(TemplateId::P3),
        ) {
            Ok(v) => v,
            Err(e) => {
                outcome.skip_report.push(SkipEntry {
                    log_id: log_id.to_string(),
                    stage: CpeStage::Entities,
                    cause: e.to_string(),
                });
                continue;
            }
        };
        pool.add(
            TemplateId::P3,
            InContextExample {
                input: raw.to_string(),
                output: entities_response,
            },
        );

        let edges = if pairs.is_empty() {
            Vec::new()
        } else {
            match extract_edges_voted(provider, log_id, raw, &summary, &pairs, config, pool) {
                Ok(voted) => {
                    outcome.warnings.extend(voted.warnings);
                    if let Some(response) = voted.first_valid_response {
                        pool.add(
                            TemplateId::P4,
                            InContextExample {
                                input: raw.to_string(),
                                output: response,
                            },
                        );
                    }
                    voted.edges
                }
                Err(e) => {
                    outcome.skip_report.push(SkipEntry {
                        log_id: log_id.to_string(),
                        stage: CpeStage::Edges,
                        cause: e.to_string(),
                    });
                    continue;
                }
            }
        };

        let output = CpeOutput {
            log_id: log_id.to_string(),
            summary,
            entity_types,
            entity_names,
            pairs,
            edges,
        };
        let (records, warnings) = assemble_records(&output, &config.ts_formats);
        outcome.warnings.extend(warnings);
        outcome.db.entries.insert(log_id.to_string(), records);
        outcome.outputs.insert(log_id.to_string(), output);
    }
    outcome
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::CandidateEntry;
    use crate::llm::{ScriptAction, ScriptRule, ScriptedResponder};

    fn candidate(log_id: &str, raw: &str) -> CandidateEntry {
        CandidateEntry {
            log_id: log_id.to_string(),
            raw_text: raw.to_string(),
            cluster_id: 0,
        }
    }

    fn full_script_for(log: &str) -> Vec<ScriptRule> {
        vec![
            ScriptRule::respond(
                TemplateId::P1,
                vec![log.to_string()],
                r#"The process "vmtoolsd.exe" (id-1) performed a {write} on the file "va.log" (id-2) [file]."#,
            ),
            ScriptRule::respond(
                TemplateId::P2,
                vec![log.to_string()],
                "\"id-1\" = \"process\"\n\"id-2\" = \"file\"",
            ),
            ScriptRule::respond(
                TemplateId::P3,
                vec![log.to_string()],
                "[RELATED ENTITIES and IP ADDRESSES]\n\n(id-1, id-2)  A: [...]\n\n[ENTITY NAMES]\n\n\"id-1\" = \"vmtoolsd.exe\"\n\"id-2\" = \"va.log\"",
            ),
            ScriptRule::respond(
                TemplateId::P4,
                vec![log.to_string()],
                "(id-1, id-2)  A: [write] {D=->} (timestamp=2018-04-10T12:00:00Z)",
            ),
        ]
    }

    #[test]
    fn summarize_passthrough_and_empty_failure() {
        let responder = ScriptedResponder::new(vec![ScriptRule::respond(
            TemplateId::P1,
            vec![],
            "a fixed paragraph",
        )]);
        let out = summarize_log(&responder, "L1", "raw", "Linux", Vec::new()).unwrap();
        assert_eq!(out, "a fixed paragraph");

        let blank = ScriptedResponder::new(vec![ScriptRule::respond(TemplateId::P1, vec![], "   ")]);
        assert!(summarize_log(&blank, "L1", "raw", "Linux", Vec::new()).is_err());
    }

    #[test]
    fn entity_types_first_occurrence_wins() {
        let responder = ScriptedResponder::new(vec![ScriptRule::respond(
            TemplateId::P2,
            vec![],
            "\"id-1\" = \"process\"\n\"id-1\" = \"file\"\n\"id-3\" = \"NONE\"",
        )]);
        let (map, _) =
            extract_entity_types(&responder, "L1", "raw", "sum", "Linux", Vec::new()).unwrap();
        assert_eq!(map.get("id-1").unwrap().as_deref(), Some("process"));
        assert_eq!(map.get("id-3").unwrap(), &None);
    }

    #[test]
    fn entities_sentinel_yields_empty_pairs() {
        let responder = ScriptedResponder::new(vec![ScriptRule::respond(
            TemplateId::P3,
            vec![],
            "[NO MEANINGFUL PAIRS POSSIBLE]\n\n[ENTITY NAMES]\n\n\"id-1\" = \"x.exe\"",
        )]);
        let (pairs, names, _) =
            extract_entities(&responder, "L1", "raw", "sum", "Linux", Vec::new()).unwrap();
        assert!(pairs.is_empty());
        assert_eq!(names.get("id-1").unwrap().as_deref(), Some("x.exe"));
    }

    #[test]
    fn entities_missing_sections_error() {
        let responder =
            ScriptedResponder::new(vec![ScriptRule::respond(TemplateId::P3, vec![], "free text")]);
        assert!(extract_entities(&responder, "L1", "raw", "sum", "Linux", Vec::new()).is_err());
    }

    #[test]
    fn voting_majority_wins() {
        let lr = "(id-1, id-2)  A: [read] {D=->} (timestamp=t1)";
        let rl = "(id-1, id-2)  A: [read] {D=<-} (timestamp=t2)";
        let responder = ScriptedResponder::new(vec![ScriptRule {
            template: Some(TemplateId::P4),
            contains: vec![],
            action: ScriptAction::RespondSeq {
                texts: vec![
                    lr.into(),
                    rl.into(),
                    lr.into(),
                    rl.into(),
                    lr.into(),
                    rl.into(),
                    lr.into(),
                ],
            },
        }]);
        let mut pool = InContextPool::new(8, 2, 0);
        let config = CpeConfig::default();
        let pairs = vec![("id-1".to_string(), "id-2".to_string())];
        let voted =
            extract_edges_voted(&responder, "L1", "raw", "sum", &pairs, &config, &mut pool)
                .unwrap();
        assert_eq!(voted.edges.len(), 1);
        assert_eq!(voted.edges[0].sid, "id-1");
        assert_eq!(voted.edges[0].did, "id-2");
        // Timestamp comes from the first run with the winning direction.
        assert_eq!(voted.edges[0].time_raw.as_deref(), Some("t1"));
    }

    #[test]
    fn voting_survives_transport_failures() {
        let rl = "(id-1, id-2)  A: [connect] {D=<-} (timestamp=...)";
        let lr = "(id-1, id-2)  A: [connect] {D=->} (timestamp=...)";
        let responder = ScriptedResponder::new(vec![ScriptRule {
            template: Some(TemplateId::P4),
            contains: vec![],
            action: ScriptAction::RespondSeq {
                texts: vec![
                    "FAIL".into(),
                    rl.into(),
                    "FAIL".into(),
                    rl.into(),
                    "FAIL".into(),
                    lr.into(),
                    "FAIL".into(),
                ],
            },
        }]);
        // "FAIL" parses as zero well-formed lines, so those runs drop out.
        let mut pool = InContextPool::new(8, 2, 0);
        let config = CpeConfig::default();
        let pairs = vec![("id-1".to_string(), "id-2".to_string())];
        let voted =
            extract_edges_voted(&responder, "L1", "raw", "sum", &pairs, &config, &mut pool)
                .unwrap();
        // 2 RL vs 1 LR over the 3 valid votes.
        assert_eq!(voted.edges[0].sid, "id-2");
        assert_eq!(voted.edges[0].did, "id-1");
    }

    #[test]
    fn even_vote_tie_defaults_left_to_right_with_warning() {
        let lr = "(a, b)  A: [ping] {D=->} (timestamp=...)";
        let rl = "(a, b)  A: [ping] {D=<-} (timestamp=...)";
        let responder = ScriptedResponder::new(vec![ScriptRule {
            template: Some(TemplateId::P4),
            contains: vec![],
            action: ScriptAction::RespondSeq {
                texts: vec![lr.into(), rl.into(), "garbage".into()],
            },
        }]);
        let mut pool = InContextPool::new(8, 2, 0);
        let config = CpeConfig {
            n_votes: 3,
            ..CpeConfig::default()
        };
        let pairs = vec![("a".to_string(), "b".to_string())];
        let voted =
            extract_edges_voted(&responder, "L1", "raw", "sum", &pairs, &config, &mut pool)
                .unwrap();
        assert_eq!(voted.edges[0].sid, "a");
        assert!(voted.warnings.iter().any(|w| w.contains("tie")));
    }

    #[test]
    fn assemble_full_record() {
        let output = CpeOutput {
            log_id: "L1".to_string(),
            summary: String::new(),
            entity_types: [
                ("id-1".to_string(), Some("process".to_string())),
                ("id-2".to_string(), Some("file".to_string())),
            ]
            .into_iter()
            .collect(),
            entity_names: [
                ("id-1".to_string(), Some("vmtoolsd.exe".to_string())),
                ("id-2".to_string(), None),
            ]
            .into_iter()
            .collect(),
            pairs: vec![("id-1".to_string(), "id-2".to_string())],
            edges: vec![CpeEdge {
                sid: "id-1".to_string(),
                did: "id-2".to_string(),
                itype: "read".to_string(),
                time_raw: Some("t1".to_string()),
            }],
        };
        let (records, warnings) = assemble_records(&output, &[TimestampFormat::Iso8601]);
        assert!(warnings.is_empty());
        let rec = &records[0];
        assert_eq!(rec.sname.as_deref(), Some("vmtoolsd.exe"));
        assert_eq!(rec.dname, None, "NONE propagates to absent");
        assert_eq!(rec.time.as_ref().unwrap().raw, "t1");
        assert_eq!(rec.origin, RecordOrigin::Cpe);
    }

    #[test]
    fn assemble_ip_endpoint_uses_role_type() {
        let output = CpeOutput {
            log_id: "L1".to_string(),
            summary: String::new(),
            entity_types: [
                ("10.0.0.1:443".to_string(), Some("source address".to_string())),
                ("10.0.0.9:80".to_string(), Some("destination address".to_string())),
            ]
            .into_iter()
            .collect(),
            entity_names: BTreeMap::new(),
            pairs: vec![],
            edges: vec![CpeEdge {
                sid: "10.0.0.1:443".to_string(),
                did: "10.0.0.9:80".to_string(),
                itype: "connect".to_string(),
                time_raw: None,
            }],
        };
        let (records, _) = assemble_records(&output, &[]);
        assert_eq!(records[0].sid, "10.0.0.1:443");
        assert_eq!(records[0].stype.as_deref(), Some("source address"));
    }

    #[test]
    fn assemble_warns_on_unknown_ids() {
        let output = CpeOutput {
            log_id: "L1".to_string(),
            summary: String::new(),
            entity_types: BTreeMap::new(),
            entity_names: BTreeMap::new(),
            pairs: vec![],
            edges: vec![CpeEdge {
                sid: "ghost".to_string(),
                did: "ghost2".to_string(),
                itype: "read".to_string(),
                time_raw: None,
            }],
        };
        let (records, warnings) = assemble_records(&output, &[]);
        assert_eq!(records.len(), 1);
        assert_eq!(warnings.len(), 2);
        assert_eq!(records[0].sname, None);
    }

    #[test]
    fn empty_candidate_set_yields_empty_db() {
        let responder = ScriptedResponder::new(Vec::new());
        let set = CandidateLogSet {
            window_id: 0,
            entries: Vec::new(),
        };
        let mut pool = InContextPool::new(8, 2, 0);
        let outcome = run_cpe(&responder, &set, &mut pool, &CpeConfig::default());
        assert!(outcome.db.entries.is_empty());
        assert!(outcome.skip_report.is_empty());
    }

    #[test]
    fn three_logs_full_script_gives_three_keys() {
        let mut rules = Vec::new();
        for log in ["log one", "log two", "log three"] {
            rules.extend(full_script_for(log));
        }
        let responder = ScriptedResponder::new(rules);
        let set = CandidateLogSet {
            window_id: 0,
            entries: vec![
                candidate("L1", "log one"),
                candidate("L2", "log two"),
                candidate("L3", "log three"),
            ],
        };
        let mut pool = InContextPool::new(8, 2, 0);
        let outcome = run_cpe(&responder, &set, &mut pool, &CpeConfig::default());
        assert_eq!(outcome.db.entries.len(), 3);
        assert!(outcome.skip_report.is_empty());
        for (log_id, records) in &outcome.db.entries {
            assert_eq!(records.len(), 1);
            assert_eq!(&records[0].source_log_id, log_id);
            assert_eq!(records[0].origin, RecordOrigin::Cpe);
        }
    }

    #[test]
    fn one_failing_log_isolates_into_skip_report() {
        let mut rules = vec![ScriptRule {
            template: Some(TemplateId::P1),
            contains: vec!["log two".to_string()],
            action: ScriptAction::Fail {
                message: "injected".to_string(),
            },
        }];
        for log in ["log one", "log two", "log three"] {
            rules.extend(full_script_for(log));
        }
        let responder = ScriptedResponder::new(rules);
        let set = CandidateLogSet {
            window_id: 0,
            entries: vec![
                candidate("L1", "log one"),
                candidate("L2", "log two"),
                candidate("L3", "log three"),
            ],
        };
        let mut pool = InContextPool::new(8, 2, 0);
        let outcome = run_cpe(&responder, &set, &mut pool, &CpeConfig::default());
        assert_eq!(outcome.db.entries.len(), 2);
        assert_eq!(outcome.skip_report.len(), 1);
        assert_eq!(outcome.skip_report[0].log_id, "L2");
        assert_eq!(outcome.skip_report[0].stage, CpeStage::Summarize);
    }

    #[test]
    fn run_cpe_is_deterministic() {
        let build = || {
            let mut rules = Vec::new();
            for log in ["log one", "log two"] {
                rules.extend(full_script_for(log));
            }
            ScriptedResponder::new(rules)
        };
        let set = CandidateLogSet {
            window_id: 0,
            entries: vec![candidate("L1", "log one"), candidate("L2", "log two")],
        };
        let config = CpeConfig::default();
        let bytes = |outcome: &CpeRunOutcome| {
            crate::jsonl::to_jsonl_bytes(outcome.db.entries.iter()).unwrap()
        };
        let mut pool1 = InContextPool::new(8, 2, 0);
        let mut pool2 = InContextPool::new(8, 2, 0);
        let a = run_cpe(&build(), &set, &mut pool1, &config);
        let b = run_cpe(&build(), &set, &mut pool2, &config);
        assert_eq!(bytes(&a), bytes(&b));
    }
}
