//! Rule generator: distill each CPE provenance record into per-field regex
//! extractors, validate them against the source log, store them in the rule
//! database, and apply them to the full stream.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::jsonl::{self, JsonlError};
use crate::llm::{chat_complete, ChatProvider, ChatRequest, TemplateId};
use crate::types::{parse_timestamp, ProvenanceRecord, RecordOrigin, TimestampFormat};

/// The eight provenance record fields a rule set can extract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Sid,
    Stype,
    Sname,
    Did,
    Dtype,
    Dname,
    Itype,
    Time,
}

impl Field {
    pub const ALL: [Field; 8] = [
        Field::Sid,
        Field::Stype,
        Field::Sname,
        Field::Did,
        Field::Dtype,
        Field::Dname,
        Field::Itype,
        Field::Time,
    ];

    pub const MANDATORY: [Field; 3] = [Field::Sid, Field::Did, Field::Itype];

    pub fn is_mandatory(self) -> bool {
        matches!(self, Field::Sid | Field::Did | Field::Itype)
    }

    /// Coarse types may be normalized by the extractor (e.g. "file" for a
    /// log token "FileObject"), so validation accepts the log token.
    pub fn allows_normalized_value(self) -> bool {
        matches!(self, Field::Stype | Field::Dtype)
    }

    /// Name bound into the rule-generator prompt.
    pub fn prompt_name(self) -> &'static str {
        match self {
            Field::Sid => "source ID",
            Field::Stype => "source type",
            Field::Sname => "source entity name",
            Field::Did => "destination ID",
            Field::Dtype => "destination type",
            Field::Dname => "destination entity name",
            Field::Itype => "interaction type",
            Field::Time => "timestamp",
        }
    }

    fn value_of(self, record: &ProvenanceRecord) -> Option<String> {
        match self {
            Field::Sid => Some(record.sid.clone()),
            Field::Stype => record.stype.clone(),
            Field::Sname => record.sname.clone(),
            Field::Did => Some(record.did.clone()),
            Field::Dtype => record.dtype.clone(),
            Field::Dname => record.dname.clone(),
            Field::Itype => Some(record.itype.clone()),
            Field::Time => record.time.as_ref().map(|t| t.raw.clone()),
        }
    }
}

/// One validated extractor for one field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldRule {
    /// Pattern with exactly one capturing group.
    pub pattern: String,
    /// What the pattern captured on the source log.
    pub source_capture: String,
    /// Whether the capture equals the source record value verbatim; false
    /// only for normalized coarse types.
    pub exact: bool,
}

/// Per-record rule set distilled from one CPE extraction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSet {
    /// Content hash of the field-pattern tuple.
    pub rule_id: String,
    /// Log type the source log belonged to.
    pub cluster_id: u64,
    pub field_patterns: BTreeMap<Field, FieldRule>,
    pub source_log_id: String,
    pub source_record_fingerprint: String,
}

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("pattern failed to compile: {0}")]
    BadPattern(String),
    #[error("pattern must contain exactly one capturing group, found {0}")]
    WrongGroupCount(usize),
    #[error("provider failure for field {field}: {cause}")]
    Provider { field: String, cause: String },
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
}

/// Outcome of inducing one field pattern.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Induced {
    Pattern(String),
    /// The model declined ("No Regex").
    NoRegex,
}

/// Prompt-5 call: propose a regex for one field value.
pub fn induce_field_rule(
    provider: &dyn ChatProvider,
    raw_text: &str,
    field: Field,
    field_value: &str,
    correction: Option<&str>,
) -> Result<Induced, RuleError> {
    let request = ChatRequest::new(TemplateId::P5)
        .bind("Log Entry", raw_text)
        .bind("Field Name", field.prompt_name())
        .bind("Field Value", field_value)
        .bind("Correction Context", correction.unwrap_or(""));
    let response = chat_complete(provider, &request).map_err(|e| RuleError::Provider {
        field: field.prompt_name().to_string(),
        cause: e.to_string(),
    })?;
    Ok(parse_pattern_response(&response))
}

fn parse_pattern_response(response: &str) -> Induced {
    for line in response.lines() {
        let mut candidate = line.trim();
        if candidate.is_empty() || candidate == "```" || candidate.starts_with("```") {
            continue;
        }
        if let Some(rest) = candidate.strip_prefix("Regex:") {
            candidate = rest.trim();
        }
        let candidate = candidate.trim_matches('`').trim();
        if candidate.is_empty() {
            continue;
        }
        if candidate.to_lowercase().starts_with("no regex") {
            return Induced::NoRegex;
        }
        return Induced::Pattern(candidate.to_string());
    }
    Induced::NoRegex
}

fn compile_single_group(pattern: &str) -> Result<Regex, RuleError> {
    let compiled = Regex::new(pattern).map_err(|e| RuleError::BadPattern(e.to_string()))?;
    // Group 0 is the whole match, so two means one explicit capture.
    let groups = compiled.captures_len();
    if groups != 2 {
        return Err(RuleError::WrongGroupCount(groups.saturating_sub(1)));
    }
    Ok(compiled)
}

/// Result of validating one pattern against the source log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Validation {
    pub ok: bool,
    /// First-match capture on the log, when the pattern matched at all.
    pub capture: Option<String>,
    pub cause: Option<String>,
}

fn invalid(cause: impl Into<String>) -> Validation {
    Validation {
        ok: false,
        capture: None,
        cause: Some(cause.into()),
    }
}

/// A pattern is valid iff its first-match capture on the source log equals
/// the expected value exactly. For normalized coarse types whose value is
/// not in the log verbatim, any non-empty captured log token is accepted.
pub fn validate_rule(pattern: &str, raw_text: &str, expected: &str, field: Field) -> Validation {
    let compiled = match compile_single_group(pattern) {
        Ok(c) => c,
        Err(e) => return invalid(e.to_string()),
    };
    let Some(caps) = compiled.captures(raw_text) else {
        return invalid("pattern does not match the source log");
    };
    let Some(capture) = caps.get(1).map(|m| m.as_str().to_string()) else {
        return invalid("missing capture group");
    };
    if capture == expected {
        return Validation {
            ok: true,
            capture: Some(capture),
            cause: None,
        };
    }
    if field.allows_normalized_value() && !raw_text.contains(expected) && !capture.is_empty() {
        return Validation {
            ok: true,
            capture: Some(capture),
            cause: None,
        };
    }
    Validation {
        ok: false,
        capture: Some(capture.clone()),
        cause: Some(format!("captured {capture:?}, expected {expected:?}")),
    }
}

/// Why a rule set was rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RulesetRejection {
    pub source_log_id: String,
    pub failures: Vec<(Field, String)>,
}

fn fingerprint_record(record: &ProvenanceRecord) -> String {
    let json = serde_json::to_string(record).unwrap_or_default();
    hex_digest(json.as_bytes())
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().take(16).map(|b| format!("{b:02x}")).collect()
}

fn rule_id_for(field_patterns: &BTreeMap<Field, FieldRule>) -> String {
    let mut canon = String::new();
    for (field, rule) in field_patterns {
        canon.push_str(field.prompt_name());
        canon.push('\u{1}');
        canon.push_str(&rule.pattern);
        canon.push('\u{2}');
    }
    hex_digest(canon.as_bytes())
}

/// Induce and validate a pattern per present field of `record`, with one
/// repair round on validation failure. Mandatory fields (Sid, Did, Itype)
/// must validate; optional fields drop to absent on failure.
pub fn build_ruleset(
    provider: &dyn ChatProvider,
    raw_text: &str,
    record: &ProvenanceRecord,
    cluster_id: u64,
    max_repair: u32,
) -> Result<RuleSet, RulesetRejection> {
    debug_assert_eq!(record.origin, RecordOrigin::Cpe);
    let mut field_patterns = BTreeMap::new();
    let mut failures = Vec::new();

    for field in Field::ALL {
        let Some(value) = field.value_of(record) else {
            continue;
        };
        if value.is_empty() {
            continue;
        }
        match induce_validated(provider, raw_text, field, &value, max_repair) {
            Ok(Some(rule)) => {
                field_patterns.insert(field, rule);
            }
            Ok(None) => {
                if field.is_mandatory() {
                    failures.push((field, "no usable pattern".to_string()));
                }
            }
            Err(cause) => {
                if field.is_mandatory() {
                    failures.push((field, cause));
                } else {
                    log::warn!(
                        "dropping optional field {} for {}: {cause}",
                        field.prompt_name(),
                        record.source_log_id
                    );
                }
            }
        }
    }

    if !failures.is_empty() {
        return Err(RulesetRejection {
            source_log_id: record.source_log_id.clone(),
            failures,
        });
    }
    Ok(RuleSet {
        rule_id: rule_id_for(&field_patterns),
        cluster_id,
        field_patterns,
        source_log_id: record.source_log_id.clone(),
        source_record_fingerprint: fingerprint_record(record),
    })
}

fn induce_validated(
    provider: &dyn ChatProvider,
    raw_text: &str,
    field: Field,
    value: &str,
    max_repair: u32,
) -> Result<Option<FieldRule>, String> {
    let mut correction: Option<String> = None;
    for _round in 0..=max_repair {
        let induced = induce_field_rule(provider, raw_text, field, value, correction.as_deref())
            .map_err(|e| e.to_string())?;
        let pattern = match induced {
            Induced::NoRegex => return Ok(None),
            Induced::Pattern(p) => p,
        };
        let validation = validate_rule(&pattern, raw_text, value, field);
        if validation.ok {
            let capture = validation.capture.unwrap_or_default();
            return Ok(Some(FieldRule {
                exact: capture == value,
                source_capture: capture,
                pattern,
            }));
        }
        correction = Some(format!(
            "Correction: the regex `{pattern}` was incorrect ({cause}). Apply the Rule Validation and Correction Guidelines and return a corrected regex.",
            cause = validation.cause.as_deref().unwrap_or("validation failed")
        ));
    }
    Err("validation failed after repair".to_string())
}

/// Apply one rule set to a log. A record is produced iff every mandatory
/// pattern matches; optional patterns fill fields when they match. First
/// match per pattern is taken.
pub fn apply_ruleset(
    ruleset: &RuleSet,
    log_id: &str,
    raw_text: &str,
    ts_formats: &[TimestampFormat],
) -> Option<ProvenanceRecord> {
    let mut compiled = BTreeMap::new();
    for (field, rule) in &ruleset.field_patterns {
        if let Ok(regex) = compile_single_group(&rule.pattern) {
            compiled.insert(*field, regex);
        } else if field.is_mandatory() {
            return None;
        }
    }
    apply_compiled(ruleset, &compiled, log_id, raw_text, ts_formats)
}

fn apply_compiled(
    ruleset: &RuleSet,
    compiled: &BTreeMap<Field, Regex>,
    log_id: &str,
    raw_text: &str,
    ts_formats: &[TimestampFormat],
) -> Option<ProvenanceRecord> {
    let capture = |field: Field| -> Option<String> {
        compiled
            .get(&field)
            .and_then(|re| re.captures(raw_text))
            .and_then(|caps| caps.get(1))
            .map(|m| m.as_str().to_string())
    };
    let sid = capture(Field::Sid)?;
    let did = capture(Field::Did)?;
    let itype = capture(Field::Itype)?;
    if sid.is_empty() || did.is_empty() || itype.is_empty() {
        return None;
    }
    Some(ProvenanceRecord {
        sid,
        stype: capture(Field::Stype),
        sname: capture(Field::Sname),
        did,
        dtype: capture(Field::Dtype),
        dname: capture(Field::Dname),
        itype,
        time: capture(Field::Time).map(|raw| parse_timestamp(&raw, ts_formats)),
        origin: RecordOrigin::Rule {
            rule_id: ruleset.rule_id.clone(),
        },
        source_log_id: log_id.to_string(),
    })
}

/// The rule database: unique rule sets plus a cluster routing index.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RuleDb {
    pub rules: Vec<RuleSet>,
    /// cluster id -> rule ids, in insertion order.
    pub index: BTreeMap<u64, Vec<String>>,
}

impl RuleDb {
    /// Insert with dedup on the field-pattern tuple. Returns the canonical
    /// rule id. A duplicate still registers under the new cluster.
    pub fn insert(&mut self, ruleset: RuleSet) -> String {
        let rule_id = ruleset.rule_id.clone();
        let cluster_id = ruleset.cluster_id;
        if !self.rules.iter().any(|r| r.rule_id == rule_id) {
            self.rules.push(ruleset);
        }
        let slot = self.index.entry(cluster_id).or_default();
        if !slot.contains(&rule_id) {
            slot.push(rule_id.clone());
        }
        rule_id
    }

    pub fn get(&self, rule_id: &str) -> Option<&RuleSet> {
        self.rules.iter().find(|r| r.rule_id == rule_id)
    }

    pub fn save(&self, path: &Path) -> Result<usize, JsonlError> {
        jsonl::write_jsonl(path, self.rules.iter())
    }

    /// Rebuilds the routing index from the stored rule sets.
    pub fn load(path: &Path) -> Result<Self, JsonlError> {
        let rules: Vec<RuleSet> = jsonl::read_jsonl(path)?;
        let mut db = RuleDb::default();
        for rule in rules {
            db.insert(rule);
        }
        Ok(db)
    }

    pub fn applier(&self) -> RuleApplier<'_> {
        RuleApplier::new(self)
    }
}

/// Precompiled view of a rule database for streaming application.
pub struct RuleApplier<'a> {
    db: &'a RuleDb,
    compiled: HashMap<String, BTreeMap<Field, Regex>>,
}

impl<'a> RuleApplier<'a> {
    pub fn new(db: &'a RuleDb) -> Self {
        let mut compiled = HashMap::new();
        for rule in &db.rules {
            let mut per_field = BTreeMap::new();
            let mut usable = true;
            for (field, fr) in &rule.field_patterns {
                match compile_single_group(&fr.pattern) {
                    Ok(regex) => {
                        per_field.insert(*field, regex);
                    }
                    Err(e) => {
                        log::warn!("rule {} field {:?} failed to compile: {e}", rule.rule_id, field);
                        if field.is_mandatory() {
                            usable = false;
                        }
                    }
                }
            }
            if usable {
                compiled.insert(rule.rule_id.clone(), per_field);
            }
        }
        RuleApplier { db, compiled }
    }

    fn apply_rule_ids(
        &self,
        rule_ids: &[String],
        log_id: &str,
        raw_text: &str,
        ts_formats: &[TimestampFormat],
        out: &mut Vec<ProvenanceRecord>,
    ) {
        for rule_id in rule_ids {
            let Some(compiled) = self.compiled.get(rule_id) else {
                continue;
            };
            let Some(ruleset) = self.db.get(rule_id) else {
                continue;
            };
            if let Some(record) = apply_compiled(ruleset, compiled, log_id, raw_text, ts_formats) {
                out.push(record);
            }
        }
    }

    /// Try the cluster's rule sets first, then all other rule sets if none
    /// matched. Identical records are deduplicated.
    pub fn apply(
        &self,
        log_id: &str,
        raw_text: &str,
        cluster_id: Option<u64>,
        ts_formats: &[TimestampFormat],
    ) -> Vec<ProvenanceRecord> {
        let mut records = Vec::new();
        let cluster_rules: &[String] = cluster_id
            .and_then(|c| self.db.index.get(&c))
            .map(|v| v.as_slice())
            .unwrap_or(&[]);
        self.apply_rule_ids(cluster_rules, log_id, raw_text, ts_formats, &mut records);
        if records.is_empty() {
            let fallback: Vec<String> = self
                .db
                .rules
                .iter()
                .map(|r| r.rule_id.clone())
                .filter(|id| !cluster_rules.contains(id))
                .collect();
            self.apply_rule_ids(&fallback, log_id, raw_text, ts_formats, &mut records);
        }
        let mut seen = std::collections::BTreeSet::new();
        records.retain(|r| seen.insert(r.dedup_key()));
        records
    }
}

/// Convenience one-shot application against a whole database.
pub fn apply_rule_db(
    db: &RuleDb,
    log_id: &str,
    raw_text: &str,
    cluster_id: Option<u64>,
    ts_formats: &[TimestampFormat],
) -> Vec<ProvenanceRecord> {
    db.applier().apply(log_id, raw_text, cluster_id, ts_formats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ScriptRule, ScriptedResponder};
    use crate::types::Timestamp;

    const LOG: &str = "1523361600 EVENT pid=441 op=write target=va.log path=/var/log/va.log proc=vmtoolsd.exe kind=FileObject";

    fn source_record() -> ProvenanceRecord {
        ProvenanceRecord {
            sid: "441".to_string(),
            stype: Some("process".to_string()),
            sname: Some("vmtoolsd.exe".to_string()),
            did: "va.log".to_string(),
            dtype: Some("file".to_string()),
            dname: Some("/var/log/va.log".to_string()),
            itype: "write".to_string(),
            time: Some(Timestamp::unparsed("1523361600")),
            origin: RecordOrigin::Cpe,
            source_log_id: "L1".to_string(),
        }
    }

    fn pattern_script() -> ScriptedResponder {
        let rule = |field: Field, pattern: &str| {
            ScriptRule::respond(
                TemplateId::P5,
                vec![format!("Field: {}", field.prompt_name())],
                pattern,
            )
        };
        ScriptedResponder::new(vec![
            rule(Field::Sid, r"pid=(\d+)"),
            rule(Field::Stype, r"proc=[\w.]+ kind=(\w+)"),
            rule(Field::Sname, r"proc=([\w.]+)"),
            rule(Field::Did, r"target=([\w.]+)"),
            rule(Field::Dtype, r"kind=(\w+)"),
            rule(Field::Dname, r"path=([/\w.]+)"),
            rule(Field::Itype, r"op=(\w+)"),
            rule(Field::Time, r"^(\d+) EVENT"),
        ])
    }

    #[test]
    fn stub_pattern_passthrough() {
        let responder = pattern_script();
        let induced = induce_field_rule(&responder, LOG, Field::Sid, "441", None).unwrap();
        assert_eq!(induced, Induced::Pattern(r"pid=(\d+)".to_string()));
    }

    #[test]
    fn no_regex_response_maps_to_noregex() {
        let responder = ScriptedResponder::new(Vec::new()).with_default("No Regex");
        let induced = induce_field_rule(&responder, LOG, Field::Time, "x", None).unwrap();
        assert_eq!(induced, Induced::NoRegex);
    }

    #[test]
    fn validation_exact_match() {
        let v = validate_rule(r"pid=(\d+)", "pid=441 rest", "441", Field::Sid);
        assert!(v.ok);
        let v = validate_rule(r"pid=(\d+)", "pid=441 rest", "442", Field::Sid);
        assert!(!v.ok);
    }

    #[test]
    fn validation_rejects_missing_group() {
        let v = validate_rule(r".+", LOG, "441", Field::Sid);
        assert!(!v.ok);
        assert!(v.cause.unwrap().contains("capturing group"));
    }

    #[test]
    fn validation_accepts_normalized_type_token() {
        // "file" is not verbatim in the log; the rule captures "FileObject".
        let v = validate_rule(r"kind=(\w+)", LOG, "file", Field::Dtype);
        assert!(v.ok);
        assert_eq!(v.capture.as_deref(), Some("FileObject"));
        // Same situation on an exact field stays a failure.
        let v = validate_rule(r"kind=(\w+)", LOG, "file", Field::Dname);
        assert!(!v.ok);
    }

    #[test]
    fn build_ruleset_all_fields() {
        let responder = pattern_script();
        let ruleset = build_ruleset(&responder, LOG, &source_record(), 0, 1).unwrap();
        assert_eq!(ruleset.field_patterns.len(), 8);
        // Normalized type fields are recorded as non-exact.
        assert!(!ruleset.field_patterns[&Field::Dtype].exact);
        assert!(ruleset.field_patterns[&Field::Sid].exact);
    }

    #[test]
    fn failing_time_pattern_drops_the_field() {
        let mut rules = vec![ScriptRule::respond(
            TemplateId::P5,
            vec!["Field: timestamp".to_string()],
            r"nomatch=(\d+)",
        )];
        rules.extend(pattern_script().rules().iter().cloned().filter(|r| {
            !r.contains
                .iter()
                .any(|c| c.contains("Field: timestamp"))
        }));
        let responder = ScriptedResponder::new(rules);
        let ruleset = build_ruleset(&responder, LOG, &source_record(), 0, 1).unwrap();
        assert!(!ruleset.field_patterns.contains_key(&Field::Time));
        assert_eq!(ruleset.field_patterns.len(), 7);
    }

    #[test]
    fn failing_sid_pattern_rejects_the_ruleset() {
        let mut rules = vec![ScriptRule::respond(
            TemplateId::P5,
            vec!["Field: source ID".to_string()],
            r"nomatch=(\d+)",
        )];
        rules.extend(pattern_script().rules().iter().cloned().filter(|r| {
            !r.contains.iter().any(|c| c.contains("Field: source ID"))
        }));
        let responder = ScriptedResponder::new(rules);
        let rejection = build_ruleset(&responder, LOG, &source_record(), 0, 1).unwrap_err();
        assert_eq!(rejection.failures.len(), 1);
        assert_eq!(rejection.failures[0].0, Field::Sid);
    }

    #[test]
    fn repair_round_fixes_a_bad_first_pattern() {
        use crate::llm::ScriptAction;
        let mut rules = vec![ScriptRule {
            template: Some(TemplateId::P5),
            contains: vec!["Field: source ID".to_string()],
            action: ScriptAction::RespondSeq {
                texts: vec![r"wrong=(\d+)".to_string(), r"pid=(\d+)".to_string()],
            },
        }];
        rules.extend(pattern_script().rules().iter().cloned().filter(|r| {
            !r.contains.iter().any(|c| c.contains("Field: source ID"))
        }));
        let responder = ScriptedResponder::new(rules);
        let ruleset = build_ruleset(&responder, LOG, &source_record(), 0, 1).unwrap();
        assert_eq!(ruleset.field_patterns[&Field::Sid].pattern, r"pid=(\d+)");
    }

    #[test]
    fn round_trip_on_the_source_log() {
        let responder = pattern_script();
        let record = source_record();
        let ruleset = build_ruleset(&responder, LOG, &record, 0, 1).unwrap();
        let extracted = apply_ruleset(&ruleset, "L1", LOG, &[TimestampFormat::UnixSeconds]).unwrap();
        assert_eq!(extracted.sid, record.sid);
        assert_eq!(extracted.sname, record.sname);
        assert_eq!(extracted.did, record.did);
        assert_eq!(extracted.dname, record.dname);
        assert_eq!(extracted.itype, record.itype);
        assert_eq!(extracted.time.as_ref().unwrap().raw, "1523361600");
        // Normalized types reproduce the captured log token.
        assert_eq!(extracted.dtype.as_deref(), Some("FileObject"));
    }

    #[test]
    fn same_format_different_values_extracts_new_values() {
        let responder = pattern_script();
        let ruleset = build_ruleset(&responder, LOG, &source_record(), 0, 1).unwrap();
        let other = "1523361700 EVENT pid=902 op=read target=cfg.ini path=/etc/app/cfg.ini proc=svchost.exe kind=FileObject";
        let extracted = apply_ruleset(&ruleset, "L2", other, &[TimestampFormat::UnixSeconds]).unwrap();
        assert_eq!(extracted.sid, "902");
        assert_eq!(extracted.itype, "read");
        assert_eq!(extracted.dname.as_deref(), Some("/etc/app/cfg.ini"));
        assert_eq!(extracted.source_log_id, "L2");
        assert!(matches!(extracted.origin, RecordOrigin::Rule { .. }));
    }

    #[test]
    fn disjoint_format_is_no_match() {
        let responder = pattern_script();
        let ruleset = build_ruleset(&responder, LOG, &source_record(), 0, 1).unwrap();
        assert!(apply_ruleset(&ruleset, "L3", "{\"q\":\"example.com\",\"rc\":0}", &[]).is_none());
    }

    #[test]
    fn rule_db_insert_is_idempotent() {
        let responder = pattern_script();
        let ruleset = build_ruleset(&responder, LOG, &source_record(), 0, 1).unwrap();
        let mut db = RuleDb::default();
        db.insert(ruleset.clone());
        db.insert(ruleset.clone());
        assert_eq!(db.rules.len(), 1);
        assert_eq!(db.index[&0].len(), 1);
    }

    #[test]
    fn duplicate_ruleset_registers_under_both_clusters() {
        let responder = pattern_script();
        let mut ruleset = build_ruleset(&responder, LOG, &source_record(), 0, 1).unwrap();
        let mut db = RuleDb::default();
        db.insert(ruleset.clone());
        ruleset.cluster_id = 5;
        db.insert(ruleset);
        assert_eq!(db.rules.len(), 1);
        assert!(db.index.contains_key(&5));
    }

    #[test]
    fn cluster_routing_and_cross_cluster_fallback() {
        let responder = pattern_script();
        let ruleset = build_ruleset(&responder, LOG, &source_record(), 0, 1).unwrap();
        let mut db = RuleDb::default();
        db.insert(ruleset);
        let applier = db.applier();
        // Matching cluster id routes directly.
        let hit = applier.apply("L9", LOG, Some(0), &[]);
        assert_eq!(hit.len(), 1);
        // Unknown cluster id falls back to all rules.
        let fallback = applier.apply("L9", LOG, Some(77), &[]);
        assert_eq!(fallback.len(), 1);
        // Truly unmatched log yields nothing.
        assert!(applier.apply("L9", "unrelated text", Some(0), &[]).is_empty());
    }

    #[test]
    fn identical_records_from_two_rules_dedup() {
        let responder = pattern_script();
        let record = source_record();
        let ruleset_a = build_ruleset(&responder, LOG, &record, 0, 1).unwrap();
        // A second rule set with an extra anchor on the sid pattern produces
        // identical captures.
        let mut patterns = ruleset_a.field_patterns.clone();
        patterns.insert(
            Field::Sid,
            FieldRule {
                pattern: r"EVENT pid=(\d+)".to_string(),
                source_capture: "441".to_string(),
                exact: true,
            },
        );
        let ruleset_b = RuleSet {
            rule_id: rule_id_for(&patterns),
            cluster_id: 0,
            field_patterns: patterns,
            source_log_id: "L1".to_string(),
            source_record_fingerprint: "x".to_string(),
        };
        let mut db = RuleDb::default();
        db.insert(ruleset_a);
        db.insert(ruleset_b);
        assert_eq!(db.rules.len(), 2);
        let records = db.applier().apply("L9", LOG, Some(0), &[]);
        assert_eq!(records.len(), 1, "identical captures dedup to one record");
    }

    #[test]
    fn rule_db_round_trips_through_jsonl() {
        let responder = pattern_script();
        let ruleset = build_ruleset(&responder, LOG, &source_record(), 0, 1).unwrap();
        let mut db = RuleDb::default();
        db.insert(ruleset);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rules.jsonl");
        db.save(&path).unwrap();
        let back = RuleDb::load(&path).unwrap();
        assert_eq!(back.rules, db.rules);
        assert_eq!(back.index, db.index);
    }
}
