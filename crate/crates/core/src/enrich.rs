//! Node enricher: entity-name normalization, LLM functionality labels with
//! a persistent functionality database, behavioral signatures with multi-hot
//! profiles, and cosine nearest-neighbor classification of unknown entities.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{Embedding, EmbeddingProvider};
use crate::graph::ProvenanceGraph;
use crate::jsonl::{self, JsonlError};
use crate::llm::{chat_complete, parse_label_line, ChatProvider, ChatRequest, TemplateId};

#[derive(Debug, Error)]
pub enum EnrichError {
    #[error("no reference vectors in the behavioral database")]
    NoReference,
    #[error("no behavioral evidence for {0}")]
    NoEvidence(String),
    #[error("label conflict for {name}: held {held:?}, proposed {proposed:?}")]
    LabelConflict {
        name: String,
        held: String,
        proposed: String,
    },
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
}

// ---------------------------------------------------------------------------
// Name normalization

fn strip_version_runs(component: &str) -> String {
    let chars: Vec<char> = component.chars().collect();
    let mut out = String::with_capacity(component.len());
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_ascii_digit() || chars[i] == '.' {
            let start = i;
            let mut has_digit = false;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                has_digit |= chars[i].is_ascii_digit();
                i += 1;
            }
            if !has_digit {
                out.extend(&chars[start..i]);
            }
        } else {
            out.push(chars[i]);
            i += 1;
        }
    }
    out
}

fn clean_final_component(component: &str) -> String {
    match component.rfind('.') {
        Some(pos) if pos > 0 => {
            let (base, ext) = component.split_at(pos);
            format!("{}{}", strip_version_runs(base), ext)
        }
        _ => strip_version_runs(component),
    }
}

#[derive(Debug)]
enum PathToken {
    Sep(char),
    Comp(String),
}

/// Normalize an entity name: collapse separator runs, delete version-like
/// digit-and-dot runs from directory components and from the filename base
/// while keeping the extension verbatim, and strip trailing separators.
/// Returns the normalized name and whether the original was kept because
/// normalization emptied it.
pub fn normalize_entity_name_flagged(name: &str) -> (String, bool) {
    let mut tokens: Vec<PathToken> = Vec::new();
    for ch in name.chars() {
        if ch == '/' || ch == '\\' {
            if !matches!(tokens.last(), Some(PathToken::Sep(_))) {
                tokens.push(PathToken::Sep(ch));
            }
        } else {
            match tokens.last_mut() {
                Some(PathToken::Comp(s)) => s.push(ch),
                _ => tokens.push(PathToken::Comp(ch.to_string())),
            }
        }
    }
    let last_comp_idx = tokens
        .iter()
        .rposition(|t| matches!(t, PathToken::Comp(_)));
    let mut cleaned: Vec<PathToken> = Vec::with_capacity(tokens.len());
    for (idx, token) in tokens.into_iter().enumerate() {
        match token {
            PathToken::Sep(c) => cleaned.push(PathToken::Sep(c)),
            PathToken::Comp(comp) => {
                let replaced = if Some(idx) == last_comp_idx {
                    clean_final_component(&comp)
                } else {
                    strip_version_runs(&comp)
                };
                if replaced.is_empty() {
                    // Drop the emptied component together with one
                    // neighboring separator so runs never reappear.
                    if matches!(cleaned.last(), Some(PathToken::Sep(_))) && cleaned.len() > 1 {
                        cleaned.pop();
                    } else if matches!(cleaned.last(), Some(PathToken::Sep(_)))
                        && Some(idx) == last_comp_idx
                    {
                        cleaned.pop();
                    }
                } else {
                    cleaned.push(PathToken::Comp(replaced));
                }
            }
        }
    }
    while matches!(cleaned.last(), Some(PathToken::Sep(_))) && cleaned.len() > 1 {
        cleaned.pop();
    }
    if cleaned.len() == 1 {
        if let Some(PathToken::Sep(_)) = cleaned.first() {
            cleaned.clear();
        }
    }
    let mut out = String::with_capacity(name.len());
    for token in &cleaned {
        match token {
            PathToken::Sep(c) => out.push(*c),
            PathToken::Comp(s) => out.push_str(s),
        }
    }
    if out.is_empty() {
        log::warn!("normalization emptied {name:?}; keeping original");
        (name.to_string(), true)
    } else {
        (out, false)
    }
}

pub fn normalize_entity_name(name: &str) -> String {
    normalize_entity_name_flagged(name).0
}

// ---------------------------------------------------------------------------
// Functionality database

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelProvenance {
    Llm,
    Behavioral,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub name: String,
    pub label: String,
    pub provenance: LabelProvenance,
}

/// Normalized name -> functional label. A name maps to exactly one label
/// for the lifetime of a run; only Manual provenance may relabel.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FunctionalityDb {
    entries: BTreeMap<String, LabelEntry>,
}

impl FunctionalityDb {
    pub fn get(&self, name: &str) -> Option<&LabelEntry> {
        self.entries.get(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &LabelEntry> {
        self.entries.values()
    }

    pub fn insert(
        &mut self,
        name: &str,
        label: &str,
        provenance: LabelProvenance,
    ) -> Result<(), EnrichError> {
        assert!(!label.is_empty(), "empty labels are never stored");
        if let Some(existing) = self.entries.get(name) {
            if existing.label == label {
                return Ok(());
            }
            if provenance != LabelProvenance::Manual {
                return Err(EnrichError::LabelConflict {
                    name: name.to_string(),
                    held: existing.label.clone(),
                    proposed: label.to_string(),
                });
            }
        }
        self.entries.insert(
            name.to_string(),
            LabelEntry {
                name: name.to_string(),
                label: label.to_string(),
                provenance,
            },
        );
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<usize, JsonlError> {
        jsonl::write_jsonl(path, self.entries.values())
    }

    pub fn load(path: &Path) -> Result<Self, JsonlError> {
        let entries: Vec<LabelEntry> = jsonl::read_jsonl(path)?;
        Ok(FunctionalityDb {
            entries: entries.into_iter().map(|e| (e.name.clone(), e)).collect(),
        })
    }
}

/// Prompt-6 lookup with cache-first semantics. Returns the label, or None
/// for NO LABEL; provider and parse failures degrade to None with a warning.
pub fn infer_label_llm(
    provider: &dyn ChatProvider,
    f_db: &mut FunctionalityDb,
    name: &str,
    platform: &str,
) -> Option<String> {
    if let Some(hit) = f_db.get(name) {
        return Some(hit.label.clone());
    }
    let request = ChatRequest::new(TemplateId::P6)
        .bind("Platform Name", platform)
        .bind("Entity Name", name);
    let response = match chat_complete(provider, &request) {
        Ok(text) => text,
        Err(e) => {
            log::warn!("label inference failed for {name}: {e}");
            return None;
        }
    };
    match parse_label_line(&response) {
        Ok((_, Some(label))) => {
            let _ = f_db.insert(name, &label, LabelProvenance::Llm);
            Some(label)
        }
        Ok((_, None)) => None,
        Err(e) => {
            log::warn!("unparseable label response for {name}: {e}");
            None
        }
    }
}

// ---------------------------------------------------------------------------
// Behavioral signatures and profiles

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    In,
    Out,
}

/// Direction-aware (interaction type, neighbor functional label) pair.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BehavioralSignature {
    pub direction: Direction,
    pub itype: String,
    pub neighbor_label: String,
}

/// Append-only registry mapping signatures to stable dimensions.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SignatureIndex {
    order: Vec<BehavioralSignature>,
    #[serde(skip)]
    positions: BTreeMap<BehavioralSignature, usize>,
}

impl SignatureIndex {
    pub fn dimension(&self) -> usize {
        self.order.len()
    }

    pub fn position(&self, signature: &BehavioralSignature) -> Option<usize> {
        self.positions.get(signature).copied()
    }

    pub fn register(&mut self, signature: &BehavioralSignature) -> usize {
        if let Some(pos) = self.positions.get(signature) {
            return *pos;
        }
        let pos = self.order.len();
        self.order.push(signature.clone());
        self.positions.insert(signature.clone(), pos);
        pos
    }

    pub fn save(&self, path: &Path) -> Result<usize, JsonlError> {
        jsonl::write_jsonl(path, self.order.iter())
    }

    pub fn load(path: &Path) -> Result<Self, JsonlError> {
        let order: Vec<BehavioralSignature> = jsonl::read_jsonl(path)?;
        let positions = order
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Ok(SignatureIndex { order, positions })
    }
}

/// Multi-hot profile vector stored sparsely as sorted set-bit indices;
/// shorter historical vectors are implicitly zero-extended as the registry
/// grows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileVector {
    pub bits: Vec<usize>,
}

impl ProfileVector {
    pub fn popcount(&self) -> usize {
        self.bits.len()
    }

    pub fn is_zero(&self) -> bool {
        self.bits.is_empty()
    }

    /// Cosine similarity between multi-hot vectors.
    pub fn cosine(&self, other: &ProfileVector) -> f64 {
        if self.bits.is_empty() || other.bits.is_empty() {
            return 0.0;
        }
        let mut shared = 0usize;
        let (mut i, mut j) = (0usize, 0usize);
        while i < self.bits.len() && j < other.bits.len() {
            match self.bits[i].cmp(&other.bits[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    shared += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        shared as f64 / ((self.bits.len() as f64).sqrt() * (other.bits.len() as f64).sqrt())
    }
}

/// One-hop behavioral profile of a node: incoming edges contribute
/// (In, itype, label(neighbor)), outgoing edges (Out, itype, label(neighbor));
/// unlabeled neighbors contribute nothing.
pub fn behavioral_profile(
    graph: &ProvenanceGraph,
    node_key: &str,
    f_db: &FunctionalityDb,
) -> BTreeSet<BehavioralSignature> {
    let label_of = |key: &str| -> Option<String> {
        graph
            .nodes
            .get(key)
            .and_then(|n| n.functional_label.clone())
            .or_else(|| f_db.get(key).map(|e| e.label.clone()))
    };
    let mut profile = BTreeSet::new();
    for edge in graph.in_edges(node_key) {
        if let Some(label) = label_of(&edge.src_key) {
            profile.insert(BehavioralSignature {
                direction: Direction::In,
                itype: edge.itype.clone(),
                neighbor_label: label,
            });
        }
    }
    for edge in graph.out_edges(node_key) {
        if let Some(label) = label_of(&edge.dst_key) {
            profile.insert(BehavioralSignature {
                direction: Direction::Out,
                itype: edge.itype.clone(),
                neighbor_label: label,
            });
        }
    }
    profile
}

/// Encode a profile over the registry. Reference encoding (`grow = true`)
/// registers unseen signatures; query encoding drops them.
pub fn profile_vector(
    profile: &BTreeSet<BehavioralSignature>,
    index: &mut SignatureIndex,
    grow: bool,
) -> ProfileVector {
    let mut bits = Vec::with_capacity(profile.len());
    for signature in profile {
        let pos = if grow {
            Some(index.register(signature))
        } else {
            index.position(signature)
        };
        if let Some(pos) = pos {
            bits.push(pos);
        }
    }
    bits.sort_unstable();
    bits.dedup();
    ProfileVector { bits }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BehavioralEntry {
    pub node_key: String,
    pub label: String,
    pub vector: ProfileVector,
}

/// Reference store of labeled behavioral profiles.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BehavioralDb {
    entries: BTreeMap<String, BehavioralEntry>,
}

impl BehavioralDb {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, node_key: &str) -> Option<&BehavioralEntry> {
        self.entries.get(node_key)
    }

    pub fn iter(&self) -> impl Iterator<Item = &BehavioralEntry> {
        self.entries.values()
    }

    pub fn insert(&mut self, node_key: &str, label: &str, vector: ProfileVector) {
        self.entries.insert(
            node_key.to_string(),
            BehavioralEntry {
                node_key: node_key.to_string(),
                label: label.to_string(),
                vector,
            },
        );
    }

    pub fn save(&self, path: &Path) -> Result<usize, JsonlError> {
        jsonl::write_jsonl(path, self.entries.values())
    }

    pub fn load(path: &Path) -> Result<Self, JsonlError> {
        let entries: Vec<BehavioralEntry> = jsonl::read_jsonl(path)?;
        Ok(BehavioralDb {
            entries: entries
                .into_iter()
                .map(|e| (e.node_key.clone(), e))
                .collect(),
        })
    }
}

/// Label of the reference maximizing cosine similarity; ties break to the
/// lexicographically smallest node key.
pub fn classify_unknown(
    query: &ProfileVector,
    b_db: &BehavioralDb,
) -> Result<(String, String), EnrichError> {
    if b_db.is_empty() {
        return Err(EnrichError::NoReference);
    }
    if query.is_zero() {
        return Err(EnrichError::NoEvidence("query vector".to_string()));
    }
    let mut best: Option<(&BehavioralEntry, f64)> = None;
    for entry in b_db.iter() {
        let sim = query.cosine(&entry.vector);
        match best {
            Some((_, best_sim)) if sim <= best_sim => {}
            _ => best = Some((entry, sim)),
        }
    }
    let (entry, _) = best.expect("non-empty db");
    Ok((entry.label.clone(), entry.node_key.clone()))
}

// ---------------------------------------------------------------------------
// Enrichment orchestration

#[derive(Debug, Clone)]
pub struct EnrichOptions {
    pub platform: String,
    /// Fixpoint sweeps for chained behavioral classification.
    pub max_sweeps: usize,
}

impl Default for EnrichOptions {
    fn default() -> Self {
        EnrichOptions {
            platform: "generic system".to_string(),
            max_sweeps: 3,
        }
    }
}

#[derive(Debug, Default)]
pub struct EnrichOutcome {
    pub llm_labeled: usize,
    pub behavioral_labeled: usize,
    /// Node keys that stayed unlabeled after all sweeps.
    pub unlabeled: Vec<String>,
    /// Distinct label -> feature embedding.
    pub label_features: BTreeMap<String, Embedding>,
}

/// Four-pass enrichment: LLM labels for named nodes (cache-first), reference
/// profiles into the behavioral database, fixpoint behavioral classification
/// of the remainder, then label feature encoding.
pub fn enrich_graph(
    graph: &mut ProvenanceGraph,
    chat: &dyn ChatProvider,
    embedder: &dyn EmbeddingProvider,
    f_db: &mut FunctionalityDb,
    b_db: &mut BehavioralDb,
    index: &mut SignatureIndex,
    options: &EnrichOptions,
) -> EnrichOutcome {
    let mut outcome = EnrichOutcome::default();

    // Pass 1: name-based labels for named nodes.
    let named: Vec<String> = graph
        .nodes
        .values()
        .filter(|n| !n.names.is_empty() && n.functional_label.is_none())
        .map(|n| n.node_key.clone())
        .collect();
    for key in named {
        let display = graph.nodes[&key].display_name().to_string();
        let label = infer_label_llm(chat, f_db, &key, &options.platform)
            .or_else(|| {
                if display != key {
                    infer_label_llm(chat, f_db, &display, &options.platform)
                } else {
                    None
                }
            });
        if let Some(label) = label {
            let _ = f_db.insert(&key, &label, LabelProvenance::Llm);
            graph.nodes.get_mut(&key).expect("node").functional_label = Some(label);
            outcome.llm_labeled += 1;
        }
    }

    // Pass 2: labeled nodes become behavioral references.
    let labeled: Vec<(String, String)> = graph
        .nodes
        .values()
        .filter_map(|n| n.functional_label.clone().map(|l| (n.node_key.clone(), l)))
        .collect();
    for (key, label) in &labeled {
        let profile = behavioral_profile(graph, key, f_db);
        if profile.is_empty() {
            continue;
        }
        let vector = profile_vector(&profile, index, true);
        b_db.insert(key, label, vector);
    }

    // Pass 3: behavioral classification sweeps until fixpoint.
    for _sweep in 0..options.max_sweeps {
        let pending: Vec<String> = graph
            .nodes
            .values()
            .filter(|n| n.functional_label.is_none())
            .filter(|n| {
                graph.in_edges(&n.node_key).next().is_some()
                    || graph.out_edges(&n.node_key).next().is_some()
            })
            .map(|n| n.node_key.clone())
            .collect();
        if pending.is_empty() {
            break;
        }
        let mut progressed = false;
        for key in pending {
            let profile = behavioral_profile(graph, &key, f_db);
            if profile.is_empty() {
                continue;
            }
            let query = profile_vector(&profile, index, false);
            if query.is_zero() {
                continue;
            }
            match classify_unknown(&query, b_db) {
                Ok((label, _reference)) => {
                    if f_db
                        .insert(&key, &label, LabelProvenance::Behavioral)
                        .is_err()
                    {
                        continue;
                    }
                    graph.nodes.get_mut(&key).expect("node").functional_label =
                        Some(label.clone());
                    b_db.insert(&key, &label, query);
                    outcome.behavioral_labeled += 1;
                    progressed = true;
                }
                Err(_) => continue,
            }
        }
        if !progressed {
            break;
        }
    }

    // Pass 4: label feature vectors.
    for node in graph.nodes.values() {
        if let Some(label) = &node.functional_label {
            if !outcome.label_features.contains_key(label) {
                match embedder.embed(label) {
                    Ok(embedding) => {
                        outcome.label_features.insert(label.clone(), embedding);
                    }
                    Err(e) => log::warn!("label embedding failed for {label:?}: {e}"),
                }
            }
        } else {
            outcome.unlabeled.push(node.node_key.clone());
        }
    }
    outcome
}
