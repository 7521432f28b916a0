//! Evaluation: clustering agreement (ARI), ranking metrics (AUC-ROC,
//! AUC-PR, ADP), the entity-name poisoning protocol, and the robustness
//! sweep that ties poisoning, behavioral re-classification, and the
//! assistant together.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assistant::{
    display_names, flag_unknown_entities, inject_context, linearize, summarize_attack,
    tactic_correctness, AssistError, AttackSummary, TacticCatalog,
};
use crate::detect::AttackGraph;
use crate::embed::{EmbedError, EmbeddingProvider};
use crate::enrich::{
    behavioral_profile, classify_unknown, normalize_entity_name, profile_vector, BehavioralDb,
    FunctionalityDb, LabelProvenance, SignatureIndex,
};
use crate::graph::{EntityNode, ProvenanceGraph};
use crate::llm::{normalize_tactic, ChatProvider};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("item sets differ between partitions")]
    MismatchedItems,
    #[error("need at least two items")]
    TooFewItems,
    #[error("ranking needs both benign and attack items")]
    SingleClass,
    #[error("no attack items in ranking")]
    NoAttacks,
    #[error("poisoning rate {0} outside [0, 100]")]
    BadRate(f64),
    #[error("attack graph has no named entities")]
    NoNamedEntities,
    #[error("original tactic set is empty")]
    EmptyOriginalTactics,
    #[error("empty summary")]
    EmptySummary,
    #[error(transparent)]
    Assist(#[from] AssistError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

// ---------------------------------------------------------------------------
// Adjusted Rand Index

fn comb2(n: u64) -> f64 {
    (n as f64) * (n as f64 - 1.0) / 2.0
}

/// Chance-corrected pairwise agreement between two partitions of the same
/// item set. Invariant under relabeling of either side.
pub fn adjusted_rand_index<K, A, B>(
    pred: &BTreeMap<K, A>,
    truth: &BTreeMap<K, B>,
) -> Result<f64, EvalError>
where
    K: Ord,
    A: Ord,
    B: Ord,
{
    if pred.len() != truth.len() {
        return Err(EvalError::MismatchedItems);
    }
    if pred.len() < 2 {
        return Err(EvalError::TooFewItems);
    }
    let mut contingency: BTreeMap<(&A, &B), u64> = BTreeMap::new();
    let mut row_sums: BTreeMap<&A, u64> = BTreeMap::new();
    let mut col_sums: BTreeMap<&B, u64> = BTreeMap::new();
    for (item, a) in pred {
        let Some(b) = truth.get(item) else {
            return Err(EvalError::MismatchedItems);
        };
        *contingency.entry((a, b)).or_insert(0) += 1;
        *row_sums.entry(a).or_insert(0) += 1;
        *col_sums.entry(b).or_insert(0) += 1;
    }
    let n = pred.len() as u64;
    let index: f64 = contingency.values().map(|&c| comb2(c)).sum();
    let sum_rows: f64 = row_sums.values().map(|&c| comb2(c)).sum();
    let sum_cols: f64 = col_sums.values().map(|&c| comb2(c)).sum();
    let expected = sum_rows * sum_cols / comb2(n);
    let max_index = 0.5 * (sum_rows + sum_cols);
    if (max_index - expected).abs() < 1e-12 {
        return Ok(1.0);
    }
    Ok((index - expected) / (max_index - expected))
}

// ---------------------------------------------------------------------------
// Ranking metrics

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ItemLabel {
    Benign,
    Attack { attack_id: String },
}

impl ItemLabel {
    pub fn is_attack(&self) -> bool {
        matches!(self, ItemLabel::Attack { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedItem {
    pub node_key: String,
    pub score: f64,
    pub label: ItemLabel,
}

/// Scored nodes with benign/attack labels.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabeledRanking {
    pub items: Vec<RankedItem>,
}

impl LabeledRanking {
    pub fn attack_ids(&self) -> BTreeSet<String> {
        self.items
            .iter()
            .filter_map(|i| match &i.label {
                ItemLabel::Attack { attack_id } => Some(attack_id.clone()),
                ItemLabel::Benign => None,
            })
            .collect()
    }

    fn counts(&self) -> (usize, usize) {
        let attacks = self.items.iter().filter(|i| i.label.is_attack()).count();
        (attacks, self.items.len() - attacks)
    }

    /// Deterministic evaluation order: score descending, key ascending.
    fn sorted_desc(&self) -> Vec<&RankedItem> {
        let mut items: Vec<&RankedItem> = self.items.iter().collect();
        items.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.node_key.cmp(&b.node_key))
        });
        items
    }
}

/// Mann-Whitney formulation: the probability that an attack item outranks a
/// benign one, ties counted half.
pub fn auc_roc(ranking: &LabeledRanking) -> Result<f64, EvalError> {
    let (n_attack, n_benign) = ranking.counts();
    if n_attack == 0 || n_benign == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut wins = 0.0f64;
    for attack in ranking.items.iter().filter(|i| i.label.is_attack()) {
        for benign in ranking.items.iter().filter(|i| !i.label.is_attack()) {
            if attack.score > benign.score {
                wins += 1.0;
            } else if attack.score == benign.score {
                wins += 0.5;
            }
        }
    }
    Ok(wins / (n_attack as f64 * n_benign as f64))
}

/// Area under precision-recall via step-wise interpolation over descending
/// score thresholds; tied scores collapse into one threshold step.
pub fn auc_pr(ranking: &LabeledRanking) -> Result<f64, EvalError> {
    let (n_attack, _) = ranking.counts();
    if n_attack == 0 {
        return Err(EvalError::NoAttacks);
    }
    let sorted = ranking.sorted_desc();
    let total_attack = n_attack as f64;
    let mut area = 0.0f64;
    let mut tp = 0usize;
    let mut seen = 0usize;
    let mut prev_recall = 0.0f64;
    let mut idx = 0usize;
    while idx < sorted.len() {
        let threshold = sorted[idx].score;
        while idx < sorted.len() && sorted[idx].score == threshold {
            if sorted[idx].label.is_attack() {
                tp += 1;
            }
            seen += 1;
            idx += 1;
        }
        let recall = tp as f64 / total_attack;
        let precision = tp as f64 / seen as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(area)
}

/// Attack detection precision: for each attack, precision at the first rank
/// where one of its nodes surfaces, averaged over attacks.
pub fn adp(ranking: &LabeledRanking) -> Result<f64, EvalError> {
    let attack_ids = ranking.attack_ids();
    if attack_ids.is_empty() {
        return Err(EvalError::NoAttacks);
    }
    let sorted = ranking.sorted_desc();
    let mut total = 0.0f64;
    for attack_id in &attack_ids {
        let rank = sorted
            .iter()
            .position(|i| matches!(&i.label, ItemLabel::Attack { attack_id: a } if a == attack_id))
            .expect("attack id came from the ranking")
            + 1;
        let attacks_in_top = sorted[..rank].iter().filter(|i| i.label.is_attack()).count();
        total += attacks_in_top as f64 / rank as f64;
    }
    Ok(total / attack_ids.len() as f64)
}

// ---------------------------------------------------------------------------
// Entity-name poisoning

/// Deterministic injective mapping from original to poisoned names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoisonPlan {
    pub rate: f64,
    pub seed: u64,
    /// original display name -> poisoned name
    pub mapping: BTreeMap<String, String>,
}

/// Attack graph rewritten under a poison plan.
#[derive(Debug, Clone)]
pub struct PoisonedAttack {
    pub attack: AttackGraph,
    /// node key -> display name in the poisoned graph
    pub display: BTreeMap<String, String>,
    /// original node key -> poisoned node key (identity for untouched nodes)
    pub key_mapping: BTreeMap<String, String>,
}

fn random_run(rng: &mut ChaCha8Rng, len: usize) -> String {
    const FIRST: &[u8] = b"abcdefghijklmnopqrstuvwxyz";
    const REST: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789";
    (0..len)
        .map(|i| {
            let set = if i == 0 { FIRST } else { REST };
            set[rng.random_range(0..set.len())] as char
        })
        .collect()
}

/// Replace every maximal alphanumeric run with a same-length random run,
/// keeping separators, component count, and the final extension verbatim.
fn poison_one_name(name: &str, rng: &mut ChaCha8Rng) -> String {
    let (stem, ext) = match final_extension(name) {
        Some(pos) => name.split_at(pos),
        None => (name, ""),
    };
    let mut out = String::with_capacity(name.len());
    let chars: Vec<char> = stem.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_alphanumeric() {
            let start = i;
            while i < chars.len() && chars[i].is_alphanumeric() {
                i += 1;
            }
            out.push_str(&random_run(rng, i - start));
        } else {
            out.push(chars[i]);
            i += 1;
        }
    }
    out.push_str(ext);
    out
}

/// Byte offset of the final component's extension (the last '.' that is not
/// component-initial), when one exists.
fn final_extension(name: &str) -> Option<usize> {
    let last_component_start = name
        .rfind(['/', '\\'])
        .map(|p| p + 1)
        .unwrap_or(0);
    let component = &name[last_component_start..];
    match component.rfind('.') {
        Some(pos) if pos > 0 => Some(last_component_start + pos),
        _ => None,
    }
}

/// Named entities of an attack graph: display names of nodes that carry at
/// least one name.
pub fn named_entities(attack: &AttackGraph, graph: &ProvenanceGraph) -> Vec<String> {
    let mut names: Vec<String> = attack
        .node_keys
        .iter()
        .filter_map(|key| graph.nodes.get(key))
        .filter(|node| !node.names.is_empty())
        .map(|node| node.display_name().to_string())
        .collect();
    names.sort();
    names.dedup();
    names
}

/// Poison `max(1, floor(rate * |named| / 100))` sampled names and rewrite
/// the attack graph under the injective mapping.
pub fn poison_names(
    attack: &AttackGraph,
    graph: &ProvenanceGraph,
    rate: f64,
    seed: u64,
) -> Result<(PoisonPlan, PoisonedAttack), EvalError> {
    if !(0.0..=100.0).contains(&rate) {
        return Err(EvalError::BadRate(rate));
    }
    let names = named_entities(attack, graph);
    if names.is_empty() {
        return Err(EvalError::NoNamedEntities);
    }
    let target = poison_domain_size(rate, names.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add((rate * 1_000.0) as u64));
    let picked = rand::seq::index::sample(&mut rng, names.len(), target);
    let mut selected: Vec<&String> = picked.into_iter().map(|i| &names[i]).collect();
    selected.sort();

    let mut mapping: BTreeMap<String, String> = BTreeMap::new();
    let mut used_names: BTreeSet<String> = names.iter().cloned().collect();
    let mut used_keys: BTreeSet<String> = attack.node_keys.clone().into_iter().collect();
    for original in selected {
        loop {
            let candidate = poison_one_name(original, &mut rng);
            let key = normalize_entity_name(&candidate);
            if candidate != *original && !used_names.contains(&candidate) && !used_keys.contains(&key)
            {
                used_names.insert(candidate.clone());
                used_keys.insert(key);
                mapping.insert(original.clone(), candidate);
                break;
            }
        }
    }

    // Node keys to rewrite: nodes whose display name was poisoned.
    let mut key_mapping: BTreeMap<String, String> = BTreeMap::new();
    let mut display: BTreeMap<String, String> = BTreeMap::new();
    for key in &attack.node_keys {
        let node = graph.nodes.get(key);
        let original_display = node
            .map(|n| n.display_name().to_string())
            .unwrap_or_else(|| key.clone());
        match mapping.get(&original_display) {
            Some(poisoned_name) => {
                let new_key = normalize_entity_name(poisoned_name);
                key_mapping.insert(key.clone(), new_key.clone());
                display.insert(new_key, poisoned_name.clone());
            }
            None => {
                key_mapping.insert(key.clone(), key.clone());
                display.insert(key.clone(), original_display);
            }
        }
    }

    let remap = |key: &str| -> String {
        key_mapping.get(key).cloned().unwrap_or_else(|| key.to_string())
    };
    let mut edges = attack.edges.clone();
    for edge in &mut edges {
        edge.src_key = remap(&edge.src_key);
        edge.dst_key = remap(&edge.dst_key);
    }
    let poisoned = AttackGraph {
        seed_keys: attack.seed_keys.iter().map(|k| remap(k)).collect(),
        node_keys: attack.node_keys.iter().map(|k| remap(k)).collect(),
        edges,
        scores: attack
            .scores
            .iter()
            .map(|(k, v)| (remap(k), *v))
            .collect(),
    };
    Ok((
        PoisonPlan {
            rate,
            seed,
            mapping,
        },
        PoisonedAttack {
            attack: poisoned,
            display,
            key_mapping,
        },
    ))
}

/// `max(1, floor(rate * n / 100))`.
pub fn poison_domain_size(rate: f64, n: usize) -> usize {
    std::cmp::max(1, ((rate * n as f64) / 100.0).floor() as usize)
}

// ---------------------------------------------------------------------------
// Tactic consistency and summary similarity

/// Fraction of original tactics that survive poisoning, case-folded.
pub fn tactic_consistency(original: &[String], poisoned: &[String]) -> Result<f64, EvalError> {
    if original.is_empty() {
        return Err(EvalError::EmptyOriginalTactics);
    }
    let original_set: BTreeSet<String> = original.iter().map(|t| normalize_tactic(t)).collect();
    let poisoned_set: BTreeSet<String> = poisoned.iter().map(|t| normalize_tactic(t)).collect();
    let shared = original_set.intersection(&poisoned_set).count();
    Ok(shared as f64 / original_set.len() as f64)
}

/// Cosine similarity of whole-summary embeddings, in [-1, 1].
pub fn summary_similarity(
    provider: &dyn EmbeddingProvider,
    original: &str,
    poisoned: &str,
) -> Result<f64, EvalError> {
    if original.trim().is_empty() || poisoned.trim().is_empty() {
        return Err(EvalError::EmptySummary);
    }
    let a = crate::embed::embed_text(provider, original)?;
    let b = crate::embed::embed_text(provider, poisoned)?;
    Ok(a.dot(&b)?.clamp(-1.0, 1.0))
}

// ---------------------------------------------------------------------------
// Robustness sweep

/// Everything the sweep needs to run the assistant path on original and
/// poisoned graphs.
pub struct RobustnessContext<'a> {
    pub graph: &'a ProvenanceGraph,
    pub attack: &'a AttackGraph,
    pub f_db: &'a FunctionalityDb,
    pub b_db: &'a BehavioralDb,
    pub index: &'a SignatureIndex,
    pub assistant: &'a dyn ChatProvider,
    pub judges: [&'a dyn ChatProvider; 3],
    pub embedder: &'a dyn EmbeddingProvider,
    pub catalog: &'a TacticCatalog,
    /// Malicious node keys announced to the assistant.
    pub malicious: Vec<String>,
    pub max_sweeps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_tc: Option<f64>,
    pub alpha_r: f64,
    pub similarity: f64,
    pub poisoned_entities: usize,
    pub poisoned_labeled: usize,
}

fn run_assistant_path(
    ctx: &RobustnessContext<'_>,
    attack: &AttackGraph,
    display: &BTreeMap<String, String>,
    f_db: &FunctionalityDb,
) -> Result<AttackSummary, EvalError> {
    let linearized = linearize(attack, display)?;
    let unknown = flag_unknown_entities(ctx.assistant, &linearized.entity_names);
    let context = inject_context(&unknown, f_db);
    let malicious: Vec<String> = ctx
        .malicious
        .iter()
        .map(|k| display.get(k).cloned().unwrap_or_else(|| k.clone()))
        .collect();
    Ok(summarize_attack(
        ctx.assistant,
        &linearized,
        &context,
        &malicious,
        ctx.catalog,
    )?)
}

/// Classify every poisoned node behaviorally before summarization, using
/// the reference behavioral database. Returns how many got labels.
fn reclassify_poisoned(
    poisoned: &PoisonedAttack,
    original_graph: &ProvenanceGraph,
    f_db: &mut FunctionalityDb,
    b_db: &mut BehavioralDb,
    index: &SignatureIndex,
    max_sweeps: usize,
) -> usize {
    // Temporary graph over the poisoned attack subgraph, labels carried
    // over for untouched nodes only.
    let mut temp = ProvenanceGraph::new();
    for (old_key, new_key) in &poisoned.key_mapping {
        let poisoned_node = old_key != new_key;
        let mut names = BTreeSet::new();
        if let Some(name) = poisoned.display.get(new_key) {
            names.insert(name.clone());
        }
        let label = if poisoned_node {
            None
        } else {
            original_graph
                .nodes
                .get(old_key)
                .and_then(|n| n.functional_label.clone())
                .or_else(|| f_db.get(old_key).map(|e| e.label.clone()))
        };
        temp.nodes.insert(
            new_key.clone(),
            EntityNode {
                node_key: new_key.clone(),
                names,
                coarse_types: BTreeSet::new(),
                functional_label: label,
                first_seen_seq: 0,
            },
        );
    }
    temp.edges = poisoned.attack.edges.clone();
    temp.rebuild_adjacency();

    let poisoned_keys: Vec<String> = poisoned
        .key_mapping
        .iter()
        .filter(|(old, new)| old != new)
        .map(|(_, new)| new.clone())
        .collect();
    let mut labeled = 0usize;
    let mut index_snapshot = index.clone();
    for _ in 0..max_sweeps {
        let mut progressed = false;
        for key in &poisoned_keys {
            if temp.nodes[key].functional_label.is_some() {
                continue;
            }
            let profile = behavioral_profile(&temp, key, f_db);
            if profile.is_empty() {
                continue;
            }
            let query = profile_vector(&profile, &mut index_snapshot, false);
            if query.is_zero() {
                continue;
            }
            if let Ok((label, _)) = classify_unknown(&query, b_db) {
                temp.nodes.get_mut(key).expect("node").functional_label = Some(label.clone());
                let _ = f_db.insert(key, &label, LabelProvenance::Behavioral);
                if let Some(name) = poisoned.display.get(key) {
                    if name != key {
                        let _ = f_db.insert(name, &label, LabelProvenance::Behavioral);
                    }
                }
                b_db.insert(key, &label, query);
                labeled += 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    labeled
}

/// For each poisoning rate: poison, re-classify poisoned names behaviorally,
/// re-run the assistant, and compute tactic correctness, tactic consistency,
/// and summary similarity against the original run.
pub fn robustness_sweep(
    ctx: &RobustnessContext<'_>,
    rates: &[f64],
    seed: u64,
) -> Result<Vec<SweepRow>, EvalError> {
    if rates.is_empty() {
        return Ok(Vec::new());
    }
    let original_display = display_names(ctx.attack, ctx.graph);
    let original_summary = run_assistant_path(ctx, ctx.attack, &original_display, ctx.f_db)?;
    let original_tactics: Vec<String> = original_summary
        .tactics
        .iter()
        .map(|(t, _)| t.clone())
        .collect();

    let mut rows = Vec::with_capacity(rates.len());
    for &rate in rates {
        let (plan, poisoned) = match poison_names(ctx.attack, ctx.graph, rate, seed) {
            Ok(v) => v,
            Err(e) => {
                log::warn!("poisoning failed at rate {rate}: {e}");
                continue;
            }
        };
        let mut f_db = ctx.f_db.clone();
        let mut b_db = ctx.b_db.clone();
        let labeled = reclassify_poisoned(
            &poisoned,
            ctx.graph,
            &mut f_db,
            &mut b_db,
            ctx.index,
            ctx.max_sweeps,
        );
        let poisoned_malicious_ctx = RobustnessContext {
            malicious: ctx
                .malicious
                .iter()
                .map(|k| poisoned.key_mapping.get(k).cloned().unwrap_or_else(|| k.clone()))
                .collect(),
            ..ctx.clone()
        };
        let summary = match run_assistant_path(
            &poisoned_malicious_ctx,
            &poisoned.attack,
            &poisoned.display,
            &f_db,
        ) {
            Ok(s) => s,
            Err(e) => {
                log::warn!("assistant failed at rate {rate}: {e}");
                continue;
            }
        };
        let poisoned_tactics: Vec<String> =
            summary.tactics.iter().map(|(t, _)| t.clone()).collect();
        let alpha_tc = tactic_correctness(&summary, &ctx.judges, ctx.catalog)?;
        let alpha_r = tactic_consistency(&original_tactics, &poisoned_tactics)?;
        let similarity = summary_similarity(
            ctx.embedder,
            &original_summary.summary_text,
            &summary.summary_text,
        )?;
        rows.push(SweepRow {
            rate,
            alpha_tc,
            alpha_r,
            similarity,
            poisoned_entities: plan.mapping.len(),
            poisoned_labeled: labeled,
        });
    }
    Ok(rows)
}

impl Clone for RobustnessContext<'_> {
    fn clone(&self) -> Self {
        RobustnessContext {
            graph: self.graph,
            attack: self.attack,
            f_db: self.f_db,
            b_db: self.b_db,
            index: self.index,
            assistant: self.assistant,
            judges: self.judges,
            embedder: self.embedder,
            catalog: self.catalog,
            malicious: self.malicious.clone(),
            max_sweeps: self.max_sweeps,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn partition(items: &[(&str, u64)]) -> BTreeMap<String, u64> {
        items.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn ari_identity_up_to_relabeling() {
        let pred = partition(&[("a", 5), ("b", 5), ("c", 9), ("d", 9)]);
        let truth = partition(&[("a", 0), ("b", 0), ("c", 1), ("d", 1)]);
        assert!((adjusted_rand_index(&pred, &truth).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ari_hand_computed_case() {
        // pred = [0,0,1,1], truth = [0,0,0,1] over items a..d.
        let pred = partition(&[("a", 0), ("b", 0), ("c", 1), ("d", 1)]);
        let truth = partition(&[("a", 0), ("b", 0), ("c", 0), ("d", 1)]);
        // Contingency: (0,0)=2, (1,0)=1, (1,1)=1.
        // index = C(2,2)=1; rows: C(2,2)+C(2,2)=2; cols: C(3,2)+C(1,2)=3.
        // expected = 2*3/C(4,2)=1; max=(2+3)/2=2.5; ari=(1-1)/(2.5-1)=0.
        assert!((adjusted_rand_index(&pred, &truth).unwrap() - 0.0).abs() < 1e-12);
    }

    #[test]
    fn ari_single_pred_cluster_vs_two_truth_halves_is_zero() {
        let pred = partition(&[("a", 0), ("b", 0), ("c", 0), ("d", 0)]);
        let truth = partition(&[("a", 0), ("b", 0), ("c", 1), ("d", 1)]);
        assert!((adjusted_rand_index(&pred, &truth).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn ari_mismatched_items_error() {
        let pred = partition(&[("a", 0), ("b", 0)]);
        let truth = partition(&[("a", 0), ("z", 0)]);
        assert!(matches!(
            adjusted_rand_index(&pred, &truth),
            Err(EvalError::MismatchedItems)
        ));
    }

    fn ranking(items: &[(&str, f64, Option<&str>)]) -> LabeledRanking {
        LabeledRanking {
            items: items
                .iter()
                .map(|(k, s, a)| RankedItem {
                    node_key: k.to_string(),
                    score: *s,
                    label: match a {
                        Some(id) => ItemLabel::Attack {
                            attack_id: id.to_string(),
                        },
                        None => ItemLabel::Benign,
                    },
                })
                .collect(),
        }
    }

    #[test]
    fn auc_roc_perfect_and_ties() {
        let perfect = ranking(&[("a", 0.9, Some("x")), ("b", 0.1, None)]);
        assert!((auc_roc(&perfect).unwrap() - 1.0).abs() < 1e-12);
        let all_tied = ranking(&[("a", 0.5, Some("x")), ("b", 0.5, None), ("c", 0.5, None)]);
        assert!((auc_roc(&all_tied).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn auc_roc_pair_enumeration_case() {
        let r = ranking(&[("a", 0.9, Some("x")), ("b", 0.8, None), ("c", 0.7, Some("x"))]);
        // Pairs: (a,b) win, (c,b) loss -> 0.5.
        assert!((auc_roc(&r).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn auc_roc_single_class_error() {
        let r = ranking(&[("a", 0.9, Some("x"))]);
        assert!(matches!(auc_roc(&r), Err(EvalError::SingleClass)));
    }

    #[test]
    fn auc_pr_known_values() {
        // Single attack ranked first among 10.
        let mut items: Vec<(&str, f64, Option<&str>)> = vec![("atk", 1.0, Some("x"))];
        let benign_names = ["b0", "b1", "b2", "b3", "b4", "b5", "b6", "b7", "b8"];
        for (i, name) in benign_names.iter().enumerate() {
            items.push((name, 0.9 - i as f64 * 0.05, None));
        }
        assert!((auc_pr(&ranking(&items)).unwrap() - 1.0).abs() < 1e-12);

        // Single attack ranked last among 4 -> 1/4.
        let r = ranking(&[
            ("b0", 0.9, None),
            ("b1", 0.8, None),
            ("b2", 0.7, None),
            ("atk", 0.1, Some("x")),
        ]);
        assert!((auc_pr(&r).unwrap() - 0.25).abs() < 1e-12);

        // Two attacks at ranks 1 and 3 of 4: 0.5*1 + 0.5*(2/3).
        let r = ranking(&[
            ("a1", 0.9, Some("x")),
            ("b0", 0.8, None),
            ("a2", 0.7, Some("x")),
            ("b1", 0.6, None),
        ]);
        assert!((auc_pr(&r).unwrap() - (0.5 + 0.5 * (2.0 / 3.0))).abs() < 1e-12);
    }

    #[test]
    fn adp_known_values() {
        // One attack, node first.
        let r = ranking(&[("atk", 0.9, Some("x")), ("b", 0.1, None)]);
        assert!((adp(&r).unwrap() - 1.0).abs() < 1e-12);

        // Two attacks at ranks 1 and 4 of 5: (1 + 2/4) / 2 = 0.75.
        let r = ranking(&[
            ("a1", 0.9, Some("x")),
            ("b0", 0.8, None),
            ("b1", 0.7, None),
            ("a2", 0.6, Some("y")),
            ("b2", 0.5, None),
        ]);
        assert!((adp(&r).unwrap() - 0.75).abs() < 1e-12);

        // Attack tied with benign at the top; key order puts benign first.
        let r = ranking(&[("aaa", 0.9, None), ("zzz", 0.9, Some("x")), ("mid", 0.5, None)]);
        assert!((adp(&r).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn poison_domain_size_formula() {
        assert_eq!(poison_domain_size(0.0, 10), 1);
        assert_eq!(poison_domain_size(100.0, 10), 10);
        assert_eq!(poison_domain_size(25.0, 10), 2);
        assert_eq!(poison_domain_size(19.0, 10), 1);
    }

    #[test]
    fn poisoned_name_preserves_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let poisoned = poison_one_name("agent.exe", &mut rng);
        assert!(poisoned.ends_with(".exe"));
        assert_eq!(poisoned.len(), "agent.exe".len());
        assert_ne!(poisoned, "agent.exe");
        let base = poisoned.strip_suffix(".exe").unwrap();
        assert_eq!(base.len(), 5);
        assert!(base.chars().next().unwrap().is_ascii_lowercase());
        assert!(base.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit()));

        let path = poison_one_name("/usr/lib/tool.so", &mut rng);
        assert_eq!(path.matches('/').count(), 3);
        assert!(path.ends_with(".so"));
    }

    #[test]
    fn tactic_consistency_cases() {
        let a = vec!["Reconnaissance".to_string(), "Execution".to_string()];
        assert!((tactic_consistency(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let b = vec!["reconnaissance".to_string()];
        assert!((tactic_consistency(&a, &b).unwrap() - 0.5).abs() < 1e-12);
        let c = vec!["Impact".to_string()];
        assert!((tactic_consistency(&a, &c).unwrap()).abs() < 1e-12);
        assert!(matches!(
            tactic_consistency(&[], &a),
            Err(EvalError::EmptyOriginalTactics)
        ));
    }

    #[test]
    fn summary_similarity_cases() {
        let embedder = crate::embed::HashEmbedder::default();
        let text = "The process issued repeated DNS queries to several hosts.";
        let identical = summary_similarity(&embedder, text, text).unwrap();
        assert!((identical - 1.0).abs() <= 1e-6);

        let unrelated = summary_similarity(
            &embedder,
            text,
            "zzqv wkxj mbpl ghrt yfnd uceo aslw",
        )
        .unwrap();
        assert!(unrelated < 0.5, "unrelated similarity {unrelated}");

        let near = summary_similarity(
            &embedder,
            text,
            "The process issued repeated DNS queries to many hosts.",
        )
        .unwrap();
        assert!(near > unrelated);

        assert!(matches!(
            summary_similarity(&embedder, "", text),
            Err(EvalError::EmptySummary)
        ));
    }
}
