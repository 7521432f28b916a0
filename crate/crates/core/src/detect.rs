//! Detector interface: a rarity-based reference detector over behavioral
//! signatures and labels, attack-graph construction from top-ranked seeds,
//! and the CSV plugin contract for external detectors.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::enrich::{behavioral_profile, BehavioralSignature, FunctionalityDb};
use crate::graph::{ProvEdge, ProvenanceGraph};
use crate::jsonl::{self, JsonlError};

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("empty graph")]
    EmptyGraph,
    #[error("empty score list")]
    EmptyScores,
    #[error("malformed score row {row}: {cause}")]
    BadScoreRow { row: usize, cause: String },
    #[error("score csv i/o: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
}

/// Anomaly score for one node, in [0, 1], higher is more anomalous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeScore {
    pub node_key: String,
    pub score: f64,
}

/// Deterministic ranking order: score descending, then node key ascending.
pub fn rank_scores(scores: &mut [NodeScore]) {
    scores.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.node_key.cmp(&b.node_key))
    });
}

/// Frequencies of signatures and labels observed in benign data.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RarityModel {
    pub signature_counts: BTreeMap<String, u64>,
    pub label_counts: BTreeMap<String, u64>,
    pub nodes_observed: u64,
}

fn signature_key(sig: &BehavioralSignature) -> String {
    format!("{:?}|{}|{}", sig.direction, sig.itype, sig.neighbor_label)
}

/// Count every signature and label occurrence across benign nodes.
pub fn fit_reference_detector(
    benign_graph: &ProvenanceGraph,
    f_db: &FunctionalityDb,
) -> Result<RarityModel, DetectError> {
    if benign_graph.nodes.is_empty() {
        return Err(DetectError::EmptyGraph);
    }
    let mut model = RarityModel::default();
    for node in benign_graph.nodes.values() {
        model.nodes_observed += 1;
        if let Some(label) = &node.functional_label {
            *model.label_counts.entry(label.clone()).or_insert(0) += 1;
        }
        for sig in behavioral_profile(benign_graph, &node.node_key, f_db) {
            *model.signature_counts.entry(signature_key(&sig)).or_insert(0) += 1;
        }
    }
    Ok(model)
}

/// Novelty score: half from the fraction of the node's signatures unseen in
/// benign data, half from whether its label is unseen. Nodes with empty
/// profiles score zero and are flagged.
pub fn score_nodes(
    model: &RarityModel,
    graph: &ProvenanceGraph,
    f_db: &FunctionalityDb,
) -> Vec<NodeScore> {
    let mut scores = Vec::with_capacity(graph.nodes.len());
    for node in graph.nodes.values() {
        let profile = behavioral_profile(graph, &node.node_key, f_db);
        let score = if profile.is_empty() {
            log::warn!("node {} has an empty profile; scoring 0", node.node_key);
            0.0
        } else {
            let unseen = profile
                .iter()
                .filter(|sig| !model.signature_counts.contains_key(&signature_key(sig)))
                .count();
            let signature_part = unseen as f64 / profile.len() as f64;
            let label_part = match &node.functional_label {
                Some(label) => {
                    if model.label_counts.contains_key(label) {
                        0.0
                    } else {
                        1.0
                    }
                }
                None => 1.0,
            };
            0.5 * signature_part + 0.5 * label_part
        };
        scores.push(NodeScore {
            node_key: node.node_key.clone(),
            score,
        });
    }
    rank_scores(&mut scores);
    scores
}

/// Subgraph induced by the top-ranked seeds plus one-hop expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackGraph {
    pub seed_keys: Vec<String>,
    pub node_keys: BTreeSet<String>,
    pub edges: Vec<ProvEdge>,
    pub scores: BTreeMap<String, f64>,
}

impl AttackGraph {
    pub fn is_empty(&self) -> bool {
        self.node_keys.is_empty()
    }

    pub fn save(&self, path: &Path) -> Result<(), JsonlError> {
        jsonl::write_jsonl(path, std::iter::once(self))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, JsonlError> {
        let mut items: Vec<AttackGraph> = jsonl::read_jsonl(path)?;
        items.pop().ok_or_else(|| JsonlError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::UnexpectedEof, "empty attack graph file"),
        })
    }
}

/// Select the top `n_seed` nodes as seeds, include all their one-hop
/// neighbors and connecting edges, plus any edge between two included
/// nodes. Edges come out time-ordered (arrival order as tie-break).
pub fn build_attack_graph(
    graph: &ProvenanceGraph,
    scores: &[NodeScore],
    n_seed: usize,
) -> Result<AttackGraph, DetectError> {
    if scores.is_empty() {
        return Err(DetectError::EmptyScores);
    }
    let mut ranked = scores.to_vec();
    rank_scores(&mut ranked);
    let seed_keys: Vec<String> = ranked
        .iter()
        .take(n_seed)
        .map(|s| s.node_key.clone())
        .collect();

    let mut node_keys: BTreeSet<String> = seed_keys.iter().cloned().collect();
    for seed in &seed_keys {
        for edge in graph.in_edges(seed) {
            node_keys.insert(edge.src_key.clone());
        }
        for edge in graph.out_edges(seed) {
            node_keys.insert(edge.dst_key.clone());
        }
    }
    let mut edges: Vec<ProvEdge> = graph
        .edges
        .iter()
        .filter(|e| node_keys.contains(&e.src_key) && node_keys.contains(&e.dst_key))
        .cloned()
        .collect();
    edges.sort_by_key(|e| e.order_key());

    let score_map: BTreeMap<String, f64> = ranked
        .iter()
        .filter(|s| node_keys.contains(&s.node_key))
        .map(|s| (s.node_key.clone(), s.score))
        .collect();
    Ok(AttackGraph {
        seed_keys,
        node_keys,
        edges,
        scores: score_map,
    })
}

/// Write node scores as the plugin-contract CSV: header `node_key,score`,
/// '.' decimal separator.
pub fn write_score_csv(path: &Path, scores: &[NodeScore]) -> Result<(), DetectError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["node_key", "score"])?;
    for s in scores {
        writer.write_record([s.node_key.as_str(), &format!("{}", s.score)])?;
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Read a plugin score CSV back against a known node set. Nodes missing
/// from the file default to 0 with a warning; non-numeric scores fail with
/// their row number.
pub fn read_score_csv(
    path: &Path,
    expected_nodes: &BTreeSet<String>,
) -> Result<Vec<NodeScore>, DetectError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut by_key: BTreeMap<String, f64> = BTreeMap::new();
    for (idx, row) in reader.records().enumerate() {
        let row = row?;
        let row_no = idx + 2; // header is row 1
        let node_key = row
            .get(0)
            .ok_or_else(|| DetectError::BadScoreRow {
                row: row_no,
                cause: "missing node_key column".to_string(),
            })?
            .to_string();
        let score: f64 = row
            .get(1)
            .ok_or_else(|| DetectError::BadScoreRow {
                row: row_no,
                cause: "missing score column".to_string(),
            })?
            .trim()
            .parse()
            .map_err(|e| DetectError::BadScoreRow {
                row: row_no,
                cause: format!("non-numeric score: {e}"),
            })?;
        by_key.insert(node_key, score);
    }
    let mut out = Vec::with_capacity(expected_nodes.len());
    for key in expected_nodes {
        match by_key.get(key) {
            Some(&score) => out.push(NodeScore {
                node_key: key.clone(),
                score,
            }),
            None => {
                log::warn!("score file missing node {key}; defaulting to 0");
                out.push(NodeScore {
                    node_key: key.clone(),
                    score: 0.0,
                });
            }
        }
    }
    rank_scores(&mut out);
    Ok(out)
}
