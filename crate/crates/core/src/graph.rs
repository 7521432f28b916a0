//! Entity resolution and assembly of provenance records into the
//! provenance graph consumed by enrichment, detection, and the assistant.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::enrich::normalize_entity_name;
use crate::jsonl::{self, JsonlError};
use crate::types::{ProvenanceRecord, Timestamp};

/// Default edge aggregation bucket: one second.
pub const DEFAULT_BUCKET_MICROS: i64 = 1_000_000;

/// Cap on source log ids sampled per edge.
const EDGE_LOG_SAMPLE_CAP: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityNode {
    pub node_key: String,
    pub names: BTreeSet<String>,
    pub coarse_types: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functional_label: Option<String>,
    pub first_seen_seq: u64,
}

impl EntityNode {
    /// Lexicographically smallest name, falling back to the key.
    pub fn display_name(&self) -> &str {
        self.names.iter().next().map(String::as_str).unwrap_or(&self.node_key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvEdge {
    pub src_key: String,
    pub dst_key: String,
    pub itype: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<Timestamp>,
    /// Aggregated repetitions within one time bucket.
    pub count: u64,
    /// Fold index of the first contributing record; ordering tie-break.
    pub arrival_idx: u64,
    pub source_log_ids: Vec<String>,
}

impl ProvEdge {
    pub fn epoch_micros(&self) -> Option<i64> {
        self.time.as_ref().and_then(|t| t.epoch_micros)
    }

    fn bucket(&self, bucket_micros: i64) -> Option<i64> {
        self.epoch_micros().map(|e| e.div_euclid(bucket_micros))
    }

    /// Sort key: time when present, then arrival order.
    pub fn order_key(&self) -> (i64, u64) {
        (self.epoch_micros().unwrap_or(i64::MAX), self.arrival_idx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Src,
    Dst,
}

/// Resolve one endpoint of a record to a stable node key: named entities by
/// their normalized name, IP endpoints verbatim, the rest scoped to their
/// source log so placeholder ids never merge across logs.
pub fn resolve_entity(record: &ProvenanceRecord, side: Side) -> String {
    let (id, name, coarse_type) = match side {
        Side::Src => (&record.sid, &record.sname, &record.stype),
        Side::Dst => (&record.did, &record.dname, &record.dtype),
    };
    if let Some(name) = name {
        if !name.is_empty() {
            return normalize_entity_name(name);
        }
    }
    let endpoint_typed = coarse_type
        .as_deref()
        .map(|t| t.to_lowercase().contains("address"))
        .unwrap_or(false);
    if endpoint_typed || looks_like_endpoint(id) {
        return id.clone();
    }
    format!("anon:{}:{}", record.source_log_id, id)
}

/// Heuristic for `host:port` / `ip:port` shaped identifiers.
pub fn looks_like_endpoint(id: &str) -> bool {
    let Some((host, port)) = id.rsplit_once(':') else {
        return false;
    };
    !host.is_empty()
        && !port.is_empty()
        && port.chars().all(|c| c.is_ascii_digit())
        && host.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | ':' | '[' | ']' | '-'))
        && host.chars().any(|c| c.is_ascii_digit() || c == '.')
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ProvenanceGraph {
    pub nodes: BTreeMap<String, EntityNode>,
    pub edges: Vec<ProvEdge>,
    pub bucket_micros: i64,
    records_added: u64,
    /// node key -> (incoming edge indices, outgoing edge indices)
    #[serde(skip)]
    adjacency: BTreeMap<String, (Vec<usize>, Vec<usize>)>,
}

impl ProvenanceGraph {
    pub fn new() -> Self {
        ProvenanceGraph {
            bucket_micros: DEFAULT_BUCKET_MICROS,
            ..Default::default()
        }
    }

    pub fn with_bucket_micros(bucket_micros: i64) -> Self {
        ProvenanceGraph {
            bucket_micros: bucket_micros.max(1),
            ..Default::default()
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn records_added(&self) -> u64 {
        self.records_added
    }

    fn upsert_node(&mut self, key: &str, name: Option<&str>, coarse_type: Option<&str>, seq: u64) {
        let node = self.nodes.entry(key.to_string()).or_insert_with(|| EntityNode {
            node_key: key.to_string(),
            names: BTreeSet::new(),
            coarse_types: BTreeSet::new(),
            functional_label: None,
            first_seen_seq: seq,
        });
        if let Some(name) = name {
            if !name.is_empty() {
                node.names.insert(name.to_string());
            }
        }
        if let Some(t) = coarse_type {
            if !t.is_empty() {
                node.coarse_types.insert(t.to_string());
            }
        }
    }

    /// Insert one record: endpoints resolved and upserted, then the edge
    /// either aggregates into an existing (src, dst, itype, time-bucket)
    /// edge or appends in arrival order.
    pub fn add_record(&mut self, record: &ProvenanceRecord) {
        let seq = self.records_added;
        self.records_added += 1;
        let src_key = resolve_entity(record, Side::Src);
        let dst_key = resolve_entity(record, Side::Dst);
        self.upsert_node(&src_key, record.sname.as_deref(), record.stype.as_deref(), seq);
        self.upsert_node(&dst_key, record.dname.as_deref(), record.dtype.as_deref(), seq);

        let incoming_bucket = record
            .time
            .as_ref()
            .and_then(|t| t.epoch_micros)
            .map(|e| e.div_euclid(self.bucket_micros));
        let existing = self.edges.iter_mut().position(|e| {
            e.src_key == src_key
                && e.dst_key == dst_key
                && e.itype == record.itype
                && e.bucket(self.bucket_micros) == incoming_bucket
        });
        match existing {
            Some(idx) => {
                let edge = &mut self.edges[idx];
                edge.count += 1;
                if edge.source_log_ids.len() < EDGE_LOG_SAMPLE_CAP
                    && !edge.source_log_ids.contains(&record.source_log_id)
                {
                    edge.source_log_ids.push(record.source_log_id.clone());
                }
            }
            None => {
                let idx = self.edges.len();
                self.edges.push(ProvEdge {
                    src_key: src_key.clone(),
                    dst_key: dst_key.clone(),
                    itype: record.itype.clone(),
                    time: record.time.clone(),
                    count: 1,
                    arrival_idx: seq,
                    source_log_ids: vec![record.source_log_id.clone()],
                });
                self.adjacency.entry(dst_key.clone()).or_default().0.push(idx);
                self.adjacency.entry(src_key.clone()).or_default().1.push(idx);
            }
        }
    }

    pub fn in_edges(&self, key: &str) -> impl Iterator<Item = &ProvEdge> {
        self.adjacency
            .get(key)
            .map(|(ins, _)| ins.as_slice())
            .unwrap_or(&[])
            .iter()
            .map(|&i| &self.edges[i])
    }

    pub fn out_edges(&self, key: &str) -> impl Iterator<Item = &ProvEdge> {
        self.adjacency
            .get(key)
            .map(|(_, outs)| outs.as_slice())
            .unwrap_or(&[])
            .iter()
            .map(|&i| &self.edges[i])
    }

    /// Rebuild adjacency after deserialization or bulk edits.
    pub fn rebuild_adjacency(&mut self) {
        self.adjacency.clear();
        for (idx, edge) in self.edges.iter().enumerate() {
            self.adjacency
                .entry(edge.dst_key.clone())
                .or_default()
                .0
                .push(idx);
            self.adjacency
                .entry(edge.src_key.clone())
                .or_default()
                .1
                .push(idx);
        }
    }

    pub fn save(&self, nodes_path: &Path, edges_path: &Path) -> Result<(), JsonlError> {
        jsonl::write_jsonl(nodes_path, self.nodes.values())?;
        jsonl::write_jsonl(edges_path, self.edges.iter())?;
        Ok(())
    }

    pub fn load(nodes_path: &Path, edges_path: &Path) -> Result<Self, JsonlError> {
        let nodes: Vec<EntityNode> = jsonl::read_jsonl(nodes_path)?;
        let edges: Vec<ProvEdge> = jsonl::read_jsonl(edges_path)?;
        let mut graph = ProvenanceGraph::new();
        graph.records_added = edges.iter().map(|e| e.count).sum();
        for node in nodes {
            graph.nodes.insert(node.node_key.clone(), node);
        }
        graph.edges = edges;
        graph.rebuild_adjacency();
        Ok(graph)
    }

    /// Edge CSV for external detectors: src,dst,itype,time,count.
    pub fn write_edge_csv(&self, path: &Path) -> Result<(), csv::Error> {
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record(["src", "dst", "itype", "time", "count"])?;
        for edge in &self.edges {
            writer.write_record([
                edge.src_key.as_str(),
                edge.dst_key.as_str(),
                edge.itype.as_str(),
                edge.time.as_ref().map(|t| t.raw.as_str()).unwrap_or(""),
                &edge.count.to_string(),
            ])?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Fold records in order into a graph.
pub fn build_graph(records: &[ProvenanceRecord]) -> ProvenanceGraph {
    let mut graph = ProvenanceGraph::new();
    for record in records {
        graph.add_record(record);
    }
    graph
}
