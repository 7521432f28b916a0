//! Log-type discovery: greedy farthest-point sampling over per-window
//! embeddings, leader-style streaming micro-clustering with exponential
//! decay, and representative selection into the candidate log-set.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{cosine_distance, embed_text, fnv1a_64, EmbedError, Embedding, EmbeddingProvider};
use crate::types::LogRecord;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("empty input")]
    EmptyInput,
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// One micro-cluster standing for one discovered log type.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MicroCluster {
    pub cluster_id: u64,
    pub center: Embedding,
    /// Decayed member count.
    pub weight: f64,
    pub last_update_seq: u64,
    /// Bounded reservoir of member log ids, cap 64.
    pub member_sample: Vec<String>,
    pub members_seen: u64,
}

pub const MEMBER_SAMPLE_CAP: usize = 64;

impl MicroCluster {
    fn absorb(&mut self, log_id: &str, embedding: &Embedding, seq: u64) {
        let total = self.weight + 1.0;
        let mixed: Vec<f64> = self
            .center
            .vector
            .iter()
            .zip(embedding.vector.iter())
            .map(|(c, x)| (c * self.weight + x) / total)
            .collect();
        self.center = Embedding::from_unnormalized(mixed);
        self.weight = total;
        self.last_update_seq = seq;
        self.reservoir_add(log_id);
    }

    fn reservoir_add(&mut self, log_id: &str) {
        self.members_seen += 1;
        if self.member_sample.len() < MEMBER_SAMPLE_CAP {
            self.member_sample.push(log_id.to_string());
            return;
        }
        // Hash-based reservoir keeps the sample deterministic without
        // carrying RNG state through checkpoints.
        let key = format!("{}:{}", self.cluster_id, log_id);
        let slot = fnv1a_64(key.as_bytes()) % self.members_seen;
        if (slot as usize) < MEMBER_SAMPLE_CAP {
            self.member_sample[slot as usize] = log_id.to_string();
        }
    }
}

/// Streaming clusterer state. Cluster ids are never reused.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClustererState {
    pub clusters: Vec<MicroCluster>,
    /// Assignment radius in cosine distance.
    pub radius: f64,
    /// Decay exponent lambda; weights decay by 2^(-lambda * delta_seq).
    pub decay: f64,
    /// Clusters dropping below this weight are pruned.
    pub min_weight: f64,
    pub next_cluster_id: u64,
    last_decay_seq: u64,
}

impl ClustererState {
    pub fn new(radius: f64, decay: f64, min_weight: f64) -> Self {
        ClustererState {
            clusters: Vec::new(),
            radius,
            decay,
            min_weight,
            next_cluster_id: 0,
            last_decay_seq: 0,
        }
    }

    /// Rebuild a state from checkpointed micro-clusters.
    pub fn from_clusters(clusters: Vec<MicroCluster>, radius: f64, decay: f64, min_weight: f64) -> Self {
        let next_cluster_id = clusters.iter().map(|c| c.cluster_id + 1).max().unwrap_or(0);
        let last_decay_seq = clusters.iter().map(|c| c.last_update_seq).max().unwrap_or(0);
        ClustererState {
            clusters,
            radius,
            decay,
            min_weight,
            next_cluster_id,
            last_decay_seq,
        }
    }

    fn apply_decay(&mut self, seq: u64) {
        if self.decay > 0.0 && seq > self.last_decay_seq {
            let delta = (seq - self.last_decay_seq) as f64;
            let factor = (2.0f64).powf(-self.decay * delta);
            for cluster in &mut self.clusters {
                cluster.weight *= factor;
            }
            self.clusters.retain(|c| c.weight >= self.min_weight);
        }
        self.last_decay_seq = seq;
    }

    /// Nearest live cluster by cosine distance; ties resolve to the lowest
    /// cluster id by iteration order.
    pub fn nearest(&self, embedding: &Embedding) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (idx, cluster) in self.clusters.iter().enumerate() {
            let dist = cosine_distance(&cluster.center, embedding).ok()?;
            match best {
                Some((_, best_dist)) if dist >= best_dist => {}
                _ => best = Some((idx, dist)),
            }
        }
        best
    }

    /// Insert one sampled log. Assigns to the nearest center within the
    /// radius, updating it as a weight-weighted renormalized mean, or opens
    /// a new cluster.
    pub fn insert(&mut self, log_id: &str, embedding: &Embedding, seq: u64) -> u64 {
        self.apply_decay(seq);
        if let Some((idx, dist)) = self.nearest(embedding) {
            if dist <= self.radius {
                let cluster = &mut self.clusters[idx];
                cluster.absorb(log_id, embedding, seq);
                return cluster.cluster_id;
            }
        }
        let cluster_id = self.next_cluster_id;
        self.next_cluster_id += 1;
        let mut fresh = MicroCluster {
            cluster_id,
            center: embedding.clone(),
            weight: 1.0,
            last_update_seq: seq,
            member_sample: Vec::new(),
            members_seen: 0,
        };
        fresh.reservoir_add(log_id);
        self.clusters.push(fresh);
        cluster_id
    }
}

/// Representative logs per discovered type for one window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateLogSet {
    pub window_id: u64,
    pub entries: Vec<CandidateEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateEntry {
    pub log_id: String,
    pub raw_text: String,
    pub cluster_id: u64,
}

/// Greedy farthest-point sampling. The first pick maximizes cosine distance
/// to the mean vector; each later pick maximizes its minimum cosine
/// distance to all prior picks. Ties resolve to the lowest index; output
/// order is selection order.
pub fn gfp_sample(embeddings: &[Embedding], k: usize) -> Result<Vec<usize>, ClusterError> {
    if embeddings.is_empty() {
        return Err(ClusterError::EmptyInput);
    }
    let n = embeddings.len();
    let want = k.min(n).max(1);
    let dim = embeddings[0].dim();
    let mut mean = vec![0.0f64; dim];
    for e in embeddings {
        for (m, x) in mean.iter_mut().zip(e.vector.iter()) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mean = Embedding::from_unnormalized(mean);

    let mut selected = Vec::with_capacity(want);
    let first = if mean.is_zero() {
        0
    } else {
        let mut best = 0usize;
        let mut best_dist = f64::NEG_INFINITY;
        for (idx, e) in embeddings.iter().enumerate() {
            let dist = cosine_distance(e, &mean)?;
            if dist > best_dist {
                best_dist = dist;
                best = idx;
            }
        }
        best
    };
    selected.push(first);

    let mut min_dist: Vec<f64> = embeddings
        .iter()
        .map(|e| cosine_distance(e, &embeddings[first]).unwrap_or(f64::INFINITY))
        .collect();
    while selected.len() < want {
        let mut best = usize::MAX;
        let mut best_dist = f64::NEG_INFINITY;
        for (idx, &dist) in min_dist.iter().enumerate() {
            if selected.contains(&idx) {
                continue;
            }
            if dist > best_dist {
                best_dist = dist;
                best = idx;
            }
        }
        selected.push(best);
        for (idx, slot) in min_dist.iter_mut().enumerate() {
            let dist = cosine_distance(&embeddings[idx], &embeddings[best])?;
            if dist < *slot {
                *slot = dist;
            }
        }
    }
    Ok(selected)
}

/// Uniform random sample without replacement of size min(m, |c_j|) per
/// cluster, deterministic given the seed. Clusters are visited in
/// ascending cluster id.
pub fn select_representatives(
    window_id: u64,
    window_members: &BTreeMap<u64, Vec<String>>,
    texts: &BTreeMap<String, String>,
    m: usize,
    rng_seed: u64,
) -> CandidateLogSet {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut entries = Vec::new();
    for (&cluster_id, members) in window_members {
        let take = m.min(members.len());
        let picked = rand::seq::index::sample(&mut rng, members.len(), take);
        let mut indices: Vec<usize> = picked.into_iter().collect();
        indices.sort_unstable();
        for idx in indices {
            let log_id = &members[idx];
            entries.push(CandidateEntry {
                log_id: log_id.clone(),
                raw_text: texts.get(log_id).cloned().unwrap_or_default(),
                cluster_id,
            });
        }
    }
    CandidateLogSet { window_id, entries }
}

/// Result of processing one window of logs.
#[derive(Debug, Clone)]
pub struct WindowOutcome {
    pub candidate_set: CandidateLogSet,
    /// Every log in the window mapped to a cluster id (sampled logs by
    /// insertion, the rest by nearest live center without state mutation).
    pub assignments: BTreeMap<String, u64>,
}

/// Embed a window, GFP-sample `k` logs, insert only those into the
/// clusterer, assign the remainder to their nearest centers, and build the
/// candidate log-set from the sampled members.
pub fn process_window(
    state: &mut ClustererState,
    logs: &[LogRecord],
    provider: &dyn EmbeddingProvider,
    k: usize,
    m: usize,
    rng_seed: u64,
) -> Result<WindowOutcome, ClusterError> {
    if logs.is_empty() {
        return Err(ClusterError::EmptyInput);
    }
    let window_id = logs[0].window_id;
    let embeddings: Vec<Embedding> = logs
        .iter()
        .map(|l| embed_text(provider, &l.raw_text))
        .collect::<Result<_, _>>()?;

    let mut sampled = gfp_sample(&embeddings, k)?;
    sampled.sort_unstable();

    let mut assignments = BTreeMap::new();
    let mut window_members: BTreeMap<u64, Vec<String>> = BTreeMap::new();
    let mut texts = BTreeMap::new();
    for &idx in &sampled {
        let log = &logs[idx];
        let cluster_id = state.insert(&log.log_id, &embeddings[idx], log.arrival_seq);
        assignments.insert(log.log_id.clone(), cluster_id);
        window_members
            .entry(cluster_id)
            .or_default()
            .push(log.log_id.clone());
        texts.insert(log.log_id.clone(), log.raw_text.clone());
    }
    for (idx, log) in logs.iter().enumerate() {
        if assignments.contains_key(&log.log_id) {
            continue;
        }
        if let Some((slot, _)) = state.nearest(&embeddings[idx]) {
            assignments.insert(log.log_id.clone(), state.clusters[slot].cluster_id);
        }
    }

    let candidate_set = select_representatives(window_id, &window_members, &texts, m, rng_seed);
    Ok(WindowOutcome {
        candidate_set,
        assignments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::HashEmbedder;

    fn unit(theta_deg: f64) -> Embedding {
        let theta = theta_deg.to_radians();
        Embedding::from_unnormalized(vec![theta.cos(), theta.sin()])
    }

    /// Brute-force greedy oracle: same selection law, naive evaluation.
    fn gfp_oracle(embeddings: &[Embedding], k: usize) -> Vec<usize> {
        let n = embeddings.len();
        let dim = embeddings[0].dim();
        let mut mean = vec![0.0f64; dim];
        for e in embeddings {
            for (m, x) in mean.iter_mut().zip(e.vector.iter()) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mean = Embedding::from_unnormalized(mean);
        let mut picks: Vec<usize> = Vec::new();
        while picks.len() < k.min(n) {
            let mut best = usize::MAX;
            let mut best_score = f64::NEG_INFINITY;
            for idx in 0..n {
                if picks.contains(&idx) {
                    continue;
                }
                let score = if picks.is_empty() {
                    if mean.is_zero() {
                        if idx == 0 {
                            f64::INFINITY
                        } else {
                            f64::NEG_INFINITY
                        }
                    } else {
                        cosine_distance(&embeddings[idx], &mean).unwrap()
                    }
                } else {
                    picks
                        .iter()
                        .map(|&p| cosine_distance(&embeddings[idx], &embeddings[p]).unwrap())
                        .fold(f64::INFINITY, f64::min)
                };
                if score > best_score {
                    best_score = score;
                    best = idx;
                }
            }
            picks.push(best);
        }
        picks
    }

    #[test]
    fn single_element_saturates() {
        let picks = gfp_sample(&[unit(10.0)], 5).unwrap();
        assert_eq!(picks, vec![0]);
    }

    #[test]
    fn three_vectors_pick_the_extremes() {
        let embeddings = [unit(0.0), unit(5.0), unit(90.0)];
        let picks = gfp_sample(&embeddings, 2).unwrap();
        assert_eq!(picks, gfp_oracle(&embeddings, 2));
        // The 90-degree vector is farthest from the mean, then 0 degrees is
        // farthest from it.
        assert_eq!(picks, vec![2, 0]);
    }

    #[test]
    fn k_equals_n_is_a_permutation() {
        let embeddings = [unit(0.0), unit(30.0), unit(60.0), unit(90.0)];
        let mut picks = gfp_sample(&embeddings, 4).unwrap();
        picks.sort_unstable();
        assert_eq!(picks, vec![0, 1, 2, 3]);
    }

    #[test]
    fn matches_bruteforce_oracle_on_random_instances() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.random_range(1..=24);
            let k = rng.random_range(1..=n);
            let embeddings: Vec<Embedding> = (0..n)
                .map(|_| {
                    Embedding::from_unnormalized(vec![
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    ])
                })
                .collect();
            assert_eq!(gfp_sample(&embeddings, k).unwrap(), gfp_oracle(&embeddings, k));
        }
    }

    #[test]
    fn first_insert_opens_cluster_zero() {
        let mut state = ClustererState::new(0.3, 0.0, 0.5);
        let id = state.insert("L0", &unit(0.0), 0);
        assert_eq!(id, 0);
        assert_eq!(state.clusters.len(), 1);
    }

    #[test]
    fn identical_insert_reuses_the_cluster() {
        let mut state = ClustererState::new(0.3, 0.0, 0.5);
        state.insert("L0", &unit(0.0), 0);
        let id = state.insert("L1", &unit(0.0), 1);
        assert_eq!(id, 0);
        assert!((state.clusters[0].weight - 2.0).abs() < 1e-9);
        assert_eq!(state.clusters.len(), 1);
    }

    #[test]
    fn insert_outside_radius_opens_a_new_cluster() {
        let mut state = ClustererState::new(0.3, 0.0, 0.5);
        state.insert("L0", &unit(0.0), 0);
        // cos distance 1 - cos(theta); pick theta so distance = 0.31.
        let theta = (1.0f64 - 0.31).acos().to_degrees();
        let id = state.insert("L1", &unit(theta), 1);
        assert_eq!(id, 1);
        assert_eq!(state.clusters.len(), 2);
    }

    #[test]
    fn center_stays_unit_norm_after_updates() {
        let mut state = ClustererState::new(0.5, 0.0, 0.5);
        state.insert("L0", &unit(0.0), 0);
        state.insert("L1", &unit(20.0), 1);
        state.insert("L2", &unit(10.0), 2);
        let norm = state.clusters[0]
            .center
            .vector
            .iter()
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt();
        assert!((norm - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn decay_prunes_stale_clusters() {
        let mut state = ClustererState::new(0.1, 1.0, 0.5);
        state.insert("L0", &unit(0.0), 0);
        // Far away, two sequence steps later: the old cluster decays to 1/4.
        let id = state.insert("L1", &unit(90.0), 2);
        assert_eq!(id, 1);
        assert_eq!(state.clusters.len(), 1);
        assert_eq!(state.clusters[0].cluster_id, 1);
    }

    #[test]
    fn representatives_saturate_small_clusters() {
        let mut members = BTreeMap::new();
        members.insert(0u64, vec!["a".to_string(), "b".to_string()]);
        let mut texts = BTreeMap::new();
        texts.insert("a".to_string(), "text-a".to_string());
        texts.insert("b".to_string(), "text-b".to_string());
        let set = select_representatives(0, &members, &texts, 5, 42);
        assert_eq!(set.entries.len(), 2);
    }

    #[test]
    fn representatives_are_seed_deterministic() {
        let members: BTreeMap<u64, Vec<String>> = [(0u64, (0..100).map(|i| format!("L{i}")).collect())]
            .into_iter()
            .collect();
        let texts: BTreeMap<String, String> = (0..100)
            .map(|i| (format!("L{i}"), format!("text {i}")))
            .collect();
        let a = select_representatives(0, &members, &texts, 3, 9);
        let b = select_representatives(0, &members, &texts, 3, 9);
        assert_eq!(a, b);
        assert_eq!(a.entries.len(), 3);
    }

    #[test]
    fn representative_count_sums_cluster_minima() {
        let members: BTreeMap<u64, Vec<String>> = [
            (0u64, vec!["a".into(), "b".into(), "c".into(), "d".into()]),
            (1u64, vec!["e".into()]),
        ]
        .into_iter()
        .collect();
        let texts = BTreeMap::new();
        let set = select_representatives(0, &members, &texts, 2, 1);
        assert_eq!(set.entries.len(), 3);
    }

    #[test]
    fn window_of_one_log_is_its_own_candidate() {
        let provider = HashEmbedder::default();
        let mut state = ClustererState::new(0.3, 0.0, 0.5);
        let logs = vec![LogRecord::new("L0", "EVENT pid=1 exec=/bin/ls user=root", 0)];
        let outcome = process_window(&mut state, &logs, &provider, 4, 3, 7).unwrap();
        assert_eq!(outcome.candidate_set.entries.len(), 1);
        assert_eq!(outcome.assignments.len(), 1);
    }

    #[test]
    fn gfp_spans_both_formats_in_a_window() {
        let provider = HashEmbedder::default();
        let mut state = ClustererState::new(0.3, 0.0, 0.5);
        let mut logs = Vec::new();
        for i in 0..5 {
            logs.push(LogRecord::new(
                format!("A{i}"),
                format!("EVENT pid={i} exec=/usr/bin/tool{i} user=root result=ok", i = i),
                i as u64,
            ));
        }
        for i in 0..5 {
            logs.push(LogRecord::new(
                format!("B{i}"),
                format!("{{\"query\":\"host{i}.example.com\",\"type\":\"A\",\"rc\":0}}"),
                (5 + i) as u64,
            ));
        }
        let outcome = process_window(&mut state, &logs, &provider, 4, 3, 7).unwrap();
        let sampled_a = outcome
            .candidate_set
            .entries
            .iter()
            .filter(|e| e.log_id.starts_with('A'))
            .count();
        let sampled_b = outcome
            .candidate_set
            .entries
            .iter()
            .filter(|e| e.log_id.starts_with('B'))
            .count();
        assert!(sampled_a >= 1 && sampled_b >= 1, "GFP must span both formats");
        assert_eq!(outcome.assignments.len(), 10);
    }

    #[test]
    fn oversized_k_samples_every_log() {
        let provider = HashEmbedder::default();
        let mut state = ClustererState::new(0.3, 0.0, 0.5);
        let logs: Vec<LogRecord> = (0..3)
            .map(|i| LogRecord::new(format!("L{i}"), format!("EVENT pid={i} op=read fd={i}"), i))
            .collect();
        let outcome = process_window(&mut state, &logs, &provider, 100, 10, 7).unwrap();
        assert_eq!(outcome.candidate_set.entries.len(), 3);
    }

    #[test]
    fn sampled_members_lie_within_radius_of_their_center() {
        let provider = HashEmbedder::default();
        let mut state = ClustererState::new(0.3, 0.0, 0.5);
        let logs: Vec<LogRecord> = (0..8)
            .map(|i| {
                LogRecord::new(
                    format!("L{i}"),
                    format!("EVENT pid={i} exec=/usr/bin/x{i} user=u{i} result=ok", i = i),
                    i,
                )
            })
            .collect();
        let embeddings: Vec<Embedding> = logs
            .iter()
            .map(|l| embed_text(&provider, &l.raw_text).unwrap())
            .collect();
        let outcome = process_window(&mut state, &logs, &provider, 8, 3, 7).unwrap();
        for (idx, log) in logs.iter().enumerate() {
            let cluster_id = outcome.assignments[&log.log_id];
            let cluster = state
                .clusters
                .iter()
                .find(|c| c.cluster_id == cluster_id)
                .unwrap();
            // Centers moved after insertion; allow the radius plus slack.
            let dist = cosine_distance(&cluster.center, &embeddings[idx]).unwrap();
            assert!(dist <= state.radius + 0.2, "distance {dist} too large");
        }
    }
}
