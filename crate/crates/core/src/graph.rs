//! Semantic rule association graph ranked by personalized PageRank.
//!
//! Two active rules are linked when the cosine similarity of their
//! description embeddings reaches the edge threshold. Links are stored in
//! both directions. The ranking solves `PR = α·M̃ᵀ·PR + (1−α)·p` by power
//! iteration, where `p` is proportional to absolute rule weights and `M̃` is
//! the row-normalized adjacency with dangling rows replaced by `p`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{cosine, EmbedError, Embedding, TextEmbedder};
use crate::exec::{self, ExecMode};
use crate::model::Rule;

pub const DEFAULT_DAMPING: f64 = 0.85;
pub const DEFAULT_EDGE_THRESHOLD: f64 = 0.65;
pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("rule graph needs at least one active rule")]
    NoActiveRules,
    #[error("all rule weights are zero")]
    AllZeroWeights,
    #[error("rule {0} is not in the graph")]
    UnknownRule(String),
    #[error("rule {0} is already in the graph")]
    DuplicateRule(String),
    #[error(transparent)]
    Embedding(#[from] EmbedError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionMode {
    /// Equal probability to every neighbor.
    #[default]
    Uniform,
    /// Probability proportional to edge similarity.
    SimilarityWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphParams {
    pub damping: f64,
    pub edge_threshold: f64,
    pub transition: TransitionMode,
}

impl Default for GraphParams {
    fn default() -> Self {
        GraphParams {
            damping: DEFAULT_DAMPING,
            edge_threshold: DEFAULT_EDGE_THRESHOLD,
            transition: TransitionMode::Uniform,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PageRankOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PageRankOptions {
    fn default() -> Self {
        PageRankOptions {
            tol: DEFAULT_TOLERANCE,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: String,
    pub b: String,
    pub sim: f64,
}

/// `p_i = |w_i| / Σ|w_j|`.
pub fn personalization_prior(weights: &[f64]) -> Result<Vec<f64>, GraphError> {
    let total: f64 = weights.iter().map(|w| w.abs()).sum();
    if total == 0.0 || !total.is_finite() {
        return Err(GraphError::AllZeroWeights);
    }
    Ok(weights.iter().map(|w| w.abs() / total).collect())
}

#[derive(Debug, Clone)]
pub struct RuleGraph {
    ids: Vec<String>,
    weights: Vec<f64>,
    embeddings: Vec<Option<Embedding>>,
    neighbors: Vec<Vec<(usize, f64)>>,
    params: GraphParams,
}

impl RuleGraph {
    /// Embeds every active rule and tests each unordered pair once.
    pub fn build(
        rules: &[Rule],
        embedder: &dyn TextEmbedder,
        params: GraphParams,
        mode: ExecMode,
    ) -> Result<RuleGraph, GraphError> {
        let mut active: Vec<&Rule> = rules.iter().filter(|r| r.active).collect();
        if active.is_empty() {
            return Err(GraphError::NoActiveRules);
        }
        active.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(dup) = active.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(GraphError::DuplicateRule(dup[0].id.clone()));
        }
        let embeddings = exec::map(mode, &active, |r| embedder.embed_text(&r.description))
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
        let n = active.len();
        let upper = exec::map_range(mode, n, |i| {
            ((i + 1)..n)
                .filter_map(|j| {
                    let sim = cosine(&embeddings[i], &embeddings[j]).ok()?.value();
                    (sim >= params.edge_threshold).then_some((j, sim))
                })
                .collect::<Vec<_>>()
        });
        let mut neighbors = vec![Vec::new(); n];
        for (i, row) in upper.into_iter().enumerate() {
            for (j, sim) in row {
                neighbors[i].push((j, sim));
                neighbors[j].push((i, sim));
            }
        }
        neighbors.iter_mut().for_each(|row| row.sort_by_key(|(j, _)| *j));
        Ok(RuleGraph {
            ids: active.iter().map(|r| r.id.clone()).collect(),
            weights: active.iter().map(|r| r.weight).collect(),
            embeddings: embeddings.into_iter().map(Some).collect(),
            neighbors,
            params,
        })
    }

    /// Builds a graph from explicit nodes `(id, weight)` and undirected
    /// edges `(i, j, sim)` given by node index. Used for analysis and tests
    /// where no embedder is involved.
    pub fn from_edges(
        nodes: &[(String, f64)],
        edges: &[(usize, usize, f64)],
        params: GraphParams,
    ) -> Result<RuleGraph, GraphError> {
        if nodes.is_empty() {
            return Err(GraphError::NoActiveRules);
        }
        personalization_prior(&nodes.iter().map(|(_, w)| *w).collect::<Vec<_>>())?;
        let mut order: Vec<usize> = (0..nodes.len()).collect();
        order.sort_by(|&a, &b| nodes[a].0.cmp(&nodes[b].0));
        let mut position = vec![0; nodes.len()];
        for (pos, &orig) in order.iter().enumerate() {
            position[orig] = pos;
        }
        let mut neighbors = vec![Vec::new(); nodes.len()];
        for &(i, j, sim) in edges {
            if i == j {
                continue;
            }
            let (pi, pj) = (position[i], position[j]);
            if !neighbors[pi].iter().any(|(k, _)| *k == pj) {
                neighbors[pi].push((pj, sim));
                neighbors[pj].push((pi, sim));
            }
        }
        neighbors.iter_mut().for_each(|row| row.sort_by_key(|(j, _)| *j));
        Ok(RuleGraph {
            ids: order.iter().map(|&i| nodes[i].0.clone()).collect(),
            weights: order.iter().map(|&i| nodes[i].1).collect(),
            embeddings: vec![None; nodes.len()],
            neighbors,
            params,
        })
    }

    pub fn params(&self) -> GraphParams {
        self.params
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Node ids in index order (sorted).
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.binary_search_by(|probe| probe.as_str().cmp(id)).ok()
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn edges(&self) -> Vec<Edge> {
        let mut edges = Vec::new();
        for (i, row) in self.neighbors.iter().enumerate() {
            for &(j, sim) in row {
                if i < j {
                    edges.push(Edge {
                        a: self.ids[i].clone(),
                        b: self.ids[j].clone(),
                        sim,
                    });
                }
            }
        }
        edges
    }

    pub fn is_dangling(&self, i: usize) -> bool {
        self.neighbors[i].is_empty()
    }

    pub fn prior(&self) -> Vec<f64> {
        personalization_prior(&self.weights).expect("graph weights are validated nonzero")
    }

    /// Outgoing transition probabilities of node `i`; empty for dangling
    /// nodes.
    pub fn transition_row(&self, i: usize) -> Vec<(usize, f64)> {
        let row = &self.neighbors[i];
        match self.params.transition {
            TransitionMode::Uniform => {
                let p = 1.0 / row.len() as f64;
                row.iter().map(|&(j, _)| (j, p)).collect()
            }
            TransitionMode::SimilarityWeighted => {
                let total: f64 = row.iter().map(|(_, s)| s).sum();
                row.iter().map(|&(j, s)| (j, s / total)).collect()
            }
        }
    }

    /// Adds one rule, testing only its pairs against the existing nodes.
    pub fn insert_rule(&mut self, rule: &Rule, embedder: &dyn TextEmbedder) -> Result<(), GraphError> {
        let pos = match self.ids.binary_search(&rule.id) {
            Ok(_) => return Err(GraphError::DuplicateRule(rule.id.clone())),
            Err(pos) => pos,
        };
        let embedding = embedder.embed_text(&rule.description)?;
        let mut sims = Vec::new();
        for (i, other) in self.embeddings.iter().enumerate() {
            let other = match other {
                Some(e) => e.clone(),
                None => return Err(GraphError::UnknownRule(self.ids[i].clone())),
            };
            let sim = cosine(&embedding, &other)?.value();
            if sim >= self.params.edge_threshold {
                sims.push((if i >= pos { i + 1 } else { i }, sim));
            }
        }
        for row in &mut self.neighbors {
            for (j, _) in row.iter_mut() {
                if *j >= pos {
                    *j += 1;
                }
            }
        }
        self.ids.insert(pos, rule.id.clone());
        self.weights.insert(pos, rule.weight);
        self.embeddings.insert(pos, Some(embedding));
        self.neighbors.insert(pos, Vec::new());
        for &(j, sim) in &sims {
            self.neighbors[pos].push((j, sim));
            self.neighbors[j].push((pos, sim));
            self.neighbors[j].sort_by_key(|(k, _)| *k);
        }
        Ok(())
    }

    /// Removes one rule and its edges.
    pub fn remove_rule(&mut self, id: &str) -> Result<(), GraphError> {
        let pos = self
            .index_of(id)
            .ok_or_else(|| GraphError::UnknownRule(id.to_string()))?;
        if self.ids.len() == 1 {
            return Err(GraphError::NoActiveRules);
        }
        self.ids.remove(pos);
        self.weights.remove(pos);
        self.embeddings.remove(pos);
        self.neighbors.remove(pos);
        for row in &mut self.neighbors {
            row.retain(|(j, _)| *j != pos);
            for (j, _) in row.iter_mut() {
                if *j > pos {
                    *j -= 1;
                }
            }
        }
        Ok(())
    }

    /// Updates the weight of an existing node (its prior mass).
    pub fn set_weight(&mut self, id: &str, weight: f64) -> Result<(), GraphError> {
        let pos = self
            .index_of(id)
            .ok_or_else(|| GraphError::UnknownRule(id.to_string()))?;
        self.weights[pos] = weight;
        Ok(())
    }

    /// One application of `x ↦ α·M̃ᵀ·x + (1−α)·p`.
    pub fn step(&self, x: &[f64], prior: &[f64]) -> Vec<f64> {
        let alpha = self.params.damping;
        let dangling: f64 = (0..self.len())
            .filter(|&i| self.is_dangling(i))
            .map(|i| x[i])
            .sum();
        let mut next: Vec<f64> = prior
            .iter()
            .map(|p| (1.0 - alpha) * p + alpha * dangling * p)
            .collect();
        for (i, &xi) in x.iter().enumerate() {
            if self.is_dangling(i) {
                continue;
            }
            for (j, t) in self.transition_row(i) {
                next[j] += alpha * xi * t;
            }
        }
        next
    }

    /// Power iteration from the prior (or a warm start), stopping once the
    /// L1 change drops below `tol`. A run that hits `max_iter` is returned
    /// with `converged = false`.
    pub fn personalized_pagerank(
        &self,
        options: PageRankOptions,
        warm_start: Option<&PageRankVector>,
    ) -> PageRankVector {
        let prior = self.prior();
        if self.edge_count() == 0 {
            // M̃ = 1·pᵀ, so p itself is the fixed point.
            return PageRankVector::new(&self.ids, prior, 0, 0.0, true);
        }
        let mut x = match warm_start {
            Some(warm) => {
                let mut x: Vec<f64> = self
                    .ids
                    .iter()
                    .zip(&prior)
                    .map(|(id, p)| warm.scores.get(id).copied().unwrap_or(*p))
                    .collect();
                let total: f64 = x.iter().sum();
                if total > 0.0 {
                    x.iter_mut().for_each(|v| *v /= total);
                    x
                } else {
                    prior.clone()
                }
            }
            None => prior.clone(),
        };
        let mut residual = f64::INFINITY;
        let mut iterations = 0;
        while iterations < options.max_iter {
            let next = self.step(&x, &prior);
            residual = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum();
            x = next;
            iterations += 1;
            if residual < options.tol {
                break;
            }
        }
        let converged = residual < options.tol;
        PageRankVector::new(&self.ids, x, iterations, residual, converged)
    }

    pub fn dump(&self, pr: Option<&PageRankVector>) -> GraphDump {
        GraphDump {
            nodes: self.ids.clone(),
            edges: self.edges(),
            pr: pr.map(|p| p.scores.clone()).unwrap_or_default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageRankVector {
    pub scores: BTreeMap<String, f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

impl PageRankVector {
    fn new(ids: &[String], scores: Vec<f64>, iterations: usize, residual: f64, converged: bool) -> Self {
        PageRankVector {
            scores: ids.iter().cloned().zip(scores).collect(),
            iterations,
            residual,
            converged,
        }
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.scores.get(id).copied()
    }

    pub fn total(&self) -> f64 {
        self.scores.values().sum()
    }

    /// Scores in the graph's index order.
    pub fn to_vec(&self, graph: &RuleGraph) -> Vec<f64> {
        graph
            .ids()
            .iter()
            .map(|id| self.get(id).unwrap_or(0.0))
            .collect()
    }
}

/// Top `n` rules by rank, ties broken by rule id.
pub fn meta_preference_ranking(pr: &PageRankVector, n: usize) -> Vec<(String, f64)> {
    let mut ranked: Vec<(String, f64)> = pr.scores.iter().map(|(k, v)| (k.clone(), *v)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(n);
    ranked
}

/// Debug dump: `{nodes, edges: [{a, b, sim}], pr: {id: score}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDump {
    pub nodes: Vec<String>,
    pub edges: Vec<Edge>,
    pub pr: BTreeMap<String, f64>,
}
