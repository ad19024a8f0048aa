//! Explicit tag profile: implicit base importance from recent interactions,
//! a user-set bias on top, and geometric decay of that bias per session.
//!
//! `final = clip(base + delta, 0, 1)`; each session boundary multiplies every
//! delta by `gamma` and zeroes those that fall below `epsilon`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_GAMMA: f64 = 0.65;
pub const DEFAULT_EPSILON: f64 = 1e-3;
pub const DEFAULT_WINDOW_DAYS: u32 = 7;
pub const DEFAULT_TOP_K: usize = 5;

const DAY_MS: i64 = 86_400_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProfileError {
    #[error("slider value {0} is outside [0, 1]")]
    SliderOutOfRange(f64),
    #[error("profile has no tags")]
    EmptyProfile,
    #[error("k must be at least 1")]
    InvalidK,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TagSource {
    Click,
    Recommendation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagNode {
    pub tag: String,
    pub base_importance: f64,
    pub delta: f64,
    pub source: TagSource,
    pub last_decay_session: u64,
}

impl TagNode {
    pub fn new(tag: &str, base_importance: f64, source: TagSource) -> Self {
        TagNode {
            tag: tag.to_string(),
            base_importance: base_importance.clamp(0.0, 1.0),
            delta: 0.0,
            source,
            last_decay_session: 0,
        }
    }

    pub fn final_importance(&self) -> f64 {
        final_importance(self.base_importance, self.delta)
    }
}

pub fn final_importance(base: f64, delta: f64) -> f64 {
    (base + delta).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub tag: String,
    /// Milliseconds since the Unix epoch.
    pub timestamp: i64,
    pub kind: TagSource,
}

/// Recent interactions, kept sorted by timestamp. The window ends at the
/// newest event and reaches back `window_days`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionWindow {
    events: Vec<Interaction>,
    pub window_days: u32,
}

impl Default for InteractionWindow {
    fn default() -> Self {
        InteractionWindow::new(Vec::new(), DEFAULT_WINDOW_DAYS)
    }
}

impl InteractionWindow {
    pub fn new(mut events: Vec<Interaction>, window_days: u32) -> Self {
        events.sort_by_key(|e| e.timestamp);
        InteractionWindow {
            events,
            window_days,
        }
    }

    pub fn push(&mut self, event: Interaction) {
        let at = self.events.partition_point(|e| e.timestamp <= event.timestamp);
        self.events.insert(at, event);
    }

    pub fn events(&self) -> &[Interaction] {
        &self.events
    }

    fn in_window(&self) -> &[Interaction] {
        let Some(last) = self.events.last() else {
            return &[];
        };
        let start = last.timestamp - i64::from(self.window_days) * DAY_MS;
        let from = self.events.partition_point(|e| e.timestamp < start);
        &self.events[from..]
    }

    /// Per-tag counts inside the window, with the dominant interaction kind.
    pub fn frequencies(&self) -> BTreeMap<&str, (u64, TagSource)> {
        let mut counts: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
        for event in self.in_window() {
            let entry = counts.entry(event.tag.as_str()).or_default();
            match event.kind {
                TagSource::Click => entry.0 += 1,
                TagSource::Recommendation => entry.1 += 1,
            }
        }
        counts
            .into_iter()
            .map(|(tag, (clicks, recs))| {
                let source = if recs > clicks {
                    TagSource::Recommendation
                } else {
                    TagSource::Click
                };
                (tag, (clicks + recs, source))
            })
            .collect()
    }
}

/// Frequency of `tag` divided by the highest tag frequency in the window.
pub fn base_importance(window: &InteractionWindow, tag: &str) -> f64 {
    let freqs = window.frequencies();
    let max = freqs.values().map(|(n, _)| *n).max().unwrap_or(0);
    match (freqs.get(tag), max) {
        (Some((n, _)), max) if max > 0 => *n as f64 / max as f64,
        _ => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayParams {
    pub gamma: f64,
    pub epsilon: f64,
}

impl Default for DecayParams {
    fn default() -> Self {
        DecayParams {
            gamma: DEFAULT_GAMMA,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceProfile {
    nodes: BTreeMap<String, TagNode>,
    session: u64,
    params: DecayParams,
}

impl Default for PreferenceProfile {
    fn default() -> Self {
        PreferenceProfile::new(DecayParams::default())
    }
}

impl PreferenceProfile {
    pub fn new(params: DecayParams) -> Self {
        PreferenceProfile {
            nodes: BTreeMap::new(),
            session: 0,
            params,
        }
    }

    pub fn params(&self) -> DecayParams {
        self.params
    }

    /// Replaces the decay parameters; stored deltas are kept.
    pub fn set_params(&mut self, params: DecayParams) {
        self.params = params;
    }

    pub fn session(&self) -> u64 {
        self.session
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, tag: &str) -> Option<&TagNode> {
        self.nodes.get(tag)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &TagNode> {
        self.nodes.values()
    }

    /// Inserts or replaces a node as-is.
    pub fn insert(&mut self, node: TagNode) {
        self.nodes.insert(node.tag.clone(), node);
    }

    /// Recomputes base importance for every tag from `window`. Tags that left
    /// the window keep their node with base 0; deltas are untouched.
    pub fn refresh_base(&mut self, window: &InteractionWindow) {
        let freqs = window.frequencies();
        let max = freqs.values().map(|(n, _)| *n).max().unwrap_or(0);
        for node in self.nodes.values_mut() {
            if !freqs.contains_key(node.tag.as_str()) {
                node.base_importance = 0.0;
            }
        }
        for (tag, (count, source)) in freqs {
            let base = if max > 0 { count as f64 / max as f64 } else { 0.0 };
            let node = self
                .nodes
                .entry(tag.to_string())
                .or_insert_with(|| TagNode::new(tag, 0.0, source));
            node.base_importance = base;
            node.source = source;
        }
    }

    /// Sets the final importance of `tag` to `slider` by storing the
    /// difference from the current base as the user delta.
    pub fn apply_user_delta(&mut self, tag: &str, slider: f64) -> Result<&TagNode, ProfileError> {
        if !(0.0..=1.0).contains(&slider) {
            return Err(ProfileError::SliderOutOfRange(slider));
        }
        let session = self.session;
        let node = self.nodes.entry(tag.to_string()).or_insert_with(|| {
            let mut node = TagNode::new(tag, 0.0, TagSource::Click);
            node.last_decay_session = session;
            node
        });
        node.delta = (slider - node.base_importance).clamp(-1.0, 1.0);
        Ok(node)
    }

    /// Advances one session: every delta is multiplied by gamma and tiny
    /// residues are zeroed.
    pub fn decay_session(&mut self) {
        self.session += 1;
        let DecayParams { gamma, epsilon } = self.params;
        for node in self.nodes.values_mut() {
            node.delta *= gamma;
            if node.delta.abs() < epsilon {
                node.delta = 0.0;
            }
            node.last_decay_session = self.session;
        }
    }

    /// Highest final importance first, ties broken by tag.
    pub fn top_k(&self, k: usize) -> Result<Vec<(String, f64)>, ProfileError> {
        if k == 0 {
            return Err(ProfileError::InvalidK);
        }
        if self.nodes.is_empty() {
            return Err(ProfileError::EmptyProfile);
        }
        let mut ranked: Vec<(String, f64)> = self
            .nodes
            .values()
            .map(|n| (n.tag.clone(), n.final_importance()))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(k);
        Ok(ranked)
    }

    pub fn snapshot(&self) -> ProfileSnapshot {
        ProfileSnapshot {
            tags: self
                .nodes
                .values()
                .map(|n| TagView {
                    tag: n.tag.clone(),
                    base_importance: n.base_importance,
                    delta: n.delta,
                    final_importance: n.final_importance(),
                    source: n.source,
                })
                .collect(),
            session: self.session,
        }
    }
}

/// Wire form consumed by the bubble chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSnapshot {
    pub tags: Vec<TagView>,
    pub session: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagView {
    pub tag: String,
    pub base_importance: f64,
    pub delta: f64,
    pub final_importance: f64,
    pub source: TagSource,
}
