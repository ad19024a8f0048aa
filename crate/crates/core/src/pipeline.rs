//! Per-item adjudication.
//!
//! ```text
//! item ─▶ [visual evidence (md5-keyed cache)] ─▶ judge ─▶ block (cloud) / pass
//!               │ failure                          │ failure / malformed verdict
//!               └──────────────┬───────────────────┘
//!                              ▼
//!        image present: cross-modal fallback vs. negative image rules
//!        text only:     strict core-entity keyword fallback
//! ```
//!
//! [`Adjudicator::adjudicate`] never fails: every item leaves with a
//! decision. Unblocked items are star-scored against the top profile tags,
//! blocks always get a [`Dossier`].

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use dashmap::DashMap;
use md5::{Digest, Md5};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Clock;
use crate::embedding::{cosine, CrossModal, EmbedError, TextEmbedder};
use crate::graph::PageRankVector;
use crate::model::{
    EvidenceSource, FeedItem, IntensityBand, JudgeVerdict, Modality, Rule, VisualEvidence,
};
use crate::profile::PreferenceProfile;
use crate::telemetry::{EventKind, TelemetryEvent};

pub const DEFAULT_TAU_CLIP: f64 = 0.30;
pub const DEFAULT_STAR_ONE: f64 = 0.40;
pub const DEFAULT_STAR_TWO: f64 = 0.65;
pub const STAR_RAW_FLOOR: f64 = 0.10;
pub const STAR_RAW_SPAN: f64 = 0.40;
/// Rule id recorded when the fallback itself cannot run.
pub const FALLBACK_UNAVAILABLE: &str = "fallback_unavailable";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("backend timed out after {0} ms")]
    Timeout(u64),
    #[error("malformed backend output: {0}")]
    Malformed(String),
    #[error("unknown image {0:?}")]
    UnknownImage(String),
}

/// Which branch produced a decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Cloud,
    Pass,
    ClipFallback,
    #[serde(other)]
    Unknown,
}

impl Layer {
    pub const ALL: [Layer; 4] = [Layer::Cloud, Layer::Pass, Layer::ClipFallback, Layer::Unknown];

    pub fn as_str(self) -> &'static str {
        match self {
            Layer::Cloud => "cloud",
            Layer::Pass => "pass",
            Layer::ClipFallback => "clip_fallback",
            Layer::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub tau_clip: f64,
    pub star_one: f64,
    pub star_two: f64,
    pub star_k: usize,
    pub audit_all: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            tau_clip: DEFAULT_TAU_CLIP,
            star_one: DEFAULT_STAR_ONE,
            star_two: DEFAULT_STAR_TWO,
            star_k: crate::profile::DEFAULT_TOP_K,
            audit_all: false,
        }
    }
}

/// How the judge stage is wired. The default is the full pipeline: visual
/// evidence is extracted and handed to the judge as a separate structured
/// input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Wiring {
    pub visual_evidence: bool,
    pub style: JudgeStyle,
}

impl Default for Wiring {
    fn default() -> Self {
        Wiring {
            visual_evidence: true,
            style: JudgeStyle::Decoupled,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeStyle {
    /// Evidence extraction and judging are separate calls.
    Decoupled,
    /// Evidence is inlined into the item text for a single call.
    Monolithic,
}

// ---------------------------------------------------------------------------
// Visual evidence

pub trait VisionBackend: Send + Sync {
    fn extract(&self, image_ref: &str) -> Result<VisualEvidence, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("evidence cache entry {0} is corrupt")]
pub struct CacheCorruption(pub String);

pub trait EvidenceCache: Send + Sync {
    fn get(&self, key: &str) -> Result<Option<VisualEvidence>, CacheCorruption>;
    fn put(&self, key: &str, evidence: &VisualEvidence);
}

/// Hex MD5 of the image URL string.
pub fn cache_key(image_ref: &str) -> String {
    let digest = Md5::digest(image_ref.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Default)]
pub struct MemoryCache(DashMap<String, VisualEvidence>);

impl MemoryCache {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl EvidenceCache for MemoryCache {
    fn get(&self, key: &str) -> Result<Option<VisualEvidence>, CacheCorruption> {
        Ok(self.0.get(key).map(|e| e.clone()))
    }

    fn put(&self, key: &str, evidence: &VisualEvidence) {
        self.0.insert(key.to_string(), evidence.clone());
    }
}

/// One `<md5>.json` file per image under a directory.
#[derive(Debug, Clone)]
pub struct DirCache {
    dir: PathBuf,
}

impl DirCache {
    pub fn open(dir: &Path) -> std::io::Result<DirCache> {
        fs::create_dir_all(dir)?;
        Ok(DirCache {
            dir: dir.to_path_buf(),
        })
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }
}

impl EvidenceCache for DirCache {
    fn get(&self, key: &str) -> Result<Option<VisualEvidence>, CacheCorruption> {
        match fs::read(self.path(key)) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|_| CacheCorruption(key.to_string())),
            Err(_) => Ok(None),
        }
    }

    fn put(&self, key: &str, evidence: &VisualEvidence) {
        let Ok(bytes) = serde_json::to_vec(evidence) else {
            return;
        };
        // write-then-rename so readers never see a partial file
        let tmp = self.dir.join(format!("{key}.json.tmp"));
        if fs::write(&tmp, bytes).is_ok() {
            let _ = fs::rename(&tmp, self.path(key));
        }
    }
}

/// Cache lookup by URL digest, falling through to the backend on a miss or a
/// corrupt entry.
pub fn extract_visual_evidence(
    image_ref: &str,
    vision: &dyn VisionBackend,
    cache: &dyn EvidenceCache,
) -> Result<VisualEvidence, BackendError> {
    let key = cache_key(image_ref);
    if let Ok(Some(mut hit)) = cache.get(&key) {
        hit.source = EvidenceSource::Cache;
        return Ok(hit);
    }
    let mut evidence = vision.extract(image_ref)?;
    evidence.source = EvidenceSource::Backend;
    cache.put(&key, &evidence);
    Ok(evidence)
}

/// Fixture lookup vision backend. Unknown images are an error.
#[derive(Debug, Default)]
pub struct FixtureVision {
    evidence: HashMap<String, VisualEvidence>,
    calls: AtomicUsize,
}

impl FixtureVision {
    pub fn new(evidence: HashMap<String, VisualEvidence>) -> Self {
        FixtureVision {
            evidence,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn insert(&mut self, image_ref: &str, evidence: VisualEvidence) {
        self.evidence.insert(image_ref.to_string(), evidence);
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl VisionBackend for FixtureVision {
    fn extract(&self, image_ref: &str) -> Result<VisualEvidence, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.evidence
            .get(image_ref)
            .cloned()
            .ok_or_else(|| BackendError::UnknownImage(image_ref.to_string()))
    }
}

// ---------------------------------------------------------------------------
// Judge

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeCapabilities {
    pub accepts_visual: bool,
}

/// A rule as presented to the judge, in priority order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleContext {
    pub id: String,
    pub description: String,
    pub weight: f64,
    pub band: IntensityBand,
    pub modality: Modality,
    #[serde(default)]
    pub core_entities: Vec<String>,
    #[serde(default)]
    pub exemptions: Vec<String>,
    pub rank: Option<f64>,
}

impl RuleContext {
    fn from_rule(rule: &Rule, rank: Option<f64>) -> Self {
        RuleContext {
            id: rule.id.clone(),
            description: rule.description.clone(),
            weight: rule.weight,
            band: rule.band(),
            modality: rule.modality,
            core_entities: rule.core_entities.clone(),
            exemptions: rule.exemptions.clone(),
            rank,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeRequest {
    pub item: FeedItem,
    /// Structured evidence for decoupled judging.
    pub evidence: Option<VisualEvidence>,
    /// Flattened evidence for monolithic judging.
    pub inline_evidence: Option<String>,
    pub rules: Vec<RuleContext>,
    pub style: JudgeStyle,
}

impl JudgeRequest {
    pub fn has_visual(&self) -> bool {
        self.evidence.is_some() || self.inline_evidence.is_some()
    }

    /// Every text fact the judge may cite, as `(field, text)` pairs.
    pub fn facts(&self) -> Vec<(String, String)> {
        let mut facts = Vec::new();
        if let Some(title) = &self.item.title {
            facts.push(("title".to_string(), title.clone()));
        }
        if let Some(snippet) = &self.item.snippet {
            facts.push(("snippet".to_string(), snippet.clone()));
        }
        for tag in &self.item.tags {
            facts.push(("tag".to_string(), tag.clone()));
        }
        if let Some(evidence) = &self.evidence {
            for (name, value) in evidence.facts() {
                facts.push((format!("image.{name}"), value.to_string()));
            }
        }
        if let Some(inline) = &self.inline_evidence {
            facts.push(("image".to_string(), inline.clone()));
        }
        facts
    }
}

pub trait JudgeBackend: Send + Sync {
    fn capabilities(&self) -> JudgeCapabilities;
    fn judge(&self, request: &JudgeRequest) -> Result<JudgeVerdict, BackendError>;
}

/// Orders rules by meta-preference rank, falling back to |weight| for rules
/// without a rank. Ties go to the rule id.
pub fn order_rules(rules: &[Rule], ranking: Option<&PageRankVector>) -> Vec<RuleContext> {
    let mut ctx: Vec<RuleContext> = rules
        .iter()
        .filter(|r| r.active)
        .map(|r| RuleContext::from_rule(r, ranking.and_then(|pr| pr.get(&r.id))))
        .collect();
    ctx.sort_by(|a, b| {
        let by_rank = match (a.rank, b.rank) {
            (Some(x), Some(y)) => y.total_cmp(&x),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => std::cmp::Ordering::Equal,
        };
        by_rank
            .then_with(|| b.weight.abs().total_cmp(&a.weight.abs()))
            .then_with(|| a.id.cmp(&b.id))
    });
    ctx
}

/// Invokes the judge and validates its verdict against the active rule set.
pub fn judge(request: &JudgeRequest, backend: &dyn JudgeBackend) -> Result<JudgeVerdict, BackendError> {
    let verdict = backend.judge(request)?;
    verdict
        .validate()
        .map_err(|e| BackendError::Malformed(e.to_string()))?;
    if let Some(id) = &verdict.triggered_rule_id {
        if !request.rules.iter().any(|r| &r.id == id) {
            return Err(BackendError::Malformed(format!("verdict cites inactive rule {id}")));
        }
    }
    Ok(verdict)
}

/// A trigger for [`ScriptedJudge`]: block via `rule_id` when `token` appears
/// in any supplied fact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptTrigger {
    pub token: String,
    pub rule_id: String,
}

/// Deterministic judge that blocks on literal tokens. It only looks at the
/// facts in the request, so its reasons always quote supplied text.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScriptedJudge {
    pub triggers: Vec<ScriptTrigger>,
}

impl ScriptedJudge {
    pub fn new(triggers: Vec<ScriptTrigger>) -> Self {
        ScriptedJudge { triggers }
    }

    pub fn trigger(mut self, token: &str, rule_id: &str) -> Self {
        self.triggers.push(ScriptTrigger {
            token: token.to_string(),
            rule_id: rule_id.to_string(),
        });
        self
    }
}

impl JudgeBackend for ScriptedJudge {
    fn capabilities(&self) -> JudgeCapabilities {
        JudgeCapabilities { accepts_visual: true }
    }

    fn judge(&self, request: &JudgeRequest) -> Result<JudgeVerdict, BackendError> {
        let facts = request.facts();
        for trigger in &self.triggers {
            let needle = trigger.token.to_lowercase();
            if let Some((field, _)) = facts.iter().find(|(_, text)| text.to_lowercase().contains(&needle)) {
                return Ok(JudgeVerdict::block(
                    &trigger.rule_id,
                    &format!("The {field} contains \"{}\".", trigger.token),
                ));
            }
        }
        Ok(JudgeVerdict::pass())
    }
}

/// Substring matcher over negative rules' core entities (text fields only).
#[derive(Debug, Clone, Copy, Default)]
pub struct KeywordJudge;

impl JudgeBackend for KeywordJudge {
    fn capabilities(&self) -> JudgeCapabilities {
        JudgeCapabilities { accepts_visual: false }
    }

    fn judge(&self, request: &JudgeRequest) -> Result<JudgeVerdict, BackendError> {
        let mut text = request.item.text();
        for tag in &request.item.tags {
            text.push(' ');
            text.push_str(tag);
        }
        let text = text.to_lowercase();
        for rule in request.rules.iter().filter(|r| r.weight < 0.0) {
            for entity in &rule.core_entities {
                if text.contains(&entity.to_lowercase()) {
                    return Ok(JudgeVerdict::block(
                        &rule.id,
                        &format!("The text contains the keyword \"{entity}\"."),
                    ));
                }
            }
        }
        Ok(JudgeVerdict::pass())
    }
}

/// Always passes.
#[derive(Debug, Clone, Copy, Default)]
pub struct AllPassJudge;

impl JudgeBackend for AllPassJudge {
    fn capabilities(&self) -> JudgeCapabilities {
        JudgeCapabilities { accepts_visual: true }
    }

    fn judge(&self, _request: &JudgeRequest) -> Result<JudgeVerdict, BackendError> {
        Ok(JudgeVerdict::pass())
    }
}

/// Call shape seen by a judge, used to key replayed decisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeVariant {
    DecoupledVisual,
    DecoupledText,
    MonolithicVisual,
    MonolithicText,
}

impl JudgeVariant {
    pub fn of(request: &JudgeRequest) -> JudgeVariant {
        match (request.style, request.has_visual()) {
            (JudgeStyle::Decoupled, true) => JudgeVariant::DecoupledVisual,
            (JudgeStyle::Decoupled, false) => JudgeVariant::DecoupledText,
            (JudgeStyle::Monolithic, true) => JudgeVariant::MonolithicVisual,
            (JudgeStyle::Monolithic, false) => JudgeVariant::MonolithicText,
        }
    }
}

/// Replays recorded verdicts keyed by item id and call shape. A missing
/// recording is reported as a backend failure.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ReplayJudge {
    pub recordings: BTreeMap<String, BTreeMap<JudgeVariant, JudgeVerdict>>,
}

impl ReplayJudge {
    pub fn record(&mut self, item_id: &str, variant: JudgeVariant, verdict: JudgeVerdict) {
        self.recordings
            .entry(item_id.to_string())
            .or_default()
            .insert(variant, verdict);
    }
}

impl JudgeBackend for ReplayJudge {
    fn capabilities(&self) -> JudgeCapabilities {
        JudgeCapabilities { accepts_visual: true }
    }

    fn judge(&self, request: &JudgeRequest) -> Result<JudgeVerdict, BackendError> {
        let variant = JudgeVariant::of(request);
        self.recordings
            .get(&request.item.id)
            .and_then(|by_variant| by_variant.get(&variant))
            .cloned()
            .ok_or_else(|| {
                BackendError::Unavailable(format!("no recording for {} / {variant:?}", request.item.id))
            })
    }
}

// ---------------------------------------------------------------------------
// Fallback

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FallbackOutcome {
    pub blocked: bool,
    pub matched_rule_id: Option<String>,
    pub max_similarity: Option<f64>,
}

/// Compares the item's image with every negative image-scoped rule
/// description and blocks once the best similarity reaches `tau_clip`.
/// Provider errors block with [`FALLBACK_UNAVAILABLE`].
pub fn fallback_adjudicate(
    item: &FeedItem,
    rules: &[Rule],
    cross_modal: &dyn CrossModal,
    tau_clip: f64,
) -> FallbackOutcome {
    let Some(image_ref) = item.image_ref.as_deref() else {
        return FallbackOutcome {
            blocked: false,
            matched_rule_id: None,
            max_similarity: None,
        };
    };
    let mut best: Option<(f64, &Rule)> = None;
    for rule in rules
        .iter()
        .filter(|r| r.active && r.is_filter() && r.modality.covers_image())
    {
        match cross_modal.cross_modal_similarity(image_ref, &rule.description) {
            Ok(sim) => {
                let sim = sim.value();
                if best.is_none_or(|(b, _)| sim > b) {
                    best = Some((sim, rule));
                }
            }
            Err(_) => {
                return FallbackOutcome {
                    blocked: true,
                    matched_rule_id: Some(FALLBACK_UNAVAILABLE.to_string()),
                    max_similarity: best.map(|(s, _)| s),
                }
            }
        }
    }
    match best {
        Some((sim, rule)) if sim >= tau_clip => FallbackOutcome {
            blocked: true,
            matched_rule_id: Some(rule.id.clone()),
            max_similarity: Some(sim),
        },
        Some((sim, _)) => FallbackOutcome {
            blocked: false,
            matched_rule_id: None,
            max_similarity: Some(sim),
        },
        None => FallbackOutcome {
            blocked: false,
            matched_rule_id: None,
            max_similarity: None,
        },
    }
}

/// Text-only fallback. Blocks only when a strong negative rule has every one
/// of its core entities present in the title/snippet and no allowance rule
/// matches; everything else passes.
pub fn text_fallback(item: &FeedItem, rules: &[Rule]) -> Option<String> {
    let text = item.text().to_lowercase();
    let matches = |rule: &Rule| {
        !rule.core_entities.is_empty()
            && rule
                .core_entities
                .iter()
                .all(|e| text.contains(&e.to_lowercase()))
    };
    let allowed = rules
        .iter()
        .any(|r| r.active && r.weight > 0.0 && matches(r));
    if allowed {
        return None;
    }
    rules
        .iter()
        .filter(|r| r.active && r.is_filter() && r.band() == IntensityBand::Strong)
        .find(|r| matches(r))
        .map(|r| r.id.clone())
}

// ---------------------------------------------------------------------------
// Star score

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StarScore {
    pub raw: Option<f64>,
    pub score: f64,
    pub stars: u8,
}

impl StarScore {
    pub const NONE: StarScore = StarScore {
        raw: None,
        score: 0.0,
        stars: 0,
    };
}

/// `clip((raw − 0.10) / 0.40, 0, 1)`, snapped to 9 decimals so that decimal
/// inputs such as 0.26 land exactly on their threshold.
pub fn star_formula(raw: f64) -> f64 {
    let s = ((raw - STAR_RAW_FLOOR) / STAR_RAW_SPAN).clamp(0.0, 1.0);
    (s * 1e9).round() / 1e9
}

pub fn star_count(score: f64, one: f64, two: f64) -> u8 {
    if score >= two {
        2
    } else if score >= one {
        1
    } else {
        0
    }
}

/// Importance-weighted mean cosine between the item text and the top-k
/// profile tags, mapped through [`star_formula`].
pub fn star_score(
    item: &FeedItem,
    profile: &PreferenceProfile,
    embedder: &dyn TextEmbedder,
    config: &PipelineConfig,
) -> StarScore {
    let Ok(top) = profile.top_k(config.star_k.max(1)) else {
        return StarScore::NONE;
    };
    let Ok(item_vec) = embedder.embed_text(&item.text()) else {
        return StarScore::NONE;
    };
    let mut weighted = 0.0;
    let mut total = 0.0;
    for (tag, importance) in &top {
        let Ok(tag_vec) = embedder.embed_text(tag) else {
            return StarScore::NONE;
        };
        let Ok(sim) = cosine(&item_vec, &tag_vec) else {
            return StarScore::NONE;
        };
        weighted += importance * sim.value();
        total += importance;
    }
    if total <= 0.0 {
        return StarScore::NONE;
    }
    let raw = weighted / total;
    let score = star_formula(raw);
    StarScore {
        raw: Some(raw),
        score,
        stars: star_count(score, config.star_one, config.star_two),
    }
}

// ---------------------------------------------------------------------------
// Adjudication

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adjudication {
    pub item_id: String,
    pub y_block: u8,
    pub y_star: f64,
    pub star_count: u8,
    pub layer: Layer,
    pub triggered_rule_id: Option<String>,
    pub reason: String,
    pub dossier_id: Option<String>,
    pub latency_ms: u64,
}

impl Adjudication {
    pub fn blocked(&self) -> bool {
        self.y_block == 1
    }

    /// Checks the cross-field invariants.
    pub fn check(&self) -> Result<(), String> {
        if self.blocked() && self.star_count != 0 {
            return Err("blocked item carries stars".into());
        }
        if self.layer == Layer::Pass && self.blocked() {
            return Err("pass layer with a block".into());
        }
        if self.layer == Layer::ClipFallback && !self.blocked() {
            return Err("fallback layer without a block".into());
        }
        if self.blocked() && self.dossier_id.is_none() {
            return Err("block without dossier".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum EvidenceRecord {
    Present { evidence: VisualEvidence },
    Absent { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "path", rename_all = "snake_case")]
pub enum DecisionRecord {
    Judge {
        verdict: JudgeVerdict,
    },
    CrossModalFallback {
        failure: String,
        max_similarity: Option<f64>,
        matched_rule_id: Option<String>,
    },
    TextFallback {
        failure: String,
        matched_rule_id: Option<String>,
    },
    NoRules,
}

/// Immutable snapshot of everything a decision was based on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dossier {
    pub dossier_id: String,
    pub item: FeedItem,
    /// Active rule id → version at decision time.
    pub rule_versions: BTreeMap<String, u32>,
    pub rules: Vec<Rule>,
    pub evidence: EvidenceRecord,
    pub decision: DecisionRecord,
    pub config: PipelineConfig,
    pub y_block: u8,
    pub layer: Layer,
    pub triggered_rule_id: Option<String>,
    pub timestamp_ms: i64,
}

impl Dossier {
    pub fn is_block(&self) -> bool {
        self.y_block == 1
    }
}

/// Per-call context for telemetry.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdjudicationContext {
    pub user_id: String,
    pub day_index: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjudicationOutcome {
    pub adjudication: Adjudication,
    pub dossier: Option<Dossier>,
    pub events: Vec<TelemetryEvent>,
}

/// Everything one adjudication reads; callers take it as a consistent
/// snapshot of the user's state.
#[derive(Debug, Clone, Copy)]
pub struct DecisionInputs<'a> {
    pub rules: &'a [Rule],
    pub ranking: Option<&'a PageRankVector>,
    pub profile: Option<&'a PreferenceProfile>,
}

#[derive(Clone)]
pub struct Adjudicator {
    pub vision: Arc<dyn VisionBackend>,
    pub judge: Arc<dyn JudgeBackend>,
    pub embedder: Arc<dyn TextEmbedder>,
    pub cross_modal: Arc<dyn CrossModal>,
    pub cache: Arc<dyn EvidenceCache>,
    pub clock: Arc<dyn Clock>,
    pub config: PipelineConfig,
    pub wiring: Wiring,
}

enum Route {
    Decided {
        verdict: JudgeVerdict,
        evidence: EvidenceRecord,
    },
    Failed {
        failure: String,
        evidence: EvidenceRecord,
    },
    NoRules {
        evidence: EvidenceRecord,
    },
}

impl Adjudicator {
    /// Default wiring with an in-memory cache and a clock frozen at zero.
    pub fn new<E>(vision: Arc<dyn VisionBackend>, judge: Arc<dyn JudgeBackend>, embedder: Arc<E>) -> Self
    where
        E: TextEmbedder + CrossModal + 'static,
    {
        Adjudicator {
            vision,
            judge,
            embedder: embedder.clone(),
            cross_modal: embedder,
            cache: Arc::new(MemoryCache::default()),
            clock: Arc::new(crate::clock::ManualClock::new(0)),
            config: PipelineConfig::default(),
            wiring: Wiring::default(),
        }
    }

    pub fn with_config(mut self, config: PipelineConfig) -> Self {
        self.config = config;
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_cache(mut self, cache: Arc<dyn EvidenceCache>) -> Self {
        self.cache = cache;
        self
    }

    fn primary(&self, item: &FeedItem, inputs: &DecisionInputs<'_>) -> Route {
        let wants_visual = self.wiring.visual_evidence && self.judge.capabilities().accepts_visual;
        let (evidence, evidence_record) = match item.image_ref.as_deref() {
            Some(image_ref) if wants_visual => {
                match extract_visual_evidence(image_ref, self.vision.as_ref(), self.cache.as_ref()) {
                    Ok(ev) => (Some(ev.clone()), EvidenceRecord::Present { evidence: ev }),
                    Err(e) => {
                        return Route::Failed {
                            failure: format!("vision: {e}"),
                            evidence: EvidenceRecord::Absent { reason: e.to_string() },
                        }
                    }
                }
            }
            Some(_) => (None, EvidenceRecord::Absent { reason: "visual evidence disabled".into() }),
            None => (None, EvidenceRecord::Absent { reason: "no image".into() }),
        };
        let rules = order_rules(inputs.rules, inputs.ranking);
        if rules.is_empty() {
            return Route::NoRules { evidence: evidence_record };
        }
        let request = match self.wiring.style {
            JudgeStyle::Decoupled => JudgeRequest {
                item: item.clone(),
                evidence,
                inline_evidence: None,
                rules,
                style: JudgeStyle::Decoupled,
            },
            JudgeStyle::Monolithic => JudgeRequest {
                item: item.clone(),
                evidence: None,
                inline_evidence: evidence.map(|e| e.flatten()),
                rules,
                style: JudgeStyle::Monolithic,
            },
        };
        match judge(&request, self.judge.as_ref()) {
            Ok(verdict) => Route::Decided {
                verdict,
                evidence: evidence_record,
            },
            Err(e) => Route::Failed {
                failure: format!("judge: {e}"),
                evidence: evidence_record,
            },
        }
    }

    /// Decides one item. Never fails.
    pub fn adjudicate(
        &self,
        item: &FeedItem,
        inputs: DecisionInputs<'_>,
        ctx: &AdjudicationContext,
    ) -> AdjudicationOutcome {
        let started = self.clock.now_ms();
        let (blocked, layer, rule_id, reason, decision, evidence) = match self.primary(item, &inputs) {
            Route::Decided { verdict, evidence } => {
                let layer = if verdict.filter_decision { Layer::Cloud } else { Layer::Pass };
                (
                    verdict.filter_decision,
                    layer,
                    verdict.triggered_rule_id.clone(),
                    verdict.reason.clone(),
                    DecisionRecord::Judge { verdict },
                    evidence,
                )
            }
            Route::NoRules { evidence } => (false, Layer::Pass, None, String::new(), DecisionRecord::NoRules, evidence),
            Route::Failed { failure, evidence } if item.image_ref.is_some() => {
                let out = fallback_adjudicate(item, inputs.rules, self.cross_modal.as_ref(), self.config.tau_clip);
                let reason = match (&out.matched_rule_id, out.max_similarity) {
                    (Some(id), _) if id == FALLBACK_UNAVAILABLE => {
                        "Primary path and cross-modal fallback unavailable; blocked conservatively.".to_string()
                    }
                    (Some(_), Some(sim)) => format!(
                        "Image-to-rule similarity {sim:.4} reached the fallback threshold {:.2}.",
                        self.config.tau_clip
                    ),
                    _ => String::new(),
                };
                let layer = if out.blocked { Layer::ClipFallback } else { Layer::Pass };
                (
                    out.blocked,
                    layer,
                    out.matched_rule_id.clone(),
                    reason,
                    DecisionRecord::CrossModalFallback {
                        failure,
                        max_similarity: out.max_similarity,
                        matched_rule_id: out.matched_rule_id,
                    },
                    evidence,
                )
            }
            Route::Failed { failure, evidence } => {
                let matched = text_fallback(item, inputs.rules);
                let reason = matched
                    .as_ref()
                    .map(|_| "Text contains every core entity of a strong rule.".to_string())
                    .unwrap_or_default();
                let layer = if matched.is_some() { Layer::ClipFallback } else { Layer::Pass };
                (
                    matched.is_some(),
                    layer,
                    matched.clone(),
                    reason,
                    DecisionRecord::TextFallback {
                        failure,
                        matched_rule_id: matched,
                    },
                    evidence,
                )
            }
        };

        let stars = match (blocked, inputs.profile) {
            (false, Some(profile)) => star_score(item, profile, self.embedder.as_ref(), &self.config),
            _ => StarScore::NONE,
        };
        let finished = self.clock.now_ms();
        let latency_ms = (finished - started).max(0) as u64;
        let y_block = u8::from(blocked);

        let dossier = (blocked || self.config.audit_all).then(|| {
            let rule_versions: BTreeMap<String, u32> = inputs
                .rules
                .iter()
                .filter(|r| r.active)
                .map(|r| (r.id.clone(), r.version))
                .collect();
            let dossier_id = dossier_id(item, &rule_versions, layer, rule_id.as_deref());
            Dossier {
                dossier_id,
                item: item.clone(),
                rule_versions,
                rules: inputs.rules.iter().filter(|r| r.active).cloned().collect(),
                evidence,
                decision,
                config: self.config,
                y_block,
                layer,
                triggered_rule_id: rule_id.clone(),
                timestamp_ms: finished,
            }
        });

        let adjudication = Adjudication {
            item_id: item.id.clone(),
            y_block,
            y_star: stars.score,
            star_count: stars.stars,
            layer,
            triggered_rule_id: rule_id.clone(),
            reason,
            dossier_id: dossier.as_ref().map(|d| d.dossier_id.clone()),
            latency_ms,
        };

        let mut events = vec![TelemetryEvent {
            timestamp: finished,
            user_id: ctx.user_id.clone(),
            kind: EventKind::Exposure,
            item_id: item.id.clone(),
            layer: Some(layer),
            rule_id: None,
            latency_ms: Some(latency_ms),
            day_index: ctx.day_index,
            action: None,
        }];
        if blocked {
            events.push(TelemetryEvent {
                kind: EventKind::OrigBlock,
                rule_id: rule_id.clone(),
                latency_ms: None,
                ..events[0].clone()
            });
        }

        AdjudicationOutcome {
            adjudication,
            dossier,
            events,
        }
    }

    /// Adjudicates a batch against one snapshot, in input order.
    pub fn adjudicate_batch(
        &self,
        items: &[FeedItem],
        inputs: DecisionInputs<'_>,
        ctx: &AdjudicationContext,
        mode: crate::exec::ExecMode,
    ) -> Vec<AdjudicationOutcome> {
        crate::exec::map(mode, items, |item| self.adjudicate(item, inputs, ctx))
    }
}

fn dossier_id(item: &FeedItem, versions: &BTreeMap<String, u32>, layer: Layer, rule: Option<&str>) -> String {
    let mut key = serde_json::to_vec(item).unwrap_or_default();
    for (id, v) in versions {
        key.extend_from_slice(id.as_bytes());
        key.extend_from_slice(&v.to_le_bytes());
    }
    key.extend_from_slice(layer.as_str().as_bytes());
    key.extend_from_slice(rule.unwrap_or("-").as_bytes());
    format!("dos_{:016x}", crate::embedding::fnv1a64(&key))
}

impl From<EmbedError> for BackendError {
    fn from(e: EmbedError) -> Self {
        BackendError::Unavailable(e.to_string())
    }
}
