//! Deterministic fault injection for providers.
//!
//! Each wrapper fails a call when a hash of `(seed, component, key)` falls
//! under the configured rate, so a schedule replays identically. An outage
//! switch fails every call regardless of rate.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::embedding::{fnv1a64, CrossModal, EmbedError, Embedding, Similarity, TextEmbedder};
use crate::model::{JudgeVerdict, VisualEvidence};
use crate::pipeline::{BackendError, JudgeBackend, JudgeCapabilities, JudgeRequest, VisionBackend};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FaultPlan {
    pub seed: u64,
    pub vision: f64,
    pub judge: f64,
    /// Share of judge calls answered with a verdict citing an unknown rule.
    pub judge_malformed: f64,
    pub embed: f64,
    pub cross_modal: f64,
}

impl FaultPlan {
    /// Deterministic coin for `(component, key)` at probability `rate`.
    pub fn fires(&self, component: &str, key: &str, rate: f64) -> bool {
        if rate <= 0.0 {
            return false;
        }
        let mut bytes = self.seed.to_le_bytes().to_vec();
        bytes.extend_from_slice(component.as_bytes());
        bytes.push(0);
        bytes.extend_from_slice(key.as_bytes());
        let unit = (mix(fnv1a64(&bytes)) >> 11) as f64 / (1u64 << 53) as f64;
        unit < rate
    }
}

// splitmix64 finalizer; raw FNV high bits are poorly spread for similar keys
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Shared switch that takes every wrapped provider down at once.
#[derive(Debug, Default)]
pub struct Outage(AtomicBool);

impl Outage {
    pub fn set(&self, down: bool) {
        self.0.store(down, Ordering::SeqCst);
    }

    pub fn is_down(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Default)]
pub struct FaultCounters {
    pub vision: AtomicUsize,
    pub judge: AtomicUsize,
    pub embed: AtomicUsize,
    pub cross_modal: AtomicUsize,
}

pub struct FaultyVision<V> {
    pub inner: V,
    pub plan: FaultPlan,
    pub outage: Arc<Outage>,
    pub counters: Arc<FaultCounters>,
}

impl<V: VisionBackend> VisionBackend for FaultyVision<V> {
    fn extract(&self, image_ref: &str) -> Result<VisualEvidence, BackendError> {
        if self.outage.is_down() || self.plan.fires("vision", image_ref, self.plan.vision) {
            self.counters.vision.fetch_add(1, Ordering::Relaxed);
            return Err(BackendError::Timeout(0));
        }
        self.inner.extract(image_ref)
    }
}

pub struct FaultyJudge<J> {
    pub inner: J,
    pub plan: FaultPlan,
    pub outage: Arc<Outage>,
    pub counters: Arc<FaultCounters>,
}

impl<J: JudgeBackend> JudgeBackend for FaultyJudge<J> {
    fn capabilities(&self) -> JudgeCapabilities {
        self.inner.capabilities()
    }

    fn judge(&self, request: &JudgeRequest) -> Result<JudgeVerdict, BackendError> {
        let key = &request.item.id;
        if self.outage.is_down() || self.plan.fires("judge", key, self.plan.judge) {
            self.counters.judge.fetch_add(1, Ordering::Relaxed);
            return Err(BackendError::Unavailable("injected".into()));
        }
        if self.plan.fires("judge_malformed", key, self.plan.judge_malformed) {
            self.counters.judge.fetch_add(1, Ordering::Relaxed);
            return Ok(JudgeVerdict::block("rule_ghost", "cites a rule that does not exist"));
        }
        self.inner.judge(request)
    }
}

pub struct FaultyEmbedder<E> {
    pub inner: E,
    pub plan: FaultPlan,
    pub outage: Arc<Outage>,
    pub counters: Arc<FaultCounters>,
}

impl<E: TextEmbedder> TextEmbedder for FaultyEmbedder<E> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed_text(&self, text: &str) -> Result<Embedding, EmbedError> {
        if self.outage.is_down() || self.plan.fires("embed", text, self.plan.embed) {
            self.counters.embed.fetch_add(1, Ordering::Relaxed);
            return Err(EmbedError::ProviderUnavailable("injected".into()));
        }
        self.inner.embed_text(text)
    }
}

impl<E: CrossModal> CrossModal for FaultyEmbedder<E> {
    fn cross_modal_similarity(&self, image_ref: &str, text: &str) -> Result<Similarity, EmbedError> {
        let key = format!("{image_ref}\u{0}{text}");
        if self.outage.is_down() || self.plan.fires("cross_modal", &key, self.plan.cross_modal) {
            self.counters.cross_modal.fetch_add(1, Ordering::Relaxed);
            return Err(EmbedError::ProviderUnavailable("injected".into()));
        }
        self.inner.cross_modal_similarity(image_ref, text)
    }
}
