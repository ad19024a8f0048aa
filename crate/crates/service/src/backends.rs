//! Provider construction: fixture-driven stubs for offline runs and thin
//! HTTP+JSON clients for remote providers.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use parking_lot::{Condvar, Mutex};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use feedwarden_core::agents::{
    ActionableProposal, AgentError, DisputeBackend, DisputeScript, IntentParser, KeywordIntentParser, RawProposal,
    ScriptedDispute,
};
use feedwarden_core::embedding::{cosine, CachedEmbedder, EmbedError, Embedding, Similarity};
use feedwarden_core::model::{JudgeVerdict, VisualEvidence};
use feedwarden_core::pipeline::{
    Adjudicator, AllPassJudge, BackendError, EvidenceCache, FixtureVision, JudgeBackend, JudgeCapabilities, JudgeRequest,
    KeywordJudge, ReplayJudge, ScriptTrigger, ScriptedJudge, VisionBackend,
};
use feedwarden_core::{Clock, CrossModal, OfflineEmbedder, TextEmbedder};

use crate::config::{BackendConfig, BackendKind, JudgeKind, ServiceConfig};
use crate::error::StartupError;

/// Everything the service needs from the outside world.
#[derive(Clone)]
pub struct Backends {
    pub adjudicator: Adjudicator,
    pub intent: Arc<dyn IntentParser>,
    pub dispute: Arc<dyn DisputeBackend>,
}

/// Text and cross-modal embedding behind one handle.
pub trait Embedder: TextEmbedder + CrossModal {}
impl<T: TextEmbedder + CrossModal> Embedder for T {}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, StartupError> {
    let text = fs::read_to_string(path).map_err(|e| StartupError::Fixture {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| StartupError::Fixture {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn offline_embedder(config: &ServiceConfig) -> Result<OfflineEmbedder, StartupError> {
    let mut embedder = OfflineEmbedder::new(config.embedding.dim);
    if let Some(dir) = &config.fixtures.captions {
        embedder.load_caption_dir(dir).map_err(|e| StartupError::Fixture {
            path: dir.clone(),
            message: e.to_string(),
        })?;
    }
    Ok(embedder)
}

pub fn offline_judge(config: &ServiceConfig) -> Result<Arc<dyn JudgeBackend>, StartupError> {
    let f = &config.fixtures;
    Ok(match config.backend.judge {
        JudgeKind::Scripted => {
            let triggers: Vec<ScriptTrigger> = match &f.judge_script {
                Some(p) => read_json(p)?,
                None => Vec::new(),
            };
            Arc::new(ScriptedJudge::new(triggers))
        }
        JudgeKind::Replay => {
            let replay: ReplayJudge = match &f.replay {
                Some(p) => read_json(p)?,
                None => ReplayJudge::default(),
            };
            Arc::new(replay)
        }
        JudgeKind::Keyword => Arc::new(KeywordJudge),
        JudgeKind::AllPass => Arc::new(AllPassJudge),
    })
}

/// Assembles the providers named by `config`. Evidence is cached in `cache`
/// and every latency is measured on `clock`.
pub fn build(
    config: &ServiceConfig,
    cache: Arc<dyn EvidenceCache>,
    clock: Arc<dyn Clock>,
) -> Result<Backends, StartupError> {
    let f = &config.fixtures;
    let intent: Arc<dyn IntentParser> = match &f.intents {
        Some(p) => Arc::new(KeywordIntentParser { table: read_json(p)? }),
        None => Arc::new(KeywordIntentParser::default()),
    };
    let dispute: Arc<dyn DisputeBackend> = match &f.disputes {
        Some(p) => Arc::new(ScriptedDispute {
            scripts: read_json::<Vec<DisputeScript>>(p)?,
        }),
        None => Arc::new(ScriptedDispute::default()),
    };

    let (vision, judge, embedder, intent, dispute): (
        Arc<dyn VisionBackend>,
        Arc<dyn JudgeBackend>,
        Arc<dyn Embedder>,
        Arc<dyn IntentParser>,
        Arc<dyn DisputeBackend>,
    ) = match config.backend.kind {
        BackendKind::Offline => {
            let evidence: HashMap<String, VisualEvidence> = match &f.evidence {
                Some(p) => read_json(p)?,
                None => HashMap::new(),
            };
            (
                Arc::new(FixtureVision::new(evidence)),
                offline_judge(config)?,
                Arc::new(CachedEmbedder::new(offline_embedder(config)?)),
                intent,
                dispute,
            )
        }
        BackendKind::Http => {
            let client = HttpClient::new(&config.backend)?;
            let b = &config.backend;
            let url = |u: &Option<String>| u.clone().unwrap_or_default();
            let embedder: Arc<dyn Embedder> = match &b.embedding_url {
                Some(u) => Arc::new(CachedEmbedder::new(HttpEmbedder {
                    client: client.clone(),
                    url: u.clone(),
                    dim: config.embedding.dim,
                })),
                None => Arc::new(CachedEmbedder::new(offline_embedder(config)?)),
            };
            let intent: Arc<dyn IntentParser> = match &b.intent_url {
                Some(u) => Arc::new(HttpIntent {
                    client: client.clone(),
                    url: u.clone(),
                }),
                None => intent,
            };
            let dispute: Arc<dyn DisputeBackend> = match &b.dispute_url {
                Some(u) => Arc::new(HttpDispute {
                    client: client.clone(),
                    url: u.clone(),
                }),
                None => dispute,
            };
            (
                Arc::new(HttpVision {
                    client: client.clone(),
                    url: url(&b.vision_url),
                }),
                Arc::new(HttpJudge {
                    client,
                    url: url(&b.judge_url),
                }),
                embedder,
                intent,
                dispute,
            )
        }
    };

    let adjudicator = Adjudicator {
        vision,
        judge,
        embedder: embedder.clone() as Arc<dyn TextEmbedder>,
        cross_modal: embedder as Arc<dyn CrossModal>,
        cache,
        clock,
        config: config.pipeline(),
        wiring: Default::default(),
    };
    Ok(Backends {
        adjudicator,
        intent,
        dispute,
    })
}

// ---------------------------------------------------------------------------
// HTTP

/// Counting gate for in-flight requests.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock();
        while *free == 0 {
            self.cv.wait(&mut free);
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock() += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Debug)]
pub enum CallError {
    Timeout(u64),
    Unavailable(String),
    Malformed(String),
}

impl From<CallError> for BackendError {
    fn from(e: CallError) -> Self {
        match e {
            CallError::Timeout(ms) => BackendError::Timeout(ms),
            CallError::Unavailable(m) => BackendError::Unavailable(m),
            CallError::Malformed(m) => BackendError::Malformed(m),
        }
    }
}

impl From<CallError> for EmbedError {
    fn from(e: CallError) -> Self {
        EmbedError::ProviderUnavailable(format!("{e:?}"))
    }
}

impl From<CallError> for AgentError {
    fn from(e: CallError) -> Self {
        match e {
            CallError::Malformed(m) => AgentError::MalformedProposal(m),
            other => AgentError::BackendFailure(format!("{other:?}")),
        }
    }
}

/// Blocking JSON client with a per-call timeout, bounded retries on
/// transport failures and 5xx, and a cap on concurrent requests.
#[derive(Clone)]
pub struct HttpClient {
    inner: reqwest::blocking::Client,
    gate: Arc<Gate>,
    timeout_ms: u64,
    retries: u32,
}

impl HttpClient {
    /// Must not be called from inside an async runtime.
    pub fn new(config: &BackendConfig) -> Result<HttpClient, StartupError> {
        let inner = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| StartupError::Backend(e.to_string()))?;
        Ok(HttpClient {
            inner,
            gate: Arc::new(Gate {
                free: Mutex::new(config.max_in_flight),
                cv: Condvar::new(),
            }),
            timeout_ms: config.timeout_ms,
            retries: config.retries,
        })
    }

    pub fn post<B: Serialize, T: DeserializeOwned>(&self, url: &str, body: &B) -> Result<T, CallError> {
        let _permit = self.gate.acquire();
        let mut last = CallError::Unavailable("no attempt made".into());
        for _ in 0..=self.retries {
            match self.inner.post(url).json(body).send() {
                Ok(resp) if resp.status().is_server_error() => {
                    last = CallError::Unavailable(format!("{url}: HTTP {}", resp.status()));
                }
                Ok(resp) if !resp.status().is_success() => {
                    return Err(CallError::Unavailable(format!("{url}: HTTP {}", resp.status())));
                }
                Ok(resp) => {
                    let bytes = resp.bytes().map_err(|e| CallError::Unavailable(e.to_string()))?;
                    return serde_json::from_slice(&bytes).map_err(|e| CallError::Malformed(e.to_string()));
                }
                Err(e) if e.is_timeout() => last = CallError::Timeout(self.timeout_ms),
                Err(e) => last = CallError::Unavailable(e.to_string()),
            }
        }
        Err(last)
    }
}

pub struct HttpVision {
    pub client: HttpClient,
    pub url: String,
}

impl VisionBackend for HttpVision {
    fn extract(&self, image_ref: &str) -> Result<VisualEvidence, BackendError> {
        Ok(self.client.post(&self.url, &json!({ "image_ref": image_ref }))?)
    }
}

pub struct HttpJudge {
    pub client: HttpClient,
    pub url: String,
}

impl JudgeBackend for HttpJudge {
    fn capabilities(&self) -> JudgeCapabilities {
        JudgeCapabilities { accepts_visual: true }
    }

    fn judge(&self, request: &JudgeRequest) -> Result<JudgeVerdict, BackendError> {
        Ok(self.client.post(&self.url, request)?)
    }
}

#[derive(Deserialize)]
struct VectorResponse {
    vector: Vec<f64>,
}

/// Remote embedder: `{input}` or `{image_ref}` → `{vector}`. Cross-modal
/// similarity is the cosine of the image and text vectors.
pub struct HttpEmbedder {
    pub client: HttpClient,
    pub url: String,
    pub dim: usize,
}

impl HttpEmbedder {
    fn fetch(&self, body: serde_json::Value) -> Result<Embedding, EmbedError> {
        let resp: VectorResponse = self.client.post(&self.url, &body)?;
        if resp.vector.len() != self.dim {
            return Err(EmbedError::DimensionMismatch(self.dim, resp.vector.len()));
        }
        Embedding::normalized(resp.vector).ok_or_else(|| EmbedError::ProviderUnavailable("zero vector".into()))
    }
}

impl TextEmbedder for HttpEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_text(&self, text: &str) -> Result<Embedding, EmbedError> {
        self.fetch(json!({ "input": text }))
    }
}

impl CrossModal for HttpEmbedder {
    fn cross_modal_similarity(&self, image_ref: &str, text: &str) -> Result<Similarity, EmbedError> {
        let image = self.fetch(json!({ "image_ref": image_ref }))?;
        cosine(&image, &self.embed_text(text)?)
    }
}

pub struct HttpIntent {
    pub client: HttpClient,
    pub url: String,
}

impl IntentParser for HttpIntent {
    fn parse(&self, utterance: &str, platform_hint: Option<&str>) -> Result<RawProposal, AgentError> {
        Ok(self
            .client
            .post(&self.url, &json!({ "utterance": utterance, "platform_hint": platform_hint }))?)
    }
}

pub struct HttpDispute {
    pub client: HttpClient,
    pub url: String,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    Many(Vec<ActionableProposal>),
    One(Box<ActionableProposal>),
}

impl DisputeBackend for HttpDispute {
    fn resolve(
        &self,
        dossier: &feedwarden_core::pipeline::Dossier,
        user_message: &str,
    ) -> Result<Vec<ActionableProposal>, AgentError> {
        let resp: OneOrMany = self
            .client
            .post(&self.url, &json!({ "dossier": dossier, "user_message": user_message }))?;
        Ok(match resp {
            OneOrMany::Many(v) => v,
            OneOrMany::One(p) => vec![*p],
        })
    }
}
