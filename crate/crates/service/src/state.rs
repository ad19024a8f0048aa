//! Per-user state routing.
//!
//! Each user has one serialized writer (rule book, profile, appeals, log)
//! and an immutable decision snapshot that adjudications read without
//! taking the writer lock. A mutation works on a copy, is made durable,
//! and only then replaces both the state and the snapshot.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use dashmap::DashMap;
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use feedwarden_core::agents::{
    parse_intent, AppealDecision, AppealRecord, ProposalEdits, RuleProposal, RulePatch,
};
use feedwarden_core::graph::{GraphDump, GraphError, PageRankOptions, PageRankVector, RuleGraph};
use feedwarden_core::pipeline::{
    star_score, Adjudication, AdjudicationContext, AdjudicationOutcome, DecisionInputs, DirCache, Dossier, Layer,
};
use feedwarden_core::profile::{Interaction, PreferenceProfile, ProfileSnapshot, TagSource};
use feedwarden_core::telemetry::{self, EventKind, EventLog, TelemetryEvent, ACTION_SLIDER};
use feedwarden_core::{Clock, ExecMode, FeedItem, ManualClock, Rule, RuleDraft, SystemClock};

use crate::backends::{self, Backends};
use crate::config::ServiceConfig;
use crate::error::{ApiError, StartupError};
use crate::store::{PersistedState, StoreError, UserLog, WalRecord};

pub const USERS_DIR: &str = "users";
pub const TELEMETRY_FILE: &str = "telemetry.ndjson";
pub const CACHE_DIR: &str = "cache";
pub const DEFAULT_USER: &str = "default";
const MAX_USER_ID: usize = 64;

/// Accepts `[A-Za-z0-9_-]{1,64}`.
pub fn valid_user_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= MAX_USER_ID
        && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

/// What an adjudication reads: never mutated after publication.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DecisionSnapshot {
    pub rules: Vec<Rule>,
    pub pr: Option<PageRankVector>,
    pub profile: PreferenceProfile,
    pub unblocked: BTreeSet<String>,
    pub first_activity_ms: Option<i64>,
}

impl DecisionSnapshot {
    fn of(state: &PersistedState) -> Self {
        DecisionSnapshot {
            rules: state.rules.active_rules(),
            pr: state.pr.clone(),
            profile: state.profile.clone(),
            unblocked: state.unblocked.clone(),
            first_activity_ms: state.first_activity_ms,
        }
    }
}

struct Writer {
    state: PersistedState,
    log: UserLog,
}

pub struct UserHandle {
    id: String,
    writer: Mutex<Writer>,
    snapshot: RwLock<Arc<DecisionSnapshot>>,
    dossiers: DashMap<String, Arc<Dossier>>,
}

impl UserHandle {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn snapshot(&self) -> Arc<DecisionSnapshot> {
        self.snapshot.read().clone()
    }

    /// Copy of the full persisted state.
    pub fn state(&self) -> PersistedState {
        self.writer.lock().state.clone()
    }

    pub fn dossier(&self, id: &str) -> Option<Arc<Dossier>> {
        self.dossiers.get(id).map(|d| d.clone())
    }

    /// Dossier ids in sorted order.
    pub fn dossier_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.dossiers.iter().map(|e| e.key().clone()).collect();
        ids.sort();
        ids
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntentRequest {
    pub utterance: String,
    #[serde(default)]
    pub platform_hint: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppealRequest {
    pub dossier_id: String,
    #[serde(default)]
    pub user_message: String,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolveRequest {
    pub decision: AppealDecision,
    #[serde(default = "default_true")]
    pub apply_proposal: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliderRequest {
    pub slider: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionRequest {
    pub tag: String,
    pub kind: TagSource,
    /// Defaults to the service clock.
    #[serde(default)]
    pub timestamp: Option<i64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ResolveResponse {
    pub appeal: AppealRecord,
    pub rule: Option<Rule>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RuleHistory {
    pub rule: Rule,
    pub versions: Vec<Rule>,
}

pub struct Service {
    config: ServiceConfig,
    backends: Backends,
    telemetry: EventLog,
    users: DashMap<String, Arc<UserHandle>>,
    users_dir: PathBuf,
    clock: Arc<dyn Clock>,
    mode: ExecMode,
}

impl Service {
    /// Opens storage under `config.storage.root` and restores every user.
    /// Any damaged user log aborts startup.
    pub fn open(config: ServiceConfig) -> Result<Service, StartupError> {
        let clock: Arc<dyn Clock> = match config.frozen_clock_ms {
            Some(ms) => Arc::new(ManualClock::new(ms)),
            None => Arc::new(SystemClock),
        };
        Service::open_with_clock(config, clock)
    }

    pub fn open_with_clock(config: ServiceConfig, clock: Arc<dyn Clock>) -> Result<Service, StartupError> {
        config.validate()?;
        let root = config.storage.root.clone();
        let cache_dir = root.join(CACHE_DIR);
        let cache = DirCache::open(&cache_dir).map_err(|source| StoreError::Io {
            path: cache_dir.clone(),
            source,
        })?;
        let backends = backends::build(&config, Arc::new(cache), clock.clone())?;
        Service::with_backends(config, backends, clock)
    }

    /// Opens storage with caller-supplied providers.
    pub fn with_backends(config: ServiceConfig, backends: Backends, clock: Arc<dyn Clock>) -> Result<Service, StartupError> {
        let root = config.storage.root.clone();
        let users_dir = root.join(USERS_DIR);
        fs::create_dir_all(&users_dir).map_err(|source| StoreError::Io {
            path: users_dir.clone(),
            source,
        })?;
        let telemetry = EventLog::open(&root.join(TELEMETRY_FILE))?;
        let service = Service {
            config,
            backends,
            telemetry,
            users: DashMap::new(),
            users_dir,
            clock,
            mode: ExecMode::default(),
        };
        let entries = fs::read_dir(&service.users_dir).map_err(|source| StoreError::Io {
            path: service.users_dir.clone(),
            source,
        })?;
        let mut ids: Vec<String> = entries
            .filter_map(Result::ok)
            .filter(|e| e.path().is_dir())
            .filter_map(|e| e.file_name().into_string().ok())
            .filter(|id| valid_user_id(id))
            .collect();
        ids.sort();
        for id in ids {
            let handle = service.load_user(&id)?;
            service.users.insert(id, handle);
        }
        Ok(service)
    }

    pub fn with_exec_mode(mut self, mode: ExecMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn backends(&self) -> &Backends {
        &self.backends
    }

    pub fn telemetry(&self) -> &EventLog {
        &self.telemetry
    }

    pub fn user_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.users.iter().map(|e| e.key().clone()).collect();
        ids.sort();
        ids
    }

    fn user_dir(&self, id: &str) -> PathBuf {
        self.users_dir.join(id)
    }

    fn fresh_state(&self) -> PersistedState {
        PersistedState {
            profile: PreferenceProfile::new(self.config.decay()),
            ..PersistedState::default()
        }
    }

    fn load_user(&self, id: &str) -> Result<Arc<UserHandle>, StoreError> {
        let (log, restored) = UserLog::open(&self.user_dir(id))?;
        let mut state = restored.state.unwrap_or_else(|| self.fresh_state());
        state.profile.set_params(self.config.decay());
        let dossiers = DashMap::new();
        for d in restored.dossiers {
            dossiers.insert(d.dossier_id.clone(), Arc::new(d));
        }
        Ok(Arc::new(UserHandle {
            id: id.to_string(),
            snapshot: RwLock::new(Arc::new(DecisionSnapshot::of(&state))),
            writer: Mutex::new(Writer { state, log }),
            dossiers,
        }))
    }

    /// Handle for `id`, creating the user on first contact.
    pub fn user(&self, id: &str) -> Result<Arc<UserHandle>, ApiError> {
        if !valid_user_id(id) {
            return Err(ApiError::bad_request(format!(
                "user id {id:?} must match [A-Za-z0-9_-]{{1,{MAX_USER_ID}}}"
            )));
        }
        if let Some(h) = self.users.get(id) {
            return Ok(h.clone());
        }
        let entry = self.users.entry(id.to_string());
        match entry {
            dashmap::Entry::Occupied(e) => Ok(e.get().clone()),
            dashmap::Entry::Vacant(v) => {
                let handle = self.load_user(id)?;
                v.insert(handle.clone());
                Ok(handle)
            }
        }
    }

    pub fn existing_user(&self, id: &str) -> Option<Arc<UserHandle>> {
        self.users.get(id).map(|h| h.clone())
    }

    fn compute_pr(&self, rules: &[Rule]) -> Result<Option<PageRankVector>, ApiError> {
        match RuleGraph::build(rules, self.backends.adjudicator.embedder.as_ref(), self.config.graph(), self.mode) {
            Ok(g) => Ok(Some(g.personalized_pagerank(PageRankOptions::default(), None))),
            Err(GraphError::NoActiveRules) => Ok(None),
            Err(GraphError::Embedding(e)) => Err(ApiError::new(
                axum::http::StatusCode::UNPROCESSABLE_ENTITY,
                "embedding_failed",
                e.to_string(),
            )),
            Err(e) => Err(ApiError::bad_request(e.to_string())),
        }
    }

    /// Runs `f` on a copy of the user's state. On success the copy is made
    /// durable, published, and the returned event is logged.
    fn mutate<T>(
        &self,
        handle: &UserHandle,
        f: impl FnOnce(&mut PersistedState) -> Result<(T, TelemetryEvent), ApiError>,
    ) -> Result<T, ApiError> {
        let now = self.clock.now_ms();
        let mut writer = handle.writer.lock();
        let mut next = writer.state.clone();
        let (value, mut event) = f(&mut next)?;
        next.first_activity_ms.get_or_insert(now);
        let before = writer.state.rules.active_rules();
        let after = next.rules.active_rules();
        if before != after {
            next.pr = self.compute_pr(&after)?;
        }
        if next != writer.state {
            let record = WalRecord::State {
                state: Box::new(next.clone()),
            };
            writer.log.append(&record)?;
            writer.state = next;
            *handle.snapshot.write() = Arc::new(DecisionSnapshot::of(&writer.state));
            self.maybe_compact(&mut writer, handle)?;
        }
        event.timestamp = now;
        event.user_id = handle.id.clone();
        event.day_index = day_of(writer.state.first_activity_ms, now);
        drop(writer);
        self.telemetry.append(&[event])?;
        Ok(value)
    }

    /// Rewrites the user's log once it has grown past the configured size.
    /// Runs after the triggering record is durable.
    fn maybe_compact(&self, writer: &mut Writer, handle: &UserHandle) -> Result<(), ApiError> {
        if writer.log.records() < self.config.storage.compact_every {
            return Ok(());
        }
        let mut dossiers: Vec<Arc<Dossier>> = handle.dossiers.iter().map(|e| e.value().clone()).collect();
        dossiers.sort_by(|a, b| a.dossier_id.cmp(&b.dossier_id));
        let state = writer.state.clone();
        writer.log.compact(&state, dossiers.iter().map(|d| d.as_ref()))?;
        Ok(())
    }

    fn ensure_started(&self, handle: &UserHandle) -> Result<i64, ApiError> {
        if let Some(first) = handle.snapshot().first_activity_ms {
            return Ok(first);
        }
        let now = self.clock.now_ms();
        let mut writer = handle.writer.lock();
        if let Some(first) = writer.state.first_activity_ms {
            return Ok(first);
        }
        let mut next = writer.state.clone();
        next.first_activity_ms = Some(now);
        writer.log.append(&WalRecord::State {
            state: Box::new(next.clone()),
        })?;
        writer.state = next;
        *handle.snapshot.write() = Arc::new(DecisionSnapshot::of(&writer.state));
        Ok(now)
    }

    fn event(kind: EventKind) -> TelemetryEvent {
        TelemetryEvent::new(kind, "", 0)
    }

    fn action(action: &str) -> TelemetryEvent {
        Service::event(EventKind::ManualEvent).action(action)
    }

    // -----------------------------------------------------------------------
    // Adjudication

    fn finish(&self, snapshot: &DecisionSnapshot, item: &FeedItem, mut out: AdjudicationOutcome) -> AdjudicationOutcome {
        if out.adjudication.blocked() && snapshot.unblocked.contains(&item.id) {
            let stars = star_score(
                item,
                &snapshot.profile,
                self.backends.adjudicator.embedder.as_ref(),
                &self.backends.adjudicator.config,
            );
            out.adjudication = Adjudication {
                y_block: 0,
                y_star: stars.score,
                star_count: stars.stars,
                layer: Layer::Pass,
                triggered_rule_id: None,
                reason: "Unblocked by an accepted appeal.".into(),
                dossier_id: None,
                ..out.adjudication
            };
            out.dossier = None;
            out.events.truncate(1);
            out.events[0].layer = Some(Layer::Pass);
        }
        out
    }

    fn record(&self, handle: &UserHandle, outcomes: &[AdjudicationOutcome]) -> Result<(), ApiError> {
        let fresh: Vec<&Dossier> = outcomes
            .iter()
            .filter_map(|o| o.dossier.as_ref())
            .filter(|d| !handle.dossiers.contains_key(&d.dossier_id))
            .collect();
        if !fresh.is_empty() {
            let mut writer = handle.writer.lock();
            for d in fresh {
                if handle.dossiers.contains_key(&d.dossier_id) {
                    continue;
                }
                writer.log.append(&WalRecord::Dossier {
                    dossier: Box::new(d.clone()),
                })?;
                handle.dossiers.insert(d.dossier_id.clone(), Arc::new(d.clone()));
                self.maybe_compact(&mut writer, handle)?;
            }
        }
        let events: Vec<TelemetryEvent> = outcomes.iter().flat_map(|o| o.events.iter().cloned()).collect();
        self.telemetry.append(&events)?;
        Ok(())
    }

    fn context(&self, handle: &UserHandle) -> Result<AdjudicationContext, ApiError> {
        let first = self.ensure_started(handle)?;
        Ok(AdjudicationContext {
            user_id: handle.id.clone(),
            day_index: telemetry::day_index(first, self.clock.now_ms()),
        })
    }

    pub fn adjudicate(&self, user: &str, item: &FeedItem) -> Result<Adjudication, ApiError> {
        item.validate().map_err(|e| ApiError::bad_request(e.to_string()))?;
        let handle = self.user(user)?;
        let ctx = self.context(&handle)?;
        let snapshot = handle.snapshot();
        let inputs = DecisionInputs {
            rules: &snapshot.rules,
            ranking: snapshot.pr.as_ref(),
            profile: Some(&snapshot.profile),
        };
        let out = self.backends.adjudicator.adjudicate(item, inputs, &ctx);
        let out = self.finish(&snapshot, item, out);
        self.record(&handle, std::slice::from_ref(&out))?;
        Ok(out.adjudication)
    }

    /// Adjudicates items in parallel against one snapshot; results keep
    /// input order.
    pub fn adjudicate_batch(&self, user: &str, items: &[FeedItem]) -> Result<Vec<Adjudication>, ApiError> {
        for item in items {
            item.validate().map_err(|e| ApiError::bad_request(e.to_string()))?;
        }
        let handle = self.user(user)?;
        let ctx = self.context(&handle)?;
        let snapshot = handle.snapshot();
        let inputs = DecisionInputs {
            rules: &snapshot.rules,
            ranking: snapshot.pr.as_ref(),
            profile: Some(&snapshot.profile),
        };
        let outs: Vec<AdjudicationOutcome> = self
            .backends
            .adjudicator
            .adjudicate_batch(items, inputs, &ctx, self.mode)
            .into_iter()
            .zip(items)
            .map(|(o, item)| self.finish(&snapshot, item, o))
            .collect();
        self.record(&handle, &outs)?;
        Ok(outs.into_iter().map(|o| o.adjudication).collect())
    }

    // -----------------------------------------------------------------------
    // Rules

    pub fn rules(&self, user: &str) -> Result<Vec<Rule>, ApiError> {
        Ok(self.user(user)?.state().rules.rules())
    }

    pub fn rule(&self, user: &str, id: &str) -> Result<RuleHistory, ApiError> {
        let state = self.user(user)?.state();
        let versions = state
            .rules
            .versions(id)
            .ok_or_else(|| ApiError::not_found(format!("unknown rule {id}")))?
            .to_vec();
        Ok(RuleHistory {
            rule: versions.last().cloned().expect("history is never empty"),
            versions,
        })
    }

    pub fn add_rule(&self, user: &str, draft: &RuleDraft) -> Result<Rule, ApiError> {
        let handle = self.user(user)?;
        self.mutate(&handle, |s| {
            let rule = s.rules.add(draft)?;
            let event = if rule.is_filter() {
                Service::event(EventKind::ManualFilterAdd).rule(&rule.id)
            } else {
                Service::action("rule_add").rule(&rule.id)
            };
            Ok((rule, event))
        })
    }

    /// Idempotent: a patch that changes nothing leaves the version alone.
    pub fn update_rule(&self, user: &str, id: &str, patch: &RulePatch) -> Result<Rule, ApiError> {
        let handle = self.user(user)?;
        self.mutate(&handle, |s| {
            let rule = match s.rules.update(id, patch)? {
                Some(r) => r,
                None => s.rules.current(id).cloned().expect("update checked the id"),
            };
            Ok((rule, Service::action("rule_update").rule(id)))
        })
    }

    pub fn delete_rule(&self, user: &str, id: &str) -> Result<Rule, ApiError> {
        let handle = self.user(user)?;
        self.mutate(&handle, |s| {
            let rule = match s.rules.deactivate(id)? {
                Some(r) => r,
                None => s.rules.current(id).cloned().expect("deactivate checked the id"),
            };
            Ok((rule, Service::action("rule_delete").rule(id)))
        })
    }

    // -----------------------------------------------------------------------
    // Proposals

    pub fn intent(&self, user: &str, req: &IntentRequest) -> Result<RuleProposal, ApiError> {
        let handle = self.user(user)?;
        let proposal = parse_intent(
            &req.utterance,
            req.platform_hint.as_deref(),
            self.backends.intent.as_ref(),
        )?;
        self.mutate(&handle, |s| Ok((s.rules.draft(proposal), Service::action("intent"))))
    }

    pub fn proposals(&self, user: &str) -> Result<Vec<RuleProposal>, ApiError> {
        Ok(self
            .user(user)?
            .state()
            .rules
            .pending()
            .into_iter()
            .cloned()
            .collect())
    }

    pub fn confirm(&self, user: &str, id: &str, edits: Option<&ProposalEdits>) -> Result<Rule, ApiError> {
        let handle = self.user(user)?;
        self.mutate(&handle, |s| {
            let rule = s.rules.confirm(id, edits)?;
            let event = if rule.is_filter() {
                Service::event(EventKind::ManualFilterAdd).rule(&rule.id)
            } else {
                Service::action("proposal_confirm").rule(&rule.id)
            };
            Ok((rule, event))
        })
    }

    pub fn reject(&self, user: &str, id: &str) -> Result<RuleProposal, ApiError> {
        let handle = self.user(user)?;
        self.mutate(&handle, |s| {
            s.rules.reject(id)?;
            let p = s.rules.proposal(id).cloned().expect("reject checked the id");
            Ok((p, Service::action("proposal_reject")))
        })
    }

    // -----------------------------------------------------------------------
    // Dossiers and appeals

    pub fn dossier(&self, user: &str, id: &str) -> Result<Arc<Dossier>, ApiError> {
        self.user(user)?
            .dossier(id)
            .ok_or_else(|| ApiError::not_found(format!("unknown dossier {id}")))
    }

    pub fn file_appeal(&self, user: &str, req: &AppealRequest) -> Result<AppealRecord, ApiError> {
        let handle = self.user(user)?;
        let dossier = handle
            .dossier(&req.dossier_id)
            .ok_or_else(|| ApiError::from(feedwarden_core::agents::AgentError::UnknownDossier(req.dossier_id.clone())))?;
        let now = self.clock.now_ms();
        let dispute = self.backends.dispute.clone();
        self.mutate(&handle, |s| {
            let record = s
                .appeals
                .file(&dossier, &req.user_message, Some(dispute.as_ref()), now)?;
            let event = Service::action("appeal_open").item(&record.item_id);
            Ok((record, event))
        })
    }

    pub fn appeal(&self, user: &str, id: &str) -> Result<AppealRecord, ApiError> {
        self.user(user)?
            .state()
            .appeals
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown appeal {id}")))
    }

    pub fn resolve_appeal(&self, user: &str, id: &str, req: &ResolveRequest) -> Result<ResolveResponse, ApiError> {
        let handle = self.user(user)?;
        self.mutate(&handle, |s| {
            let resolution = s.appeals.resolve(id, req.decision, req.apply_proposal, &mut s.rules)?;
            let record = resolution.record;
            let event = match req.decision {
                AppealDecision::AcceptUnblock => {
                    s.unblocked.insert(record.item_id.clone());
                    let mut e = Service::event(EventKind::AppealPassed)
                        .item(&record.item_id)
                        .layer(record.layer);
                    if let Some(rule) = &record.rule_id {
                        e = e.rule(rule);
                    }
                    e
                }
                AppealDecision::Uphold => Service::action("appeal_uphold").item(&record.item_id),
            };
            Ok((
                ResolveResponse {
                    appeal: record,
                    rule: resolution.rule,
                },
                event,
            ))
        })
    }

    // -----------------------------------------------------------------------
    // Profile

    pub fn profile(&self, user: &str) -> Result<ProfileSnapshot, ApiError> {
        Ok(self.user(user)?.snapshot().profile.snapshot())
    }

    /// Idempotent: the same slider value always yields the same node.
    pub fn set_slider(&self, user: &str, tag: &str, req: &SliderRequest) -> Result<ProfileSnapshot, ApiError> {
        let tag = tag.trim();
        if tag.is_empty() {
            return Err(ApiError::bad_request("tag is empty"));
        }
        let handle = self.user(user)?;
        self.mutate(&handle, |s| {
            s.profile.apply_user_delta(tag, req.slider)?;
            Ok((s.profile.snapshot(), Service::action(ACTION_SLIDER)))
        })
    }

    pub fn record_interaction(&self, user: &str, req: &InteractionRequest) -> Result<ProfileSnapshot, ApiError> {
        let tag = req.tag.trim();
        if tag.is_empty() {
            return Err(ApiError::bad_request("tag is empty"));
        }
        let handle = self.user(user)?;
        let timestamp = req.timestamp.unwrap_or_else(|| self.clock.now_ms());
        self.mutate(&handle, |s| {
            s.window.push(Interaction {
                tag: tag.to_string(),
                timestamp,
                kind: req.kind,
            });
            s.profile.refresh_base(&s.window);
            Ok((s.profile.snapshot(), Service::action("interaction")))
        })
    }

    pub fn advance_session(&self, user: &str) -> Result<ProfileSnapshot, ApiError> {
        let handle = self.user(user)?;
        self.mutate(&handle, |s| {
            s.profile.decay_session();
            Ok((s.profile.snapshot(), Service::action("session_advance")))
        })
    }

    // -----------------------------------------------------------------------
    // Views

    pub fn graph(&self, user: &str) -> Result<GraphDump, ApiError> {
        let snapshot = self.user(user)?.snapshot();
        match RuleGraph::build(
            &snapshot.rules,
            self.backends.adjudicator.embedder.as_ref(),
            self.config.graph(),
            self.mode,
        ) {
            Ok(g) => Ok(g.dump(snapshot.pr.as_ref())),
            Err(GraphError::NoActiveRules) => Ok(GraphDump {
                nodes: Vec::new(),
                edges: Vec::new(),
                pr: Default::default(),
            }),
            Err(e) => Err(ApiError::internal(e.to_string())),
        }
    }

    /// Events for one user, or for everyone when `user` is `None`.
    pub fn events(&self, user: Option<&str>) -> Vec<TelemetryEvent> {
        let mut events = self.telemetry.snapshot();
        if let Some(u) = user {
            events.retain(|e| e.user_id == u);
        }
        events
    }
}

fn day_of(first: Option<i64>, now: i64) -> u32 {
    telemetry::day_index(first.unwrap_or(now), now)
}

/// Storage root layout helper for tools that inspect a stopped service.
pub fn user_log_path(root: &Path, user: &str) -> PathBuf {
    root.join(USERS_DIR).join(user).join(crate::store::WAL_FILE)
}
