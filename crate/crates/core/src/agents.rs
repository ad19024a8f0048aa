//! Intent parsing, the versioned rule book, and appeals with dispute
//! resolution.
//!
//! Nothing an agent drafts reaches adjudication until it is confirmed:
//! proposals live beside the rule book, and only [`RuleBook::active_rules`]
//! feeds the pipeline.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{derive_rule_id, validate_rule, Modality, ModelError, Rule, RuleDraft};
use crate::pipeline::{Dossier, Layer};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("utterance is empty")]
    EmptyUtterance,
    #[error("agent backend failure: {0}")]
    BackendFailure(String),
    #[error("invalid proposal: {0}")]
    InvalidProposal(ModelError),
    #[error("malformed proposal: {0}")]
    MalformedProposal(String),
    #[error("stale proposal: {0}")]
    StaleProposal(String),
    #[error("unknown proposal {0:?}")]
    UnknownProposal(String),
    #[error("unknown rule {0:?}")]
    UnknownRule(String),
    #[error("rule {0:?} already exists")]
    DuplicateRule(String),
    #[error("invalid rule: {0}")]
    InvalidRule(ModelError),
    #[error("unknown dossier {0:?}")]
    UnknownDossier(String),
    #[error("dossier {0:?} does not record a block")]
    NotABlock(String),
    #[error("dossier {0:?} already has an appeal")]
    AlreadyAppealed(String),
    #[error("unknown appeal {0:?}")]
    UnknownAppeal(String),
    #[error("appeal {0:?} is already resolved")]
    AlreadyResolved(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalStatus {
    Pending,
    Confirmed,
    Rejected,
    Edited,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalOrigin {
    IntentParse,
    Dispute,
}

/// Output schema of an intent backend before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawProposal {
    pub nl_description: String,
    #[serde(default)]
    pub core_entities: Vec<String>,
    pub weight: f64,
    pub modality: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleProposal {
    #[serde(default)]
    pub proposal_id: String,
    pub nl_description: String,
    pub core_entities: Vec<String>,
    pub weight: f64,
    pub modality: Modality,
    pub status: ProposalStatus,
    pub origin: ProposalOrigin,
}

impl RuleProposal {
    fn draft(&self) -> RuleDraft {
        RuleDraft {
            description: Some(self.nl_description.clone()),
            weight: Some(self.weight),
            modality: Some(self.modality.as_str().to_string()),
            core_entities: self.core_entities.clone(),
            ..RuleDraft::default()
        }
    }
}

/// Checks a raw backend proposal; out-of-range weights are reported, never
/// clamped.
pub fn validate_proposal(raw: &RawProposal, origin: ProposalOrigin) -> Result<RuleProposal, AgentError> {
    let draft = RuleDraft {
        description: Some(raw.nl_description.clone()),
        weight: Some(raw.weight),
        modality: Some(raw.modality.clone()),
        core_entities: raw.core_entities.clone(),
        ..RuleDraft::default()
    };
    let rule = validate_rule(&draft).map_err(AgentError::InvalidProposal)?;
    Ok(RuleProposal {
        proposal_id: String::new(),
        nl_description: rule.description,
        core_entities: rule.core_entities,
        weight: rule.weight,
        modality: rule.modality,
        status: ProposalStatus::Pending,
        origin,
    })
}

pub trait IntentParser: Send + Sync {
    fn parse(&self, utterance: &str, platform_hint: Option<&str>) -> Result<RawProposal, AgentError>;
}

/// Keyword-table intent parser: the first entry whose keyword appears in the
/// utterance wins.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KeywordIntentParser {
    pub table: Vec<(String, RawProposal)>,
}

impl Default for KeywordIntentParser {
    fn default() -> Self {
        let entry = |kw: &str, desc: &str, entities: &[&str], weight: f64, modality: &str| {
            (
                kw.to_string(),
                RawProposal {
                    nl_description: desc.to_string(),
                    core_entities: entities.iter().map(|e| e.to_string()).collect(),
                    weight,
                    modality: modality.to_string(),
                },
            )
        };
        KeywordIntentParser {
            table: vec![
                entry(
                    "appearance anxiety",
                    "Reject appearance anxiety and body involution",
                    &["appearance anxiety"],
                    -0.8,
                    "image_text",
                ),
                entry(
                    "flame war",
                    "Block gender antagonism or flame-war related speech",
                    &["gender antagonism", "flame war"],
                    -0.8,
                    "text",
                ),
                entry(
                    "tutorial",
                    "Allow hands-on technical tutorials",
                    &["tutorial"],
                    0.6,
                    "text",
                ),
            ],
        }
    }
}

impl IntentParser for KeywordIntentParser {
    fn parse(&self, utterance: &str, _platform_hint: Option<&str>) -> Result<RawProposal, AgentError> {
        let lowered = utterance.to_lowercase();
        self.table
            .iter()
            .find(|(kw, _)| lowered.contains(&kw.to_lowercase()))
            .map(|(_, p)| p.clone())
            .ok_or_else(|| AgentError::BackendFailure(format!("no scripted intent for {utterance:?}")))
    }
}

pub fn parse_intent(
    utterance: &str,
    platform_hint: Option<&str>,
    parser: &dyn IntentParser,
) -> Result<RuleProposal, AgentError> {
    if utterance.trim().is_empty() {
        return Err(AgentError::EmptyUtterance);
    }
    let raw = parser.parse(utterance, platform_hint)?;
    validate_proposal(&raw, ProposalOrigin::IntentParse)
}

// ---------------------------------------------------------------------------
// Rule book

/// Partial rule update. Absent fields are left alone.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RulePatch {
    pub description: Option<String>,
    pub weight: Option<f64>,
    pub modality: Option<String>,
    pub core_entities: Option<Vec<String>>,
    pub active: Option<bool>,
    pub exemptions: Option<Vec<String>>,
}

/// Edits a user may apply to a proposal before confirming it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalEdits {
    pub nl_description: Option<String>,
    pub core_entities: Option<Vec<String>>,
    pub weight: Option<f64>,
    pub modality: Option<String>,
}

/// Versioned rules plus pending proposals. Every change appends a version;
/// nothing is overwritten.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RuleBook {
    history: BTreeMap<String, Vec<Rule>>,
    proposals: BTreeMap<String, RuleProposal>,
    next_proposal: u64,
}

impl RuleBook {
    pub fn new() -> Self {
        RuleBook::default()
    }

    pub fn current(&self, id: &str) -> Option<&Rule> {
        self.history.get(id).and_then(|v| v.last())
    }

    /// Latest version of every rule, active or not, sorted by id.
    pub fn rules(&self) -> Vec<Rule> {
        self.history.values().filter_map(|v| v.last().cloned()).collect()
    }

    pub fn active_rules(&self) -> Vec<Rule> {
        self.rules().into_iter().filter(|r| r.active).collect()
    }

    pub fn versions(&self, id: &str) -> Option<&[Rule]> {
        self.history.get(id).map(Vec::as_slice)
    }

    pub fn version_vector(&self) -> BTreeMap<String, u32> {
        self.history
            .iter()
            .filter_map(|(id, v)| v.last().map(|r| (id.clone(), r.version)))
            .collect()
    }

    fn fresh_id(&self, description: &str) -> String {
        (0u64..)
            .map(|salt| derive_rule_id(description, salt))
            .find(|id| !self.history.contains_key(id))
            .expect("salt space is unbounded")
    }

    /// Adds a new rule at version 1.
    pub fn add(&mut self, draft: &RuleDraft) -> Result<Rule, AgentError> {
        let mut rule = validate_rule(draft).map_err(AgentError::InvalidRule)?;
        if draft.id.as_deref().is_some_and(|id| !id.trim().is_empty()) {
            if self.history.contains_key(&rule.id) {
                return Err(AgentError::DuplicateRule(rule.id));
            }
        } else {
            rule.id = self.fresh_id(&rule.description);
        }
        self.history.insert(rule.id.clone(), vec![rule.clone()]);
        Ok(rule)
    }

    /// Applies a patch. Returns `None` when the patch changes nothing, so
    /// repeating a request leaves the book untouched.
    pub fn update(&mut self, id: &str, patch: &RulePatch) -> Result<Option<Rule>, AgentError> {
        let current = self
            .current(id)
            .ok_or_else(|| AgentError::UnknownRule(id.to_string()))?
            .clone();
        let mut candidate = current.clone();
        if let Some(d) = &patch.description {
            candidate.description = d.trim().to_string();
        }
        if let Some(w) = patch.weight {
            candidate.weight = w;
        }
        if let Some(m) = &patch.modality {
            candidate.modality = m
                .parse()
                .map_err(AgentError::InvalidRule)?;
        }
        if let Some(e) = &patch.core_entities {
            candidate.core_entities = e.clone();
        }
        if let Some(a) = patch.active {
            candidate.active = a;
        }
        if let Some(x) = &patch.exemptions {
            candidate.exemptions = x.clone();
        }
        if candidate == current {
            return Ok(None);
        }
        let next = current
            .next_version(|r| *r = candidate)
            .map_err(AgentError::InvalidRule)?;
        self.history.get_mut(id).expect("present").push(next.clone());
        Ok(Some(next))
    }

    /// Deactivates a rule by appending an inactive version.
    pub fn deactivate(&mut self, id: &str) -> Result<Option<Rule>, AgentError> {
        self.update(
            id,
            &RulePatch {
                active: Some(false),
                ..RulePatch::default()
            },
        )
    }

    /// Stores a pending proposal and returns its id.
    pub fn draft(&mut self, mut proposal: RuleProposal) -> RuleProposal {
        self.next_proposal += 1;
        proposal.proposal_id = format!("prop_{:06}", self.next_proposal);
        proposal.status = ProposalStatus::Pending;
        self.proposals.insert(proposal.proposal_id.clone(), proposal.clone());
        proposal
    }

    pub fn proposal(&self, id: &str) -> Option<&RuleProposal> {
        self.proposals.get(id)
    }

    pub fn pending(&self) -> Vec<&RuleProposal> {
        self.proposals
            .values()
            .filter(|p| p.status == ProposalStatus::Pending)
            .collect()
    }

    /// Activates a pending proposal, applying `edits` first.
    pub fn confirm(&mut self, proposal_id: &str, edits: Option<&ProposalEdits>) -> Result<Rule, AgentError> {
        let proposal = self
            .proposals
            .get(proposal_id)
            .ok_or_else(|| AgentError::UnknownProposal(proposal_id.to_string()))?;
        if proposal.status != ProposalStatus::Pending {
            return Err(AgentError::StaleProposal(format!(
                "{proposal_id} is already {:?}",
                proposal.status
            )));
        }
        let mut draft = proposal.draft();
        if let Some(e) = edits {
            if let Some(d) = &e.nl_description {
                draft.description = Some(d.clone());
            }
            if let Some(c) = &e.core_entities {
                draft.core_entities = c.clone();
            }
            if let Some(w) = e.weight {
                draft.weight = Some(w);
            }
            if let Some(m) = &e.modality {
                draft.modality = Some(m.clone());
            }
        }
        validate_rule(&draft).map_err(AgentError::InvalidProposal)?;
        let rule = self.add(&draft)?;
        let edited = edits.is_some_and(|e| *e != ProposalEdits::default());
        let p = self.proposals.get_mut(proposal_id).expect("present");
        p.status = ProposalStatus::Confirmed;
        if edited {
            p.nl_description = rule.description.clone();
            p.core_entities = rule.core_entities.clone();
            p.weight = rule.weight;
            p.modality = rule.modality;
        }
        Ok(rule)
    }

    pub fn reject(&mut self, proposal_id: &str) -> Result<(), AgentError> {
        let p = self
            .proposals
            .get_mut(proposal_id)
            .ok_or_else(|| AgentError::UnknownProposal(proposal_id.to_string()))?;
        if p.status != ProposalStatus::Pending {
            return Err(AgentError::StaleProposal(proposal_id.to_string()));
        }
        p.status = ProposalStatus::Rejected;
        Ok(())
    }

    /// Applies a dispute outcome. `based_on` is the rule version the proposal
    /// was drafted against; a newer current version makes it stale.
    pub fn apply_actionable(&mut self, action: &ActionableProposal, based_on: Option<u32>) -> Result<Rule, AgentError> {
        match (&action.kind, &action.payload) {
            (ProposalKind::ModifyRule, payload) => {
                let id = action
                    .target_rule_id
                    .as_deref()
                    .ok_or_else(|| AgentError::MalformedProposal("modify_rule without target".into()))?;
                let current = self
                    .current(id)
                    .ok_or_else(|| AgentError::UnknownRule(id.to_string()))?
                    .clone();
                if based_on.is_some_and(|v| v != current.version) {
                    return Err(AgentError::StaleProposal(format!(
                        "{id} moved from version {} to {}",
                        based_on.unwrap_or_default(),
                        current.version
                    )));
                }
                let patch = match payload {
                    ProposalPayload::Exemption { exemption } => {
                        let mut ex = current.exemptions.clone();
                        if !ex.contains(exemption) {
                            ex.push(exemption.clone());
                        }
                        RulePatch {
                            exemptions: Some(ex),
                            ..RulePatch::default()
                        }
                    }
                    ProposalPayload::Weight { weight } => RulePatch {
                        weight: Some(*weight),
                        ..RulePatch::default()
                    },
                    ProposalPayload::Rule { .. } => {
                        return Err(AgentError::MalformedProposal("modify_rule carries a new rule".into()))
                    }
                };
                match self.update(id, &patch)? {
                    Some(rule) => Ok(rule),
                    None => Ok(current),
                }
            }
            (ProposalKind::AddAllowRule, ProposalPayload::Rule { rule }) => {
                if rule.weight <= 0.0 {
                    return Err(AgentError::MalformedProposal("allow rule needs a positive weight".into()));
                }
                self.add(&rule.draft())
            }
            (ProposalKind::AddAllowRule, _) => Err(AgentError::MalformedProposal(
                "add_allow_rule needs a rule payload".into(),
            )),
        }
    }
}

// ---------------------------------------------------------------------------
// Disputes and appeals

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalKind {
    ModifyRule,
    AddAllowRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ProposalPayload {
    Exemption { exemption: String },
    Weight { weight: f64 },
    Rule { rule: RuleProposal },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionableProposal {
    pub kind: ProposalKind,
    pub target_rule_id: Option<String>,
    pub payload: ProposalPayload,
    pub rationale: String,
}

pub trait DisputeBackend: Send + Sync {
    /// Every proposal the backend produced for one round.
    fn resolve(&self, dossier: &Dossier, user_message: &str) -> Result<Vec<ActionableProposal>, AgentError>;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DisputeScript {
    pub rule_id: String,
    pub keyword: String,
    pub proposal: ActionableProposal,
}

/// Table-driven dispute backend keyed by (triggered rule, message keyword).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScriptedDispute {
    pub scripts: Vec<DisputeScript>,
}

impl ScriptedDispute {
    pub fn script(mut self, rule_id: &str, keyword: &str, proposal: ActionableProposal) -> Self {
        self.scripts.push(DisputeScript {
            rule_id: rule_id.to_string(),
            keyword: keyword.to_string(),
            proposal,
        });
        self
    }
}

impl DisputeBackend for ScriptedDispute {
    fn resolve(&self, dossier: &Dossier, user_message: &str) -> Result<Vec<ActionableProposal>, AgentError> {
        let rule = dossier.triggered_rule_id.as_deref().unwrap_or_default();
        let msg = user_message.to_lowercase();
        self.scripts
            .iter()
            .find(|s| s.rule_id == rule && msg.contains(&s.keyword.to_lowercase()))
            .map(|s| vec![s.proposal.clone()])
            .ok_or_else(|| AgentError::BackendFailure(format!("no scripted dispute for {rule}")))
    }
}

/// One dispute round; the backend must return exactly one proposal.
pub fn dispute_resolve(
    dossier: &Dossier,
    user_message: &str,
    backend: &dyn DisputeBackend,
) -> Result<ActionableProposal, AgentError> {
    let mut proposals = backend.resolve(dossier, user_message)?;
    if proposals.len() != 1 {
        return Err(AgentError::MalformedProposal(format!(
            "expected exactly one proposal, got {}",
            proposals.len()
        )));
    }
    let proposal = proposals.remove(0);
    match (&proposal.kind, &proposal.payload) {
        (ProposalKind::ModifyRule, ProposalPayload::Rule { .. })
        | (ProposalKind::AddAllowRule, ProposalPayload::Exemption { .. })
        | (ProposalKind::AddAllowRule, ProposalPayload::Weight { .. }) => {
            return Err(AgentError::MalformedProposal("payload does not match kind".into()))
        }
        (ProposalKind::ModifyRule, _) if proposal.target_rule_id.is_none() => {
            return Err(AgentError::MalformedProposal("modify_rule without target".into()))
        }
        (_, ProposalPayload::Weight { weight }) if !(-1.0..=1.0).contains(weight) || *weight == 0.0 => {
            return Err(AgentError::MalformedProposal(format!("weight {weight} out of range")))
        }
        _ => {}
    }
    Ok(proposal)
}

/// Returns the dossier when it can be appealed.
pub fn open_appeal<'a>(dossier_id: &str, dossier: Option<&'a Dossier>) -> Result<&'a Dossier, AgentError> {
    let dossier = dossier.ok_or_else(|| AgentError::UnknownDossier(dossier_id.to_string()))?;
    if !dossier.is_block() {
        return Err(AgentError::NotABlock(dossier_id.to_string()));
    }
    Ok(dossier)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AppealOutcome {
    Passed,
    Upheld,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AppealDecision {
    AcceptUnblock,
    Uphold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppealRecord {
    pub appeal_id: String,
    pub dossier_id: String,
    pub item_id: String,
    pub rule_id: Option<String>,
    pub rule_version: Option<u32>,
    pub layer: Layer,
    pub user_message: String,
    pub outcome: Option<AppealOutcome>,
    /// Set when the dispute backend failed; the appeal stays open.
    pub deferred: bool,
    pub resulting_proposal: Option<ActionableProposal>,
    pub timestamp: i64,
}

/// What resolving an appeal changed.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolution {
    pub record: AppealRecord,
    pub rule: Option<Rule>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AppealBook {
    appeals: BTreeMap<String, AppealRecord>,
    next: u64,
}

impl AppealBook {
    pub fn get(&self, id: &str) -> Option<&AppealRecord> {
        self.appeals.get(id)
    }

    pub fn all(&self) -> impl Iterator<Item = &AppealRecord> {
        self.appeals.values()
    }

    /// Opens an appeal on a block dossier and runs one dispute round. A
    /// backend failure defers the proposal but keeps the appeal open.
    pub fn file(
        &mut self,
        dossier: &Dossier,
        user_message: &str,
        backend: Option<&dyn DisputeBackend>,
        now_ms: i64,
    ) -> Result<AppealRecord, AgentError> {
        let dossier = open_appeal(&dossier.dossier_id, Some(dossier))?;
        if self
            .appeals
            .values()
            .any(|a| a.dossier_id == dossier.dossier_id && a.outcome != Some(AppealOutcome::Upheld))
        {
            return Err(AgentError::AlreadyAppealed(dossier.dossier_id.clone()));
        }
        let (proposal, deferred) = match backend {
            Some(b) if !user_message.trim().is_empty() => match dispute_resolve(dossier, user_message, b) {
                Ok(p) => (Some(p), false),
                Err(AgentError::BackendFailure(_)) => (None, true),
                Err(e) => return Err(e),
            },
            _ => (None, false),
        };
        self.next += 1;
        let rule_version = dossier
            .triggered_rule_id
            .as_ref()
            .and_then(|id| dossier.rule_versions.get(id).copied());
        let record = AppealRecord {
            appeal_id: format!("apl_{:06}", self.next),
            dossier_id: dossier.dossier_id.clone(),
            item_id: dossier.item.id.clone(),
            rule_id: dossier.triggered_rule_id.clone(),
            rule_version,
            layer: dossier.layer,
            user_message: user_message.to_string(),
            outcome: None,
            deferred,
            resulting_proposal: proposal,
            timestamp: now_ms,
        };
        self.appeals.insert(record.appeal_id.clone(), record.clone());
        Ok(record)
    }

    /// Closes an appeal. On accept with `apply_proposal`, the attached
    /// proposal is applied to `rules` first; if that fails nothing changes.
    pub fn resolve(
        &mut self,
        appeal_id: &str,
        decision: AppealDecision,
        apply_proposal: bool,
        rules: &mut RuleBook,
    ) -> Result<Resolution, AgentError> {
        let record = self
            .appeals
            .get(appeal_id)
            .ok_or_else(|| AgentError::UnknownAppeal(appeal_id.to_string()))?;
        if record.outcome.is_some() {
            return Err(AgentError::AlreadyResolved(appeal_id.to_string()));
        }
        let mut rule = None;
        if decision == AppealDecision::AcceptUnblock && apply_proposal {
            if let Some(p) = &record.resulting_proposal {
                let based_on = match p.kind {
                    ProposalKind::ModifyRule => record.rule_version,
                    ProposalKind::AddAllowRule => None,
                };
                rule = Some(rules.apply_actionable(p, based_on)?);
            }
        }
        let record = self.appeals.get_mut(appeal_id).expect("present");
        record.outcome = Some(match decision {
            AppealDecision::AcceptUnblock => AppealOutcome::Passed,
            AppealDecision::Uphold => AppealOutcome::Upheld,
        });
        Ok(Resolution {
            record: record.clone(),
            rule,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FeedItem, IntensityBand};
    use crate::pipeline::{DecisionRecord, EvidenceRecord, PipelineConfig};

    fn block_dossier(rule: &Rule) -> Dossier {
        Dossier {
            dossier_id: "dos_1".into(),
            item: FeedItem::titled("item_1", "they are at it again"),
            rule_versions: [(rule.id.clone(), rule.version)].into(),
            rules: vec![rule.clone()],
            evidence: EvidenceRecord::Absent { reason: "no image".into() },
            decision: DecisionRecord::NoRules,
            config: PipelineConfig::default(),
            y_block: 1,
            layer: Layer::Cloud,
            triggered_rule_id: Some(rule.id.clone()),
            timestamp_ms: 0,
        }
    }

    fn flamewar_book() -> (RuleBook, Rule) {
        let mut book = RuleBook::new();
        let rule = book
            .add(&RuleDraft::new("Block gender antagonism or flame-war related speech", -0.8, "text").with_id("rule_flamewar"))
            .unwrap();
        (book, rule)
    }

    fn sarcasm_backend() -> ScriptedDispute {
        ScriptedDispute::default().script(
            "rule_flamewar",
            "sarcasm",
            ActionableProposal {
                kind: ProposalKind::ModifyRule,
                target_rule_id: Some("rule_flamewar".into()),
                payload: ProposalPayload::Exemption {
                    exemption: "unless the text exhibits a satirical tone".into(),
                },
                rationale: "The post mocks the antagonism it quotes.".into(),
            },
        )
    }

    #[test]
    fn scripted_intent_produces_pending_proposal() {
        let p = parse_intent("no more appearance anxiety posts", None, &KeywordIntentParser::default()).unwrap();
        assert_eq!(p.nl_description, "Reject appearance anxiety and body involution");
        assert_eq!(p.core_entities, vec!["appearance anxiety"]);
        assert_eq!(p.weight, -0.8);
        assert_eq!(p.modality, Modality::ImageText);
        assert_eq!(p.status, ProposalStatus::Pending);
    }

    #[test]
    fn intent_errors() {
        let parser = KeywordIntentParser {
            table: vec![(
                "x".into(),
                RawProposal {
                    nl_description: "d".into(),
                    core_entities: vec![],
                    weight: -1.4,
                    modality: "text".into(),
                },
            )],
        };
        assert_eq!(
            parse_intent("x", None, &parser),
            Err(AgentError::InvalidProposal(ModelError::WeightOutOfRange(-1.4)))
        );
        assert_eq!(parse_intent("  ", None, &parser), Err(AgentError::EmptyUtterance));
        assert!(matches!(parse_intent("zzz", None, &parser), Err(AgentError::BackendFailure(_))));
    }

    #[test]
    fn confirm_paths() {
        let mut book = RuleBook::new();
        let p = parse_intent("appearance anxiety again", None, &KeywordIntentParser::default()).unwrap();
        let pending = book.draft(p.clone());
        assert!(book.active_rules().is_empty());
        let rule = book.confirm(&pending.proposal_id, None).unwrap();
        assert_eq!(rule.version, 1);
        assert_eq!(book.active_rules().len(), 1);
        assert!(matches!(
            book.confirm(&pending.proposal_id, None),
            Err(AgentError::StaleProposal(_))
        ));

        let second = book.draft(p);
        let edits = ProposalEdits {
            weight: Some(-0.6),
            ..ProposalEdits::default()
        };
        let edited = book.confirm(&second.proposal_id, Some(&edits)).unwrap();
        assert_eq!(edited.band(), IntensityBand::Medium);
        assert_ne!(edited.id, rule.id);

        let third = book.draft(validate_proposal(&RawProposal {
            nl_description: "d".into(),
            core_entities: vec![],
            weight: -0.5,
            modality: "text".into(),
        }, ProposalOrigin::IntentParse).unwrap());
        let bad = ProposalEdits {
            weight: Some(3.0),
            ..ProposalEdits::default()
        };
        assert!(matches!(
            book.confirm(&third.proposal_id, Some(&bad)),
            Err(AgentError::InvalidProposal(_))
        ));
        assert_eq!(book.proposal(&third.proposal_id).unwrap().status, ProposalStatus::Pending);
    }

    #[test]
    fn patches_are_idempotent_and_versioned() {
        let (mut book, rule) = flamewar_book();
        let patch = RulePatch {
            weight: Some(-0.6),
            ..RulePatch::default()
        };
        let v2 = book.update(&rule.id, &patch).unwrap().unwrap();
        assert_eq!((v2.version, v2.parent_version), (2, Some(1)));
        assert_eq!(book.update(&rule.id, &patch).unwrap(), None);
        assert_eq!(book.versions(&rule.id).unwrap().len(), 2);
        book.deactivate(&rule.id).unwrap();
        assert!(book.active_rules().is_empty());
        assert_eq!(book.rules().len(), 1);
    }

    #[test]
    fn dispute_scripts_and_cardinality() {
        let (_, rule) = flamewar_book();
        let dossier = block_dossier(&rule);
        let p = dispute_resolve(&dossier, "this is sarcasm", &sarcasm_backend()).unwrap();
        assert_eq!(p.kind, ProposalKind::ModifyRule);

        struct Two;
        impl DisputeBackend for Two {
            fn resolve(&self, d: &Dossier, m: &str) -> Result<Vec<ActionableProposal>, AgentError> {
                let one = sarcasm_backend().resolve(d, m)?;
                Ok([one.clone(), one].concat())
            }
        }
        assert!(matches!(
            dispute_resolve(&dossier, "this is sarcasm", &Two),
            Err(AgentError::MalformedProposal(_))
        ));
    }

    #[test]
    fn appeal_lifecycle() {
        let (mut book, rule) = flamewar_book();
        let dossier = block_dossier(&rule);
        let mut appeals = AppealBook::default();
        let backend = sarcasm_backend();
        let rec = appeals.file(&dossier, "this is sarcasm", Some(&backend), 10).unwrap();
        assert!(rec.resulting_proposal.is_some());
        assert!(matches!(
            appeals.file(&dossier, "again", None, 11),
            Err(AgentError::AlreadyAppealed(_))
        ));
        let res = appeals
            .resolve(&rec.appeal_id, AppealDecision::AcceptUnblock, true, &mut book)
            .unwrap();
        assert_eq!(res.record.outcome, Some(AppealOutcome::Passed));
        let updated = res.rule.unwrap();
        assert_eq!(updated.version, 2);
        assert_eq!(updated.exemptions, vec!["unless the text exhibits a satirical tone"]);
        assert!(matches!(
            appeals.resolve(&rec.appeal_id, AppealDecision::Uphold, false, &mut book),
            Err(AgentError::AlreadyResolved(_))
        ));
    }

    #[test]
    fn appeal_preconditions() {
        let (_, rule) = flamewar_book();
        let mut pass = block_dossier(&rule);
        pass.y_block = 0;
        assert!(matches!(open_appeal("dos_1", Some(&pass)), Err(AgentError::NotABlock(_))));
        assert!(matches!(open_appeal("nope", None), Err(AgentError::UnknownDossier(_))));
    }

    #[test]
    fn backend_failure_defers() {
        let (_, rule) = flamewar_book();
        let dossier = block_dossier(&rule);
        let mut appeals = AppealBook::default();
        let rec = appeals
            .file(&dossier, "unrelated complaint", Some(&sarcasm_backend()), 0)
            .unwrap();
        assert!(rec.deferred);
        assert_eq!(rec.outcome, None);
    }

    #[test]
    fn allow_rule_proposal_adds_positive_rule() {
        let mut book = RuleBook::new();
        let action = ActionableProposal {
            kind: ProposalKind::AddAllowRule,
            target_rule_id: Some("rule_tech_anxiety".into()),
            payload: ProposalPayload::Rule {
                rule: validate_proposal(
                    &RawProposal {
                        nl_description: "Allow hands-on technical tutorials".into(),
                        core_entities: vec!["tutorial".into()],
                        weight: 0.6,
                        modality: "text".into(),
                    },
                    ProposalOrigin::Dispute,
                )
                .unwrap(),
            },
            rationale: "User still wants tutorials.".into(),
        };
        let rule = book.apply_actionable(&action, None).unwrap();
        assert_eq!(rule.band(), IntensityBand::Allow);
    }
}
