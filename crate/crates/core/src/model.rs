//! Shared domain vocabulary: rules, feed items, visual evidence, verdicts.
//!
//! Everything here is a plain value type. Validation lives next to the type
//! it guards so that every layer above can assume well-formed inputs.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::fnv1a64;

/// Maximum number of words a judge reason may carry.
pub const MAX_REASON_WORDS: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("rule weight {0} is outside [-1, 1]")]
    WeightOutOfRange(f64),
    #[error("rule weight must be nonzero")]
    ZeroWeight,
    #[error("unknown modality {0:?}; expected text, image or image_text")]
    UnknownModality(String),
    #[error("rule description is empty")]
    EmptyDescription,
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error("feed item {0:?} has no title, snippet or image")]
    EmptyItem(String),
    #[error("invalid verdict: {0}")]
    InvalidVerdict(String),
    #[error("invalid version history: {0}")]
    InvalidVersion(String),
}

/// Which parts of an item a rule applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Text,
    Image,
    ImageText,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Text => "text",
            Modality::Image => "image",
            Modality::ImageText => "image_text",
        }
    }

    /// True when the rule can be matched against image content.
    pub fn covers_image(self) -> bool {
        matches!(self, Modality::Image | Modality::ImageText)
    }
}

impl std::str::FromStr for Modality {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "text" => Ok(Modality::Text),
            "image" => Ok(Modality::Image),
            "image_text" => Ok(Modality::ImageText),
            other => Err(ModelError::UnknownModality(other.to_string())),
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Filtering strength derived from a rule weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IntensityBand {
    Mild,
    Medium,
    Strong,
    Allow,
}

impl IntensityBand {
    /// Strength ordering that ignores the sign of the weight.
    pub fn strength(weight: f64) -> Result<IntensityBand, ModelError> {
        check_weight(weight)?;
        let magnitude = weight.abs();
        Ok(if magnitude >= 0.7 {
            IntensityBand::Strong
        } else if magnitude >= 0.5 {
            IntensityBand::Medium
        } else {
            IntensityBand::Mild
        })
    }

    pub fn label(self) -> &'static str {
        match self {
            IntensityBand::Strong => "Strong_Filter",
            IntensityBand::Medium => "Medium_Filter",
            IntensityBand::Mild => "Mild_Filter",
            IntensityBand::Allow => "Allow",
        }
    }
}

/// Maps a rule weight onto its intensity band.
///
/// Negative weights land in Strong (|w| >= 0.7), Medium (0.5 <= |w| < 0.7) or
/// Mild (|w| < 0.5). Positive weights are allowance rules and map to `Allow`;
/// use [`IntensityBand::strength`] for their magnitude ordering.
pub fn intensity_band(weight: f64) -> Result<IntensityBand, ModelError> {
    let strength = IntensityBand::strength(weight)?;
    Ok(if weight > 0.0 { IntensityBand::Allow } else { strength })
}

fn check_weight(weight: f64) -> Result<(), ModelError> {
    if !weight.is_finite() || !(-1.0..=1.0).contains(&weight) {
        return Err(ModelError::WeightOutOfRange(weight));
    }
    if weight == 0.0 {
        return Err(ModelError::ZeroWeight);
    }
    Ok(())
}

/// Derives a `rule_xxxxxxxx` identifier from a description and a salt.
pub fn derive_rule_id(description: &str, salt: u64) -> String {
    let mut bytes = description.as_bytes().to_vec();
    bytes.extend_from_slice(&salt.to_le_bytes());
    format!("rule_{:08x}", (fnv1a64(&bytes) & 0xffff_ffff) as u32)
}

/// A natural-language filtering (w < 0) or allowance (w > 0) constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub id: String,
    pub description: String,
    pub weight: f64,
    pub modality: Modality,
    #[serde(default)]
    pub core_entities: Vec<String>,
    #[serde(default = "default_true")]
    pub active: bool,
    pub version: u32,
    #[serde(default)]
    pub parent_version: Option<u32>,
    #[serde(default)]
    pub exemptions: Vec<String>,
}

fn default_true() -> bool {
    true
}

impl Rule {
    pub fn is_filter(&self) -> bool {
        self.weight < 0.0
    }

    pub fn band(&self) -> IntensityBand {
        // weight is validated on construction
        intensity_band(self.weight).unwrap_or(IntensityBand::Mild)
    }

    /// Produces the next version of this rule with `edit` applied.
    pub fn next_version(&self, edit: impl FnOnce(&mut Rule)) -> Result<Rule, ModelError> {
        let mut next = self.clone();
        edit(&mut next);
        next.id = self.id.clone();
        next.parent_version = Some(self.version);
        next.version = self.version + 1;
        next.check()?;
        Ok(next)
    }

    /// Re-checks every invariant of an already constructed rule.
    pub fn check(&self) -> Result<(), ModelError> {
        if self.description.trim().is_empty() {
            return Err(ModelError::EmptyDescription);
        }
        check_weight(self.weight)?;
        if self.version == 0 {
            return Err(ModelError::InvalidVersion("version starts at 1".into()));
        }
        if let Some(parent) = self.parent_version {
            if parent >= self.version {
                return Err(ModelError::InvalidVersion(format!(
                    "parent_version {parent} >= version {}",
                    self.version
                )));
            }
        }
        Ok(())
    }
}

/// Unvalidated rule record as it arrives from a client or an agent backend.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RuleDraft {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default)]
    pub weight: Option<f64>,
    #[serde(default)]
    pub modality: Option<String>,
    #[serde(default)]
    pub core_entities: Vec<String>,
    #[serde(default)]
    pub active: Option<bool>,
    #[serde(default)]
    pub exemptions: Vec<String>,
}

impl RuleDraft {
    pub fn new(description: &str, weight: f64, modality: &str) -> Self {
        RuleDraft {
            description: Some(description.to_string()),
            weight: Some(weight),
            modality: Some(modality.to_string()),
            ..RuleDraft::default()
        }
    }

    pub fn with_id(mut self, id: &str) -> Self {
        self.id = Some(id.to_string());
        self
    }

    pub fn with_entities(mut self, entities: &[&str]) -> Self {
        self.core_entities = entities.iter().map(|e| e.to_string()).collect();
        self
    }
}

/// Validates a raw record into a version-1 [`Rule`].
pub fn validate_rule(draft: &RuleDraft) -> Result<Rule, ModelError> {
    let description = draft
        .description
        .as_deref()
        .map(str::trim)
        .unwrap_or_default();
    if description.is_empty() {
        return Err(ModelError::EmptyDescription);
    }
    let weight = draft.weight.ok_or(ModelError::MissingField("weight"))?;
    check_weight(weight)?;
    let modality: Modality = draft
        .modality
        .as_deref()
        .ok_or(ModelError::MissingField("modality"))?
        .parse()?;
    let id = match draft.id.as_deref().map(str::trim) {
        Some(id) if !id.is_empty() => id.to_string(),
        _ => derive_rule_id(description, 0),
    };
    Ok(Rule {
        id,
        description: description.to_string(),
        weight,
        modality,
        core_entities: trimmed(&draft.core_entities),
        active: draft.active.unwrap_or(true),
        version: 1,
        parent_version: None,
        exemptions: trimmed(&draft.exemptions),
    })
}

fn trimmed(values: &[String]) -> Vec<String> {
    values
        .iter()
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Persona {
    A,
    B,
    C,
}

impl Persona {
    pub const ALL: [Persona; 3] = [Persona::A, Persona::B, Persona::C];

    pub fn title(self) -> &'static str {
        match self {
            Persona::A => "Persona A: Conceptual Confusion",
            Persona::B => "Persona B: Emotional Nuance",
            Persona::C => "Persona C: Image-Text Mismatch",
        }
    }
}

/// Ground-truth annotation, encoded as `0` (pass) or `1` (block).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Label {
    Pass,
    Block,
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        match value {
            0 => Ok(Label::Pass),
            1 => Ok(Label::Block),
            other => Err(format!("ground_truth must be 0 or 1, got {other}")),
        }
    }
}

impl From<Label> for u8 {
    fn from(label: Label) -> u8 {
        match label {
            Label::Pass => 0,
            Label::Block => 1,
        }
    }
}

/// One recommended item as seen in a feed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedItem {
    pub id: String,
    #[serde(default)]
    pub title: Option<String>,
    #[serde(default)]
    pub snippet: Option<String>,
    /// Set when the snippet is a platform preview cut short.
    #[serde(default)]
    pub snippet_truncated: bool,
    #[serde(default)]
    pub image_ref: Option<String>,
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub persona: Option<Persona>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<Label>,
}

impl FeedItem {
    pub fn titled(id: &str, title: &str) -> Self {
        FeedItem {
            id: id.to_string(),
            title: Some(title.to_string()),
            snippet: None,
            snippet_truncated: false,
            image_ref: None,
            tags: Vec::new(),
            persona: None,
            ground_truth: None,
        }
    }

    pub fn with_image(mut self, image_ref: &str) -> Self {
        self.image_ref = Some(image_ref.to_string());
        self
    }

    pub fn with_snippet(mut self, snippet: &str) -> Self {
        self.snippet = Some(snippet.to_string());
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let present = |s: &Option<String>| s.as_deref().is_some_and(|s| !s.trim().is_empty());
        if present(&self.title) || present(&self.snippet) || present(&self.image_ref) {
            Ok(())
        } else {
            Err(ModelError::EmptyItem(self.id.clone()))
        }
    }

    /// Title and snippet joined by a single space.
    pub fn text(&self) -> String {
        match (self.title.as_deref(), self.snippet.as_deref()) {
            (Some(t), Some(s)) => format!("{t} {s}"),
            (Some(t), None) => t.to_string(),
            (None, Some(s)) => s.to_string(),
            (None, None) => String::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceSource {
    #[default]
    Backend,
    Cache,
    Absent,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Perception {
    pub image_quality: Option<String>,
    pub brightness: Option<String>,
    pub color_temperature: Option<String>,
    pub composition: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Cognition {
    pub subjects: Option<String>,
    pub demographics: Option<String>,
    pub appearance: Option<String>,
    pub object_details: Option<String>,
    pub actions: Option<String>,
    pub ocr: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Semantics {
    pub scene: Option<String>,
    pub style: Option<String>,
    pub vibe: Option<String>,
    pub category: Option<String>,
}

/// Three-layer structured description of an image. Unknown fields stay
/// `None`; nothing is filled in by default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualEvidence {
    #[serde(default)]
    pub perception: Perception,
    #[serde(default)]
    pub cognition: Cognition,
    #[serde(default)]
    pub semantics: Semantics,
    #[serde(default)]
    pub source: EvidenceSource,
}

impl VisualEvidence {
    pub fn absent() -> Self {
        VisualEvidence {
            perception: Perception::default(),
            cognition: Cognition::default(),
            semantics: Semantics::default(),
            source: EvidenceSource::Absent,
        }
    }

    /// Populated fields as `(name, value)` pairs in schema order.
    pub fn facts(&self) -> Vec<(&'static str, &str)> {
        let p = &self.perception;
        let c = &self.cognition;
        let s = &self.semantics;
        [
            ("image_quality", &p.image_quality),
            ("brightness", &p.brightness),
            ("color_temperature", &p.color_temperature),
            ("composition", &p.composition),
            ("subjects", &c.subjects),
            ("demographics", &c.demographics),
            ("appearance", &c.appearance),
            ("object_details", &c.object_details),
            ("actions", &c.actions),
            ("ocr", &c.ocr),
            ("scene", &s.scene),
            ("style", &s.style),
            ("vibe", &s.vibe),
            ("category", &s.category),
        ]
        .into_iter()
        .filter_map(|(name, value)| value.as_deref().map(|v| (name, v)))
        .collect()
    }

    /// Flattened `name: value` lines, used when evidence is inlined into a
    /// single prompt.
    pub fn flatten(&self) -> String {
        self.facts()
            .into_iter()
            .map(|(name, value)| format!("{name}: {value}"))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub filter_decision: bool,
    pub triggered_rule_id: Option<String>,
    pub reason: String,
}

impl JudgeVerdict {
    pub fn pass() -> Self {
        JudgeVerdict {
            filter_decision: false,
            triggered_rule_id: None,
            reason: String::new(),
        }
    }

    pub fn block(rule_id: &str, reason: &str) -> Self {
        JudgeVerdict {
            filter_decision: true,
            triggered_rule_id: Some(rule_id.to_string()),
            reason: reason.to_string(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match (self.filter_decision, &self.triggered_rule_id) {
            (true, None) => {
                return Err(ModelError::InvalidVerdict(
                    "blocking verdict without triggered_rule_id".into(),
                ))
            }
            (false, Some(id)) => {
                return Err(ModelError::InvalidVerdict(format!(
                    "passing verdict cites rule {id}"
                )))
            }
            _ => {}
        }
        if self.filter_decision && self.reason.trim().is_empty() {
            return Err(ModelError::InvalidVerdict("blocking verdict without reason".into()));
        }
        let words = self.reason.split_whitespace().count();
        if words > MAX_REASON_WORDS {
            return Err(ModelError::InvalidVerdict(format!(
                "reason has {words} words, limit is {MAX_REASON_WORDS}"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_anchor_rule() {
        let draft = RuleDraft::new(
            "Block anime image-text content with obvious sexually suggestive tendencies",
            -0.8,
            "image_text",
        );
        let rule = validate_rule(&draft).unwrap();
        assert_eq!(rule.version, 1);
        assert_eq!(rule.modality, Modality::ImageText);
        assert_eq!(rule.band(), IntensityBand::Strong);
        assert!(rule.id.starts_with("rule_") && rule.id.len() == 13);
    }

    #[test]
    fn rejects_bad_records() {
        assert_eq!(
            validate_rule(&RuleDraft::new("x", 1.5, "text")),
            Err(ModelError::WeightOutOfRange(1.5))
        );
        assert_eq!(
            validate_rule(&RuleDraft::new("x", -0.4, "audio")),
            Err(ModelError::UnknownModality("audio".into()))
        );
        assert_eq!(
            validate_rule(&RuleDraft::new("  ", -0.4, "text")),
            Err(ModelError::EmptyDescription)
        );
        assert_eq!(
            validate_rule(&RuleDraft::new("x", 0.0, "text")),
            Err(ModelError::ZeroWeight)
        );
        assert!(matches!(
            validate_rule(&RuleDraft::new("x", f64::NAN, "text")),
            Err(ModelError::WeightOutOfRange(_))
        ));
    }

    #[test]
    fn bands_at_anchor_points() {
        // anchor table: weight -> expected band
        let anchors = [
            (-1.0, IntensityBand::Strong),
            (-0.8, IntensityBand::Strong),
            (-0.6, IntensityBand::Medium),
            (-0.4, IntensityBand::Mild),
            (-0.2, IntensityBand::Mild),
        ];
        for (weight, band) in anchors {
            assert_eq!(intensity_band(weight).unwrap(), band, "weight {weight}");
        }
        assert_eq!(intensity_band(-0.65).unwrap(), IntensityBand::Medium);
        assert_eq!(intensity_band(-0.7).unwrap(), IntensityBand::Strong);
        assert_eq!(intensity_band(-0.5).unwrap(), IntensityBand::Medium);
        assert_eq!(intensity_band(0.6).unwrap(), IntensityBand::Allow);
        assert_eq!(IntensityBand::strength(0.6).unwrap(), IntensityBand::Medium);
        assert_eq!(intensity_band(0.0), Err(ModelError::ZeroWeight));
    }

    #[test]
    fn verdict_invariants() {
        assert!(JudgeVerdict::pass().validate().is_ok());
        assert!(JudgeVerdict::block("rule_1", "title mentions X").validate().is_ok());
        let no_id = JudgeVerdict {
            filter_decision: true,
            triggered_rule_id: None,
            reason: "r".into(),
        };
        assert!(no_id.validate().is_err());
        assert!(JudgeVerdict::block("rule_1", " ").validate().is_err());
        let long = JudgeVerdict::block("rule_1", &"word ".repeat(101));
        assert!(long.validate().is_err());
    }

    #[test]
    fn item_needs_some_content() {
        let mut item = FeedItem::titled("i1", "");
        assert!(item.validate().is_err());
        item.image_ref = Some("img".into());
        assert!(item.validate().is_ok());
    }

    #[test]
    fn label_is_encoded_as_integer() {
        let mut item = FeedItem::titled("i1", "t");
        item.ground_truth = Some(Label::Block);
        item.persona = Some(Persona::C);
        let json = serde_json::to_string(&item).unwrap();
        assert!(json.contains(r#""ground_truth":1"#));
        assert!(json.contains(r#""persona":"C""#));
        assert!(serde_json::from_str::<FeedItem>(&json.replace(":1", ":2")).is_err());
    }

    #[test]
    fn next_version_links_parent() {
        let rule = validate_rule(&RuleDraft::new("x", -0.5, "text")).unwrap();
        let v2 = rule.next_version(|r| r.weight = -0.9).unwrap();
        assert_eq!((v2.version, v2.parent_version), (2, Some(1)));
        assert!(rule.next_version(|r| r.weight = 2.0).is_err());
    }
}
