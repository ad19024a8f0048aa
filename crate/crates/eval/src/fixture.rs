//! Deterministic generator for the offline benchmark fixture.
//!
//! Every item carries an image with recorded visual evidence, and the replay
//! judge holds one verdict per call shape. Decisions are assigned so that each
//! ablation lands exactly on its reference counts (see [`crate::published`]).
//! The keyword baseline is not replayed: item texts are written so that the
//! real substring matcher produces its counts.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde_json::json;

use feedwarden_core::eval::{Ablation, ConfusionCounts, EvalReport};
use feedwarden_core::model::{Cognition, EvidenceSource, Label, Semantics};
use feedwarden_core::pipeline::{JudgeVariant, ReplayJudge};
use feedwarden_core::{FeedItem, JudgeVerdict, Persona, Rule, VisualEvidence};
use feedwarden_service::config::{JudgeKind, ServiceConfig};

use crate::published::{self, PERSONA_SIZES};

pub const DATASET_FILE: &str = "dataset.jsonl";
pub const CONFIG_FILE: &str = "config.json";
pub const EVIDENCE_FILE: &str = "evidence.json";
pub const REPLAY_FILE: &str = "replay.json";
pub const RULES_FILE: &str = "rules.json";
pub const GOLDEN_DIR: &str = "golden";

/// Judge call shape each replayed ablation produces.
pub fn variant_of(ablation: Ablation) -> Option<JudgeVariant> {
    match ablation {
        Ablation::Full => Some(JudgeVariant::DecoupledVisual),
        Ablation::RemoveImage => Some(JudgeVariant::DecoupledText),
        Ablation::RemoveMa => Some(JudgeVariant::MonolithicVisual),
        Ablation::TextOnlyBaseline => Some(JudgeVariant::MonolithicText),
        Ablation::KeywordBaseline => None,
    }
}

struct Theme {
    rule_id: &'static str,
    description: &'static str,
    modality: &'static str,
    keyword: &'static str,
    tag: &'static str,
    /// Titles that never contain any rule keyword.
    plain: &'static [&'static str],
    /// Titles built around the keyword; `{k}` is replaced by it.
    loaded: &'static [&'static str],
    subjects: (&'static str, &'static str),
    vibe: (&'static str, &'static str),
}

const THEMES: [Theme; 3] = [
    Theme {
        rule_id: "rule_tutoring",
        description: "Block advertisements for graduate entrance exam tutoring",
        modality: "image_text",
        keyword: "tutoring ad",
        tag: "study",
        plain: &[
            "How I planned my thesis reading list",
            "Library desk setup for the exam season",
            "Notes from a seminar on research methods",
            "What my first semester of grad school looked like",
            "Comparing two statistics textbooks",
        ],
        loaded: &[
            "Honest review of a {k} I kept seeing",
            "Why every {k} promises the same score",
            "Spotted a {k} disguised as a study vlog",
        ],
        subjects: ("a course brochure with a discount code", "a stack of textbooks"),
        vibe: ("promotional", "studious"),
    },
    Theme {
        rule_id: "rule_appearance",
        description: "Block content that fuels appearance anxiety",
        modality: "text",
        keyword: "appearance anxiety",
        tag: "lifestyle",
        plain: &[
            "Morning routine after a long week",
            "Trying a new haircut for summer",
            "A quiet weekend hike with friends",
            "What I eat in a day as a night-shift nurse",
            "Thrifted outfits that actually fit",
        ],
        loaded: &[
            "Talking openly about {k} and therapy",
            "The {k} trap of before and after photos",
            "Ten signs your feed feeds your {k}",
        ],
        subjects: ("a retouched face with measurement lines", "a person smiling outdoors"),
        vibe: ("judgmental", "relaxed"),
    },
    Theme {
        rule_id: "rule_covers",
        description: "Block posts whose cover image hides product marketing",
        modality: "image",
        keyword: "sponsored cover",
        tag: "vlog",
        plain: &[
            "A slow day at home",
            "Packing for a rainy city trip",
            "My balcony garden one year later",
            "Cooking for one on a budget",
            "Cleaning out the closet",
        ],
        loaded: &[
            "Is this a {k} or just a vlog",
            "Guess the {k} in today's photo dump",
            "I stopped making {k} posts, here is why",
        ],
        subjects: ("a product bottle placed in the center of the frame", "a cluttered desk"),
        vibe: ("advertorial", "casual"),
    },
];

fn theme(persona: Persona) -> &'static Theme {
    match persona {
        Persona::A => &THEMES[0],
        Persona::B => &THEMES[1],
        Persona::C => &THEMES[2],
    }
}

pub fn rules() -> Vec<Rule> {
    THEMES
        .iter()
        .map(|t| {
            serde_json::from_value(json!({
                "id": t.rule_id,
                "description": t.description,
                "weight": -0.8,
                "modality": t.modality,
                "core_entities": [t.keyword],
                "version": 1,
            }))
            .expect("fixture rule is well formed")
        })
        .collect()
}

/// `true` at the positions of `k` positives spread evenly over `n` slots.
fn spread(n: u64, k: u64) -> Vec<bool> {
    (0..n).map(|i| (i + 1) * k / n > i * k / n).collect()
}

fn blocked(counts: &ConfusionCounts, truth: Label, rank: u64) -> bool {
    match truth {
        Label::Block => rank < counts.tp,
        Label::Pass => rank < counts.fp,
    }
}

pub struct Fixture {
    pub items: Vec<FeedItem>,
    pub evidence: BTreeMap<String, VisualEvidence>,
    pub replay: ReplayJudge,
    pub rules: Vec<Rule>,
}

pub fn generate() -> Fixture {
    let mut items = Vec::new();
    let mut evidence = BTreeMap::new();
    let mut replay = ReplayJudge::default();
    for (persona, size) in PERSONA_SIZES {
        let t = theme(persona);
        let full = published::persona_counts(Ablation::Full, persona);
        let positives = full.tp + full.fn_;
        let (mut pos_rank, mut neg_rank) = (0u64, 0u64);
        for (i, is_positive) in spread(size, positives).into_iter().enumerate() {
            let truth = if is_positive { Label::Block } else { Label::Pass };
            let rank = if is_positive {
                pos_rank += 1;
                pos_rank - 1
            } else {
                neg_rank += 1;
                neg_rank - 1
            };
            let id = format!("{}_{:04}", format!("{persona:?}").to_lowercase(), i + 1);
            let image_ref = format!("img_{id}");

            let keyword = published::persona_counts(Ablation::KeywordBaseline, persona);
            let title = if blocked(&keyword, truth, rank) {
                t.loaded[i % t.loaded.len()].replace("{k}", t.keyword)
            } else {
                t.plain[i % t.plain.len()].to_string()
            };
            let mut item = FeedItem::titled(&id, &format!("{title} #{}", i + 1)).with_image(&image_ref);
            item.tags = vec![t.tag.to_string()];
            item.persona = Some(persona);
            item.ground_truth = Some(truth);

            let pick = |pair: (&'static str, &'static str)| if is_positive { pair.0 } else { pair.1 };
            evidence.insert(
                image_ref.clone(),
                VisualEvidence {
                    cognition: Cognition {
                        subjects: Some(pick(t.subjects).to_string()),
                        ..Default::default()
                    },
                    semantics: Semantics {
                        vibe: Some(pick(t.vibe).to_string()),
                        category: Some(t.tag.to_string()),
                        ..Default::default()
                    },
                    perception: Default::default(),
                    source: EvidenceSource::Backend,
                },
            );

            for ablation in Ablation::ALL {
                let Some(variant) = variant_of(ablation) else { continue };
                let counts = published::persona_counts(ablation, persona);
                let verdict = if blocked(&counts, truth, rank) {
                    JudgeVerdict::block(t.rule_id, &format!("The {} matches the rule.", pick(("image", "title"))))
                } else {
                    JudgeVerdict::pass()
                };
                replay.record(&id, variant, verdict);
            }
            items.push(item);
        }
    }
    Fixture {
        items,
        evidence,
        replay,
        rules: rules(),
    }
}

/// Config pointing at the fixture files, relative to the config's directory.
pub fn config() -> ServiceConfig {
    let mut config = ServiceConfig::default();
    config.backend.judge = JudgeKind::Replay;
    config.fixtures.evidence = Some(PathBuf::from(EVIDENCE_FILE));
    config.fixtures.replay = Some(PathBuf::from(REPLAY_FILE));
    config.fixtures.rules = Some(PathBuf::from(RULES_FILE));
    config.frozen_clock_ms = Some(0);
    config
}

/// Reference report for an ablation, built from counts alone.
pub fn golden_report(ablation: Ablation) -> EvalReport {
    let personas = PERSONA_SIZES
        .iter()
        .map(|&(p, _)| (p, published::persona_counts(ablation, p)))
        .collect();
    EvalReport::from_counts(ablation, published::overall(ablation), personas)
}

pub fn golden_paths(dir: &Path, ablation: Ablation) -> (PathBuf, PathBuf) {
    let base = dir.join(GOLDEN_DIR);
    (
        base.join(format!("{ablation}.json")),
        base.join(format!("{ablation}.txt")),
    )
}

fn pretty<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("fixture serializes");
    s.push('\n');
    s
}

/// Every file of the fixture as `(relative path, contents)`.
pub fn files() -> Vec<(PathBuf, String)> {
    let fx = generate();
    let mut dataset = String::new();
    for item in &fx.items {
        dataset.push_str(&serde_json::to_string(item).expect("item serializes"));
        dataset.push('\n');
    }
    let mut out = vec![
        (PathBuf::from(DATASET_FILE), dataset),
        (PathBuf::from(CONFIG_FILE), pretty(&config())),
        (PathBuf::from(EVIDENCE_FILE), pretty(&fx.evidence)),
        (PathBuf::from(REPLAY_FILE), pretty(&fx.replay)),
        (PathBuf::from(RULES_FILE), pretty(&fx.rules)),
    ];
    for ablation in Ablation::ALL {
        let report = golden_report(ablation);
        let (json, txt) = golden_paths(Path::new(""), ablation);
        out.push((json, report.to_json()));
        out.push((txt, report.render()));
    }
    out
}

pub fn write(dir: &Path) -> io::Result<()> {
    for (rel, contents) in files() {
        let path = dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, contents)?;
    }
    Ok(())
}
