//! Synthetic telemetry logs shaped like the field-study tables.
//!
//! The study log reproduces the per-layer counts, the 15 most-triggered
//! rules and the 10 most-appealed rules, plus the long-tail statistics
//! (rule count, once/twice triggered shares, top-20 share). Appeals not
//! attributed to any listed rule carry no rule id; with every appeal on a
//! rule the appeal-rate ranking could not hold at these totals.

use feedwarden_core::pipeline::Layer;
use feedwarden_core::telemetry::{EventKind, TelemetryEvent, ACTION_SLIDER};

pub const STUDY_DAYS: u32 = 7;

/// `(layer, exposures, orig_blocks, appeals)`.
pub const LAYER_COUNTS: [(Layer, u64, u64, u64); 4] = [
    (Layer::Cloud, 61_136, 4_891, 168),
    (Layer::Pass, 5_234, 0, 0),
    (Layer::ClipFallback, 212, 212, 13),
    (Layer::Unknown, 21, 0, 0),
];

/// `(rule, orig_blocks, appeals)` for the most-triggered rules.
pub const TOP_RULES: [(&str, u64, u64); 15] = [
    ("rule_9e166a88", 178, 0),
    ("rule_25cee3e0", 171, 1),
    ("rule_c9647f0b", 166, 2),
    ("rule_3632c6a2", 122, 1),
    ("rule_8d30905d", 110, 0),
    ("rule_89ce876f", 99, 0),
    ("rule_f18a7b51", 96, 0),
    ("rule_55", 69, 0),
    ("rule_d0883794", 67, 4),
    ("rule_c7d0b6c6", 60, 1),
    ("rule_8c9639c6", 56, 0),
    ("rule_04087b2e", 53, 0),
    ("rule_331e2d67", 51, 0),
    ("rule_bf7f6818", 51, 0),
    ("rule_660c8013", 48, 0),
];

/// Most-appealed rules outside the top-triggered list.
pub const APPEALED_RULES: [(&str, u64, u64); 9] = [
    ("rule_e24f4ca1", 42, 18),
    ("rule_eda31a0b", 29, 6),
    ("rule_130", 21, 2),
    ("rule_70", 22, 2),
    ("rule_b1ef5cc9", 23, 2),
    ("rule_de6e1172", 23, 1),
    ("rule_c1a3cef8", 23, 1),
    ("rule_6f34df37", 26, 1),
    ("rule_7f6438db", 28, 1),
];

pub const DISTINCT_RULES: usize = 746;
pub const RULES_TRIGGERED_ONCE: usize = 280;
pub const RULES_TRIGGERED_TWICE: usize = 121;
/// Rules ranked 16 to 20, sized so the top 20 hold 31.6% of blocks.
const NEXT_FIVE: [u64; 5] = [44, 43, 43, 43, 43];

/// `(rule, orig_blocks, appeals)` for all 746 rules.
pub fn rule_blocks() -> Vec<(String, u64, u64)> {
    let total: u64 = LAYER_COUNTS.iter().map(|l| l.2).sum();
    let mut rules: Vec<(String, u64, u64)> = TOP_RULES
        .iter()
        .chain(APPEALED_RULES.iter())
        .map(|&(r, b, a)| (r.to_string(), b, a))
        .collect();
    for (i, b) in NEXT_FIVE.iter().enumerate() {
        rules.push((format!("rule_mid_{i:02}"), *b, 0));
    }
    for i in 0..RULES_TRIGGERED_ONCE {
        rules.push((format!("rule_once_{i:03}"), 1, 0));
    }
    for i in 0..RULES_TRIGGERED_TWICE {
        rules.push((format!("rule_twice_{i:03}"), 2, 0));
    }
    // the rest share the remaining blocks as evenly as possible
    let used: u64 = rules.iter().map(|r| r.1).sum();
    let rest = DISTINCT_RULES - rules.len();
    let remaining = total - used;
    for i in 0..rest {
        let share = remaining / rest as u64 + u64::from((i as u64) < remaining % rest as u64);
        rules.push((format!("rule_tail_{i:03}"), share, 0));
    }
    rules
}

fn event(kind: EventKind, layer: Layer, day: u32, seq: usize) -> TelemetryEvent {
    TelemetryEvent::new(kind, &format!("p{:02}", seq % 19 + 1), day)
        .layer(layer)
        .item(&format!("item_{seq:06}"))
}

/// Field-study log: per-layer exposures, blocks and appeals with rule
/// attribution, spread round-robin over the study days.
pub fn study_log() -> Vec<TelemetryEvent> {
    // one entry per original block: (rule, layer), fallback blocks spaced out
    let rules = rule_blocks();
    let mut blocks: Vec<(usize, Layer)> = Vec::new();
    for (r, (_, n, _)) in rules.iter().enumerate() {
        for _ in 0..*n {
            blocks.push((r, Layer::Cloud));
        }
    }
    let fallback = LAYER_COUNTS[2].2 as usize;
    let stride = blocks.len() / fallback;
    for k in 0..fallback {
        blocks[k * stride + stride / 2].1 = Layer::ClipFallback;
    }

    // attributed appeals land on each rule's earliest blocks
    let mut appealed = vec![false; blocks.len()];
    let mut first_of_rule = vec![usize::MAX; rules.len()];
    for (i, (r, _)) in blocks.iter().enumerate() {
        first_of_rule[*r] = first_of_rule[*r].min(i);
    }
    for (r, (_, _, a)) in rules.iter().enumerate() {
        for k in 0..*a as usize {
            appealed[first_of_rule[r] + k] = true;
        }
    }
    let attributed = |layer: Layer| {
        blocks
            .iter()
            .zip(&appealed)
            .filter(|((_, l), a)| **a && *l == layer)
            .count() as u64
    };
    let mut unattributed = [
        (Layer::Cloud, LAYER_COUNTS[0].3 - attributed(Layer::Cloud)),
        (Layer::ClipFallback, LAYER_COUNTS[2].3 - attributed(Layer::ClipFallback)),
    ];

    let mut log = Vec::new();
    let mut seq = 0usize;
    let day = |seq: usize| (seq % STUDY_DAYS as usize) as u32 + 1;
    for (i, &(r, layer)) in blocks.iter().enumerate() {
        let d = day(seq);
        let rule = &rules[r].0;
        log.push(event(EventKind::Exposure, layer, d, seq));
        log.push(event(EventKind::OrigBlock, layer, d, seq).rule(rule));
        if appealed[i] {
            log.push(event(EventKind::AppealPassed, layer, d, seq).rule(rule));
        } else if let Some(slot) = unattributed.iter_mut().find(|(l, n)| *l == layer && *n > 0) {
            slot.1 -= 1;
            log.push(event(EventKind::AppealPassed, layer, d, seq));
        }
        seq += 1;
    }
    for (layer, exposures, orig, _) in LAYER_COUNTS {
        for _ in 0..exposures - orig {
            log.push(event(EventKind::Exposure, layer, day(seq), seq));
            seq += 1;
        }
    }
    log
}

/// Governance log: manual events per final block of 0.59 over days 1-3 and
/// 0.36 over days 5-7, with net interceptions rising from 300 to 700.
pub fn governance_log() -> Vec<TelemetryEvent> {
    // (day, orig_blocks, appeals, filter_adds, slider_changes)
    let days: [(u32, u64, u64, u64, u64); 7] = [
        (1, 104, 4, 30, 25),
        (2, 104, 4, 30, 25),
        (3, 103, 3, 30, 26),
        (4, 160, 4, 40, 30),
        (5, 237, 4, 40, 40),
        (6, 237, 4, 40, 40),
        (7, 236, 2, 40, 42),
    ];
    let mut log = Vec::new();
    for (day, orig, appeals, adds, sliders) in days {
        let user = "p01";
        for i in 0..orig {
            log.push(TelemetryEvent::new(EventKind::OrigBlock, user, day).layer(Layer::Cloud).rule("rule_g").item(&format!("g{day}_{i}")));
        }
        for i in 0..appeals {
            log.push(TelemetryEvent::new(EventKind::AppealPassed, user, day).layer(Layer::Cloud).rule("rule_g").item(&format!("g{day}_{i}")));
        }
        for _ in 0..adds {
            log.push(TelemetryEvent::new(EventKind::ManualFilterAdd, user, day));
        }
        for _ in 0..sliders {
            log.push(TelemetryEvent::new(EventKind::ManualEvent, user, day).action(ACTION_SLIDER));
        }
        // non-slider manual events are recorded but do not count as effort
        log.push(TelemetryEvent::new(EventKind::ManualEvent, user, day).action("rule_update"));
    }
    log
}
