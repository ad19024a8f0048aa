//! Reference confusion counts for the offline benchmark.
//!
//! `OVERALL` and the baseline/full rows of `PERSONAS` are the published
//! counts. The per-persona rows for the two ablations were never published;
//! they are a split chosen to sum to the overall ablation rows while keeping
//! every persona's positive/negative totals fixed.

use feedwarden_core::eval::{Ablation, ConfusionCounts};
use feedwarden_core::Persona;

pub const N: u64 = 473;

/// Items per persona.
pub const PERSONA_SIZES: [(Persona, u64); 3] = [(Persona::A, 266), (Persona::B, 169), (Persona::C, 38)];

const fn c(tp: u64, fp: u64, tn: u64, fn_: u64) -> ConfusionCounts {
    ConfusionCounts::new(tp, fp, tn, fn_)
}

pub struct Row {
    pub label: &'static str,
    pub ablation: Ablation,
    pub counts: ConfusionCounts,
}

pub const OVERALL: [Row; 5] = [
    Row { label: "keyword baseline", ablation: Ablation::KeywordBaseline, counts: c(19, 63, 318, 73) },
    Row { label: "text-only baseline", ablation: Ablation::TextOnlyBaseline, counts: c(68, 202, 179, 24) },
    Row { label: "remove multi-agent", ablation: Ablation::RemoveMa, counts: c(80, 324, 57, 12) },
    Row { label: "remove image", ablation: Ablation::RemoveImage, counts: c(13, 6, 375, 79) },
    Row { label: "full pipeline", ablation: Ablation::Full, counts: c(80, 52, 329, 12) },
];

/// Whether the per-persona split of an ablation is a published figure.
pub fn persona_split_published(ablation: Ablation) -> bool {
    !matches!(ablation, Ablation::RemoveMa | Ablation::RemoveImage)
}

pub fn persona_counts(ablation: Ablation, persona: Persona) -> ConfusionCounts {
    use Ablation::*;
    use Persona::*;
    match (ablation, persona) {
        (KeywordBaseline, A) => c(6, 26, 201, 33),
        (KeywordBaseline, B) => c(9, 31, 100, 29),
        (KeywordBaseline, C) => c(4, 6, 17, 11),
        (TextOnlyBaseline, A) => c(32, 109, 118, 7),
        (TextOnlyBaseline, B) => c(25, 81, 50, 13),
        (TextOnlyBaseline, C) => c(11, 12, 11, 4),
        (Full, A) => c(34, 29, 198, 5),
        (Full, B) => c(33, 16, 115, 5),
        (Full, C) => c(13, 7, 16, 2),
        (RemoveMa, A) => c(34, 197, 30, 5),
        (RemoveMa, B) => c(33, 111, 20, 5),
        (RemoveMa, C) => c(13, 16, 7, 2),
        (RemoveImage, A) => c(7, 3, 224, 32),
        (RemoveImage, B) => c(6, 2, 129, 32),
        (RemoveImage, C) => c(0, 1, 22, 15),
    }
}

pub fn overall(ablation: Ablation) -> ConfusionCounts {
    OVERALL
        .iter()
        .find(|r| r.ablation == ablation)
        .map(|r| r.counts)
        .expect("every ablation has a row")
}
