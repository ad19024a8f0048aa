//! Confusion-matrix metrics and the offline evaluation harness.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::ExecMode;
use crate::graph::PageRankVector;
use crate::model::{FeedItem, Label, Persona, Rule};
use crate::pipeline::{
    AdjudicationContext, Adjudicator, DecisionInputs, JudgeStyle, KeywordJudge, Wiring,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dataset malformed at line {line}: {message}")]
    DatasetMalformed { line: usize, message: String },
    #[error("item {id:?} on line {line} has no ground_truth")]
    MissingGroundTruth { line: usize, id: String },
    #[error("baseline has zero false positives")]
    ZeroBaselineFP,
    #[error("unknown ablation {0:?}")]
    UnknownAblation(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub const fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        ConfusionCounts { tp, fp, tn, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn record(&mut self, predicted_block: bool, truth: Label) {
        match (predicted_block, truth) {
            (true, Label::Block) => self.tp += 1,
            (true, Label::Pass) => self.fp += 1,
            (false, Label::Pass) => self.tn += 1,
            (false, Label::Block) => self.fn_ += 1,
        }
    }

    pub fn add(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }
}

impl std::str::FromStr for ConfusionCounts {
    type Err = String;

    /// Parses `tp,fp,tn,fn`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<u64> = s
            .split(',')
            .map(|p| p.trim().parse::<u64>().map_err(|e| format!("{p:?}: {e}")))
            .collect::<Result<_, _>>()?;
        match parts.as_slice() {
            [tp, fp, tn, fn_] => Ok(ConfusionCounts::new(*tp, *fp, *tn, *fn_)),
            _ => Err(format!("expected 4 comma-separated counts, got {}", parts.len())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

/// Rounds to 4 decimal places.
pub fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

/// Unrounded precision, recall and F1; `None` where a denominator is zero.
pub fn derive_metrics_exact(c: &ConfusionCounts) -> Metrics {
    let precision = (c.tp + c.fp > 0).then(|| c.tp as f64 / (c.tp + c.fp) as f64);
    let recall = (c.tp + c.fn_ > 0).then(|| c.tp as f64 / (c.tp + c.fn_) as f64);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    Metrics { precision, recall, f1 }
}

/// Precision, recall and F1 at 4 decimals.
pub fn derive_metrics(c: &ConfusionCounts) -> Metrics {
    let m = derive_metrics_exact(c);
    Metrics {
        precision: m.precision.map(round4),
        recall: m.recall.map(round4),
        f1: m.f1.map(round4),
    }
}

/// Relative false-positive reduction of `treatment` against `baseline`.
pub fn fp_reduction(baseline: &ConfusionCounts, treatment: &ConfusionCounts) -> Result<f64, EvalError> {
    if baseline.fp == 0 {
        return Err(EvalError::ZeroBaselineFP);
    }
    Ok((baseline.fp as f64 - treatment.fp as f64) / baseline.fp as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    Full,
    RemoveImage,
    RemoveMa,
    KeywordBaseline,
    TextOnlyBaseline,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [
        Ablation::KeywordBaseline,
        Ablation::TextOnlyBaseline,
        Ablation::RemoveMa,
        Ablation::RemoveImage,
        Ablation::Full,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::RemoveImage => "remove_image",
            Ablation::RemoveMa => "remove_ma",
            Ablation::KeywordBaseline => "keyword_baseline",
            Ablation::TextOnlyBaseline => "text_only_baseline",
        }
    }

    pub fn wiring(self) -> Wiring {
        let (visual_evidence, style) = match self {
            Ablation::Full => (true, JudgeStyle::Decoupled),
            Ablation::RemoveImage => (false, JudgeStyle::Decoupled),
            Ablation::RemoveMa => (true, JudgeStyle::Monolithic),
            Ablation::KeywordBaseline => (false, JudgeStyle::Decoupled),
            Ablation::TextOnlyBaseline => (false, JudgeStyle::Monolithic),
        };
        Wiring { visual_evidence, style }
    }

    /// Rewires an adjudicator for this ablation.
    pub fn apply(self, adjudicator: &Adjudicator) -> Adjudicator {
        let mut out = adjudicator.clone();
        out.wiring = self.wiring();
        if self == Ablation::KeywordBaseline {
            out.judge = Arc::new(KeywordJudge);
        }
        out
    }
}

impl std::str::FromStr for Ablation {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| EvalError::UnknownAblation(s.to_string()))
    }
}

impl std::fmt::Display for Ablation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredCounts {
    #[serde(flatten)]
    pub counts: ConfusionCounts,
    #[serde(flatten)]
    pub metrics: Metrics,
}

impl From<ConfusionCounts> for ScoredCounts {
    fn from(counts: ConfusionCounts) -> Self {
        ScoredCounts {
            counts,
            metrics: derive_metrics(&counts),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ablation: Ablation,
    pub n: u64,
    pub overall: ScoredCounts,
    pub personas: BTreeMap<Persona, ScoredCounts>,
}

impl EvalReport {
    pub fn from_counts(ablation: Ablation, overall: ConfusionCounts, personas: BTreeMap<Persona, ConfusionCounts>) -> Self {
        EvalReport {
            ablation,
            n: overall.total(),
            overall: overall.into(),
            personas: personas.into_iter().map(|(p, c)| (p, c.into())).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn render(&self) -> String {
        let mut out = format!("ablation: {}  N={}\n", self.ablation, self.n);
        out.push_str(&table_header("group"));
        out.push_str(&table_row("overall", &self.overall));
        for (persona, row) in &self.personas {
            out.push_str(&table_row(&format!("persona {persona:?}"), row));
        }
        out
    }
}

fn fmt_metric(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "null".into())
}

pub fn table_header(first: &str) -> String {
    format!(
        "{first:<22} {:>5} {:>5} {:>5} {:>5} {:>9} {:>9} {:>9}\n",
        "TP", "FP", "TN", "FN", "Precision", "Recall", "F1"
    )
}

pub fn table_row(label: &str, row: &ScoredCounts) -> String {
    let c = &row.counts;
    format!(
        "{label:<22} {:>5} {:>5} {:>5} {:>5} {:>9} {:>9} {:>9}\n",
        c.tp,
        c.fp,
        c.tn,
        c.fn_,
        fmt_metric(row.metrics.precision),
        fmt_metric(row.metrics.recall),
        fmt_metric(row.metrics.f1)
    )
}

/// Reads a JSONL dataset; every item needs a ground truth label.
pub fn load_dataset(path: &Path) -> Result<Vec<FeedItem>, EvalError> {
    parse_dataset(&fs::read_to_string(path)?)
}

pub fn parse_dataset(text: &str) -> Result<Vec<FeedItem>, EvalError> {
    let mut items = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let item: FeedItem = serde_json::from_str(line).map_err(|e| EvalError::DatasetMalformed {
            line: line_no,
            message: e.to_string(),
        })?;
        if item.ground_truth.is_none() {
            return Err(EvalError::MissingGroundTruth {
                line: line_no,
                id: item.id,
            });
        }
        items.push(item);
    }
    Ok(items)
}

/// Adjudicates every item under the ablation wiring and scores the result.
pub fn run_offline_eval(
    items: &[FeedItem],
    rules: &[Rule],
    ranking: Option<&PageRankVector>,
    adjudicator: &Adjudicator,
    ablation: Ablation,
    mode: ExecMode,
) -> EvalReport {
    let wired = ablation.apply(adjudicator);
    let inputs = DecisionInputs {
        rules,
        ranking,
        profile: None,
    };
    let ctx = AdjudicationContext {
        user_id: "offline-eval".into(),
        day_index: 1,
    };
    let outcomes = wired.adjudicate_batch(items, inputs, &ctx, mode);
    let mut overall = ConfusionCounts::default();
    let mut personas: BTreeMap<Persona, ConfusionCounts> = BTreeMap::new();
    for (item, outcome) in items.iter().zip(&outcomes) {
        let Some(truth) = item.ground_truth else { continue };
        let blocked = outcome.adjudication.blocked();
        overall.record(blocked, truth);
        if let Some(p) = item.persona {
            personas.entry(p).or_default().record(blocked, truth);
        }
    }
    EvalReport::from_counts(ablation, overall, personas)
}
