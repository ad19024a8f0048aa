//! Append-only event log and the aggregations built on top of it.
//!
//! Events are newline-delimited JSON. Appends are written then fsynced; on
//! open, a torn final record is dropped and the file truncated back to the
//! last complete line. A bad record anywhere else is reported as corruption.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::Layer;

pub const DAY_MS: i64 = 86_400_000;
pub const DEFAULT_TAIL_THRESHOLD: u64 = 2;

/// Manual-event action recorded for preference slider changes.
pub const ACTION_SLIDER: &str = "slider";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Exposure,
    OrigBlock,
    AppealPassed,
    ManualFilterAdd,
    ManualEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryEvent {
    pub timestamp: i64,
    pub user_id: String,
    pub kind: EventKind,
    #[serde(default)]
    pub item_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<Layer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<u64>,
    pub day_index: u32,
    /// What a manual event was (slider, rule_edit, ...).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
}

impl TelemetryEvent {
    pub fn new(kind: EventKind, user_id: &str, day_index: u32) -> Self {
        TelemetryEvent {
            timestamp: 0,
            user_id: user_id.to_string(),
            kind,
            item_id: String::new(),
            layer: None,
            rule_id: None,
            latency_ms: None,
            day_index,
            action: None,
        }
    }

    pub fn item(mut self, item_id: &str) -> Self {
        self.item_id = item_id.to_string();
        self
    }

    pub fn layer(mut self, layer: Layer) -> Self {
        self.layer = Some(layer);
        self
    }

    pub fn rule(mut self, rule_id: &str) -> Self {
        self.rule_id = Some(rule_id.to_string());
        self
    }

    pub fn action(mut self, action: &str) -> Self {
        self.action = Some(action.to_string());
        self
    }

    pub fn at(mut self, timestamp: i64) -> Self {
        self.timestamp = timestamp;
        self
    }

    /// Counts toward the manual-effort side of governance.
    pub fn is_manual_effort(&self) -> bool {
        match self.kind {
            EventKind::AppealPassed | EventKind::ManualFilterAdd => true,
            EventKind::ManualEvent => self.action.as_deref() == Some(ACTION_SLIDER),
            _ => false,
        }
    }
}

/// Usage day (1-based) of `now_ms` for a user first seen at `first_ms`.
pub fn day_index(first_ms: i64, now_ms: i64) -> u32 {
    ((now_ms - first_ms).max(0) / DAY_MS) as u32 + 1
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("telemetry log i/o: {0}")]
    Io(#[from] io::Error),
    #[error("telemetry log corrupt at line {line}: {message}")]
    Corrupt { line: usize, message: String },
}

/// Parses NDJSON events. Returns the events and the byte length of the valid
/// prefix; a malformed or unterminated final record is treated as torn.
pub fn parse_ndjson(bytes: &[u8]) -> Result<(Vec<TelemetryEvent>, usize), LogError> {
    let mut events = Vec::new();
    let mut offset = 0;
    let mut line_no = 0;
    while offset < bytes.len() {
        line_no += 1;
        let rest = &bytes[offset..];
        let (line, terminated) = match rest.iter().position(|&b| b == b'\n') {
            Some(end) => (&rest[..end], true),
            None => (rest, false),
        };
        let next = offset + line.len() + usize::from(terminated);
        let is_last = next >= bytes.len();
        if line.iter().all(u8::is_ascii_whitespace) {
            if terminated {
                offset = next;
                continue;
            }
            break;
        }
        match serde_json::from_slice::<TelemetryEvent>(line) {
            Ok(event) if terminated => {
                events.push(event);
                offset = next;
            }
            Ok(_) => break,
            Err(_) if is_last => break,
            Err(e) => {
                return Err(LogError::Corrupt {
                    line: line_no,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok((events, offset))
}

/// Append-only event store, optionally backed by a file.
pub struct EventLog {
    path: Option<PathBuf>,
    file: Mutex<Option<File>>,
    events: RwLock<Vec<TelemetryEvent>>,
}

impl std::fmt::Debug for EventLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EventLog")
            .field("path", &self.path)
            .field("len", &self.len())
            .finish()
    }
}

impl EventLog {
    pub fn in_memory() -> Self {
        EventLog {
            path: None,
            file: Mutex::new(None),
            events: RwLock::new(Vec::new()),
        }
    }

    pub fn from_events(events: Vec<TelemetryEvent>) -> Self {
        let log = EventLog::in_memory();
        *log.events.write() = events;
        log
    }

    /// Opens (or creates) a log file, replaying existing records.
    pub fn open(path: &Path) -> Result<Self, LogError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let bytes = match fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let (events, valid) = parse_ndjson(&bytes)?;
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        if valid < bytes.len() {
            file.set_len(valid as u64)?;
            file.sync_all()?;
        }
        Ok(EventLog {
            path: Some(path.to_path_buf()),
            file: Mutex::new(Some(file)),
            events: RwLock::new(events),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Appends events durably and returns the new length.
    pub fn append(&self, batch: &[TelemetryEvent]) -> Result<usize, LogError> {
        if batch.is_empty() {
            return Ok(self.len());
        }
        let mut guard = self.file.lock();
        if let Some(file) = guard.as_mut() {
            let mut buf = Vec::new();
            for event in batch {
                serde_json::to_writer(&mut buf, event).map_err(io::Error::other)?;
                buf.push(b'\n');
            }
            file.write_all(&buf)?;
            file.sync_data()?;
        }
        let mut events = self.events.write();
        events.extend_from_slice(batch);
        Ok(events.len())
    }

    pub fn len(&self) -> usize {
        self.events.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Copy of the log pinned at the current offset.
    pub fn snapshot(&self) -> Vec<TelemetryEvent> {
        self.events.read().clone()
    }

    /// Rewrites the file from the in-memory events via write-then-rename.
    pub fn compact(&self) -> Result<(), LogError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let mut guard = self.file.lock();
        let tmp = path.with_extension("compact.tmp");
        {
            let mut out = BufWriter::new(File::create(&tmp)?);
            for event in self.events.read().iter() {
                serde_json::to_writer(&mut out, event).map_err(io::Error::other)?;
                out.write_all(b"\n")?;
            }
            out.flush()?;
            out.get_ref().sync_all()?;
        }
        fs::rename(&tmp, path)?;
        *guard = Some(OpenOptions::new().append(true).open(path)?);
        Ok(())
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

// ---------------------------------------------------------------------------
// Layer distribution

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRow {
    pub layer: Layer,
    pub exposures: u64,
    pub orig_blocks: u64,
    pub final_blocks: u64,
    pub appeals: u64,
    pub block_rate: Option<f64>,
    pub appeal_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerTable {
    pub rows: Vec<LayerRow>,
    pub total: LayerRow,
}

fn layer_row(layer: Layer, exposures: u64, orig: u64, appeals: u64) -> LayerRow {
    LayerRow {
        layer,
        exposures,
        orig_blocks: orig,
        final_blocks: orig.saturating_sub(appeals),
        appeals,
        block_rate: ratio(orig, exposures),
        appeal_rate: ratio(appeals, orig),
    }
}

/// One row per layer, always in [`Layer::ALL`] order.
pub fn layer_distribution(events: &[TelemetryEvent]) -> LayerTable {
    let mut counts: BTreeMap<Layer, (u64, u64, u64)> = Layer::ALL.iter().map(|&l| (l, (0, 0, 0))).collect();
    for event in events {
        let layer = event.layer.unwrap_or(Layer::Unknown);
        let entry = counts.entry(layer).or_default();
        match event.kind {
            EventKind::Exposure => entry.0 += 1,
            EventKind::OrigBlock => entry.1 += 1,
            EventKind::AppealPassed => entry.2 += 1,
            _ => {}
        }
    }
    let rows: Vec<LayerRow> = Layer::ALL
        .iter()
        .map(|&l| {
            let (e, o, a) = counts[&l];
            layer_row(l, e, o, a)
        })
        .collect();
    let (e, o, a) = rows.iter().fold((0, 0, 0), |acc, r| {
        (acc.0 + r.exposures, acc.1 + r.orig_blocks, acc.2 + r.appeals)
    });
    let mut total = layer_row(Layer::Unknown, e, o, a);
    total.layer = Layer::Unknown;
    LayerTable { rows, total }
}

// ---------------------------------------------------------------------------
// Rule long tail

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleRow {
    pub rule_id: String,
    pub triggers: u64,
    pub final_blocks: u64,
    pub appeals: u64,
    pub appeal_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongTail {
    pub top: Vec<RuleRow>,
    pub rules: usize,
    pub total_blocks: u64,
    /// Share of all blocks caused by the top rows.
    pub top_share: Option<f64>,
    pub tail_threshold: u64,
    /// Fraction of triggered rules with at most `tail_threshold` blocks.
    pub tail_fraction: Option<f64>,
}

/// Rules ranked by blocks caused, descending; ties by rule id.
pub fn rule_rows(events: &[TelemetryEvent]) -> Vec<RuleRow> {
    let mut counts: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    for event in events {
        let Some(rule) = event.rule_id.as_deref() else {
            continue;
        };
        match event.kind {
            EventKind::OrigBlock => counts.entry(rule).or_default().0 += 1,
            EventKind::AppealPassed => counts.entry(rule).or_default().1 += 1,
            _ => {}
        }
    }
    let mut rows: Vec<RuleRow> = counts
        .into_iter()
        .map(|(id, (t, a))| RuleRow {
            rule_id: id.to_string(),
            triggers: t,
            final_blocks: t.saturating_sub(a),
            appeals: a,
            appeal_rate: ratio(a, t),
        })
        .collect();
    rows.sort_by(|x, y| y.triggers.cmp(&x.triggers).then_with(|| x.rule_id.cmp(&y.rule_id)));
    rows
}

pub fn rule_longtail(events: &[TelemetryEvent], top_n: usize, tail_threshold: u64) -> LongTail {
    let rows = rule_rows(events);
    let total: u64 = rows.iter().map(|r| r.triggers).sum();
    let top: Vec<RuleRow> = rows.iter().take(top_n).cloned().collect();
    let top_blocks: u64 = top.iter().map(|r| r.triggers).sum();
    let triggered: Vec<&RuleRow> = rows.iter().filter(|r| r.triggers > 0).collect();
    let tail = triggered.iter().filter(|r| r.triggers <= tail_threshold).count();
    LongTail {
        top,
        rules: rows.len(),
        total_blocks: total,
        top_share: ratio(top_blocks, total),
        tail_threshold,
        tail_fraction: ratio(tail as u64, triggered.len() as u64),
    }
}

// ---------------------------------------------------------------------------
// Proxy metrics

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DayWindow {
    pub from: Option<u32>,
    pub to: Option<u32>,
}

impl DayWindow {
    pub const ALL: DayWindow = DayWindow { from: None, to: None };

    pub fn days(from: u32, to: u32) -> Self {
        DayWindow {
            from: Some(from),
            to: Some(to),
        }
    }

    pub fn contains(&self, day: u32) -> bool {
        self.from.is_none_or(|f| day >= f) && self.to.is_none_or(|t| day <= t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyMetrics {
    pub exposures: u64,
    pub orig_blocks: u64,
    pub tp: u64,
    pub fp_proxy: u64,
    pub fn_proxy: u64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub fp_rate: Option<f64>,
    /// Manual filter additions per exposure that ended up visible.
    pub fn_rate: Option<f64>,
}

pub fn proxy_metrics(events: &[TelemetryEvent], window: DayWindow) -> ProxyMetrics {
    let (mut exposures, mut orig, mut appeals, mut adds) = (0u64, 0u64, 0u64, 0u64);
    for event in events.iter().filter(|e| window.contains(e.day_index)) {
        match event.kind {
            EventKind::Exposure => exposures += 1,
            EventKind::OrigBlock => orig += 1,
            EventKind::AppealPassed => appeals += 1,
            EventKind::ManualFilterAdd => adds += 1,
            EventKind::ManualEvent => {}
        }
    }
    let tp = orig.saturating_sub(appeals);
    let precision = ratio(tp, tp + appeals);
    let recall = ratio(tp, tp + adds);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    ProxyMetrics {
        exposures,
        orig_blocks: orig,
        tp,
        fp_proxy: appeals,
        fn_proxy: adds,
        precision,
        recall,
        f1,
        fp_rate: ratio(appeals, tp + appeals),
        fn_rate: ratio(adds, exposures.saturating_sub(tp)),
    }
}

// ---------------------------------------------------------------------------
// Governance efficiency

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GovernanceDay {
    pub day: u32,
    pub net_interceptions: u64,
    pub manual_events: u64,
    pub manual_per_final_block: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Governance {
    pub days: Vec<GovernanceDay>,
    /// Relative change in mean daily net interceptions, last 3 days vs first 3.
    pub interception_gain: Option<f64>,
    /// Relative drop in manual events per final block, last 3 days vs first 3.
    pub manual_cost_reduction: Option<f64>,
}

pub const GOVERNANCE_WINDOW: u32 = 3;

pub fn governance_efficiency(events: &[TelemetryEvent], days: u32) -> Governance {
    let mut per_day: BTreeMap<u32, (u64, u64, u64)> = (1..=days).map(|d| (d, (0, 0, 0))).collect();
    for event in events {
        let Some(entry) = per_day.get_mut(&event.day_index) else {
            continue;
        };
        if event.kind == EventKind::OrigBlock {
            entry.0 += 1;
        }
        if event.kind == EventKind::AppealPassed {
            entry.1 += 1;
        }
        if event.is_manual_effort() {
            entry.2 += 1;
        }
    }
    let rows: Vec<GovernanceDay> = per_day
        .into_iter()
        .map(|(day, (orig, appeals, manual))| {
            let net = orig.saturating_sub(appeals);
            GovernanceDay {
                day,
                net_interceptions: net,
                manual_events: manual,
                manual_per_final_block: ratio(manual, net),
            }
        })
        .collect();

    let w = GOVERNANCE_WINDOW as usize;
    let (gain, reduction) = if rows.len() >= 2 * w {
        let sum = |slice: &[GovernanceDay]| {
            slice.iter().fold((0u64, 0u64), |acc, d| {
                (acc.0 + d.net_interceptions, acc.1 + d.manual_events)
            })
        };
        let (net_a, man_a) = sum(&rows[..w]);
        let (net_b, man_b) = sum(&rows[rows.len() - w..]);
        let gain = ratio(net_b, net_a).map(|r| r - 1.0);
        let reduction = match (ratio(man_a, net_a), ratio(man_b, net_b)) {
            (Some(a), Some(b)) if a > 0.0 => Some((a - b) / a),
            _ => None,
        };
        (gain, reduction)
    } else {
        (None, None)
    };
    Governance {
        days: rows,
        interception_gain: gain,
        manual_cost_reduction: reduction,
    }
}

/// Aggregate view served to dashboards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub events: usize,
    pub proxy: ProxyMetrics,
    pub layers: LayerTable,
}

pub fn summary(events: &[TelemetryEvent]) -> Summary {
    Summary {
        events: events.len(),
        proxy: proxy_metrics(events, DayWindow::ALL),
        layers: layer_distribution(events),
    }
}

fn pct(v: Option<f64>) -> String {
    v.map(|v| format!("{:.2}%", v * 100.0)).unwrap_or_else(|| "–".into())
}

pub fn render_layers(table: &LayerTable) -> String {
    let mut out = String::from("layer          exposures  orig_blocks  final_blocks  appeals  block_rate  appeal_rate\n");
    let mut line = |name: &str, r: &LayerRow| {
        out.push_str(&format!(
            "{name:<14} {:>9}  {:>11}  {:>12}  {:>7}  {:>10}  {:>11}\n",
            r.exposures,
            r.orig_blocks,
            r.final_blocks,
            r.appeals,
            pct(r.block_rate),
            pct(r.appeal_rate)
        ));
    };
    for row in &table.rows {
        line(row.layer.as_str(), row);
    }
    line("total", &table.total);
    out
}

pub fn render_longtail(tail: &LongTail) -> String {
    let mut out = String::from("rank  rule_id                 triggers  final_blocks  appeals  appeal_rate\n");
    for (i, r) in tail.top.iter().enumerate() {
        out.push_str(&format!(
            "{:>4}  {:<22}  {:>8}  {:>12}  {:>7}  {:>11}\n",
            i + 1,
            r.rule_id,
            r.triggers,
            r.final_blocks,
            r.appeals,
            pct(r.appeal_rate)
        ));
    }
    out.push_str(&format!(
        "rules={} blocks={} top_share={} tail(<= {})={}\n",
        tail.rules,
        tail.total_blocks,
        pct(tail.top_share),
        tail.tail_threshold,
        pct(tail.tail_fraction)
    ));
    out
}

pub fn render_governance(g: &Governance) -> String {
    let mut out = String::from("day  net_interceptions  manual_events  manual_per_final_block\n");
    for d in &g.days {
        let r = d
            .manual_per_final_block
            .map(|v| format!("{v:.4}"))
            .unwrap_or_else(|| "–".into());
        out.push_str(&format!(
            "{:>3}  {:>17}  {:>13}  {:>22}\n",
            d.day, d.net_interceptions, d.manual_events, r
        ));
    }
    out.push_str(&format!(
        "interception_gain={} manual_cost_reduction={}\n",
        pct(g.interception_gain),
        pct(g.manual_cost_reduction)
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(kind: EventKind, layer: Layer, rule: Option<&str>, day: u32) -> TelemetryEvent {
        let mut e = TelemetryEvent::new(kind, "u", day).layer(layer);
        e.rule_id = rule.map(str::to_string);
        e
    }

    fn layer_log(layer: Layer, exposures: u64, blocks: u64, appeals: u64) -> Vec<TelemetryEvent> {
        let mut out = Vec::new();
        for i in 0..exposures {
            out.push(ev(EventKind::Exposure, layer, None, 1));
            if i < blocks {
                out.push(ev(EventKind::OrigBlock, layer, Some("r"), 1));
            }
            if i < appeals {
                out.push(ev(EventKind::AppealPassed, layer, Some("r"), 1));
            }
        }
        out
    }

    #[test]
    fn layer_rows_follow_definitions() {
        let mut log = layer_log(Layer::Cloud, 100, 8, 2);
        log.extend(layer_log(Layer::Pass, 50, 0, 0));
        let table = layer_distribution(&log);
        let cloud = &table.rows[0];
        assert_eq!((cloud.exposures, cloud.orig_blocks, cloud.final_blocks), (100, 8, 6));
        assert_eq!(cloud.block_rate, Some(0.08));
        assert_eq!(cloud.appeal_rate, Some(0.25));
        let pass = &table.rows[1];
        assert_eq!(pass.block_rate, Some(0.0));
        assert_eq!(pass.appeal_rate, None);
        assert_eq!(table.total.exposures, 150);
        assert!(render_layers(&table).contains("–"));
    }

    #[test]
    fn proxy_examples() {
        let empty = proxy_metrics(&[], DayWindow::ALL);
        assert_eq!((empty.tp, empty.precision, empty.fp_rate), (0, None, None));

        let mut log = Vec::new();
        for _ in 0..10 {
            log.push(ev(EventKind::OrigBlock, Layer::Cloud, Some("r"), 1));
            log.push(ev(EventKind::AppealPassed, Layer::Cloud, Some("r"), 1));
        }
        let m = proxy_metrics(&log, DayWindow::ALL);
        assert_eq!(m.tp, 0);
        assert_eq!(m.precision, Some(0.0));
        assert_eq!(m.f1, None);
    }

    #[test]
    fn proxy_window_filters_days() {
        let log = vec![
            ev(EventKind::OrigBlock, Layer::Cloud, Some("r"), 1),
            ev(EventKind::OrigBlock, Layer::Cloud, Some("r"), 5),
            ev(EventKind::ManualFilterAdd, Layer::Cloud, None, 5),
        ];
        let m = proxy_metrics(&log, DayWindow::days(5, 7));
        assert_eq!((m.tp, m.fn_proxy), (1, 1));
        assert_eq!(m.recall, Some(0.5));
    }

    #[test]
    fn longtail_single_rule_and_ties() {
        let log = vec![
            ev(EventKind::OrigBlock, Layer::Cloud, Some("rule_b"), 1),
            ev(EventKind::OrigBlock, Layer::Cloud, Some("rule_a"), 1),
        ];
        let t = rule_longtail(&log, 15, DEFAULT_TAIL_THRESHOLD);
        assert_eq!(t.top[0].rule_id, "rule_a");
        assert_eq!(t.tail_fraction, Some(1.0));
        let one = rule_longtail(&log[..1], 15, 2);
        assert_eq!(one.top_share, Some(1.0));
    }

    #[test]
    fn governance_examples() {
        let constant: Vec<TelemetryEvent> = (1..=7)
            .flat_map(|d| {
                vec![
                    ev(EventKind::OrigBlock, Layer::Cloud, Some("r"), d),
                    ev(EventKind::OrigBlock, Layer::Cloud, Some("r"), d),
                    ev(EventKind::ManualFilterAdd, Layer::Cloud, None, d),
                ]
            })
            .collect();
        let g = governance_efficiency(&constant, 7);
        assert_eq!(g.interception_gain, Some(0.0));
        assert_eq!(g.manual_cost_reduction, Some(0.0));

        let quiet = vec![ev(EventKind::ManualFilterAdd, Layer::Cloud, None, 2)];
        let g = governance_efficiency(&quiet, 7);
        assert_eq!(g.days[1].manual_per_final_block, None);
    }

    #[test]
    fn only_slider_manual_events_count() {
        let slider = TelemetryEvent::new(EventKind::ManualEvent, "u", 1).action(ACTION_SLIDER);
        let edit = TelemetryEvent::new(EventKind::ManualEvent, "u", 1).action("rule_edit");
        assert!(slider.is_manual_effort());
        assert!(!edit.is_manual_effort());
    }

    #[test]
    fn day_index_alignment() {
        assert_eq!(day_index(1000, 1000), 1);
        assert_eq!(day_index(0, DAY_MS - 1), 1);
        assert_eq!(day_index(0, DAY_MS), 2);
        assert_eq!(day_index(500, 0), 1);
    }

    #[test]
    fn unknown_layer_names_decode() {
        let e: TelemetryEvent = serde_json::from_str(
            r#"{"timestamp":0,"user_id":"u","kind":"exposure","layer":"edge_v0","day_index":1}"#,
        )
        .unwrap();
        assert_eq!(e.layer, Some(Layer::Unknown));
    }

    #[test]
    fn file_log_survives_reopen_and_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.ndjson");
        let log = EventLog::open(&path).unwrap();
        log.append(&[ev(EventKind::Exposure, Layer::Pass, None, 1)]).unwrap();
        log.append(&[ev(EventKind::Exposure, Layer::Cloud, None, 1)]).unwrap();
        drop(log);

        let mut bytes = fs::read(&path).unwrap();
        let good = bytes.len();
        bytes.extend_from_slice(br#"{"timestamp":0,"user_id":"u","ki"#);
        fs::write(&path, &bytes).unwrap();

        let log = EventLog::open(&path).unwrap();
        assert_eq!(log.len(), 2);
        assert_eq!(fs::metadata(&path).unwrap().len() as usize, good);
        log.append(&[ev(EventKind::Exposure, Layer::Pass, None, 2)]).unwrap();
        drop(log);
        assert_eq!(EventLog::open(&path).unwrap().len(), 3);
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.ndjson");
        let good = serde_json::to_string(&ev(EventKind::Exposure, Layer::Pass, None, 1)).unwrap();
        fs::write(&path, format!("{good}\nnot json\n{good}\n")).unwrap();
        match EventLog::open(&path) {
            Err(LogError::Corrupt { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected corruption, got {other:?}"),
        }
    }

    #[test]
    fn compaction_preserves_events() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.ndjson");
        let log = EventLog::open(&path).unwrap();
        log.append(&layer_log(Layer::Cloud, 5, 2, 1)).unwrap();
        log.compact().unwrap();
        log.append(&[ev(EventKind::Exposure, Layer::Pass, None, 1)]).unwrap();
        let before = log.snapshot();
        drop(log);
        assert_eq!(EventLog::open(&path).unwrap().snapshot(), before);
    }
}
