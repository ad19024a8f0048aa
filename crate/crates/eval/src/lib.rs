//! Offline evaluation harness: benchmark fixture, synthetic telemetry and
//! the plumbing behind the `eval` CLI.

pub mod fixture;
pub mod published;
pub mod synth;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use feedwarden_core::eval::{load_dataset, run_offline_eval, Ablation, EvalError, EvalReport};
use feedwarden_core::graph::{GraphError, PageRankOptions, RuleGraph};
use feedwarden_core::pipeline::MemoryCache;
use feedwarden_core::telemetry::{
    governance_efficiency, layer_distribution, parse_ndjson, render_governance, render_layers, render_longtail,
    rule_longtail, LogError,
};
use feedwarden_core::{ExecMode, ManualClock, Rule};
use feedwarden_service::backends;
use feedwarden_service::config::load_config;
use feedwarden_service::StartupError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Startup(#[from] StartupError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("rule graph: {0}")]
    Graph(#[from] GraphError),
    #[error("config has no fixtures.rules file")]
    NoRules,
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
}

fn file_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::File {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Adjudicates the dataset under `ablation` with the configured stubs.
pub fn run(dataset: &Path, config: &Path, ablation: Ablation, mode: ExecMode) -> Result<EvalReport, HarnessError> {
    let config = load_config(config).map_err(StartupError::from)?;
    let items = load_dataset(dataset)?;
    let rules_path = config.fixtures.rules.clone().ok_or(HarnessError::NoRules)?;
    let text = fs::read_to_string(&rules_path).map_err(|e| file_err(&rules_path, e))?;
    let rules: Vec<Rule> = serde_json::from_str(&text).map_err(|e| file_err(&rules_path, e))?;

    let clock = Arc::new(ManualClock::new(config.frozen_clock_ms.unwrap_or(0)));
    let backends = backends::build(&config, Arc::new(MemoryCache::default()), clock)?;
    let adjudicator = &backends.adjudicator;
    let graph = RuleGraph::build(&rules, adjudicator.embedder.as_ref(), config.graph(), mode)?;
    let ranking = graph.personalized_pagerank(PageRankOptions::default(), None);
    Ok(run_offline_eval(&items, &rules, Some(&ranking), adjudicator, ablation, mode))
}

/// Writes the report as JSON to `path` and as a text table next to it.
pub fn write_report(report: &EvalReport, path: &Path) -> Result<PathBuf, HarnessError> {
    let txt = path.with_extension("txt");
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| file_err(parent, e))?;
    }
    fs::write(path, report.to_json()).map_err(|e| file_err(path, e))?;
    fs::write(&txt, report.render()).map_err(|e| file_err(&txt, e))?;
    Ok(txt)
}

pub struct TableOptions {
    pub top: usize,
    pub tail_threshold: u64,
    pub days: u32,
}

impl Default for TableOptions {
    fn default() -> Self {
        TableOptions {
            top: 15,
            tail_threshold: feedwarden_core::telemetry::DEFAULT_TAIL_THRESHOLD,
            days: synth::STUDY_DAYS,
        }
    }
}

/// Rebuilds the layer, long-tail and governance tables from an event log.
/// A torn final line is ignored, as on service restart.
pub fn write_tables(log: &Path, out: &Path, opts: &TableOptions) -> Result<Vec<PathBuf>, HarnessError> {
    let bytes = fs::read(log).map_err(|e| file_err(log, e))?;
    let (events, _) = parse_ndjson(&bytes)?;
    fs::create_dir_all(out).map_err(|e| file_err(out, e))?;

    let layers = layer_distribution(&events);
    let tail = rule_longtail(&events, opts.top, opts.tail_threshold);
    let gov = governance_efficiency(&events, opts.days);
    let outputs = [
        ("layers", serde_json::to_string_pretty(&layers), render_layers(&layers)),
        ("longtail", serde_json::to_string_pretty(&tail), render_longtail(&tail)),
        ("governance", serde_json::to_string_pretty(&gov), render_governance(&gov)),
    ];
    let mut written = Vec::new();
    for (name, json, text) in outputs {
        let json = json.expect("tables serialize") + "\n";
        for (ext, body) in [("json", json), ("txt", text)] {
            let path = out.join(format!("{name}.{ext}"));
            fs::write(&path, body).map_err(|e| file_err(&path, e))?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Where the checked-in benchmark fixture lives.
pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join("offline")
}
