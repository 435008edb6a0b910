//! Run artifacts on disk, replay rendering and the cross-run report.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::MetricReport;
use crate::model::{ModelError, TimelineDocument, TimelineMemory};
use crate::orchestrator::manifest::{ActionKind, ManifestError, ManifestRecord, RunManifest};
use crate::orchestrator::EpisodeOutcome;
use crate::supervisor::render_plan;

pub const TIMELINE_TXT: &str = "timeline.txt";
pub const TIMELINE_JSON: &str = "timeline.json";
pub const MANIFEST_JSONL: &str = "manifest.jsonl";
pub const METRICS_JSON: &str = "metrics.json";

#[derive(Debug, Error)]
pub enum WorkbenchError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {source}")]
    Manifest { path: PathBuf, source: ManifestError },
    #[error("{path}: {source}")]
    Timeline { path: PathBuf, source: ModelError },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> WorkbenchError + '_ {
    move |source| WorkbenchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), WorkbenchError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| WorkbenchError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, WorkbenchError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| WorkbenchError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `timeline.txt`, `timeline.json` and `manifest.jsonl` into `dir`.
pub fn write_run(dir: &Path, query: &str, outcome: &EpisodeOutcome) -> Result<(), WorkbenchError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let txt = dir.join(TIMELINE_TXT);
    fs::write(&txt, outcome.timeline.to_canonical_text()).map_err(io_err(&txt))?;
    write_json(&dir.join(TIMELINE_JSON), &outcome.timeline.to_document(query))?;
    let manifest = dir.join(MANIFEST_JSONL);
    fs::write(&manifest, outcome.manifest.to_jsonl()).map_err(io_err(&manifest))
}

pub fn write_metrics(path: &Path, report: &MetricReport) -> Result<(), WorkbenchError> {
    write_json(path, report)
}

pub fn read_metrics(path: &Path) -> Result<MetricReport, WorkbenchError> {
    read_json(path)
}

/// A predicted timeline from `timeline.json`, or from the file of that name
/// inside a run directory.
pub fn load_timeline(path: &Path) -> Result<TimelineMemory, WorkbenchError> {
    let path = if path.is_dir() { path.join(TIMELINE_JSON) } else { path.to_path_buf() };
    let doc: TimelineDocument = read_json(&path)?;
    doc.into_memory()
        .map_err(|source| WorkbenchError::Timeline { path, source })
}

/// A manifest file, or the manifest inside a run directory.
pub fn load_manifest(path: &Path) -> Result<RunManifest, WorkbenchError> {
    let path = if path.is_dir() { path.join(MANIFEST_JSONL) } else { path.to_path_buf() };
    let file = fs::File::open(&path).map_err(io_err(&path))?;
    RunManifest::read_jsonl(BufReader::new(file)).map_err(|source| WorkbenchError::Manifest { path, source })
}

fn indent(text: &str) -> String {
    text.lines().map(|l| format!("    {l}\n")).collect()
}

/// Human-readable trace of a run: each search, update, injected result and
/// review in order.
pub fn render_replay(manifest: &RunManifest) -> String {
    let mut out = String::new();
    let mut current_iteration = usize::MAX;
    for record in &manifest.records {
        match record {
            ManifestRecord::Episode {
                method,
                config,
                llm_backend,
                search_backend,
                ..
            } => {
                out.push_str(&format!("Query: {}\n", config.query));
                out.push_str(&format!(
                    "Method: {method} (model backend {llm_backend}, search backend {search_backend})\n"
                ));
            }
            ManifestRecord::Call { .. } => {}
            ManifestRecord::Retrieval { iteration, report, .. } => {
                if *iteration == 0 && current_iteration != 0 {
                    current_iteration = 0;
                    out.push_str("\n== Global cognition ==\n");
                }
                out.push_str(&format!(
                    "[retrieve] {:?}: {} documents, {} events\n",
                    report.query,
                    report.doc_ids.len(),
                    report.events
                ));
            }
            ManifestRecord::Action {
                iteration,
                kind,
                payload,
                detail,
                ..
            } => {
                if *iteration != current_iteration {
                    current_iteration = *iteration;
                    out.push_str(&format!("\n== Iteration {iteration} ==\n"));
                }
                match kind {
                    ActionKind::Search => out.push_str(&format!(
                        "[search] {}{payload}{}\n",
                        crate::orchestrator::BEGIN_SEARCH,
                        crate::orchestrator::END_SEARCH
                    )),
                    ActionKind::UpdateTimeline => out.push_str(&format!(
                        "[update] {}\n{}{}\n",
                        crate::orchestrator::BEGIN_UPDATE,
                        indent(payload),
                        crate::orchestrator::END_UPDATE
                    )),
                    ActionKind::Finish => out.push_str("[finish]\n"),
                    other => out.push_str(&format!(
                        "[{}] {}\n",
                        serde_json::to_value(other)
                            .ok()
                            .and_then(|v| v.as_str().map(str::to_string))
                            .unwrap_or_default(),
                        detail.as_deref().unwrap_or("")
                    )),
                }
            }
            ManifestRecord::Injection { text, .. } => {
                out.push_str(&format!("[result]\n{}", indent(text)));
            }
            ManifestRecord::MemoryRevision { memory, synthesis, .. } => {
                let status = serde_json::to_value(synthesis)
                    .ok()
                    .and_then(|v| v.get("status").and_then(|s| s.as_str()).map(str::to_string))
                    .unwrap_or_default();
                out.push_str(&format!(
                    "[memory] revision {}: {} events (synthesis {status})\n",
                    memory.revision,
                    memory.events.len()
                ));
            }
            ManifestRecord::TimelineRevision { timeline, .. } => {
                out.push_str(&format!(
                    "[timeline] revision {}: {} entries\n",
                    timeline.revision,
                    timeline.len()
                ));
            }
            ManifestRecord::Deficiencies { items, .. } => {
                out.push_str(&format!("[review] {} deficiencies\n", items.len()));
            }
            ManifestRecord::Plan { plan, source, .. } => {
                let source = serde_json::to_value(source)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default();
                out.push_str(&format!("[plan] {:?} from {source}\n", plan.verdict));
                if !plan.items.is_empty() {
                    out.push_str(&indent(&render_plan(plan)));
                }
            }
            ManifestRecord::Iteration {
                iteration,
                searches,
                updates,
                turns,
                barren,
            } => {
                out.push_str(&format!(
                    "-- iteration {iteration}: {searches} searches, {updates} updates, {turns} turns{}\n",
                    if *barren { ", barren" } else { "" }
                ));
            }
            ManifestRecord::End {
                termination_reason,
                usage,
                iterations,
                detail,
                ..
            } => {
                out.push_str(&format!(
                    "\n== End: {} after {iterations} iterations; {} tokens ({} prompt, {} completion) over {} calls ==\n",
                    termination_reason.as_str(),
                    usage.total(),
                    usage.prompt_tokens,
                    usage.completion_tokens,
                    usage.call_count
                ));
                if let Some(d) = detail {
                    out.push_str(&format!("   {d}\n"));
                }
            }
        }
    }
    if let Some(timeline) = manifest.last_timeline() {
        out.push_str("\nFinal timeline:\n");
        out.push_str(&indent(&timeline.to_canonical_text()));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub run: String,
    pub method: String,
    pub align_r2: f64,
    pub date_f1: f64,
    pub total_tokens: u64,
    pub calls: u64,
}

/// Reads `manifest.jsonl` and `metrics.json` from a run directory.
pub fn load_report_row(dir: &Path) -> Result<ReportRow, WorkbenchError> {
    let manifest = load_manifest(&dir.join(MANIFEST_JSONL))?;
    let metrics = read_metrics(&dir.join(METRICS_JSON))?;
    let usage = manifest.usage().unwrap_or_default();
    Ok(ReportRow {
        run: dir
            .file_name()
            .map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned()),
        method: manifest.method().unwrap_or("unknown").to_string(),
        align_r2: metrics.mean.align_r2,
        date_f1: metrics.mean.date_f1,
        total_tokens: usage.total(),
        calls: usage.call_count,
    })
}

/// Method × (Align ROUGE-2, Date F1, total tokens) table.
pub fn render_report(rows: &[ReportRow]) -> String {
    let run_w = rows.iter().map(|r| r.run.len()).max().unwrap_or(0).max(3);
    let method_w = rows.iter().map(|r| r.method.len()).max().unwrap_or(0).max(6);
    let mut out = format!(
        "{:<run_w$}  {:<method_w$}  {:>9}  {:>7}  {:>12}  {:>5}\n",
        "run", "method", "Align R-2", "Date F1", "total tokens", "calls"
    );
    out.push_str(&format!("{}\n", "-".repeat(run_w + method_w + 9 + 7 + 12 + 5 + 10)));
    for r in rows {
        out.push_str(&format!(
            "{:<run_w$}  {:<method_w$}  {:>9.4}  {:>7.4}  {:>12}  {:>5}\n",
            r.run, r.method, r.align_r2, r.date_f1, r.total_tokens, r.calls
        ));
    }
    out
}
