//! Append-only JSONL record of an episode or baseline run.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cognition::SynthesisStatus;
use crate::llm::{CallPurpose, CallRecord, ModelProfiles, TokenUsage};
use crate::model::{Deficiency, EpisodeConfig, GlobalEventMemory, SearchPlan, TimelineMemory};
use crate::scraper::ScrapeReport;
use crate::supervisor::{DensityStats, PlanSource};
use crate::updater::MergeReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    SupervisorTerminate,
    MaxIterations,
    BudgetExceeded,
    EmptyCognition,
    /// Fixed-length runs that performed every planned step.
    Completed,
}

impl TerminationReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::SupervisorTerminate => "supervisor_terminate",
            Self::MaxIterations => "max_iterations",
            Self::BudgetExceeded => "budget_exceeded",
            Self::EmptyCognition => "empty_cognition",
            Self::Completed => "completed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Search,
    UpdateTimeline,
    Finish,
    Malformed,
    /// Search issued after the per-iteration limit; ends the iteration.
    SearchRefused,
    /// Update whose body held no usable dated line.
    UpdateRejected,
    /// Iteration ended by the orchestrator (turn cap, repeated malformed
    /// output or a model error).
    ForcedFinish,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum ManifestRecord {
    Episode {
        method: String,
        config: EpisodeConfig,
        prompt_versions: BTreeMap<String, String>,
        llm_backend: String,
        search_backend: String,
        models: ModelProfiles,
        started_at: String,
    },
    Call {
        iteration: usize,
        #[serde(flatten)]
        call: CallRecord,
    },
    Retrieval {
        iteration: usize,
        round: usize,
        #[serde(flatten)]
        report: ScrapeReport,
    },
    Action {
        iteration: usize,
        turn: usize,
        kind: ActionKind,
        payload: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        detail: Option<String>,
    },
    Injection {
        iteration: usize,
        turn: usize,
        text: String,
    },
    MemoryRevision {
        iteration: usize,
        synthesis: SynthesisStatus,
        memory: GlobalEventMemory,
    },
    TimelineRevision {
        iteration: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        merge: Option<MergeReport>,
        timeline: TimelineMemory,
    },
    Deficiencies {
        iteration: usize,
        items: Vec<Deficiency>,
        density: Option<DensityStats>,
    },
    Plan {
        iteration: usize,
        source: PlanSource,
        plan: SearchPlan,
    },
    Iteration {
        iteration: usize,
        searches: usize,
        updates: usize,
        turns: usize,
        barren: bool,
    },
    End {
        termination_reason: TerminationReason,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        detail: Option<String>,
        usage: TokenUsage,
        iterations: usize,
        finished_at: String,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("manifest line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("invalid manifest: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub records: Vec<ManifestRecord>,
}

pub(crate) fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn push(&mut self, record: ManifestRecord) {
        self.records.push(record);
    }

    pub fn write_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn read_jsonl(input: impl BufRead) -> Result<Self, ManifestError> {
        let mut records = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record =
                serde_json::from_str(&line).map_err(|source| ManifestError::Parse { line: i + 1, source })?;
            records.push(record);
        }
        Ok(Self { records })
    }

    pub fn from_jsonl(text: &str) -> Result<Self, ManifestError> {
        Self::read_jsonl(text.as_bytes())
    }

    /// Records as JSON values with wall-clock fields removed, for comparing
    /// runs.
    pub fn comparable(&self) -> Vec<Value> {
        self.records
            .iter()
            .map(|r| {
                let mut v = serde_json::to_value(r).expect("manifest records serialize");
                if let Some(obj) = v.as_object_mut() {
                    obj.remove("started_at");
                    obj.remove("finished_at");
                }
                v
            })
            .collect()
    }

    pub fn method(&self) -> Option<&str> {
        self.records.iter().find_map(|r| match r {
            ManifestRecord::Episode { method, .. } => Some(method.as_str()),
            _ => None,
        })
    }

    pub fn config(&self) -> Option<&EpisodeConfig> {
        self.records.iter().find_map(|r| match r {
            ManifestRecord::Episode { config, .. } => Some(config),
            _ => None,
        })
    }

    pub fn termination(&self) -> Option<TerminationReason> {
        self.records.iter().rev().find_map(|r| match r {
            ManifestRecord::End { termination_reason, .. } => Some(*termination_reason),
            _ => None,
        })
    }

    pub fn usage(&self) -> Option<TokenUsage> {
        self.records.iter().rev().find_map(|r| match r {
            ManifestRecord::End { usage, .. } => Some(*usage),
            _ => None,
        })
    }

    pub fn calls(&self) -> impl Iterator<Item = &CallRecord> {
        self.records.iter().filter_map(|r| match r {
            ManifestRecord::Call { call, .. } => Some(call),
            _ => None,
        })
    }

    pub fn calls_for(&self, purpose: CallPurpose) -> usize {
        self.calls().filter(|c| c.purpose == purpose).count()
    }

    pub fn retrievals(&self) -> impl Iterator<Item = &ScrapeReport> {
        self.records.iter().filter_map(|r| match r {
            ManifestRecord::Retrieval { report, .. } => Some(report),
            _ => None,
        })
    }

    pub fn actions(&self, kind: ActionKind) -> usize {
        self.records
            .iter()
            .filter(|r| matches!(r, ManifestRecord::Action { kind: k, .. } if *k == kind))
            .count()
    }

    /// Completed iteration numbers in record order.
    pub fn iterations(&self) -> Vec<usize> {
        self.records
            .iter()
            .filter_map(|r| match r {
                ManifestRecord::Iteration { iteration, .. } => Some(*iteration),
                _ => None,
            })
            .collect()
    }

    pub fn last_timeline(&self) -> Option<&TimelineMemory> {
        self.records.iter().rev().find_map(|r| match r {
            ManifestRecord::TimelineRevision { timeline, .. } => Some(timeline),
            _ => None,
        })
    }

    /// Structural checks: one leading episode record, one trailing end
    /// record, iterations numbered 1..=n, and call usage adding up to the
    /// reported total.
    pub fn validate(&self) -> Result<(), ManifestError> {
        let invalid = |m: &str| Err(ManifestError::Invalid(m.to_string()));
        if !matches!(self.records.first(), Some(ManifestRecord::Episode { .. })) {
            return invalid("first record is not an episode record");
        }
        let ends = self
            .records
            .iter()
            .filter(|r| matches!(r, ManifestRecord::End { .. }))
            .count();
        if ends != 1 || !matches!(self.records.last(), Some(ManifestRecord::End { .. })) {
            return invalid("expected exactly one end record, last");
        }
        let iterations = self.iterations();
        if iterations.iter().enumerate().any(|(i, k)| *k != i + 1) {
            return invalid("iteration records are not numbered 1..=n");
        }
        if let Some(ManifestRecord::End { usage, iterations: n, .. }) = self.records.last() {
            if *n != iterations.len() {
                return invalid("end record iteration count disagrees with iteration records");
            }
            let prompt: u64 = self.calls().map(|c| c.prompt_tokens).sum();
            let completion: u64 = self.calls().map(|c| c.completion_tokens).sum();
            if prompt != usage.prompt_tokens || completion != usage.completion_tokens {
                return invalid("call records do not add up to the reported usage");
            }
        }
        Ok(())
    }
}
