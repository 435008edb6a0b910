//! Shared domain vocabulary: events, memories, timelines, deficiencies and
//! search plans, plus the episode configuration surface.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::date::CalendarDate;
use crate::llm::ModelRole;
use crate::supervisor::SupervisorThresholds;
use crate::text::{normalize_description, split_sentences};
use crate::updater::UpdaterMode;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("event description is empty")]
    EmptyDescription,
    #[error("timeline summary is empty")]
    EmptySummary,
    #[error("timeline entries must have day granularity, got {0}")]
    CoarseTimelineDate(CalendarDate),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

/// Pointer to the chunk of a document that supports an event.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SourceRef {
    pub doc_id: String,
    pub chunk: u32,
}

impl SourceRef {
    pub fn new(doc_id: impl Into<String>, chunk: u32) -> Self {
        Self {
            doc_id: doc_id.into(),
            chunk,
        }
    }
}

fn distinct_docs(support: &[SourceRef]) -> u32 {
    support
        .iter()
        .map(|s| s.doc_id.as_str())
        .collect::<BTreeSet<_>>()
        .len() as u32
}

/// Merges `extra` into `support`, keeping it sorted and duplicate-free.
pub fn union_support(support: &mut Vec<SourceRef>, extra: &[SourceRef]) {
    support.extend(extra.iter().cloned());
    support.sort();
    support.dedup();
}

/// Appends unseen entities, preserving first-seen order.
pub fn union_entities(entities: &mut Vec<String>, extra: &[String]) {
    for e in extra {
        if !entities.iter().any(|x| x.eq_ignore_ascii_case(e)) {
            entities.push(e.clone());
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatedEvent {
    pub date: CalendarDate,
    pub description: String,
    #[serde(default)]
    pub entities: Vec<String>,
    #[serde(default)]
    pub support: Vec<SourceRef>,
    #[serde(default)]
    pub salience: u32,
    /// Normalized descriptions that have been fused into this event.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aliases: Vec<String>,
}

impl DatedEvent {
    pub fn new(
        date: CalendarDate,
        description: &str,
        entities: Vec<String>,
        mut support: Vec<SourceRef>,
    ) -> Result<Self, ModelError> {
        let description = description.split_whitespace().collect::<Vec<_>>().join(" ");
        if description.is_empty() {
            return Err(ModelError::EmptyDescription);
        }
        support.sort();
        support.dedup();
        let salience = distinct_docs(&support);
        Ok(Self {
            date,
            description,
            entities,
            support,
            salience,
            aliases: Vec::new(),
        })
    }

    pub fn normalized(&self) -> String {
        normalize_description(&self.description)
    }

    pub fn refresh_salience(&mut self) {
        self.salience = distinct_docs(&self.support);
    }

    /// Whether `normalized` is this event's own normalized description or one
    /// previously fused into it.
    pub fn has_alias(&self, normalized: &str) -> bool {
        self.normalized() == normalized || self.aliases.iter().any(|a| a == normalized)
    }

    pub fn add_alias(&mut self, normalized: String) {
        if !self.aliases.contains(&normalized) {
            self.aliases.push(normalized);
            self.aliases.sort();
        }
    }
}

/// Date ascending, then salience descending, then description.
pub fn event_order(a: &DatedEvent, b: &DatedEvent) -> Ordering {
    a.date
        .cmp(&b.date)
        .then_with(|| b.salience.cmp(&a.salience))
        .then_with(|| a.description.cmp(&b.description))
}

/// Output of one Event Scraper call.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EventMetadata {
    pub events: Vec<DatedEvent>,
    pub source_query: String,
}

impl EventMetadata {
    /// Collapses events sharing (date, normalized description), keeping the
    /// first description seen and the union of support and entities.
    pub fn deduplicated(source_query: &str, events: impl IntoIterator<Item = DatedEvent>) -> Self {
        let mut by_key: BTreeMap<(CalendarDate, String), usize> = BTreeMap::new();
        let mut out: Vec<DatedEvent> = Vec::new();
        for event in events {
            let key = (event.date, event.normalized());
            match by_key.get(&key) {
                Some(&i) => {
                    let existing = &mut out[i];
                    union_support(&mut existing.support, &event.support);
                    union_entities(&mut existing.entities, &event.entities);
                    for alias in &event.aliases {
                        existing.add_alias(alias.clone());
                    }
                    existing.refresh_salience();
                }
                None => {
                    by_key.insert(key, out.len());
                    let mut event = event;
                    event.refresh_salience();
                    out.push(event);
                }
            }
        }
        out.sort_by(event_order);
        Self {
            events: out,
            source_query: source_query.to_string(),
        }
    }
}

/// The coarse, continuously updated set of dated events.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GlobalEventMemory {
    pub events: Vec<DatedEvent>,
    pub revision: u64,
}

impl GlobalEventMemory {
    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn check(&self) -> Result<(), ModelError> {
        for pair in self.events.windows(2) {
            if event_order(&pair[0], &pair[1]) == Ordering::Greater {
                return Err(ModelError::Invariant(format!(
                    "memory events out of order at {}",
                    pair[1].date
                )));
            }
        }
        let mut seen = BTreeSet::new();
        for e in &self.events {
            if !seen.insert((e.date, e.normalized())) {
                return Err(ModelError::Invariant(format!(
                    "duplicate memory event at {}: {}",
                    e.date, e.description
                )));
            }
        }
        Ok(())
    }

    /// One line per event: `DATE: description`.
    pub fn render_lines(&self) -> String {
        self.events
            .iter()
            .map(|e| format!("{}: {}", e.date, e.description))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub date: CalendarDate,
    pub summary: String,
    #[serde(default)]
    pub support: Vec<SourceRef>,
    #[serde(default)]
    pub introduced_at_iteration: u64,
    #[serde(default)]
    pub last_revised_at_iteration: u64,
}

impl TimelineEntry {
    pub fn new(date: CalendarDate, summary: &str) -> Result<Self, ModelError> {
        if !date.is_day() {
            return Err(ModelError::CoarseTimelineDate(date));
        }
        let summary = summary.split_whitespace().collect::<Vec<_>>().join(" ");
        if summary.is_empty() {
            return Err(ModelError::EmptySummary);
        }
        Ok(Self {
            date,
            summary,
            support: Vec::new(),
            introduced_at_iteration: 0,
            last_revised_at_iteration: 0,
        })
    }

    pub fn sentences(&self) -> Vec<String> {
        split_sentences(&self.summary)
    }

    /// Distinct supporting documents.
    pub fn salience(&self) -> u32 {
        distinct_docs(&self.support)
    }
}

/// The evolving fine-grained timeline.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TimelineMemory {
    pub entries: Vec<TimelineEntry>,
    pub revision: u64,
}

impl TimelineMemory {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, date: &CalendarDate) -> Option<&TimelineEntry> {
        self.entries
            .binary_search_by(|e| e.date.cmp(date))
            .ok()
            .map(|i| &self.entries[i])
    }

    /// Sorted ascending, one entry per date, day granularity, non-empty text.
    pub fn check(&self) -> Result<(), ModelError> {
        for pair in self.entries.windows(2) {
            if pair[0].date >= pair[1].date {
                return Err(ModelError::Invariant(format!(
                    "timeline not strictly ascending at {}",
                    pair[1].date
                )));
            }
        }
        for e in &self.entries {
            if !e.date.is_day() {
                return Err(ModelError::CoarseTimelineDate(e.date));
            }
            if e.summary.trim().is_empty() {
                return Err(ModelError::EmptySummary);
            }
        }
        Ok(())
    }

    /// Canonical text form: one `YYYY-MM-DD: summary` line per entry.
    pub fn to_canonical_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!("{}: {}\n", e.date, e.summary));
        }
        out
    }

    pub fn to_document(&self, query: &str) -> TimelineDocument {
        TimelineDocument {
            query: query.to_string(),
            entries: self
                .entries
                .iter()
                .map(|e| TimelineDocumentEntry {
                    date: e.date,
                    summary: e.summary.clone(),
                    sources: e
                        .support
                        .iter()
                        .map(|s| s.doc_id.clone())
                        .collect::<BTreeSet<_>>()
                        .into_iter()
                        .collect(),
                })
                .collect(),
        }
    }
}

/// Canonical structured form of a timeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineDocument {
    pub query: String,
    pub entries: Vec<TimelineDocumentEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineDocumentEntry {
    pub date: CalendarDate,
    pub summary: String,
    #[serde(default)]
    pub sources: Vec<String>,
}

impl TimelineDocument {
    /// Rebuilds a timeline, merging entries that share a date.
    pub fn into_memory(self) -> Result<TimelineMemory, ModelError> {
        let mut by_date: BTreeMap<CalendarDate, TimelineEntry> = BTreeMap::new();
        for item in self.entries {
            let mut entry = TimelineEntry::new(item.date, &item.summary)?;
            entry.support = item
                .sources
                .into_iter()
                .map(|id| SourceRef::new(id, 0))
                .collect();
            match by_date.get_mut(&item.date) {
                Some(existing) => {
                    crate::text::append_sentence(&mut existing.summary, &entry.summary);
                    union_support(&mut existing.support, &entry.support);
                }
                None => {
                    by_date.insert(item.date, entry);
                }
            }
        }
        Ok(TimelineMemory {
            entries: by_date.into_values().collect(),
            revision: 0,
        })
    }
}

/// A small, locally scoped set of dated entries awaiting integration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SubTimeline {
    pub entries: Vec<TimelineEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeficiencyKind {
    MissingEvent,
    CoarseTimestamp,
    UnderSpecified,
    SparseRegion,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    Date(CalendarDate),
    Interval {
        start: CalendarDate,
        end: CalendarDate,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deficiency {
    pub kind: DeficiencyKind,
    pub anchor: Option<Anchor>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanItem {
    pub deficiency: Deficiency,
    pub queries: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Continue,
    Terminate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchPlan {
    pub items: Vec<PlanItem>,
    pub verdict: Verdict,
}

impl SearchPlan {
    pub fn terminate() -> Self {
        Self {
            items: Vec::new(),
            verdict: Verdict::Terminate,
        }
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.items
            .iter()
            .flat_map(|i| i.queries.iter().map(String::as_str))
    }
}

/// Knobs that are not part of the headline configuration but are exposed for
/// experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tuning {
    pub fusion_threshold: f64,
    pub sentence_dedup_threshold: f64,
    pub no_loss_floor: f64,
    pub supervisor: SupervisorThresholds,
    pub synthesize_memory: bool,
    /// `None` picks Assisted for live models and Deterministic for scripted ones.
    pub updater_mode: Option<UpdaterMode>,
    pub auxiliary_role: ModelRole,
    pub parallelism: usize,
    /// Words of each document shown to baseline generators.
    pub baseline_doc_words: usize,
}

impl Default for Tuning {
    fn default() -> Self {
        Self {
            fusion_threshold: 0.6,
            sentence_dedup_threshold: 0.8,
            no_loss_floor: 0.5,
            supervisor: SupervisorThresholds::default(),
            synthesize_memory: true,
            updater_mode: None,
            auxiliary_role: ModelRole::Reasoner,
            parallelism: 8,
            baseline_doc_words: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    pub query: String,
    pub n_init: usize,
    pub n_exp: usize,
    pub top_k: usize,
    pub max_iterations: usize,
    pub max_searches_per_iteration: usize,
    pub token_budget: u64,
    pub chunk_size_words: usize,
    pub seed: u64,
    pub tuning: Tuning,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            query: String::new(),
            n_init: 20,
            n_exp: 20,
            top_k: 20,
            max_iterations: 5,
            max_searches_per_iteration: 8,
            token_budget: 1_000_000,
            chunk_size_words: 800,
            seed: 0,
            tuning: Tuning::default(),
        }
    }
}

impl EpisodeConfig {
    pub fn new(query: impl Into<String>) -> Self {
        Self {
            query: query.into(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.query.trim().is_empty() {
            return Err(ModelError::Config("query is empty".into()));
        }
        let counts = [
            ("n_init", self.n_init as u64),
            ("n_exp", self.n_exp as u64),
            ("top_k", self.top_k as u64),
            ("max_iterations", self.max_iterations as u64),
            ("max_searches_per_iteration", self.max_searches_per_iteration as u64),
            ("token_budget", self.token_budget),
            ("chunk_size_words", self.chunk_size_words as u64),
            ("parallelism", self.tuning.parallelism as u64),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::Config(format!("{name} must be positive")));
        }
        for (name, v) in [
            ("fusion_threshold", self.tuning.fusion_threshold),
            ("sentence_dedup_threshold", self.tuning.sentence_dedup_threshold),
            ("no_loss_floor", self.tuning.no_loss_floor),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ModelError::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        Ok(())
    }
}
