//! Global event memory: construction from an initial scrape and incremental
//! fusion of newly scraped metadata, with an optional validated rewrite pass.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::date::{parse_date, CalendarDate};
use crate::llm::{CallPurpose, Gateway, LlmError, Message, ModelProfile};
use crate::model::{
    event_order, union_entities, union_support, DatedEvent, EventMetadata, GlobalEventMemory,
};
use crate::prompt::{extract_json_array, SYNTHESIZE_MEMORY};
use crate::scraper::{EventScraper, ScrapeReport};
use crate::evaluation::rouge::unigram_f1;
use crate::text::description_similarity;

#[derive(Debug, Error)]
pub enum CognitionError {
    #[error("the initial scrape produced no dated events")]
    EmptyCognition,
    #[error(transparent)]
    Llm(#[from] LlmError),
}

fn absorb(target: &mut DatedEvent, incoming: &DatedEvent) {
    union_support(&mut target.support, &incoming.support);
    union_entities(&mut target.entities, &incoming.entities);
    for alias in &incoming.aliases {
        target.add_alias(alias.clone());
    }
    target.refresh_salience();
}

/// Folds `incoming` into `existing`. An incoming event is absorbed by the
/// event that already carries its normalized description (as description or
/// alias); failing that it fuses with the most similar event on the same date
/// when unigram F1 against that event's description at the start of this
/// merge reaches `threshold`, the longer description winning; otherwise it is
/// added. Revision is incremented.
pub fn merge_metadata(existing: &GlobalEventMemory, incoming: &EventMetadata, threshold: f64) -> GlobalEventMemory {
    let mut events = existing.events.clone();
    let mut baseline: Vec<String> = events.iter().map(DatedEvent::normalized).collect();

    for event in &incoming.events {
        let norm = event.normalized();
        if let Some(target) = events
            .iter_mut()
            .find(|e| e.date == event.date && e.has_alias(&norm))
        {
            absorb(target, event);
            continue;
        }
        let best = events
            .iter()
            .enumerate()
            .filter(|(_, e)| e.date == event.date)
            .map(|(i, _)| (i, unigram_f1(&norm, &baseline[i])))
            .filter(|(_, f1)| *f1 >= threshold)
            .fold(None::<(usize, f64)>, |best, cur| match best {
                Some(b) if b.1 >= cur.1 => Some(b),
                _ => Some(cur),
            });
        match best {
            Some((i, _)) => {
                let target = &mut events[i];
                let previous = target.normalized();
                absorb(target, event);
                target.add_alias(norm);
                if event.description.chars().count() > target.description.chars().count() {
                    target.add_alias(previous);
                    target.description = event.description.clone();
                }
                let own = target.normalized();
                target.aliases.retain(|a| *a != own);
            }
            None => {
                let mut fresh = event.clone();
                fresh.aliases.retain(|a| *a != norm);
                fresh.refresh_salience();
                baseline.push(norm);
                events.push(fresh);
            }
        }
    }
    events.sort_by(event_order);
    GlobalEventMemory {
        events,
        revision: existing.revision + 1,
    }
}

/// Every event of `before` has a same-date counterpart in `after` whose
/// description reaches `threshold` unigram F1 and whose salience is no lower.
pub fn covers(before: &GlobalEventMemory, after: &GlobalEventMemory, threshold: f64) -> bool {
    before.events.iter().all(|e| {
        after.events.iter().any(|a| {
            a.date == e.date
                && a.salience >= e.salience
                && description_similarity(&a.description, &e.description) >= threshold
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "detail", rename_all = "snake_case")]
pub enum SynthesisStatus {
    Skipped,
    Accepted,
    Rejected(String),
    Failed(String),
}

fn render_numbered(memory: &GlobalEventMemory) -> String {
    memory
        .events
        .iter()
        .enumerate()
        .map(|(i, e)| format!("{}. {}: {}", i + 1, e.date, e.description))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Checks a synthesis reply: one item per event, same dates in the same
/// order, each new description similar enough to the one it replaces.
pub fn validate_synthesis(reply: &str, merged: &GlobalEventMemory, threshold: f64) -> Result<Vec<String>, String> {
    let value = extract_json_array(reply).ok_or("reply holds no JSON array")?;
    let items = value.as_array().expect("array");
    if items.len() != merged.events.len() {
        return Err(format!("expected {} events, got {}", merged.events.len(), items.len()));
    }
    let mut out = Vec::with_capacity(items.len());
    for (i, (item, event)) in items.iter().zip(&merged.events).enumerate() {
        let date_text = item.get("date").and_then(Value::as_str).ok_or(format!("item {} has no date", i + 1))?;
        let date: CalendarDate = parse_date(date_text, None).map_err(|e| format!("item {}: {e}", i + 1))?;
        if date != event.date {
            return Err(format!("item {} changes date {} to {}", i + 1, event.date, date));
        }
        let description = item
            .get("description")
            .and_then(Value::as_str)
            .map(|d| d.split_whitespace().collect::<Vec<_>>().join(" "))
            .filter(|d| !d.is_empty())
            .ok_or(format!("item {} has no description", i + 1))?;
        if description_similarity(&description, &event.description) < threshold {
            return Err(format!("item {} drifts too far from the original description", i + 1));
        }
        out.push(description);
    }
    Ok(out)
}

pub struct GlobalCognition<'a> {
    pub query: &'a str,
    pub fusion_threshold: f64,
    /// Model used for the optional rewrite pass; `None` disables it.
    pub synthesizer: Option<(&'a Gateway, &'a ModelProfile)>,
}

impl GlobalCognition<'_> {
    fn synthesize(
        &self,
        before: &GlobalEventMemory,
        merged: GlobalEventMemory,
    ) -> Result<(GlobalEventMemory, SynthesisStatus), LlmError> {
        let Some((gateway, profile)) = self.synthesizer else {
            return Ok((merged, SynthesisStatus::Skipped));
        };
        if merged.events.is_empty() {
            return Ok((merged, SynthesisStatus::Skipped));
        }
        let prompt = SYNTHESIZE_MEMORY
            .render(&[("query", self.query), ("events", &render_numbered(&merged))])
            .expect("synthesis template placeholders");
        let reply = match gateway.complete(CallPurpose::Synthesize, profile, &[Message::user(prompt)]) {
            Ok(r) => r,
            Err(e) if e.is_budget() => return Err(e),
            Err(e) => return Ok((merged, SynthesisStatus::Failed(e.to_string()))),
        };
        let descriptions = match validate_synthesis(&reply.text, &merged, self.fusion_threshold) {
            Ok(d) => d,
            Err(reason) => return Ok((merged, SynthesisStatus::Rejected(reason))),
        };
        let mut candidate = merged.clone();
        for (event, description) in candidate.events.iter_mut().zip(descriptions) {
            if description != event.description {
                let previous = event.normalized();
                event.description = description;
                event.add_alias(previous);
                let own = event.normalized();
                event.aliases.retain(|a| *a != own);
            }
        }
        candidate.events.sort_by(event_order);
        if let Err(e) = candidate.check() {
            return Ok((merged, SynthesisStatus::Rejected(e.to_string())));
        }
        if !covers(before, &candidate, self.fusion_threshold) {
            return Ok((merged, SynthesisStatus::Rejected("rewrite loses an earlier event".into())));
        }
        Ok((candidate, SynthesisStatus::Accepted))
    }

    /// Builds ξ⁰ from an initial scrape of the topic query; revision 0.
    pub fn init_memory(
        &self,
        scraper: &EventScraper<'_>,
        n_init: usize,
    ) -> Result<(GlobalEventMemory, SynthesisStatus, ScrapeReport), CognitionError> {
        let (metadata, report) = scraper.scrape(self.query, n_init)?;
        let (memory, status) = self.init_from_metadata(&metadata)?;
        Ok((memory, status, report))
    }

    /// Builds ξ⁰ from already scraped metadata.
    pub fn init_from_metadata(
        &self,
        metadata: &EventMetadata,
    ) -> Result<(GlobalEventMemory, SynthesisStatus), CognitionError> {
        if metadata.events.is_empty() {
            return Err(CognitionError::EmptyCognition);
        }
        let mut merged = merge_metadata(&GlobalEventMemory::default(), metadata, self.fusion_threshold);
        merged.revision = 0;
        Ok(self.synthesize(&GlobalEventMemory::default(), merged)?)
    }

    pub fn update_memory(
        &self,
        memory: &GlobalEventMemory,
        incoming: &EventMetadata,
    ) -> Result<(GlobalEventMemory, SynthesisStatus), LlmError> {
        let merged = merge_metadata(memory, incoming, self.fusion_threshold);
        if incoming.events.is_empty() {
            return Ok((merged, SynthesisStatus::Skipped));
        }
        self.synthesize(memory, merged)
    }
}
