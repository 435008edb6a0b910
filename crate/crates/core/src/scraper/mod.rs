//! Query → documents → chunks → dated event metadata.

mod chunk;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::date::{parse_date, CalendarDate};
use crate::llm::{CallPurpose, Gateway, LlmError, Message, ModelProfile};
use crate::model::{DatedEvent, EventMetadata, SourceRef};
use crate::parallel::bounded_map;
use crate::prompt::{extract_json_array, EXTRACT_EVENTS, REPAIR_JSON};
use crate::retrieval::{Document, RetrievalError, SearchBackend, SearchHit};

pub use chunk::{chunk_document, Chunk};

/// What happened to one chunk's extraction.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Extraction {
    pub events: Vec<DatedEvent>,
    pub repaired: bool,
    pub failed: bool,
    pub dropped_items: usize,
}

fn parse_items(value: &Value, chunk: &Chunk, published: Option<CalendarDate>) -> (Vec<DatedEvent>, usize) {
    let mut events = Vec::new();
    let mut dropped = 0;
    for item in value.as_array().into_iter().flatten() {
        let date = item
            .get("date")
            .and_then(Value::as_str)
            .and_then(|d| parse_date(d, published).ok());
        let description = item.get("description").and_then(Value::as_str);
        let entities: Vec<String> = item
            .get("entities")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(Value::as_str).map(str::to_string).collect())
            .unwrap_or_default();
        let event = match (date, description) {
            (Some(date), Some(description)) => DatedEvent::new(
                date,
                description,
                entities,
                vec![SourceRef::new(chunk.doc_id.clone(), chunk.index)],
            )
            .ok(),
            _ => None,
        };
        match event {
            Some(e) => events.push(e),
            None => dropped += 1,
        }
    }
    (events, dropped)
}

/// Asks the scraper model for a JSON array of `{date, description, entities}`
/// items. One repair prompt is tried when the reply holds no array; items
/// whose date does not parse are dropped. Only budget exhaustion is an error.
pub fn extract_events(
    gateway: &Gateway,
    profile: &ModelProfile,
    chunk: &Chunk,
    published: Option<CalendarDate>,
) -> Result<Extraction, LlmError> {
    let published_text = published.map(|d| d.to_string()).unwrap_or_else(|| "unknown".into());
    let prompt = EXTRACT_EVENTS
        .render(&[("published", &published_text), ("chunk", &chunk.text)])
        .expect("extraction template placeholders");
    let mut messages = vec![Message::user(prompt)];
    let mut out = Extraction::default();
    for attempt in 0..2 {
        let reply = match gateway.complete(CallPurpose::Extract, profile, &messages) {
            Ok(r) => r,
            Err(e) if e.is_budget() => return Err(e),
            Err(e) => {
                tracing::warn!(doc = %chunk.doc_id, chunk = chunk.index, error = %e, "extraction call failed");
                out.failed = true;
                return Ok(out);
            }
        };
        if let Some(value) = extract_json_array(&reply.text) {
            let (events, dropped) = parse_items(&value, chunk, published);
            out.events = events;
            out.dropped_items = dropped;
            return Ok(out);
        }
        if attempt == 0 {
            out.repaired = true;
            messages.push(Message::assistant(reply.text));
            messages.push(Message::user(REPAIR_JSON));
        }
    }
    out.failed = true;
    Ok(out)
}

/// Per-call statistics, recorded in run manifests.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScrapeReport {
    pub query: String,
    pub k: usize,
    pub search_error: Option<String>,
    pub doc_ids: Vec<String>,
    pub snippet_fallbacks: usize,
    pub skipped_documents: usize,
    pub chunks: usize,
    pub repairs: usize,
    pub failed_extractions: usize,
    pub dropped_items: usize,
    pub events: usize,
}

pub struct EventScraper<'a> {
    pub search: &'a dyn SearchBackend,
    pub gateway: &'a Gateway,
    pub profile: &'a ModelProfile,
    pub chunk_size_words: usize,
    pub parallelism: usize,
}

impl EventScraper<'_> {
    fn limit(&self) -> usize {
        if self.gateway.is_sequential() {
            1
        } else {
            self.parallelism.max(1)
        }
    }

    /// Search then fetch, falling back to the snippet when a page cannot be
    /// fetched and skipping pages with too little text. Duplicate hits are
    /// ignored.
    pub fn retrieve(&self, query: &str, k: usize, report: &mut ScrapeReport) -> Vec<Document> {
        let hits = match self.search.search(query, k) {
            Ok(h) => h,
            Err(e) => {
                tracing::warn!(%query, error = %e, "search failed");
                report.search_error = Some(e.to_string());
                return Vec::new();
            }
        };
        let mut seen = BTreeSet::new();
        let hits: Vec<SearchHit> = hits.into_iter().filter(|h| seen.insert(h.doc_id.clone())).collect();
        let fetched = bounded_map(&hits, self.limit(), |hit| self.search.fetch(hit));
        let mut docs = Vec::new();
        for (hit, result) in hits.iter().zip(fetched) {
            match result {
                Ok(doc) => docs.push(doc),
                Err(RetrievalError::EmptyBody(id)) => {
                    tracing::debug!(doc = %id, "skipping near-empty page");
                    report.skipped_documents += 1;
                }
                Err(e) => {
                    tracing::debug!(doc = %hit.doc_id, error = %e, "fetch failed, using snippet");
                    report.snippet_fallbacks += 1;
                    docs.push(Document::from_snippet(hit));
                }
            }
        }
        report.doc_ids = docs.iter().map(|d| d.doc_id.clone()).collect();
        docs
    }

    pub fn scrape(&self, query: &str, k: usize) -> Result<(EventMetadata, ScrapeReport), LlmError> {
        let mut report = ScrapeReport {
            query: query.to_string(),
            k,
            ..ScrapeReport::default()
        };
        let docs = self.retrieve(query, k, &mut report);
        let mut work: Vec<(Chunk, Option<CalendarDate>)> = docs
            .iter()
            .flat_map(|d| {
                chunk_document(d, self.chunk_size_words)
                    .into_iter()
                    .map(move |c| (c, d.published))
            })
            .collect();
        work.sort_by(|a, b| (&a.0.doc_id, a.0.index).cmp(&(&b.0.doc_id, b.0.index)));
        report.chunks = work.len();

        let results = bounded_map(&work, self.limit(), |(chunk, published)| {
            extract_events(self.gateway, self.profile, chunk, *published)
        });
        let mut events = Vec::new();
        for result in results {
            let extraction = result?;
            report.repairs += extraction.repaired as usize;
            report.failed_extractions += extraction.failed as usize;
            report.dropped_items += extraction.dropped_items;
            events.extend(extraction.events);
        }
        let metadata = EventMetadata::deduplicated(query, events);
        report.events = metadata.events.len();
        Ok((metadata, report))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{GatewayOptions, Scenario, ScriptRule, ScriptedResponder};
    use crate::retrieval::LocalBackend;
    use std::sync::Arc;

    fn rule(purpose: &str, contains: Option<&str>, response: &str) -> ScriptRule {
        ScriptRule {
            purpose: Some(purpose.into()),
            contains: contains.map(str::to_string),
            call: None,
            response: response.into(),
            repeat: false,
        }
    }

    fn gateway(rules: Vec<ScriptRule>) -> Gateway {
        Gateway::new(
            Arc::new(ScriptedResponder::new(Scenario { name: "t".into(), rules })),
            GatewayOptions::default(),
        )
    }

    fn chunk(text: &str) -> Chunk {
        Chunk {
            doc_id: "doc".into(),
            index: 0,
            text: text.into(),
            word_count: text.split_whitespace().count(),
        }
    }

    #[test]
    fn extracts_macintosh_event() {
        let gw = gateway(vec![rule(
            "extract",
            None,
            r#"[{"date":"January 24, 1984","description":"Unveiling of the Macintosh computer","entities":["Apple","Macintosh"]}]"#,
        )]);
        let out = extract_events(&gw, &ModelProfile::scraper("s"), &chunk("text"), None).unwrap();
        assert_eq!(out.events.len(), 1);
        assert_eq!(out.events[0].date.to_string(), "1984-01-24");
        assert_eq!(out.events[0].entities, ["Apple", "Macintosh"]);
        assert_eq!(out.events[0].support, [SourceRef::new("doc", 0)]);
    }

    #[test]
    fn empty_array_yields_nothing() {
        let gw = gateway(vec![rule("extract", None, "[]")]);
        let out = extract_events(&gw, &ModelProfile::scraper("s"), &chunk("text"), None).unwrap();
        assert!(out.events.is_empty() && !out.failed);
    }

    #[test]
    fn unparseable_dates_are_dropped() {
        let gw = gateway(vec![rule(
            "extract",
            None,
            r#"[{"date":"2020-01-05","description":"ok"},{"date":"someday","description":"bad"}]"#,
        )]);
        let out = extract_events(&gw, &ModelProfile::scraper("s"), &chunk("text"), None).unwrap();
        assert_eq!(out.events.len(), 1);
        assert_eq!(out.dropped_items, 1);
    }

    #[test]
    fn relative_dates_use_publication_date() {
        let gw = gateway(vec![rule("extract", None, r#"[{"date":"yesterday","description":"x"}]"#)]);
        let published = Some("2020-05-02".parse().unwrap());
        let out = extract_events(&gw, &ModelProfile::scraper("s"), &chunk("text"), published).unwrap();
        assert_eq!(out.events[0].date.to_string(), "2020-05-01");
        let gw = gateway(vec![rule("extract", None, r#"[{"date":"yesterday","description":"x"}]"#)]);
        let out = extract_events(&gw, &ModelProfile::scraper("s"), &chunk("text"), None).unwrap();
        assert!(out.events.is_empty());
    }

    #[test]
    fn one_repair_then_give_up() {
        let gw = gateway(vec![
            rule("extract", None, "Sure! Here are the events."),
            rule("extract", Some(REPAIR_JSON), r#"[{"date":"2020","description":"y"}]"#),
        ]);
        let out = extract_events(&gw, &ModelProfile::scraper("s"), &chunk("text"), None).unwrap();
        assert!(out.repaired);
        assert_eq!(out.events.len(), 1);

        let gw = gateway(vec![rule("extract", None, "nope"), rule("extract", None, "still nope")]);
        let out = extract_events(&gw, &ModelProfile::scraper("s"), &chunk("text"), None).unwrap();
        assert!(out.failed && out.events.is_empty());
    }

    fn doc(id: &str, body: &str) -> Document {
        Document {
            doc_id: id.into(),
            title: String::new(),
            published: None,
            body: body.into(),
        }
    }

    #[test]
    fn zero_hits_give_zero_events() {
        let backend = LocalBackend::new(vec![doc("a", "apple")]).unwrap();
        let gw = gateway(vec![]);
        let scraper = EventScraper {
            search: &backend,
            gateway: &gw,
            profile: &ModelProfile::scraper("s"),
            chunk_size_words: 800,
            parallelism: 8,
        };
        let (m, report) = scraper.scrape("zebra", 5).unwrap();
        assert!(m.events.is_empty());
        assert_eq!(report.doc_ids.len(), 0);
    }

    #[test]
    fn duplicate_assertions_raise_salience() {
        let backend = LocalBackend::new(vec![doc("a", "ipod story one"), doc("b", "ipod story two")]).unwrap();
        let same = r#"[{"date":"2001-11-10","description":"Introduction of the iPod."}]"#;
        let gw = gateway(vec![rule("extract", Some("one"), same), rule("extract", Some("two"), same)]);
        let profile = ModelProfile::scraper("s");
        let scraper = EventScraper {
            search: &backend,
            gateway: &gw,
            profile: &profile,
            chunk_size_words: 800,
            parallelism: 8,
        };
        let (m, _) = scraper.scrape("ipod", 5).unwrap();
        assert_eq!(m.events.len(), 1);
        assert_eq!(m.events[0].salience, 2);
        assert_eq!(EventMetadata::deduplicated("ipod", m.events.clone()), m);
    }
}
