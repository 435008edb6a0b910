//! Parsing sub-timelines out of model output and merging them into the
//! timeline memory without losing established content.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::date::{parse_date, CalendarDate};
use crate::evaluation::rouge::{tokenize, unigram_f1};
use crate::llm::{CallPurpose, Gateway, LlmError, Message, ModelProfile};
use crate::model::{union_support, GlobalEventMemory, SubTimeline, TimelineEntry, TimelineMemory};
use crate::prompt::MERGE_TIMELINE;
use crate::text::split_sentences;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdaterMode {
    Deterministic,
    Assisted,
}

#[derive(Debug, Error)]
pub enum UpdateError {
    #[error("no dated lines could be parsed from the update")]
    EmptySubTimeline,
    #[error(transparent)]
    Llm(#[from] LlmError),
}

fn strip_line_prefix(line: &str) -> &str {
    line.trim()
        .trim_start_matches(['-', '*', '•', '#', ' '])
        .trim_matches('*')
        .trim()
}

fn parse_line(line: &str) -> Option<(CalendarDate, String)> {
    let (date_text, summary) = strip_line_prefix(line).split_once(':')?;
    let date = parse_date(date_text.trim().trim_matches('*').trim(), None).ok()?;
    if !date.is_day() {
        return None;
    }
    let summary = summary.trim().trim_start_matches('*').trim();
    let summary = summary.split_whitespace().collect::<Vec<_>>().join(" ");
    (!summary.is_empty()).then_some((date, summary))
}

fn ensure_terminal(text: &mut String) {
    if !text.is_empty() && !text.ends_with(['.', '!', '?']) {
        text.push('.');
    }
}

/// Appends `sentence` as its own sentence.
fn append(summary: &mut String, sentence: &str) {
    ensure_terminal(summary);
    if !summary.is_empty() {
        summary.push(' ');
    }
    summary.push_str(sentence.trim());
    ensure_terminal(summary);
}

/// Lines of the form `<date>: <summary>` with a day-precise date; anything
/// else is ignored. Lines sharing a date are joined, skipping repeated
/// sentences.
pub fn parse_subtimeline(body: &str) -> Result<SubTimeline, UpdateError> {
    let mut by_date: BTreeMap<CalendarDate, String> = BTreeMap::new();
    for line in body.lines() {
        let Some((date, summary)) = parse_line(line) else { continue };
        match by_date.get_mut(&date) {
            Some(existing) => {
                let have: Vec<String> = split_sentences(existing).iter().map(|s| s.to_lowercase()).collect();
                for s in split_sentences(&summary) {
                    if !have.contains(&s.to_lowercase()) {
                        append(existing, &s);
                    }
                }
            }
            None => {
                by_date.insert(date, summary);
            }
        }
    }
    if by_date.is_empty() {
        return Err(UpdateError::EmptySubTimeline);
    }
    let entries = by_date
        .into_iter()
        .map(|(date, summary)| TimelineEntry::new(date, &summary).expect("day date and non-empty summary"))
        .collect();
    Ok(SubTimeline { entries })
}

fn memory_support(xi: &GlobalEventMemory, date: &CalendarDate) -> Vec<crate::model::SourceRef> {
    let mut support = Vec::new();
    for e in xi.events.iter().filter(|e| e.date == *date) {
        union_support(&mut support, &e.support);
    }
    support
}

/// Deterministic per-date union. New dates are inserted; on a shared date each
/// incoming sentence is appended unless its unigram F1 against some existing
/// sentence reaches `dedup_threshold`. Supporting sources come from the
/// memory's events on the same day.
pub fn merge_deterministic(
    memory: &TimelineMemory,
    sub: &SubTimeline,
    xi: &GlobalEventMemory,
    iteration: u64,
    dedup_threshold: f64,
) -> TimelineMemory {
    let mut by_date: BTreeMap<CalendarDate, TimelineEntry> =
        memory.entries.iter().map(|e| (e.date, e.clone())).collect();
    for incoming in &sub.entries {
        match by_date.get_mut(&incoming.date) {
            Some(existing) => {
                let mut changed = false;
                for sentence in incoming.sentences() {
                    if tokenize(&sentence).is_empty() {
                        continue;
                    }
                    let duplicate = existing
                        .sentences()
                        .iter()
                        .any(|s| unigram_f1(&sentence, s) >= dedup_threshold);
                    if !duplicate {
                        append(&mut existing.summary, &sentence);
                        changed = true;
                    }
                }
                let before = existing.support.len();
                union_support(&mut existing.support, &incoming.support);
                union_support(&mut existing.support, &memory_support(xi, &incoming.date));
                if changed || existing.support.len() != before {
                    existing.last_revised_at_iteration = iteration;
                }
            }
            None => {
                let mut entry = incoming.clone();
                union_support(&mut entry.support, &memory_support(xi, &entry.date));
                entry.introduced_at_iteration = iteration;
                entry.last_revised_at_iteration = iteration;
                by_date.insert(entry.date, entry);
            }
        }
    }
    TimelineMemory {
        entries: by_date.into_values().collect(),
        revision: memory.revision + 1,
    }
}

/// Sentences of `original` with no counterpart (unigram F1 ≥ `floor`) in
/// `candidate`. Token-free sentences never count as lost.
pub fn lost_sentences(original: &str, candidate: &str, floor: f64) -> Vec<String> {
    let kept = split_sentences(candidate);
    split_sentences(original)
        .into_iter()
        .filter(|s| !tokenize(s).is_empty())
        .filter(|s| !kept.iter().any(|k| unigram_f1(s, k) >= floor))
        .collect()
}

/// Whether every sentence of every `before` entry survives in `after` at the
/// same date.
pub fn satisfies_no_loss(before: &TimelineMemory, after: &TimelineMemory, floor: f64) -> bool {
    before.entries.iter().all(|e| match after.entry(&e.date) {
        Some(a) => lost_sentences(&e.summary, &a.summary, floor).is_empty(),
        None => false,
    })
}

/// Accepts a rewritten timeline only on the dates of `baseline`; restores
/// missing entries and sentences verbatim. Returns the repaired timeline and
/// how many entries or sentences had to be restored.
pub fn enforce_no_loss(baseline: &TimelineMemory, rewritten: &SubTimeline, floor: f64) -> (TimelineMemory, usize) {
    let proposals: BTreeMap<CalendarDate, &TimelineEntry> =
        rewritten.entries.iter().map(|e| (e.date, e)).collect();
    let mut restored = 0;
    let entries = baseline
        .entries
        .iter()
        .map(|base| {
            let Some(proposal) = proposals.get(&base.date) else {
                restored += 1;
                return base.clone();
            };
            let mut entry = base.clone();
            entry.summary = proposal.summary.clone();
            for s in lost_sentences(&base.summary, &proposal.summary, floor) {
                append(&mut entry.summary, &s);
                restored += 1;
            }
            entry
        })
        .collect();
    (
        TimelineMemory {
            entries,
            revision: baseline.revision,
        },
        restored,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeReport {
    pub mode: UpdaterMode,
    /// Entries or sentences restored after an assisted rewrite.
    pub restored: usize,
    /// Set when the assisted rewrite was discarded.
    pub fallback_reason: Option<String>,
}

pub struct TimelineUpdater<'a> {
    pub mode: UpdaterMode,
    pub dedup_threshold: f64,
    pub no_loss_floor: f64,
    pub model: Option<(&'a Gateway, &'a ModelProfile)>,
}

impl TimelineUpdater<'_> {
    pub fn deterministic(dedup_threshold: f64) -> Self {
        TimelineUpdater {
            mode: UpdaterMode::Deterministic,
            dedup_threshold,
            no_loss_floor: 0.5,
            model: None,
        }
    }

    pub fn merge(
        &self,
        query: &str,
        memory: &TimelineMemory,
        sub: &SubTimeline,
        xi: &GlobalEventMemory,
        iteration: u64,
    ) -> Result<(TimelineMemory, MergeReport), UpdateError> {
        if sub.entries.is_empty() {
            return Err(UpdateError::EmptySubTimeline);
        }
        let merged = merge_deterministic(memory, sub, xi, iteration, self.dedup_threshold);
        let report = |restored, fallback_reason| MergeReport {
            mode: self.mode,
            restored,
            fallback_reason,
        };
        let (UpdaterMode::Assisted, Some((gateway, profile))) = (self.mode, self.model) else {
            return Ok((merged, report(0, None)));
        };
        let prompt = MERGE_TIMELINE
            .render(&[
                ("query", query),
                ("memory", &xi.render_lines()),
                ("timeline", &memory.to_canonical_text()),
                ("subtimeline", &SubTimelineText(sub).to_string()),
            ])
            .expect("merge template placeholders");
        let reply = match gateway.complete(CallPurpose::Merge, profile, &[Message::user(prompt)]) {
            Ok(reply) => reply,
            Err(e) if e.is_budget() => return Err(e.into()),
            Err(e) => return Ok((merged, report(0, Some(e.to_string())))),
        };
        let rewritten = match parse_subtimeline(&reply.text) {
            Ok(r) => r,
            Err(e) => return Ok((merged, report(0, Some(e.to_string())))),
        };
        let (repaired, restored) = enforce_no_loss(&merged, &rewritten, self.no_loss_floor);
        debug_assert!(satisfies_no_loss(memory, &repaired, self.no_loss_floor));
        Ok((repaired, report(restored, None)))
    }
}

struct SubTimelineText<'a>(&'a SubTimeline);

impl std::fmt::Display for SubTimelineText<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for e in &self.0.entries {
            writeln!(f, "{}: {}", e.date, e.summary)?;
        }
        Ok(())
    }
}
