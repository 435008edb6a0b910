//! Retrieval-augmented comparison methods: direct generation, query rewriting
//! and iterative query refinement.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::llm::{CallPurpose, LlmError, Message};
use crate::model::{EpisodeConfig, GlobalEventMemory, ModelError, SourceRef, TimelineMemory};
use crate::orchestrator::manifest::{ManifestRecord, RunManifest, TerminationReason};
use crate::orchestrator::{end_record, episode_record, flush_calls, Backends, EpisodeOutcome};
use crate::prompt::{extract_json_array, GENERATE_TIMELINE, REFINE_QUERY, REWRITE_QUERY};
use crate::retrieval::Document;
use crate::scraper::{EventScraper, ScrapeReport};
use crate::updater::{merge_deterministic, parse_subtimeline};

/// Retrieve/generate rounds run by [`BaselineKind::IterRag`].
pub const ITER_RAG_ROUNDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Direct,
    Rewrite,
    IterRag,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [Self::Direct, Self::Rewrite, Self::IterRag];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Direct => "direct",
            Self::Rewrite => "rewrite",
            Self::IterRag => "iter_rag",
        }
    }
}

impl std::str::FromStr for BaselineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s || k.as_str().replace('_', "-") == s)
            .ok_or_else(|| format!("unknown baseline {s:?}; expected direct, rewrite or iter_rag"))
    }
}

/// Documents as shown to the generator: title, date and the leading words.
pub fn render_documents(docs: &[Document], max_words: usize) -> String {
    if docs.is_empty() {
        return "(no articles retrieved)".to_string();
    }
    docs.iter()
        .enumerate()
        .map(|(i, d)| {
            let date = d.published.map_or_else(|| "undated".to_string(), |p| p.to_string());
            let words: Vec<&str> = d.body.split_whitespace().take(max_words).collect();
            format!("[{}] {} ({date})\n{}", i + 1, d.title.trim(), words.join(" "))
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Parses the 2-3 rewritten queries, padding with the original query when the
/// reply yields fewer than two.
pub fn parse_rewrites(reply: &str, original: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    if let Some(items) = extract_json_array(reply).and_then(|v| v.as_array().cloned()) {
        for item in items {
            if let Some(q) = item.as_str().map(str::trim).filter(|q| !q.is_empty()) {
                if !out.iter().any(|o| o.eq_ignore_ascii_case(q)) {
                    out.push(q.to_string());
                }
            }
            if out.len() == 3 {
                break;
            }
        }
    }
    while out.len() < 2 {
        out.push(original.to_string());
    }
    out
}

/// First non-empty line of a refine reply, without quotes or a label.
pub fn parse_refined_query(reply: &str) -> Option<String> {
    let line = reply.lines().map(str::trim).find(|l| !l.is_empty())?;
    let line = line
        .strip_prefix("Query:")
        .or_else(|| line.strip_prefix("query:"))
        .unwrap_or(line);
    let q = line.trim().trim_matches(|c| c == '"' || c == '\'' || c == '`').trim();
    (!q.is_empty()).then(|| q.to_string())
}

struct Baseline<'a> {
    config: &'a EpisodeConfig,
    b: Backends<'a>,
    manifest: RunManifest,
    timeline: TimelineMemory,
    retrievals: usize,
}

impl<'a> Baseline<'a> {
    fn scraper(&self) -> EventScraper<'a> {
        EventScraper {
            search: self.b.search,
            gateway: self.b.gateway,
            profile: &self.b.models.scraper,
            chunk_size_words: self.config.chunk_size_words,
            parallelism: self.config.tuning.parallelism,
        }
    }

    fn retrieve(&mut self, round: usize, query: &str) -> Vec<Document> {
        let mut report = ScrapeReport {
            query: query.to_string(),
            k: self.config.top_k,
            ..ScrapeReport::default()
        };
        let docs = self.scraper().retrieve(query, self.config.top_k, &mut report);
        self.retrievals += 1;
        self.manifest.push(ManifestRecord::Retrieval {
            iteration: round,
            round: self.retrievals,
            report,
        });
        docs
    }

    fn complete(&mut self, round: usize, purpose: CallPurpose, prompt: String) -> Result<String, LlmError> {
        let reply = self
            .b
            .gateway
            .complete(purpose, &self.b.models.reasoner, &[Message::user(prompt)]);
        flush_calls(&mut self.manifest, self.b.gateway, round);
        Ok(reply?.text)
    }

    /// One generation over `docs`; an unparseable reply keeps the previous
    /// timeline.
    fn generate(&mut self, round: usize, docs: &[Document]) -> Result<bool, LlmError> {
        let current = if self.timeline.is_empty() {
            String::new()
        } else {
            format!("Current timeline:\n{}", self.timeline.to_canonical_text())
        };
        let prompt = GENERATE_TIMELINE
            .render(&[
                ("query", &self.config.query),
                ("timeline", &current),
                ("documents", &render_documents(docs, self.config.tuning.baseline_doc_words)),
            ])
            .expect("generate template placeholders");
        let reply = self.complete(round, CallPurpose::Generate, prompt)?;
        let Ok(sub) = parse_subtimeline(&reply) else {
            tracing::warn!(round, "generation produced no dated lines");
            return Ok(false);
        };
        let mut timeline = merge_deterministic(
            &TimelineMemory::default(),
            &sub,
            &GlobalEventMemory::default(),
            round as u64,
            self.config.tuning.sentence_dedup_threshold,
        );
        for entry in &mut timeline.entries {
            entry.support = docs
                .iter()
                .filter(|d| d.published == Some(entry.date))
                .map(|d| SourceRef::new(d.doc_id.clone(), 0))
                .collect();
        }
        timeline.revision = self.timeline.revision + 1;
        self.timeline = timeline;
        self.manifest.push(ManifestRecord::TimelineRevision {
            iteration: round,
            merge: None,
            timeline: self.timeline.clone(),
        });
        Ok(true)
    }

    fn finish_round(&mut self, round: usize, searches: usize, updated: bool) {
        self.manifest.push(ManifestRecord::Iteration {
            iteration: round,
            searches,
            updates: updated as usize,
            turns: 1,
            barren: !updated,
        });
    }

    fn direct(&mut self) -> Result<(), LlmError> {
        let docs = self.retrieve(1, &self.config.query.clone());
        let updated = self.generate(1, &docs)?;
        self.finish_round(1, 1, updated);
        Ok(())
    }

    fn rewrite(&mut self) -> Result<(), LlmError> {
        let prompt = REWRITE_QUERY
            .render(&[("query", &self.config.query)])
            .expect("rewrite template placeholders");
        let reply = self.complete(1, CallPurpose::Rewrite, prompt)?;
        let variants = parse_rewrites(&reply, &self.config.query);
        let mut seen = BTreeSet::new();
        let mut docs = Vec::new();
        for q in &variants {
            for d in self.retrieve(1, q) {
                if seen.insert(d.doc_id.clone()) {
                    docs.push(d);
                }
            }
        }
        let updated = self.generate(1, &docs)?;
        self.finish_round(1, variants.len(), updated);
        Ok(())
    }

    fn iter_rag(&mut self) -> Result<(), LlmError> {
        let mut query = self.config.query.clone();
        for round in 1..=ITER_RAG_ROUNDS {
            if round > 1 {
                let prompt = REFINE_QUERY
                    .render(&[
                        ("query", &self.config.query),
                        ("timeline", &self.timeline.to_canonical_text()),
                    ])
                    .expect("refine template placeholders");
                let reply = self.complete(round, CallPurpose::Refine, prompt)?;
                query = parse_refined_query(&reply).unwrap_or_else(|| self.config.query.clone());
            }
            let docs = self.retrieve(round, &query);
            let updated = self.generate(round, &docs)?;
            self.finish_round(round, 1, updated);
        }
        Ok(())
    }
}

/// Runs one baseline with the episode's retrieval depth (`top_k`), token
/// budget and reasoner profile.
pub fn run_baseline(
    kind: BaselineKind,
    config: &EpisodeConfig,
    backends: Backends<'_>,
) -> Result<EpisodeOutcome, ModelError> {
    config.validate()?;
    let mut run = Baseline {
        config,
        b: backends,
        manifest: RunManifest::default(),
        timeline: TimelineMemory::default(),
        retrievals: 0,
    };
    run.manifest.push(episode_record(kind.as_str(), config, &backends));
    let result = match kind {
        BaselineKind::Direct => run.direct(),
        BaselineKind::Rewrite => run.rewrite(),
        BaselineKind::IterRag => run.iter_rag(),
    };
    let last = run.manifest.iterations().last().copied().unwrap_or(0);
    let (reason, detail) = match result {
        Ok(()) => (TerminationReason::Completed, None),
        Err(e) => (TerminationReason::BudgetExceeded, Some(e.to_string())),
    };
    end_record(&mut run.manifest, backends.gateway, last, reason, detail);
    Ok(EpisodeOutcome {
        timeline: run.timeline,
        memory: GlobalEventMemory::default(),
        manifest: run.manifest,
        termination: reason,
    })
}
