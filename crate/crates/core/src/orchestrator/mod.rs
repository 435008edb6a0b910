//! The exploration loop: initial global cognition, then iterations in which
//! the reasoner searches and updates the timeline, each closed by a
//! supervisor review that either plans the next round or stops.

pub mod action;
pub mod manifest;

use crate::cognition::{CognitionError, GlobalCognition};
use crate::llm::{CallPurpose, Gateway, LlmError, Message, ModelProfile, ModelProfiles};
use crate::model::{EpisodeConfig, EventMetadata, GlobalEventMemory, ModelError, SearchPlan, TimelineMemory};
use crate::prompt::{self, EXPLORE};
use crate::retrieval::SearchBackend;
use crate::scraper::EventScraper;
use crate::supervisor::{analyze, density_stats, make_plan, render_plan, should_terminate};
use crate::updater::{parse_subtimeline, TimelineUpdater, UpdateError, UpdaterMode};

pub use action::{
    detect_action, AgentAction, MalformedAction, BEGIN_RESULT, BEGIN_SEARCH, BEGIN_UPDATE, END_RESULT, END_SEARCH,
    END_UPDATE, STOP_MARKERS,
};
pub use manifest::{ActionKind, ManifestError, ManifestRecord, RunManifest, TerminationReason};

pub const METHOD: &str = "timeline_reasoner";

const PROTOCOL_REMINDER: &str = "Your last reply could not be read. Either write \
<|begin_search_query|>query<|end_search_query|>, or write <|begin_update_timeline|> with \
one \"YYYY-MM-DD: summary\" line per event followed by <|end_update_timeline|>, or end \
your reply without any marker when the timeline is complete.";

const UPDATE_REJECTED: &str = "The timeline update contained no line of the form \
\"YYYY-MM-DD: summary\" and was ignored.";

const SEARCH_LIMIT: &str = "search limit reached";

/// The external services an episode talks to.
#[derive(Clone, Copy)]
pub struct Backends<'a> {
    pub search: &'a dyn SearchBackend,
    pub gateway: &'a Gateway,
    pub models: &'a ModelProfiles,
}

#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub timeline: TimelineMemory,
    pub memory: GlobalEventMemory,
    pub manifest: RunManifest,
    pub termination: TerminationReason,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IterationStats {
    pub searches: usize,
    pub updates: usize,
    pub turns: usize,
}

/// Maximum model turns in one iteration.
pub fn turn_cap(max_searches: usize) -> usize {
    2 * max_searches + 4
}

/// The updater mode an episode will use on this gateway.
pub fn resolve_updater_mode(config: &EpisodeConfig, gateway: &Gateway) -> UpdaterMode {
    config.tuning.updater_mode.unwrap_or(if gateway.is_sequential() {
        UpdaterMode::Deterministic
    } else {
        UpdaterMode::Assisted
    })
}

pub(crate) fn episode_record(method: &str, config: &EpisodeConfig, b: &Backends<'_>) -> ManifestRecord {
    ManifestRecord::Episode {
        method: method.to_string(),
        config: config.clone(),
        prompt_versions: prompt::versions(),
        llm_backend: b.gateway.backend_label(),
        search_backend: b.search.name().to_string(),
        models: b.models.clone(),
        started_at: manifest::now_rfc3339(),
    }
}

/// Moves the gateway's pending call log into the manifest.
pub(crate) fn flush_calls(manifest: &mut RunManifest, gateway: &Gateway, iteration: usize) {
    for call in gateway.drain_call_log() {
        manifest.push(ManifestRecord::Call { iteration, call });
    }
}

pub(crate) fn end_record(
    manifest: &mut RunManifest,
    gateway: &Gateway,
    iteration: usize,
    reason: TerminationReason,
    detail: Option<String>,
) {
    flush_calls(manifest, gateway, iteration);
    let iterations = manifest.iterations().len();
    manifest.push(ManifestRecord::End {
        termination_reason: reason,
        detail,
        usage: gateway.usage(),
        iterations,
        finished_at: manifest::now_rfc3339(),
    });
}

/// Search results as shown to the reasoner.
pub fn render_injection(metadata: &EventMetadata) -> String {
    let body = if metadata.events.is_empty() {
        "No dated events found.".to_string()
    } else {
        metadata
            .events
            .iter()
            .map(|e| format!("{}: {}", e.date, e.description))
            .collect::<Vec<_>>()
            .join("\n")
    };
    format!("{BEGIN_RESULT}\n{body}\n{END_RESULT}")
}

fn render_or_none(text: String) -> String {
    if text.trim().is_empty() {
        "(none)".to_string()
    } else {
        text
    }
}

struct Episode<'a> {
    config: &'a EpisodeConfig,
    b: Backends<'a>,
    aux: &'a ModelProfile,
    mode: UpdaterMode,
    manifest: RunManifest,
    memory: GlobalEventMemory,
    timeline: TimelineMemory,
    plan: Option<SearchPlan>,
}

impl<'a> Episode<'a> {
    fn scraper(&self) -> EventScraper<'a> {
        EventScraper {
            search: self.b.search,
            gateway: self.b.gateway,
            profile: &self.b.models.scraper,
            chunk_size_words: self.config.chunk_size_words,
            parallelism: self.config.tuning.parallelism,
        }
    }

    fn cognition(&self) -> GlobalCognition<'a> {
        GlobalCognition {
            query: &self.config.query,
            fusion_threshold: self.config.tuning.fusion_threshold,
            synthesizer: self.config.tuning.synthesize_memory.then_some((self.b.gateway, self.aux)),
        }
    }

    fn updater(&self) -> TimelineUpdater<'a> {
        TimelineUpdater {
            mode: self.mode,
            dedup_threshold: self.config.tuning.sentence_dedup_threshold,
            no_loss_floor: self.config.tuning.no_loss_floor,
            model: Some((self.b.gateway, self.aux)),
        }
    }

    fn flush(&mut self, iteration: usize) {
        flush_calls(&mut self.manifest, self.b.gateway, iteration);
    }

    fn action(&mut self, iteration: usize, turn: usize, kind: ActionKind, payload: &str, detail: Option<String>) {
        self.manifest.push(ManifestRecord::Action {
            iteration,
            turn,
            kind,
            payload: payload.to_string(),
            detail,
        });
    }

    fn explore_prompt(&self) -> String {
        EXPLORE
            .render(&[
                ("query", &self.config.query),
                ("max_searches", &self.config.max_searches_per_iteration.to_string()),
                ("memory", &render_or_none(self.memory.render_lines())),
                ("timeline", &render_or_none(self.timeline.to_canonical_text())),
                ("plan", &render_or_none(self.plan.as_ref().map(render_plan).unwrap_or_default())),
            ])
            .expect("explore template placeholders")
    }

    fn search(&mut self, k: usize, turn: usize, query: &str) -> Result<String, LlmError> {
        let scraped = self.scraper().scrape(query, self.config.n_exp);
        self.flush(k);
        let (metadata, report) = scraped?;
        let round = self.manifest.retrievals().count();
        self.manifest.push(ManifestRecord::Retrieval {
            iteration: k,
            round,
            report,
        });
        let updated = self.cognition().update_memory(&self.memory, &metadata);
        self.flush(k);
        let (memory, synthesis) = updated?;
        self.memory = memory;
        self.manifest.push(ManifestRecord::MemoryRevision {
            iteration: k,
            synthesis,
            memory: self.memory.clone(),
        });
        let injection = render_injection(&metadata);
        self.manifest.push(ManifestRecord::Injection {
            iteration: k,
            turn,
            text: injection.clone(),
        });
        Ok(injection)
    }

    /// Folds an update body into the timeline. Returns the reply shown to the
    /// reasoner and whether the timeline changed.
    fn update(&mut self, k: usize, body: &str) -> Result<(String, bool), LlmError> {
        let sub = match parse_subtimeline(body) {
            Ok(sub) => sub,
            Err(e) => return Ok((format!("{UPDATE_REJECTED} ({e})"), false)),
        };
        let merged = self
            .updater()
            .merge(&self.config.query, &self.timeline, &sub, &self.memory, k as u64);
        self.flush(k);
        let (timeline, report) = match merged {
            Ok(r) => r,
            Err(UpdateError::Llm(e)) => return Err(e),
            Err(e) => return Ok((format!("{UPDATE_REJECTED} ({e})"), false)),
        };
        self.timeline = timeline;
        self.manifest.push(ManifestRecord::TimelineRevision {
            iteration: k,
            merge: Some(report),
            timeline: self.timeline.clone(),
        });
        Ok((
            format!("Timeline updated; it now has {} dated entries.", self.timeline.len()),
            true,
        ))
    }

    fn run_iteration(&mut self, k: usize) -> Result<IterationStats, LlmError> {
        let max_searches = self.config.max_searches_per_iteration;
        let mut messages = vec![Message::user(self.explore_prompt())];
        let mut stats = IterationStats::default();
        let mut reprompted = false;
        loop {
            if stats.turns >= turn_cap(max_searches) {
                self.action(k, stats.turns, ActionKind::ForcedFinish, "", Some("turn limit reached".into()));
                break;
            }
            stats.turns += 1;
            let turn = stats.turns;
            let streamed =
                self.b
                    .gateway
                    .stream_until_marker(CallPurpose::Explore, &self.b.models.reasoner, &messages, &STOP_MARKERS);
            self.flush(k);
            let outcome = match streamed {
                Ok(o) => o,
                Err(e) if e.is_budget() => return Err(e),
                Err(e) => {
                    self.action(k, turn, ActionKind::ForcedFinish, "", Some(e.to_string()));
                    break;
                }
            };
            messages.push(Message::assistant(outcome.text.clone()));
            match detect_action(&outcome.text) {
                Ok(AgentAction::Finish) => {
                    self.action(k, turn, ActionKind::Finish, "", None);
                    break;
                }
                Err(MalformedAction(detail)) => {
                    self.action(k, turn, ActionKind::Malformed, &outcome.text, Some(detail));
                    if reprompted {
                        self.action(k, turn, ActionKind::ForcedFinish, "", Some("repeated malformed output".into()));
                        break;
                    }
                    reprompted = true;
                    messages.push(Message::user(PROTOCOL_REMINDER));
                }
                Ok(AgentAction::Search(query)) => {
                    if stats.searches >= max_searches {
                        self.action(k, turn, ActionKind::SearchRefused, &query, Some(SEARCH_LIMIT.into()));
                        break;
                    }
                    stats.searches += 1;
                    self.action(k, turn, ActionKind::Search, &query, None);
                    let injection = self.search(k, turn, &query)?;
                    messages.push(Message::user(injection));
                }
                Ok(AgentAction::UpdateTimeline(body)) => {
                    self.action(k, turn, ActionKind::UpdateTimeline, &body, None);
                    let (reply, changed) = self.update(k, &body)?;
                    if changed {
                        stats.updates += 1;
                    } else {
                        self.action(k, turn, ActionKind::UpdateRejected, "", Some(reply.clone()));
                    }
                    messages.push(Message::user(reply));
                }
            }
        }
        Ok(stats)
    }

    /// Global cognition; `Some` carries the reason the episode cannot go on.
    fn initialise(&mut self) -> Option<(TerminationReason, Option<String>)> {
        let scraped = self.scraper().scrape(&self.config.query, self.config.n_init);
        self.flush(0);
        let (metadata, report) = match scraped {
            Ok(r) => r,
            Err(e) => return Some((TerminationReason::BudgetExceeded, Some(e.to_string()))),
        };
        self.manifest.push(ManifestRecord::Retrieval {
            iteration: 0,
            round: 0,
            report,
        });
        let init = self.cognition().init_from_metadata(&metadata);
        self.flush(0);
        match init {
            Ok((memory, synthesis)) => {
                self.memory = memory;
                self.manifest.push(ManifestRecord::MemoryRevision {
                    iteration: 0,
                    synthesis,
                    memory: self.memory.clone(),
                });
                self.manifest.push(ManifestRecord::TimelineRevision {
                    iteration: 0,
                    merge: None,
                    timeline: self.timeline.clone(),
                });
                None
            }
            Err(CognitionError::EmptyCognition) => Some((TerminationReason::EmptyCognition, None)),
            Err(CognitionError::Llm(e)) => Some((TerminationReason::BudgetExceeded, Some(e.to_string()))),
        }
    }

    fn run(mut self) -> EpisodeOutcome {
        self.manifest.push(episode_record(METHOD, self.config, &self.b));
        let mut last = 0;
        let (reason, detail) = match self.initialise() {
            Some(stop) => stop,
            None => self.iterate(&mut last),
        };
        end_record(&mut self.manifest, self.b.gateway, last, reason, detail);
        EpisodeOutcome {
            timeline: self.timeline,
            memory: self.memory,
            manifest: self.manifest,
            termination: reason,
        }
    }

    fn iterate(&mut self, last: &mut usize) -> (TerminationReason, Option<String>) {
        let budget = |e: LlmError| (TerminationReason::BudgetExceeded, Some(e.to_string()));
        for k in 1..=self.config.max_iterations {
            *last = k;
            let stats = match self.run_iteration(k) {
                Ok(s) => s,
                Err(e) => return budget(e),
            };
            let deficiencies = analyze(&self.timeline, &self.memory, &self.config.tuning.supervisor);
            self.manifest.push(ManifestRecord::Deficiencies {
                iteration: k,
                items: deficiencies.clone(),
                density: density_stats(&self.timeline),
            });
            let planned = make_plan(&deficiencies, &self.config.query, Some((self.b.gateway, self.aux)));
            self.flush(k);
            let (plan, source) = match planned {
                Ok(p) => p,
                Err(e) => return budget(e),
            };
            self.manifest.push(ManifestRecord::Plan {
                iteration: k,
                source,
                plan: plan.clone(),
            });
            self.manifest.push(ManifestRecord::Iteration {
                iteration: k,
                searches: stats.searches,
                updates: stats.updates,
                turns: stats.turns,
                barren: stats.updates == 0,
            });
            let stop = should_terminate(&plan, k, self.config);
            let verdict_stop = plan.verdict == crate::model::Verdict::Terminate;
            self.plan = Some(plan);
            if stop {
                let reason = if verdict_stop {
                    TerminationReason::SupervisorTerminate
                } else {
                    TerminationReason::MaxIterations
                };
                return (reason, None);
            }
        }
        (TerminationReason::MaxIterations, None)
    }
}

/// Runs one full episode. Budget exhaustion and an empty initial scrape end
/// the episode early with a valid manifest; only an invalid configuration is
/// an error.
pub fn run_episode(config: &EpisodeConfig, backends: Backends<'_>) -> Result<EpisodeOutcome, ModelError> {
    config.validate()?;
    let episode = Episode {
        config,
        b: backends,
        aux: backends.models.for_role(config.tuning.auxiliary_role),
        mode: resolve_updater_mode(config, backends.gateway),
        manifest: RunManifest::default(),
        memory: GlobalEventMemory::default(),
        timeline: TimelineMemory::default(),
        plan: None,
    };
    Ok(episode.run())
}
