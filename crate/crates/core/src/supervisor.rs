//! Deficiency analysis over the timeline and search-plan generation.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::date::{date_distance_days, CalendarDate};
use crate::evaluation::rouge::tokenize;
use crate::llm::{CallPurpose, Gateway, LlmError, Message, ModelProfile};
use crate::model::{
    Anchor, Deficiency, DeficiencyKind, EpisodeConfig, GlobalEventMemory, PlanItem, SearchPlan,
    TimelineMemory, Verdict,
};
use crate::prompt::{extract_json_array, PLAN};
use crate::text::description_similarity;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SupervisorThresholds {
    pub coverage_window_days: u64,
    pub coverage_similarity: f64,
    pub min_summary_tokens: usize,
    pub sparse_factor: f64,
    pub sparse_floor_days: u64,
}

impl Default for SupervisorThresholds {
    fn default() -> Self {
        Self {
            coverage_window_days: 3,
            coverage_similarity: 0.2,
            min_summary_tokens: 8,
            sparse_factor: 3.0,
            sparse_floor_days: 14,
        }
    }
}

fn max_similarity<'a>(description: &str, summaries: impl Iterator<Item = &'a str>) -> f64 {
    summaries
        .map(|s| description_similarity(description, s))
        .fold(0.0, f64::max)
}

/// Day gaps between consecutive entries.
fn gaps(timeline: &TimelineMemory) -> Vec<u64> {
    timeline
        .entries
        .windows(2)
        .map(|w| date_distance_days(&w[0].date, &w[1].date))
        .collect()
}

fn median(values: &[u64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid] as f64
    } else {
        (v[mid - 1] + v[mid]) as f64 / 2.0
    })
}

/// Gap statistics logged alongside each review.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityStats {
    pub entries: usize,
    pub median_gap_days: f64,
    pub min_gap_days: u64,
    pub max_gap_days: u64,
    /// Gaps shorter than a third of the median.
    pub clustered_gaps: usize,
}

pub fn density_stats(timeline: &TimelineMemory) -> Option<DensityStats> {
    let g = gaps(timeline);
    let med = median(&g)?;
    Some(DensityStats {
        entries: timeline.len(),
        median_gap_days: med,
        min_gap_days: *g.iter().min()?,
        max_gap_days: *g.iter().max()?,
        clustered_gaps: g.iter().filter(|&&d| (d as f64) < med / 3.0).count(),
    })
}

/// Coverage gaps first (in memory order), then thin entries, then sparse
/// stretches. Pure and deterministic.
pub fn analyze(
    timeline: &TimelineMemory,
    memory: &GlobalEventMemory,
    th: &SupervisorThresholds,
) -> Vec<Deficiency> {
    let mut out = Vec::new();
    let summaries = || timeline.entries.iter().map(|e| e.summary.as_str());

    for event in &memory.events {
        if event.date.is_day() {
            let near = timeline
                .entries
                .iter()
                .any(|e| date_distance_days(&e.date, &event.date) <= th.coverage_window_days);
            if !near && max_similarity(&event.description, summaries()) < th.coverage_similarity {
                out.push(Deficiency {
                    kind: DeficiencyKind::MissingEvent,
                    anchor: Some(Anchor::Date(event.date)),
                    note: event.description.clone(),
                });
            }
        } else {
            let (start, end) = event.date.interval();
            let refined = timeline.entries.iter().any(|e| {
                let d = e.date.midpoint();
                d >= start
                    && d <= end
                    && description_similarity(&event.description, &e.summary) >= th.coverage_similarity
            });
            if !refined {
                out.push(Deficiency {
                    kind: DeficiencyKind::CoarseTimestamp,
                    anchor: Some(Anchor::Date(event.date)),
                    note: event.description.clone(),
                });
            }
        }
    }

    for entry in &timeline.entries {
        if tokenize(&entry.summary).len() < th.min_summary_tokens {
            out.push(Deficiency {
                kind: DeficiencyKind::UnderSpecified,
                anchor: Some(Anchor::Date(entry.date)),
                note: entry.summary.clone(),
            });
        }
    }

    if timeline.len() >= 3 {
        let g = gaps(timeline);
        let med = median(&g).unwrap_or(0.0);
        let limit = (th.sparse_factor * med).max(th.sparse_floor_days as f64);
        for (i, &gap) in g.iter().enumerate() {
            if gap as f64 > limit {
                out.push(Deficiency {
                    kind: DeficiencyKind::SparseRegion,
                    anchor: Some(Anchor::Interval {
                        start: timeline.entries[i].date,
                        end: timeline.entries[i + 1].date,
                    }),
                    note: format!("{gap}-day gap"),
                });
            }
        }
    }
    out
}

fn anchor_date(d: &Deficiency) -> Option<CalendarDate> {
    match d.anchor {
        Some(Anchor::Date(date)) => Some(date),
        Some(Anchor::Interval { start, .. }) => Some(start),
        None => None,
    }
}

/// The template query used when the model's plan is unusable.
pub fn fallback_query(deficiency: &Deficiency, query: &str) -> String {
    let note = deficiency.note.trim().trim_end_matches(['.', '!', '?']);
    let q = match deficiency.kind {
        DeficiencyKind::MissingEvent => match anchor_date(deficiency) {
            Some(d) => format!("{query} {note} {}", d.year_value()),
            None => format!("{query} {note}"),
        },
        DeficiencyKind::CoarseTimestamp => format!("{note} exact date"),
        DeficiencyKind::UnderSpecified => match anchor_date(deficiency) {
            Some(d) => format!("{query} {d} details"),
            None => format!("{query} {note} details"),
        },
        DeficiencyKind::SparseRegion => match deficiency.anchor {
            Some(Anchor::Interval { start, end }) => format!("{query} events between {start} and {end}"),
            _ => format!("{query} events"),
        },
    };
    q.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn fallback_plan(deficiencies: &[Deficiency], query: &str) -> SearchPlan {
    if deficiencies.is_empty() {
        return SearchPlan::terminate();
    }
    SearchPlan {
        items: deficiencies
            .iter()
            .map(|d| PlanItem {
                deficiency: d.clone(),
                queries: vec![fallback_query(d, query)],
            })
            .collect(),
        verdict: Verdict::Continue,
    }
}

fn render_deficiency(i: usize, d: &Deficiency) -> String {
    let kind = match d.kind {
        DeficiencyKind::MissingEvent => "missing event",
        DeficiencyKind::CoarseTimestamp => "imprecise date",
        DeficiencyKind::UnderSpecified => "entry lacks detail",
        DeficiencyKind::SparseRegion => "sparse period",
    };
    let anchor = match d.anchor {
        Some(Anchor::Date(date)) => date.to_string(),
        Some(Anchor::Interval { start, end }) => format!("{start} to {end}"),
        None => "-".into(),
    };
    format!("{}. [{kind}] {anchor}: {}", i + 1, d.note)
}

/// Parses and validates a model plan: a JSON array of
/// `{"deficiency": n, "queries": [...]}` covering every deficiency number.
pub fn parse_plan(reply: &str, deficiencies: &[Deficiency]) -> Result<SearchPlan, String> {
    let value = extract_json_array(reply).ok_or("reply holds no JSON array")?;
    let mut per: Vec<Vec<String>> = vec![Vec::new(); deficiencies.len()];
    for item in value.as_array().into_iter().flatten() {
        let n = item
            .get("deficiency")
            .and_then(Value::as_u64)
            .ok_or("item without a deficiency number")? as usize;
        if n == 0 || n > deficiencies.len() {
            return Err(format!("deficiency number {n} out of range"));
        }
        let queries = item
            .get("queries")
            .and_then(Value::as_array)
            .ok_or("item without a queries array")?;
        for q in queries {
            let q = q.as_str().ok_or("query is not a string")?;
            let q = q.split_whitespace().collect::<Vec<_>>().join(" ");
            if !q.is_empty() && !per[n - 1].contains(&q) {
                per[n - 1].push(q);
            }
        }
    }
    if let Some(i) = per.iter().position(Vec::is_empty) {
        return Err(format!("deficiency {} has no query", i + 1));
    }
    Ok(SearchPlan {
        items: deficiencies
            .iter()
            .cloned()
            .zip(per)
            .map(|(deficiency, queries)| PlanItem { deficiency, queries })
            .collect(),
        verdict: Verdict::Continue,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanSource {
    /// No deficiencies; no model call made.
    Analyzer,
    Model,
    Fallback,
}

/// An empty analysis always terminates. Otherwise the model proposes queries
/// and the template fallback covers any failure other than budget exhaustion.
pub fn make_plan(
    deficiencies: &[Deficiency],
    query: &str,
    model: Option<(&Gateway, &ModelProfile)>,
) -> Result<(SearchPlan, PlanSource), LlmError> {
    if deficiencies.is_empty() {
        return Ok((SearchPlan::terminate(), PlanSource::Analyzer));
    }
    let Some((gateway, profile)) = model else {
        return Ok((fallback_plan(deficiencies, query), PlanSource::Fallback));
    };
    let listing = deficiencies
        .iter()
        .enumerate()
        .map(|(i, d)| render_deficiency(i, d))
        .collect::<Vec<_>>()
        .join("\n");
    let prompt = PLAN
        .render(&[("query", query), ("deficiencies", &listing)])
        .expect("plan template placeholders");
    match gateway.complete(CallPurpose::Plan, profile, &[Message::user(prompt)]) {
        Ok(reply) => match parse_plan(&reply.text, deficiencies) {
            Ok(plan) => Ok((plan, PlanSource::Model)),
            Err(reason) => {
                tracing::warn!(%reason, "plan rejected, using template queries");
                Ok((fallback_plan(deficiencies, query), PlanSource::Fallback))
            }
        },
        Err(e) if e.is_budget() => Err(e),
        Err(e) => {
            tracing::warn!(error = %e, "plan call failed, using template queries");
            Ok((fallback_plan(deficiencies, query), PlanSource::Fallback))
        }
    }
}

pub fn should_terminate(plan: &SearchPlan, iteration: usize, config: &EpisodeConfig) -> bool {
    plan.verdict == Verdict::Terminate || iteration >= config.max_iterations
}

/// Renders a plan for the next exploration prompt.
pub fn render_plan(plan: &SearchPlan) -> String {
    let mut seen = BTreeSet::new();
    plan.items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let queries: Vec<&str> = item
                .queries
                .iter()
                .map(String::as_str)
                .filter(|q| seen.insert(q.to_string()))
                .collect();
            format!(
                "{} Suggested searches: {}",
                render_deficiency(i, &item.deficiency),
                queries.join("; ")
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DatedEvent, TimelineEntry};

    fn day(s: &str) -> CalendarDate {
        s.parse().unwrap()
    }

    fn entry(date: CalendarDate, summary: &str) -> TimelineEntry {
        TimelineEntry::new(date, summary).unwrap()
    }

    const LONG: &str = "Apple held a large product event with several new launches announced.";

    fn timeline(days: &[i64]) -> TimelineMemory {
        let base = day("2020-01-01");
        TimelineMemory {
            entries: days
                .iter()
                .map(|&d| entry(base.shifted_days(d).unwrap(), LONG))
                .collect(),
            revision: 0,
        }
    }

    fn memory(events: &[(&str, &str)]) -> GlobalEventMemory {
        GlobalEventMemory {
            events: events
                .iter()
                .map(|(d, text)| DatedEvent::new(day(d), text, vec![], vec![]).unwrap())
                .collect(),
            revision: 0,
        }
    }

    #[test]
    fn empty_timeline_reports_missing_events() {
        let xi = memory(&[("2001-10-23", "Introduction of the iPod"), ("2007-01-09", "iPhone unveiled")]);
        let d = analyze(&TimelineMemory::default(), &xi, &SupervisorThresholds::default());
        assert_eq!(d.len(), 2);
        assert!(d.iter().all(|x| x.kind == DeficiencyKind::MissingEvent));
    }

    #[test]
    fn sparse_gap_example() {
        let d = analyze(&timeline(&[0, 10, 20, 120]), &GlobalEventMemory::default(), &SupervisorThresholds::default());
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].kind, DeficiencyKind::SparseRegion);
        assert_eq!(
            d[0].anchor,
            Some(Anchor::Interval {
                start: day("2020-01-21"),
                end: day("2020-04-30")
            })
        );
    }

    #[test]
    fn clean_timeline_has_no_deficiencies() {
        let t = timeline(&[0, 10, 20, 30]);
        let xi = memory(&[("2020-01-02", "unrelated words entirely"), ("2020-01-30", "other")]);
        assert!(analyze(&t, &xi, &SupervisorThresholds::default()).is_empty());
    }

    #[test]
    fn relief_removes_missing_event() {
        let th = SupervisorThresholds::default();
        let xi = memory(&[("2022-03-08", "Apple unveils the Mac Studio desktop")]);
        let mut t = timeline(&[0, 10, 20]);
        let before = analyze(&t, &xi, &th);
        assert_eq!(before.iter().filter(|d| d.kind == DeficiencyKind::MissingEvent).count(), 1);
        t.entries.push(entry(day("2022-03-09"), "Apple unveils the Mac Studio desktop with the M1 Ultra chip at its event."));
        let after = analyze(&t, &xi, &th);
        assert!(after.iter().all(|d| d.kind != DeficiencyKind::MissingEvent));
    }

    #[test]
    fn order_is_missing_then_thin_then_sparse() {
        let mut t = timeline(&[0, 10, 20, 200]);
        t.entries[0].summary = "short".into();
        let xi = memory(&[("2019-01-01", "zebra migration")]);
        let kinds: Vec<_> = analyze(&t, &xi, &SupervisorThresholds::default()).iter().map(|d| d.kind).collect();
        assert_eq!(
            kinds,
            [DeficiencyKind::MissingEvent, DeficiencyKind::UnderSpecified, DeficiencyKind::SparseRegion]
        );
    }

    #[test]
    fn coarse_events_flagged_until_refined() {
        let th = SupervisorThresholds::default();
        let xi = memory(&[("2023-06", "Mac Studio M2 Ultra announcement")]);
        let mut t = TimelineMemory::default();
        assert_eq!(analyze(&t, &xi, &th)[0].kind, DeficiencyKind::CoarseTimestamp);
        t.entries.push(entry(day("2023-06-05"), "Apple announces the Mac Studio with M2 Ultra at WWDC in California."));
        assert!(analyze(&t, &xi, &th).is_empty());
    }

    #[test]
    fn every_kind_has_a_template() {
        let q = "apple";
        let cases = [
            (DeficiencyKind::MissingEvent, Some(Anchor::Date(day("2001-10-23"))), "Introduction of the iPod.", "apple Introduction of the iPod 2001"),
            (DeficiencyKind::CoarseTimestamp, Some(Anchor::Date(day("2023-06"))), "Mac Studio M2 Ultra announcement", "Mac Studio M2 Ultra announcement exact date"),
            (DeficiencyKind::UnderSpecified, Some(Anchor::Date(day("2022-03-08"))), "Mac Studio.", "apple 2022-03-08 details"),
            (
                DeficiencyKind::SparseRegion,
                Some(Anchor::Interval { start: day("2020-01-21"), end: day("2020-04-30") }),
                "100-day gap",
                "apple events between 2020-01-21 and 2020-04-30",
            ),
        ];
        for (kind, anchor, note, expected) in cases {
            let d = Deficiency { kind, anchor, note: note.into() };
            assert_eq!(fallback_query(&d, q), expected);
        }
    }

    #[test]
    fn empty_analysis_terminates_without_model() {
        let (plan, source) = make_plan(&[], "q", None).unwrap();
        assert_eq!(plan, SearchPlan::terminate());
        assert_eq!(source, PlanSource::Analyzer);
    }

    #[test]
    fn plan_validator() {
        let defs: Vec<Deficiency> = (0..3)
            .map(|i| Deficiency {
                kind: DeficiencyKind::UnderSpecified,
                anchor: None,
                note: format!("n{i}"),
            })
            .collect();
        let good = r#"[{"deficiency":1,"queries":["a"]},{"deficiency":2,"queries":["b","c"]},{"deficiency":3,"queries":["d"]}]"#;
        let plan = parse_plan(good, &defs).unwrap();
        assert_eq!(plan.queries().count(), 4);
        assert!(parse_plan(r#"[{"deficiency":1,"queries":["a"]}]"#, &defs).is_err());
        assert!(parse_plan(r#"[{"deficiency":4,"queries":["a"]}]"#, &defs).is_err());
        assert!(parse_plan("no json", &defs).is_err());
    }

    #[test]
    fn terminate_rule() {
        let cfg = EpisodeConfig { max_iterations: 2, ..EpisodeConfig::new("q") };
        let cont = SearchPlan { items: vec![], verdict: Verdict::Continue };
        assert!(!should_terminate(&cont, 1, &cfg));
        assert!(should_terminate(&cont, 2, &cfg));
        assert!(should_terminate(&SearchPlan::terminate(), 1, &cfg));
    }
}
