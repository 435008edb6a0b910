//! Timeline-level ROUGE variants and date F1.

use std::collections::{BTreeMap, BTreeSet};

use crate::date::{date_distance_days, CalendarDate};
use crate::model::TimelineMemory;

use super::assignment::max_weight_assignment_with_tiebreak;
use super::reference::ReferenceTimeline;
use super::rouge::{clipped_overlap, f1_from_counts, ngram_counts, ngram_total, rouge_f1, tokenize, NgramCounts};

/// A timeline reduced to what the metrics need: one text per date, sorted.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalTimeline {
    pub entries: Vec<(CalendarDate, String)>,
}

impl EvalTimeline {
    /// Sorts by date and joins texts that share a date.
    pub fn new(entries: impl IntoIterator<Item = (CalendarDate, String)>) -> Self {
        let mut by_date: BTreeMap<CalendarDate, Vec<String>> = BTreeMap::new();
        for (date, text) in entries {
            by_date.entry(date).or_default().push(text);
        }
        Self {
            entries: by_date.into_iter().map(|(d, t)| (d, t.join(" "))).collect(),
        }
    }

    pub fn from_memory(t: &TimelineMemory) -> Self {
        Self::new(t.entries.iter().map(|e| (e.date, e.summary.clone())))
    }

    pub fn from_reference(r: &ReferenceTimeline) -> Self {
        Self::new(r.entries.iter().map(|(d, s)| (*d, s.join(" "))))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn dates(&self) -> BTreeSet<CalendarDate> {
        self.entries.iter().map(|(d, _)| *d).collect()
    }
}

struct Side {
    dates: Vec<CalendarDate>,
    counts: Vec<NgramCounts>,
    total: usize,
}

fn side(t: &EvalTimeline, n: usize) -> Side {
    let tokens: Vec<Vec<String>> = t.entries.iter().map(|(_, s)| tokenize(s)).collect();
    Side {
        dates: t.entries.iter().map(|(d, _)| *d).collect(),
        counts: tokens.iter().map(|tk| ngram_counts(tk, n)).collect(),
        total: tokens.iter().map(|tk| ngram_total(tk, n)).sum(),
    }
}

/// ROUGE-N F1 of all summaries concatenated in date order.
pub fn concat_f1(pred: &EvalTimeline, reference: &EvalTimeline, n: usize) -> f64 {
    let join = |t: &EvalTimeline| {
        t.entries
            .iter()
            .flat_map(|(_, s)| tokenize(s))
            .collect::<Vec<_>>()
    };
    rouge_f1(&join(pred), &join(reference), n)
}

/// Overlap counted only between same-date summaries; denominators cover every
/// date on each side.
pub fn agree_f1(pred: &EvalTimeline, reference: &EvalTimeline, n: usize) -> f64 {
    let p = side(pred, n);
    let r = side(reference, n);
    let ref_index: BTreeMap<CalendarDate, usize> = r.dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();
    let overlap: usize = p
        .dates
        .iter()
        .enumerate()
        .filter_map(|(i, d)| ref_index.get(d).map(|&j| clipped_overlap(&p.counts[i], &r.counts[j])))
        .sum();
    f1_from_counts(overlap as f64, p.total as f64, r.total as f64)
}

fn date_weight(a: &CalendarDate, b: &CalendarDate) -> f64 {
    1.0 / (1.0 + date_distance_days(a, b) as f64)
}

/// Summaries are paired one-to-one to maximise the date-discounted n-gram
/// overlap Σ overlap(p, r) / (1 + Δdays); that maximum is the shared
/// numerator of precision and recall.
pub fn align_f1(pred: &EvalTimeline, reference: &EvalTimeline, n: usize) -> f64 {
    let p = side(pred, n);
    let r = side(reference, n);
    if p.total == 0 || r.total == 0 {
        return 0.0;
    }
    let mut weights = vec![vec![0.0; r.dates.len()]; p.dates.len()];
    let mut distance = vec![vec![0.0; r.dates.len()]; p.dates.len()];
    for i in 0..p.dates.len() {
        for j in 0..r.dates.len() {
            let overlap = clipped_overlap(&p.counts[i], &r.counts[j]) as f64;
            weights[i][j] = date_weight(&p.dates[i], &r.dates[j]) * overlap;
            distance[i][j] = date_distance_days(&p.dates[i], &r.dates[j]) as f64;
        }
    }
    let matching = max_weight_assignment_with_tiebreak(&weights, Some(&distance));
    f1_from_counts(matching.total, p.total as f64, r.total as f64)
}

/// Set F1 over the distinct dates of each side.
pub fn date_f1(pred: &EvalTimeline, reference: &EvalTimeline) -> f64 {
    let p = pred.dates();
    let r = reference.dates();
    let shared = p.intersection(&r).count();
    f1_from_counts(shared as f64, p.len() as f64, r.len() as f64)
}
