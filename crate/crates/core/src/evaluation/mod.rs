//! Timeline evaluation: ROUGE-based Concat/Agree/Align F1, Date F1 and the
//! exact assignment solver behind alignment.

pub mod assignment;
pub mod metrics;
pub mod reference;
pub mod rouge;

use std::cmp::Reverse;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::TimelineMemory;

pub use assignment::{max_weight_assignment, Matching};
pub use metrics::{agree_f1, align_f1, concat_f1, date_f1, EvalTimeline};
pub use reference::{load_references, ReferenceFile, ReferenceTimeline};
pub use rouge::{rouge_f1, tokenize};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no reference timelines supplied")]
    NoReferences,
    #[error("invalid reference timeline: {0}")]
    Reference(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricValues {
    pub concat_r1: f64,
    pub concat_r2: f64,
    pub agree_r1: f64,
    pub agree_r2: f64,
    pub align_r1: f64,
    pub align_r2: f64,
    pub date_f1: f64,
}

impl MetricValues {
    pub fn compute(pred: &EvalTimeline, reference: &EvalTimeline) -> Self {
        Self {
            concat_r1: concat_f1(pred, reference, 1),
            concat_r2: concat_f1(pred, reference, 2),
            agree_r1: agree_f1(pred, reference, 1),
            agree_r2: agree_f1(pred, reference, 2),
            align_r1: align_f1(pred, reference, 1),
            align_r2: align_f1(pred, reference, 2),
            date_f1: date_f1(pred, reference),
        }
    }

    pub fn as_array(&self) -> [f64; 7] {
        [
            self.concat_r1,
            self.concat_r2,
            self.agree_r1,
            self.agree_r2,
            self.align_r1,
            self.align_r2,
            self.date_f1,
        ]
    }

    pub const NAMES: [&'static str; 7] = [
        "concat_r1", "concat_r2", "agree_r1", "agree_r2", "align_r1", "align_r2", "date_f1",
    ];

    fn mean(values: &[MetricValues]) -> Self {
        let n = values.len() as f64;
        let sum = |f: fn(&MetricValues) -> f64| values.iter().map(f).sum::<f64>() / n;
        Self {
            concat_r1: sum(|v| v.concat_r1),
            concat_r2: sum(|v| v.concat_r2),
            agree_r1: sum(|v| v.agree_r1),
            agree_r2: sum(|v| v.agree_r2),
            align_r1: sum(|v| v.align_r1),
            align_r2: sum(|v| v.align_r2),
            date_f1: sum(|v| v.date_f1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(flatten)]
    pub mean: MetricValues,
    pub reference_count: usize,
    pub truncated: bool,
    pub per_reference: Vec<MetricValues>,
}

impl MetricReport {
    /// Aligned plain-text table: one row per reference plus the mean.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<10}", "reference");
        for name in MetricValues::NAMES {
            out.push_str(&format!(" {name:>9}"));
        }
        out.push('\n');
        let row = |label: String, v: &MetricValues| {
            let mut line = format!("{label:<10}");
            for x in v.as_array() {
                line.push_str(&format!(" {x:>9.4}"));
            }
            line.push('\n');
            line
        };
        for (i, v) in self.per_reference.iter().enumerate() {
            out.push_str(&row(format!("#{}", i + 1), v));
        }
        out.push_str(&row("mean".into(), &self.mean));
        out
    }
}

/// Keeps the `len` most salient entries (earlier date on ties), in date order.
pub fn truncate_by_salience(pred: &TimelineMemory, len: usize) -> TimelineMemory {
    let mut ranked: Vec<_> = pred.entries.iter().collect();
    ranked.sort_by_key(|e| (Reverse(e.salience()), e.date));
    let mut kept: Vec<_> = ranked.into_iter().take(len).cloned().collect();
    kept.sort_by_key(|e| e.date);
    TimelineMemory {
        entries: kept,
        revision: pred.revision,
    }
}

pub fn evaluate(
    pred: &TimelineMemory,
    refs: &[ReferenceTimeline],
    truncate_to_ref_length: bool,
) -> Result<MetricReport, EvalError> {
    if refs.is_empty() {
        return Err(EvalError::NoReferences);
    }
    let per_reference: Vec<MetricValues> = refs
        .iter()
        .map(|r| {
            let p = if truncate_to_ref_length {
                EvalTimeline::from_memory(&truncate_by_salience(pred, r.date_count()))
            } else {
                EvalTimeline::from_memory(pred)
            };
            MetricValues::compute(&p, &EvalTimeline::from_reference(r))
        })
        .collect();
    Ok(MetricReport {
        mean: MetricValues::mean(&per_reference),
        reference_count: refs.len(),
        truncated: truncate_to_ref_length,
        per_reference,
    })
}
