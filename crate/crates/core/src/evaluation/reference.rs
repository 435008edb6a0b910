use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::date::CalendarDate;

/// Ground-truth timeline: sentences per day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTimeline {
    pub query: String,
    pub entries: BTreeMap<CalendarDate, Vec<String>>,
}

impl ReferenceTimeline {
    pub fn date_count(&self) -> usize {
        self.entries.len()
    }
}

/// On-disk form: one query with one or more timelines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFile {
    pub query: String,
    pub timelines: Vec<BTreeMap<String, Vec<String>>>,
}

impl ReferenceFile {
    pub fn into_timelines(self) -> Result<Vec<ReferenceTimeline>, EvalError> {
        self.timelines
            .into_iter()
            .enumerate()
            .map(|(i, raw)| {
                let mut entries = BTreeMap::new();
                for (date_text, sentences) in raw {
                    let date: CalendarDate = date_text
                        .parse()
                        .map_err(|e| EvalError::Reference(format!("timeline {}: {e}", i + 1)))?;
                    if !date.is_day() {
                        return Err(EvalError::Reference(format!(
                            "timeline {}: date {date} is not a single day",
                            i + 1
                        )));
                    }
                    let sentences: Vec<String> = sentences
                        .into_iter()
                        .map(|s| s.trim().to_string())
                        .filter(|s| !s.is_empty())
                        .collect();
                    if sentences.is_empty() {
                        return Err(EvalError::Reference(format!(
                            "timeline {}: date {date} has no sentences",
                            i + 1
                        )));
                    }
                    entries.insert(date, sentences);
                }
                Ok(ReferenceTimeline {
                    query: self.query.clone(),
                    entries,
                })
            })
            .collect()
    }
}

pub fn load_references(path: &Path) -> Result<Vec<ReferenceTimeline>, EvalError> {
    let text = std::fs::read_to_string(path)?;
    let file: ReferenceFile =
        serde_json::from_str(&text).map_err(|e| EvalError::Reference(format!("{}: {e}", path.display())))?;
    file.into_timelines()
}
