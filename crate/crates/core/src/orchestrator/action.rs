use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BEGIN_SEARCH: &str = "<|begin_search_query|>";
pub const END_SEARCH: &str = "<|end_search_query|>";
pub const BEGIN_UPDATE: &str = "<|begin_update_timeline|>";
pub const END_UPDATE: &str = "<|end_update_timeline|>";
pub const BEGIN_RESULT: &str = "<|begin_search_result|>";
pub const END_RESULT: &str = "<|end_search_result|>";

/// Markers that end a streamed exploration turn.
pub const STOP_MARKERS: [&str; 2] = [END_SEARCH, END_UPDATE];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", content = "payload", rename_all = "snake_case")]
pub enum AgentAction {
    Search(String),
    UpdateTimeline(String),
    Finish,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed action: {0}")]
pub struct MalformedAction(pub String);

fn last_pair<'a>(text: &'a str, begin: &str, end: &str) -> Option<Result<&'a str, MalformedAction>> {
    let end_at = text.rfind(end)?;
    let head = &text[..end_at];
    Some(match head.rfind(begin) {
        Some(b) => Ok(&head[b + begin.len()..]),
        None => Err(MalformedAction(format!("{end} without {begin}"))),
    })
}

/// Reads the action a turn ended with. A turn cut at an end marker yields the
/// payload of the latest begin/end pair; a turn that ran to its natural end
/// is a finish unless it left a begin marker open.
pub fn detect_action(text: &str) -> Result<AgentAction, MalformedAction> {
    let ends = [(END_SEARCH, text.rfind(END_SEARCH)), (END_UPDATE, text.rfind(END_UPDATE))];
    let latest = ends
        .iter()
        .filter_map(|(m, pos)| pos.map(|p| (p, *m)))
        .max_by_key(|(p, _)| *p);

    if let Some((end_pos, marker)) = latest {
        let tail = &text[end_pos + marker.len()..];
        let reopened = [BEGIN_SEARCH, BEGIN_UPDATE].iter().any(|b| tail.contains(b));
        if tail.trim().is_empty() || !reopened {
            if marker == END_SEARCH {
                let payload = last_pair(text, BEGIN_SEARCH, END_SEARCH).expect("end marker present")?;
                let query = payload.split_whitespace().collect::<Vec<_>>().join(" ");
                if query.is_empty() {
                    return Err(MalformedAction("empty search query".into()));
                }
                if tail.trim().is_empty() {
                    return Ok(AgentAction::Search(query));
                }
            } else {
                let body = last_pair(text, BEGIN_UPDATE, END_UPDATE).expect("end marker present")?;
                if tail.trim().is_empty() {
                    return Ok(AgentAction::UpdateTimeline(body.trim().to_string()));
                }
            }
        }
    }

    let last_begin = [BEGIN_SEARCH, BEGIN_UPDATE]
        .iter()
        .filter_map(|b| text.rfind(b).map(|p| (p, *b)))
        .max_by_key(|(p, _)| *p);
    match (last_begin, latest) {
        (Some((b, marker)), Some((e, _))) if b > e => Err(MalformedAction(format!("{marker} never closed"))),
        (Some((_, marker)), None) => Err(MalformedAction(format!("{marker} never closed"))),
        _ => Ok(AgentAction::Finish),
    }
}
