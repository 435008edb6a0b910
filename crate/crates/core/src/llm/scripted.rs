use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{BackendReply, ChatBackend, ChatRequest, LlmError, ProviderUsage, StreamControl};

/// Width, in characters, of each streamed piece.
const STREAM_PIECE_CHARS: usize = 16;

/// One canned response. A rule matches a call when every matcher it sets
/// agrees: `purpose` equals the call purpose, `contains` occurs in the last
/// message, `call` equals the 1-based call ordinal. The first unconsumed
/// matching rule answers; `repeat` rules are never consumed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub purpose: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub call: Option<u64>,
    pub response: String,
    #[serde(default)]
    pub repeat: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub rules: Vec<ScriptRule>,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| LlmError::Parse(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Default)]
struct ScriptState {
    calls: u64,
    consumed: Vec<bool>,
    transcript: Vec<String>,
}

/// Offline backend answering from a scenario file.
#[derive(Debug)]
pub struct ScriptedResponder {
    scenario: Scenario,
    state: Mutex<ScriptState>,
}

impl ScriptedResponder {
    pub fn new(scenario: Scenario) -> Self {
        let consumed = vec![false; scenario.rules.len()];
        Self {
            scenario,
            state: Mutex::new(ScriptState {
                consumed,
                ..ScriptState::default()
            }),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, LlmError> {
        Ok(Self::new(Scenario::load(path)?))
    }

    pub fn calls_served(&self) -> u64 {
        self.state.lock().unwrap().calls
    }

    /// One line per call: ordinal, purpose, index of the answering rule.
    pub fn transcript(&self) -> Vec<String> {
        self.state.lock().unwrap().transcript.clone()
    }

    fn respond(&self, request: &ChatRequest<'_>) -> Result<String, LlmError> {
        let purpose = request.purpose.as_str();
        let last = request.messages.last().map(|m| m.content.as_str()).unwrap_or("");
        let mut state = self.state.lock().unwrap();
        state.calls += 1;
        let ordinal = state.calls;
        let found = self.scenario.rules.iter().enumerate().find(|(i, rule)| {
            !state.consumed[*i]
                && rule.purpose.as_deref().is_none_or(|p| p == purpose)
                && rule.contains.as_deref().is_none_or(|c| last.contains(c))
                && rule.call.is_none_or(|c| c == ordinal)
        });
        let Some((index, rule)) = found else {
            state.transcript.push(format!("{ordinal}\t{purpose}\t-"));
            return Err(LlmError::ScenarioExhausted {
                purpose: purpose.to_string(),
                call: ordinal,
            });
        };
        if !rule.repeat {
            state.consumed[index] = true;
        }
        state.transcript.push(format!("{ordinal}\t{purpose}\t{index}"));
        let limit = (request.max_tokens as usize).saturating_mul(4);
        Ok(rule.response.chars().take(limit).collect())
    }
}

impl ChatBackend for ScriptedResponder {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<BackendReply, LlmError> {
        Ok(BackendReply {
            text: self.respond(request)?,
            usage: None,
        })
    }

    fn stream(
        &self,
        request: &ChatRequest<'_>,
        on_delta: &mut dyn FnMut(&str) -> StreamControl,
    ) -> Result<Option<ProviderUsage>, LlmError> {
        let text = self.respond(request)?;
        let chars: Vec<char> = text.chars().collect();
        for piece in chars.chunks(STREAM_PIECE_CHARS) {
            let piece: String = piece.iter().collect();
            if on_delta(&piece) == StreamControl::Stop {
                break;
            }
        }
        Ok(None)
    }

    fn sequential(&self) -> bool {
        true
    }

    fn label(&self) -> String {
        format!("scripted:{}", self.scenario.name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{CallPurpose, Message, ModelProfile};

    fn ask(r: &ScriptedResponder, purpose: CallPurpose, text: &str) -> Result<String, LlmError> {
        let profile = ModelProfile::reasoner("m");
        let messages = [Message::user(text)];
        let req = ChatRequest {
            purpose,
            profile: &profile,
            messages: &messages,
            max_tokens: 1000,
            seed: None,
        };
        r.complete(&req).map(|reply| reply.text)
    }

    fn scenario() -> Scenario {
        serde_json::from_str(
            r#"{"name": "demo", "rules": [
                {"purpose": "plan", "response": "plan-1"},
                {"purpose": "plan", "response": "plan-2"},
                {"contains": "apple", "response": "fruit", "repeat": true},
                {"call": 6, "response": "sixth"}
            ]}"#,
        )
        .unwrap()
    }

    #[test]
    fn rules_are_consumed_in_order() {
        let r = ScriptedResponder::new(scenario());
        assert_eq!(ask(&r, CallPurpose::Plan, "x").unwrap(), "plan-1");
        assert_eq!(ask(&r, CallPurpose::Plan, "x").unwrap(), "plan-2");
        assert_eq!(ask(&r, CallPurpose::Extract, "an apple").unwrap(), "fruit");
        assert_eq!(ask(&r, CallPurpose::Extract, "apple again").unwrap(), "fruit");
        assert!(matches!(
            ask(&r, CallPurpose::Plan, "x"),
            Err(LlmError::ScenarioExhausted { call: 5, .. })
        ));
        assert_eq!(ask(&r, CallPurpose::Merge, "x").unwrap(), "sixth");
        assert_eq!(r.transcript(), ["1\tplan\t0", "2\tplan\t1", "3\textract\t2", "4\textract\t2", "5\tplan\t-", "6\tmerge\t3"]);
    }

    #[test]
    fn transcripts_are_reproducible() {
        let run = || {
            let r = ScriptedResponder::new(scenario());
            let _ = ask(&r, CallPurpose::Plan, "apple");
            let _ = ask(&r, CallPurpose::Refine, "apple");
            r.transcript()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn responses_respect_max_tokens() {
        let r = ScriptedResponder::new(Scenario {
            name: String::new(),
            rules: vec![ScriptRule {
                purpose: None,
                contains: None,
                call: None,
                response: "x".repeat(100),
                repeat: false,
            }],
        });
        let profile = ModelProfile::reasoner("m");
        let messages = [Message::user("q")];
        let req = ChatRequest {
            purpose: CallPurpose::Plan,
            profile: &profile,
            messages: &messages,
            max_tokens: 5,
            seed: None,
        };
        assert_eq!(r.complete(&req).unwrap().text.len(), 20);
    }
}
