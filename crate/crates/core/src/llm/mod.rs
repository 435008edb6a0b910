//! Model access: sampling profiles, the gateway that enforces budgets and
//! caching, an HTTP chat-completion backend and a scripted offline backend.

mod gateway;
mod http;
mod scripted;

use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gateway::{CallRecord, Completion, Gateway, GatewayOptions, StreamOutcome, MARKER_OVERFLOW_TOKENS};
pub use http::{HttpChatBackend, LLM_API_KEY_ENV, LLM_ENDPOINT_ENV};
pub use scripted::{Scenario, ScriptRule, ScriptedResponder};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("model provider returned HTTP {status}: {excerpt}")]
    Provider { status: u16, excerpt: String },
    #[error("unexpected model response: {0}")]
    Parse(String),
    #[error("token budget exhausted: {used} used of {budget}, next call needs {requested}")]
    BudgetExceeded { used: u64, budget: u64, requested: u64 },
    #[error("no stop marker after {tokens} tokens")]
    MarkerOverflow { tokens: u64 },
    #[error("scripted scenario has no response for call {call} ({purpose})")]
    ScenarioExhausted { purpose: String, call: u64 },
    #[error("invalid sampling parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl LlmError {
    pub fn is_budget(&self) -> bool {
        matches!(self, LlmError::BudgetExceeded { .. })
    }
}

/// ⌈chars / 4⌉, zero for empty text.
pub fn approximate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub repetition_penalty: f64,
    pub max_tokens: u32,
}

impl SamplingParams {
    pub fn validate(&self) -> Result<(), LlmError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::InvalidParams("temperature must lie in [0, 2]".into()));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(LlmError::InvalidParams("top_p must lie in (0, 1]".into()));
        }
        if self.repetition_penalty.is_nan() || self.repetition_penalty < 1.0 {
            return Err(LlmError::InvalidParams("repetition_penalty must be at least 1".into()));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::InvalidParams("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModelRole {
    #[default]
    Reasoner,
    Scraper,
}

impl ModelRole {
    pub fn default_max_tokens(self) -> u32 {
        match self {
            ModelRole::Reasoner => 32_768,
            ModelRole::Scraper => 8_192,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelRole::Reasoner => "reasoner",
            ModelRole::Scraper => "scraper",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub name: String,
    pub role: ModelRole,
    pub params: SamplingParams,
}

impl ModelProfile {
    /// Temperature 0.7, top-p 0.9, repetition penalty 1.05, and the role's
    /// default generation length.
    pub fn new(name: impl Into<String>, role: ModelRole) -> Self {
        Self {
            name: name.into(),
            role,
            params: SamplingParams {
                temperature: 0.7,
                top_p: 0.9,
                repetition_penalty: 1.05,
                max_tokens: role.default_max_tokens(),
            },
        }
    }

    pub fn reasoner(name: impl Into<String>) -> Self {
        Self::new(name, ModelRole::Reasoner)
    }

    pub fn scraper(name: impl Into<String>) -> Self {
        Self::new(name, ModelRole::Scraper)
    }
}

/// The two profiles an episode uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProfiles {
    pub reasoner: ModelProfile,
    pub scraper: ModelProfile,
}

impl ModelProfiles {
    pub fn for_role(&self, role: ModelRole) -> &ModelProfile {
        match role {
            ModelRole::Reasoner => &self.reasoner,
            ModelRole::Scraper => &self.scraper,
        }
    }
}

impl Default for ModelProfiles {
    fn default() -> Self {
        Self {
            reasoner: ModelProfile::reasoner("reasoner"),
            scraper: ModelProfile::scraper("scraper"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub call_count: u64,
}

impl TokenUsage {
    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

impl Add for TokenUsage {
    type Output = TokenUsage;

    fn add(self, rhs: Self) -> Self::Output {
        TokenUsage {
            prompt_tokens: self.prompt_tokens + rhs.prompt_tokens,
            completion_tokens: self.completion_tokens + rhs.completion_tokens,
            call_count: self.call_count + rhs.call_count,
        }
    }
}

impl AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for TokenUsage {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(TokenUsage::default(), Add::add)
    }
}

/// What a model call is for; recorded in manifests and used by scripted
/// scenarios to route responses. Never sent on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallPurpose {
    Extract,
    Synthesize,
    Explore,
    Plan,
    Merge,
    Rewrite,
    Generate,
    Refine,
}

impl CallPurpose {
    pub fn as_str(self) -> &'static str {
        match self {
            CallPurpose::Extract => "extract",
            CallPurpose::Synthesize => "synthesize",
            CallPurpose::Explore => "explore",
            CallPurpose::Plan => "plan",
            CallPurpose::Merge => "merge",
            CallPurpose::Rewrite => "rewrite",
            CallPurpose::Generate => "generate",
            CallPurpose::Refine => "refine",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChatRequest<'a> {
    pub purpose: CallPurpose,
    pub profile: &'a ModelProfile,
    pub messages: &'a [Message],
    /// Generation cap after budget clamping; never above the profile's.
    pub max_tokens: u32,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProviderUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone)]
pub struct BackendReply {
    pub text: String,
    pub usage: Option<ProviderUsage>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamControl {
    Continue,
    Stop,
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<BackendReply, LlmError>;

    /// Feeds text deltas to `on_delta` in arrival order until the stream ends
    /// or the callback returns [`StreamControl::Stop`]. Returns provider usage
    /// when the stream ran to completion and reported it.
    fn stream(
        &self,
        request: &ChatRequest<'_>,
        on_delta: &mut dyn FnMut(&str) -> StreamControl,
    ) -> Result<Option<ProviderUsage>, LlmError>;

    /// Backends whose responses depend on call order must be driven
    /// sequentially.
    fn sequential(&self) -> bool {
        false
    }

    fn label(&self) -> String;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn approximate_token_examples() {
        assert_eq!(approximate_tokens(""), 0);
        assert_eq!(approximate_tokens("abcd"), 1);
        assert_eq!(approximate_tokens("abcdefghi"), 3);
        assert_eq!(approximate_tokens("ééééé"), 2);
    }

    #[test]
    fn profile_defaults() {
        let r = ModelProfile::reasoner("qwq");
        assert_eq!(r.params.max_tokens, 32_768);
        assert_eq!((r.params.temperature, r.params.top_p, r.params.repetition_penalty), (0.7, 0.9, 1.05));
        assert_eq!(ModelProfile::scraper("q").params.max_tokens, 8_192);
        r.params.validate().unwrap();
    }

    #[test]
    fn sampling_validation() {
        let ok = ModelProfile::reasoner("m").params;
        for bad in [
            SamplingParams { temperature: 2.5, ..ok },
            SamplingParams { top_p: 0.0, ..ok },
            SamplingParams { repetition_penalty: 0.9, ..ok },
            SamplingParams { max_tokens: 0, ..ok },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn usage_is_additive() {
        let a = TokenUsage { prompt_tokens: 3, completion_tokens: 4, call_count: 1 };
        let b = TokenUsage { prompt_tokens: 10, completion_tokens: 1, call_count: 2 };
        let s: TokenUsage = [a, b].into_iter().sum();
        assert_eq!(s, TokenUsage { prompt_tokens: 13, completion_tokens: 5, call_count: 3 });
        assert_eq!(s.total(), 18);
    }
}
