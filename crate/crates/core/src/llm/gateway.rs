use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    approximate_tokens, BackendReply, CallPurpose, ChatBackend, ChatRequest, LlmError, Message,
    ModelProfile, ModelRole, ProviderUsage, StreamControl, TokenUsage,
};
use crate::cache::{request_hash, DiskCache};

/// Streams that run this long without hitting a marker are abandoned.
pub const MARKER_OVERFLOW_TOKENS: u64 = 32_768;

#[derive(Debug, Clone)]
pub struct GatewayOptions {
    pub token_budget: u64,
    pub cache: Option<DiskCache>,
    pub retry_backoff: Duration,
    pub marker_overflow_tokens: u64,
    /// Forwarded with every request; recorded in cache keys.
    pub seed: Option<u64>,
}

impl GatewayOptions {
    pub fn with_budget(token_budget: u64) -> Self {
        Self {
            token_budget,
            ..Self::default()
        }
    }
}

impl Default for GatewayOptions {
    fn default() -> Self {
        Self {
            token_budget: 1_000_000,
            cache: None,
            retry_backoff: Duration::from_secs(2),
            marker_overflow_tokens: MARKER_OVERFLOW_TOKENS,
            seed: None,
        }
    }
}

/// One model call as seen by the gateway, for run manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub seq: u64,
    pub purpose: CallPurpose,
    pub model: String,
    pub role: ModelRole,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub max_tokens: u32,
    pub cached: bool,
    pub streamed: bool,
    pub approximate_usage: bool,
    pub marker: Option<String>,
    pub request_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub usage: TokenUsage,
    pub cached: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamOutcome {
    /// Generated text up to and including the marker, if one was seen.
    pub text: String,
    pub marker: Option<String>,
    pub usage: TokenUsage,
    pub cached: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CachedReply {
    text: String,
    marker: Option<String>,
}

#[derive(Debug, Default)]
struct Ledger {
    usage: TokenUsage,
    reserved: u64,
    seq: u64,
    calls: Vec<CallRecord>,
}

/// Single entry point for model calls: budget admission, caching, one retry
/// on transport failure, token accounting and stop-marker streaming.
pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    options: GatewayOptions,
    ledger: Mutex<Ledger>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("backend", &self.backend.label())
            .field("token_budget", &self.options.token_budget)
            .finish()
    }
}

struct Admission {
    max_tokens: u32,
    reserved: u64,
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>, options: GatewayOptions) -> Self {
        Self {
            backend,
            options,
            ledger: Mutex::new(Ledger::default()),
        }
    }

    pub fn token_budget(&self) -> u64 {
        self.options.token_budget
    }

    pub fn seed(&self) -> Option<u64> {
        self.options.seed
    }

    pub fn usage(&self) -> TokenUsage {
        self.ledger.lock().unwrap().usage
    }

    pub fn remaining_budget(&self) -> u64 {
        let ledger = self.ledger.lock().unwrap();
        self.options
            .token_budget
            .saturating_sub(ledger.usage.total() + ledger.reserved)
    }

    pub fn is_sequential(&self) -> bool {
        self.backend.sequential()
    }

    pub fn backend_label(&self) -> String {
        self.backend.label()
    }

    /// Call records accumulated since the previous drain.
    pub fn drain_call_log(&self) -> Vec<CallRecord> {
        std::mem::take(&mut self.ledger.lock().unwrap().calls)
    }

    fn cache_key(&self, profile: &ModelProfile, messages: &[Message], markers: Option<&[&str]>) -> String {
        request_hash(&json!({
            "model": profile.name,
            "role": profile.role,
            "params": profile.params,
            "messages": messages,
            "seed": self.options.seed,
            "markers": markers,
        }))
    }

    /// Reserves the prompt plus the whole generation allowance so parallel
    /// calls can never jointly overshoot the budget.
    fn admit(&self, profile: &ModelProfile, prompt_tokens: u64) -> Result<Admission, LlmError> {
        let mut ledger = self.ledger.lock().unwrap();
        let used = ledger.usage.total() + ledger.reserved;
        let budget = self.options.token_budget;
        let refuse = || LlmError::BudgetExceeded {
            used,
            budget,
            requested: prompt_tokens,
        };
        if used >= budget || budget - used <= prompt_tokens {
            return Err(refuse());
        }
        let room = budget - used - prompt_tokens;
        let max_tokens = (profile.params.max_tokens as u64).min(room) as u32;
        let reserved = prompt_tokens + max_tokens as u64;
        ledger.reserved += reserved;
        Ok(Admission { max_tokens, reserved })
    }

    fn settle(&self, admission: &Admission, record: Option<CallRecord>) {
        let mut ledger = self.ledger.lock().unwrap();
        ledger.reserved -= admission.reserved;
        if let Some(mut record) = record {
            ledger.usage += TokenUsage {
                prompt_tokens: record.prompt_tokens,
                completion_tokens: record.completion_tokens,
                call_count: 1,
            };
            ledger.seq += 1;
            record.seq = ledger.seq;
            ledger.calls.push(record);
        }
    }

    fn record_cache_hit(&self, mut record: CallRecord) {
        let mut ledger = self.ledger.lock().unwrap();
        ledger.seq += 1;
        record.seq = ledger.seq;
        ledger.calls.push(record);
    }

    fn with_retry<T>(&self, mut attempt: impl FnMut() -> Result<T, LlmError>) -> Result<T, LlmError> {
        match attempt() {
            Err(LlmError::Transport(first)) => {
                tracing::warn!(error = %first, "model transport error, retrying once");
                std::thread::sleep(self.options.retry_backoff);
                attempt()
            }
            other => other,
        }
    }

    fn prompt_estimate(messages: &[Message]) -> u64 {
        messages.iter().map(|m| approximate_tokens(&m.content)).sum()
    }

    fn base_record(
        purpose: CallPurpose,
        profile: &ModelProfile,
        max_tokens: u32,
        hash: &str,
        streamed: bool,
    ) -> CallRecord {
        CallRecord {
            seq: 0,
            purpose,
            model: profile.name.clone(),
            role: profile.role,
            prompt_tokens: 0,
            completion_tokens: 0,
            max_tokens,
            cached: false,
            streamed,
            approximate_usage: true,
            marker: None,
            request_hash: hash.to_string(),
        }
    }

    /// Ordinary request/response call.
    pub fn complete(
        &self,
        purpose: CallPurpose,
        profile: &ModelProfile,
        messages: &[Message],
    ) -> Result<Completion, LlmError> {
        profile.params.validate()?;
        let hash = self.cache_key(profile, messages, None);
        if let Some(hit) = self.options.cache.as_ref().and_then(|c| c.get::<CachedReply>(&hash)) {
            let mut record = Self::base_record(purpose, profile, profile.params.max_tokens, &hash, false);
            record.cached = true;
            self.record_cache_hit(record);
            return Ok(Completion {
                text: hit.text,
                usage: TokenUsage::default(),
                cached: true,
            });
        }
        let prompt_tokens = Self::prompt_estimate(messages);
        let admission = self.admit(profile, prompt_tokens)?;
        let request = ChatRequest {
            purpose,
            profile,
            messages,
            max_tokens: admission.max_tokens,
            seed: self.options.seed,
        };
        let result = self.with_retry(|| self.backend.complete(&request));
        let reply: BackendReply = match result {
            Ok(reply) => reply,
            Err(e) => {
                self.settle(&admission, None);
                return Err(e);
            }
        };
        let mut record = Self::base_record(purpose, profile, admission.max_tokens, &hash, false);
        fill_usage(&mut record, reply.usage.as_ref(), prompt_tokens, &reply.text);
        let usage = TokenUsage {
            prompt_tokens: record.prompt_tokens,
            completion_tokens: record.completion_tokens,
            call_count: 1,
        };
        self.settle(&admission, Some(record));
        if let Some(cache) = &self.options.cache {
            cache.put(&hash, &CachedReply { text: reply.text.clone(), marker: None })?;
        }
        Ok(Completion {
            text: reply.text,
            usage,
            cached: false,
        })
    }

    /// Streams a generation and stops as soon as the accumulated text contains
    /// any of `markers`. The returned text ends with the marker when one was
    /// seen. Without a marker the stream either ends naturally or, past the
    /// overflow limit, fails with [`LlmError::MarkerOverflow`].
    pub fn stream_until_marker(
        &self,
        purpose: CallPurpose,
        profile: &ModelProfile,
        messages: &[Message],
        markers: &[&str],
    ) -> Result<StreamOutcome, LlmError> {
        profile.params.validate()?;
        let hash = self.cache_key(profile, messages, Some(markers));
        if let Some(hit) = self.options.cache.as_ref().and_then(|c| c.get::<CachedReply>(&hash)) {
            let mut record = Self::base_record(purpose, profile, profile.params.max_tokens, &hash, true);
            record.cached = true;
            record.marker = hit.marker.clone();
            self.record_cache_hit(record);
            return Ok(StreamOutcome {
                text: hit.text,
                marker: hit.marker,
                usage: TokenUsage::default(),
                cached: true,
            });
        }
        let prompt_tokens = Self::prompt_estimate(messages);
        let admission = self.admit(profile, prompt_tokens)?;
        let request = ChatRequest {
            purpose,
            profile,
            messages,
            max_tokens: admission.max_tokens,
            seed: self.options.seed,
        };
        let longest = markers.iter().map(|m| m.len()).max().unwrap_or(0);
        let overflow_chars = self.options.marker_overflow_tokens.saturating_mul(4);

        let mut text = String::new();
        let mut marker: Option<String> = None;
        let mut overflowed = false;
        let result = self.with_retry(|| {
            text.clear();
            marker = None;
            overflowed = false;
            let mut chars = 0u64;
            self.backend.stream(&request, &mut |delta: &str| {
                let scan_from = floor_char_boundary(&text, text.len().saturating_sub(longest.saturating_sub(1)));
                text.push_str(delta);
                chars += delta.chars().count() as u64;
                if let Some((end, m)) = find_first_marker(&text, scan_from, markers) {
                    text.truncate(end);
                    marker = Some(m.to_string());
                    return StreamControl::Stop;
                }
                if chars > overflow_chars {
                    overflowed = true;
                    return StreamControl::Stop;
                }
                StreamControl::Continue
            })
        });
        let provider_usage = match result {
            Ok(u) => u,
            Err(e) => {
                self.settle(&admission, None);
                return Err(e);
            }
        };
        let mut record = Self::base_record(purpose, profile, admission.max_tokens, &hash, true);
        let usage_source = if marker.is_none() && !overflowed { provider_usage.as_ref() } else { None };
        fill_usage(&mut record, usage_source, prompt_tokens, &text);
        record.marker = marker.clone();
        let usage = TokenUsage {
            prompt_tokens: record.prompt_tokens,
            completion_tokens: record.completion_tokens,
            call_count: 1,
        };
        self.settle(&admission, Some(record));
        if overflowed {
            return Err(LlmError::MarkerOverflow {
                tokens: approximate_tokens(&text),
            });
        }
        if let Some(cache) = &self.options.cache {
            cache.put(&hash, &CachedReply { text: text.clone(), marker: marker.clone() })?;
        }
        Ok(StreamOutcome {
            text,
            marker,
            usage,
            cached: false,
        })
    }
}

fn fill_usage(record: &mut CallRecord, reported: Option<&ProviderUsage>, prompt_estimate: u64, text: &str) {
    match reported {
        Some(u) => {
            record.prompt_tokens = u.prompt_tokens;
            record.completion_tokens = u.completion_tokens;
            record.approximate_usage = false;
        }
        None => {
            record.prompt_tokens = prompt_estimate;
            record.completion_tokens = approximate_tokens(text);
            record.approximate_usage = true;
        }
    }
}

fn floor_char_boundary(s: &str, mut i: usize) -> usize {
    while i > 0 && !s.is_char_boundary(i) {
        i -= 1;
    }
    i
}

/// Earliest marker occurrence starting at or after `from`; returns the byte
/// offset just past it.
fn find_first_marker<'m>(text: &str, from: usize, markers: &[&'m str]) -> Option<(usize, &'m str)> {
    markers
        .iter()
        .filter(|m| !m.is_empty())
        .filter_map(|m| text[from..].find(*m).map(|pos| (from + pos, *m)))
        .min_by_key(|(pos, _)| *pos)
        .map(|(pos, m)| (pos + m.len(), m))
}
