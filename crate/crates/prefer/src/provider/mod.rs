//! Uniform interface to a text-completion backend.
//!
//! Two implementations: a live HTTP chat-completion client and a
//! deterministic scripted provider for offline runs. Every successful
//! completion increments an atomic call counter; the counter backs the
//! per-step API-access accounting (2N+2 for a full bilateral step).

mod live;
mod scripted;

pub use live::LiveProvider;
pub use scripted::{
    MatchRule, RequestKind, ScriptedProvider, TranscriptEntry, WeakClassifierProvider,
};

use crate::error::{Error, Result};

pub const API_KEY_ENV: &str = "PREFER_API_KEY";

/// Default system text used by every engine-issued request.
pub const SYSTEM_TEXT: &str = "You are a careful assistant for text classification tasks.";

/// Sampling temperature for solving and confidence calls.
pub const SOLVE_TEMPERATURE: f64 = 0.0;
/// Sampling temperature for feedback and refine calls.
pub const CREATIVE_TEMPERATURE: f64 = 1.0;

pub const DEFAULT_MAX_TOKENS: u32 = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub system_text: String,
    pub user_text: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl CompletionRequest {
    pub fn new(user_text: impl Into<String>, temperature: f64) -> Self {
        Self {
            system_text: SYSTEM_TEXT.into(),
            user_text: user_text.into(),
            temperature,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.system_text.trim().is_empty() || self.user_text.trim().is_empty() {
            return Err(Error::Contract("request texts must be non-empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub usage_tokens: u32,
}

/// A text-completion backend. Implementations must be safe for concurrent
/// `complete` calls; the call counter is atomic and counts successful
/// completions only (a retried-then-successful call counts once, exhausted
/// retries count zero).
pub trait Provider: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion>;

    /// Successful completions since the last reset.
    fn call_count(&self) -> u64;

    fn reset_count(&self);
}
