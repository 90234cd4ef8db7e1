//! Chat-completion transport for driving the loop with a real LLM endpoint.
//!
//! Kept behind the small [`ChatTransport`] trait so everything above it —
//! retries, transcripts, parsing — is testable without a network.

use std::time::Duration;

use crate::agent::{AgentBackend, RoundInput};
use crate::error::{Error, Result};

/// Environment variable holding the API key for [`HttpTransport`].
pub const API_KEY_ENV: &str = "DCATS_LLM_API_KEY";

/// One prompt in, one response text out.
pub trait ChatTransport {
    fn send(&mut self, prompt: &str) -> Result<String>;
}

/// Retry policy for transient transport failures.
#[derive(Debug, Clone, Copy)]
pub struct RetryConfig {
    pub max_attempts: usize,
    /// First backoff delay; doubles per retry.
    pub initial_backoff: Duration,
}

impl Default for RetryConfig {
    fn default() -> Self {
        RetryConfig {
            max_attempts: 3,
            initial_backoff: Duration::from_millis(500),
        }
    }
}

/// Send a prompt with retries; returns the response and how many attempts
/// the call took (for the transcript).
pub fn complete(
    transport: &mut dyn ChatTransport,
    prompt: &str,
    retry: &RetryConfig,
) -> Result<(String, usize)> {
    let mut backoff = retry.initial_backoff;
    let mut last_err = None;
    for attempt in 1..=retry.max_attempts.max(1) {
        match transport.send(prompt) {
            Ok(text) => return Ok((text, attempt)),
            Err(e) => {
                last_err = Some(e);
                if attempt < retry.max_attempts {
                    std::thread::sleep(backoff);
                    backoff *= 2;
                }
            }
        }
    }
    Err(last_err.unwrap_or_else(|| Error::agent("transport failed with no attempts")))
}

/// JSON-over-HTTP chat endpoint (OpenAI-compatible request shape).
pub struct HttpTransport {
    url: String,
    model: String,
    /// Dotted path to the response text, e.g. `choices.0.message.content`.
    response_path: String,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    /// Reads the API key from `DCATS_LLM_API_KEY`.
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Result<Self> {
        let api_key = std::env::var(API_KEY_ENV)
            .map_err(|_| Error::config(format!("{API_KEY_ENV} is not set")))?;
        Ok(HttpTransport {
            url: url.into(),
            model: model.into(),
            response_path: "choices.0.message.content".into(),
            api_key,
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .map_err(|e| Error::agent(format!("http client: {e}")))?,
        })
    }

    pub fn with_response_path(mut self, path: impl Into<String>) -> Self {
        self.response_path = path.into();
        self
    }
}

/// Walk a dotted path (`a.0.b`) through a JSON value.
fn extract_path<'a>(value: &'a serde_json::Value, path: &str) -> Option<&'a serde_json::Value> {
    let mut cur = value;
    for seg in path.split('.') {
        cur = match cur {
            serde_json::Value::Array(items) => items.get(seg.parse::<usize>().ok()?)?,
            serde_json::Value::Object(map) => map.get(seg)?,
            _ => return None,
        };
    }
    Some(cur)
}

impl ChatTransport for HttpTransport {
    fn send(&mut self, prompt: &str) -> Result<String> {
        let body = serde_json::json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
        });
        let resp = self
            .client
            .post(&self.url)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| Error::agent(format!("request failed: {e}")))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(Error::agent(format!("endpoint returned {status}")));
        }
        let value: serde_json::Value = resp
            .json()
            .map_err(|e| Error::agent(format!("invalid JSON response: {e}")))?;
        extract_path(&value, &self.response_path)
            .and_then(|v| v.as_str())
            .map(str::to_owned)
            .ok_or_else(|| {
                Error::agent(format!(
                    "response has no text at path `{}`",
                    self.response_path
                ))
            })
    }
}

/// An [`AgentBackend`] that forwards prompts to a [`ChatTransport`].
pub struct LlmBackend<T: ChatTransport> {
    transport: T,
    retry: RetryConfig,
    /// Attempt count of the most recent call, for transcript logging.
    pub last_attempts: usize,
}

impl<T: ChatTransport> LlmBackend<T> {
    pub fn new(transport: T, retry: RetryConfig) -> Self {
        LlmBackend {
            transport,
            retry,
            last_attempts: 0,
        }
    }
}

impl<T: ChatTransport> AgentBackend for LlmBackend<T> {
    fn name(&self) -> &str {
        "llm"
    }

    fn respond(&mut self, input: &RoundInput<'_>) -> Result<String> {
        let (text, attempts) = complete(&mut self.transport, input.prompt, &self.retry)?;
        self.last_attempts = attempts;
        Ok(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Flaky {
        failures_left: usize,
        calls: usize,
    }

    impl ChatTransport for Flaky {
        fn send(&mut self, prompt: &str) -> Result<String> {
            self.calls += 1;
            if self.failures_left > 0 {
                self.failures_left -= 1;
                return Err(Error::agent("transient"));
            }
            Ok(format!("echo: {prompt}"))
        }
    }

    fn fast_retry() -> RetryConfig {
        RetryConfig {
            max_attempts: 3,
            initial_backoff: Duration::from_millis(1),
        }
    }

    #[test]
    fn complete_retries_then_succeeds() {
        let mut t = Flaky {
            failures_left: 2,
            calls: 0,
        };
        let (text, attempts) = complete(&mut t, "hi", &fast_retry()).unwrap();
        assert_eq!(text, "echo: hi");
        assert_eq!(attempts, 3);
        assert_eq!(t.calls, 3);
    }

    #[test]
    fn complete_gives_up_after_max_attempts() {
        let mut t = Flaky {
            failures_left: 10,
            calls: 0,
        };
        assert!(complete(&mut t, "hi", &fast_retry()).is_err());
        assert_eq!(t.calls, 3);
    }

    #[test]
    fn extract_path_walks_objects_and_arrays() {
        let v = serde_json::json!({
            "choices": [{"message": {"content": "hello"}}]
        });
        assert_eq!(
            extract_path(&v, "choices.0.message.content").unwrap(),
            "hello"
        );
        assert!(extract_path(&v, "choices.1.message").is_none());
        assert!(extract_path(&v, "nope").is_none());
    }
}
