//! Chat-completion backend for hosted models. Requests are blocking and the
//! number in flight is capped so a wide worker pool cannot flood a provider.

use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use cruda_core::backend::{estimate_tokens, Backend, BackendError, Completion, PromptBundle, Role};
use serde_json::{json, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provider {
    Anthropic,
    OpenAi,
}

impl Provider {
    pub fn for_model(model: &str) -> Provider {
        if model.starts_with("claude") {
            Provider::Anthropic
        } else {
            Provider::OpenAi
        }
    }
}

pub fn api_key_var(p: Provider) -> &'static str {
    match p {
        Provider::Anthropic => "ANTHROPIC_API_KEY",
        Provider::OpenAi => "OPENAI_API_KEY",
    }
}

/// Environment variable overriding the endpoint URL.
pub fn url_var(p: Provider) -> &'static str {
    match p {
        Provider::Anthropic => "CRUDA_ANTHROPIC_URL",
        Provider::OpenAi => "CRUDA_OPENAI_URL",
    }
}

pub fn default_url(p: Provider) -> &'static str {
    match p {
        Provider::Anthropic => "https://api.anthropic.com/v1/messages",
        Provider::OpenAi => "https://api.openai.com/v1/chat/completions",
    }
}

/// Counting semaphore.
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Slots {
    fn acquire(&self) -> SlotGuard<'_> {
        let mut n = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *n == 0 {
            n = self.cv.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n -= 1;
        SlotGuard(self)
    }
}

struct SlotGuard<'a>(&'a Slots);

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

pub struct HttpBackend {
    model: String,
    provider: Provider,
    url: String,
    api_key: String,
    max_tokens: u32,
    client: reqwest::blocking::Client,
    slots: Slots,
}

impl HttpBackend {
    pub fn new(model: &str, provider: Provider, url: &str, api_key: &str, max_in_flight: usize) -> Self {
        HttpBackend {
            model: model.to_string(),
            provider,
            url: url.to_string(),
            api_key: api_key.to_string(),
            max_tokens: 1024,
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .expect("http client"),
            slots: Slots { free: Mutex::new(max_in_flight.max(1)), cv: Condvar::new() },
        }
    }

    /// Key from `ANTHROPIC_API_KEY` or `OPENAI_API_KEY`, URL from
    /// `CRUDA_ANTHROPIC_URL` or `CRUDA_OPENAI_URL` when set.
    pub fn from_env(model: &str, max_in_flight: usize) -> Result<Self, BackendError> {
        let provider = Provider::for_model(model);
        let key = std::env::var(api_key_var(provider))
            .map_err(|_| BackendError::Transport(format!("{} is not set", api_key_var(provider))))?;
        let url = std::env::var(url_var(provider)).unwrap_or_else(|_| default_url(provider).to_string());
        Ok(Self::new(model, provider, &url, &key, max_in_flight))
    }

    pub fn request_body(&self, prompt: &PromptBundle) -> Value {
        let role = |r: Role| match r {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        };
        match self.provider {
            Provider::Anthropic => {
                let system: Vec<&str> = prompt
                    .messages
                    .iter()
                    .filter(|m| m.role == Role::System)
                    .map(|m| m.content.as_str())
                    .collect();
                let messages: Vec<Value> = prompt
                    .messages
                    .iter()
                    .filter(|m| m.role != Role::System)
                    .map(|m| json!({"role": role(m.role), "content": m.content}))
                    .collect();
                json!({
                    "model": self.model, "max_tokens": self.max_tokens, "temperature": 0,
                    "system": system.join("\n\n"), "messages": messages,
                })
            }
            Provider::OpenAi => {
                let messages: Vec<Value> =
                    prompt.messages.iter().map(|m| json!({"role": role(m.role), "content": m.content})).collect();
                json!({"model": self.model, "temperature": 0, "messages": messages})
            }
        }
    }

    /// Reply text and (input, output) token counts, if reported.
    pub fn parse_reply(&self, body: &Value) -> Result<(String, Option<(u64, u64)>), String> {
        let usage = |i: &str, o: &str| {
            let u = body.get("usage")?;
            Some((u.get(i)?.as_u64()?, u.get(o)?.as_u64()?))
        };
        match self.provider {
            Provider::Anthropic => {
                let parts = body.get("content").and_then(Value::as_array).ok_or("reply has no content")?;
                let text: Vec<&str> = parts
                    .iter()
                    .filter(|p| p.get("type").and_then(Value::as_str) == Some("text"))
                    .filter_map(|p| p.get("text").and_then(Value::as_str))
                    .collect();
                Ok((text.join(""), usage("input_tokens", "output_tokens")))
            }
            Provider::OpenAi => {
                let text = body
                    .pointer("/choices/0/message/content")
                    .and_then(Value::as_str)
                    .ok_or("reply has no choices[0].message.content")?;
                Ok((text.to_string(), usage("prompt_tokens", "completion_tokens")))
            }
        }
    }
}

impl Backend for HttpBackend {
    fn model(&self) -> &str {
        &self.model
    }

    fn complete(&self, prompt: &PromptBundle) -> Result<Completion, BackendError> {
        let body = self.request_body(prompt);
        let _slot = self.slots.acquire();
        let t0 = Instant::now();
        let req = self.client.post(&self.url).json(&body);
        let req = match self.provider {
            Provider::Anthropic => req.header("x-api-key", &self.api_key).header("anthropic-version", "2023-06-01"),
            Provider::OpenAi => req.bearer_auth(&self.api_key),
        };
        let resp = req.send().map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status();
        let reply: Value = resp.json().map_err(|e| BackendError::Transport(e.to_string()))?;
        let latency_s = t0.elapsed().as_secs_f64();
        if !status.is_success() {
            return Err(BackendError::Transport(format!("{status}: {reply}")));
        }
        let (text, usage) = self.parse_reply(&reply).map_err(BackendError::Transport)?;
        let (input_tokens, output_tokens) = usage.unwrap_or_else(|| {
            let sent: usize = prompt.messages.iter().map(|m| m.content.len()).sum();
            (sent.div_ceil(4) as u64, estimate_tokens(&text))
        });
        Ok(Completion { text, input_tokens, output_tokens, latency_s })
    }
}
