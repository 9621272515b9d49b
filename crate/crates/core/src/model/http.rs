use std::sync::{Condvar, Mutex};
use std::time::Duration;

use base64::Engine;
use serde_json::{json, Value};

use super::{ChatBackend, ChatRequest, ChatRole, ModelError};
use crate::imaging;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Total attempts for transient failures (transport errors, 5xx, 429).
    pub attempts: u32,
    pub base_backoff: Duration,
    pub timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { attempts: 3, base_backoff: Duration::from_millis(500), timeout: Duration::from_secs(120) }
    }
}

/// Counting limit on requests in flight.
#[derive(Debug)]
struct Limiter {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Limiter {
    fn new(n: usize) -> Self {
        Self { free: Mutex::new(n.max(1)), cv: Condvar::new() }
    }

    fn acquire(&self) -> LimiterGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        LimiterGuard(self)
    }
}

struct LimiterGuard<'a>(&'a Limiter);

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        let mut free = self.0.free.lock().unwrap_or_else(|e| e.into_inner());
        *free += 1;
        self.0.cv.notify_one();
    }
}

/// JSON-over-HTTP chat-completion client (`choices[0].message.content`
/// response shape; images as base64 PNG data URLs).
#[derive(Debug)]
pub struct HttpChatClient {
    agent: ureq::Agent,
    api_key: Option<String>,
    retry: RetryPolicy,
    limiter: Limiter,
}

impl HttpChatClient {
    pub fn new(api_key: Option<String>, max_in_flight: usize) -> Self {
        Self::with_retry(api_key, max_in_flight, RetryPolicy::default())
    }

    pub fn with_retry(api_key: Option<String>, max_in_flight: usize, retry: RetryPolicy) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(retry.timeout).build();
        Self { agent, api_key, retry, limiter: Limiter::new(max_in_flight) }
    }
}

pub(crate) fn request_body(req: &ChatRequest) -> Result<Value, ModelError> {
    let mut messages = Vec::with_capacity(req.messages.len());
    for m in &req.messages {
        let role = match m.role {
            ChatRole::System => "system",
            ChatRole::User => "user",
            ChatRole::Assistant => "assistant",
        };
        if m.images.is_empty() {
            messages.push(json!({ "role": role, "content": m.text }));
            continue;
        }
        let mut content = vec![json!({ "type": "text", "text": m.text })];
        for img in &m.images {
            let png = imaging::encode_png(img).map_err(|e| ModelError::InvalidRequest(e.to_string()))?;
            let b64 = base64::engine::general_purpose::STANDARD.encode(png);
            content.push(json!({ "type": "image_url", "image_url": { "url": format!("data:image/png;base64,{b64}") } }));
        }
        messages.push(json!({ "role": role, "content": content }));
    }
    Ok(json!({
        "model": req.model_name,
        "messages": messages,
        "temperature": req.params.temperature,
        "max_tokens": req.params.max_tokens,
    }))
}

fn extract_text(body: &Value) -> Result<String, ModelError> {
    let content = &body["choices"][0]["message"]["content"];
    match content {
        Value::String(s) => Ok(s.clone()),
        Value::Array(parts) => Ok(parts.iter().filter_map(|p| p["text"].as_str()).collect::<Vec<_>>().join("")),
        _ => Err(ModelError::BadResponse(format!("no message content in {}", truncate(&body.to_string())))),
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(200).collect()
}

enum Attempt {
    Done(Result<String, ModelError>),
    Retry(ModelError),
}

impl HttpChatClient {
    fn attempt(&self, req: &ChatRequest, body: &Value) -> Attempt {
        let mut call = self.agent.post(&req.endpoint).set("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            call = call.set("Authorization", &format!("Bearer {key}"));
        }
        match call.send_json(body.clone()) {
            Ok(resp) => match resp.into_json::<Value>() {
                Ok(v) => Attempt::Done(extract_text(&v)),
                Err(e) => Attempt::Done(Err(ModelError::BadResponse(e.to_string()))),
            },
            Err(ureq::Error::Status(429, _)) => Attempt::Retry(ModelError::RateLimited),
            Err(ureq::Error::Status(code, resp)) if code >= 500 => {
                let text = resp.into_string().unwrap_or_default();
                Attempt::Retry(ModelError::EndpointUnreachable(format!("HTTP {code}: {}", truncate(&text))))
            }
            Err(ureq::Error::Status(code, resp)) => {
                let text = resp.into_string().unwrap_or_default();
                Attempt::Done(Err(ModelError::BadResponse(format!("HTTP {code}: {}", truncate(&text)))))
            }
            Err(ureq::Error::Transport(t)) => Attempt::Retry(ModelError::EndpointUnreachable(t.to_string())),
        }
    }
}

impl ChatBackend for HttpChatClient {
    fn complete(&self, req: &ChatRequest) -> Result<String, ModelError> {
        let body = request_body(req)?;
        let _slot = self.limiter.acquire();
        let mut last = ModelError::EndpointUnreachable("no attempt made".into());
        for attempt in 0..self.retry.attempts.max(1) {
            if attempt > 0 {
                std::thread::sleep(self.retry.base_backoff * 2u32.pow(attempt - 1));
            }
            match self.attempt(req, &body) {
                Attempt::Done(r) => return r,
                Attempt::Retry(e) => {
                    tracing::warn!(attempt = attempt + 1, error = %e, "model request failed");
                    last = e;
                }
            }
        }
        Err(last)
    }
}
