//! Chat-with-images model endpoints: the agent policy, the dataset annotator
//! and the benchmark judge all go through [`ModelClient`].

mod http;
mod judge;
mod scripted;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::Image;

pub use http::{HttpChatClient, RetryPolicy};
pub use judge::{parse_judge_score, parse_verdict, JudgeRubric, JUDGE_MAX_ATTEMPTS};
pub use scripted::{ScriptedChat, ScriptedReply};

pub const API_KEY_ENV: &str = "COGWEB_API_KEY";
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("model endpoint unreachable: {0}")]
    EndpointUnreachable(String),
    #[error("rate limited by model endpoint")]
    RateLimited,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("unexpected response: {0}")]
    BadResponse(String),
    #[error("judge response could not be parsed after {attempts} attempts: {last}")]
    JudgeParseError { attempts: u32, last: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub text: String,
    pub images: Vec<Image>,
}

impl ChatMessage {
    pub fn system(text: impl Into<String>) -> Self {
        Self { role: ChatRole::System, text: text.into(), images: Vec::new() }
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self { role: ChatRole::User, text: text.into(), images: Vec::new() }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self { role: ChatRole::Assistant, text: text.into(), images: Vec::new() }
    }

    pub fn with_images(mut self, images: Vec<Image>) -> Self {
        self.images = images;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChatParams {
    pub temperature: f32,
    pub max_tokens: u32,
}

impl Default for ChatParams {
    fn default() -> Self {
        Self { temperature: 0.0, max_tokens: 2048 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub params: ChatParams,
    pub endpoint: String,
    pub model_name: String,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.messages.is_empty() {
            return Err(ModelError::InvalidRequest("no messages".into()));
        }
        if self.messages.iter().any(|m| m.role != ChatRole::User && !m.images.is_empty()) {
            return Err(ModelError::InvalidRequest("images are only allowed on user messages".into()));
        }
        Ok(())
    }
}

/// Transport to a chat-completion endpoint.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<String, ModelError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub endpoint: String,
    pub model_name: String,
    #[serde(default)]
    pub params: ChatParams,
}

/// An endpoint plus the transport used to reach it.
#[derive(Clone)]
pub struct ModelClient {
    backend: Arc<dyn ChatBackend>,
    config: ModelConfig,
}

impl std::fmt::Debug for ModelClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelClient").field("config", &self.config).finish()
    }
}

impl ModelClient {
    pub fn new(backend: Arc<dyn ChatBackend>, config: ModelConfig) -> Self {
        Self { backend, config }
    }

    /// HTTP client for `endpoint`, reading the key from `COGWEB_API_KEY`.
    pub fn http(endpoint: &str, model_name: &str) -> Self {
        let backend = HttpChatClient::new(std::env::var(API_KEY_ENV).ok(), DEFAULT_MAX_IN_FLIGHT);
        Self::new(
            Arc::new(backend),
            ModelConfig { endpoint: endpoint.into(), model_name: model_name.into(), params: ChatParams::default() },
        )
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn request(&self, messages: Vec<ChatMessage>) -> ChatRequest {
        ChatRequest {
            messages,
            params: self.config.params,
            endpoint: self.config.endpoint.clone(),
            model_name: self.config.model_name.clone(),
        }
    }

    pub fn chat_complete(&self, req: &ChatRequest) -> Result<String, ModelError> {
        req.validate()?;
        self.backend.complete(req)
    }

    pub fn chat(&self, messages: Vec<ChatMessage>) -> Result<String, ModelError> {
        self.chat_complete(&self.request(messages))
    }

    /// Scores `pred` against `gold` on a 1–5 scale. Responses without a
    /// score in range are retried; the value is never coerced.
    pub fn judge(&self, pred: &str, gold: &str, context_images: &[Image], rubric: &JudgeRubric) -> Result<u8, ModelError> {
        judge::run_judge(self, pred, gold, context_images, rubric)
    }

    /// Binary success verdict for an open-web episode.
    pub fn verdict(&self, task: &str, answer: &str, final_images: &[Image], rubric: &JudgeRubric) -> Result<bool, ModelError> {
        judge::run_verdict(self, task, answer, final_images, rubric)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_validation() {
        let client = ModelClient::new(Arc::new(ScriptedChat::new(vec![])), ModelConfig {
            endpoint: "mock".into(),
            model_name: "m".into(),
            params: ChatParams::default(),
        });
        assert!(client.request(vec![]).validate().is_err());
        let img = crate::imaging::solid(2, 2, image::Rgba([0, 0, 0, 255]));
        let bad = client.request(vec![ChatMessage::system("s").with_images(vec![img.clone()])]);
        assert!(matches!(bad.validate(), Err(ModelError::InvalidRequest(_))));
        let ok = client.request(vec![ChatMessage::system("s"), ChatMessage::user("u").with_images(vec![img])]);
        assert!(ok.validate().is_ok());
    }
}
