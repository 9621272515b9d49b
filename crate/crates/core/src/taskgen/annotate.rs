use serde::{Deserialize, Serialize};

use super::prompts::CONFIDENCE_SUFFIX;
use super::TaskgenError;
use crate::imaging::Image;
use crate::model::{ChatMessage, ModelClient, ModelError};

pub const ACCEPT_THRESHOLD: f64 = 0.5;
pub const MAX_ANNOTATION_ATTEMPTS: u32 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub text: String,
    pub confidence: f64,
    pub attempts: u32,
}

impl Annotation {
    pub fn is_accepted(&self, threshold: f64) -> bool {
        self.confidence >= threshold
    }

    pub fn accepted(&self) -> bool {
        self.is_accepted(ACCEPT_THRESHOLD)
    }
}

/// Reads `{"text", "confidence"}` JSON, or a `confidence: x` line with the
/// remaining lines as text. Confidence is clamped to [0, 1].
pub fn parse_annotation(reply: &str) -> Option<(String, f64)> {
    if let (Some(start), Some(end)) = (reply.find('{'), reply.rfind('}')) {
        if start < end {
            if let Ok(v) = serde_json::from_str::<serde_json::Value>(&reply[start..=end]) {
                let text = v["text"].as_str().map(str::to_string);
                let conf = v["confidence"].as_f64().or_else(|| v["confidence"].as_str().and_then(|s| s.trim().parse().ok()));
                if let (Some(t), Some(c)) = (text, conf) {
                    return Some((t.trim().to_string(), c.clamp(0.0, 1.0)));
                }
            }
        }
    }
    let mut conf = None;
    let mut text = Vec::new();
    for line in reply.lines() {
        let lower = line.trim().to_ascii_lowercase();
        if let Some(rest) = lower.strip_prefix("confidence") {
            let rest = rest.trim_start_matches([':', '=', ' ']);
            if let Ok(c) = rest.trim().trim_end_matches('.').parse::<f64>() {
                conf = Some(c.clamp(0.0, 1.0));
                continue;
            }
        }
        text.push(line);
    }
    conf.map(|c| (text.join("\n").trim().to_string(), c))
}

/// Asks the annotator up to `max_attempts` times and returns the first reply
/// with confidence at or above `threshold`. Otherwise the best-scoring reply
/// is returned with `attempts == max_attempts`; callers check
/// [`Annotation::is_accepted`].
pub fn annotate(
    images: &[Image],
    prompt: &str,
    client: &ModelClient,
    threshold: f64,
    max_attempts: u32,
) -> Result<Annotation, TaskgenError> {
    let max_attempts = max_attempts.max(1);
    let mut best = Annotation { text: String::new(), confidence: 0.0, attempts: 0 };
    for attempt in 1..=max_attempts {
        let messages = vec![
            ChatMessage::system("You annotate webpage screenshots for a dataset."),
            ChatMessage::user(format!("{prompt}\n\n{CONFIDENCE_SUFFIX}")).with_images(images.to_vec()),
        ];
        let reply = match client.chat(messages) {
            Ok(r) => r,
            Err(e @ (ModelError::EndpointUnreachable(_) | ModelError::RateLimited)) => {
                return Err(TaskgenError::AnnotatorUnreachable(e))
            }
            Err(e) => {
                tracing::warn!(attempt, error = %e, "annotation request failed");
                continue;
            }
        };
        let (text, confidence) = parse_annotation(&reply).unwrap_or((reply.trim().to_string(), 0.0));
        if confidence >= threshold {
            return Ok(Annotation { text, confidence, attempts: attempt });
        }
        if best.attempts == 0 || confidence > best.confidence {
            best = Annotation { text, confidence, attempts: attempt };
        }
    }
    best.attempts = max_attempts;
    Ok(best)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::model::{ModelConfig, ScriptedChat, ScriptedReply};

    fn client(confs: &[f64]) -> (ModelClient, Arc<ScriptedChat>) {
        let chat = Arc::new(ScriptedChat::texts(confs.iter().map(|c| format!("{{\"text\": \"desc {c}\", \"confidence\": {c}}}"))));
        (ModelClient::new(chat.clone(), ModelConfig { endpoint: "mock".into(), model_name: "a".into(), params: Default::default() }), chat)
    }

    #[test]
    fn first_confident_reply_wins() {
        let (c, _) = client(&[0.9]);
        let a = annotate(&[], "p", &c, 0.5, 3).unwrap();
        assert_eq!((a.attempts, a.accepted()), (1, true));
    }

    #[test]
    fn three_low_replies_are_rejected() {
        let (c, chat) = client(&[0.3, 0.4, 0.45]);
        let a = annotate(&[], "p", &c, 0.5, 3).unwrap();
        assert_eq!(a.attempts, 3);
        assert!(!a.accepted());
        assert_eq!(a.confidence, 0.45);
        assert_eq!(chat.requests().len(), 3);
    }

    #[test]
    fn retry_then_accept() {
        let (c, _) = client(&[0.2, 0.8]);
        let a = annotate(&[], "p", &c, 0.5, 3).unwrap();
        assert_eq!((a.attempts, a.accepted(), a.text.as_str()), (2, true, "desc 0.8"));
    }

    #[test]
    fn unreachable_is_an_error() {
        let chat = Arc::new(ScriptedChat::new(vec![ScriptedReply::Error(ModelError::EndpointUnreachable("down".into()))]));
        let c = ModelClient::new(chat, ModelConfig { endpoint: "mock".into(), model_name: "a".into(), params: Default::default() });
        assert!(matches!(annotate(&[], "p", &c, 0.5, 3), Err(TaskgenError::AnnotatorUnreachable(_))));
    }

    #[test]
    fn line_format() {
        assert_eq!(parse_annotation("The menu opens.\nConfidence: 0.7"), Some(("The menu opens.".into(), 0.7)));
        assert_eq!(parse_annotation("no score"), None);
    }
}
