use super::{ChatMessage, ModelClient, ModelError};
use crate::imaging::Image;

pub const JUDGE_MAX_ATTEMPTS: u32 = 3;

/// Versioned judge instructions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JudgeRubric {
    pub version: String,
    pub instructions: String,
}

impl Default for JudgeRubric {
    fn default() -> Self {
        Self {
            version: "cogweb-judge/1".into(),
            instructions: "You are grading a web agent's answer about a webpage. Compare the model answer with the \
reference answer and the attached screenshots. Judge quality, relevance and factual accuracy.\n\
5 = fully correct and complete; 4 = correct with minor omissions; 3 = partially correct; \
2 = mostly incorrect; 1 = wrong or irrelevant.\n\
Reply with exactly one line of the form `Score: N` where N is an integer from 1 to 5."
                .into(),
        }
    }
}

/// First integer in the text, accepted only if within 1..=5.
pub fn parse_judge_score(text: &str) -> Option<u8> {
    let mut digits = String::new();
    for ch in text.chars() {
        if ch.is_ascii_digit() {
            digits.push(ch);
        } else if !digits.is_empty() {
            break;
        }
    }
    let n: u32 = digits.parse().ok()?;
    (1..=5).contains(&n).then_some(n as u8)
}

/// `success` / `failure` (case-insensitive); whichever appears first wins.
pub fn parse_verdict(text: &str) -> Option<bool> {
    let lower = text.to_ascii_lowercase();
    let s = lower.find("success");
    let f = lower.find("fail");
    match (s, f) {
        (Some(s), Some(f)) => Some(s < f),
        (Some(_), None) => Some(true),
        (None, Some(_)) => Some(false),
        (None, None) => None,
    }
}

pub(super) fn run_judge(
    client: &ModelClient,
    pred: &str,
    gold: &str,
    images: &[Image],
    rubric: &JudgeRubric,
) -> Result<u8, ModelError> {
    let user = format!("Reference answer:\n{gold}\n\nModel answer:\n{pred}\n\nScore the model answer.");
    let mut last = String::new();
    for _ in 0..JUDGE_MAX_ATTEMPTS {
        let reply = client.chat(vec![
            ChatMessage::system(rubric.instructions.clone()),
            ChatMessage::user(user.clone()).with_images(images.to_vec()),
        ])?;
        if let Some(score) = parse_judge_score(&reply) {
            return Ok(score);
        }
        last = reply;
    }
    Err(ModelError::JudgeParseError { attempts: JUDGE_MAX_ATTEMPTS, last })
}

pub(super) fn run_verdict(
    client: &ModelClient,
    task: &str,
    answer: &str,
    images: &[Image],
    rubric: &JudgeRubric,
) -> Result<bool, ModelError> {
    let system = format!(
        "{}\n\nFor this request ignore the score format. Decide whether the agent completed the task. \
Answer with a single word: SUCCESS or FAILURE.",
        rubric.instructions
    );
    let user = format!("Task:\n{task}\n\nAgent's final answer:\n{answer}\n\nThe final screenshots are attached.");
    let mut last = String::new();
    for _ in 0..JUDGE_MAX_ATTEMPTS {
        let reply = client.chat(vec![ChatMessage::system(system.clone()), ChatMessage::user(user.clone()).with_images(images.to_vec())])?;
        if let Some(v) = parse_verdict(&reply) {
            return Ok(v);
        }
        last = reply;
    }
    Err(ModelError::JudgeParseError { attempts: JUDGE_MAX_ATTEMPTS, last })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::model::{ChatParams, ModelConfig, ScriptedChat, ScriptedReply};

    fn client(replies: Vec<&str>) -> (ModelClient, Arc<ScriptedChat>) {
        let chat = Arc::new(ScriptedChat::new(replies.into_iter().map(|r| ScriptedReply::Text(r.into())).collect()));
        let c = ModelClient::new(
            chat.clone(),
            ModelConfig { endpoint: "mock".into(), model_name: "judge".into(), params: ChatParams::default() },
        );
        (c, chat)
    }

    #[test]
    fn score_parsing() {
        assert_eq!(parse_judge_score("Score: 4"), Some(4));
        assert_eq!(parse_judge_score("Score: 4/5"), Some(4));
        assert_eq!(parse_judge_score("I would give it a 7"), None);
        assert_eq!(parse_judge_score("Score: 0"), None);
        assert_eq!(parse_judge_score("pretty good overall"), None);
    }

    #[test]
    fn judge_returns_parsed_score() {
        let (c, _) = client(vec!["Score: 4"]);
        assert_eq!(c.judge("p", "g", &[], &JudgeRubric::default()).unwrap(), 4);
    }

    #[test]
    fn judge_gives_up_after_three_unparseable_replies() {
        let (c, chat) = client(vec!["looks fine", "quite good", "nice"]);
        let err = c.judge("p", "g", &[], &JudgeRubric::default()).unwrap_err();
        assert!(matches!(err, ModelError::JudgeParseError { attempts: 3, .. }));
        assert_eq!(chat.requests().len(), 3);
    }

    #[test]
    fn out_of_range_scores_are_retried() {
        let (c, chat) = client(vec!["Score: 9", "Score: 3"]);
        assert_eq!(c.judge("p", "g", &[], &JudgeRubric::default()).unwrap(), 3);
        assert_eq!(chat.requests().len(), 2);
    }

    #[test]
    fn verdicts() {
        assert_eq!(parse_verdict("SUCCESS"), Some(true));
        assert_eq!(parse_verdict("The task was a failure, not a success"), Some(false));
        assert_eq!(parse_verdict("unclear"), None);
        let (c, _) = client(vec!["success"]);
        assert!(c.verdict("t", "a", &[], &JudgeRubric::default()).unwrap());
    }
}
