use std::collections::VecDeque;
use std::sync::Mutex;

use super::{ChatBackend, ChatRequest, ModelError};

#[derive(Debug, Clone, PartialEq)]
pub enum ScriptedReply {
    Text(String),
    Error(ModelError),
}

/// Backend that replays a fixed list of replies and records every request.
/// Once the script is exhausted the last reply repeats.
#[derive(Debug, Default)]
pub struct ScriptedChat {
    replies: Mutex<VecDeque<ScriptedReply>>,
    last: Mutex<Option<ScriptedReply>>,
    requests: Mutex<Vec<ChatRequest>>,
}

impl ScriptedChat {
    pub fn new(replies: Vec<ScriptedReply>) -> Self {
        Self { replies: Mutex::new(replies.into()), ..Default::default() }
    }

    pub fn texts<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        Self::new(replies.into_iter().map(|s| ScriptedReply::Text(s.into())).collect())
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.requests.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

impl ChatBackend for ScriptedChat {
    fn complete(&self, req: &ChatRequest) -> Result<String, ModelError> {
        self.requests.lock().unwrap_or_else(|e| e.into_inner()).push(req.clone());
        let next = self.replies.lock().unwrap_or_else(|e| e.into_inner()).pop_front();
        let mut last = self.last.lock().unwrap_or_else(|e| e.into_inner());
        let reply = match next {
            Some(r) => {
                *last = Some(r.clone());
                r
            }
            None => last.clone().ok_or_else(|| ModelError::EndpointUnreachable("script is empty".into()))?,
        };
        match reply {
            ScriptedReply::Text(t) => Ok(t),
            ScriptedReply::Error(e) => Err(e),
        }
    }
}
