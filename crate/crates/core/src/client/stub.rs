use std::collections::{BTreeMap, VecDeque};
use std::sync::{Arc, Mutex};

use super::{AuditEntry, ChatBackend, DecodingParams, Message, ModelError, Role};

/// Returns canned replies in order, whatever the request. Clones share the
/// same script and request log.
#[derive(Clone, Default)]
pub struct ScriptedBackend {
    inner: Arc<Mutex<ScriptState>>,
}

#[derive(Default)]
struct ScriptState {
    replies: VecDeque<String>,
    requests: Vec<Vec<Message>>,
}

impl ScriptedBackend {
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ScriptedBackend {
            inner: Arc::new(Mutex::new(ScriptState {
                replies: replies.into_iter().map(Into::into).collect(),
                requests: Vec::new(),
            })),
        }
    }

    /// Every request received so far, oldest first.
    pub fn requests(&self) -> Vec<Vec<Message>> {
        self.inner.lock().unwrap().requests.clone()
    }

    pub fn remaining(&self) -> usize {
        self.inner.lock().unwrap().replies.len()
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, messages: &[Message], _params: &DecodingParams) -> Result<String, ModelError> {
        let mut state = self.inner.lock().unwrap();
        state.requests.push(messages.to_vec());
        state.replies.pop_front().ok_or(ModelError::ScriptExhausted)
    }
}

type Responder = dyn Fn(&[Message]) -> Result<String, ModelError> + Send + Sync;

/// Computes each reply from the conversation. Useful for stubs that must
/// stay deterministic under parallel use.
pub struct FnBackend {
    respond: Box<Responder>,
}

impl FnBackend {
    pub fn new(respond: impl Fn(&[Message]) -> Result<String, ModelError> + Send + Sync + 'static) -> Self {
        FnBackend {
            respond: Box::new(respond),
        }
    }
}

impl ChatBackend for FnBackend {
    fn complete(&self, messages: &[Message], _params: &DecodingParams) -> Result<String, ModelError> {
        (self.respond)(messages)
    }
}

/// Answers from a recorded transcript: a request is looked up by its exact
/// message history. Identical histories are answered in logged order.
pub struct ReplayBackend {
    replies: Mutex<BTreeMap<String, VecDeque<String>>>,
}

impl ReplayBackend {
    pub fn from_entries(entries: &[AuditEntry]) -> Self {
        let mut sessions: BTreeMap<&str, Vec<&AuditEntry>> = BTreeMap::new();
        for entry in entries {
            sessions.entry(entry.session_id.as_str()).or_default().push(entry);
        }
        let mut replies: BTreeMap<String, VecDeque<String>> = BTreeMap::new();
        // Session ids are "s<n>"; replay them in numeric order.
        let mut ordered: Vec<_> = sessions.into_iter().collect();
        ordered.sort_by_key(|(id, _)| (id.trim_start_matches('s').parse::<u64>().unwrap_or(u64::MAX), id.to_string()));
        for (_, mut turns) in ordered {
            turns.sort_by_key(|e| e.turn);
            let mut history: Vec<Message> = Vec::new();
            for entry in turns {
                if entry.role == Role::Assistant {
                    replies
                        .entry(history_key(&history))
                        .or_default()
                        .push_back(entry.content.clone());
                }
                history.push(Message::new(entry.role, entry.content.clone()));
            }
        }
        ReplayBackend {
            replies: Mutex::new(replies),
        }
    }
}

fn history_key(messages: &[Message]) -> String {
    serde_json::to_string(messages).expect("messages serialize")
}

impl ChatBackend for ReplayBackend {
    fn complete(&self, messages: &[Message], _params: &DecodingParams) -> Result<String, ModelError> {
        let mut replies = self.replies.lock().unwrap();
        replies
            .get_mut(&history_key(messages))
            .and_then(VecDeque::pop_front)
            .ok_or(ModelError::ReplayMiss)
    }
}
