//! In-process transport answering from a rule table. Used to author replay
//! fixtures and to drive tests without a provider.

use std::sync::Mutex;

use super::{fallback_embed, ChatMessage, Role, Transport, TransportError, FALLBACK_DIM};

/// Request predicate. All set fields must match.
#[derive(Debug, Clone, Default)]
pub struct Match {
    pub model: Option<String>,
    /// Substring of the system message.
    pub system: Option<String>,
    /// Substring of the final user message.
    pub user: Option<String>,
}

impl Match {
    pub fn system(needle: impl Into<String>) -> Self {
        Self {
            system: Some(needle.into()),
            ..Self::default()
        }
    }

    pub fn and_user(mut self, needle: impl Into<String>) -> Self {
        self.user = Some(needle.into());
        self
    }

    pub fn and_model(mut self, model: impl Into<String>) -> Self {
        self.model = Some(model.into());
        self
    }

    fn matches(&self, model: &str, messages: &[ChatMessage]) -> bool {
        if self.model.as_deref().is_some_and(|m| m != model) {
            return false;
        }
        if let Some(needle) = &self.system {
            let hit = messages
                .iter()
                .find(|m| m.role == Role::System)
                .is_some_and(|m| m.content.contains(needle.as_str()));
            if !hit {
                return false;
            }
        }
        if let Some(needle) = &self.user {
            let hit = messages
                .iter()
                .rev()
                .find(|m| m.role == Role::User)
                .is_some_and(|m| m.content.contains(needle.as_str()));
            if !hit {
                return false;
            }
        }
        true
    }
}

struct Rule {
    when: Match,
    responses: Vec<String>,
    served: usize,
}

#[derive(Default)]
struct State {
    rules: Vec<Rule>,
    log: Vec<(String, Vec<ChatMessage>)>,
    embeds: usize,
}

/// Rules are tried in insertion order; the first match answers. A rule with
/// several responses serves them in sequence and then repeats the last one.
#[derive(Default)]
pub struct ScriptedTransport {
    state: Mutex<State>,
}

impl ScriptedTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn on(&self, when: Match, response: impl Into<String>) -> &Self {
        self.on_seq(when, [response.into()])
    }

    pub fn on_seq<I, S>(&self, when: Match, responses: I) -> &Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let responses: Vec<String> = responses.into_iter().map(Into::into).collect();
        assert!(!responses.is_empty(), "a rule needs at least one response");
        self.lock().rules.push(Rule {
            when,
            responses,
            served: 0,
        });
        self
    }

    pub fn chat_calls(&self) -> usize {
        self.lock().log.len()
    }

    pub fn embed_calls(&self) -> usize {
        self.lock().embeds
    }

    /// Every chat request seen so far as `(model, messages)`.
    pub fn requests(&self) -> Vec<(String, Vec<ChatMessage>)> {
        self.lock().log.clone()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }
}

impl Transport for ScriptedTransport {
    fn chat(
        &self,
        model: &str,
        messages: &[ChatMessage],
        _temperature: f32,
    ) -> Result<String, TransportError> {
        let mut state = self.lock();
        state.log.push((model.to_string(), messages.to_vec()));
        let rule = state
            .rules
            .iter_mut()
            .find(|r| r.when.matches(model, messages))
            .ok_or_else(|| {
                let user = messages
                    .iter()
                    .rev()
                    .find(|m| m.role == Role::User)
                    .map(|m| m.content.chars().take(120).collect::<String>())
                    .unwrap_or_default();
                TransportError::fatal(format!("no scripted rule matches request: {user}"))
            })?;
        let idx = rule.served.min(rule.responses.len() - 1);
        rule.served += 1;
        Ok(rule.responses[idx].clone())
    }

    fn embed(&self, _model: &str, text: &str) -> Result<Vec<f32>, TransportError> {
        self.lock().embeds += 1;
        Ok(fallback_embed(text, FALLBACK_DIM))
    }
}
