//! Prompt assembly and hidden score injection for chat-completion requests.

mod mock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use mock::{mock_llm, parse_injected_score};

const ADAPTIVE_PROMPT: &str = include_str!("../../../../prompts/neurochat_system.md");
const CONTROL_PROMPT: &str = include_str!("../../../../prompts/control_system.md");

/// Opening of the block appended to adaptive user messages on the wire.
pub const ENGAGEMENT_MARKER: &str = "[normalized_engagement_score:";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("contract violation: {0}")]
    Contract(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChatMode {
    /// Engagement-aware tutor with the score injected into user messages.
    Adaptive,
    /// Plain tutor prompt, no injection.
    Control,
}

impl ChatMode {
    pub fn system_prompt(self) -> &'static str {
        match self {
            ChatMode::Adaptive => ADAPTIVE_PROMPT,
            ChatMode::Control => CONTROL_PROMPT,
        }
    }

    pub fn system_prompt_sha256(self) -> String {
        sha256_hex(self.system_prompt().as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

/// One stored chat message. `visible_text` is what the learner typed or saw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub role: Role,
    pub visible_text: String,
    /// Score sent with an adaptive user message.
    pub injected_score: Option<f64>,
    /// The frozen score was the neutral default (no reading yet).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub default_score: bool,
    pub mode: ChatMode,
    pub t_ms: f64,
    /// Hash of the system prompt that produced an assistant turn.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_prompt_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<u64>,
}

impl ChatTurn {
    /// A user turn; the score is kept only in adaptive mode.
    pub fn user(text: impl Into<String>, mode: ChatMode, score: Option<f64>, t_ms: f64) -> Self {
        Self {
            role: Role::User,
            visible_text: text.into(),
            injected_score: match mode {
                ChatMode::Adaptive => score.map(round2),
                ChatMode::Control => None,
            },
            default_score: false,
            mode,
            t_ms,
            system_prompt_sha256: None,
            latency_ms: None,
        }
    }

    pub fn assistant(text: impl Into<String>, mode: ChatMode, t_ms: f64) -> Self {
        Self {
            role: Role::Assistant,
            visible_text: text.into(),
            injected_score: None,
            default_score: false,
            mode,
            t_ms,
            system_prompt_sha256: Some(mode.system_prompt_sha256()),
            latency_ms: None,
        }
    }

    /// Content as sent to the model.
    pub fn wire_content(&self) -> Result<String, LlmError> {
        match (self.role, self.injected_score) {
            (Role::User, Some(score)) => inject_engagement(&self.visible_text, score),
            _ => Ok(self.visible_text.clone()),
        }
    }
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Append the hidden score block to a user message.
pub fn inject_engagement(user_text: &str, score: f64) -> Result<String, LlmError> {
    if !(0.0..=1.0).contains(&score) {
        return Err(LlmError::Contract(format!("score {score} outside [0, 1]")));
    }
    Ok(format!("{user_text}\n\n{ENGAGEMENT_MARKER} {score:.2}]"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireMessage {
    pub role: Role,
    pub content: String,
}

/// Body of a chat-completion request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<WireMessage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
}

/// Everything needed to build one request.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptBundle {
    pub mode: ChatMode,
    /// Prior turns plus the new user turn last.
    pub history: Vec<ChatTurn>,
    pub model: String,
    pub temperature: Option<f64>,
}

impl PromptBundle {
    /// System message followed by the history, checked for strict
    /// user/assistant alternation ending on a user turn. Control mode sends
    /// visible text only, even for turns stored with a score.
    pub fn to_request(&self) -> Result<ChatRequest, LlmError> {
        let mut messages = Vec::with_capacity(self.history.len() + 1);
        messages.push(WireMessage {
            role: Role::System,
            content: self.mode.system_prompt().to_string(),
        });
        for (i, turn) in self.history.iter().enumerate() {
            let expected = if i % 2 == 0 {
                Role::User
            } else {
                Role::Assistant
            };
            if turn.role != expected {
                return Err(LlmError::Contract(format!(
                    "turn {i} is {:?}, expected {expected:?}",
                    turn.role
                )));
            }
            let content = match self.mode {
                ChatMode::Adaptive => turn.wire_content()?,
                ChatMode::Control => turn.visible_text.clone(),
            };
            messages.push(WireMessage {
                role: turn.role,
                content,
            });
        }
        if self.history.last().map(|t| t.role) != Some(Role::User) {
            return Err(LlmError::Contract(
                "history must end with a user turn".into(),
            ));
        }
        Ok(ChatRequest {
            model: self.model.clone(),
            messages,
            temperature: self.temperature,
        })
    }
}
