//! Deterministic stand-in model for tests and offline runs.

use super::{sha256_hex, ChatRequest, Role, ENGAGEMENT_MARKER};

/// Extract the score from the last `[normalized_engagement_score: x]` block.
pub fn parse_injected_score(content: &str) -> Option<f64> {
    let start = content.rfind(ENGAGEMENT_MARKER)? + ENGAGEMENT_MARKER.len();
    let rest = &content[start..];
    let end = rest.find(']')?;
    rest[..end].trim().parse().ok()
}

/// Echo what the model would have seen: the parsed score of the final user
/// message and a prefix of the system prompt hash.
pub fn mock_llm(request: &ChatRequest) -> String {
    let system = request
        .messages
        .iter()
        .find(|m| m.role == Role::System)
        .map(|m| sha256_hex(m.content.as_bytes()))
        .unwrap_or_default();
    let last_user = request.messages.iter().rev().find(|m| m.role == Role::User);
    let score = last_user
        .and_then(|m| parse_injected_score(&m.content))
        .map(|s| format!("{s:.2}"))
        .unwrap_or_else(|| "none".into());
    format!(
        "score_seen={score} prompt={} turns={}",
        &system[..system.len().min(12)],
        request.messages.len()
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ChatMode, ChatTurn, PromptBundle};

    fn request(mode: ChatMode, score: Option<f64>) -> ChatRequest {
        PromptBundle {
            mode,
            history: vec![ChatTurn::user("Explain tides", mode, score, 0.0)],
            model: "mock".into(),
            temperature: None,
        }
        .to_request()
        .unwrap()
    }

    #[test]
    fn echoes_injected_score() {
        let reply = mock_llm(&request(ChatMode::Adaptive, Some(0.42)));
        assert!(reply.starts_with("score_seen=0.42 "), "{reply}");
        let control = mock_llm(&request(ChatMode::Control, Some(0.42)));
        assert!(control.starts_with("score_seen=none "), "{control}");
    }

    #[test]
    fn parser_handles_noise() {
        assert_eq!(
            parse_injected_score("a\n\n[normalized_engagement_score: 0.07]"),
            Some(0.07)
        );
        assert_eq!(parse_injected_score("no marker"), None);
        assert_eq!(
            parse_injected_score("[normalized_engagement_score: x]"),
            None
        );
        assert_eq!(
            parse_injected_score("[normalized_engagement_score: 0.5"),
            None
        );
    }
}
