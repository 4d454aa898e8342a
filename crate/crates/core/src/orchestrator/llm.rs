//! LLM client contract and the scripted test double.

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    /// The backend could not be reached or answered with a non-success status.
    #[error("LLM transport error: {0}")]
    Transport(String),
    /// The backend answered but declined or returned nothing usable.
    #[error("LLM refused: {0}")]
    Refusal(String),
    /// A scripted client has no rule for the conversation.
    #[error("LLM script error: {0}")]
    Script(String),
}

impl LlmError {
    pub fn is_transport(&self) -> bool {
        matches!(self, LlmError::Transport(_))
    }
}

pub trait LlmClient: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, messages: &[Message]) -> Result<String, LlmError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model_id: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_temperature() -> f64 {
    0.7
}

fn default_timeout_ms() -> u64 {
    60_000
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8081/v1/complete".into(),
            model_id: "default".into(),
            temperature: default_temperature(),
            timeout_ms: default_timeout_ms(),
        }
    }
}

/// One rule of a scripted dialogue.
#[derive(Debug, Clone)]
pub struct ScriptRule {
    pub pattern: Regex,
    /// Reply text; `$1`, `${name}` expand to captures of `pattern`.
    pub reply: String,
    /// Assistant replies since the last user message this rule applies to.
    pub turn: Option<usize>,
    /// Substring the system message must contain, e.g. a scene token.
    /// Spelled `scene` or `system` in script files.
    pub scene: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleRecord {
    #[serde(rename = "match")]
    pattern: String,
    reply: Value,
    #[serde(default)]
    turn: Option<usize>,
    #[serde(default, alias = "system")]
    scene: Option<String>,
}

/// Deterministic LLM: the first rule matching the last user message (and the
/// optional turn and scene keys) supplies the reply.
#[derive(Debug, Clone, Default)]
pub struct ScriptedLlm {
    name: String,
    rules: Vec<ScriptRule>,
}

impl ScriptedLlm {
    pub fn new(rules: Vec<ScriptRule>) -> Self {
        Self {
            name: "scripted".into(),
            rules,
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Reads a JSON list of `{"match", "reply", "turn"?, "scene"?}` objects.
    /// A non-string reply is sent as its JSON text.
    pub fn from_json(text: &str) -> Result<Self, LlmError> {
        let records: Vec<RuleRecord> =
            serde_json::from_str(text).map_err(|e| LlmError::Script(format!("invalid script: {e}")))?;
        let rules = records
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                let pattern = Regex::new(&r.pattern)
                    .map_err(|e| LlmError::Script(format!("rule {i}: bad pattern: {e}")))?;
                let reply = match r.reply {
                    Value::String(s) => s,
                    other => other.to_string(),
                };
                Ok(ScriptRule {
                    pattern,
                    reply,
                    turn: r.turn,
                    scene: r.scene,
                })
            })
            .collect::<Result<_, LlmError>>()?;
        Ok(Self::new(rules))
    }

    pub fn rules(&self) -> &[ScriptRule] {
        &self.rules
    }
}

/// Index of the last user message and the number of assistant replies after it.
fn dialogue_position(messages: &[Message]) -> Option<(usize, usize)> {
    let last_user = messages.iter().rposition(|m| m.role == Role::User)?;
    let turn = messages[last_user..]
        .iter()
        .filter(|m| m.role == Role::Assistant)
        .count();
    Some((last_user, turn))
}

impl LlmClient for ScriptedLlm {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, messages: &[Message]) -> Result<String, LlmError> {
        let (last_user, turn) =
            dialogue_position(messages).ok_or_else(|| LlmError::Script("no user message".into()))?;
        let query = &messages[last_user].content;
        let system = messages
            .iter()
            .find(|m| m.role == Role::System)
            .map_or("", |m| m.content.as_str());
        for rule in &self.rules {
            if rule.turn.is_some_and(|t| t != turn) {
                continue;
            }
            if rule.scene.as_ref().is_some_and(|s| !system.contains(s.as_str())) {
                continue;
            }
            if let Some(caps) = rule.pattern.captures(query) {
                let mut out = String::new();
                caps.expand(&rule.reply, &mut out);
                return Ok(out);
            }
        }
        Err(LlmError::Script(format!("no rule for turn {turn} of {query:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn convo(turns: &[(Role, &str)]) -> Vec<Message> {
        turns.iter().map(|(r, c)| Message::new(*r, *c)).collect()
    }

    #[test]
    fn script_keys() {
        let llm = ScriptedLlm::from_json(
            r#"[
                {"match": "object (\\d+)", "turn": 0, "reply": {"calls": ["obj_distance(objs, $1)"]}},
                {"match": "object (\\d+)", "turn": 1, "reply": "done with $1"},
                {"match": ".*", "scene": "scene-b", "reply": "b"}
            ]"#,
        )
        .unwrap();
        let m = convo(&[(Role::System, "scene-a"), (Role::User, "how far is object 12?")]);
        assert_eq!(llm.complete(&m).unwrap(), r#"{"calls":["obj_distance(objs, 12)"]}"#);
        let m = convo(&[
            (Role::System, "scene-a"),
            (Role::User, "how far is object 12?"),
            (Role::Assistant, "x"),
            (Role::Tool, "y"),
        ]);
        assert_eq!(llm.complete(&m).unwrap(), "done with 12");
        let m = convo(&[(Role::System, "scene-b"), (Role::User, "hello")]);
        assert_eq!(llm.complete(&m).unwrap(), "b");
        let m = convo(&[(Role::System, "scene-a"), (Role::User, "hello")]);
        assert!(matches!(llm.complete(&m), Err(LlmError::Script(_))));
    }

    #[test]
    fn bad_scripts() {
        assert!(ScriptedLlm::from_json("{}").is_err());
        assert!(ScriptedLlm::from_json(r#"[{"match": "(", "reply": ""}]"#).is_err());
        assert!(ScriptedLlm::from_json(r#"[{"match": "a", "reply": "", "extra": 1}]"#).is_err());
    }

    #[test]
    fn transport_is_distinct() {
        assert!(LlmError::Transport("down".into()).is_transport());
        assert!(!LlmError::Refusal("no".into()).is_transport());
        assert_eq!(LlmConfig::default().temperature, 0.7);
    }
}
