//! Response generation: prompts, the structured reply contract, call parsing
//! and evaluation, and the multi-turn tool loop.

pub mod call;
pub mod eval;
pub mod llm;
pub mod prompt;
pub mod response;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use call::{parse_call, Arg, CallExpr, ParseError};
pub use eval::{eval_call, run_call, EvalError, ToolOutput};
pub use llm::{LlmClient, LlmConfig, LlmError, Message, Role, ScriptRule, ScriptedLlm};
pub use prompt::{assemble_prompt, operator_api, prompt_map_json, NO_TOOLS_NOTICE, PROMPT_OBJECT_CAP};
pub use response::{extract_json_object, parse_response, ResponseError, StructuredResponse};

use crate::map::{inline_json, LanguageEnhancedMap, ObjectId};
use crate::templates::{TemplateError, Templates};

pub const DEFAULT_MAX_TOOL_ROUNDS: usize = 3;
pub const MAX_REPAIRS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conversation {
    pub conversation_id: String,
    pub scene_token: String,
    pub turns: Vec<Message>,
    pub max_tool_rounds: usize,
    /// When false the operator list is withheld and requested calls are
    /// never executed; the first reply is final.
    #[serde(default = "tools_on")]
    pub tools_enabled: bool,
}

fn tools_on() -> bool {
    true
}

impl Conversation {
    pub fn new(conversation_id: impl Into<String>, scene_token: impl Into<String>) -> Self {
        Self {
            conversation_id: conversation_id.into(),
            scene_token: scene_token.into(),
            turns: Vec::new(),
            max_tool_rounds: DEFAULT_MAX_TOOL_ROUNDS,
            tools_enabled: true,
        }
    }

    pub fn without_tools(mut self) -> Self {
        self.tools_enabled = false;
        self
    }
}

/// One evaluated call in a tool round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub round: usize,
    pub call: String,
    pub output: ToolOutput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub response: StructuredResponse,
    pub trace: Vec<ToolCall>,
    pub tool_rounds: usize,
    pub repairs: usize,
}

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("configuration error: {0}")]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("malformed LLM response after {repairs} repair attempts: {error}")]
    Malformed { repairs: usize, error: ResponseError, raw: String },
    #[error("tool-round budget of {rounds} exhausted")]
    Budget { rounds: usize, trace: Vec<ToolCall> },
    #[error("conversation is for scene {conversation}, map is {map}")]
    SceneMismatch { conversation: String, map: String },
}

impl OrchestratorError {
    /// Stable short code for service responses.
    pub fn code(&self) -> &'static str {
        match self {
            OrchestratorError::Template(_) => "config",
            OrchestratorError::Llm(LlmError::Transport(_)) => "llm_transport",
            OrchestratorError::Llm(_) => "llm",
            OrchestratorError::Malformed { .. } => "malformed_response",
            OrchestratorError::Budget { .. } => "tool_budget",
            OrchestratorError::SceneMismatch { .. } => "scene_mismatch",
        }
    }
}

fn evaluate_calls(calls: &[String], map: &LanguageEnhancedMap, round: usize) -> Vec<ToolCall> {
    calls
        .iter()
        .map(|text| {
            let output = match parse_call(text) {
                Ok(expr) => run_call(&expr, map),
                Err(e) => ToolOutput::Error { message: e.to_string() },
            };
            ToolCall {
                round,
                call: text.clone(),
                output,
            }
        })
        .collect()
}

fn tool_message(calls: &[ToolCall], templates: &Templates) -> Result<String, TemplateError> {
    let lines: Vec<String> = calls
        .iter()
        .map(|c| format!("{} => {}", c.call, inline_json(&c.output)))
        .collect();
    templates.render("tool_result", &[("results", &lines.join("\n"))])
}

/// Asks the LLM until it returns a reply that parses, re-prompting with the
/// parse error up to [`MAX_REPAIRS`] times.
fn next_response(
    messages: &mut Vec<Message>,
    llm: &dyn LlmClient,
    templates: &Templates,
    repairs: &mut usize,
) -> Result<(String, StructuredResponse), OrchestratorError> {
    let mut attempt = 0;
    loop {
        let raw = llm.complete(messages)?;
        match parse_response(&raw) {
            Ok(resp) => return Ok((raw, resp)),
            Err(error) if attempt == MAX_REPAIRS => {
                return Err(OrchestratorError::Malformed {
                    repairs: attempt,
                    error,
                    raw,
                })
            }
            Err(error) => {
                attempt += 1;
                *repairs += 1;
                let repair = templates.render("repair", &[("error", &error.to_string())])?;
                messages.push(Message::new(Role::Assistant, raw));
                messages.push(Message::new(Role::User, repair));
            }
        }
    }
}

/// Runs one user turn: query the LLM, evaluate requested calls, feed results
/// back, and stop at a reply that carries an answer or requests no calls.
/// Calls listed alongside an answer are still evaluated for the trace.
///
/// On success the user, assistant and tool turns are appended to
/// `conversation`; on error it is left unchanged.
pub fn answer_query(
    map: &LanguageEnhancedMap,
    conversation: &mut Conversation,
    query: &str,
    llm: &dyn LlmClient,
    templates: &Templates,
) -> Result<QueryOutcome, OrchestratorError> {
    if conversation.scene_token != map.scene_token {
        return Err(OrchestratorError::SceneMismatch {
            conversation: conversation.scene_token.clone(),
            map: map.scene_token.clone(),
        });
    }
    let mut turns = conversation.turns.clone();
    turns.push(Message::new(Role::User, query));
    let mut staged = Conversation {
        turns,
        ..conversation.clone()
    };
    let mut trace = Vec::new();
    let mut repairs = 0;
    let mut rounds = 0;
    let mut response = loop {
        let mut messages = assemble_prompt(map, &staged, templates)?;
        let (raw, resp) = next_response(&mut messages, llm, templates, &mut repairs)?;
        staged.turns.push(Message::new(Role::Assistant, raw));
        if !staged.tools_enabled || resp.spatial_reasoning_functions.is_empty() {
            break resp;
        }
        if resp.answer.is_some() {
            trace.extend(evaluate_calls(&resp.spatial_reasoning_functions, map, rounds + 1));
            break resp;
        }
        if rounds == staged.max_tool_rounds {
            return Err(OrchestratorError::Budget { rounds, trace });
        }
        rounds += 1;
        let results = evaluate_calls(&resp.spatial_reasoning_functions, map, rounds);
        staged.turns.push(Message::new(Role::Tool, tool_message(&results, templates)?));
        trace.extend(results);
    };
    let referenced: BTreeSet<ObjectId> = trace
        .iter()
        .flat_map(|c| c.output.referenced_ids().iter().copied())
        .collect();
    response.referenced_object_ids = referenced.into_iter().collect();
    *conversation = staged;
    Ok(QueryOutcome {
        response,
        trace,
        tool_rounds: rounds,
        repairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridMeta;
    use crate::map::{BevSource, Provenance};
    use crate::spatial::tests::obj;

    fn map() -> LanguageEnhancedMap {
        let mut car = obj(1, 3.0, 4.0);
        car.crop_descriptions.foreground_text = "a white sedan with its parking lights on, reversing".into();
        LanguageEnhancedMap::new(
            "scene-1",
            GridMeta::default(),
            Provenance::new("mock", BevSource::Synthetic),
            vec![car, obj(2, -10.0, 0.0)],
        )
    }

    fn reply(calls: &[&str], answer: Option<&str>) -> String {
        let mut v = serde_json::json!({
            "inferred_query": "q",
            "query_achievable": true,
            "spatial_reasoning_functions": calls,
            "explanation": "e",
        });
        if let Some(a) = answer {
            v["answer"] = a.into();
        }
        v.to_string()
    }

    fn rule(pattern: &str, turn: Option<usize>, reply: String) -> ScriptRule {
        ScriptRule {
            pattern: regex::Regex::new(pattern).unwrap(),
            reply,
            turn,
            scene: None,
        }
    }

    fn ask(llm: &ScriptedLlm, query: &str) -> (Conversation, Result<QueryOutcome, OrchestratorError>) {
        let mut c = Conversation::new("c", "scene-1");
        let out = answer_query(&map(), &mut c, query, llm, &Templates::builtin());
        (c, out)
    }

    #[test]
    fn distance_tool_round() {
        let llm = ScriptedLlm::new(vec![
            rule("far", Some(0), reply(&["obj_distance(objs, 1)"], None)),
            rule("far", Some(1), reply(&[], Some("5 m"))),
        ]);
        let (c, out) = ask(&llm, "how far is object 1?");
        let out = out.unwrap();
        assert_eq!(out.tool_rounds, 1);
        assert_eq!(
            out.trace[0].output,
            ToolOutput::Distance {
                meters: 5.0,
                object_ids: vec![1]
            }
        );
        assert_eq!(out.response.referenced_object_ids, vec![1]);
        let roles: Vec<Role> = c.turns.iter().map(|m| m.role).collect();
        assert_eq!(roles, [Role::User, Role::Assistant, Role::Tool, Role::Assistant]);
        assert!(c.turns[2].content.contains("\"meters\": 5"));
    }

    #[test]
    fn unachievable_returned_unchanged() {
        let text = r#"{"inferred_query": "weather", "query_achievable": false, "spatial_reasoning_functions": [], "explanation": "no weather in the map"}"#;
        let llm = ScriptedLlm::new(vec![rule(".*", None, text.into())]);
        let out = ask(&llm, "is it raining?").1.unwrap();
        assert_eq!(out.tool_rounds, 0);
        assert!(out.trace.is_empty());
        assert_eq!(out.response, parse_response(text).unwrap());
    }

    #[test]
    fn reversing_car_replay() {
        let llm = ScriptedLlm::new(vec![
            rule("safe", Some(0), reply(&["k_closest(front_filter(objs), 1)"], None)),
            rule(
                "safe",
                Some(1),
                reply(
                    &[],
                    Some("Object 1 ahead has its parking lights on and is reversing towards us. It is unsafe to continue moving forward."),
                ),
            ),
        ]);
        let out = ask(&llm, "Is it safe to keep driving forward?").1.unwrap();
        let answer = out.response.answer.unwrap();
        assert!(answer.contains("unsafe"));
        assert!(answer.contains("parking lights"));
        assert!(map().objects[0].crop_descriptions.foreground_text.contains("parking lights"));
        assert_eq!(out.response.referenced_object_ids, vec![1]);
    }

    #[test]
    fn repairs_then_malformed() {
        let llm = ScriptedLlm::new(vec![
            rule("could not be used", None, "still not json".into()),
            rule(".*", None, "```\nnot json\n```".into()),
        ]);
        let (c, out) = ask(&llm, "hello");
        match out {
            Err(OrchestratorError::Malformed { repairs, .. }) => assert_eq!(repairs, MAX_REPAIRS),
            other => panic!("{other:?}"),
        }
        assert!(c.turns.is_empty());

        let llm = ScriptedLlm::new(vec![
            rule("could not be used", None, reply(&[], Some("ok"))),
            rule(".*", None, "oops".into()),
        ]);
        let out = ask(&llm, "hello").1.unwrap();
        assert_eq!(out.repairs, 1);
        assert_eq!(out.response.answer.as_deref(), Some("ok"));
    }

    #[test]
    fn budget_and_bad_calls() {
        let llm = ScriptedLlm::new(vec![rule(".*", None, reply(&["rm_rf(objs)", "k_closest(objs, 1)"], None))]);
        match ask(&llm, "loop").1 {
            Err(OrchestratorError::Budget { rounds, trace }) => {
                assert_eq!(rounds, DEFAULT_MAX_TOOL_ROUNDS);
                assert_eq!(trace.len(), 2 * DEFAULT_MAX_TOOL_ROUNDS);
                assert!(matches!(&trace[0].output, ToolOutput::Error { message } if message.contains("rm_rf")));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn tools_disabled() {
        let llm = ScriptedLlm::new(vec![
            ScriptRule {
                scene: Some(NO_TOOLS_NOTICE.into()),
                ..rule(".*", Some(0), reply(&["k_closest(objs, 1)"], Some("object 2")))
            },
            rule(".*", None, "unreachable".into()),
        ]);
        let mut c = Conversation::new("c", "scene-1").without_tools();
        let out = answer_query(&map(), &mut c, "closest?", &llm, &Templates::builtin()).unwrap();
        assert!(out.trace.is_empty());
        assert!(out.response.referenced_object_ids.is_empty());
        assert_eq!(out.response.answer.as_deref(), Some("object 2"));
    }

    #[test]
    fn transport_surfaces() {
        struct Down;
        impl LlmClient for Down {
            fn name(&self) -> &str {
                "down"
            }
            fn complete(&self, _: &[Message]) -> Result<String, LlmError> {
                Err(LlmError::Transport("connection refused".into()))
            }
        }
        let mut c = Conversation::new("c", "scene-1");
        let err = answer_query(&map(), &mut c, "x", &Down, &Templates::builtin()).unwrap_err();
        assert_eq!(err.code(), "llm_transport");
    }

    #[test]
    fn follow_up_turns_accumulate() {
        let llm = ScriptedLlm::new(vec![
            rule("first", Some(0), reply(&["rear_filter(objs)"], Some("object 2 is behind"))),
            rule("second", Some(0), reply(&[], Some("yes"))),
        ]);
        let mut c = Conversation::new("c", "scene-1");
        let t = Templates::builtin();
        let a = answer_query(&map(), &mut c, "first", &llm, &t).unwrap();
        assert_eq!(a.response.referenced_object_ids, vec![2]);
        assert_eq!(a.tool_rounds, 0);
        answer_query(&map(), &mut c, "second", &llm, &t).unwrap();
        assert_eq!(c.turns.len(), 4);
        let mut other = Conversation::new("c", "other");
        assert!(matches!(
            answer_query(&map(), &mut other, "x", &llm, &t),
            Err(OrchestratorError::SceneMismatch { .. })
        ));
    }
}
