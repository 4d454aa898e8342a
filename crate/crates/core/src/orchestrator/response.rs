//! The structured reply format and its extraction from free LLM text.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::map::ObjectId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredResponse {
    pub inferred_query: String,
    pub query_achievable: bool,
    pub spatial_reasoning_functions: Vec<String>,
    pub explanation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    /// Filled by the orchestrator from evaluated calls, never by the LLM.
    #[serde(default)]
    pub referenced_object_ids: Vec<ObjectId>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResponseError {
    #[error("no JSON object found in the reply")]
    NoJson,
    #[error("reply JSON is invalid: {0}")]
    Json(String),
    #[error("field `{field}`: {message}")]
    Field { field: &'static str, message: String },
}

/// Returns the first balanced `{...}` in `text`, skipping braces inside JSON
/// strings. Code fences and prose around the object are ignored.
pub fn extract_json_object(text: &str) -> Option<&str> {
    let bytes = text.as_bytes();
    let mut search = 0;
    while let Some(rel) = text[search..].find('{') {
        let start = search + rel;
        let mut depth = 0usize;
        let mut in_string = false;
        let mut escaped = false;
        for (i, &b) in bytes.iter().enumerate().skip(start) {
            if in_string {
                match b {
                    _ if escaped => escaped = false,
                    b'\\' => escaped = true,
                    b'"' => in_string = false,
                    _ => {}
                }
                continue;
            }
            match b {
                b'"' => in_string = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        let candidate = &text[start..=i];
                        if serde_json::from_str::<Value>(candidate).is_ok() {
                            return Some(candidate);
                        }
                        break;
                    }
                }
                _ => {}
            }
        }
        search = start + 1;
    }
    None
}

fn field<'v>(obj: &'v serde_json::Map<String, Value>, name: &'static str) -> Result<&'v Value, ResponseError> {
    obj.get(name).ok_or(ResponseError::Field {
        field: name,
        message: "missing".into(),
    })
}

fn string_field(obj: &serde_json::Map<String, Value>, name: &'static str) -> Result<String, ResponseError> {
    match field(obj, name)? {
        Value::String(s) => Ok(s.clone()),
        other => Err(ResponseError::Field {
            field: name,
            message: format!("expected a string, got {other}"),
        }),
    }
}

/// Parses an LLM reply. The four core fields are required; `answer` may be
/// a string or a scalar, which is stringified.
pub fn parse_response(text: &str) -> Result<StructuredResponse, ResponseError> {
    let json = extract_json_object(text).ok_or(ResponseError::NoJson)?;
    let value: Value = serde_json::from_str(json).map_err(|e| ResponseError::Json(e.to_string()))?;
    let Value::Object(obj) = value else {
        return Err(ResponseError::NoJson);
    };
    let query_achievable = match field(&obj, "query_achievable")? {
        Value::Bool(b) => *b,
        other => {
            return Err(ResponseError::Field {
                field: "query_achievable",
                message: format!("expected true or false, got {other}"),
            })
        }
    };
    let calls = match field(&obj, "spatial_reasoning_functions")? {
        Value::Array(items) => items
            .iter()
            .map(|v| match v {
                Value::String(s) => Ok(s.clone()),
                other => Err(ResponseError::Field {
                    field: "spatial_reasoning_functions",
                    message: format!("expected call strings, got {other}"),
                }),
            })
            .collect::<Result<Vec<_>, _>>()?,
        Value::Null => Vec::new(),
        other => {
            return Err(ResponseError::Field {
                field: "spatial_reasoning_functions",
                message: format!("expected a list, got {other}"),
            })
        }
    };
    let answer = match obj.get("answer") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(v @ (Value::Number(_) | Value::Bool(_))) => Some(v.to_string()),
        Some(other) => {
            return Err(ResponseError::Field {
                field: "answer",
                message: format!("expected a string, got {other}"),
            })
        }
    };
    Ok(StructuredResponse {
        inferred_query: string_field(&obj, "inferred_query")?,
        query_achievable,
        spatial_reasoning_functions: calls,
        explanation: string_field(&obj, "explanation")?,
        answer,
        referenced_object_ids: Vec::new(),
    })
}
