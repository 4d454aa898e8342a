//! Prompt assembly for response generation.

use serde_json::{json, Map, Value};

use super::llm::{Message, Role};
use super::Conversation;
use crate::map::{inline_json, LanguageEnhancedMap, MapObject};
use crate::spatial::REGISTRY;
use crate::templates::{TemplateError, Templates};

/// Most objects sent to the LLM; larger maps keep the objects nearest the ego.
pub const PROMPT_OBJECT_CAP: usize = 200;

/// Stands in for the operator list when tools are disabled.
pub const NO_TOOLS_NOTICE: &str =
    "(No spatial functions are available for this question. Leave \"spatial_reasoning_functions\" empty and answer directly.)";

/// One line per operator: signature, result kind and meaning.
pub fn operator_api() -> String {
    REGISTRY
        .iter()
        .map(|spec| {
            let params: Vec<&str> = spec.params.iter().map(|(n, _)| *n).collect();
            format!(
                "- {}({}) -> {}: {}",
                spec.name,
                params.join(", "),
                spec.returns,
                spec.description
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn prompt_object(o: &MapObject) -> Value {
    let mut crop = Map::new();
    crop.insert("foreground_text".into(), o.crop_descriptions.foreground_text.clone().into());
    crop.insert("background_text".into(), o.crop_descriptions.background_text.clone().into());
    json!({
        "object_id": o.object_id,
        "position": [o.x(), o.y()],
        "area": o.area_m2,
        "crop_descriptions": crop,
    })
}

/// The objects as the LLM sees them: the four map fields only, one object per
/// line, at most `cap` objects.
pub fn prompt_map_json(map: &LanguageEnhancedMap, cap: usize) -> String {
    let mut objects: Vec<&MapObject> = map.objects.iter().collect();
    if objects.len() > cap {
        objects.sort_by(|a, b| a.range().total_cmp(&b.range()).then(a.object_id.cmp(&b.object_id)));
        objects.truncate(cap);
        objects.sort_by_key(|o| o.object_id);
    }
    if objects.is_empty() {
        return "[]".into();
    }
    let lines: Vec<String> = objects.iter().map(|o| format!("  {}", inline_json(&prompt_object(o)))).collect();
    format!("[\n{}\n]", lines.join(",\n"))
}

pub fn system_prompt(
    map: &LanguageEnhancedMap,
    templates: &Templates,
    tools_enabled: bool,
) -> Result<String, TemplateError> {
    let format = templates.render("response_format", &[])?;
    let api = if tools_enabled { operator_api() } else { NO_TOOLS_NOTICE.to_string() };
    templates.render(
        "response_system",
        &[
            ("response_format", &format),
            ("operator_api", &api),
            ("scene_token", &map.scene_token),
            ("map_json", &prompt_map_json(map, PROMPT_OBJECT_CAP)),
        ],
    )
}

/// System message followed by the conversation turns in order.
pub fn assemble_prompt(
    map: &LanguageEnhancedMap,
    conversation: &Conversation,
    templates: &Templates,
) -> Result<Vec<Message>, TemplateError> {
    let mut messages = Vec::with_capacity(conversation.turns.len() + 1);
    messages.push(Message::new(Role::System, system_prompt(map, templates, conversation.tools_enabled)?));
    messages.extend(conversation.turns.iter().cloned());
    Ok(messages)
}
