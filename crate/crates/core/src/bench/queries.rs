//! Spatial queries with set or distance answers, and the scripted LLM that
//! answers them (and anything else the harness asks) deterministically.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde_json::json;

use super::{stable_hash, Expected, SpatialQuery};
use crate::map::LanguageEnhancedMap;
use crate::orchestrator::{eval_call, parse_call, ScriptRule, ScriptedLlm, NO_TOOLS_NOTICE};
use crate::spatial::SpatialValue;

pub const DEFAULT_QUERIES_PER_SCENE: usize = 25;

/// A spatial query pattern. `{a}`/`{b}` are object ids, `{k}` a count and
/// `{d}` whole meters; `call` uses the same placeholders.
#[derive(Debug, Clone, Copy)]
pub struct QueryTemplate {
    pub name: &'static str,
    pub text: &'static str,
    pub call: &'static str,
}

const fn t(name: &'static str, text: &'static str, call: &'static str) -> QueryTemplate {
    QueryTemplate { name, text, call }
}

pub const QUERY_TEMPLATES: [QueryTemplate; 15] = [
    t("ego_distance", "How far is object {a} from the ego vehicle?", "obj_distance(objs, {a})"),
    t("pair_distance", "What is the distance between object {a} and object {b}?", "find_dist(objs, {a}, {b})"),
    t("k_closest", "Which {k} objects are closest to the ego vehicle?", "k_closest(objs, {k})"),
    t("k_farthest", "Which {k} objects are farthest from the ego vehicle?", "k_farthest(objs, {k})"),
    t("within_ego", "Which objects are within {d} meters of the ego vehicle?", "dist_filter(objs, {d})"),
    t("within_object", "Which objects are within {d} meters of object {a}?", "objs_in_dist(objs, {a}, {d})"),
    t("k_closest_to_object", "Which {k} objects are closest to object {a}?", "k_closest_to_obj(objs, {a}, {k})"),
    t("k_farthest_from_object", "Which {k} objects are farthest from object {a}?", "k_farthest_to_obj(objs, {a}, {k})"),
    t("front", "Which objects are in front of the ego vehicle?", "front_filter(objs)"),
    t("left", "Which objects are to the left of the ego vehicle?", "left_filter(objs)"),
    t("right", "Which objects are to the right of the ego vehicle?", "right_filter(objs)"),
    t("rear", "Which objects are behind the ego vehicle?", "rear_filter(objs)"),
    t("k_closest_front", "Which {k} objects in front of the ego vehicle are closest to it?", "k_closest(front_filter(objs), {k})"),
    t("left_within", "Which objects to the left of the ego vehicle are within {d} meters of it?", "dist_filter(left_filter(objs), {d})"),
    t("rear_closest_to_object", "Which {k} objects behind the ego vehicle are closest to object {a}?", "k_closest_to_obj(rear_filter(objs), {a}, {k})"),
];

impl QueryTemplate {
    fn ids_needed(&self) -> usize {
        if self.text.contains("{b}") {
            2
        } else if self.text.contains("{a}") {
            1
        } else {
            0
        }
    }

    fn returns_distance(&self) -> bool {
        self.call.starts_with("obj_distance") || self.call.starts_with("find_dist")
    }

    /// Anchored, case-insensitive pattern with one named group per placeholder.
    pub fn pattern(&self) -> String {
        let mut out = String::from("(?i)^\\s*");
        let mut rest = self.text;
        while let Some(start) = rest.find('{') {
            let end = start + rest[start..].find('}').expect("closed placeholder");
            out.push_str(&regex::escape(&rest[..start]));
            out.push_str(&format!("(?P<{}>\\d+)", &rest[start + 1..end]));
            rest = &rest[end + 1..];
        }
        out.push_str(&regex::escape(rest.trim_end_matches('?')));
        out.push_str("\\??\\s*$");
        out
    }

    /// The call with placeholders turned into capture references.
    pub fn call_reply(&self) -> String {
        ["a", "b", "k", "d"]
            .iter()
            .fold(self.call.to_string(), |s, p| s.replace(&format!("{{{p}}}"), &format!("${{{p}}}")))
    }

    fn fill(s: &str, vars: &[(&str, String)]) -> String {
        vars.iter()
            .fold(s.to_string(), |s, (k, v)| s.replace(&format!("{{{k}}}"), v))
    }
}

/// Draws `n` queries over the ground-truth map; templates cycle so every
/// applicable one is used. Expected answers come from evaluating the
/// reference call on the map.
pub fn generate_spatial_queries(gt_map: &LanguageEnhancedMap, n: usize, seed: u64) -> Vec<SpatialQuery> {
    let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(&[&seed.to_le_bytes(), gt_map.scene_token.as_bytes()]));
    let ids = gt_map.object_ids();
    let usable: Vec<&QueryTemplate> = QUERY_TEMPLATES.iter().filter(|t| t.ids_needed() <= ids.len()).collect();
    let offset = rng.gen_range(0..usable.len());
    (0..n)
        .map(|j| {
            let template = usable[(j + offset) % usable.len()];
            let picked: Vec<_> = ids.choose_multiple(&mut rng, template.ids_needed()).copied().collect();
            let mut vars = vec![("k", rng.gen_range(1..=3).to_string()), ("d", rng.gen_range(5..=30).to_string())];
            if let Some(a) = picked.first() {
                vars.push(("a", a.to_string()));
            }
            if let Some(b) = picked.get(1) {
                vars.push(("b", b.to_string()));
            }
            let call = QueryTemplate::fill(template.call, &vars);
            let expr = parse_call(&call).expect("query templates are well formed");
            let expected = match eval_call(&expr, gt_map).expect("template ids come from the map") {
                SpatialValue::Distance(meters) => Expected::DistanceMeters { meters },
                SpatialValue::Objects(set) => Expected::ObjectIds { object_ids: set.ids() },
                SpatialValue::Object(o) => Expected::ObjectIds {
                    object_ids: vec![o.object_id],
                },
            };
            SpatialQuery {
                question_id: format!("{}/spatial/{j}", gt_map.scene_token),
                scene_token: gt_map.scene_token.clone(),
                query_text: QueryTemplate::fill(template.text, &vars),
                expected,
                reference_call: call,
            }
        })
        .collect()
}

fn rule(pattern: &str, turn: Option<usize>, system: Option<&str>, reply: serde_json::Value) -> ScriptRule {
    ScriptRule {
        pattern: Regex::new(pattern).expect("script patterns are valid"),
        reply: reply.to_string(),
        turn,
        scene: system.map(str::to_string),
    }
}

fn response(query: &str, calls: &[String], explanation: &str, answer: Option<&str>) -> serde_json::Value {
    let mut v = json!({
        "inferred_query": query,
        "query_achievable": true,
        "spatial_reasoning_functions": calls,
        "explanation": explanation,
    });
    if let Some(a) = answer {
        v["answer"] = a.into();
    }
    v
}

/// Text answer a model gives when it must guess without spatial functions.
pub const GUESS_OBJECTS: &str = "Object 1.";
pub const GUESS_DISTANCE: &str = "About 15 meters.";

/// The scripted LLM used by the mock pipeline:
/// - multiple-choice prompts are answered with choice A;
/// - benchmark spatial queries request their reference call, then close the
///   turn once results arrive;
/// - with tools disabled they get a fixed guess instead;
/// - a few free-form chat phrasings map to operator calls;
/// - anything else is declared not answerable.
pub fn mock_script() -> ScriptedLlm {
    let mut rules = vec![rule(
        r"(?s)Choose the single best option",
        None,
        None,
        json!({
            "inferred_query": "multiple-choice question",
            "query_achievable": true,
            "spatial_reasoning_functions": [],
            "explanation": "Picked the first option.",
            "answer": "A",
        }),
    )];
    for tpl in &QUERY_TEMPLATES {
        let guess = if tpl.returns_distance() { GUESS_DISTANCE } else { GUESS_OBJECTS };
        rules.push(rule(
            &tpl.pattern(),
            Some(0),
            Some(NO_TOOLS_NOTICE),
            response(tpl.name, &[], "Estimated from the map without spatial functions.", Some(guess)),
        ));
        rules.push(rule(
            &tpl.pattern(),
            Some(0),
            None,
            response(tpl.name, &[tpl.call_reply()], "Delegated to a spatial function.", None),
        ));
    }
    let chat: [(&str, &str); 5] = [
        (r"(?i)how far (?:away )?is object (\d+)", "obj_distance(objs, $1)"),
        (r"(?i)distance between object (\d+) and object (\d+)", "find_dist(objs, $1, $2)"),
        (r"(?i)\b(?:in front|ahead)\b", "front_filter(objs)"),
        (r"(?i)\bbehind\b", "rear_filter(objs)"),
        (r"(?i)\b(?:closest|nearest)\b", "k_closest(objs, 1)"),
    ];
    for (pattern, call) in chat {
        rules.push(rule(
            pattern,
            Some(0),
            None,
            response("$0", &[call.to_string()], "Delegated to a spatial function.", None),
        ));
    }
    rules.push(rule(
        r"(?s).*",
        Some(1),
        None,
        response("", &[], "Answered from the spatial function results.", Some("See the spatial function results.")),
    ));
    rules.push(rule(
        r"(?s).*",
        None,
        None,
        json!({
            "inferred_query": "",
            "query_achievable": false,
            "spatial_reasoning_functions": [],
            "explanation": "The scripted model has no answer for this question.",
        }),
    ));
    ScriptedLlm::new(rules).with_name("scripted-mock")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridMeta;
    use crate::map::{BevSource, Provenance};
    use crate::orchestrator::{answer_query, Conversation, ToolOutput};
    use crate::spatial::tests::obj;
    use crate::templates::Templates;

    fn map() -> LanguageEnhancedMap {
        LanguageEnhancedMap::new(
            "s",
            GridMeta::default(),
            Provenance::new("m", BevSource::Synthetic),
            vec![obj(1, 3.0, 4.0), obj(2, -6.0, 2.0), obj(3, 10.0, -1.0), obj(4, 2.0, 8.0)],
        )
    }

    #[test]
    fn patterns_round_trip() {
        for tpl in &QUERY_TEMPLATES {
            let re = Regex::new(&tpl.pattern()).unwrap();
            let vars = [("a", "12".to_string()), ("b", "3".into()), ("k", "2".into()), ("d", "17".into())];
            let text = QueryTemplate::fill(tpl.text, &vars);
            let caps = re.captures(&text).unwrap_or_else(|| panic!("{} does not match", tpl.name));
            let mut call = String::new();
            caps.expand(&tpl.call_reply(), &mut call);
            assert_eq!(call, QueryTemplate::fill(tpl.call, &vars));
            parse_call(&call).unwrap();
            assert!(!re.is_match(&format!("{text}\nA. x\nChoose the single best option.")));
        }
    }

    #[test]
    fn generation_covers_templates_and_is_seeded() {
        let qs = generate_spatial_queries(&map(), 30, 5);
        assert_eq!(qs.len(), 30);
        assert_eq!(qs, generate_spatial_queries(&map(), 30, 5));
        assert_ne!(qs, generate_spatial_queries(&map(), 30, 6));
        for tpl in &QUERY_TEMPLATES {
            let re = Regex::new(&tpl.pattern()).unwrap();
            assert!(qs.iter().any(|q| re.is_match(&q.query_text)), "{}", tpl.name);
        }
        let empty = LanguageEnhancedMap::new("e", GridMeta::default(), Provenance::new("m", BevSource::Synthetic), vec![]);
        for q in generate_spatial_queries(&empty, 10, 1) {
            assert_eq!(q.expected, Expected::ObjectIds { object_ids: vec![] });
        }
    }

    #[test]
    fn script_answers_every_query() {
        let llm = mock_script();
        let m = map();
        for q in generate_spatial_queries(&m, 30, 9) {
            let mut c = Conversation::new("c", "s");
            let out = answer_query(&m, &mut c, &q.query_text, &llm, &Templates::builtin()).unwrap();
            assert_eq!(out.trace.len(), 1, "{}", q.query_text);
            assert_eq!(out.trace[0].call, q.reference_call);
            match (&out.trace[0].output, &q.expected) {
                (ToolOutput::Objects { object_ids }, Expected::ObjectIds { object_ids: e }) => assert_eq!(object_ids, e),
                (ToolOutput::Distance { meters, .. }, Expected::DistanceMeters { meters: e }) => assert_eq!(meters, e),
                other => panic!("{other:?}"),
            }
            let mut c = Conversation::new("c", "s").without_tools();
            let out = answer_query(&m, &mut c, &q.query_text, &llm, &Templates::builtin()).unwrap();
            assert!(out.trace.is_empty());
            assert!(out.response.answer.is_some());
        }
    }

    #[test]
    fn chat_phrasing() {
        let mut c = Conversation::new("c", "s");
        let out = answer_query(&map(), &mut c, "how far is object 1?", &mock_script(), &Templates::builtin()).unwrap();
        assert_eq!(out.response.referenced_object_ids, vec![1]);
        let out = answer_query(&map(), &mut c, "what is the weather?", &mock_script(), &Templates::builtin()).unwrap();
        assert!(!out.response.query_achievable);
    }
}
