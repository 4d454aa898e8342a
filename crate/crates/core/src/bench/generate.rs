//! Multiple-choice question generation through an LLM, plus a deterministic
//! template generator that answers the generation prompt from the map alone.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::{stable_hash, BenchQuestion, QuestionCategory};
use crate::map::{inline_json, Category, LanguageEnhancedMap, ObjectId};
use crate::orchestrator::{extract_json_object, LlmClient, LlmError, Message, Role};
use crate::synth;
use crate::templates::{TemplateError, Templates};

pub const DEFAULT_PER_CATEGORY: usize = 5;
/// Extra attempts per question after a malformed or invalid reply.
pub const GENERATION_RETRIES: usize = 3;

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("cannot generate {category} questions: {reason}")]
    Category { category: QuestionCategory, reason: String },
    #[error(transparent)]
    Template(#[from] TemplateError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attributes {
    pub color: String,
    #[serde(rename = "type")]
    pub kind: String,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ViewDescriptions {
    foreground_text: String,
    background_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ocr_text: Option<String>,
}

/// An object as shown to the question generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ViewObject {
    object_id: ObjectId,
    position: (f64, f64),
    area: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    category: Option<Category>,
    crop_descriptions: ViewDescriptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    attributes: Option<Attributes>,
}

impl ViewObject {
    fn range(&self) -> f64 {
        self.position.0.hypot(self.position.1)
    }

    fn dist(&self, other: &ViewObject) -> f64 {
        (self.position.0 - other.position.0).hypot(self.position.1 - other.position.1)
    }
}

/// Map objects with category and attributes, one per line.
pub fn question_map_json(map: &LanguageEnhancedMap) -> String {
    if map.objects.is_empty() {
        return "[]".into();
    }
    let lines: Vec<String> = map
        .objects
        .iter()
        .map(|o| {
            let view = ViewObject {
                object_id: o.object_id,
                position: o.position,
                area: o.area_m2,
                category: o.category,
                crop_descriptions: ViewDescriptions {
                    foreground_text: o.crop_descriptions.foreground_text.clone(),
                    background_text: o.crop_descriptions.background_text.clone(),
                    ocr_text: o.crop_descriptions.ocr_text.clone(),
                },
                attributes: o
                    .extra
                    .get("attributes")
                    .and_then(|v| serde_json::from_value(v.clone()).ok()),
            };
            format!("  {}", inline_json(&view))
        })
        .collect();
    format!("[\n{}\n]", lines.join(",\n"))
}

#[derive(Deserialize)]
struct GeneratedQuestion {
    question_text: String,
    choices: Vec<String>,
    correct_idx: usize,
    #[serde(default)]
    vehicle_category: Option<Category>,
}

fn parse_generated(raw: &str) -> Result<GeneratedQuestion, String> {
    let json = extract_json_object(raw).ok_or("no JSON object in the reply")?;
    serde_json::from_str(json).map_err(|e| e.to_string())
}

/// Asks `llm` for `per_category` questions in each category. Replies that do
/// not parse or validate are re-requested up to [`GENERATION_RETRIES`] times.
pub fn generate_questions(
    gt_map: &LanguageEnhancedMap,
    llm: &dyn LlmClient,
    templates: &Templates,
    per_category: usize,
) -> Result<Vec<BenchQuestion>, GenerationError> {
    if gt_map.objects.is_empty() {
        return Err(GenerationError::Category {
            category: QuestionCategory::InstanceAttribute,
            reason: "the scene has no objects".into(),
        });
    }
    let map_json = question_map_json(gt_map);
    let mut out = Vec::with_capacity(per_category * QuestionCategory::ALL.len());
    for category in QuestionCategory::ALL {
        let instructions = templates.get(&format!("question_{category}"))?.to_string();
        for index in 0..per_category {
            let prompt = templates.render(
                "question_generation",
                &[
                    ("scene_token", &gt_map.scene_token),
                    ("category", category.as_str()),
                    ("category_instructions", &instructions),
                    ("index", &index.to_string()),
                    ("map_json", &map_json),
                ],
            )?;
            let mut messages = vec![Message::new(Role::User, prompt)];
            let mut last_error = String::new();
            let mut question = None;
            for _ in 0..=GENERATION_RETRIES {
                let raw = match llm.complete(&messages) {
                    Ok(raw) => raw,
                    Err(e) => {
                        last_error = e.to_string();
                        continue;
                    }
                };
                let candidate = parse_generated(&raw).map(|g| BenchQuestion {
                    question_id: format!("{}/{}/{}", gt_map.scene_token, category, index),
                    scene_token: gt_map.scene_token.clone(),
                    category,
                    question_text: g.question_text,
                    choices: g.choices,
                    correct_idx: g.correct_idx,
                    vehicle_category: g.vehicle_category,
                });
                match candidate.and_then(|q| q.validate().map(|_| q).map_err(|e| e.to_string())) {
                    Ok(q) => {
                        question = Some(q);
                        break;
                    }
                    Err(e) => {
                        last_error = e.clone();
                        messages.push(Message::new(Role::Assistant, raw));
                        messages.push(Message::new(Role::User, templates.render("repair", &[("error", &e)])?));
                    }
                }
            }
            match question {
                Some(q) => out.push(q),
                None => {
                    return Err(GenerationError::Category {
                        category,
                        reason: format!("question {index}: retry budget exhausted ({last_error})"),
                    })
                }
            }
        }
    }
    Ok(out)
}

const FILLERS: [&str; 3] = ["none of the objects", "the ego vehicle itself", "it cannot be determined"];

/// A question before its choices are shuffled.
struct Draft {
    text: String,
    correct: String,
    distractors: Vec<String>,
    vehicle_category: Option<Category>,
}

/// Three distinct wrong choices drawn from `pool`, padded with fillers.
fn distractors(correct: &str, pool: impl IntoIterator<Item = String>, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut pool: Vec<String> = pool.into_iter().filter(|p| p != correct).collect();
    pool.sort();
    pool.dedup();
    pool.shuffle(rng);
    pool.truncate(3);
    for f in FILLERS {
        if pool.len() == 3 {
            break;
        }
        if f != correct && !pool.iter().any(|p| p == f) {
            pool.push(f.to_string());
        }
    }
    pool
}

fn object_label(id: ObjectId) -> String {
    format!("object {id}")
}

fn id_draft(text: String, correct: &ViewObject, others: &[&ViewObject], rng: &mut ChaCha8Rng) -> Draft {
    Draft {
        text,
        correct: object_label(correct.object_id),
        distractors: distractors(
            &object_label(correct.object_id),
            others.iter().map(|o| object_label(o.object_id)),
            rng,
        ),
        vehicle_category: correct.category,
    }
}

fn count_draft(text: String, n: usize, vehicle_category: Option<Category>) -> Draft {
    let wrong: Vec<usize> = if n == 0 { vec![1, 2, 3] } else { vec![n - 1, n + 1, n + 2] };
    Draft {
        text,
        correct: n.to_string(),
        distractors: wrong.into_iter().map(|v| v.to_string()).collect(),
        vehicle_category,
    }
}

fn attribute_draft(focus: &ViewObject, index: usize, rng: &mut ChaCha8Rng) -> Draft {
    let id = focus.object_id;
    let vehicle_category = focus.category;
    let ocr = focus.crop_descriptions.ocr_text.as_deref().filter(|t| !t.is_empty());
    let strings = |it: &[&str]| it.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let (text, correct, pool) = match (&focus.attributes, index % 4) {
        (_, 3) if ocr.is_some() => {
            let t = ocr.unwrap().to_string();
            let mut pool: Vec<String> = synth::vehicle_texts().map(str::to_string).collect();
            pool.push("no visible text".into());
            (format!("What text is written on object {id}?"), t, pool)
        }
        (Some(a), 1) => (
            format!("What type of vehicle is object {id}?"),
            a.kind.clone(),
            synth::vehicle_labels().map(str::to_string).collect(),
        ),
        (Some(a), 2) => (format!("What is object {id} doing?"), a.status.clone(), strings(&synth::STATUSES)),
        (Some(a), _) => (format!("What color is object {id}?"), a.color.clone(), strings(&synth::COLORS)),
        (None, _) => (
            format!("What kind of object is object {id}?"),
            focus.category.unwrap_or(Category::Other).noun(false).to_string(),
            Category::ALL.iter().map(|c| c.noun(false).to_string()).collect(),
        ),
    };
    let distractors = distractors(&correct, pool, rng);
    Draft {
        text,
        correct,
        distractors,
        vehicle_category,
    }
}

fn counting_draft(objects: &[ViewObject], index: usize, rng: &mut ChaCha8Rng) -> Draft {
    match index % 5 {
        0 => count_draft("How many objects are around the ego vehicle?".into(), objects.len(), None),
        4 => count_draft(
            "How many objects are in front of the ego vehicle?".into(),
            objects.iter().filter(|o| o.position.0 > 0.0).count(),
            None,
        ),
        _ => {
            let category = Category::ALL[rng.gen_range(0..Category::ALL.len())];
            let n = objects.iter().filter(|o| o.category == Some(category)).count();
            count_draft(
                format!("How many {} are in the scene?", category.noun(true)),
                n,
                Some(category),
            )
        }
    }
}

fn visual_draft(objects: &[ViewObject], index: usize, rng: &mut ChaCha8Rng) -> Option<Draft> {
    let mut status_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for o in objects {
        if let Some(a) = &o.attributes {
            *status_counts.entry(a.status.as_str()).or_default() += 1;
        }
    }
    let others_of = |focus: &ViewObject| objects.iter().filter(|o| o.object_id != focus.object_id).collect::<Vec<_>>();
    let background = || {
        let bg = objects
            .iter()
            .map(|o| o.crop_descriptions.background_text.as_str())
            .find(|t| !t.is_empty())?;
        Some(("Where is the ego vehicle driving?".to_string(), bg.to_string()))
    };
    let by_status = |rng: &mut ChaCha8Rng| {
        let unique: Vec<&ViewObject> = objects
            .iter()
            .filter(|o| o.attributes.as_ref().is_some_and(|a| status_counts[a.status.as_str()] == 1))
            .collect();
        let focus = *unique.choose(rng)?;
        let status = &focus.attributes.as_ref()?.status;
        Some(id_draft(format!("Which object is {status}?"), focus, &others_of(focus), rng))
    };
    let by_text = |rng: &mut ChaCha8Rng| {
        let texts: Vec<(&ViewObject, &str)> = objects
            .iter()
            .filter_map(|o| Some((o, o.crop_descriptions.ocr_text.as_deref().filter(|t| !t.is_empty())?)))
            .collect();
        let unique: Vec<&(&ViewObject, &str)> = texts
            .iter()
            .filter(|(_, t)| texts.iter().filter(|(_, u)| u == t).count() == 1)
            .collect();
        let (focus, text) = **unique.choose(rng)?;
        Some(id_draft(
            format!("Which object has the text \"{text}\" written on it?"),
            focus,
            &others_of(focus),
            rng,
        ))
    };
    let by_description = |rng: &mut ChaCha8Rng| {
        let unique: Vec<&ViewObject> = objects
            .iter()
            .filter(|o| {
                let t = &o.crop_descriptions.foreground_text;
                !t.is_empty() && objects.iter().filter(|p| &p.crop_descriptions.foreground_text == t).count() == 1
            })
            .collect();
        let focus = *unique.choose(rng)?;
        Some(id_draft(
            format!("Which object is {}?", focus.crop_descriptions.foreground_text),
            focus,
            &others_of(focus),
            rng,
        ))
    };
    let from_background = |rng: &mut ChaCha8Rng| {
        let (text, correct) = background()?;
        let distractors = distractors(&correct, synth::BACKGROUNDS.iter().map(|s| s.to_string()), rng);
        Some(Draft {
            text,
            correct,
            distractors,
            vehicle_category: None,
        })
    };
    match index % 3 {
        0 => from_background(rng).or_else(|| by_description(rng)),
        1 => by_status(rng).or_else(|| by_description(rng)),
        _ => by_text(rng).or_else(|| by_status(rng)).or_else(|| by_description(rng)),
    }
}

fn quadrant(o: &ViewObject) -> Option<&'static str> {
    let (x, y) = o.position;
    match (x.partial_cmp(&0.0)?, y.partial_cmp(&0.0)?) {
        (std::cmp::Ordering::Greater, std::cmp::Ordering::Greater) => Some("in front and to the left"),
        (std::cmp::Ordering::Greater, std::cmp::Ordering::Less) => Some("in front and to the right"),
        (std::cmp::Ordering::Less, std::cmp::Ordering::Greater) => Some("behind and to the left"),
        (std::cmp::Ordering::Less, std::cmp::Ordering::Less) => Some("behind and to the right"),
        _ => None,
    }
}

const QUADRANTS: [&str; 4] = [
    "in front and to the left",
    "in front and to the right",
    "behind and to the left",
    "behind and to the right",
];

fn spatial_draft(objects: &[ViewObject], index: usize, rng: &mut ChaCha8Rng) -> Draft {
    let focus = objects.choose(rng).expect("non-empty scene");
    let others: Vec<&ViewObject> = objects.iter().filter(|o| o.object_id != focus.object_id).collect();
    let distance = || {
        let d = focus.range().round() as i64;
        let wrong = [d + 5, d + 10, if d >= 5 { d - 5 } else { d + 15 }];
        Draft {
            text: format!("About how far is object {} from the ego vehicle?", focus.object_id),
            correct: format!("{d} m"),
            distractors: wrong.iter().map(|w| format!("{w} m")).collect(),
            vehicle_category: focus.category,
        }
    };
    match index % 4 {
        0 => {
            let nearest = objects
                .iter()
                .min_by(|a, b| a.range().total_cmp(&b.range()).then(a.object_id.cmp(&b.object_id)))
                .expect("non-empty scene");
            let rest: Vec<&ViewObject> = objects.iter().filter(|o| o.range() > nearest.range()).collect();
            id_draft("Which object is closest to the ego vehicle?".into(), nearest, &rest, rng)
        }
        1 => match quadrant(focus) {
            Some(q) => Draft {
                text: format!("Where is object {} relative to the ego vehicle?", focus.object_id),
                correct: q.to_string(),
                distractors: QUADRANTS.iter().filter(|d| **d != q).map(|d| d.to_string()).collect(),
                vehicle_category: focus.category,
            },
            None => distance(),
        },
        3 if !others.is_empty() => {
            let nearest = others
                .iter()
                .min_by(|a, b| focus.dist(a).total_cmp(&focus.dist(b)).then(a.object_id.cmp(&b.object_id)))
                .expect("non-empty");
            let rest: Vec<&ViewObject> = others
                .iter()
                .copied()
                .filter(|o| focus.dist(o) > focus.dist(nearest))
                .collect();
            let mut d = id_draft(
                format!("Which object is closest to object {}?", focus.object_id),
                nearest,
                &rest,
                rng,
            );
            d.vehicle_category = focus.category;
            d
        }
        _ => distance(),
    }
}

fn finish(draft: Draft, rng: &mut ChaCha8Rng) -> Value {
    let mut choices = vec![draft.correct.clone()];
    choices.extend(draft.distractors);
    choices.shuffle(rng);
    let correct_idx = choices.iter().position(|c| *c == draft.correct).expect("correct choice present");
    serde_json::json!({
        "question_text": draft.text,
        "choices": choices,
        "correct_idx": correct_idx,
        "vehicle_category": draft.vehicle_category,
    })
}

fn header<'t>(prompt: &'t str, key: &str) -> Option<&'t str> {
    prompt.lines().find_map(|l| l.strip_prefix(key)).map(str::trim)
}

/// Answers the question-generation prompt deterministically: the question is
/// derived from the map in the prompt, seeded by (seed, scene, category, index).
#[derive(Debug, Clone)]
pub struct TemplateQuestionLlm {
    pub seed: u64,
}

impl TemplateQuestionLlm {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    fn draft(&self, prompt: &str) -> Result<Value, String> {
        let scene = header(prompt, "SCENE:").ok_or("prompt has no SCENE line")?;
        let category = header(prompt, "CATEGORY:")
            .and_then(QuestionCategory::from_name)
            .ok_or("prompt has no valid CATEGORY line")?;
        let index: usize = header(prompt, "INDEX:")
            .and_then(|v| v.parse().ok())
            .ok_or("prompt has no valid INDEX line")?;
        let map_start = prompt.find("MAP:\n").ok_or("prompt has no MAP section")? + 5;
        let objects: Vec<ViewObject> = serde_json::from_str(&prompt[map_start..]).map_err(|e| format!("MAP: {e}"))?;
        if objects.is_empty() {
            return Err("the scene has no objects".into());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(&[
            &self.seed.to_le_bytes(),
            scene.as_bytes(),
            category.as_str().as_bytes(),
            &index.to_le_bytes(),
        ]));
        let draft = match category {
            QuestionCategory::InstanceAttribute => {
                let focus = objects.choose(&mut rng).expect("non-empty");
                attribute_draft(focus, index, &mut rng)
            }
            QuestionCategory::InstanceCounting => counting_draft(&objects, index, &mut rng),
            QuestionCategory::VisualReasoning => {
                visual_draft(&objects, index, &mut rng).ok_or("no distinguishing description in the scene")?
            }
            QuestionCategory::SpatialReasoning => spatial_draft(&objects, index, &mut rng),
        };
        Ok(finish(draft, &mut rng))
    }
}

impl LlmClient for TemplateQuestionLlm {
    fn name(&self) -> &str {
        "template-generator"
    }

    fn complete(&self, messages: &[Message]) -> Result<String, LlmError> {
        let prompt = messages
            .iter()
            .find(|m| m.role == Role::User)
            .ok_or_else(|| LlmError::Script("no prompt".into()))?;
        self.draft(&prompt.content).map(|v| v.to_string()).map_err(LlmError::Refusal)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridMeta;
    use crate::map::{BevSource, MapObject, Provenance};

    fn map_with(categories: &[Category]) -> LanguageEnhancedMap {
        let objects = categories
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let mut o = MapObject::from_cells(i as ObjectId + 1, vec![(10 + 12 * i, 30), (10 + 12 * i, 31)], &GridMeta::default());
                o.category = Some(*c);
                o.crop_descriptions.foreground_text = format!("a {} number {i}", c.noun(false));
                o.crop_descriptions.background_text = synth::BACKGROUNDS[0].into();
                o
            })
            .collect();
        LanguageEnhancedMap::new("scene-x", GridMeta::default(), Provenance::new("gt", BevSource::GroundTruth), objects)
    }

    #[test]
    fn twenty_valid_questions() {
        let map = map_with(&[Category::Car, Category::Truck, Category::Car]);
        let qs = generate_questions(&map, &TemplateQuestionLlm::new(7), &Templates::builtin(), 5).unwrap();
        assert_eq!(qs.len(), 20);
        for c in QuestionCategory::ALL {
            assert_eq!(qs.iter().filter(|q| q.category == c).count(), 5);
        }
        qs.iter().for_each(|q| q.validate().unwrap());
        let again = generate_questions(&map, &TemplateQuestionLlm::new(7), &Templates::builtin(), 5).unwrap();
        assert_eq!(qs, again);
    }

    #[test]
    fn three_trucks_counting() {
        let map = map_with(&[Category::Truck, Category::Truck, Category::Truck]);
        let objects: Vec<ViewObject> = serde_json::from_str(&question_map_json(&map)).unwrap();
        let d = count_draft("How many trucks are in the scene?".into(), 3, Some(Category::Truck));
        assert_eq!(d.correct, "3");
        assert_eq!(d.distractors, ["2", "4", "5"]);
        let d = count_draft("x".into(), 0, None);
        assert_eq!(d.distractors, ["1", "2", "3"]);
        // the generator's counting question about trucks carries the true count
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for i in 0..50 {
            let d = counting_draft(&objects, i, &mut rng);
            if d.vehicle_category == Some(Category::Truck) {
                assert_eq!(d.correct, "3");
            }
        }
    }

    #[test]
    fn empty_scene_fails_for_attributes() {
        let map = map_with(&[]);
        match generate_questions(&map, &TemplateQuestionLlm::new(1), &Templates::builtin(), 5) {
            Err(GenerationError::Category { category, .. }) => assert_eq!(category, QuestionCategory::InstanceAttribute),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_replies_exhaust_budget() {
        struct Junk;
        impl LlmClient for Junk {
            fn name(&self) -> &str {
                "junk"
            }
            fn complete(&self, _: &[Message]) -> Result<String, LlmError> {
                Ok(r#"{"question_text": "q", "choices": ["a", "a", "b", "c"], "correct_idx": 0}"#.into())
            }
        }
        let map = map_with(&[Category::Car]);
        match generate_questions(&map, &Junk, &Templates::builtin(), 1) {
            Err(GenerationError::Category { category, reason }) => {
                assert_eq!(category, QuestionCategory::InstanceAttribute);
                assert!(reason.contains("distinct"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn single_object_scene_pads_choices() {
        let map = map_with(&[Category::Other]);
        let qs = generate_questions(&map, &TemplateQuestionLlm::new(3), &Templates::builtin(), 5).unwrap();
        assert_eq!(qs.len(), 20);
    }
}
