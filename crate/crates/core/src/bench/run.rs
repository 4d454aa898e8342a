//! Scoring, baselines and the benchmark runner.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{LazyLock, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{choice_letter, distance_error, jaccard, mean, stable_hash, BenchQuestion, Expected, QuestionCategory, SpatialQuery};
use crate::map::{LanguageEnhancedMap, ObjectId};
use crate::orchestrator::{answer_query, Conversation, LlmClient, QueryOutcome, ToolOutput};
use crate::templates::Templates;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// The LLM may call spatial operators.
    SpatialOps,
    /// Operators are withheld; the answer text is scored.
    NoSpatialOps,
    /// Uniform random guesses.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Prediction {
    ObjectIds { object_ids: Vec<ObjectId> },
    DistanceMeters { meters: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

impl Accuracy {
    fn of<'r>(records: impl Iterator<Item = &'r McqRecord>) -> Option<Accuracy> {
        let (mut correct, mut total) = (0, 0);
        for r in records {
            total += 1;
            correct += r.correct as usize;
        }
        (total > 0).then(|| Accuracy {
            correct,
            total,
            accuracy: correct as f64 / total as f64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McqRecord {
    pub question_id: String,
    pub scene_token: String,
    pub category: QuestionCategory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vehicle_category: Option<crate::map::Category>,
    pub chosen: Option<usize>,
    pub correct_idx: usize,
    pub correct: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McqScores {
    pub per_category: BTreeMap<QuestionCategory, Accuracy>,
    pub per_vehicle_category: BTreeMap<String, Accuracy>,
    pub overall: Option<Accuracy>,
}

impl McqScores {
    pub fn from_records(records: &[McqRecord]) -> Self {
        let categories: BTreeSet<QuestionCategory> = records.iter().map(|r| r.category).collect();
        let vehicles: BTreeSet<crate::map::Category> = records.iter().filter_map(|r| r.vehicle_category).collect();
        Self {
            per_category: categories
                .into_iter()
                .filter_map(|c| Some((c, Accuracy::of(records.iter().filter(|r| r.category == c))?)))
                .collect(),
            per_vehicle_category: vehicles
                .into_iter()
                .filter_map(|v| {
                    Some((
                        v.as_str().to_string(),
                        Accuracy::of(records.iter().filter(|r| r.vehicle_category == Some(v)))?,
                    ))
                })
                .collect(),
            overall: Accuracy::of(records.iter()),
        }
    }
}

fn mcq_record(q: &BenchQuestion, answer: Result<usize, String>) -> McqRecord {
    let (chosen, note) = match answer {
        Ok(i) if i < q.choices.len() => (Some(i), None),
        Ok(i) => (Some(i), Some(format!("choice {i} out of range"))),
        Err(e) => (None, Some(e)),
    };
    McqRecord {
        question_id: q.question_id.clone(),
        scene_token: q.scene_token.clone(),
        category: q.category,
        vehicle_category: q.vehicle_category,
        chosen,
        correct_idx: q.correct_idx,
        correct: note.is_none() && chosen == Some(q.correct_idx),
        note,
    }
}

/// Scores `answerer` on `questions`. Out-of-range choices and answerer
/// errors count as incorrect and are noted in the records.
pub fn score_mcq(
    questions: &[BenchQuestion],
    mut answerer: impl FnMut(&BenchQuestion) -> Result<usize, String>,
) -> (McqScores, Vec<McqRecord>) {
    let records: Vec<McqRecord> = questions.iter().map(|q| mcq_record(q, answerer(q))).collect();
    (McqScores::from_records(&records), records)
}

fn max_pairwise_distance(map: &LanguageEnhancedMap) -> f64 {
    let mut best = 0.0f64;
    for (i, a) in map.objects.iter().enumerate() {
        best = best.max(a.range());
        for b in &map.objects[i + 1..] {
            best = best.max(a.distance_to(b));
        }
    }
    best
}

/// Uniform guess: a random subset of the map's ids for set queries, or a
/// distance in `[0, largest distance between any two objects or the ego]`.
pub fn random_baseline(map: &LanguageEnhancedMap, expected: &Expected, seed: u64) -> Prediction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match expected {
        Expected::ObjectIds { .. } => Prediction::ObjectIds {
            object_ids: map.objects.iter().map(|o| o.object_id).filter(|_| rng.gen_bool(0.5)).collect(),
        },
        Expected::DistanceMeters { .. } => Prediction::DistanceMeters {
            meters: rng.gen::<f64>() * max_pairwise_distance(map),
        },
    }
}

/// Reads a prediction from free answer text: ids are the integers after the
/// first "object(s)", a distance is the first number.
pub fn prediction_from_text(text: &str, expected: &Expected) -> Option<Prediction> {
    static NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d+(?:\.\d+)?").expect("valid"));
    static OBJECT_WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\bobjects?\b").expect("valid"));
    static NONE_WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\bnone\b|\bno\b").expect("valid"));
    let number = &*NUMBER;
    match expected {
        Expected::ObjectIds { .. } => {
            if let Some(m) = OBJECT_WORD.find(text) {
                let ids = number
                    .find_iter(&text[m.end()..])
                    .filter_map(|n| n.as_str().parse().ok())
                    .collect();
                Some(Prediction::ObjectIds { object_ids: ids })
            } else if NONE_WORD.is_match(text) {
                Some(Prediction::ObjectIds { object_ids: vec![] })
            } else {
                None
            }
        }
        Expected::DistanceMeters { .. } => number
            .find(text)
            .and_then(|n| n.as_str().parse().ok())
            .map(|meters| Prediction::DistanceMeters { meters }),
    }
}

fn prediction_from_trace(outcome: &QueryOutcome) -> Option<Prediction> {
    outcome.trace.iter().rev().find_map(|c| match &c.output {
        ToolOutput::Objects { object_ids } => Some(Prediction::ObjectIds {
            object_ids: object_ids.clone(),
        }),
        ToolOutput::Distance { meters, .. } => Some(Prediction::DistanceMeters { meters: *meters }),
        ToolOutput::Error { .. } => None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialRecord {
    pub question_id: String,
    pub scene_token: String,
    pub variant: Variant,
    pub expected: Expected,
    pub prediction: Option<Prediction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jaccard: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Scores one prediction. A missing or mistyped prediction scores Jaccard 0,
/// or the distance error of guessing 0 m.
fn spatial_record(q: &SpatialQuery, variant: Variant, prediction: Option<Prediction>, note: Option<String>) -> SpatialRecord {
    let mut record = SpatialRecord {
        question_id: q.question_id.clone(),
        scene_token: q.scene_token.clone(),
        variant,
        expected: q.expected.clone(),
        prediction: prediction.clone(),
        jaccard: None,
        distance_error: None,
        note,
    };
    let unusable = |r: &mut SpatialRecord| {
        r.note.get_or_insert_with(|| "no usable prediction".into());
    };
    match (&q.expected, prediction) {
        (Expected::ObjectIds { object_ids: e }, Some(Prediction::ObjectIds { object_ids: p })) => {
            record.jaccard = Some(jaccard(&p, e))
        }
        (Expected::ObjectIds { .. }, _) => {
            unusable(&mut record);
            record.jaccard = Some(0.0);
        }
        (Expected::DistanceMeters { meters: e }, Some(Prediction::DistanceMeters { meters: p })) => {
            match distance_error(p, *e) {
                Ok(err) => record.distance_error = Some(err),
                Err(err) => {
                    record.note = Some(err.to_string());
                    record.distance_error = Some(e.abs());
                }
            }
        }
        (Expected::DistanceMeters { meters: e }, _) => {
            unusable(&mut record);
            record.distance_error = Some(e.abs());
        }
    }
    record
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: Variant,
    pub set_queries: usize,
    pub distance_queries: usize,
    pub failures: usize,
    pub jaccard_mean: Option<f64>,
    /// Mean absolute error in meters.
    pub distance_error_mean: Option<f64>,
}

impl VariantSummary {
    pub fn from_records(variant: Variant, records: &[SpatialRecord]) -> Self {
        let mine: Vec<&SpatialRecord> = records.iter().filter(|r| r.variant == variant).collect();
        let j: Vec<f64> = mine.iter().filter_map(|r| r.jaccard).collect();
        let d: Vec<f64> = mine.iter().filter_map(|r| r.distance_error).collect();
        Self {
            variant,
            set_queries: j.len(),
            distance_queries: d.len(),
            failures: mine.iter().filter(|r| r.note.is_some()).count(),
            jaccard_mean: mean(&j),
            distance_error_mean: mean(&d),
        }
    }
}

pub struct SystemUnderTest<'a> {
    pub llm: &'a dyn LlmClient,
    pub templates: &'a Templates,
}

/// One scene's map as the system sees it and the questions about it.
#[derive(Debug, Clone)]
pub struct BenchScene {
    pub map: LanguageEnhancedMap,
    pub questions: Vec<BenchQuestion>,
    pub queries: Vec<SpatialQuery>,
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    /// Score the system with operators (true) or without.
    pub spatial_ops: bool,
    /// Also score the other setting.
    pub ablation: bool,
    pub seed: u64,
    pub parallelism: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            spatial_ops: true,
            ablation: false,
            seed: 0,
            parallelism: 4,
        }
    }
}

impl BenchOptions {
    pub fn primary(&self) -> Variant {
        if self.spatial_ops {
            Variant::SpatialOps
        } else {
            Variant::NoSpatialOps
        }
    }

    pub fn variants(&self) -> Vec<Variant> {
        let mut v = vec![self.primary()];
        if self.ablation {
            v.push(if self.spatial_ops { Variant::NoSpatialOps } else { Variant::SpatialOps });
        }
        v.push(Variant::Random);
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub lvlm_names: Vec<String>,
    pub bev_sources: Vec<String>,
    pub llm_name: String,
    pub primary_variant: Variant,
    pub seed: u64,
    pub distance_error_aggregate: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub scenes: usize,
    pub mcq_questions: usize,
    pub spatial_queries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Records {
    pub mcq: Vec<McqRecord>,
    pub spatial: Vec<SpatialRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub metadata: RunMetadata,
    pub counts: Counts,
    pub mcq: McqScores,
    /// Primary variant's mean Jaccard over set queries.
    pub jaccard_mean: Option<f64>,
    /// Primary variant's mean distance error in meters.
    pub distance_error_mean: Option<f64>,
    pub variants: Vec<VariantSummary>,
    pub records: Records,
}

impl BenchReport {
    pub fn variant(&self, v: Variant) -> Option<&VariantSummary> {
        self.variants.iter().find(|s| s.variant == v)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        fs::write(path, self.to_json())
    }
}

fn mcq_prompt(q: &BenchQuestion, templates: &Templates) -> Result<String, String> {
    let choices: Vec<String> = q
        .choices
        .iter()
        .enumerate()
        .map(|(i, c)| format!("{}. {c}", choice_letter(i)))
        .collect();
    templates
        .render("mcq_answer", &[("question", &q.question_text), ("choices", &choices.join("\n"))])
        .map_err(|e| e.to_string())
}

/// The chosen letter of an answer such as "B", "(c)", "B. red" or "Answer: D".
pub fn parse_choice(answer: &str) -> Option<usize> {
    static LEADING: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\W*([A-Da-d])\b").expect("valid"));
    static LABELLED: LazyLock<Regex> =
        LazyLock::new(|| Regex::new(r"(?i)\b(?:answer|option)\s*(?:is)?\s*:?\s*\(?([A-D])\b").expect("valid"));
    let caps = LEADING.captures(answer.trim()).or_else(|| LABELLED.captures(answer))?;
    let letter = caps[1].to_ascii_uppercase().chars().next()?;
    Some((letter as u8 - b'A') as usize)
}

fn answer_mcq(scene: &BenchScene, q: &BenchQuestion, sut: &SystemUnderTest<'_>) -> Result<usize, String> {
    let prompt = mcq_prompt(q, sut.templates)?;
    let mut conversation = Conversation::new(&q.question_id, &scene.map.scene_token);
    if q.category == QuestionCategory::VisualReasoning {
        conversation.tools_enabled = false;
    }
    let outcome = answer_query(&scene.map, &mut conversation, &prompt, sut.llm, sut.templates).map_err(|e| e.to_string())?;
    let answer = outcome.response.answer.ok_or("reply has no answer")?;
    parse_choice(&answer).ok_or_else(|| format!("no choice letter in {answer:?}"))
}

fn run_query(
    scene: &BenchScene,
    q: &SpatialQuery,
    variant: Variant,
    sut: &SystemUnderTest<'_>,
    seed: u64,
) -> SpatialRecord {
    if variant == Variant::Random {
        let seed = stable_hash(&[&seed.to_le_bytes(), q.question_id.as_bytes()]);
        return spatial_record(q, variant, Some(random_baseline(&scene.map, &q.expected, seed)), None);
    }
    let mut conversation = Conversation::new(&q.question_id, &scene.map.scene_token);
    conversation.tools_enabled = variant == Variant::SpatialOps;
    match answer_query(&scene.map, &mut conversation, &q.query_text, sut.llm, sut.templates) {
        Ok(outcome) => {
            let from_text = || {
                outcome
                    .response
                    .answer
                    .as_deref()
                    .and_then(|a| prediction_from_text(a, &q.expected))
            };
            let prediction = if variant == Variant::SpatialOps {
                prediction_from_trace(&outcome).or_else(from_text)
            } else {
                from_text()
            };
            spatial_record(q, variant, prediction, None)
        }
        Err(e) => spatial_record(q, variant, None, Some(e.to_string())),
    }
}

struct SceneResult {
    mcq: Vec<McqRecord>,
    spatial: Vec<SpatialRecord>,
}

fn run_scene(scene: &BenchScene, sut: &SystemUnderTest<'_>, opts: &BenchOptions) -> SceneResult {
    let mcq = scene
        .questions
        .iter()
        .map(|q| mcq_record(q, answer_mcq(scene, q, sut)))
        .collect();
    let mut spatial = Vec::new();
    for variant in opts.variants() {
        spatial.extend(scene.queries.iter().map(|q| run_query(scene, q, variant, sut, opts.seed)));
    }
    SceneResult { mcq, spatial }
}

/// Scores every scene (in parallel) and aggregates from the raw records, so
/// the summary fields can always be recomputed from `records`.
pub fn run_bench(scenes: &[BenchScene], sut: &SystemUnderTest<'_>, opts: &BenchOptions) -> BenchReport {
    let results: Mutex<Vec<Option<SceneResult>>> = Mutex::new((0..scenes.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = opts.parallelism.clamp(1, scenes.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(scene) = scenes.get(i) else { break };
                let r = run_scene(scene, sut, opts);
                results.lock().expect("no panics while holding the lock")[i] = Some(r);
            });
        }
    });
    let mut records = Records {
        mcq: Vec::new(),
        spatial: Vec::new(),
    };
    for r in results.into_inner().expect("workers finished").into_iter().flatten() {
        records.mcq.extend(r.mcq);
        records.spatial.extend(r.spatial);
    }
    let variants: Vec<VariantSummary> = opts
        .variants()
        .into_iter()
        .map(|v| VariantSummary::from_records(v, &records.spatial))
        .collect();
    let primary = &variants[0];
    let distinct = |f: &dyn Fn(&LanguageEnhancedMap) -> String| {
        scenes.iter().map(|s| f(&s.map)).collect::<BTreeSet<_>>().into_iter().collect()
    };
    BenchReport {
        schema_version: REPORT_SCHEMA_VERSION,
        metadata: RunMetadata {
            lvlm_names: distinct(&|m| m.provenance.captioner_name.clone()),
            bev_sources: distinct(&|m| serde_json::to_value(m.provenance.bev_source).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()),
            llm_name: sut.llm.name().to_string(),
            primary_variant: opts.primary(),
            seed: opts.seed,
            distance_error_aggregate: "mean".into(),
        },
        counts: Counts {
            scenes: scenes.len(),
            mcq_questions: records.mcq.len(),
            spatial_queries: scenes.iter().map(|s| s.queries.len()).sum(),
        },
        mcq: McqScores::from_records(&records.mcq),
        jaccard_mean: primary.jaccard_mean,
        distance_error_mean: primary.distance_error_mean,
        variants,
        records,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::queries::{generate_spatial_queries, mock_script};
    use crate::grid::GridMeta;
    use crate::map::{BevSource, Provenance};
    use crate::spatial::tests::obj;

    fn question(i: usize, category: QuestionCategory) -> BenchQuestion {
        BenchQuestion {
            question_id: format!("q{i}"),
            scene_token: "s".into(),
            category,
            question_text: "?".into(),
            choices: vec!["a".into(), "b".into(), "c".into(), "d".into()],
            correct_idx: i % 4,
            vehicle_category: None,
        }
    }

    #[test]
    fn mcq_scoring() {
        let qs: Vec<_> = (0..5).map(|i| question(i, QuestionCategory::InstanceCounting)).collect();
        let (scores, _) = score_mcq(&qs, |q| Ok(q.correct_idx));
        assert_eq!(scores.overall.unwrap().accuracy, 1.0);
        let (scores, records) = score_mcq(&qs, |q| if q.question_id < "q3".into() { Ok(q.correct_idx) } else { Ok(9) });
        assert!((scores.per_category[&QuestionCategory::InstanceCounting].accuracy - 0.6).abs() < 1e-12);
        assert!(records[4].note.as_deref().unwrap().contains("out of range"));
        let (scores, _) = score_mcq(&qs, |_| Err("down".into()));
        assert_eq!(scores.overall.unwrap().correct, 0);
    }

    #[test]
    fn choice_letters() {
        assert_eq!(parse_choice("B"), Some(1));
        assert_eq!(parse_choice(" (c) red"), Some(2));
        assert_eq!(parse_choice("The answer is: D"), Some(3));
        assert_eq!(parse_choice("Answer: A"), Some(0));
        assert_eq!(parse_choice("maybe"), None);
    }

    #[test]
    fn text_predictions() {
        let set = Expected::ObjectIds { object_ids: vec![] };
        let dist = Expected::DistanceMeters { meters: 1.0 };
        assert_eq!(
            prediction_from_text("Objects 2, 3 and 5.", &set),
            Some(Prediction::ObjectIds { object_ids: vec![2, 3, 5] })
        );
        assert_eq!(prediction_from_text("There are none.", &set), Some(Prediction::ObjectIds { object_ids: vec![] }));
        assert_eq!(prediction_from_text("About 15.5 meters", &dist), Some(Prediction::DistanceMeters { meters: 15.5 }));
        assert_eq!(prediction_from_text("far", &dist), None);
    }

    fn map() -> LanguageEnhancedMap {
        LanguageEnhancedMap::new(
            "s",
            GridMeta::default(),
            Provenance::new("m", BevSource::Synthetic),
            vec![obj(1, 3.0, 4.0), obj(2, -6.0, 2.0), obj(3, 10.0, -1.0)],
        )
    }

    #[test]
    fn random_baseline_is_seeded_and_bounded() {
        let m = map();
        let set = Expected::ObjectIds { object_ids: vec![1] };
        assert_eq!(random_baseline(&m, &set, 4), random_baseline(&m, &set, 4));
        let max = max_pairwise_distance(&m);
        assert!((max - (16.0f64.hypot(3.0))).abs() < 1e-12);
        for seed in 0..100 {
            match random_baseline(&m, &Expected::DistanceMeters { meters: 0.0 }, seed) {
                Prediction::DistanceMeters { meters } => assert!((0.0..=max).contains(&meters)),
                other => panic!("{other:?}"),
            }
        }
        let one = LanguageEnhancedMap::new("o", GridMeta::default(), Provenance::new("m", BevSource::Synthetic), vec![obj(7, 1.0, 1.0)]);
        for seed in 0..20 {
            let Prediction::ObjectIds { object_ids } = random_baseline(&one, &set, seed) else { panic!() };
            let j = jaccard(&object_ids, &[7]);
            assert!(j == 0.0 || j == 1.0);
        }
    }

    #[test]
    fn run_with_ablation() {
        let m = map();
        let scene = BenchScene {
            questions: (0..4).map(|i| question(i, QuestionCategory::ALL[i])).collect(),
            queries: generate_spatial_queries(&m, 20, 1),
            map: m,
        };
        let llm = mock_script();
        let templates = Templates::builtin();
        let sut = SystemUnderTest { llm: &llm, templates: &templates };
        let opts = BenchOptions {
            ablation: true,
            ..Default::default()
        };
        let report = run_bench(&[scene.clone(), scene], &sut, &opts);
        assert_eq!(report.jaccard_mean, Some(1.0));
        assert_eq!(report.distance_error_mean, Some(0.0));
        let no_ops = report.variant(Variant::NoSpatialOps).unwrap();
        assert!(no_ops.jaccard_mean.unwrap() < 1.0);
        assert!(no_ops.distance_error_mean.unwrap() > 0.0);
        // the scripted model always answers A
        assert_eq!(report.mcq.overall.unwrap().correct, 2);
        assert_eq!(report.counts.spatial_queries, 40);
        assert_eq!(report.records.spatial.len(), 120);
        let back: BenchReport = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn empty_run() {
        let llm = mock_script();
        let templates = Templates::builtin();
        let report = run_bench(&[], &SystemUnderTest { llm: &llm, templates: &templates }, &BenchOptions::default());
        assert_eq!(report.counts.scenes, 0);
        assert!(report.mcq.per_category.is_empty());
        assert_eq!(report.jaccard_mean, None);
    }
}
