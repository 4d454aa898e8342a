//! Benchmark: multiple-choice questions, spatial queries with set or
//! distance answers, their generation, scoring and reports.

pub mod generate;
pub mod queries;
pub mod run;
pub mod scene;

use std::collections::BTreeSet;
use std::fmt;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::map::{Category, ObjectId};

pub use generate::{generate_questions, question_map_json, GenerationError, TemplateQuestionLlm, DEFAULT_PER_CATEGORY};
pub use queries::{generate_spatial_queries, mock_script, QUERY_TEMPLATES};
pub use run::{
    random_baseline, run_bench, score_mcq, BenchOptions, BenchReport, BenchScene, McqRecord, McqScores, Prediction,
    SpatialRecord, SystemUnderTest, Variant, VariantSummary,
};
pub use scene::{prepare_scene, PrepareError, SceneSources};

pub const QUESTION_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionCategory {
    InstanceAttribute,
    InstanceCounting,
    VisualReasoning,
    SpatialReasoning,
}

impl QuestionCategory {
    pub const ALL: [QuestionCategory; 4] = [
        QuestionCategory::InstanceAttribute,
        QuestionCategory::InstanceCounting,
        QuestionCategory::VisualReasoning,
        QuestionCategory::SpatialReasoning,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            QuestionCategory::InstanceAttribute => "instance_attribute",
            QuestionCategory::InstanceCounting => "instance_counting",
            QuestionCategory::VisualReasoning => "visual_reasoning",
            QuestionCategory::SpatialReasoning => "spatial_reasoning",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == name)
    }
}

impl fmt::Display for QuestionCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchQuestion {
    pub question_id: String,
    pub scene_token: String,
    pub category: QuestionCategory,
    pub question_text: String,
    pub choices: Vec<String>,
    pub correct_idx: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vehicle_category: Option<Category>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuestionError {
    #[error("question {id}: {message}")]
    Invalid { id: String, message: String },
}

impl BenchQuestion {
    pub fn validate(&self) -> Result<(), QuestionError> {
        let bad = |message: String| QuestionError::Invalid {
            id: self.question_id.clone(),
            message,
        };
        if self.question_text.trim().is_empty() {
            return Err(bad("empty question text".into()));
        }
        if self.choices.len() != 4 {
            return Err(bad(format!("expected 4 choices, got {}", self.choices.len())));
        }
        let distinct: BTreeSet<&str> = self.choices.iter().map(|c| c.trim()).collect();
        if distinct.len() != 4 || distinct.contains("") {
            return Err(bad("choices must be distinct and non-empty".into()));
        }
        if self.correct_idx >= 4 {
            return Err(bad(format!("correct_idx {} out of range", self.correct_idx)));
        }
        Ok(())
    }
}

/// Letter shown for choice `idx`.
pub fn choice_letter(idx: usize) -> char {
    (b'A' + idx as u8) as char
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Expected {
    ObjectIds { object_ids: Vec<ObjectId> },
    DistanceMeters { meters: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialQuery {
    pub question_id: String,
    pub scene_token: String,
    pub query_text: String,
    pub expected: Expected,
    /// Call whose evaluation on the ground-truth map gave `expected`.
    pub reference_call: String,
}

/// One line of a question file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BenchItem {
    Mcq(BenchQuestion),
    Spatial(SpatialQuery),
}

#[derive(Serialize, Deserialize)]
struct ItemLine {
    schema_version: u32,
    #[serde(flatten)]
    item: BenchItem,
}

#[derive(Debug, Error)]
pub enum QuestionFileError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
}

pub fn write_items(items: &[BenchItem], mut out: impl Write) -> io::Result<()> {
    for item in items {
        let line = ItemLine {
            schema_version: QUESTION_SCHEMA_VERSION,
            item: item.clone(),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads JSON lines; blank lines are skipped.
pub fn read_items(input: impl BufRead) -> Result<Vec<BenchItem>, QuestionFileError> {
    let mut items = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| QuestionFileError::Line { line: i + 1, message };
        let parsed: ItemLine = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        if parsed.schema_version != QUESTION_SCHEMA_VERSION {
            return Err(err(format!("unsupported schema_version {}", parsed.schema_version)));
        }
        if let BenchItem::Mcq(q) = &parsed.item {
            q.validate().map_err(|e| err(e.to_string()))?;
        }
        items.push(parsed.item);
    }
    Ok(items)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("distance inputs must be finite and non-negative, got {predicted} and {expected}")]
    Distance { predicted: f64, expected: f64 },
}

/// |A ∩ B| / |A ∪ B|, with two empty sets scoring 1.
pub fn jaccard(predicted: &[ObjectId], expected: &[ObjectId]) -> f64 {
    let a: BTreeSet<_> = predicted.iter().collect();
    let b: BTreeSet<_> = expected.iter().collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

pub fn distance_error(predicted: f64, expected: f64) -> Result<f64, MetricError> {
    let ok = |v: f64| v.is_finite() && v >= 0.0;
    if !ok(predicted) || !ok(expected) {
        return Err(MetricError::Distance { predicted, expected });
    }
    Ok((predicted - expected).abs())
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// FNV-1a, used to derive per-item seeds from stable identifiers.
pub(crate) fn stable_hash(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for &b in *part {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        h ^= 0xff;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}
