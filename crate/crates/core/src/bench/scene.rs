//! Assembling a bench scene from a bundle.

use thiserror::Error;

use super::generate::{generate_questions, GenerationError};
use super::queries::generate_spatial_queries;
use super::run::BenchScene;
use crate::bundle::SceneBundle;
use crate::captioning::{build_gt_map, build_language_map, BuildError, BuildOptions, CaptionerClient, GroundTruthAnnotators};
use crate::map::LanguageEnhancedMap;
use crate::orchestrator::LlmClient;

#[derive(Debug, Error)]
pub enum PrepareError {
    #[error("building maps for {scene}: {source}")]
    Build { scene: String, source: BuildError },
    #[error("generating questions for {scene}: {source}")]
    Generation { scene: String, source: GenerationError },
}

pub struct SceneSources<'a> {
    pub captioner: &'a dyn CaptionerClient,
    pub annotators: &'a GroundTruthAnnotators,
    pub question_llm: &'a dyn LlmClient,
    pub build: &'a BuildOptions,
    pub per_category: usize,
    pub queries_per_scene: usize,
    pub seed: u64,
}

/// Builds the system map with the captioner and the reference map with the
/// annotators; questions and queries are drawn from the reference map.
pub fn prepare_scene(
    bundle: &SceneBundle,
    src: &SceneSources<'_>,
) -> Result<(BenchScene, LanguageEnhancedMap), PrepareError> {
    let scene = bundle.scene_token.clone();
    let map = build_language_map(bundle, src.captioner, src.build).map_err(|source| PrepareError::Build {
        scene: scene.clone(),
        source,
    })?;
    let gt = build_gt_map(bundle, src.annotators, src.build).map_err(|source| PrepareError::Build {
        scene: scene.clone(),
        source,
    })?;
    let questions = generate_questions(&gt, src.question_llm, &src.build.templates, src.per_category)
        .map_err(|source| PrepareError::Generation { scene, source })?;
    let queries = generate_spatial_queries(&gt, src.queries_per_scene, src.seed);
    Ok((BenchScene { map, questions, queries }, gt))
}
