//! Scene loading and backend selection shared by the CLI and the service.

use std::path::{Path, PathBuf};

use serde::Serialize;
use talk2bev::bench::queries::DEFAULT_QUERIES_PER_SCENE;
use talk2bev::bench::{
    mock_script, prepare_scene, BenchScene, GenerationError, PrepareError, SceneSources, TemplateQuestionLlm, DEFAULT_PER_CATEGORY,
};
use talk2bev::bundle::{load_bundle, BundleError, SceneBundle, SCENE_FILE};
use talk2bev::captioning::{
    build_language_map, mock_annotators, BuildError, BuildOptions, CaptionerClient, CaptionerConfig, MockCaptioner,
};
use talk2bev::map::LanguageEnhancedMap;
use talk2bev::orchestrator::{LlmClient, LlmConfig, LlmError, OrchestratorError, ScriptedLlm};
use talk2bev::templates::{TemplateError, Templates};
use thiserror::Error;

use crate::clients::{HttpCaptioner, HttpLlm};
use crate::config::{Backend, CaptionerSection, ConfigError, LlmSection};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Backend(String),
    #[error("scene {path}: {source}")]
    Bundle { path: PathBuf, source: BundleError },
    #[error("scene {scene}: {source}")]
    Build { scene: String, source: BuildError },
    #[error(transparent)]
    Prepare(#[from] PrepareError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Orchestrator(#[from] OrchestratorError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error("{0}")]
    Input(String),
}

impl EngineError {
    /// Stable short code for diagnostics and API errors.
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::Config(_) | EngineError::Template(_) => "config",
            EngineError::Backend(_) => "backend",
            EngineError::Bundle { .. } => "bundle",
            EngineError::Build { .. } => "build_map",
            EngineError::Prepare(_) | EngineError::Generation(_) => "question_generation",
            EngineError::Orchestrator(e) => e.code(),
            EngineError::Llm(LlmError::Transport(_)) => "llm_transport",
            EngineError::Llm(_) => "llm",
            EngineError::Io { .. } => "io",
            EngineError::Input(_) => "input",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    #[default]
    Template,
    Llm,
}

/// Everything needed to turn bundles into maps and bench scenes.
pub struct Engine {
    pub templates: Templates,
    pub captioner: CaptionerSection,
    pub llm: LlmSection,
    pub caption_parallelism: usize,
    pub seed: u64,
    pub generator: Generator,
    pub per_category: usize,
    pub queries_per_scene: usize,
}

impl Default for Engine {
    fn default() -> Self {
        Self {
            templates: Templates::builtin(),
            captioner: CaptionerSection::default(),
            llm: LlmSection::default(),
            caption_parallelism: 4,
            seed: 0,
            generator: Generator::Template,
            per_category: DEFAULT_PER_CATEGORY,
            queries_per_scene: DEFAULT_QUERIES_PER_SCENE,
        }
    }
}

pub struct LoadedScene {
    pub dir: PathBuf,
    pub bundle: SceneBundle,
    pub map: LanguageEnhancedMap,
    /// Present when the bundle carries ground truth.
    pub bench: Option<BenchScene>,
}

impl Engine {
    pub fn build_options(&self) -> BuildOptions {
        BuildOptions {
            parallelism: self.caption_parallelism.max(1),
            templates: self.templates.clone(),
            ..Default::default()
        }
    }

    pub fn captioner(&self, bundle: &SceneBundle, dir: &Path) -> Result<Box<dyn CaptionerClient>, EngineError> {
        Ok(match self.captioner.backend {
            Backend::Mock => Box::new(MockCaptioner::from_bundle(bundle, &Default::default())),
            Backend::Http => Box::new(
                HttpCaptioner::new(
                    CaptionerConfig {
                        endpoint: self.captioner.endpoint.clone(),
                        model_id: self.captioner.model_id.clone(),
                        temperature: self.captioner.temperature,
                        timeout_s: self.captioner.timeout_s,
                    },
                    dir,
                )
                .map_err(EngineError::Backend)?,
            ),
        })
    }

    pub fn llm(&self) -> Result<Box<dyn LlmClient>, EngineError> {
        Ok(match self.llm.backend {
            Backend::Mock => match &self.llm.script {
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(|source| EngineError::Io {
                        context: format!("reading script {}", path.display()),
                        source,
                    })?;
                    Box::new(ScriptedLlm::from_json(&text)?.with_name(format!("scripted:{}", path.display())))
                }
                None => Box::new(mock_script()),
            },
            Backend::Http => Box::new(
                HttpLlm::new(LlmConfig {
                    endpoint: self.llm.endpoint.clone(),
                    model_id: self.llm.model_id.clone(),
                    temperature: self.llm.temperature,
                    timeout_ms: self.llm.timeout_ms,
                })
                .map_err(EngineError::Backend)?,
            ),
        })
    }

    pub fn build_map(&self, bundle: &SceneBundle, dir: &Path) -> Result<LanguageEnhancedMap, EngineError> {
        let captioner = self.captioner(bundle, dir)?;
        build_language_map(bundle, captioner.as_ref(), &self.build_options()).map_err(|source| EngineError::Build {
            scene: bundle.scene_token.clone(),
            source,
        })
    }

    /// System map plus, when the bundle has ground truth, questions and
    /// queries drawn from the ground-truth map.
    pub fn load_scene(&self, dir: &Path) -> Result<LoadedScene, EngineError> {
        let bundle = load_bundle(dir).map_err(|source| EngineError::Bundle {
            path: dir.to_path_buf(),
            source,
        })?;
        let (map, bench) = if bundle.gt_objects.is_some() {
            let captioner = self.captioner(&bundle, dir)?;
            let annotators = mock_annotators(&bundle, &Default::default());
            let scene_seed = self.seed ^ token_seed(&bundle.scene_token);
            let template_llm = TemplateQuestionLlm::new(scene_seed);
            let configured;
            let question_llm: &dyn LlmClient = match self.generator {
                Generator::Template => &template_llm,
                Generator::Llm => {
                    configured = self.llm()?;
                    configured.as_ref()
                }
            };
            let build = self.build_options();
            let src = SceneSources {
                captioner: captioner.as_ref(),
                annotators: &annotators,
                question_llm,
                build: &build,
                per_category: self.per_category,
                queries_per_scene: self.queries_per_scene,
                seed: self.seed,
            };
            let (scene, _) = prepare_scene(&bundle, &src)?;
            (scene.map.clone(), Some(scene))
        } else {
            (self.build_map(&bundle, dir)?, None)
        };
        Ok(LoadedScene {
            dir: dir.to_path_buf(),
            bundle,
            map,
            bench,
        })
    }
}

/// Seed offset for a scene: the numeric part of synthetic tokens, so that
/// `synth-000042` generates with seed 42, or 0 for other tokens.
fn token_seed(token: &str) -> u64 {
    token.strip_prefix("synth-").and_then(|s| s.parse().ok()).unwrap_or(0)
}

/// Subdirectories of `dir` that hold a bundle, sorted by path.
pub fn discover_scenes(dir: &Path) -> Result<Vec<PathBuf>, EngineError> {
    let entries = std::fs::read_dir(dir).map_err(|source| EngineError::Io {
        context: format!("listing {}", dir.display()),
        source,
    })?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(SCENE_FILE).is_file())
        .collect();
    dirs.sort();
    Ok(dirs)
}

/// Bundle directories matching a glob pattern, sorted by path.
pub fn glob_scenes(pattern: &str) -> Result<Vec<PathBuf>, EngineError> {
    let paths = glob::glob(pattern).map_err(|e| EngineError::Input(format!("bad glob `{pattern}`: {e}")))?;
    let mut dirs: Vec<PathBuf> = paths
        .filter_map(Result::ok)
        .filter(|p| p.join(SCENE_FILE).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(EngineError::Input(format!("no scene bundles match `{pattern}`")));
    }
    Ok(dirs)
}
