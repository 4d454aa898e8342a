//! Service configuration: a TOML file plus `TALK2BEV_*` environment overrides.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid value for {key}: {message}")]
    Invalid { key: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    Mock,
    Http,
}

impl std::str::FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mock" => Ok(Backend::Mock),
            "http" => Ok(Backend::Http),
            other => Err(format!("expected `mock` or `http`, got `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaptionerSection {
    pub backend: Backend,
    pub endpoint: String,
    pub model_id: String,
    pub temperature: f64,
    pub timeout_s: f64,
}

impl Default for CaptionerSection {
    fn default() -> Self {
        Self {
            backend: Backend::Mock,
            endpoint: "http://127.0.0.1:8082/v1/describe".into(),
            model_id: "default".into(),
            temperature: 0.7,
            timeout_s: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    pub backend: Backend,
    pub endpoint: String,
    pub model_id: String,
    pub temperature: f64,
    pub timeout_ms: u64,
    /// Rule file for the mock backend; the built-in script when absent.
    pub script: Option<PathBuf>,
}

impl Default for LlmSection {
    fn default() -> Self {
        Self {
            backend: Backend::Mock,
            endpoint: "http://127.0.0.1:8081/v1/complete".into(),
            model_id: "default".into(),
            temperature: 0.7,
            timeout_ms: 60_000,
            script: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: String,
    /// Directory whose subdirectories are scene bundles.
    pub scenes_dir: PathBuf,
    /// Prompt templates; the built-in set when absent.
    pub templates_dir: Option<PathBuf>,
    /// Allowed browser origin; any origin when absent.
    pub cors_origin: Option<String>,
    /// Objects captioned concurrently per scene.
    pub caption_parallelism: usize,
    /// Scenes scored concurrently by the bench endpoint.
    pub bench_parallelism: usize,
    pub seed: u64,
    pub captioner: CaptionerSection,
    pub llm: LlmSection,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".into(),
            scenes_dir: PathBuf::from("scenes"),
            templates_dir: None,
            cors_origin: None,
            caption_parallelism: 4,
            bench_parallelism: 4,
            seed: 0,
            captioner: CaptionerSection::default(),
            llm: LlmSection::default(),
        }
    }
}

/// Environment variables read by [`ServiceConfig::apply_env`].
pub const ENV_KEYS: [&str; 16] = [
    "TALK2BEV_LISTEN",
    "TALK2BEV_SCENES_DIR",
    "TALK2BEV_TEMPLATES_DIR",
    "TALK2BEV_CORS_ORIGIN",
    "TALK2BEV_CAPTION_PARALLELISM",
    "TALK2BEV_BENCH_PARALLELISM",
    "TALK2BEV_SEED",
    "TALK2BEV_CAPTIONER_BACKEND",
    "TALK2BEV_CAPTIONER_ENDPOINT",
    "TALK2BEV_CAPTIONER_MODEL",
    "TALK2BEV_CAPTIONER_TEMPERATURE",
    "TALK2BEV_LLM_BACKEND",
    "TALK2BEV_LLM_ENDPOINT",
    "TALK2BEV_LLM_MODEL",
    "TALK2BEV_LLM_TEMPERATURE",
    "TALK2BEV_LLM_SCRIPT",
];

fn parsed<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Invalid {
        key: key.to_string(),
        message: e.to_string(),
    })
}

impl ServiceConfig {
    /// Parses the file; relative paths resolve against its directory.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text).map_err(|message| ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.scenes_dir = base.join(&cfg.scenes_dir);
        cfg.templates_dir = cfg.templates_dir.map(|d| base.join(d));
        cfg.llm.script = cfg.llm.script.map(|s| base.join(s));
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Overrides fields from `lookup` (normally the process environment).
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        for key in ENV_KEYS {
            let Some(v) = lookup(key) else { continue };
            match key {
                "TALK2BEV_LISTEN" => self.listen = v,
                "TALK2BEV_SCENES_DIR" => self.scenes_dir = v.into(),
                "TALK2BEV_TEMPLATES_DIR" => self.templates_dir = Some(v.into()),
                "TALK2BEV_CORS_ORIGIN" => self.cors_origin = Some(v),
                "TALK2BEV_CAPTION_PARALLELISM" => self.caption_parallelism = parsed(key, &v)?,
                "TALK2BEV_BENCH_PARALLELISM" => self.bench_parallelism = parsed(key, &v)?,
                "TALK2BEV_SEED" => self.seed = parsed(key, &v)?,
                "TALK2BEV_CAPTIONER_BACKEND" => self.captioner.backend = parsed(key, &v)?,
                "TALK2BEV_CAPTIONER_ENDPOINT" => self.captioner.endpoint = v,
                "TALK2BEV_CAPTIONER_MODEL" => self.captioner.model_id = v,
                "TALK2BEV_CAPTIONER_TEMPERATURE" => self.captioner.temperature = parsed(key, &v)?,
                "TALK2BEV_LLM_BACKEND" => self.llm.backend = parsed(key, &v)?,
                "TALK2BEV_LLM_ENDPOINT" => self.llm.endpoint = v,
                "TALK2BEV_LLM_MODEL" => self.llm.model_id = v,
                "TALK2BEV_LLM_TEMPERATURE" => self.llm.temperature = parsed(key, &v)?,
                "TALK2BEV_LLM_SCRIPT" => self.llm.script = Some(v.into()),
                _ => unreachable!("every key is handled"),
            }
        }
        Ok(())
    }

    /// File (or defaults) followed by the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }

    /// Startup checks: the address parses and the directories exist.
    pub fn validate(&self) -> Result<SocketAddr, ConfigError> {
        let invalid = |key: &str, message: String| ConfigError::Invalid {
            key: key.to_string(),
            message,
        };
        let addr: SocketAddr = self.listen.parse().map_err(|e| invalid("listen", format!("{e}")))?;
        if !self.scenes_dir.is_dir() {
            return Err(invalid("scenes_dir", format!("{} is not a directory", self.scenes_dir.display())));
        }
        if let Some(d) = &self.templates_dir {
            if !d.is_dir() {
                return Err(invalid("templates_dir", format!("{} is not a directory", d.display())));
            }
        }
        if let Some(s) = &self.llm.script {
            if !s.is_file() {
                return Err(invalid("llm.script", format!("{} is not a file", s.display())));
            }
        }
        if self.caption_parallelism == 0 || self.bench_parallelism == 0 {
            return Err(invalid("parallelism", "must be at least 1".into()));
        }
        Ok(addr)
    }
}
