//! HTTP backends for the captioner and the LLM.
//!
//! Captioner: `POST {model, image: base64 PNG crop, prompt, temperature}` and
//! a `{text}` reply. LLM: `POST {model, messages: [{role, content}],
//! temperature}` and a `{text}` reply. Connection failures, timeouts and 5xx
//! statuses are transport errors; other non-success replies are refusals.

use std::io::Cursor;
use std::path::PathBuf;
use std::thread;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use image::ImageFormat;
use serde::{Deserialize, Serialize};
use talk2bev::captioning::{CaptionError, CaptionerClient, CaptionerConfig, ImageRegion, PromptKind};
use talk2bev::orchestrator::{LlmClient, LlmConfig, LlmError, Message};

#[derive(Debug, Serialize, Deserialize)]
pub struct DescribeRequest {
    pub model: String,
    pub image: String,
    pub prompt: String,
    pub temperature: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CompleteRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TextReply {
    pub text: String,
}

enum Failure {
    Transport(String),
    Refused(String),
}

fn post_json<T: Serialize>(client: &reqwest::blocking::Client, url: &str, body: &T) -> Result<String, Failure> {
    let resp = client
        .post(url)
        .json(body)
        .send()
        .map_err(|e| Failure::Transport(e.to_string()))?;
    let status = resp.status();
    if status.is_server_error() {
        return Err(Failure::Transport(format!("{url} answered {status}")));
    }
    let text = resp.text().map_err(|e| Failure::Transport(e.to_string()))?;
    if !status.is_success() {
        return Err(Failure::Refused(format!("{url} answered {status}: {text}")));
    }
    let reply: TextReply =
        serde_json::from_str(&text).map_err(|e| Failure::Refused(format!("reply is not {{\"text\": ...}}: {e}")))?;
    if reply.text.trim().is_empty() {
        return Err(Failure::Refused("empty text".into()));
    }
    Ok(reply.text)
}

fn client(timeout: Duration) -> Result<reqwest::blocking::Client, String> {
    reqwest::blocking::Client::builder()
        .timeout(timeout)
        .build()
        .map_err(|e| e.to_string())
}

/// Crop of a camera image as PNG bytes.
pub fn crop_png(path: &std::path::Path, bbox_px: [f64; 4]) -> Result<Vec<u8>, CaptionError> {
    let img = image::open(path).map_err(|e| CaptionError::Image(format!("{}: {e}", path.display())))?;
    let (w, h) = (img.width(), img.height());
    let x0 = (bbox_px[0].floor().max(0.0) as u32).min(w.saturating_sub(1));
    let y0 = (bbox_px[1].floor().max(0.0) as u32).min(h.saturating_sub(1));
    let x1 = (bbox_px[2].ceil().max(0.0) as u32).clamp(x0 + 1, w);
    let y1 = (bbox_px[3].ceil().max(0.0) as u32).clamp(y0 + 1, h);
    let crop = img.crop_imm(x0, y0, x1 - x0, y1 - y0);
    let mut out = Cursor::new(Vec::new());
    crop.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| CaptionError::Image(e.to_string()))?;
    Ok(out.into_inner())
}

/// Captioner behind an HTTP endpoint. Image paths resolve against the
/// bundle directory.
pub struct HttpCaptioner {
    name: String,
    cfg: CaptionerConfig,
    bundle_dir: PathBuf,
    client: reqwest::blocking::Client,
}

impl HttpCaptioner {
    pub fn new(cfg: CaptionerConfig, bundle_dir: impl Into<PathBuf>) -> Result<Self, String> {
        if !(cfg.timeout_s.is_finite() && cfg.timeout_s > 0.0) {
            return Err(format!("captioner timeout must be positive, got {}", cfg.timeout_s));
        }
        Ok(Self {
            name: format!("http:{}", cfg.model_id),
            client: client(Duration::from_secs_f64(cfg.timeout_s))?,
            cfg,
            bundle_dir: bundle_dir.into(),
        })
    }
}

impl CaptionerClient for HttpCaptioner {
    fn name(&self) -> &str {
        &self.name
    }

    fn describe(&self, region: &ImageRegion, prompt: &str, _kind: PromptKind) -> Result<String, CaptionError> {
        let rel = region
            .image_path
            .as_ref()
            .ok_or_else(|| CaptionError::Image(format!("no image for camera {}", region.camera_name)))?;
        let png = crop_png(&self.bundle_dir.join(rel), region.bbox_px)?;
        let body = DescribeRequest {
            model: self.cfg.model_id.clone(),
            image: STANDARD.encode(png),
            prompt: prompt.to_string(),
            temperature: self.cfg.temperature,
        };
        post_json(&self.client, &self.cfg.endpoint, &body).map_err(|f| match f {
            Failure::Transport(m) => CaptionError::Transport(m),
            Failure::Refused(m) => CaptionError::Refused(m),
        })
    }
}

/// LLM behind an HTTP endpoint. Transport failures are retried twice.
pub struct HttpLlm {
    name: String,
    cfg: LlmConfig,
    client: reqwest::blocking::Client,
    retries: u32,
    backoff: Duration,
}

impl HttpLlm {
    pub fn new(cfg: LlmConfig) -> Result<Self, String> {
        if cfg.timeout_ms == 0 {
            return Err("LLM timeout must be positive".into());
        }
        Ok(Self {
            name: format!("http:{}", cfg.model_id),
            client: client(Duration::from_millis(cfg.timeout_ms))?,
            cfg,
            retries: 2,
            backoff: Duration::from_millis(200),
        })
    }

    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }
}

impl LlmClient for HttpLlm {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, messages: &[Message]) -> Result<String, LlmError> {
        let body = CompleteRequest {
            model: self.cfg.model_id.clone(),
            messages: messages.to_vec(),
            temperature: self.cfg.temperature,
        };
        let mut attempt = 0;
        loop {
            match post_json(&self.client, &self.cfg.endpoint, &body) {
                Ok(text) => return Ok(text),
                Err(Failure::Refused(m)) => return Err(LlmError::Refusal(m)),
                Err(Failure::Transport(m)) if attempt >= self.retries => return Err(LlmError::Transport(m)),
                Err(Failure::Transport(_)) => {
                    thread::sleep(self.backoff * 2u32.pow(attempt));
                    attempt += 1;
                }
            }
        }
    }
}
