//! HTTP client for the encoder sidecar.
//!
//! Endpoints (JSON bodies):
//!
//! - `POST {base}/embed` `{"model", "texts"}` → `{"model", "dim", "vectors"}`
//! - `POST {base}/finetune` `{"base", "pairs": [{"text1","text2","label"}], "params"}` → `{"checkpoint_id"}`
//! - `GET {base}/health` → `{"status", "models": [{"role", "checkpoint_id", "dim"}]}`

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EmbeddingError, EmbeddingProvider};
use crate::corpus::RequirementPair;

/// Extra hyperparameters forwarded verbatim to the fine-tune endpoint.
pub type FinetuneParams = serde_json::Value;

const MAX_BODY: u64 = 512 * 1024 * 1024;

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

fn join(base: &str, path: &str) -> String {
    format!("{}/{}", base.trim_end_matches('/'), path)
}

fn unavailable(e: impl std::fmt::Display) -> EmbeddingError {
    EmbeddingError::ProviderUnavailable(e.to_string())
}

fn error_body(resp: &mut ureq::http::Response<ureq::Body>) -> String {
    resp.body_mut()
        .with_config()
        .limit(64 * 1024)
        .read_to_string()
        .unwrap_or_default()
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    #[allow(dead_code)]
    model: String,
    dim: usize,
    vectors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceModel {
    pub role: String,
    pub checkpoint_id: String,
    pub dim: usize,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Health {
    pub status: String,
    pub models: Vec<ServiceModel>,
}

/// One model (role name or checkpoint id) served by the sidecar.
pub struct RemoteEncoder {
    url: String,
    model: String,
    dim: usize,
    agent: ureq::Agent,
}

impl RemoteEncoder {
    pub fn new(base_url: &str, model: impl Into<String>, dim: usize) -> Self {
        Self {
            url: join(base_url, "embed"),
            model: model.into(),
            dim,
            agent: agent(Duration::from_secs(600)),
        }
    }

    /// Looks up `model` (a role or checkpoint id) in `/health` to learn its
    /// dimension.
    pub fn discover(base_url: &str, model: &str) -> Result<Self, EmbeddingError> {
        let service = RemoteEncoderService::new(base_url);
        let dim = service
            .health()?
            .models
            .into_iter()
            .find(|m| m.role == model || m.checkpoint_id == model)
            .map(|m| m.dim)
            .ok_or_else(|| unavailable(format!("model {model:?} not advertised by {base_url}")))?;
        Ok(Self::new(base_url, model, dim))
    }
}

impl EmbeddingProvider for RemoteEncoder {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let mut resp = self
            .agent
            .post(&self.url)
            .send_json(EmbedRequest {
                model: &self.model,
                texts,
            })
            .map_err(unavailable)?;
        let status = resp.status().as_u16();
        if status != 200 {
            let body = error_body(&mut resp);
            return Err(unavailable(format!("POST {} returned {status}: {body}", self.url)));
        }
        let parsed: EmbedResponse = resp
            .body_mut()
            .with_config()
            .limit(MAX_BODY)
            .read_json()
            .map_err(unavailable)?;
        if parsed.dim != self.dim {
            return Err(EmbeddingError::DimMismatch {
                expected: self.dim,
                found: parsed.dim,
            });
        }
        Ok(parsed.vectors)
    }
}

/// Encoder fine-tuning as checkpoint bookkeeping: the service trains, the
/// caller only tracks ids.
pub trait EncoderFinetuner {
    /// Fine-tunes `base` on labeled `pairs`, returning the new checkpoint id.
    /// A declined request is [`EmbeddingError::FinetuneRejected`].
    fn finetune(
        &self,
        base: &str,
        pairs: &[RequirementPair],
        params: &FinetuneParams,
    ) -> Result<String, EmbeddingError>;

    /// Provider serving `checkpoint_id`.
    fn provider(&self, checkpoint_id: &str, dim: usize) -> Result<Box<dyn EmbeddingProvider>, EmbeddingError>;
}

#[derive(Serialize)]
struct WirePair<'a> {
    text1: &'a str,
    text2: &'a str,
    label: &'a str,
}

#[derive(Serialize)]
struct FinetuneRequest<'a> {
    base: &'a str,
    pairs: Vec<WirePair<'a>>,
    params: &'a FinetuneParams,
}

#[derive(Deserialize)]
struct FinetuneResponse {
    checkpoint_id: String,
}

pub struct RemoteEncoderService {
    base_url: String,
    agent: ureq::Agent,
}

impl RemoteEncoderService {
    pub fn new(base_url: &str) -> Self {
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            agent: agent(Duration::from_secs(24 * 3600)),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    pub fn health(&self) -> Result<Health, EmbeddingError> {
        let url = join(&self.base_url, "health");
        let mut resp = self.agent.get(&url).call().map_err(unavailable)?;
        if resp.status().as_u16() != 200 {
            return Err(unavailable(format!("GET {url} returned {}", resp.status())));
        }
        resp.body_mut().read_json().map_err(unavailable)
    }
}

impl EncoderFinetuner for RemoteEncoderService {
    fn finetune(
        &self,
        base: &str,
        pairs: &[RequirementPair],
        params: &FinetuneParams,
    ) -> Result<String, EmbeddingError> {
        let url = join(&self.base_url, "finetune");
        let body = FinetuneRequest {
            base,
            pairs: pairs
                .iter()
                .filter_map(|p| {
                    p.label.map(|l| WirePair {
                        text1: &p.text1,
                        text2: &p.text2,
                        label: l.name(),
                    })
                })
                .collect(),
            params,
        };
        let mut resp = self.agent.post(&url).send_json(&body).map_err(unavailable)?;
        let status = resp.status().as_u16();
        match status {
            200 | 201 => {
                let parsed: FinetuneResponse = resp
                    .body_mut()
                    .read_json()
                    .map_err(unavailable)?;
                Ok(parsed.checkpoint_id)
            }
            400..=499 | 507 => Err(EmbeddingError::FinetuneRejected {
                status,
                message: error_body(&mut resp),
            }),
            _ => Err(unavailable(format!("POST {url} returned {status}: {}", error_body(&mut resp)))),
        }
    }

    fn provider(&self, checkpoint_id: &str, dim: usize) -> Result<Box<dyn EmbeddingProvider>, EmbeddingError> {
        Ok(Box::new(RemoteEncoder::new(&self.base_url, checkpoint_id, dim)))
    }
}
