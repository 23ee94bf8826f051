//! HTTP client for the fill-mask wire protocol.
//!
//! `POST {endpoint}/v1/fill-mask` with `{"model","text","targets","top_k"}`;
//! the server answers `{"model","predictions","target_scores","oov"}`.
//! 400 signals a mask-count violation, 404 an unknown model and 503 a model
//! that is still loading.

use std::collections::BTreeMap;
use std::time::Duration;

use reqwest::StatusCode;
use serde::{Deserialize, Serialize};

use super::{Prediction, ProbabilityQuery, ProbeBackend, ProbeResponse};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillMaskRequest {
    pub model: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillMaskResponse {
    pub model: String,
    #[serde(default)]
    pub predictions: Vec<Prediction>,
    #[serde(default)]
    pub target_scores: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    pub oov: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            initial_backoff: Duration::from_millis(250),
            multiplier: 2.0,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        self.initial_backoff
            .mul_f64(self.multiplier.powi(retry.saturating_sub(1) as i32))
    }
}

enum Attempt {
    Done(Result<ProbeResponse>),
    Retry(String),
}

pub struct RemoteBackend {
    endpoint: String,
    model_id: String,
    mask_token: String,
    backend_id: String,
    retry: RetryPolicy,
    client: reqwest::blocking::Client,
}

impl RemoteBackend {
    pub fn new(
        endpoint: impl Into<String>,
        model_id: impl Into<String>,
        mask_token: impl Into<String>,
    ) -> Result<Self> {
        let model_id = model_id.into();
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| Error::Config(format!("cannot build HTTP client: {e}")))?;
        Ok(RemoteBackend {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            backend_id: format!("remote:{model_id}"),
            model_id,
            mask_token: mask_token.into(),
            retry: RetryPolicy::default(),
            client,
        })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn attempt(&self, request: &FillMaskRequest, query: &ProbabilityQuery) -> Attempt {
        let url = format!("{}/v1/fill-mask", self.endpoint);
        let response = match self.client.post(&url).json(request).send() {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(format!("POST {url}: {e}")),
        };
        let status = response.status();
        let body = response.text().unwrap_or_default();
        match status {
            StatusCode::OK => Attempt::Done(self.convert(&body, query)),
            StatusCode::BAD_REQUEST => Attempt::Done(Err(Error::Protocol(format!(
                "server rejected query (mask count): {}",
                body.trim()
            )))),
            StatusCode::NOT_FOUND => Attempt::Done(Err(Error::UnknownModel(self.model_id.clone()))),
            s if s == StatusCode::SERVICE_UNAVAILABLE
                || s == StatusCode::BAD_GATEWAY
                || s == StatusCode::GATEWAY_TIMEOUT
                || s == StatusCode::TOO_MANY_REQUESTS
                || s.is_server_error() =>
            {
                Attempt::Retry(format!("HTTP {s}: {}", body.trim()))
            }
            s => Attempt::Done(Err(Error::Protocol(format!(
                "unexpected HTTP {s}: {}",
                body.trim()
            )))),
        }
    }

    fn convert(&self, body: &str, query: &ProbabilityQuery) -> Result<ProbeResponse> {
        let wire: FillMaskResponse = serde_json::from_str(body)
            .map_err(|e| Error::Protocol(format!("malformed fill-mask response: {e}")))?;
        if wire.model != self.model_id {
            return Err(Error::Protocol(format!(
                "response names model {:?}, expected {:?}",
                wire.model, self.model_id
            )));
        }
        let target_scores = match (&query.targets, wire.target_scores) {
            (Some(targets), scores) => {
                let mut scores = scores.unwrap_or_default();
                for target in targets {
                    if wire.oov.contains(target) {
                        scores.entry(target.clone()).or_insert(0.0);
                    }
                }
                Some(scores)
            }
            (None, _) => None,
        };
        Ok(ProbeResponse {
            query_digest: query.digest(&self.model_id),
            predictions: wire.predictions,
            target_scores,
            oov: wire.oov,
            backend_id: self.backend_id.clone(),
        })
    }
}

impl ProbeBackend for RemoteBackend {
    fn backend_id(&self) -> &str {
        &self.backend_id
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn mask_token(&self) -> &str {
        &self.mask_token
    }

    fn probe(&self, query: &ProbabilityQuery) -> Result<ProbeResponse> {
        let request = FillMaskRequest {
            model: self.model_id.clone(),
            text: query.text.clone(),
            targets: query.targets.clone(),
            top_k: query.top_k,
        };
        let attempts = self.retry.attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=attempts {
            match self.attempt(&request, query) {
                Attempt::Done(result) => return result,
                Attempt::Retry(message) => {
                    log::warn!(
                        "{}: attempt {attempt}/{attempts} failed: {message}",
                        self.model_id
                    );
                    last = message;
                    if attempt < attempts {
                        std::thread::sleep(self.retry.backoff(attempt));
                    }
                }
            }
        }
        Err(Error::Transport {
            attempts,
            message: last,
        })
    }

    fn is_deterministic(&self) -> bool {
        false
    }
}
