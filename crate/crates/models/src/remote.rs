//! Blocking client for a remote scoring endpoint.

use std::time::Duration;

use sparsepix_core::{Image, ModelError, ScoreVector, Scorer};

use crate::wire::{ScoreRequest, ScoreResponse, SCORES_PATH};

/// Remote black box speaking the `POST /v1/scores` JSON protocol.
///
/// Connection failures, timeouts and 5xx responses are retried up to
/// `retries` more times. A request is idempotent, so retries never change
/// what the caller is charged; budget accounting happens in
/// [`sparsepix_core::BudgetedModel`] after a valid response arrives.
#[derive(Debug, Clone)]
pub struct RemoteModel {
    url: String,
    timeout: Duration,
    retries: u32,
    client: reqwest::blocking::Client,
}

impl RemoteModel {
    pub fn new(endpoint: &str, timeout: Duration, retries: u32) -> Result<Self, ModelError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ModelError::Transport(e.to_string()))?;
        let url = format!("{}{}", endpoint.trim_end_matches('/'), SCORES_PATH);
        Ok(Self { url, timeout, retries, client })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    pub fn retries(&self) -> u32 {
        self.retries
    }

    fn attempt(&self, body: &ScoreRequest) -> Result<ScoreVector, Attempt> {
        let resp = self
            .client
            .post(&self.url)
            .json(body)
            .send()
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() {
            return Err(Attempt::Retry(format!("server returned {status}")));
        }
        if !status.is_success() {
            return Err(Attempt::Fatal(ModelError::Protocol(format!("server returned {status}"))));
        }
        let bytes = resp.bytes().map_err(|e| Attempt::Retry(e.to_string()))?;
        let parsed: ScoreResponse = serde_json::from_slice(&bytes)
            .map_err(|e| Attempt::Fatal(ModelError::Protocol(format!("malformed response: {e}"))))?;
        ScoreVector::new(parsed.scores).map_err(|e| Attempt::Fatal(ModelError::Protocol(e.to_string())))
    }
}

enum Attempt {
    Retry(String),
    Fatal(ModelError),
}

impl Scorer for RemoteModel {
    fn score(&self, image: &Image) -> Result<ScoreVector, ModelError> {
        let body = ScoreRequest::from_image(image);
        let mut last = String::new();
        for attempt in 0..=self.retries {
            match self.attempt(&body) {
                Ok(s) => return Ok(s),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => {
                    log::warn!("scoring attempt {} failed: {msg}", attempt + 1);
                    last = msg;
                }
            }
        }
        Err(ModelError::Transport(format!("{} attempts failed: {last}", self.retries + 1)))
    }
}
