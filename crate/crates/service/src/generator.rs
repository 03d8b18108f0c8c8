//! Client for an external image generator reached over HTTP.

use std::time::Duration;

use serde::Serialize;

use crate::error::{ApiError, Result};

const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";

/// Wire body of a generation request.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerateRequest<'a> {
    pub prompt: &'a str,
    pub coefficients: &'a [f64],
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Generator {
    url: String,
    client: reqwest::Client,
}

impl Generator {
    pub fn new(url: String, timeout: Duration) -> Result<Self> {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ApiError::Internal(format!("http client: {e}")))?;
        Ok(Self { url, client })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// Requests one image, retrying once on timeout, transport error or a
    /// non-success status.
    pub async fn generate(&self, request: &GenerateRequest<'_>) -> Result<Vec<u8>> {
        match self.attempt(request).await {
            Ok(bytes) => Ok(bytes),
            Err(first) => {
                log::warn!("generator request failed, retrying once: {first}");
                self.attempt(request).await
            }
        }
    }

    async fn attempt(&self, request: &GenerateRequest<'_>) -> Result<Vec<u8>> {
        let response = self
            .client
            .post(&self.url)
            .json(request)
            .send()
            .await
            .map_err(|e| ApiError::BadGateway(format!("generator unreachable: {e}")))?;
        let status = response.status();
        if !status.is_success() {
            return Err(ApiError::BadGateway(format!("generator answered {status}")));
        }
        let bytes = response
            .bytes()
            .await
            .map_err(|e| ApiError::BadGateway(format!("generator body: {e}")))?;
        if !bytes.starts_with(PNG_MAGIC) {
            return Err(ApiError::BadGateway("generator did not return a PNG".into()));
        }
        Ok(bytes.to_vec())
    }
}
