use std::time::Duration;

use penflow_core::summarize::{BackendError, GenerationBackend};
use reqwest::header::CONTENT_TYPE;

/// Text generation over HTTP: the prompt is POSTed as `text/plain` and the
/// response body is the completion. An API key, when set, goes in a bearer
/// `Authorization` header.
///
/// Calls block, so use it from a blocking thread, never inside async code.
#[derive(Clone, Debug)]
pub struct HttpBackend {
    pub url: String,
    pub api_key: Option<String>,
    pub model_id: String,
}

impl HttpBackend {
    pub fn new(url: impl Into<String>, api_key: Option<String>, model_id: Option<String>) -> Self {
        let url = url.into();
        let model_id = model_id.unwrap_or_else(|| url.clone());
        HttpBackend { url, api_key, model_id }
    }
}

impl GenerationBackend for HttpBackend {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn generate(&self, prompt: &str, timeout: Duration) -> Result<String, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Request(e.to_string()))?;
        let mut request = client
            .post(&self.url)
            .header(CONTENT_TYPE, "text/plain; charset=utf-8")
            .body(prompt.to_string());
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let classify = |e: reqwest::Error| {
            if e.is_timeout() {
                BackendError::Timeout(timeout)
            } else {
                BackendError::Request(e.to_string())
            }
        };
        let response = request.send().map_err(classify)?;
        let status = response.status();
        if !status.is_success() {
            return Err(BackendError::Request(format!("backend answered {status}")));
        }
        response.text().map_err(classify)
    }
}
