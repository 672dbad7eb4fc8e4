//! HTTP transport behind the gateway.
//!
//! The trait exists so tests can swap in transports that record, stub, or
//! panic; the gateway never talks to the network except through it.

use std::time::Duration;

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct TransportError {
    pub message: String,
}

impl TransportError {
    pub fn new(message: impl Into<String>) -> Self {
        TransportError { message: message.into() }
    }
}

/// Raw reply from a chat-completions endpoint.
#[derive(Debug, Clone)]
pub struct TransportReply {
    pub status: u16,
    pub body: String,
}

pub trait Transport: Send + Sync {
    fn post_chat(
        &self,
        endpoint: &str,
        api_key: &str,
        body: &serde_json::Value,
    ) -> Result<TransportReply, TransportError>;
}

/// Blocking HTTP transport for chat-completions JSON.
pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new() -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(300)))
            .http_status_as_error(false)
            .build();
        HttpTransport { agent: config.new_agent() }
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        HttpTransport::new()
    }
}

impl Transport for HttpTransport {
    fn post_chat(
        &self,
        endpoint: &str,
        api_key: &str,
        body: &serde_json::Value,
    ) -> Result<TransportReply, TransportError> {
        let mut response = self
            .agent
            .post(endpoint)
            .header("Authorization", &format!("Bearer {api_key}"))
            .header("Content-Type", "application/json")
            .send_json(body)
            .map_err(|e| TransportError::new(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::new(format!("failed reading response body: {e}")))?;
        Ok(TransportReply { status, body })
    }
}
