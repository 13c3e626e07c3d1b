use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::backend::{BackendError, BackendInfo, Completion, LlmBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequestStyle {
    /// `{"messages": [{"role": "user", "content": ...}]}`
    Chat,
    /// `{"prompt": ...}`
    Prompt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpConfig {
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token; unset means no header.
    pub api_key_env: String,
    /// Sent only when set.
    pub temperature: Option<f64>,
    pub timeout_secs: u64,
    pub style: RequestStyle,
    /// JSON pointer (`/choices/0/message/content`) or dotted path
    /// (`choices.0.message.content`) to the response text.
    pub response_path: String,
    /// Extra top-level request fields, passed through verbatim.
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://localhost:8000/v1/chat/completions".into(),
            model: String::new(),
            api_key_env: "SSAS_API_KEY".into(),
            temperature: None,
            timeout_secs: 60,
            style: RequestStyle::Chat,
            response_path: "/choices/0/message/content".into(),
            extra: serde_json::Map::new(),
        }
    }
}

/// Generic JSON-over-HTTP completion client.
pub struct HttpBackend {
    config: HttpConfig,
    pointer: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Self {
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        Self::with_api_key(config, api_key)
    }

    pub fn with_api_key(config: HttpConfig, api_key: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        Self { pointer: to_pointer(&config.response_path), config, api_key, agent }
    }

    pub fn request_body(&self, prompt: &str) -> serde_json::Value {
        let mut body = self.config.extra.clone();
        body.insert("model".into(), self.config.model.clone().into());
        match self.config.style {
            RequestStyle::Chat => {
                body.insert("messages".into(), serde_json::json!([{ "role": "user", "content": prompt }]));
            }
            RequestStyle::Prompt => {
                body.insert("prompt".into(), prompt.into());
            }
        }
        if let Some(t) = self.config.temperature {
            body.insert("temperature".into(), t.into());
        }
        serde_json::Value::Object(body)
    }

    pub fn extract_text(&self, response: &serde_json::Value) -> Result<String, BackendError> {
        match response.pointer(&self.pointer) {
            Some(serde_json::Value::String(s)) => Ok(s.clone()),
            Some(other) => Ok(other.to_string()),
            None => Err(BackendError::Fatal(format!("response has nothing at `{}`", self.config.response_path))),
        }
    }
}

/// Dotted paths become JSON pointers; pointers pass through.
fn to_pointer(path: &str) -> String {
    if path.is_empty() || path.starts_with('/') {
        path.to_string()
    } else {
        path.split('.').map(|seg| format!("/{}", seg.replace('~', "~0").replace('/', "~1"))).collect()
    }
}

impl LlmBackend for HttpBackend {
    fn complete(&self, request: &Completion<'_>) -> Result<String, BackendError> {
        let body = serde_json::to_string(&self.request_body(request.prompt))
            .map_err(|e| BackendError::Fatal(e.to_string()))?;
        let mut req = self.agent.post(&self.config.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut response = req.send(body.as_str()).map_err(|e| match e {
            ureq::Error::Timeout(_) | ureq::Error::Io(_) | ureq::Error::ConnectionFailed => {
                BackendError::Transient(e.to_string())
            }
            other => BackendError::Fatal(other.to_string()),
        })?;
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(|e| BackendError::Transient(e.to_string()))?;
        match status {
            200..=299 => {
                let json: serde_json::Value = serde_json::from_str(&text)
                    .map_err(|e| BackendError::Fatal(format!("invalid JSON response: {e}")))?;
                self.extract_text(&json)
            }
            408 | 429 | 500..=599 => Err(BackendError::Transient(format!("HTTP {status}"))),
            _ => Err(BackendError::Fatal(format!("HTTP {status}: {text}"))),
        }
    }

    fn info(&self) -> BackendInfo {
        BackendInfo {
            kind: "http".into(),
            model: self.config.model.clone(),
            settings: serde_json::json!({
                "endpoint": self.config.endpoint,
                "temperature": self.config.temperature,
                "style": self.config.style,
                "response_path": self.config.response_path,
                "extra": self.config.extra,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pointer_conversion() {
        assert_eq!(to_pointer("choices.0.message.content"), "/choices/0/message/content");
        assert_eq!(to_pointer("/candidates/0/text"), "/candidates/0/text");
    }

    #[test]
    fn body_shapes() {
        let mut config = HttpConfig { model: "m".into(), temperature: Some(0.0), ..HttpConfig::default() };
        config.extra.insert("top_p".into(), 0.9.into());
        let b = HttpBackend::with_api_key(config.clone(), None);
        let body = b.request_body("hi");
        assert_eq!(body["messages"][0]["content"], "hi");
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["top_p"], 0.9);

        config.style = RequestStyle::Prompt;
        config.temperature = None;
        let body = HttpBackend::with_api_key(config, None).request_body("hi");
        assert_eq!(body["prompt"], "hi");
        assert!(body.get("temperature").is_none());
    }

    #[test]
    fn extraction() {
        let b = HttpBackend::with_api_key(
            HttpConfig { response_path: "output.text".into(), ..HttpConfig::default() },
            None,
        );
        let v = serde_json::json!({"output": {"text": "Neutral"}});
        assert_eq!(b.extract_text(&v).unwrap(), "Neutral");
        assert!(b.extract_text(&serde_json::json!({})).is_err());
    }
}
