//! Chat-completions backend over HTTP (OpenAI-compatible wire format).

use std::sync::Arc;

use serde_json::{json, Value};

use super::{BackendConfig, BackendError, CompletionBackend, CompletionRequest};
use crate::http::{classify_status, HttpRequest, HttpTransport, StatusClass};

pub struct ChatBackend {
    transport: Arc<dyn HttpTransport>,
    model_id: String,
    endpoint: String,
    api_key: String,
    temperature: f64,
}

impl ChatBackend {
    /// Reads the API key from the environment variable named in `config`.
    pub fn from_config(config: &BackendConfig, transport: Arc<dyn HttpTransport>) -> Result<Self, BackendError> {
        let api_key = std::env::var(&config.api_key_env)
            .map_err(|_| BackendError::Auth(format!("environment variable {} is not set", config.api_key_env)))?;
        Ok(ChatBackend::with_key(config, transport, api_key))
    }

    pub fn with_key(config: &BackendConfig, transport: Arc<dyn HttpTransport>, api_key: String) -> Self {
        ChatBackend {
            transport,
            model_id: config.model_id.clone(),
            endpoint: config.endpoint.clone(),
            api_key,
            temperature: config.temperature,
        }
    }
}

/// Pulls `choices[0].message.content` out of a chat-completions payload.
pub fn extract_content(body: &[u8]) -> Result<String, BackendError> {
    let v: Value = serde_json::from_slice(body).map_err(|e| BackendError::Permanent(format!("bad payload: {e}")))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| BackendError::Permanent("payload has no choices[0].message.content".into()))
}

impl CompletionBackend for ChatBackend {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError> {
        let payload = json!({
            "model": self.model_id,
            "temperature": self.temperature,
            "messages": [{"role": "user", "content": request.prompt}],
        });
        let req = HttpRequest::post_json(&self.endpoint, &payload)
            .header("authorization", format!("Bearer {}", self.api_key));
        let response = self.transport.send(&req).map_err(|e| BackendError::Transient(e.0))?;
        match classify_status(response.status) {
            StatusClass::Success => extract_content(&response.body),
            StatusClass::Transient => Err(BackendError::Transient(format!("HTTP {}", response.status))),
            StatusClass::Auth => Err(BackendError::Auth(format!("HTTP {}: {}", response.status, response.text()))),
            StatusClass::Permanent => {
                Err(BackendError::Permanent(format!("HTTP {}: {}", response.status, response.text())))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::Task;
    use crate::http::testing::ScriptedTransport;

    fn chat(content: &str) -> String {
        json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
    }

    #[test]
    fn sends_prompt_and_reads_content() {
        let t = Arc::new(ScriptedTransport::new(vec![ScriptedTransport::status(200, &chat("{\"party\":\"Republican\",\"confidence\":2}"))]));
        let cfg = BackendConfig { model_id: "gpt-test".into(), ..BackendConfig::default() };
        let b = ChatBackend::with_key(&cfg, t.clone(), "sk-test".into());
        let out = b.complete(&CompletionRequest { task: Task::Alignment, prompt: "P", text: "T" }).unwrap();
        assert!(out.contains("Republican"));
        let seen = t.seen.lock().unwrap();
        let body: Value = serde_json::from_slice(seen[0].body.as_ref().unwrap()).unwrap();
        assert_eq!(body["model"], "gpt-test");
        assert_eq!(body["messages"][0]["content"], "P");
        assert!(seen[0].headers.iter().any(|(k, v)| k == "authorization" && v == "Bearer sk-test"));
    }

    #[test]
    fn maps_statuses() {
        let t = Arc::new(ScriptedTransport::new(vec![
            ScriptedTransport::status(429, ""),
            ScriptedTransport::status(401, "no"),
            ScriptedTransport::status(400, "bad"),
        ]));
        let b = ChatBackend::with_key(&BackendConfig::default(), t, "k".into());
        let req = CompletionRequest { task: Task::Alignment, prompt: "P", text: "T" };
        assert!(matches!(b.complete(&req), Err(BackendError::Transient(_))));
        assert!(matches!(b.complete(&req), Err(BackendError::Auth(_))));
        assert!(matches!(b.complete(&req), Err(BackendError::Permanent(_))));
    }
}
