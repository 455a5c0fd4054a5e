//! Policy backends: an HTTP text-completion service and canned scripts.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use webnav_core::episode::{Policy, PolicyError, ScriptedPolicy};

use crate::formats::{read_to_string, FormatError};

pub const DEFAULT_MAX_TOKENS: u32 = 256;

#[derive(Serialize)]
struct CompletionRequest<'a> {
    prompt: &'a str,
    max_tokens: u32,
    stop: &'a [String],
}

#[derive(Deserialize)]
struct CompletionResponse {
    text: String,
}

/// POSTs `{prompt, max_tokens, stop}` and reads `{text}`.
#[derive(Debug, Clone)]
pub struct HttpPolicy {
    endpoint: String,
    token: Option<String>,
    max_tokens: u32,
    stop: Vec<String>,
    label: String,
    agent: ureq::Agent,
}

impl HttpPolicy {
    pub fn new(endpoint: &str) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .http_status_as_error(false)
            .build()
            .into();
        HttpPolicy {
            endpoint: endpoint.to_owned(),
            token: None,
            max_tokens: DEFAULT_MAX_TOKENS,
            stop: Vec::new(),
            label: endpoint.to_owned(),
            agent,
        }
    }

    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.token = token.filter(|t| !t.is_empty());
        self
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    pub fn with_stop(mut self, stop: Vec<String>) -> Self {
        self.stop = stop;
        self
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label = label.to_owned();
        self
    }
}

impl Policy for HttpPolicy {
    fn identity(&self) -> &str {
        &self.label
    }

    fn complete(&self, prompt: &str) -> Result<String, PolicyError> {
        let mut request = self.agent.post(&self.endpoint);
        if let Some(token) = &self.token {
            request = request.header("Authorization", format!("Bearer {token}"));
        }
        let body = CompletionRequest {
            prompt,
            max_tokens: self.max_tokens,
            stop: &self.stop,
        };
        let mut response = request
            .send_json(&body)
            .map_err(|e| PolicyError(format!("{}: {e}", self.endpoint)))?;
        let status = response.status();
        if !status.is_success() {
            let detail = response.body_mut().read_to_string().unwrap_or_default();
            return Err(PolicyError(format!(
                "{}: HTTP {}: {}",
                self.endpoint,
                status.as_u16(),
                detail.trim()
            )));
        }
        let parsed: CompletionResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| PolicyError(format!("{}: bad response body: {e}", self.endpoint)))?;
        Ok(parsed.text)
    }
}

/// Completions from a file: a JSON array of strings, or one completion per line.
pub fn script_policy(path: &Path) -> Result<ScriptedPolicy, FormatError> {
    let text = read_to_string(path)?;
    let completions: Vec<String> = match serde_json::from_str::<Vec<String>>(&text) {
        Ok(list) => list,
        Err(_) => text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(str::to_owned)
            .collect(),
    };
    Ok(ScriptedPolicy::once(completions).with_label(&format!("script:{}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn script_file_formats() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "click(element_id=\"0\")\n\nfinish()").unwrap();
        let p = script_policy(f.path()).unwrap();
        assert_eq!(p.complete("x").unwrap(), "click(element_id=\"0\")");
        assert_eq!(p.complete("x").unwrap(), "finish()");
        assert!(p.complete("x").is_err());

        let mut g = tempfile::NamedTempFile::new().unwrap();
        write!(
            g,
            r#"["type_string(element_id=\"0\", content=\"a\nb\", press_enter=False)"]"#
        )
        .unwrap();
        let p = script_policy(g.path()).unwrap();
        assert!(p.complete("x").unwrap().contains('\n'));
    }

    #[test]
    fn unreachable_endpoint_is_a_policy_error() {
        let p = HttpPolicy::new("http://127.0.0.1:9/complete");
        assert!(p.complete("hello").is_err());
    }
}
