//! Minimal blocking client for the W3C WebDriver protocol.
//!
//! Covers the commands the browser environment needs: sessions, navigation,
//! script execution, element interaction, pointer actions and windows.

use std::time::Duration;

use serde_json::{json, Value};

/// Key under which the protocol serializes element references.
pub const ELEMENT_KEY: &str = "element-6066-11e4-a52e-4f735466cecf";

/// The Enter key in the protocol's key-code space.
pub const ENTER: char = '\u{E007}';

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WebDriverError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("HTTP {status}: {error}: {message}")]
    Protocol {
        status: u16,
        error: String,
        message: String,
    },
    #[error("unexpected response: {0}")]
    Malformed(String),
}

impl WebDriverError {
    /// HTTP status for protocol errors, 0 otherwise.
    pub fn status(&self) -> u16 {
        match self {
            WebDriverError::Protocol { status, .. } => *status,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElementRef(pub String);

impl ElementRef {
    pub fn to_json(&self) -> Value {
        json!({ ELEMENT_KEY: self.0 })
    }

    pub fn from_json(value: &Value) -> Option<Self> {
        value.get(ELEMENT_KEY)?.as_str().map(|s| ElementRef(s.to_owned()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Method {
    Get,
    Post,
    Delete,
}

#[derive(Debug)]
pub struct WebDriver {
    base: String,
    session: String,
    agent: ureq::Agent,
}

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(60)))
        .http_status_as_error(false)
        .build()
        .into()
}

fn send(agent: &ureq::Agent, method: Method, url: &str, body: Option<&Value>) -> Result<Value, WebDriverError> {
    let result = match method {
        Method::Get => agent.get(url).call(),
        Method::Delete => agent.delete(url).call(),
        Method::Post => agent.post(url).send_json(body.unwrap_or(&json!({}))),
    };
    let mut response = result.map_err(|e| WebDriverError::Transport(format!("{url}: {e}")))?;
    let status = response.status().as_u16();
    let text = response
        .body_mut()
        .read_to_string()
        .map_err(|e| WebDriverError::Transport(e.to_string()))?;
    let parsed: Value = serde_json::from_str(&text).map_err(|_| WebDriverError::Malformed(text.clone()))?;
    let value = parsed.get("value").cloned().unwrap_or(Value::Null);
    if (200..300).contains(&status) {
        return Ok(value);
    }
    let field = |k: &str| value.get(k).and_then(Value::as_str).unwrap_or_default().to_owned();
    Err(WebDriverError::Protocol {
        status,
        error: field("error"),
        message: field("message"),
    })
}

impl WebDriver {
    /// Opens a session on the server at `base` (e.g. `http://localhost:4444`).
    pub fn connect(base: &str, capabilities: Value) -> Result<Self, WebDriverError> {
        let base = base.trim_end_matches('/').to_owned();
        let agent = agent();
        let body = json!({ "capabilities": { "alwaysMatch": capabilities } });
        let value = send(&agent, Method::Post, &format!("{base}/session"), Some(&body))?;
        let session = value
            .get("sessionId")
            .and_then(Value::as_str)
            .ok_or_else(|| WebDriverError::Malformed(value.to_string()))?
            .to_owned();
        Ok(WebDriver { base, session, agent })
    }

    pub fn session_id(&self) -> &str {
        &self.session
    }

    fn call(&self, method: Method, path: &str, body: Option<Value>) -> Result<Value, WebDriverError> {
        let url = format!("{}/session/{}{}", self.base, self.session, path);
        send(&self.agent, method, &url, body.as_ref())
    }

    pub fn navigate(&self, url: &str) -> Result<(), WebDriverError> {
        self.call(Method::Post, "/url", Some(json!({ "url": url }))).map(drop)
    }

    pub fn current_url(&self) -> Result<String, WebDriverError> {
        let v = self.call(Method::Get, "/url", None)?;
        v.as_str()
            .map(str::to_owned)
            .ok_or_else(|| WebDriverError::Malformed(v.to_string()))
    }

    pub fn title(&self) -> Result<String, WebDriverError> {
        let v = self.call(Method::Get, "/title", None)?;
        Ok(v.as_str().unwrap_or_default().to_owned())
    }

    pub fn back(&self) -> Result<(), WebDriverError> {
        self.call(Method::Post, "/back", None).map(drop)
    }

    pub fn forward(&self) -> Result<(), WebDriverError> {
        self.call(Method::Post, "/forward", None).map(drop)
    }

    pub fn execute(&self, script: &str, args: Vec<Value>) -> Result<Value, WebDriverError> {
        self.call(
            Method::Post,
            "/execute/sync",
            Some(json!({ "script": script, "args": args })),
        )
    }

    pub fn click(&self, element: &ElementRef) -> Result<(), WebDriverError> {
        self.call(Method::Post, &format!("/element/{}/click", element.0), None)
            .map(drop)
    }

    pub fn clear(&self, element: &ElementRef) -> Result<(), WebDriverError> {
        self.call(Method::Post, &format!("/element/{}/clear", element.0), None)
            .map(drop)
    }

    pub fn send_keys(&self, element: &ElementRef, text: &str) -> Result<(), WebDriverError> {
        self.call(
            Method::Post,
            &format!("/element/{}/value", element.0),
            Some(json!({ "text": text })),
        )
        .map(drop)
    }

    /// Moves the pointer over the element's centre.
    pub fn hover(&self, element: &ElementRef) -> Result<(), WebDriverError> {
        let actions = json!({
            "actions": [{
                "type": "pointer",
                "id": "mouse",
                "parameters": { "pointerType": "mouse" },
                "actions": [{ "type": "pointerMove", "duration": 0, "origin": element.to_json(), "x": 0, "y": 0 }]
            }]
        });
        self.call(Method::Post, "/actions", Some(actions))?;
        self.call(Method::Delete, "/actions", None).map(drop)
    }

    pub fn window_handle(&self) -> Result<String, WebDriverError> {
        let v = self.call(Method::Get, "/window", None)?;
        v.as_str()
            .map(str::to_owned)
            .ok_or_else(|| WebDriverError::Malformed(v.to_string()))
    }

    pub fn window_handles(&self) -> Result<Vec<String>, WebDriverError> {
        let v = self.call(Method::Get, "/window/handles", None)?;
        serde_json::from_value(v.clone()).map_err(|_| WebDriverError::Malformed(v.to_string()))
    }

    /// Opens a new tab and returns its handle. Does not switch to it.
    pub fn new_tab(&self) -> Result<String, WebDriverError> {
        let v = self.call(Method::Post, "/window/new", Some(json!({ "type": "tab" })))?;
        v.get("handle")
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| WebDriverError::Malformed(v.to_string()))
    }

    pub fn switch_to_window(&self, handle: &str) -> Result<(), WebDriverError> {
        self.call(Method::Post, "/window", Some(json!({ "handle": handle })))
            .map(drop)
    }

    /// Ends the session.
    pub fn quit(self) -> Result<(), WebDriverError> {
        send(
            &self.agent,
            Method::Delete,
            &format!("{}/session/{}", self.base, self.session),
            None,
        )
        .map(drop)
    }
}
