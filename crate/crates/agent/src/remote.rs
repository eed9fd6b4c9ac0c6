//! HTTP backend for a chat-completions style model endpoint.
//!
//! Request: `{model, messages: [{role, content}], tools: [{name, description, params_schema}]}`.
//! Response: `{"tool_call": {"name", "params"}}` or `{"text": ".."}`.

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::backend::{Backend, Decision, PlanChoice, StepContext, TurnContext};
use crate::intent::{category_labels, extract_entities, is_category, mention_history, Intent, GENERAL_QUERY};
use crate::plan::Persona;
use crate::tools::{registry, Params};
use crate::AgentError;

pub const URL_ENV: &str = "AIRAN_BACKEND_URL";
pub const KEY_ENV: &str = "AIRAN_BACKEND_KEY";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub url: String,
    #[serde(default)]
    pub api_key: Option<String>,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
}

fn default_model() -> String {
    "default".into()
}
fn default_timeout() -> u64 {
    30_000
}
fn default_retries() -> u32 {
    2
}
fn default_backoff() -> u64 {
    250
}

impl RemoteConfig {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            api_key: None,
            model: default_model(),
            timeout_ms: default_timeout(),
            retries: default_retries(),
            backoff_ms: default_backoff(),
        }
    }

    /// Reads `AIRAN_BACKEND_URL` and the optional `AIRAN_BACKEND_KEY`.
    pub fn from_env() -> Result<Self, AgentError> {
        let url = std::env::var(URL_ENV).map_err(|_| AgentError::Backend(format!("{URL_ENV} is not set")))?;
        let mut cfg = Self::new(url);
        cfg.api_key = std::env::var(KEY_ENV).ok().filter(|k| !k.is_empty());
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

impl Message {
    fn new(role: &str, content: impl Into<String>) -> Self {
        Self {
            role: role.into(),
            content: content.into(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
struct WireToolCall {
    name: String,
    #[serde(default)]
    params: Params,
}

#[derive(Clone, Debug, Deserialize)]
struct WireResponse {
    #[serde(default)]
    tool_call: Option<WireToolCall>,
    #[serde(default)]
    text: Option<String>,
}

/// Blocking client; call it off any async executor thread.
#[derive(Debug)]
pub struct RemoteBackend {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, AgentError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| AgentError::Backend(e.to_string()))?;
        Ok(Self { config, client })
    }

    fn call(&self, messages: Vec<Message>, tools: Value) -> Result<WireResponse, AgentError> {
        let body = json!({"model": self.config.model, "messages": messages, "tools": tools});
        let mut last = String::new();
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                thread::sleep(Duration::from_millis(self.config.backoff_ms << (attempt - 1)));
            }
            let mut req = self.client.post(&self.config.url).json(&body);
            if let Some(key) = &self.config.api_key {
                req = req.bearer_auth(key);
            }
            match req.send() {
                Ok(resp) if resp.status().is_success() => {
                    return resp
                        .json::<WireResponse>()
                        .map_err(|e| AgentError::Backend(format!("malformed backend response: {e}")));
                }
                Ok(resp) => {
                    let status = resp.status();
                    last = format!("backend returned {status}");
                    if !(status.is_server_error() || status.as_u16() == 429) {
                        break;
                    }
                }
                Err(e) => last = e.to_string(),
            }
            tracing::debug!(attempt, "remote backend attempt failed: {last}");
        }
        Err(AgentError::Backend(last))
    }

    fn system_prompt(persona: Persona) -> String {
        let who = match persona {
            Persona::Engineer => "a network engineer; every tool is available",
            Persona::User => "an end user; simulator control tools are not available",
        };
        format!(
            "You operate a desk-scale AI-RAN testbed for {who}. Request one tool at a time with \
             tool_call, then answer with text using only values returned by tools."
        )
    }
}

impl Backend for RemoteBackend {
    fn name(&self) -> &str {
        "remote"
    }

    fn classify(&self, ctx: &TurnContext<'_>) -> Result<Option<Intent>, AgentError> {
        let labels: Vec<&str> = category_labels().collect();
        let messages = vec![
            Message::new(
                "system",
                format!("Classify the request into exactly one label and reply with the label only: {}", labels.join(", ")),
            ),
            Message::new("user", ctx.utterance),
        ];
        let resp = self.call(messages, json!([]))?;
        let label = resp.text.unwrap_or_default().trim().to_ascii_lowercase();
        let category = if is_category(&label) { label } else { GENERAL_QUERY.to_string() };
        let history = mention_history(ctx.history.iter().map(|t| &t.intent));
        Ok(Some(Intent {
            category,
            entities: extract_entities(ctx.utterance, &history),
            confidence: 1.0,
        }))
    }

    fn plan(&self, _ctx: &TurnContext<'_>, _intent: &Intent) -> Result<PlanChoice, AgentError> {
        Ok(PlanChoice::FromCalls)
    }

    fn decide(&self, ctx: &StepContext<'_>) -> Result<Decision, AgentError> {
        let mut messages = vec![Message::new("system", Self::system_prompt(ctx.turn.persona))];
        for t in ctx.turn.history {
            messages.push(Message::new("user", t.utterance.clone()));
            messages.push(Message::new("assistant", t.response.text.clone()));
        }
        messages.push(Message::new("user", ctx.turn.utterance));
        for c in ctx.calls {
            messages.push(Message::new(
                "assistant",
                json!({"tool_call": {"name": c.tool, "params": c.params}}).to_string(),
            ));
            messages.push(Message::new("tool", serde_json::to_string(&c.result).unwrap_or_default()));
        }
        let tools: Vec<Value> = registry()
            .into_iter()
            .filter(|t| ctx.turn.persona.allows(t.family))
            .map(|t| json!({"name": t.name, "description": t.description, "params_schema": t.params_schema}))
            .collect();
        let resp = self.call(messages, Value::Array(tools))?;
        match (resp.tool_call, resp.text) {
            (Some(tc), _) => Ok(Decision::ToolRequest {
                tool: tc.name,
                params: tc.params,
            }),
            (None, Some(text)) => Ok(Decision::FinalText { text }),
            (None, None) => Err(AgentError::Backend("backend response had neither tool_call nor text".into())),
        }
    }
}
