//! Remote chat-completions backend: renders the transcript and tool schemas
//! into a chat request at temperature 0, maps vendor tool-call responses onto
//! kernel decisions, and retries transient failures with exponential backoff.

use serde_json::{json, Map, Value};

use crate::kernel::agents::AgentName;
use crate::kernel::episode::{
    BackendDecision, BackendError, DecisionBackend, DecisionContext, Role, ToolInvocation,
};
use crate::kernel::protocol::InterAgentRequest;

/// Name of the environment variable holding the API credential.
pub const API_KEY_ENV: &str = "WORKBENCH_API_KEY";

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub endpoint_url: String,
    pub model: String,
    pub api_key: String,
    /// Maximum retry attempts after the first try (429/5xx/transport).
    pub max_retries: u32,
    /// Base backoff delay; doubles per retry.
    pub backoff_ms: u64,
}

impl RemoteConfig {
    pub fn from_env(endpoint_url: &str, model: &str) -> Result<Self, BackendError> {
        let api_key = std::env::var(API_KEY_ENV)
            .map_err(|_| BackendError(format!("missing credential env var {API_KEY_ENV}")))?;
        Ok(RemoteConfig {
            endpoint_url: endpoint_url.to_string(),
            model: model.to_string(),
            api_key,
            max_retries: 3,
            backoff_ms: 250,
        })
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
    /// Retries spent so far (visible for tests and run logs).
    pub retries_logged: u32,
    /// Warnings for malformed vendor payloads treated as plain text.
    pub warnings: Vec<String>,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        RemoteBackend {
            config,
            client: reqwest::blocking::Client::new(),
            retries_logged: 0,
            warnings: Vec::new(),
        }
    }

    /// Chat request body: temperature 0, the rendered tool schemas, and the
    /// transcript. Peers surface as pseudo-functions (`handoff_to_*` in the
    /// handoffs topology, `request_*` elsewhere).
    pub fn request_body(&self, ctx: &DecisionContext<'_>) -> Value {
        let mut messages = vec![json!({
            "role": "system",
            "content": format!("{}\n\nAvailable tools:\n{}", ctx.agent.instructions, ctx.schema_doc),
        })];
        for m in ctx.messages {
            let role = match m.role {
                Role::User => "user",
                Role::Assistant => "assistant",
                Role::Tool => "tool",
            };
            messages.push(json!({"role": role, "content": m.content}));
        }
        let mut tools: Vec<Value> = Vec::new();
        for line in ctx.schema_doc.lines() {
            if let Ok(desc) = serde_json::from_str::<Value>(line) {
                let mut properties = Map::new();
                let mut required = Vec::new();
                if let Some(params) = desc["parameters"].as_array() {
                    for p in params {
                        let name = p["name"].as_str().unwrap_or_default().to_string();
                        properties.insert(
                            name.clone(),
                            json!({"type": "string", "description": p["description"]}),
                        );
                        if p["required"].as_bool().unwrap_or(false) {
                            required.push(name);
                        }
                    }
                }
                tools.push(json!({
                    "type": "function",
                    "function": {
                        "name": desc["name"],
                        "description": desc["description"],
                        "parameters": {"type": "object", "properties": properties, "required": required},
                    }
                }));
            }
        }
        for peer in &ctx.agent.peers {
            let (name, description) = if ctx.topology == crate::kernel::agents::Topology::Handoffs
            {
                (
                    format!("handoff_to_{peer}"),
                    format!("Transfer control and the full conversation to the {peer} agent."),
                )
            } else {
                (
                    format!("request_{peer}"),
                    format!("Delegate a task to the {peer} agent with a structured request."),
                )
            };
            tools.push(json!({
                "type": "function",
                "function": {
                    "name": name,
                    "description": description,
                    "parameters": {"type": "object", "properties": {
                        "task": {"type": "string"},
                        "inputs": {"type": "array", "items": {"type": "string"}},
                        "expected_outputs": {"type": "array", "items": {"type": "string"}},
                    }, "required": ["task"]},
                }
            }));
        }
        json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": messages,
            "tools": tools,
        })
    }

    fn post_with_retries(&mut self, body: &Value) -> Result<Value, BackendError> {
        let mut delay = self.config.backoff_ms;
        let mut attempt = 0;
        loop {
            let sent = self
                .client
                .post(&self.config.endpoint_url)
                .bearer_auth(&self.config.api_key)
                .json(body)
                .send();
            match sent {
                Ok(resp) if resp.status().is_success() => {
                    return resp
                        .json::<Value>()
                        .map_err(|e| BackendError(format!("malformed response body: {e}")));
                }
                Ok(resp) => {
                    let status = resp.status();
                    let retryable = status.as_u16() == 429 || status.is_server_error();
                    if !retryable || attempt >= self.config.max_retries {
                        return Err(BackendError(format!(
                            "endpoint returned {status} after {attempt} retries"
                        )));
                    }
                }
                Err(e) => {
                    if attempt >= self.config.max_retries {
                        return Err(BackendError(format!(
                            "transport failure after {attempt} retries: {e}"
                        )));
                    }
                }
            }
            attempt += 1;
            self.retries_logged += 1;
            std::thread::sleep(std::time::Duration::from_millis(delay));
            delay = delay.saturating_mul(2);
        }
    }

    /// Map a vendor message onto a decision. Tool calls win over content;
    /// pseudo-functions become handoffs or sub-agent requests; malformed
    /// tool-call payloads degrade to a final text answer with a warning.
    pub fn map_message(&mut self, message: &Value) -> BackendDecision {
        let content = message["content"].as_str().unwrap_or_default().to_string();
        let Some(calls) = message["tool_calls"].as_array().filter(|c| !c.is_empty()) else {
            return BackendDecision::Final(content);
        };
        let mut invocations = Vec::new();
        for call in calls {
            let name = call["function"]["name"].as_str().unwrap_or_default();
            let args_text = call["function"]["arguments"].as_str().unwrap_or("{}");
            let args: Map<String, Value> = match serde_json::from_str(args_text) {
                Ok(Value::Object(m)) => m,
                _ => {
                    self.warnings.push(format!(
                        "malformed tool-call arguments for '{name}'; treating reply as text"
                    ));
                    return BackendDecision::Final(content);
                }
            };
            if let Some(target) = name.strip_prefix("handoff_to_") {
                return BackendDecision::Handoff(target.to_string());
            }
            if let Some(target) = name.strip_prefix("request_") {
                if let Some(agent) = AgentName::parse(target) {
                    return BackendDecision::Subagent(InterAgentRequest {
                        target: agent,
                        task: args
                            .get("task")
                            .and_then(Value::as_str)
                            .unwrap_or("delegated task")
                            .to_string(),
                        inputs: args
                            .get("inputs")
                            .and_then(Value::as_array)
                            .map(|a| {
                                a.iter()
                                    .filter_map(Value::as_str)
                                    .map(str::to_string)
                                    .collect()
                            })
                            .unwrap_or_default(),
                        expected_outputs: args
                            .get("expected_outputs")
                            .and_then(Value::as_array)
                            .map(|a| {
                                a.iter()
                                    .filter_map(Value::as_str)
                                    .map(str::to_string)
                                    .collect()
                            })
                            .unwrap_or_default(),
                    });
                }
            }
            invocations.push(ToolInvocation {
                tool: name.to_string(),
                args,
            });
        }
        if invocations.is_empty() {
            BackendDecision::Final(content)
        } else {
            BackendDecision::ToolCalls(invocations)
        }
    }
}

impl DecisionBackend for RemoteBackend {
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<BackendDecision, BackendError> {
        let body = self.request_body(ctx);
        let response = self.post_with_retries(&body)?;
        let message = &response["choices"][0]["message"];
        if message.is_null() {
            return Err(BackendError("response carried no choices".into()));
        }
        Ok(self.map_message(message))
    }

    fn model_name(&self) -> &str {
        &self.config.model
    }
}
